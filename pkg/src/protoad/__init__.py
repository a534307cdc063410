"""Time-series anomaly detection with an LSTM autoencoder and prototype explanations.

The detector learns to reconstruct regular windows; anomaly scores are
Mahalanobis distances of reconstruction errors from a Gaussian fitted on
held-out regular data. A latent prototype layer trained alongside provides
example-based explanations of the regular regime; with zero prototypes the
model reduces to a plain encoder-decoder detector.
"""

from .data import (
    CsvFormatError,
    Normalizer,
    SeriesDataset,
    WindowSet,
    fit_normalizer,
    generate_synthetic,
    load_csv,
    make_windows,
    write_csv,
)
from .explain import (
    ExplanationReport,
    PrototypeProjection,
    WindowAssignment,
    assign_windows,
    build_report,
    export_latent,
    project_prototypes,
)
from .model import (
    CheckpointError,
    ProtoADModel,
    TrainConfig,
    load_checkpoint,
    save_checkpoint,
)
from .nn import (
    AdamState,
    AutoencoderParams,
    LstmParams,
    adam_update,
    autoencoder_backward,
    autoencoder_forward,
    decode,
    dropout_mask,
    encode,
    init_autoencoder,
    lstm_step,
)
from .prototypes import (
    PrototypeLayer,
    assign,
    diversity_loss,
    init_prototypes,
    loss_gradients,
    representation_loss,
)
from .rng import substream
from .scoring import (
    ErrorDistribution,
    ScoreSeries,
    auc_score,
    fit_error_distribution,
    point_scores,
    score_series,
    score_window_set,
    window_scores,
)
from .training import TrainReport, total_loss, train

__version__ = "0.1.0"

__all__ = [
    "AdamState",
    "AutoencoderParams",
    "CheckpointError",
    "CsvFormatError",
    "ErrorDistribution",
    "ExplanationReport",
    "LstmParams",
    "Normalizer",
    "PrototypeLayer",
    "PrototypeProjection",
    "ProtoADModel",
    "ScoreSeries",
    "SeriesDataset",
    "TrainConfig",
    "TrainReport",
    "WindowAssignment",
    "WindowSet",
    "adam_update",
    "assign",
    "assign_windows",
    "auc_score",
    "autoencoder_backward",
    "autoencoder_forward",
    "build_report",
    "decode",
    "diversity_loss",
    "dropout_mask",
    "encode",
    "export_latent",
    "fit_error_distribution",
    "fit_normalizer",
    "generate_synthetic",
    "init_autoencoder",
    "init_prototypes",
    "load_checkpoint",
    "load_csv",
    "loss_gradients",
    "lstm_step",
    "make_windows",
    "point_scores",
    "project_prototypes",
    "representation_loss",
    "save_checkpoint",
    "score_series",
    "score_window_set",
    "substream",
    "total_loss",
    "train",
    "window_scores",
    "write_csv",
]
