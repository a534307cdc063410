"""The trained detector: autoencoder, prototypes, normalizer and error model."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from . import nn
from .data import Normalizer
from .nn import AutoencoderParams, LstmParams
from .prototypes import PrototypeLayer
from .scoring import ErrorDistribution

CHECKPOINT_KIND = "protoad-checkpoint"
CHECKPOINT_VERSION = 1


class CheckpointError(ValueError):
    """Raised when a checkpoint file cannot be loaded as a complete model."""


@dataclass
class TrainConfig:
    """Hyperparameters of one training run."""

    window_length: int = 50
    stride: int | None = None  # None means non-overlapping (= window_length)
    hidden_size: int = 40
    num_prototypes: int = 10
    d_min: float = 1.0
    decoder_order: str = "reversed"
    epochs: int = 100
    batch_size: int = 20
    learning_rate: float = 1e-4
    dropout: float = 0.2
    lambda_e: float = 0.025
    lambda_d: float = 0.2
    lambda_r: float = 0.5
    error_fit_fraction: float = 0.25
    seed: int = 0
    normalize: bool = True
    score_mode: str = "mahalanobis"
    prototype_grad_to_encoder: bool = True

    def __post_init__(self) -> None:
        if self.stride is None:
            self.stride = self.window_length
        if not 0.0 < self.error_fit_fraction < 1.0:
            raise ValueError("error_fit_fraction must lie in (0, 1)")
        if self.decoder_order not in nn.DECODER_ORDERS:
            raise ValueError(f"decoder_order must be one of {nn.DECODER_ORDERS}")
        if self.num_prototypes < 0:
            raise ValueError("num_prototypes must be >= 0")

    @classmethod
    def from_dict(cls, raw: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**raw)


@dataclass
class ProtoADModel:
    """Everything needed to score new data and explain the regular regime."""

    autoencoder: AutoencoderParams
    prototypes: PrototypeLayer
    config: TrainConfig
    normalizer: Normalizer | None = None
    error_dist: ErrorDistribution | None = None

    @property
    def hidden_size(self) -> int:
        return self.autoencoder.hidden_size

    @property
    def input_dim(self) -> int:
        return self.autoencoder.input_dim

    def parameters(self) -> dict[str, np.ndarray]:
        """Trainable arrays, by name; the returned arrays are the live ones."""
        ae = self.autoencoder
        params = {
            "encoder.W": ae.encoder.W,
            "encoder.U": ae.encoder.U,
            "encoder.b": ae.encoder.b,
            "decoder.W": ae.decoder.W,
            "decoder.U": ae.decoder.U,
            "decoder.b": ae.decoder.b,
            "proj.w": ae.proj_w,
            "proj.b": ae.proj_b,
        }
        if self.prototypes.count > 0:
            params["prototypes"] = self.prototypes.vectors
        return params

    def encode_windows(self, windows: np.ndarray, chunk: int = 512) -> np.ndarray:
        """Hidden representations [n, m] of normalized windows [n, L, d], eval mode."""
        outs = []
        for lo in range(0, windows.shape[0], chunk):
            _, h, _ = nn.autoencoder_forward(
                self.autoencoder, windows[lo : lo + chunk], order=self.config.decoder_order
            )
            outs.append(h)
        return np.concatenate(outs, axis=0)

    def reconstruct_windows(self, windows: np.ndarray, chunk: int = 512) -> np.ndarray:
        """Teacher-forced reconstructions [n, L, d] of normalized windows, eval mode."""
        outs = []
        for lo in range(0, windows.shape[0], chunk):
            recon, _, _ = nn.autoencoder_forward(
                self.autoencoder, windows[lo : lo + chunk], order=self.config.decoder_order
            )
            outs.append(recon)
        return np.concatenate(outs, axis=0)

    def reconstruction_errors(self, windows: np.ndarray) -> np.ndarray:
        """Per-timestamp absolute errors |x - x'| [n, L, d] on normalized windows."""
        if windows.shape[-1] != self.input_dim:
            raise ValueError(
                f"window dimension {windows.shape[-1]} != model dimension {self.input_dim}"
            )
        return np.abs(windows - self.reconstruct_windows(windows))


def _array_out(a: np.ndarray) -> list:
    return np.asarray(a, dtype=np.float64).tolist()


def save_checkpoint(model: ProtoADModel, path: str | Path) -> None:
    """Serialize a model to versioned JSON; floats survive round-trip bit-exactly."""
    ae = model.autoencoder
    doc = {
        "kind": CHECKPOINT_KIND,
        "format_version": CHECKPOINT_VERSION,
        "gate_order": nn.GATE_ORDER,
        "config": asdict(model.config),
        "seed": model.config.seed,
        "encoder": {"W": _array_out(ae.encoder.W), "U": _array_out(ae.encoder.U), "b": _array_out(ae.encoder.b)},
        "decoder": {"W": _array_out(ae.decoder.W), "U": _array_out(ae.decoder.U), "b": _array_out(ae.decoder.b)},
        "projection": {"w": _array_out(ae.proj_w), "b": _array_out(ae.proj_b)},
        "prototypes": {"vectors": _array_out(model.prototypes.vectors), "d_min": model.prototypes.d_min},
        "normalizer": None
        if model.normalizer is None
        else {"mean": _array_out(model.normalizer.mean), "std": _array_out(model.normalizer.std)},
        "error_dist": None
        if model.error_dist is None
        else {
            "mean": _array_out(model.error_dist.mean),
            "cov": _array_out(model.error_dist.cov),
            "reg": model.error_dist.reg,
        },
    }
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "w") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")
    tmp.replace(path)


def load_checkpoint(
    path: str | Path,
    expect_prototypes: int | None = None,
    expect_hidden_size: int | None = None,
) -> ProtoADModel:
    """Load a checkpoint written by `save_checkpoint`.

    Optional ``expect_*`` arguments guard against silently reusing a model of
    a different size than the caller asked for.
    """
    path = Path(path)
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: not a readable checkpoint ({exc})") from exc
    if not isinstance(doc, dict) or doc.get("kind") != CHECKPOINT_KIND:
        raise CheckpointError(f"{path}: not a {CHECKPOINT_KIND} file")
    version = doc.get("format_version")
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(
            f"{path}: format version {version} unsupported; this build reads "
            f"version {CHECKPOINT_VERSION}"
        )
    if doc.get("gate_order") != nn.GATE_ORDER:
        raise CheckpointError(
            f"{path}: gate order {doc.get('gate_order')!r} != {nn.GATE_ORDER!r}"
        )
    try:
        config = TrainConfig.from_dict(doc["config"])
        enc = doc["encoder"]
        dec = doc["decoder"]
        proj = doc["projection"]
        proto = doc["prototypes"]
        ae = AutoencoderParams(
            encoder=LstmParams(
                W=np.array(enc["W"], dtype=np.float64),
                U=np.array(enc["U"], dtype=np.float64),
                b=np.array(enc["b"], dtype=np.float64),
            ),
            decoder=LstmParams(
                W=np.array(dec["W"], dtype=np.float64),
                U=np.array(dec["U"], dtype=np.float64),
                b=np.array(dec["b"], dtype=np.float64),
            ),
            proj_w=np.array(proj["w"], dtype=np.float64),
            proj_b=np.array(proj["b"], dtype=np.float64),
        )
        vectors = np.array(proto["vectors"], dtype=np.float64).reshape(-1, ae.hidden_size)
        layer = PrototypeLayer(vectors=vectors, d_min=float(proto["d_min"]))
        normalizer = None
        if doc["normalizer"] is not None:
            normalizer = Normalizer(
                mean=np.array(doc["normalizer"]["mean"], dtype=np.float64),
                std=np.array(doc["normalizer"]["std"], dtype=np.float64),
            )
        error_dist = None
        if doc["error_dist"] is not None:
            cov = np.array(doc["error_dist"]["cov"], dtype=np.float64)
            error_dist = ErrorDistribution(
                mean=np.array(doc["error_dist"]["mean"], dtype=np.float64),
                cov=cov,
                reg=float(doc["error_dist"]["reg"]),
                precision=np.linalg.inv(cov),
            )
    except (KeyError, TypeError) as exc:
        raise CheckpointError(f"{path}: incomplete checkpoint, missing {exc}") from exc

    if expect_prototypes is not None and layer.count != expect_prototypes:
        raise CheckpointError(
            f"{path}: checkpoint holds {layer.count} prototypes, caller expected "
            f"{expect_prototypes}"
        )
    if expect_hidden_size is not None and ae.hidden_size != expect_hidden_size:
        raise CheckpointError(
            f"{path}: checkpoint hidden size {ae.hidden_size}, caller expected "
            f"{expect_hidden_size}"
        )
    return ProtoADModel(
        autoencoder=ae,
        prototypes=layer,
        config=config,
        normalizer=normalizer,
        error_dist=error_dist,
    )
