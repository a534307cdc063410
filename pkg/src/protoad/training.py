"""Mini-batch training of the autoencoder and prototypes on regular windows."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import nn, prototypes as proto
from .data import WindowSet
from .model import ProtoADModel, TrainConfig
from .rng import substream
from .scoring import fit_error_distribution


@dataclass
class EpochStats:
    total: float
    error: float
    diversity: float
    representation: float
    seconds: float


@dataclass
class TrainReport:
    """Per-epoch losses and timing of one run."""

    kind: str  # "ProtoAD", or "EncDecAD-equivalent" when k=0
    epochs: list[EpochStats] = field(default_factory=list)
    checkpoint_path: str | None = None

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "checkpoint_path": self.checkpoint_path,
            "epochs": [
                {
                    "total": e.total,
                    "error": e.error,
                    "diversity": e.diversity,
                    "representation": e.representation,
                    "seconds": e.seconds,
                }
                for e in self.epochs
            ],
        }


def batch_loss(
    model: ProtoADModel,
    windows: np.ndarray,
    input_mask: np.ndarray | None = None,
    hidden_mask: np.ndarray | None = None,
) -> tuple[float, float, float, float, dict]:
    """Composite loss over a batch of windows [B, L, d].

    Returns (total, error, diversity, representation, forward state). The
    error term averages, over windows, the absolute reconstruction error
    summed over the window; prototype terms use the batch embeddings. With
    zero prototypes both prototype terms are exactly 0. Passing dropout masks
    switches the forward pass to training mode; without them it is the
    deterministic evaluation pass.
    """
    if windows.shape[0] == 0:
        raise ValueError("batch must be nonempty")
    cfg = model.config
    recon, hidden, cache = nn.autoencoder_forward(
        model.autoencoder, windows, order=cfg.decoder_order, input_mask=input_mask
    )
    residual = recon - windows
    l_error = float(np.abs(residual).sum() / windows.shape[0])
    if model.prototypes.count > 0:
        h_for_proto = hidden if hidden_mask is None else hidden * hidden_mask
        l_div = proto.diversity_loss(model.prototypes)
        l_rep = proto.representation_loss(model.prototypes, h_for_proto)
    else:
        h_for_proto = hidden
        l_div = 0.0
        l_rep = 0.0
    total = cfg.lambda_e * l_error + cfg.lambda_d * l_div + cfg.lambda_r * l_rep
    state = {
        "recon": recon,
        "residual": residual,
        "hidden": hidden,
        "hidden_for_proto": h_for_proto,
        "cache": cache,
    }
    return total, l_error, l_div, l_rep, state


def total_loss(model: ProtoADModel, windows: np.ndarray | WindowSet) -> tuple[float, float, float, float]:
    """Evaluation-mode composite loss (no dropout) over a set of windows."""
    arr = windows.windows if isinstance(windows, WindowSet) else np.asarray(windows)
    total, l_err, l_div, l_rep, _ = batch_loss(model, arr)
    return total, l_err, l_div, l_rep


def _batch_gradients(
    model: ProtoADModel, windows: np.ndarray, state: dict, hidden_mask: np.ndarray | None
) -> dict[str, np.ndarray]:
    """Exact gradients of the composite batch loss for every trainable array."""
    cfg = model.config
    batch = windows.shape[0]
    d_recon = (cfg.lambda_e / batch) * np.sign(state["residual"])
    d_hidden = None
    grads: dict[str, np.ndarray] = {}
    k = model.prototypes.count
    if k > 0:
        if cfg.lambda_d > 0.0 or cfg.lambda_r > 0.0:
            dP, dH = proto.loss_gradients(
                model.prototypes,
                state["hidden_for_proto"],
                weight_diversity=cfg.lambda_d,
                weight_representation=cfg.lambda_r,
            )
            grads["prototypes"] = dP
            if cfg.prototype_grad_to_encoder and cfg.lambda_r > 0.0:
                d_hidden = dH if hidden_mask is None else dH * hidden_mask
        else:
            grads["prototypes"] = np.zeros_like(model.prototypes.vectors)
    grads.update(
        nn.autoencoder_backward(model.autoencoder, state["cache"], d_recon, d_hidden=d_hidden)
    )
    return grads


def train(windows: WindowSet, config: TrainConfig) -> tuple[ProtoADModel, TrainReport]:
    """Train on regular windows and fit the error distribution on a held-out split.

    The window set must be entirely regular (label 0). The chronologically
    last ``error_fit_fraction`` of the windows never contributes gradients;
    after the final epoch it provides the reconstruction errors from which
    the Gaussian error model is fitted.
    """
    if windows.count == 0:
        raise ValueError("cannot train on an empty window set")
    if windows.labels.any():
        bad = int(np.flatnonzero(windows.labels)[0])
        raise ValueError(
            f"training windows must all be regular; window {bad} "
            f"(origin {int(windows.origins[bad])}) is labeled anomalous"
        )
    cfg = config
    d = windows.dim
    n_fit = max(1, int(round(cfg.error_fit_fraction * windows.count)))
    n_grad = windows.count - n_fit
    if n_grad < 1:
        raise ValueError(
            f"error-fit split of {n_fit} windows leaves no training windows "
            f"(total {windows.count})"
        )
    grad_windows = np.ascontiguousarray(windows.windows[:n_grad])
    fit_windows = np.ascontiguousarray(windows.windows[n_grad:])

    ae = nn.init_autoencoder(d, cfg.hidden_size, substream(cfg.seed, "params"))
    layer = proto.init_prototypes(
        cfg.num_prototypes, cfg.hidden_size, substream(cfg.seed, "prototypes"), d_min=cfg.d_min
    )
    model = ProtoADModel(autoencoder=ae, prototypes=layer, config=cfg)

    params = model.parameters()
    adam = nn.AdamState(learning_rate=cfg.learning_rate)
    rng_shuffle = substream(cfg.seed, "shuffle")
    rng_drop_in = substream(cfg.seed, "dropout-input")
    rng_drop_h = substream(cfg.seed, "dropout-hidden")

    report = TrainReport(kind="ProtoAD" if cfg.num_prototypes > 0 else "EncDecAD-equivalent")
    use_dropout = cfg.dropout > 0.0
    for _ in range(cfg.epochs):
        t0 = time.perf_counter()
        order = rng_shuffle.permutation(n_grad)
        sums = np.zeros(4)
        for lo in range(0, n_grad, cfg.batch_size):
            batch = grad_windows[order[lo : lo + cfg.batch_size]]
            b = batch.shape[0]
            input_mask = None
            hidden_mask = None
            if use_dropout:
                input_mask = nn.dropout_mask(
                    (cfg.window_length, b, d), cfg.dropout, rng_drop_in
                )
                if layer.count > 0:
                    hidden_mask = nn.dropout_mask((b, cfg.hidden_size), cfg.dropout, rng_drop_h)
            total, l_err, l_div, l_rep, state = batch_loss(
                model, batch, input_mask=input_mask, hidden_mask=hidden_mask
            )
            grads = _batch_gradients(model, batch, state, hidden_mask)
            nn.adam_update(adam, params, grads)
            sums += b * np.array([total, l_err, l_div, l_rep])
        means = sums / n_grad
        report.epochs.append(
            EpochStats(
                total=float(means[0]),
                error=float(means[1]),
                diversity=float(means[2]),
                representation=float(means[3]),
                seconds=time.perf_counter() - t0,
            )
        )
        if not np.isfinite(means).all():
            raise FloatingPointError(
                f"non-finite loss at epoch {len(report.epochs)}: {means.tolist()}"
            )

    fit_errors = model.reconstruction_errors(fit_windows).reshape(-1, d)
    model.error_dist = fit_error_distribution(fit_errors)
    return model, report
