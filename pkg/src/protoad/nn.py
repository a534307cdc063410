"""Single-layer LSTM autoencoder with hand-written backpropagation through time.

Everything runs in float64. The four gates are stacked along the first axis of
the weight matrices in the order input, forget, cell, output ("ifgo").
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

GATE_ORDER = "ifgo"

DECODER_ORDERS = ("forward", "reversed")


def sigmoid(x: np.ndarray) -> np.ndarray:
    """Numerically stable logistic function."""
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


@dataclass
class LstmParams:
    """Weights of one LSTM cell; gates stacked along axis 0 in GATE_ORDER."""

    W: np.ndarray  # [4m, in_dim] input weights
    U: np.ndarray  # [4m, m] recurrent weights
    b: np.ndarray  # [4m] biases

    @property
    def hidden_size(self) -> int:
        return self.U.shape[1]

    @property
    def input_size(self) -> int:
        return self.W.shape[1]


@dataclass
class AutoencoderParams:
    """Encoder/decoder LSTM pair plus the linear readout from decoder states."""

    encoder: LstmParams
    decoder: LstmParams
    proj_w: np.ndarray  # [d, m] output projection
    proj_b: np.ndarray  # [d]

    @property
    def hidden_size(self) -> int:
        return self.encoder.hidden_size

    @property
    def input_dim(self) -> int:
        return self.encoder.input_size


def init_lstm(in_dim: int, hidden_size: int, rng: np.random.Generator) -> LstmParams:
    """Uniform [-1/sqrt(m), 1/sqrt(m)] weights, zero biases, forget bias +1."""
    m = hidden_size
    scale = 1.0 / math.sqrt(m)
    W = rng.uniform(-scale, scale, size=(4 * m, in_dim))
    U = rng.uniform(-scale, scale, size=(4 * m, m))
    b = np.zeros(4 * m)
    b[m : 2 * m] = 1.0
    return LstmParams(W=W, U=U, b=b)


def init_autoencoder(in_dim: int, hidden_size: int, rng: np.random.Generator) -> AutoencoderParams:
    scale = 1.0 / math.sqrt(hidden_size)
    return AutoencoderParams(
        encoder=init_lstm(in_dim, hidden_size, rng),
        decoder=init_lstm(in_dim, hidden_size, rng),
        proj_w=rng.uniform(-scale, scale, size=(in_dim, hidden_size)),
        proj_b=np.zeros(in_dim),
    )


def lstm_step(
    p: LstmParams, x: np.ndarray, h: np.ndarray, c: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """One LSTM step on vectors: returns the next hidden and cell state."""
    m = p.hidden_size
    if x.shape != (p.input_size,) or h.shape != (m,) or c.shape != (m,):
        raise ValueError(
            f"shape mismatch: x{x.shape} h{h.shape} c{c.shape} for "
            f"in_dim={p.input_size}, m={m}"
        )
    z = p.W @ x + p.U @ h + p.b
    i = sigmoid(z[:m])
    f = sigmoid(z[m : 2 * m])
    g = np.tanh(z[2 * m : 3 * m])
    o = sigmoid(z[3 * m :])
    c_next = f * c + i * g
    h_next = o * np.tanh(c_next)
    return h_next, c_next


class _LstmTrace:
    """Per-step activations cached by the batched forward pass for BPTT."""

    __slots__ = ("h_prev", "i", "f", "g", "o", "c_prev", "tanh_c")

    def __init__(self, steps: int, batch: int, m: int):
        shape = (steps, batch, m)
        self.h_prev = np.empty(shape)
        self.i = np.empty(shape)
        self.f = np.empty(shape)
        self.g = np.empty(shape)
        self.o = np.empty(shape)
        self.c_prev = np.empty(shape)
        self.tanh_c = np.empty(shape)


def _lstm_forward(
    p: LstmParams,
    inputs: np.ndarray,
    h0: np.ndarray | None = None,
    c0: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, _LstmTrace]:
    """Run the cell over time-major inputs [L, B, in_dim].

    Returns (per-step hidden states [L, B, m], last h, last c, trace).
    """
    steps, batch, _ = inputs.shape
    m = p.hidden_size
    h = np.zeros((batch, m)) if h0 is None else h0
    c = np.zeros((batch, m)) if c0 is None else c0
    H = np.empty((steps, batch, m))
    tr = _LstmTrace(steps, batch, m)
    for t in range(steps):
        tr.h_prev[t] = h
        tr.c_prev[t] = c
        z = inputs[t] @ p.W.T + h @ p.U.T + p.b
        i = sigmoid(z[:, :m])
        f = sigmoid(z[:, m : 2 * m])
        g = np.tanh(z[:, 2 * m : 3 * m])
        o = sigmoid(z[:, 3 * m :])
        c = f * c + i * g
        tanh_c = np.tanh(c)
        h = o * tanh_c
        tr.i[t], tr.f[t], tr.g[t], tr.o[t], tr.tanh_c[t] = i, f, g, o, tanh_c
        H[t] = h
    return H, h, c, tr


def _lstm_backward(
    p: LstmParams,
    inputs: np.ndarray,
    trace: _LstmTrace,
    d_states: np.ndarray | None = None,
    d_last_h: np.ndarray | None = None,
) -> tuple[tuple[np.ndarray, np.ndarray, np.ndarray], np.ndarray, np.ndarray]:
    """BPTT over a forward trace.

    ``d_states`` carries upstream gradients on every step's hidden state,
    ``d_last_h`` on the final hidden state only; either or both may be given.
    Returns ((dW, dU, db), dh0, dc0).
    """
    steps, batch, _ = inputs.shape
    m = p.hidden_size
    dW = np.zeros_like(p.W)
    dU = np.zeros_like(p.U)
    db = np.zeros_like(p.b)
    dh = np.zeros((batch, m)) if d_last_h is None else d_last_h.copy()
    dc = np.zeros((batch, m))
    for t in reversed(range(steps)):
        if d_states is not None:
            dh = dh + d_states[t]
        i, f, g, o = trace.i[t], trace.f[t], trace.g[t], trace.o[t]
        tanh_c = trace.tanh_c[t]
        do = dh * tanh_c
        dc = dc + dh * o * (1.0 - tanh_c * tanh_c)
        di = dc * g
        df = dc * trace.c_prev[t]
        dg = dc * i
        dz = np.concatenate(
            [di * i * (1.0 - i), df * f * (1.0 - f), dg * (1.0 - g * g), do * o * (1.0 - o)],
            axis=1,
        )
        dW += dz.T @ inputs[t]
        dU += dz.T @ trace.h_prev[t]
        db += dz.sum(axis=0)
        dh = dz @ p.U
        dc = dc * f
    return (dW, dU, db), dh, dc


def decoder_inputs(windows_tm: np.ndarray, order: str) -> np.ndarray:
    """Teacher-forcing inputs for the decoder, time-major [L, B, d].

    Step j feeds the true row of the previously reconstructed timestamp; the
    first step has none and feeds a zero vector. With order="reversed" the
    reconstruction runs last-to-first, so step j >= 1 feeds row L-j.
    """
    if order not in DECODER_ORDERS:
        raise ValueError(f"decoder order must be one of {DECODER_ORDERS}, got {order!r}")
    d = np.zeros_like(windows_tm)
    if order == "forward":
        d[1:] = windows_tm[:-1]
    else:
        d[1:] = windows_tm[::-1][:-1]
    return d


@dataclass
class ForwardCache:
    """Intermediate values of one autoencoder forward pass, kept for backward."""

    inputs_tm: np.ndarray  # [L, B, d] encoder inputs, time-major
    dec_inputs: np.ndarray  # [L, B, d] decoder inputs after any dropout
    dec_states: np.ndarray  # [L, B, m]
    enc_trace: _LstmTrace
    dec_trace: _LstmTrace
    order: str


def autoencoder_forward(
    p: AutoencoderParams,
    windows: np.ndarray,
    order: str = "reversed",
    input_mask: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray, ForwardCache]:
    """Encode and reconstruct a batch of windows [B, L, d].

    Returns (reconstruction [B, L, d], encoder hidden states [B, m], cache).
    ``input_mask``, when given, multiplies the decoder's teacher-forcing
    inputs elementwise (time-major [L, B, d]); used for training dropout.
    """
    if windows.ndim != 3 or windows.shape[2] != p.input_dim:
        raise ValueError(
            f"expected windows [B, L, {p.input_dim}], got shape {windows.shape}"
        )
    inputs_tm = np.ascontiguousarray(windows.transpose(1, 0, 2))
    _, h_enc, _, enc_trace = _lstm_forward(p.encoder, inputs_tm)
    dec_in = decoder_inputs(inputs_tm, order)
    if input_mask is not None:
        dec_in = dec_in * input_mask
    dec_states, _, _, dec_trace = _lstm_forward(p.decoder, dec_in, h0=h_enc.copy())
    outputs = dec_states @ p.proj_w.T + p.proj_b  # [L, B, d]
    recon_tm = outputs if order == "forward" else outputs[::-1]
    cache = ForwardCache(
        inputs_tm=inputs_tm,
        dec_inputs=dec_in,
        dec_states=dec_states,
        enc_trace=enc_trace,
        dec_trace=dec_trace,
        order=order,
    )
    return recon_tm.transpose(1, 0, 2), h_enc, cache


def autoencoder_backward(
    p: AutoencoderParams,
    cache: ForwardCache,
    d_recon: np.ndarray,
    d_hidden: np.ndarray | None = None,
) -> dict[str, np.ndarray]:
    """Exact gradients of a scalar loss with respect to every parameter.

    ``d_recon`` [B, L, d] is the loss gradient at the reconstruction;
    ``d_hidden`` [B, m] adds any loss gradient entering the encoder hidden
    state directly (e.g. from prototype losses).
    """
    d_out = d_recon.transpose(1, 0, 2)
    if cache.order == "reversed":
        d_out = d_out[::-1]
    d_proj_w = np.einsum("lbd,lbm->dm", d_out, cache.dec_states)
    d_proj_b = d_out.sum(axis=(0, 1))
    d_states = d_out @ p.proj_w  # [L, B, m]
    (dWd, dUd, dbd), dh0_dec, _ = _lstm_backward(
        p.decoder, cache.dec_inputs, cache.dec_trace, d_states=d_states
    )
    d_h_enc = dh0_dec if d_hidden is None else dh0_dec + d_hidden
    (dWe, dUe, dbe), _, _ = _lstm_backward(
        p.encoder, cache.inputs_tm, cache.enc_trace, d_last_h=d_h_enc
    )
    return {
        "encoder.W": dWe,
        "encoder.U": dUe,
        "encoder.b": dbe,
        "decoder.W": dWd,
        "decoder.U": dUd,
        "decoder.b": dbd,
        "proj.w": d_proj_w,
        "proj.b": d_proj_b,
    }


def encode(p: AutoencoderParams, window: np.ndarray) -> np.ndarray:
    """Final encoder hidden state of a single window [L, d]."""
    _, h, _ = autoencoder_forward(p, window[None, :, :])
    return h[0]


def decode(
    p: AutoencoderParams, hidden: np.ndarray, window: np.ndarray, order: str = "reversed"
) -> np.ndarray:
    """Reconstruct one window [L, d] from a hidden state with teacher forcing."""
    inputs_tm = window[:, None, :]
    dec_in = decoder_inputs(inputs_tm, order)
    dec_states, _, _, _ = _lstm_forward(p.decoder, dec_in, h0=hidden[None, :].copy())
    outputs = dec_states @ p.proj_w.T + p.proj_b
    recon_tm = outputs if order == "forward" else outputs[::-1]
    return recon_tm[:, 0, :]


def dropout_mask(
    shape: tuple[int, ...],
    rate: float,
    rng: np.random.Generator | None = None,
    training: bool = True,
) -> np.ndarray:
    """Inverted-dropout mask: entries 0 with probability ``rate``, else 1/(1-rate).

    Outside training mode the mask is all ones regardless of rate.
    """
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return np.ones(shape)
    if rng is None:
        raise ValueError("training-mode dropout needs a random generator")
    keep = rng.random(shape) >= rate
    return keep / (1.0 - rate)


@dataclass
class AdamState:
    """Adam accumulators; moments are created lazily per parameter key."""

    learning_rate: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_update(
    state: AdamState, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]
) -> None:
    """One bias-corrected Adam step, applied in place to ``params``."""
    state.step += 1
    c1 = 1.0 - state.beta1**state.step
    c2 = 1.0 - state.beta2**state.step
    for key, g in grads.items():
        if params[key].shape != g.shape:
            raise ValueError(f"gradient shape {g.shape} != param shape {params[key].shape} for {key}")
        m = state.m.setdefault(key, np.zeros_like(g))
        v = state.v.setdefault(key, np.zeros_like(g))
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        params[key] -= state.learning_rate * (m / c1) / (np.sqrt(v / c2) + state.eps)
