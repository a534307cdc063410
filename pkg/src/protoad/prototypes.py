"""Prototype layer: learned latent vectors with diversity and representation losses."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class PrototypeLayer:
    """k latent vectors of dimension m; k=0 disables both prototype losses."""

    vectors: np.ndarray  # [k, m]
    d_min: float = 1.0  # diversity threshold on squared distance

    def __post_init__(self) -> None:
        self.vectors = np.asarray(self.vectors, dtype=np.float64)
        if self.vectors.ndim != 2:
            raise ValueError(f"prototypes must be a [k, m] matrix, got {self.vectors.shape}")
        if not np.isfinite(self.vectors).all():
            raise ValueError("prototype vectors must be finite")
        if self.d_min <= 0:
            raise ValueError(f"d_min must be positive, got {self.d_min}")

    @property
    def count(self) -> int:
        return self.vectors.shape[0]

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]


def init_prototypes(
    k: int, m: int, rng: np.random.Generator, d_min: float = 1.0
) -> PrototypeLayer:
    """k prototypes drawn uniformly from [-1, 1]^m."""
    if k < 0 or m < 1:
        raise ValueError(f"need k >= 0 and m >= 1, got k={k}, m={m}")
    return PrototypeLayer(vectors=rng.uniform(-1.0, 1.0, size=(k, m)), d_min=d_min)


def _pair_sq_dists(vectors: np.ndarray) -> np.ndarray:
    diff = vectors[:, None, :] - vectors[None, :, :]
    return (diff * diff).sum(axis=2)


def diversity_loss(layer: PrototypeLayer) -> float:
    """Squared hinge pushing prototype pairs to squared distance >= d_min.

    sum over unordered pairs of max(0, d_min - ||p_i - p_j||^2)^2; 0 for k < 2.
    """
    k = layer.count
    if k < 2:
        return 0.0
    sq = _pair_sq_dists(layer.vectors)
    iu = np.triu_indices(k, 1)
    hinge = np.maximum(0.0, layer.d_min - sq[iu])
    return float((hinge * hinge).sum())


def representation_loss(layer: PrototypeLayer, embeddings: np.ndarray) -> float:
    """Bidirectional nearest-neighbor pull between prototypes and embeddings.

    mean over prototypes of the squared distance to the nearest embedding,
    plus mean over embeddings of the squared distance to the nearest
    prototype. Returns 0 when the layer is empty.
    """
    if layer.count == 0:
        return 0.0
    H = np.atleast_2d(embeddings)
    if H.shape[0] < 1:
        raise ValueError("need at least one embedding")
    diff = layer.vectors[:, None, :] - H[None, :, :]
    sq = (diff * diff).sum(axis=2)  # [k, n]
    return float(sq.min(axis=1).mean() + sq.min(axis=0).mean())


def loss_gradients(
    layer: PrototypeLayer,
    embeddings: np.ndarray,
    weight_diversity: float = 1.0,
    weight_representation: float = 1.0,
) -> tuple[np.ndarray, np.ndarray]:
    """Gradients of weight_d * L_div + weight_r * L_rep.

    Returns (d/d prototypes [k, m], d/d embeddings [n, m]). At argmin ties the
    lowest-index minimizer receives the gradient (np.argmin convention); a
    pair exactly at the hinge boundary contributes nothing.
    """
    H = np.atleast_2d(embeddings)
    k, n = layer.count, H.shape[0]
    dP = np.zeros_like(layer.vectors)
    dH = np.zeros_like(H)
    if k == 0:
        return dP, dH

    P = layer.vectors
    if weight_diversity != 0.0 and k >= 2:
        sq = _pair_sq_dists(P)
        for i in range(k):
            for j in range(i + 1, k):
                margin = layer.d_min - sq[i, j]
                if margin > 0.0:
                    # d/dp_i of max(0, margin)^2 = -4 * margin * (p_i - p_j)
                    g = -4.0 * weight_diversity * margin * (P[i] - P[j])
                    dP[i] += g
                    dP[j] -= g

    if weight_representation != 0.0:
        diff = P[:, None, :] - H[None, :, :]
        sq = (diff * diff).sum(axis=2)  # [k, n]
        nearest_h = sq.argmin(axis=1)  # per prototype
        nearest_p = sq.argmin(axis=0)  # per embedding
        for j in range(k):
            g = (2.0 * weight_representation / k) * (P[j] - H[nearest_h[j]])
            dP[j] += g
            dH[nearest_h[j]] -= g
        for i in range(n):
            g = (2.0 * weight_representation / n) * (H[i] - P[nearest_p[i]])
            dH[i] += g
            dP[nearest_p[i]] -= g
    return dP, dH


def assign(layer: PrototypeLayer, embedding: np.ndarray) -> tuple[int, float]:
    """Nearest prototype of one embedding: (index, squared distance).

    Ties break to the lowest index. Raises on an empty layer.
    """
    if layer.count == 0:
        raise ValueError("cannot assign with zero prototypes")
    diff = layer.vectors - embedding
    sq = (diff * diff).sum(axis=1)
    idx = int(sq.argmin())
    return idx, float(sq[idx])


def assign_batch(layer: PrototypeLayer, embeddings: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized `assign` over [n, m] embeddings: (indices [n], sq distances [n])."""
    if layer.count == 0:
        raise ValueError("cannot assign with zero prototypes")
    H = np.atleast_2d(embeddings)
    diff = H[:, None, :] - layer.vectors[None, :, :]
    sq = (diff * diff).sum(axis=2)  # [n, k]
    idx = sq.argmin(axis=1)
    return idx, sq[np.arange(H.shape[0]), idx]
