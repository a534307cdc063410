"""Example-based explanations: prototypes projected onto real training windows."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import TYPE_CHECKING

import numpy as np

from .prototypes import assign_batch

if TYPE_CHECKING:
    from .data import WindowSet
    from .model import ProtoADModel


@dataclass
class PrototypeProjection:
    """A prototype mapped to its nearest real training window."""

    prototype: int
    origin: int  # timestamp offset of the source window
    distance: float  # squared latent distance
    window: np.ndarray  # [L, d] input-space values of the source window


@dataclass
class WindowAssignment:
    """A test window assigned to its nearest prototype in latent space."""

    origin: int
    prototype: int
    distance: float  # squared latent distance
    label: int


@dataclass
class ExplanationReport:
    projections: list[PrototypeProjection]
    assignments: list[WindowAssignment]  # in test-window input order

    def by_prototype(self) -> dict[int, list[WindowAssignment]]:
        """Assignments grouped per prototype, nearest first."""
        groups: dict[int, list[WindowAssignment]] = {p.prototype: [] for p in self.projections}
        for a in self.assignments:
            groups.setdefault(a.prototype, []).append(a)
        for entries in groups.values():
            entries.sort(key=lambda a: (a.distance, a.origin))
        return groups

    def to_dict(self) -> dict:
        return {
            "prototypes": [
                {
                    "prototype": p.prototype,
                    "origin": p.origin,
                    "distance": p.distance,
                    "window": p.window.tolist(),
                }
                for p in self.projections
            ],
            "assignments": [
                {
                    "origin": a.origin,
                    "prototype": a.prototype,
                    "distance": a.distance,
                    "label": a.label,
                }
                for a in self.assignments
            ],
            "by_prototype": {
                str(idx): [
                    {"origin": a.origin, "distance": a.distance, "label": a.label}
                    for a in entries
                ]
                for idx, entries in self.by_prototype().items()
            },
        }


def project_prototypes(
    model: "ProtoADModel",
    train_windows: "WindowSet",
    display_windows: np.ndarray | None = None,
) -> list[PrototypeProjection]:
    """Map each prototype to its nearest training embedding, used at most once.

    Prototypes are processed in ascending index order; each takes the nearest
    training window whose embedding is still free, so the selected source
    windows are pairwise distinct. ``display_windows`` substitutes the values
    reported per window (e.g. un-normalized data); selection always happens in
    latent space.
    """
    k = model.prototypes.count
    if k == 0:
        raise ValueError("model has no prototypes to project")
    if train_windows.count < k:
        raise ValueError(
            f"need at least {k} training windows to project {k} prototypes, "
            f"got {train_windows.count}"
        )
    shown = train_windows.windows if display_windows is None else np.asarray(display_windows)
    embeddings = model.encode_windows(train_windows.windows)
    projections = []
    taken = np.zeros(train_windows.count, dtype=bool)
    for j in range(k):
        diff = embeddings - model.prototypes.vectors[j]
        sq = (diff * diff).sum(axis=1)
        sq[taken] = np.inf
        i = int(sq.argmin())
        taken[i] = True
        projections.append(
            PrototypeProjection(
                prototype=j,
                origin=int(train_windows.origins[i]),
                distance=float(sq[i]),
                window=shown[i].copy(),
            )
        )
    return projections


def assign_windows(model: "ProtoADModel", test_windows: "WindowSet") -> list[WindowAssignment]:
    """Assign each test window to its nearest prototype (ties to the lowest index)."""
    if model.prototypes.count == 0:
        raise ValueError("model has no prototypes to assign windows to")
    embeddings = model.encode_windows(test_windows.windows)
    idx, sq = assign_batch(model.prototypes, embeddings)
    return [
        WindowAssignment(
            origin=int(test_windows.origins[i]),
            prototype=int(idx[i]),
            distance=float(sq[i]),
            label=int(test_windows.labels[i]),
        )
        for i in range(test_windows.count)
    ]


def build_report(
    model: "ProtoADModel",
    train_windows: "WindowSet",
    test_windows: "WindowSet",
    display_train_windows: np.ndarray | None = None,
) -> ExplanationReport:
    return ExplanationReport(
        projections=project_prototypes(model, train_windows, display_train_windows),
        assignments=assign_windows(model, test_windows),
    )


def export_latent(model: "ProtoADModel", windows: "WindowSet", path: str | Path) -> None:
    """Write latent coordinates of windows plus prototypes as CSV.

    One row per window (role regular/anomaly, origin = window origin) followed
    by one row per prototype (role prototype, origin = prototype index).
    """
    embeddings = model.encode_windows(windows.windows)
    m = model.hidden_size
    path = Path(path)
    with open(path, "w", newline="") as fh:
        fh.write(",".join(["role", "origin"] + [f"z_{j}" for j in range(m)]) + "\n")
        for i in range(windows.count):
            role = "anomaly" if windows.labels[i] else "regular"
            cells = [role, str(int(windows.origins[i]))]
            cells += [repr(float(v)) for v in embeddings[i]]
            fh.write(",".join(cells) + "\n")
        for j in range(model.prototypes.count):
            cells = ["prototype", str(j)]
            cells += [repr(float(v)) for v in model.prototypes.vectors[j]]
            fh.write(",".join(cells) + "\n")


def write_prototype_svg(
    projection: PrototypeProjection,
    assignments: list[WindowAssignment],
    windows_by_origin: dict[int, np.ndarray],
    path: str | Path,
    top: int = 3,
) -> None:
    """Draw a univariate prototype window with its nearest assigned windows.

    The prototype's source window is the bold line; the closest ``top``
    assigned windows overlay it, grey for regular and red for anomalous.
    """
    proto_window = projection.window
    if proto_window.shape[1] != 1:
        raise ValueError("SVG export is implemented for univariate windows only")
    ranked = sorted(
        (a for a in assignments if a.prototype == projection.prototype),
        key=lambda a: (a.distance, a.origin),
    )[:top]
    series = [proto_window[:, 0]] + [
        windows_by_origin[a.origin][:, 0] for a in ranked if a.origin in windows_by_origin
    ]
    lo = min(s.min() for s in series)
    hi = max(s.max() for s in series)
    span = (hi - lo) or 1.0
    width, height, pad = 480.0, 240.0, 12.0
    n = proto_window.shape[0]

    def poly(values: np.ndarray) -> str:
        pts = []
        for t, v in enumerate(values):
            x = pad + (width - 2 * pad) * (t / max(1, n - 1))
            y = height - pad - (height - 2 * pad) * ((v - lo) / span)
            pts.append(f"{x:.2f},{y:.2f}")
        return " ".join(pts)

    lines = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0f}" height="{height:.0f}" '
        f'viewBox="0 0 {width:.0f} {height:.0f}">',
        f'<rect width="{width:.0f}" height="{height:.0f}" fill="white"/>',
    ]
    for a, s in zip(ranked, series[1:]):
        color = "#d0021b" if a.label else "#9b9b9b"
        lines.append(
            f'<polyline points="{poly(s)}" fill="none" stroke="{color}" '
            f'stroke-width="1" opacity="0.6"/>'
        )
    lines.append(
        f'<polyline points="{poly(series[0])}" fill="none" stroke="#4a90d9" stroke-width="2.5"/>'
    )
    lines.append(
        f'<text x="{pad}" y="{pad + 4}" font-size="11" font-family="sans-serif">'
        f"prototype {projection.prototype} (source window @ {projection.origin})</text>"
    )
    lines.append("</svg>")
    Path(path).write_text("\n".join(lines) + "\n")
