"""Matching and match-uncertainty evaluation.

Mutual-nearest-neighbor matching, homography reprojection errors with
first-order covariance propagation, a scalar uncertainty per match (largest
eigenvalue of the propagated covariance) and the matching-accuracy-by-
uncertainty-bin table used to check that reported covariances track real
matching errors.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .covariance import Cov2


@dataclass(frozen=True)
class Homography:
    """3x3 plane-projective transform, normalized so h33 = 1 when possible."""

    h: np.ndarray

    def __post_init__(self):
        h = np.asarray(self.h, dtype=float)
        if h.shape != (3, 3):
            raise ValueError(f"homography must be 3x3, got {h.shape}")
        if abs(h[2, 2]) > 1e-12:
            h = h / h[2, 2]
        if abs(np.linalg.det(h)) <= 1e-12:
            raise ValueError("homography is singular")
        object.__setattr__(self, "h", h)

    def apply(self, xy: np.ndarray) -> np.ndarray:
        """Map one (2,) point or an (n, 2) batch; raises if mapped to infinity."""
        xy = np.asarray(xy, dtype=float)
        single = xy.ndim == 1
        pts = np.atleast_2d(xy)
        hom = self.h @ np.vstack([pts.T, np.ones(len(pts))])
        w = hom[2]
        if np.any(np.abs(w) <= 1e-12):
            raise ValueError("point maps to infinity under homography")
        out = (hom[:2] / w).T
        return out[0] if single else out

    @classmethod
    def from_file(cls, path: str | Path) -> "Homography":
        vals = np.loadtxt(path).ravel()
        if vals.size != 9:
            raise ValueError(f"homography file must hold 9 reals, got {vals.size} in {path}")
        return cls(h=vals.reshape(3, 3))

    def to_file(self, path: str | Path) -> None:
        Path(path).write_text(" ".join(repr(float(v)) for v in self.h.ravel()) + "\n")


@dataclass(frozen=True)
class Match:
    """Correspondence between a reference and a target keypoint."""

    ref_xy: np.ndarray
    tgt_xy: np.ndarray
    ref_cov: Cov2
    tgt_cov: Cov2
    descriptor_distance: float = 0.0

    def __post_init__(self):
        if self.descriptor_distance < 0:
            raise ValueError("descriptor distance must be nonnegative")


@dataclass(frozen=True)
class MatchError:
    """Reprojection error of a match, its covariance and scalar uncertainty."""

    e: np.ndarray
    sigma_e: Cov2
    scalar_u: float


def mutual_nearest_neighbor(desc_a: np.ndarray, desc_b: np.ndarray) -> list[tuple[int, int]]:
    """Mutual-nearest-neighbor pairs under L2 descriptor distance.

    (i, j) is kept iff j is i's nearest neighbor in b and i is j's nearest
    in a; distance ties resolve to the lowest index on both sides.
    """
    desc_a = np.asarray(desc_a, dtype=float)
    desc_b = np.asarray(desc_b, dtype=float)
    if desc_a.size == 0 or desc_b.size == 0:
        return []
    if desc_a.ndim != 2 or desc_b.ndim != 2 or desc_a.shape[1] != desc_b.shape[1]:
        raise ValueError(f"descriptor sets must share one dimension, got {desc_a.shape} vs {desc_b.shape}")
    d2 = (
        np.sum(desc_a**2, axis=1)[:, None]
        + np.sum(desc_b**2, axis=1)[None, :]
        - 2.0 * desc_a @ desc_b.T
    )
    nn_ab = np.argmin(d2, axis=1)
    nn_ba = np.argmin(d2, axis=0)
    return [(i, int(j)) for i, j in enumerate(nn_ab) if nn_ba[j] == i]


def reprojection_error(x_r: np.ndarray, x_t: np.ndarray, H: Homography) -> np.ndarray:
    """Pixel error between the target point and the mapped reference point."""
    return np.asarray(x_t, dtype=float) - H.apply(x_r)


def error_jacobian(x_r: np.ndarray, H: Homography) -> np.ndarray:
    """Analytic 2x2 Jacobian of the reprojection error wrt the reference point.

    Error is x_t - dehom(H x_r), so this is minus the Jacobian of the
    dehomogenized projective map.
    """
    x, y = np.asarray(x_r, dtype=float)
    h = H.h
    u, v, w = h @ np.array([x, y, 1.0])
    if abs(w) <= 1e-12:
        raise ValueError("point maps to infinity under homography")
    dm = np.array(
        [
            [h[0, 0] / w - u * h[2, 0] / w**2, h[0, 1] / w - u * h[2, 1] / w**2],
            [h[1, 0] / w - v * h[2, 0] / w**2, h[1, 1] / w - v * h[2, 1] / w**2],
        ]
    )
    return -dm


def propagate_covariance(cov_r: Cov2, cov_t: Cov2, H: Homography, x_r: np.ndarray) -> Cov2:
    """First-order propagation J cov_r J^T + cov_t of a match covariance."""
    J = error_jacobian(x_r, H)
    return Cov2.from_array(J @ cov_r.as_array() @ J.T + cov_t.as_array())


def scalar_uncertainty(sigma_e: Cov2) -> float:
    """Largest eigenvalue of a 2x2 SPD covariance, in closed form."""
    mean = 0.5 * (sigma_e.s11 + sigma_e.s22)
    half_gap = 0.5 * (sigma_e.s11 - sigma_e.s22)
    return mean + float(np.hypot(half_gap, sigma_e.s12))


def match_error(match: Match, H: Homography) -> MatchError:
    e = reprojection_error(match.ref_xy, match.tgt_xy, H)
    sigma_e = propagate_covariance(match.ref_cov, match.tgt_cov, H, match.ref_xy)
    return MatchError(e=e, sigma_e=sigma_e, scalar_u=scalar_uncertainty(sigma_e))


@dataclass
class MmaTable:
    """Matching accuracy per uncertainty bin.

    Rows are equal-count uncertainty bins ordered from lowest to highest
    scalar uncertainty; columns are pixel thresholds. `mean_mma` averages
    each row across thresholds.
    """

    thresholds: list[float]
    mma: np.ndarray
    bin_sizes: list[int]
    mean_mma: list[float] = field(default_factory=list)

    def __post_init__(self):
        if not self.mean_mma:
            self.mean_mma = [float(m) for m in np.mean(self.mma, axis=1)]

    @property
    def n_bins(self) -> int:
        return self.mma.shape[0]

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w") as fh:
            header = ["bin", "size"] + [f"mma@{t:g}" for t in self.thresholds] + ["mean_mma"]
            fh.write(",".join(header) + "\n")
            for b in range(self.n_bins):
                row = [str(b), str(self.bin_sizes[b])]
                row += [repr(float(v)) for v in self.mma[b]]
                row.append(repr(self.mean_mma[b]))
                fh.write(",".join(row) + "\n")

    def write_json(self, path: str | Path) -> None:
        payload = {
            "thresholds": self.thresholds,
            "bin_sizes": self.bin_sizes,
            "mma": self.mma.tolist(),
            "mean_mma": self.mean_mma,
        }
        Path(path).write_text(json.dumps(payload, indent=2) + "\n")


def mma_by_uncertainty(
    errors: list[MatchError],
    thresholds: list[float] | None = None,
    n_bins: int = 10,
) -> MmaTable:
    """Bin matches by scalar uncertainty and score accuracy per bin.

    Matches are sorted ascending by scalar uncertainty (stable, so ties keep
    input order) and split into `n_bins` equal-count bins with the remainder
    spread over the first bins. Entry (b, t) is the fraction of bin b whose
    error norm is within thresholds[t].
    """
    if thresholds is None:
        thresholds = [float(t) for t in range(1, 11)]
    if n_bins < 1:
        raise ValueError(f"n_bins must be >= 1, got {n_bins}")
    n = len(errors)
    if n < n_bins:
        raise ValueError(f"need at least n_bins={n_bins} matches, got {n}")

    u = np.array([me.scalar_u for me in errors])
    norms = np.array([float(np.linalg.norm(me.e)) for me in errors])
    order = np.argsort(u, kind="stable")
    norms = norms[order]

    base, rem = divmod(n, n_bins)
    sizes = [base + 1 if b < rem else base for b in range(n_bins)]
    bounds = np.cumsum([0] + sizes)

    thr = np.asarray(thresholds, dtype=float)
    mma = np.empty((n_bins, len(thresholds)))
    for b in range(n_bins):
        chunk = norms[bounds[b] : bounds[b + 1]]
        mma[b] = np.mean(chunk[:, None] <= thr[None, :], axis=0)
    return MmaTable(thresholds=[float(t) for t in thresholds], mma=mma, bin_sizes=sizes)


def parse_threshold_range(spec: str) -> list[float]:
    """Parse "a..b" into unit-step thresholds, or a comma list into floats."""
    if ".." in spec:
        lo, hi = spec.split("..")
        lo_f, hi_f = float(lo), float(hi)
        if hi_f < lo_f:
            raise ValueError(f"bad threshold range {spec!r}")
        return [float(t) for t in np.arange(lo_f, hi_f + 0.5)]
    return [float(t) for t in spec.split(",")]
