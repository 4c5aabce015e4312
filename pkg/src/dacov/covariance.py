"""Per-keypoint 2x2 spatial covariances from score maps.

Two estimators, both post-hoc and detector-agnostic:

* point-wise isotropic: the inverse score at the detected pixel scales an
  identity covariance;
* structure tensor: windowed sum of gradient outer products around the
  keypoint; its (regularized) inverse is the covariance, so directions of
  low saliency get high uncertainty.

Both outputs are up-to-scale: only relative weighting between keypoints and
directions is meaningful.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .scoremap import GradientField, Keypoint, ScoreMap, sobel_gradients

METHODS = ("iso", "full")


@dataclass(frozen=True)
class SymMat2:
    """Symmetric 2x2 matrix (a21 implied). Structure tensors live here."""

    a11: float
    a12: float
    a22: float

    def as_array(self) -> np.ndarray:
        return np.array([[self.a11, self.a12], [self.a12, self.a22]])

    @property
    def trace(self) -> float:
        return self.a11 + self.a22

    def is_psd(self, tol_scale: float = 1e-9) -> bool:
        tol = tol_scale * max(self.a11 * self.a22, 1.0)
        return self.a11 >= 0 and self.a22 >= 0 and self.a11 * self.a22 - self.a12**2 >= -tol


@dataclass(frozen=True)
class Cov2:
    """Symmetric positive-definite 2x2 covariance."""

    s11: float
    s12: float
    s22: float

    def __post_init__(self):
        if not (self.s11 > 0 and self.s11 * self.s22 - self.s12**2 > 0):
            raise ValueError(f"covariance not SPD: [[{self.s11}, {self.s12}], [{self.s12}, {self.s22}]]")

    def as_array(self) -> np.ndarray:
        return np.array([[self.s11, self.s12], [self.s12, self.s22]])

    @classmethod
    def from_array(cls, a: np.ndarray) -> "Cov2":
        a = np.asarray(a, dtype=float)
        return cls(s11=float(a[0, 0]), s12=float(0.5 * (a[0, 1] + a[1, 0])), s22=float(a[1, 1]))

    @classmethod
    def isotropic(cls, variance: float) -> "Cov2":
        return cls(s11=variance, s12=0.0, s22=variance)


@dataclass(frozen=True)
class WindowSpec:
    """Square integration window with nonnegative weights."""

    size: int
    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if self.size % 2 == 0 or self.size < 3:
            raise ValueError(f"window size must be odd and >= 3, got {self.size}")
        if w.shape != (self.size, self.size):
            raise ValueError(f"weights shape {w.shape} does not match size {self.size}")
        if (w < 0).any() or w.sum() <= 0:
            raise ValueError("window weights must be nonnegative with positive sum")
        object.__setattr__(self, "weights", w)

    @property
    def radius(self) -> int:
        return self.size // 2


def gaussian_window(sigma: float, size: int = 7) -> WindowSpec:
    """Gaussian weights sampled at integer offsets from the window center.

    Weights are left unnormalized: a global scaling of the weights only
    scales the structure tensor, and the covariances are up-to-scale anyway.
    The default 7x7 support corresponds to truncating a sigma=1 Gaussian
    at three sigmas.
    """
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    if size % 2 == 0:
        raise ValueError(f"window size must be odd, got {size}")
    r = size // 2
    d = np.arange(-r, r + 1, dtype=float)
    du, dv = np.meshgrid(d, d, indexing="ij")
    return WindowSpec(size=size, weights=np.exp(-(du**2 + dv**2) / (2.0 * sigma**2)))


def uniform_window(size: int = 7) -> WindowSpec:
    """Unit weights; the pure window-support case."""
    return WindowSpec(size=size, weights=np.ones((size, size)))


def isotropic_covariance(score_map: ScoreMap, kp: Keypoint, score_floor: float = 1e-6) -> Cov2:
    """Inverse-score isotropic covariance at the keypoint pixel.

    The score is floored at `score_floor` so non-positive scores (possible
    with pre-softmax maps) still yield a finite SPD covariance.
    """
    r, c = int(round(kp.y)), int(round(kp.x))
    if not (0 <= r < score_map.height and 0 <= c < score_map.width):
        raise ValueError(f"keypoint ({kp.x}, {kp.y}) outside map {score_map.values.shape}")
    s = max(float(score_map.values[r, c]), score_floor)
    return Cov2.isotropic(1.0 / s)


def structure_tensor(grad: GradientField, kp: Keypoint, win: WindowSpec) -> SymMat2:
    """Weighted sum of gradient outer products over the window at the keypoint.

    The window is clipped at the map borders and the surviving weights are
    not renormalized, so the tensor stays monotone in the available evidence
    near edges.
    """
    h, w = grad.gx.shape
    r, c = int(round(kp.y)), int(round(kp.x))
    rad = win.radius
    r0, r1 = max(0, r - rad), min(h, r + rad + 1)
    c0, c1 = max(0, c - rad), min(w, c + rad + 1)
    if r0 >= r1 or c0 >= c1:
        raise ValueError(f"window at ({kp.x}, {kp.y}) contains no pixels")
    wgt = win.weights[r0 - r + rad : r1 - r + rad, c0 - c + rad : c1 - c + rad]
    gx = grad.gx[r0:r1, c0:c1]
    gy = grad.gy[r0:r1, c0:c1]
    return SymMat2(
        a11=float(np.sum(wgt * gx * gx)),
        a12=float(np.sum(wgt * gx * gy)),
        a22=float(np.sum(wgt * gy * gy)),
    )


def invert_tensor(tensor: SymMat2, eps: float = 1e-8) -> Cov2:
    """Regularized inverse of a structure tensor.

    Inverts C + eps * max(trace(C), 1) * I in closed form. The shift keeps
    flat regions (singular C) finite and maximally uncertain; eigenvectors
    are preserved and eigenvalues are reciprocals of the shifted ones.
    """
    if eps <= 0:
        raise ValueError(f"eps must be positive, got {eps}")
    shift = eps * max(tensor.trace, 1.0)
    a11 = tensor.a11 + shift
    a22 = tensor.a22 + shift
    a12 = tensor.a12
    det = a11 * a22 - a12 * a12
    return Cov2(s11=a22 / det, s12=-a12 / det, s22=a11 / det)


@dataclass(frozen=True)
class CovarianceParams:
    """Defaults for batch covariance extraction (7x7 Gaussian, sigma 1)."""

    window_size: int = 7
    sigma: float = 1.0
    eps: float = 1e-8
    score_floor: float = 1e-6


def batch_covariances(
    score_map: ScoreMap,
    keypoints: list[Keypoint],
    method: str = "full",
    params: CovarianceParams = CovarianceParams(),
) -> list[Cov2]:
    """Per-keypoint covariances, in input order.

    `iso` uses the inverse score at each keypoint; `full` runs Sobel
    gradients once and the windowed structure tensor per keypoint.
    """
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")
    if method == "iso":
        return [isotropic_covariance(score_map, kp, params.score_floor) for kp in keypoints]
    grad = sobel_gradients(score_map)
    win = gaussian_window(params.sigma, params.window_size)
    return [invert_tensor(structure_tensor(grad, kp, win), params.eps) for kp in keypoints]


@dataclass(frozen=True)
class CovarianceRecord:
    """One keypoint with its covariance, as stored in record files."""

    id: int
    x: float
    y: float
    score: float
    s11: float
    s12: float
    s22: float
    method: str

    @property
    def cov(self) -> Cov2:
        return Cov2(s11=self.s11, s12=self.s12, s22=self.s22)

    @property
    def keypoint(self) -> Keypoint:
        return Keypoint(x=self.x, y=self.y, score=self.score, id=self.id)


RECORD_FIELDS = ("id", "x", "y", "score", "s11", "s12", "s22", "method")


def make_records(keypoints: list[Keypoint], covs: list[Cov2], method: str) -> list[CovarianceRecord]:
    if len(keypoints) != len(covs):
        raise ValueError(f"{len(keypoints)} keypoints vs {len(covs)} covariances")
    return [
        CovarianceRecord(
            id=kp.id, x=kp.x, y=kp.y, score=kp.score,
            s11=c.s11, s12=c.s12, s22=c.s22, method=method,
        )
        for kp, c in zip(keypoints, covs)
    ]


def write_covariance_records(records: list[CovarianceRecord], path: str | Path) -> None:
    """Write records as CSV (.csv) or JSON (anything else)."""
    path = Path(path)
    if path.suffix.lower() == ".csv":
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(RECORD_FIELDS)
            for r in records:
                writer.writerow([int(r.id), repr(float(r.x)), repr(float(r.y)), repr(float(r.score)),
                                 repr(float(r.s11)), repr(float(r.s12)), repr(float(r.s22)), r.method])
    else:
        payload = [{f: getattr(r, f) for f in RECORD_FIELDS} for r in records]
        path.write_text(json.dumps({"records": payload}, indent=2) + "\n")


def read_covariance_records(path: str | Path) -> list[CovarianceRecord]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"covariance records not found: {path}")
    if path.suffix.lower() == ".csv":
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None or tuple(reader.fieldnames) != RECORD_FIELDS:
                raise ValueError(f"bad covariance-record header in {path}: {reader.fieldnames}")
            rows = list(reader)
    else:
        rows = json.loads(path.read_text())["records"]
    return [
        CovarianceRecord(
            id=int(r["id"]), x=float(r["x"]), y=float(r["y"]), score=float(r["score"]),
            s11=float(r["s11"]), s12=float(r["s12"]), s22=float(r["s22"]), method=str(r["method"]),
        )
        for r in rows
    ]
