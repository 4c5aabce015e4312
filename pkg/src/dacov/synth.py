"""Synthetic data generators and statistical validators.

Everything here is seeded and deterministic. Monte Carlo trials derive their
generators from the master seed through `trial_rng(seed, index)`, so serial
and parallel execution see identical streams.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from .covariance import WindowSpec
from .geometry.pnp import epnp, epnpu
from .geometry.rotations import random_rotation
from .geometry.types import Camera, Pose, pose_errors
from .scoremap import SOBEL_X, SOBEL_Y, ScoreMap

NOISE_KINDS = ("iso_gauss", "aniso_gauss", "mixture")


def trial_rng(seed: int, index: int) -> np.random.Generator:
    """Seed-splitting rule: trial `index` of master `seed`."""
    return np.random.default_rng(np.random.SeedSequence(entropy=[int(seed), int(index)]))


def _rot2(theta: float) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]])


@dataclass(frozen=True)
class NoiseSpec:
    """Declarative noise model for synthetic observations.

    kinds:
      iso_gauss   -- isotropic Gaussian, parameter `sigma`;
      aniso_gauss -- axis-aligned sigmas (`sigma_x`, `sigma_y`, and `sigma_z`
                     in 3D) rotated by `theta` in the xy-plane;
      mixture     -- per-sample draw from weighted component specs, so the
                     declared covariance is heteroscedastic across samples.
    """

    kind: str = "iso_gauss"
    sigma: float = 1.0
    sigma_x: float = 1.0
    sigma_y: float = 1.0
    sigma_z: float | None = None
    theta: float = 0.0
    components: tuple[tuple[float, "NoiseSpec"], ...] = ()
    seed: int = 0

    def __post_init__(self):
        if self.kind not in NOISE_KINDS:
            raise ValueError(f"unknown noise kind {self.kind!r}; expected one of {NOISE_KINDS}")
        if self.kind == "iso_gauss" and not self.sigma > 0:
            raise ValueError("iso_gauss needs sigma > 0")
        if self.kind == "aniso_gauss" and not (self.sigma_x > 0 and self.sigma_y > 0):
            raise ValueError("aniso_gauss needs positive sigma_x and sigma_y")
        if self.kind == "mixture":
            if not self.components:
                raise ValueError("mixture needs components")
            total = sum(w for w, _ in self.components)
            if abs(total - 1.0) > 1e-9:
                raise ValueError(f"mixture weights must sum to 1, got {total}")

    def cov(self, dim: int = 2) -> np.ndarray:
        """Covariance of a single (non-mixture) component."""
        if self.kind == "iso_gauss":
            return self.sigma**2 * np.eye(dim)
        if self.kind == "aniso_gauss":
            if dim == 2:
                R = _rot2(self.theta)
                return R @ np.diag([self.sigma_x**2, self.sigma_y**2]) @ R.T
            sz = self.sigma_z if self.sigma_z is not None else self.sigma_y
            R = np.eye(3)
            R[:2, :2] = _rot2(self.theta)
            return R @ np.diag([self.sigma_x**2, self.sigma_y**2, sz**2]) @ R.T
        raise ValueError("mixture has no single covariance; sample instead")

    def sample(self, rng: np.random.Generator, n: int, dim: int = 2) -> tuple[np.ndarray, np.ndarray]:
        """Draw n offsets plus the exact generating covariance of each draw."""
        if self.kind == "mixture":
            weights = np.array([w for w, _ in self.components])
            choice = rng.choice(len(self.components), size=n, p=weights)
            noise = np.empty((n, dim))
            covs = np.empty((n, dim, dim))
            for k, (_, spec) in enumerate(self.components):
                idx = np.flatnonzero(choice == k)
                if idx.size:
                    sub_noise, sub_covs = spec.sample(rng, idx.size, dim)
                    noise[idx] = sub_noise
                    covs[idx] = sub_covs
            return noise, covs
        cov = self.cov(dim)
        L = np.linalg.cholesky(cov)
        noise = rng.standard_normal((n, dim)) @ L.T
        return noise, np.tile(cov, (n, 1, 1))

    def scaled(self, factor: float) -> "NoiseSpec":
        """Same shape of noise with every sigma multiplied by `factor`."""
        if self.kind == "mixture":
            comps = tuple((w, s.scaled(factor)) for w, s in self.components)
            return NoiseSpec(kind="mixture", components=comps, seed=self.seed)
        return NoiseSpec(
            kind=self.kind,
            sigma=self.sigma * factor,
            sigma_x=self.sigma_x * factor,
            sigma_y=self.sigma_y * factor,
            sigma_z=None if self.sigma_z is None else self.sigma_z * factor,
            theta=self.theta,
            seed=self.seed,
        )


DEFAULT_CAMERA = Camera(fx=800.0, fy=800.0, cx=320.0, cy=240.0)


@dataclass
class SynthScene:
    """One synthetic PnP problem with exactly-declared noise covariances."""

    camera: Camera
    pose_true: Pose
    points_true: np.ndarray
    points: np.ndarray
    cov3s: list[np.ndarray] | None
    uv_clean: np.ndarray
    uv_noisy: np.ndarray
    cov2s: np.ndarray


def synth_pnp_scene(
    n_points: int = 50,
    depth_range: tuple[float, float] = (4.0, 10.0),
    noise_2d: NoiseSpec | None = None,
    noise_3d: NoiseSpec | None = None,
    seed: int = 0,
    camera: Camera = DEFAULT_CAMERA,
    image_size: tuple[int, int] = (640, 480),
) -> SynthScene:
    """Points uniform in the camera frustum, projected and perturbed.

    2D noise perturbs the projections of the *true* points; 3D noise
    perturbs the world points handed to the solver. Declared covariances
    equal the generating ones exactly.
    """
    if n_points < 6:
        raise ValueError(f"need at least 6 points, got {n_points}")
    rng = np.random.default_rng(np.random.SeedSequence(entropy=int(seed)))
    w, h = image_size
    margin = 20.0
    u = rng.uniform(margin, w - margin, n_points)
    v = rng.uniform(margin, h - margin, n_points)
    z = rng.uniform(depth_range[0], depth_range[1], n_points)
    pc = np.stack([(u - camera.cx) / camera.fx * z, (v - camera.cy) / camera.fy * z, z], axis=1)

    R = random_rotation(rng)
    t = rng.uniform(-1.0, 1.0, 3)
    pose = Pose(R=R, t=t)
    pw = (pc - t) @ R  # inverse transform: R^T (pc - t)

    uv_clean = camera.project(pc)
    if noise_2d is not None:
        offsets, cov2s = noise_2d.sample(rng, n_points, dim=2)
        uv_noisy = uv_clean + offsets
    else:
        uv_noisy = uv_clean.copy()
        cov2s = np.tile(np.eye(2), (n_points, 1, 1))

    if noise_3d is not None:
        offsets3, cov3arr = noise_3d.sample(rng, n_points, dim=3)
        points = pw + offsets3
        cov3s: list[np.ndarray] | None = [cov3arr[i] for i in range(n_points)]
    else:
        points = pw.copy()
        cov3s = None
    return SynthScene(
        camera=camera, pose_true=pose, points_true=pw, points=points,
        cov3s=cov3s, uv_clean=uv_clean, uv_noisy=uv_noisy, cov2s=cov2s,
    )


def synth_multiview_scene(
    n_tracks: int = 60,
    n_ref_frames: int = 3,
    noise_2d: NoiseSpec | None = None,
    seed: int = 0,
    camera: Camera = DEFAULT_CAMERA,
    radius: float = 5.0,
):
    """Multi-frame scene: reference frames on a ring plus one query frame.

    Every track is observed in all reference frames and in the query frame;
    observation covariances equal the generating noise exactly (identity
    when no noise is given). Returns a `Scene` ready for `evaluate_scene`.
    """
    from .geometry.scene_io import Scene
    from .geometry.types import Observation, Track

    rng = np.random.default_rng(np.random.SeedSequence(entropy=int(seed)))
    frames = []
    for k in range(n_ref_frames + 1):
        angle = 2 * np.pi * k / (n_ref_frames + 3)
        center = np.array(
            [radius * np.cos(angle), radius * np.sin(angle), 1.0 + 0.3 * k]
        ) + rng.uniform(-0.2, 0.2, 3)
        frames.append(Pose.look_at(center))
    query_index = n_ref_frames

    points = rng.uniform(-1.2, 1.2, (n_tracks, 3))
    n_obs = n_tracks * (n_ref_frames + 1)
    if noise_2d is not None:
        offsets, covs = noise_2d.sample(rng, n_obs, dim=2)
    else:
        offsets = np.zeros((n_obs, 2))
        covs = np.tile(np.eye(2), (n_obs, 1, 1))

    from .covariance import Cov2

    tracks = []
    k = 0
    for p in points:
        obs = []
        for cam_idx, pose in enumerate(frames):
            uv = camera.project(pose.transform(p)) + offsets[k]
            obs.append(Observation(cam_index=cam_idx, uv=uv, cov=Cov2.from_array(covs[k])))
            k += 1
        tracks.append(Track(observations=obs))
    return Scene(camera=camera, frames=frames, tracks=tracks, query_frames=[query_index])


def _pose_rel_diff(a: Pose, b: Pose) -> float:
    dr = np.linalg.norm(a.R - b.R) / np.sqrt(3.0)
    dt = np.linalg.norm(a.t - b.t) / max(np.linalg.norm(b.t), 1.0)
    return max(dr, dt)


@dataclass
class NoiseLevelResult:
    label: str
    mean_e_rot: dict[str, float]
    mean_e_t: dict[str, float]
    median_e_rot: dict[str, float]
    median_e_t: dict[str, float]
    max_identity_diff: float
    n_failures: int


@dataclass
class EpnpuValidationReport:
    """Per-noise-level solver comparison plus the two headline assertions."""

    trials: int
    n_points: int
    seed: int
    levels: list[NoiseLevelResult] = field(default_factory=list)
    identity_tol: float = 1e-9

    def max_identity_diff_overall(self) -> float:
        return max((lv.max_identity_diff for lv in self.levels), default=0.0)

    @property
    def identity_equivalent(self) -> bool:
        return all(lv.max_identity_diff <= self.identity_tol for lv in self.levels)

    @property
    def improves_over_baseline(self) -> bool:
        return all(
            lv.mean_e_rot["epnpu_true"] <= lv.mean_e_rot["epnp"]
            and lv.mean_e_t["epnpu_true"] <= lv.mean_e_t["epnp"]
            for lv in self.levels
        )

    @property
    def passed(self) -> bool:
        return self.identity_equivalent and self.improves_over_baseline

    def to_json(self, path: str | Path) -> None:
        payload = {
            "trials": self.trials,
            "n_points": self.n_points,
            "seed": self.seed,
            "identity_tol": self.identity_tol,
            "identity_equivalent": self.identity_equivalent,
            "improves_over_baseline": self.improves_over_baseline,
            "passed": self.passed,
            "levels": [
                {
                    "label": lv.label,
                    "mean_e_rot": lv.mean_e_rot,
                    "mean_e_t": lv.mean_e_t,
                    "median_e_rot": lv.median_e_rot,
                    "median_e_t": lv.median_e_t,
                    "max_identity_diff": lv.max_identity_diff,
                    "n_failures": lv.n_failures,
                }
                for lv in self.levels
            ],
        }
        Path(path).write_text(json.dumps(payload, indent=2) + "\n")


def default_validation_levels() -> list[tuple[str, NoiseSpec, NoiseSpec | None]]:
    """Heteroscedastic 2D mixtures at three magnitudes, then 2D plus 3D."""
    base = NoiseSpec(
        kind="mixture",
        components=(
            (0.7, NoiseSpec(kind="iso_gauss", sigma=0.5)),
            (0.3, NoiseSpec(kind="aniso_gauss", sigma_x=5.0, sigma_y=0.5, theta=0.6)),
        ),
    )
    noise3d = NoiseSpec(
        kind="mixture",
        components=(
            (0.8, NoiseSpec(kind="iso_gauss", sigma=0.01)),
            (0.2, NoiseSpec(kind="iso_gauss", sigma=0.08)),
        ),
    )
    return [
        ("2d_mixture_x1", base, None),
        ("2d_mixture_x2", base.scaled(2.0), None),
        ("2d+3d_mixture", base, noise3d),
    ]


def run_epnpu_validation(
    trials: int = 500,
    n_points: int = 50,
    levels: list[tuple[str, NoiseSpec, NoiseSpec | None]] | None = None,
    seed: int = 0,
) -> EpnpuValidationReport:
    """Compare EPnP, EPnPU-with-identity and EPnPU-with-true covariances.

    For every noise level, runs `trials` scenes and records mean/median
    rotation and translation errors per solver, the largest per-trial
    difference between EPnP and identity-covariance EPnPU, and solver
    failures (counted, not fatal).
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if levels is None:
        levels = default_validation_levels()
    report = EpnpuValidationReport(trials=trials, n_points=n_points, seed=seed)

    for li, (label, n2d, n3d) in enumerate(levels):
        errs: dict[str, list[tuple[float, float]]] = {"epnp": [], "epnpu_id": [], "epnpu_true": []}
        max_id_diff = 0.0
        failures = 0
        for trial in range(trials):
            scene_seed = int(np.random.SeedSequence(entropy=[seed, li, trial]).generate_state(1)[0])
            scene = synth_pnp_scene(
                n_points=n_points, noise_2d=n2d, noise_3d=n3d, seed=scene_seed
            )
            identity_covs = np.tile(np.eye(2), (n_points, 1, 1))
            try:
                pose_epnp = epnp(scene.points, scene.uv_noisy, scene.camera)
                pose_id = epnpu(scene.points, scene.uv_noisy, scene.camera, identity_covs)
                pose_true = epnpu(
                    scene.points, scene.uv_noisy, scene.camera, scene.cov2s, scene.cov3s
                )
            except (ValueError, np.linalg.LinAlgError):
                failures += 1
                continue
            max_id_diff = max(max_id_diff, _pose_rel_diff(pose_id, pose_epnp))
            errs["epnp"].append(pose_errors(pose_epnp, scene.pose_true))
            errs["epnpu_id"].append(pose_errors(pose_id, scene.pose_true))
            errs["epnpu_true"].append(pose_errors(pose_true, scene.pose_true))

        def stat(fn, which):
            return {k: float(fn([e[which] for e in v])) for k, v in errs.items()}

        report.levels.append(
            NoiseLevelResult(
                label=label,
                mean_e_rot=stat(np.mean, 0),
                mean_e_t=stat(np.mean, 1),
                median_e_rot=stat(np.median, 0),
                median_e_t=stat(np.median, 1),
                max_identity_diff=max_id_diff,
                n_failures=failures,
            )
        )
    return report


def gaussian_template(
    size: tuple[int, int], center: tuple[float, float], blob_sigma: float | tuple[float, float]
) -> np.ndarray:
    """Anisotropic Gaussian bump: peak 1 at `center` (x, y order)."""
    h, w = size
    sx, sy = (blob_sigma, blob_sigma) if np.isscalar(blob_sigma) else blob_sigma
    ys, xs = np.mgrid[0:h, 0:w]
    return np.exp(-((xs - center[0]) ** 2 / (2 * sx**2) + (ys - center[1]) ** 2 / (2 * sy**2)))


def synth_blob_scoremap(
    center: tuple[float, float],
    blob_sigma: float | tuple[float, float],
    noise_sigma: float,
    size: tuple[int, int] = (33, 33),
    seed: int = 0,
) -> tuple[ScoreMap, ScoreMap]:
    """Gaussian-bump score map plus iid Gaussian noise; returns (noisy, template)."""
    sx, sy = (blob_sigma, blob_sigma) if np.isscalar(blob_sigma) else blob_sigma
    h, w = size
    if not (0 <= center[0] < w and 0 <= center[1] < h):
        raise ValueError(f"blob center {center} outside {size}")
    template = gaussian_template(size, center, (sx, sy))
    rng = np.random.default_rng(np.random.SeedSequence(entropy=int(seed)))
    noisy = template + noise_sigma * rng.standard_normal(template.shape)
    return ScoreMap(values=noisy), ScoreMap(values=template)


def synth_multi_blob_scoremap(
    size: tuple[int, int] = (256, 256),
    grid_step: int = 24,
    sigma_range: tuple[float, float] = (1.2, 4.0),
    amplitude_range: tuple[float, float] = (0.4, 1.0),
    noise_sigma: float = 0.01,
    seed: int = 0,
) -> tuple[ScoreMap, np.ndarray]:
    """Jittered grid of anisotropic Gaussian blobs; returns (map, centers)."""
    h, w = size
    rng = np.random.default_rng(np.random.SeedSequence(entropy=int(seed)))
    values = np.zeros((h, w))
    centers = []
    margin = grid_step // 2
    for cy in range(margin, h - margin, grid_step):
        for cx in range(margin, w - margin, grid_step):
            jx = cx + rng.uniform(-3, 3)
            jy = cy + rng.uniform(-3, 3)
            sx = rng.uniform(*sigma_range)
            sy = rng.uniform(*sigma_range)
            amp = rng.uniform(*amplitude_range)
            theta = rng.uniform(0, np.pi)
            c, s = np.cos(theta), np.sin(theta)
            # render only a local support; the tails are negligible
            reach = int(np.ceil(4 * max(sx, sy)))
            r0, r1 = max(0, int(jy) - reach), min(h, int(jy) + reach + 1)
            c0, c1 = max(0, int(jx) - reach), min(w, int(jx) + reach + 1)
            ys, xs = np.mgrid[r0:r1, c0:c1]
            dx, dy = xs - jx, ys - jy
            rx = c * dx + s * dy
            ry = -s * dx + c * dy
            values[r0:r1, c0:c1] += amp * np.exp(-(rx**2 / (2 * sx**2) + ry**2 / (2 * sy**2)))
            centers.append((jx, jy))
    values += noise_sigma * rng.standard_normal(values.shape)
    return ScoreMap(values=values), np.array(centers)


@dataclass
class CrlbReport:
    """Empirical MLE-shift covariance against the predicted inverse tensor."""

    tensor: np.ndarray
    sigma2_cinv: np.ndarray
    empirical_cov: np.ndarray
    frobenius_rel_err: float
    n_trials: int
    n_used: int
    n_boundary_excluded: int

    def to_json(self, path: str | Path) -> None:
        payload = {
            "tensor": self.tensor.tolist(),
            "sigma2_cinv": self.sigma2_cinv.tolist(),
            "empirical_cov": self.empirical_cov.tolist(),
            "frobenius_rel_err": self.frobenius_rel_err,
            "n_trials": self.n_trials,
            "n_used": self.n_used,
            "n_boundary_excluded": self.n_boundary_excluded,
        }
        Path(path).write_text(json.dumps(payload, indent=2) + "\n")


def crlb_empirical_check(
    blob_sigma: float | tuple[float, float],
    noise_sigma: float,
    n_trials: int,
    window: WindowSpec,
    grid_step: float = 0.05,
    grid_halfwidth: float = 2.0,
    seed: int = 0,
    chunk: int = 2000,
) -> CrlbReport:
    """Monte Carlo validation that the inverse structure tensor tracks the
    covariance of the maximum-likelihood sub-pixel shift.

    Per trial, iid Gaussian noise perturbs the blob template on the window
    support, and the shift minimizing the unweighted squared difference to
    the analytically shifted template is found by dense grid search (step
    `grid_step` over +-`grid_halfwidth` px). The sample covariance of those
    shifts is compared against noise_sigma^2 * C^-1, where C is the
    structure tensor of the noiseless template at the blob center built from
    Sobel gradients normalized to central differences (divided by 8).

    The window's weights are ignored (support only): the iid noise model
    behind the bound corresponds to uniform weighting. Grid-boundary
    solutions are excluded and counted.
    """
    if n_trials < 2:
        raise ValueError("need at least 2 trials")
    rad = window.radius
    margin = 2  # Sobel support around the window
    half = rad + margin
    size = 2 * half + 1
    center = (float(half), float(half))
    template = gaussian_template((size, size), center, blob_sigma)

    # structure tensor of the template at the center, unweighted window support
    gx = ndimage.correlate(template, SOBEL_X, mode="nearest") / 8.0
    gy = ndimage.correlate(template, SOBEL_Y, mode="nearest") / 8.0
    sl = slice(half - rad, half + rad + 1)
    C = np.array(
        [
            [np.sum(gx[sl, sl] ** 2), np.sum(gx[sl, sl] * gy[sl, sl])],
            [np.sum(gx[sl, sl] * gy[sl, sl]), np.sum(gy[sl, sl] ** 2)],
        ]
    )
    sigma2_cinv = noise_sigma**2 * np.linalg.inv(C)

    # shifted-template dictionary over the search grid
    shifts_1d = np.arange(-grid_halfwidth, grid_halfwidth + grid_step / 2, grid_step)
    n_shift = len(shifts_1d)
    ty, tx = np.meshgrid(shifts_1d, shifts_1d, indexing="ij")
    shift_xy = np.stack([tx.ravel(), ty.ravel()], axis=1)

    d = np.arange(-rad, rad + 1, dtype=float)
    wy, wx = np.meshgrid(d, d, indexing="ij")
    win_x = (center[0] + wx).ravel()
    win_y = (center[1] + wy).ravel()
    sx, sy = (blob_sigma, blob_sigma) if np.isscalar(blob_sigma) else blob_sigma
    # A[s, j] = template evaluated at window pixel j displaced by shift s
    ax = win_x[None, :] + shift_xy[:, 0:1]
    ay = win_y[None, :] + shift_xy[:, 1:2]
    A = np.exp(-((ax - center[0]) ** 2 / (2 * sx**2) + (ay - center[1]) ** 2 / (2 * sy**2)))
    a_norms = np.sum(A * A, axis=1)

    clean = np.exp(
        -((win_x - center[0]) ** 2 / (2 * sx**2) + (win_y - center[1]) ** 2 / (2 * sy**2))
    )

    best_shift = np.empty((n_trials, 2))
    rng = np.random.default_rng(np.random.SeedSequence(entropy=int(seed)))
    for start in range(0, n_trials, chunk):
        stop = min(start + chunk, n_trials)
        noisy = clean[None, :] + noise_sigma * rng.standard_normal((stop - start, clean.size))
        objective = a_norms[None, :] - 2.0 * noisy @ A.T
        best = np.argmin(objective, axis=1)
        best_shift[start:stop] = shift_xy[best]

    on_boundary = np.any(np.abs(best_shift) >= shifts_1d[-1] - 1e-12, axis=1)
    used = best_shift[~on_boundary]
    n_excluded = int(on_boundary.sum())
    if len(used) < 2:
        raise ValueError("all trials hit the search-grid boundary")
    empirical = np.cov(used.T, ddof=1)
    rel_err = float(np.linalg.norm(empirical - sigma2_cinv) / np.linalg.norm(sigma2_cinv))
    return CrlbReport(
        tensor=C,
        sigma2_cinv=sigma2_cinv,
        empirical_cov=empirical,
        frobenius_rel_err=rel_err,
        n_trials=n_trials,
        n_used=int(len(used)),
        n_boundary_excluded=n_excluded,
    )


def synth_homography_pair(
    base: ScoreMap,
    H,
    noise: NoiseSpec | None = None,
    seed: int = 0,
    min_overlap: float = 0.5,
) -> tuple[ScoreMap, ScoreMap, "Homography"]:
    """Warp a base map by a homography into a target map (bilinear, zero fill).

    H maps base coordinates to target coordinates; each target pixel samples
    the base at the inverse-mapped location. Overlap below `min_overlap`
    (fraction of target pixels with an in-bounds preimage) is an error.
    Optional iso_gauss noise is added to the target.
    """
    from .matching import Homography

    if not isinstance(H, Homography):
        H = Homography(h=np.asarray(H, dtype=float))
    h_inv = np.linalg.inv(H.h)
    hh, ww = base.values.shape
    ys, xs = np.mgrid[0:hh, 0:ww]
    ones = np.ones_like(xs, dtype=float)
    denom = h_inv[2, 0] * xs + h_inv[2, 1] * ys + h_inv[2, 2] * ones
    with np.errstate(divide="ignore", invalid="ignore"):
        src_x = (h_inv[0, 0] * xs + h_inv[0, 1] * ys + h_inv[0, 2]) / denom
        src_y = (h_inv[1, 0] * xs + h_inv[1, 1] * ys + h_inv[1, 2]) / denom
    valid = (
        np.isfinite(src_x) & np.isfinite(src_y)
        & (src_x >= 0) & (src_x <= ww - 1) & (src_y >= 0) & (src_y <= hh - 1)
    )
    overlap = float(valid.mean())
    if overlap < min_overlap:
        raise ValueError(f"homography overlap {overlap:.2f} is below {min_overlap}")
    src_x = np.where(valid, src_x, -10.0)
    src_y = np.where(valid, src_y, -10.0)
    warped = ndimage.map_coordinates(
        base.values.astype(float), [src_y, src_x], order=1, mode="constant", cval=0.0
    )
    warped[~valid] = 0.0
    if noise is not None:
        if noise.kind != "iso_gauss":
            raise ValueError("score-map noise must be iso_gauss")
        rng = np.random.default_rng(np.random.SeedSequence(entropy=int(seed)))
        warped = warped + noise.sigma * rng.standard_normal(warped.shape)
    return base, ScoreMap(values=warped, scale_k=base.scale_k), H
