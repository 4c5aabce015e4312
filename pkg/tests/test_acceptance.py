"""Acceptance suite.

Each test implements one acceptance criterion at its stated tolerance and
prints a single [PASS]/[FAIL] line. Criteria are property- and trend-based
on synthetic data at desk scale, plus exact checks where the math forces the
answer. Run with `pytest tests/test_acceptance.py -v -s`.
"""

from __future__ import annotations

import time

import numpy as np
import pytest
from scipy.stats import spearmanr

from dacov.covariance import (
    Cov2,
    batch_covariances,
    gaussian_window,
    invert_tensor,
    isotropic_covariance,
    structure_tensor,
    uniform_window,
)
from dacov.geometry import (
    Camera,
    Observation,
    Point3,
    Pose,
    Track,
    ba_jacobian,
    ba_residuals,
    epnp,
    epnpu,
    pose_errors,
    refine_point_lm,
    triangulate_dlt,
)
from dacov.geometry.rotations import expmap
from dacov.matching import Homography, MatchError, error_jacobian, propagate_covariance, reprojection_error, scalar_uncertainty, mma_by_uncertainty
from dacov.scoremap import Keypoint, ScoreMap, nms_detect, sobel_gradients
from dacov.synth import (
    NoiseSpec,
    crlb_empirical_check,
    run_epnpu_validation,
    synth_homography_pair,
    synth_multi_blob_scoremap,
    synth_pnp_scene,
    trial_rng,
)


def report(name: str, ok: bool, detail: str) -> None:
    print(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
    assert ok, f"{name}: {detail}"


MIXTURE_2D = NoiseSpec(
    kind="mixture",
    components=(
        (0.7, NoiseSpec(kind="iso_gauss", sigma=0.5)),
        (0.3, NoiseSpec(kind="aniso_gauss", sigma_x=5.0, sigma_y=0.5, theta=0.6)),
    ),
)


def test_epnpu_identity_equivalence():
    """EPnPU with identity covariances matches EPnP within 1e-9 per trial."""
    t0 = time.monotonic()
    worst = 0.0
    for trial in range(200):
        seed = int(trial_rng(1001, trial).integers(0, 2**31 - 1))
        scene = synth_pnp_scene(n_points=50, seed=seed, noise_2d=MIXTURE_2D)
        pose_a = epnp(scene.points, scene.uv_noisy, scene.camera)
        pose_b = epnpu(
            scene.points, scene.uv_noisy, scene.camera, np.tile(np.eye(2), (50, 1, 1))
        )
        dr = np.linalg.norm(pose_a.R - pose_b.R) / np.sqrt(3.0)
        dt = np.linalg.norm(pose_a.t - pose_b.t) / max(np.linalg.norm(pose_a.t), 1.0)
        worst = max(worst, dr, dt)
    elapsed = time.monotonic() - t0
    report(
        "epnpu-identity-equivalence",
        worst <= 1e-9 and elapsed < 30.0,
        f"max relative pose difference {worst:.2e} over 200 scenes in {elapsed:.1f}s (limits 1e-9, 30s)",
    )


def test_epnpu_improvement_trend():
    """Weighted solver at or below EPnP error at every tested noise level."""
    t0 = time.monotonic()
    rep = run_epnpu_validation(trials=500, n_points=50, seed=2002)
    elapsed = time.monotonic() - t0
    lines = []
    ok = rep.identity_equivalent
    for lv in rep.levels:
        rot_ok = lv.mean_e_rot["epnpu_true"] <= lv.mean_e_rot["epnp"]
        t_ok = lv.mean_e_t["epnpu_true"] <= lv.mean_e_t["epnp"]
        ok = ok and rot_ok and t_ok
        lines.append(
            f"{lv.label}: e_rot {lv.mean_e_rot['epnpu_true']:.4f}<={lv.mean_e_rot['epnp']:.4f}"
            f" e_t {lv.mean_e_t['epnpu_true']:.4f}<={lv.mean_e_t['epnp']:.4f}"
        )
    ok = ok and elapsed < 120.0
    report(
        "epnpu-improvement-trend",
        ok,
        "; ".join(lines) + f"; 500 trials/level in {elapsed:.1f}s (limit 120s)",
    )


def test_crlb_fisher_validation():
    """Empirical MLE-shift covariance within 15% of sigma^2 C^-1 at 20k trials."""
    t0 = time.monotonic()
    iso = crlb_empirical_check(
        blob_sigma=3.0, noise_sigma=0.1, n_trials=20000, window=uniform_window(7), seed=3003
    )
    aniso = crlb_empirical_check(
        blob_sigma=(5.0, 2.5), noise_sigma=0.1, n_trials=20000,
        window=uniform_window(7), seed=3004,
    )
    elapsed = time.monotonic() - t0
    # anisotropic blob: eigen-order of the empirical covariance matches C^-1
    evals_e, evecs_e = np.linalg.eigh(aniso.empirical_cov)
    evals_p, evecs_p = np.linalg.eigh(aniso.sigma2_cinv)
    angle = np.degrees(np.arccos(min(1.0, abs(float(evecs_e[:, 1] @ evecs_p[:, 1])))))
    order_ok = (
        aniso.empirical_cov[0, 0] > aniso.empirical_cov[1, 1]
        and aniso.sigma2_cinv[0, 0] > aniso.sigma2_cinv[1, 1]
        and angle < 10.0
    )
    ok = iso.frobenius_rel_err < 0.15 and aniso.frobenius_rel_err < 0.15 and order_ok and elapsed < 120.0
    report(
        "crlb-fisher-validation",
        ok,
        f"rel Frobenius err iso {iso.frobenius_rel_err:.3f}, aniso {aniso.frobenius_rel_err:.3f} "
        f"(limit 0.15); eigen-axis mismatch {angle:.1f} deg; {elapsed:.1f}s (limit 120s)",
    )


def _calibrated_match_errors(method: str, n_target: int, seed: int) -> list[MatchError]:
    """Matches from warped score-map pairs with errors drawn from the
    covariances the chosen estimator reports."""
    errors: list[MatchError] = []
    pair = 0
    while len(errors) < n_target:
        rng = trial_rng(seed, pair)
        base, _ = synth_multi_blob_scoremap(
            size=(256, 256), grid_step=22, sigma_range=(1.2, 4.5),
            amplitude_range=(0.35, 1.0), noise_sigma=0.005, seed=int(rng.integers(2**31)),
        )
        h = np.array(
            [
                [1.0 + rng.uniform(-0.02, 0.02), rng.uniform(-0.01, 0.01), rng.uniform(-4, 4)],
                [rng.uniform(-0.01, 0.01), 1.0 + rng.uniform(-0.02, 0.02), rng.uniform(-4, 4)],
                [rng.uniform(-2e-5, 2e-5), rng.uniform(-2e-5, 2e-5), 1.0],
            ]
        )
        base, target, H = synth_homography_pair(
            base, h, noise=NoiseSpec(kind="iso_gauss", sigma=0.005), seed=int(rng.integers(2**31))
        )
        kps = nms_detect(base, nms_radius=5, max_keypoints=250, min_score=0.25)
        ref_covs = batch_covariances(base, kps, method)
        for kp, cov_r in zip(kps, ref_covs):
            try:
                mapped = H.apply(np.array([kp.x, kp.y]))
            except ValueError:
                continue
            mx, my = float(mapped[0]), float(mapped[1])
            if not (6 <= mx < 250 and 6 <= my < 250):
                continue
            tgt_kp = Keypoint(x=round(mx), y=round(my), score=0.0)
            cov_t = batch_covariances(target, [tgt_kp], method)[0]
            sigma_e = propagate_covariance(cov_r, cov_t, H, np.array([kp.x, kp.y]))
            e = rng.multivariate_normal(np.zeros(2), sigma_e.as_array())
            errors.append(MatchError(e=e, sigma_e=sigma_e, scalar_u=scalar_uncertainty(sigma_e)))
        pair += 1
    return errors[:n_target]


def test_mma_vs_uncertainty_trend():
    """Mean MMA per bin decreases with the uncertainty bin for both methods."""
    rhos = {}
    for method, seed in (("full", 4004), ("iso", 4005)):
        errors = _calibrated_match_errors(method, 10000, seed)
        norms = np.array([np.linalg.norm(me.e) for me in errors])
        thresholds = [float(t) for t in np.quantile(norms, np.linspace(0.1, 0.95, 10))]
        table = mma_by_uncertainty(errors, thresholds=thresholds, n_bins=10)
        rhos[method] = float(spearmanr(np.arange(10), table.mean_mma).statistic)
    ok = rhos["full"] < -0.9 and rhos["iso"] < -0.7
    report(
        "mma-vs-uncertainty-trend",
        ok,
        f"Spearman rho over 10 bins of 10000 matches: full {rhos['full']:.3f} (< -0.9), "
        f"iso {rhos['iso']:.3f} (< -0.7)",
    )


CAM = Camera(fx=800.0, fy=800.0, cx=320.0, cy=240.0)


def _ring_poses(n: int, radius: float = 5.0) -> list[Pose]:
    return [
        Pose.look_at(
            np.array(
                [radius * np.cos(2 * np.pi * k / (n + 1)), radius * np.sin(2 * np.pi * k / (n + 1)), 1.0 + 0.4 * k]
            )
        )
        for k in range(n)
    ]


def _random_cov2(rng, lo: float, hi: float, ratio: float) -> np.ndarray:
    a = rng.uniform(0, np.pi)
    R = np.array([[np.cos(a), -np.sin(a)], [np.sin(a), np.cos(a)]])
    base = rng.uniform(lo, hi)
    return R @ np.diag([base * ratio, base]) @ R.T


def _triangulation_trial(rng, poses, weighted=True, ratio=36.0):
    point = rng.uniform(-0.8, 0.8, 3)
    obs = []
    for i, pose in enumerate(poses):
        cov = _random_cov2(rng, 0.25, 1.0, ratio)
        uv = CAM.project(pose.transform(point)) + rng.multivariate_normal(np.zeros(2), cov)
        obs.append(Observation(cam_index=i, uv=uv, cov=Cov2.from_array(cov)))
    track = Track(observations=obs)
    init = triangulate_dlt(track, poses, CAM)
    refined = refine_point_lm(init, track, poses, CAM, weighted=weighted)
    return point, refined


def test_weighted_lm_calibration():
    """cov3 is chi-square(3) calibrated; weighting wins under anisotropy."""
    poses = _ring_poses(4)
    mahal = []
    rng = np.random.default_rng(trial_rng(5005, 0).integers(2**31))
    trials = 0
    while len(mahal) < 2000:
        trials += 1
        truth, refined = _triangulation_trial(rng, poses)
        if refined.point.cov3 is None:
            continue
        err = refined.point.p - truth
        mahal.append(float(err @ np.linalg.inv(refined.point.cov3) @ err))
    mean_mahal = float(np.mean(mahal))

    rng = np.random.default_rng(trial_rng(5006, 0).integers(2**31))
    wins = 0
    for _ in range(1000):
        point = rng.uniform(-0.8, 0.8, 3)
        obs = []
        for i, pose in enumerate(poses):
            cov = _random_cov2(rng, 0.25, 1.0, 36.0)
            uv = CAM.project(pose.transform(point)) + rng.multivariate_normal(np.zeros(2), cov)
            obs.append(Observation(cam_index=i, uv=uv, cov=Cov2.from_array(cov)))
        track = Track(observations=obs)
        init = triangulate_dlt(track, poses, CAM)
        err_w = np.linalg.norm(refine_point_lm(init, track, poses, CAM, weighted=True).point.p - point)
        err_u = np.linalg.norm(refine_point_lm(init, track, poses, CAM, weighted=False).point.p - point)
        wins += err_w < err_u
    win_rate = wins / 1000.0
    ok = 2.7 <= mean_mahal <= 3.3 and win_rate > 0.6
    report(
        "weighted-lm-calibration",
        ok,
        f"mean Mahalanobis {mean_mahal:.3f} over 2000 trials (band [2.7, 3.3]); "
        f"weighted-vs-unweighted win rate {win_rate:.1%} (> 60%)",
    )


def test_jacobian_checks():
    """Propagation and BA Jacobians match central finite differences."""
    rng = np.random.default_rng(6006)
    worst_prop = 0.0
    checked = 0
    while checked < 100:
        h = np.eye(3) + 0.2 * rng.standard_normal((3, 3))
        if abs(np.linalg.det(h)) < 1e-3:
            continue
        H = Homography(h=h)
        x = rng.uniform(-20, 20, 2)
        try:
            J = error_jacobian(x, H)
        except ValueError:
            continue
        step = 1e-4
        num = np.zeros((2, 2))
        degenerate = False
        for k in range(2):
            d = np.zeros(2)
            d[k] = step
            try:
                num[:, k] = (
                    reprojection_error(x + d, np.zeros(2), H)
                    - reprojection_error(x - d, np.zeros(2), H)
                ) / (2 * step)
            except ValueError:
                degenerate = True
        if degenerate:
            continue
        worst_prop = max(worst_prop, float(np.abs(J - num).max() / np.abs(num).max()))
        checked += 1

    worst_ba = 0.0
    step = 1e-6
    for trial in range(100):
        scene = synth_pnp_scene(
            n_points=8, seed=int(trial_rng(6007, trial).integers(2**31)),
            noise_2d=NoiseSpec(kind="iso_gauss", sigma=2.0),
        )
        pose = scene.pose_true
        J = ba_jacobian(pose, scene.points, scene.uv_noisy, scene.camera)
        num = np.zeros_like(J)
        for k in range(6):
            d = np.zeros(6)
            d[k] = step
            pp = Pose(R=expmap(d[:3]) @ pose.R, t=pose.t + d[3:])
            pm = Pose(R=expmap(-d[:3]) @ pose.R, t=pose.t - d[3:])
            num[:, k] = (
                ba_residuals(pp, scene.points, scene.uv_noisy, scene.camera)
                - ba_residuals(pm, scene.points, scene.uv_noisy, scene.camera)
            ) / (2 * step)
        worst_ba = max(worst_ba, float(np.abs(J - num).max() / np.abs(num).max()))
    ok = worst_prop < 1e-5 and worst_ba < 1e-5
    report(
        "jacobian-checks",
        ok,
        f"max rel err over 100 instances each: propagation {worst_prop:.2e}, "
        f"motion-BA {worst_ba:.2e} (limit 1e-5)",
    )


def test_structure_tensor_suite():
    """PSD fuzz, eigen-direction, exact scale laws, whitening invariance."""
    rng = np.random.default_rng(7007)
    win = gaussian_window(1.0, 7)

    psd_ok = True
    for _ in range(1000):
        scale = rng.uniform(0.05, 50.0)
        grad = sobel_gradients(ScoreMap(values=scale * rng.standard_normal((10, 10))))
        kp = Keypoint(x=int(rng.integers(0, 10)), y=int(rng.integers(0, 10)), score=0.0)
        psd_ok = psd_ok and structure_tensor(grad, kp, win).is_psd()

    worst_angle = 0.0
    checked = 0
    while checked < 100:
        grad = sobel_gradients(ScoreMap(values=rng.standard_normal((14, 14))))
        C = structure_tensor(grad, Keypoint(x=7, y=7, score=0.0), win).as_array()
        evals, evecs = np.linalg.eigh(C)
        if evals[1] - evals[0] <= 1e-6 * np.trace(C):
            continue
        angles = np.radians(np.arange(0.0, 180.0, 1.0))
        dirs = np.stack([np.cos(angles), np.sin(angles)], axis=1)
        best = dirs[int(np.argmax(np.einsum("ni,ij,nj->n", dirs, C, dirs)))]
        worst_angle = max(
            worst_angle, float(np.degrees(np.arccos(min(1.0, abs(best @ evecs[:, 1])))))
        )
        checked += 1

    ys, xs = np.mgrid[0:21, 0:21]
    values = 5.0 * np.exp(-((xs - 10.0) ** 2 + (ys - 10.0) ** 2) / 8.0)
    kp = Keypoint(x=10, y=10, score=0.0)
    scale_ok = True
    for a in (2.0, 3.7, 11.0):
        C1 = structure_tensor(sobel_gradients(ScoreMap(values=values)), kp, win)
        Ca = structure_tensor(sobel_gradients(ScoreMap(values=a * values)), kp, win)
        full_law = np.allclose(
            invert_tensor(Ca).as_array(), invert_tensor(C1).as_array() / a**2, rtol=1e-10
        )
        iso1 = isotropic_covariance(ScoreMap(values=values), kp)
        isoa = isotropic_covariance(ScoreMap(values=a * values), kp)
        iso_law = np.isclose(isoa.s11, iso1.s11 / a, rtol=1e-10)
        scale_ok = scale_ok and full_law and iso_law

    scene = synth_pnp_scene(n_points=40, seed=7008, noise_2d=MIXTURE_2D)
    pose_1 = epnpu(scene.points, scene.uv_noisy, scene.camera, scene.cov2s)
    pose_s = epnpu(scene.points, scene.uv_noisy, scene.camera, 37.0 * scene.cov2s)
    whiten_diff = max(
        float(np.linalg.norm(pose_1.R - pose_s.R)), float(np.linalg.norm(pose_1.t - pose_s.t))
    )
    ok = psd_ok and worst_angle <= 1.5 and scale_ok and whiten_diff <= 1e-9
    report(
        "structure-tensor-suite",
        ok,
        f"PSD fuzz 1000 maps {'ok' if psd_ok else 'FAILED'}; eigen-direction worst "
        f"{worst_angle:.2f} deg (limit 1.5); scale laws exact to 1e-10 "
        f"{'ok' if scale_ok else 'FAILED'}; whitening-scale pose shift {whiten_diff:.2e} (limit 1e-9)",
    )


def test_pose_error_metric_closed_form():
    """Rotation metric reproduces closed-form cases to 1e-9 degrees."""
    truth = Pose.identity()
    est = Pose(R=expmap(np.radians(10.0) * np.array([0.0, 0.0, 1.0])), t=np.zeros(3))
    e_rot, e_t = pose_errors(est, truth)
    err = abs(e_rot - 10.0)
    ok = err <= 1e-9 and e_t == 0.0
    report(
        "pose-error-metric",
        ok,
        f"10-degree z rotation measured as {e_rot:.12f} deg (|err| {err:.1e} <= 1e-9)",
    )
