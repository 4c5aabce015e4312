"""Covariance-weighted motion-only bundle adjustment.

Refines a single camera pose against fixed 3D structure, minimizing
sum_i r_i^T W_i r_i with W_i the inverse of the total measurement covariance
(2D covariance plus an optional 3D covariance projected through the initial
pose; weights stay frozen during the optimization so the objective is a
fixed weighted least squares).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..covariance import Cov2
from .rotations import expmap, hat
from .triangulate import LmParams
from .types import Camera, Pose


@dataclass(frozen=True)
class RefinedPose:
    """Refined pose plus solver diagnostics."""

    pose: Pose
    converged: bool
    iterations: int
    cost: float
    gradient_norm: float


def _total_infos(pw, cam, pose, cov2s, cov3s) -> np.ndarray:
    n = len(pw)
    if cov2s is None:
        total = np.tile(np.eye(2), (n, 1, 1))
    else:
        total = np.empty((n, 2, 2))
        for i, c in enumerate(cov2s):
            total[i] = c.as_array() if isinstance(c, Cov2) else np.asarray(c, dtype=float)
    if cov3s is not None:
        pc = pw @ pose.R.T + pose.t
        for i, c3 in enumerate(cov3s):
            if c3 is None:
                continue
            Jp = cam.projection_jacobian(pc[i]) @ pose.R
            total[i] = total[i] + Jp @ np.asarray(c3, dtype=float) @ Jp.T
    return np.linalg.inv(total)


def _residuals_jacobian(pose: Pose, pw, uv, cam):
    """Stacked residuals and their Jacobian wrt (rotation vector, translation).

    The rotation increment composes on the left: R <- exp(w^) R, t <- t + dt.
    """
    n = len(pw)
    pc = pw @ pose.R.T + pose.t
    res = uv - cam.project(pc)
    J = np.zeros((n, 2, 6))
    for i in range(n):
        dpi = cam.projection_jacobian(pc[i])
        rp = pose.R @ pw[i]
        # residual is uv - proj and d(exp(w^) rp)/dw at w = 0 is -[rp]x
        J[i, :, :3] = dpi @ hat(rp)
        J[i, :, 3:] = -dpi
    return res, J


def _weighted_terms(res, J, infos):
    cost = float(np.einsum("ni,nij,nj->", res, infos, res))
    wres = np.einsum("nij,nj->ni", infos, res)
    grad = np.einsum("nik,ni->k", J, wres)
    H = np.einsum("nik,nij,njl->kl", J, infos, J)
    return cost, grad, H


def motion_only_ba(
    init: Pose,
    points,
    pixels,
    cam: Camera,
    cov2s=None,
    cov3s=None,
    params: LmParams = LmParams(),
) -> RefinedPose:
    """LM refinement of one camera pose against fixed 3D points.

    Uses the same LM schedule as the point refiner (lambda0 = 1e-3, x10 on a
    rejected step, /10 on an accepted one, at most 100 iterations, stop on a
    relative cost decrease below 1e-12). Ten consecutive rejected steps abort
    with the best pose seen so far.
    """
    pw = np.asarray([p.p if hasattr(p, "p") else p for p in points], dtype=float).reshape(-1, 3)
    uv = np.asarray(pixels, dtype=float).reshape(-1, 2)
    if len(pw) < 6:
        raise ValueError(f"motion-only BA needs >= 6 correspondences, got {len(pw)}")
    infos = _total_infos(pw, cam, init, cov2s, cov3s)

    pose = init
    res, J = _residuals_jacobian(pose, pw, uv, cam)
    cost, grad, H = _weighted_terms(res, J, infos)
    lam = params.lambda0
    converged = False
    iterations = 0
    rejects = 0

    for iterations in range(1, params.max_iters + 1):
        if np.linalg.norm(2.0 * grad) <= params.gtol * (1.0 + cost):
            converged = True
            break
        try:
            step = np.linalg.solve(H + lam * np.eye(6), -grad)
        except np.linalg.LinAlgError:
            lam *= params.factor
            continue
        cand = Pose(R=expmap(step[:3]) @ pose.R, t=pose.t + step[3:])
        res_new, J_new = _residuals_jacobian(cand, pw, uv, cam)
        cost_new, grad_new, H_new = _weighted_terms(res_new, J_new, infos)
        if cost_new <= cost:
            decrease = cost - cost_new
            pose, cost, grad, H = cand, cost_new, grad_new, H_new
            lam /= params.factor
            rejects = 0
            if decrease < params.rel_tol * max(cost, 1e-300):
                converged = True
                break
        else:
            lam *= params.factor
            rejects += 1
            if rejects >= params.max_consecutive_rejects:
                break

    return RefinedPose(
        pose=pose,
        converged=converged,
        iterations=iterations,
        cost=cost,
        gradient_norm=float(np.linalg.norm(2.0 * grad)),
    )


def ba_jacobian(pose: Pose, points, pixels, cam: Camera) -> np.ndarray:
    """Stacked (2n, 6) residual Jacobian, exposed for verification."""
    pw = np.asarray([p.p if hasattr(p, "p") else p for p in points], dtype=float).reshape(-1, 3)
    uv = np.asarray(pixels, dtype=float).reshape(-1, 2)
    _, J = _residuals_jacobian(pose, pw, uv, cam)
    return J.reshape(-1, 6)


def ba_residuals(pose: Pose, points, pixels, cam: Camera) -> np.ndarray:
    pw = np.asarray([p.p if hasattr(p, "p") else p for p in points], dtype=float).reshape(-1, 3)
    uv = np.asarray(pixels, dtype=float).reshape(-1, 2)
    res, _ = _residuals_jacobian(pose, pw, uv, cam)
    return res.reshape(-1)
