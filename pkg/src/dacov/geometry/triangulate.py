"""Triangulation: homogeneous DLT plus covariance-weighted LM refinement."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .types import Camera, DegenerateGeometryError, Point3, Pose, Track, point_jacobian, project_point

RANK_RATIO_TOL = 1e-10


def triangulate_dlt(track: Track, poses: list[Pose], cam: Camera) -> Point3:
    """Linear triangulation from two or more observations.

    Each observation contributes the two rows u*P3 - P1 and v*P3 - P2 of its
    projection matrix P = K [R|t]; the point is the right singular vector of
    the stacked system with least singular value, dehomogenized.

    Raises:
        DegenerateGeometryError: singular-value ratio below 1e-10 (parallel
            rays or coincident centers) or a point at infinity.
    """
    if len(track.observations) < 2:
        raise ValueError(f"triangulation needs >= 2 observations, got {len(track.observations)}")
    rows = []
    for obs in track.observations:
        P = cam.K @ poses[obs.cam_index].matrix34()
        u, v = obs.uv
        rows.append(u * P[2] - P[0])
        rows.append(v * P[2] - P[1])
    A = np.array(rows)
    _, s, vt = np.linalg.svd(A)
    # the smallest singular value vanishes on any consistent system; a second
    # vanishing one means the solution is not unique (coincident centers,
    # parallel rays)
    ratio = s[-2] / s[0] if s[0] > 0 else 0.0
    if ratio < RANK_RATIO_TOL:
        raise DegenerateGeometryError(f"rank-deficient triangulation system (sigma ratio {ratio:.3e})")
    x = vt[-1]
    if abs(x[3]) <= 1e-12:
        raise DegenerateGeometryError("triangulated point at infinity")
    return Point3(p=x[:3] / x[3])


@dataclass(frozen=True)
class LmParams:
    """Levenberg-Marquardt schedule shared by the point and pose refiners."""

    lambda0: float = 1e-3
    factor: float = 10.0
    max_iters: int = 100
    rel_tol: float = 1e-12
    gtol: float = 1e-8
    max_consecutive_rejects: int = 10


@dataclass(frozen=True)
class RefinedPoint:
    """Refined 3D point plus solver diagnostics."""

    point: Point3
    converged: bool
    iterations: int
    cost: float


def _point_residuals(p: np.ndarray, track: Track, poses: list[Pose], cam: Camera, whiteners):
    """Whitened residual vector and Jacobian for one point."""
    res = []
    jac = []
    for obs, L in zip(track.observations, whiteners):
        pose = poses[obs.cam_index]
        r = obs.uv - project_point(cam, pose, p)
        J = -point_jacobian(cam, pose, p)
        res.append(L @ r)
        jac.append(L @ J)
    return np.concatenate(res), np.vstack(jac)


def refine_point_lm(
    init: Point3,
    track: Track,
    poses: list[Pose],
    cam: Camera,
    params: LmParams = LmParams(),
    weighted: bool = True,
) -> RefinedPoint:
    """Minimize the covariance-weighted reprojection error of one point.

    Minimizes sum_i r_i^T Sigma_i^-1 r_i over the 3D position with LM
    (lambda starts at 1e-3, x10 on a rejected step, /10 on an accepted one)
    and reports cov3 = (J^T Sigma^-1 J)^-1 at the optimum. cov3 is omitted
    when that system's condition number exceeds 1e12. `weighted=False`
    replaces every Sigma_i with identity (the unweighted baseline).
    """
    if not np.all(np.isfinite(init.p)):
        raise ValueError("initial point must be finite")
    whiteners = []
    for obs in track.observations:
        if weighted:
            whiteners.append(np.linalg.inv(np.linalg.cholesky(obs.cov.as_array())))
        else:
            whiteners.append(np.eye(2))

    p = init.p.copy()
    res, jac = _point_residuals(p, track, poses, cam, whiteners)
    cost = float(res @ res)
    lam = params.lambda0
    converged = False
    iterations = 0
    rejects = 0

    for iterations in range(1, params.max_iters + 1):
        H = jac.T @ jac
        g = jac.T @ res
        if np.linalg.norm(2.0 * g) <= params.gtol * (1.0 + cost):
            converged = True
            break
        try:
            step = np.linalg.solve(H + lam * np.eye(3), -g)
        except np.linalg.LinAlgError:
            lam *= params.factor
            continue
        p_new = p + step
        res_new, jac_new = _point_residuals(p_new, track, poses, cam, whiteners)
        cost_new = float(res_new @ res_new)
        if cost_new <= cost:
            decrease = cost - cost_new
            p, res, jac, cost = p_new, res_new, jac_new, cost_new
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

    H = jac.T @ jac
    cov3 = None
    if np.all(np.isfinite(H)):
        cond = np.linalg.cond(H)
        if cond < 1e12:
            cov3 = np.linalg.inv(H)
            cov3 = 0.5 * (cov3 + cov3.T)
    return RefinedPoint(point=Point3(p=p, cov3=cov3), converged=converged, iterations=iterations, cost=cost)
