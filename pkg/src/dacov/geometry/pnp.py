"""Perspective-n-point solvers: EPnP and its covariance-weighted extension.

Both solvers share one core (control points, barycentric coordinates, the
2n x 12 linear system, beta candidates for N in {1, 2, 3} with Gauss-Newton
refinement, Horn alignment, and a Gauss-Newton pose polish). The weighted
variant whitens each correspondence's two rows of the linear system with the
inverse Cholesky factor of its total 2D covariance (the measured covariance
plus the projection of an optional 3D covariance through the current pose)
and uses the same weights in the polish. With identity 2D covariances and no
3D covariances the two solvers follow the identical code path.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np

from ..covariance import Cov2
from .rotations import expmap, hat
from .types import Camera, Pose


@dataclass(frozen=True)
class PnpParams:
    min_points: int = 6
    beta_gn_iters: int = 5
    polish_iters: int = 15


def _control_points(pw: np.ndarray) -> np.ndarray:
    """Centroid plus principal directions of the 3D set, scaled by their std.

    Directions along which the set has (numerically) no extent are dropped,
    so coplanar scenes get 3 control points instead of 4.
    """
    centroid = pw.mean(axis=0)
    centered = pw - centroid
    cov = centered.T @ centered / len(pw)
    evals, evecs = np.linalg.eigh(cov)
    spread = np.sqrt(np.maximum(evals, 0.0))
    ctrl = [centroid]
    for k in range(2, -1, -1):  # largest spread first
        if spread[k] > 1e-9 * max(spread[2], 1e-12):
            ctrl.append(centroid + spread[k] * evecs[:, k])
    if len(ctrl) < 3:
        raise ValueError("3D point set is degenerate (collinear or coincident)")
    return np.array(ctrl)


def _barycentric(pw: np.ndarray, ctrl: np.ndarray) -> np.ndarray:
    """Coordinates alpha (n, nc) with sum 1 such that pw = alpha @ ctrl."""
    nc = len(ctrl)
    A = np.vstack([ctrl.T, np.ones(nc)])
    B = np.vstack([pw.T, np.ones(len(pw))])
    if nc == 4:
        return np.linalg.solve(A, B).T
    sol, *_ = np.linalg.lstsq(A, B, rcond=None)
    return sol.T


def _build_m(
    uv: np.ndarray, alphas: np.ndarray, cam: Camera, whiteners: np.ndarray | None
) -> np.ndarray:
    n = len(uv)
    nc = alphas.shape[1]
    M = np.zeros((2 * n, 3 * nc))
    for i in range(n):
        u, v = uv[i]
        block = np.zeros((2, 3 * nc))
        for j in range(nc):
            a = alphas[i, j]
            block[0, 3 * j] = a * cam.fx
            block[0, 3 * j + 2] = a * (cam.cx - u)
            block[1, 3 * j + 1] = a * cam.fy
            block[1, 3 * j + 2] = a * (cam.cy - v)
        if whiteners is not None:
            block = whiteners[i] @ block
        M[2 * i : 2 * i + 2] = block
    return M


def _null_vectors(M: np.ndarray, count: int = 3) -> np.ndarray:
    """Eigenvectors of M^T M with the smallest eigenvalues, ascending."""
    _, vecs = np.linalg.eigh(M.T @ M)
    return vecs[:, :count]


def _pair_diffs(v: np.ndarray) -> np.ndarray:
    """Differences of the embedded control points for each null vector."""
    cps = v.reshape(-1, 3, v.shape[1])
    pairs = combinations(range(cps.shape[0]), 2)
    return np.stack([cps[i] - cps[j] for i, j in pairs])  # (npairs, 3, nv)


def _betas_candidates(V: np.ndarray, rho: np.ndarray) -> list[np.ndarray]:
    """Beta solutions for the N = 1, 2, 3 null-space cases."""
    diffs = _pair_diffs(V)
    gram = np.einsum("pdk,pdl->pkl", diffs, diffs)  # (npairs, nv, nv) pairwise dot products

    candidates = []

    # N = 1: scale of the last singular vector from first-order distances
    dist_c = np.sqrt(gram[:, 0, 0])
    denom = float(dist_c @ dist_c)
    beta1 = float(dist_c @ np.sqrt(rho)) / denom if denom > 0 else 0.0
    candidates.append(np.array([beta1, 0.0, 0.0]))

    # N = 2: linearized unknowns [b11, b12, b22]
    L2 = np.stack([gram[:, 0, 0], 2.0 * gram[:, 0, 1], gram[:, 1, 1]], axis=1)
    sol2, *_ = np.linalg.lstsq(L2, rho, rcond=None)
    b1 = np.sqrt(abs(sol2[0]))
    s2 = -1.0 if (sol2[0] > 0) ^ (sol2[1] > 0) else 1.0
    candidates.append(np.array([b1, s2 * np.sqrt(abs(sol2[2])), 0.0]))

    # N = 3: linearized unknowns [b11, b12, b13, b22, b23, b33]
    L3 = np.stack(
        [
            gram[:, 0, 0],
            2.0 * gram[:, 0, 1],
            2.0 * gram[:, 0, 2],
            gram[:, 1, 1],
            2.0 * gram[:, 1, 2],
            gram[:, 2, 2],
        ],
        axis=1,
    )
    sol3, *_ = np.linalg.lstsq(L3, rho, rcond=None)
    b1 = np.sqrt(abs(sol3[0]))
    s2 = -1.0 if (sol3[0] > 0) ^ (sol3[1] > 0) else 1.0
    s3 = -1.0 if (sol3[0] > 0) ^ (sol3[2] > 0) else 1.0
    candidates.append(np.array([b1, s2 * np.sqrt(abs(sol3[3])), s3 * np.sqrt(abs(sol3[5]))]))
    return candidates


def _gauss_newton_betas(V: np.ndarray, betas: np.ndarray, rho: np.ndarray, iters: int) -> np.ndarray:
    """Refine betas on the squared control-point distance constraints."""
    diffs = _pair_diffs(V)
    gram = np.einsum("pdk,pdl->pkl", diffs, diffs)
    betas = betas.copy()
    for _ in range(iters):
        gb = gram @ betas  # (6, nv)
        res = np.einsum("pk,k->p", gb, betas) - rho
        J = 2.0 * gb
        JtJ = J.T @ J
        try:
            step = np.linalg.solve(JtJ, -J.T @ res)
        except np.linalg.LinAlgError:
            break
        betas = betas + step
    return betas


def _camera_points(V: np.ndarray, betas: np.ndarray, alphas: np.ndarray) -> np.ndarray:
    pc = alphas @ (V @ betas).reshape(-1, 3)
    if pc[:, 2].sum() < 0:  # distance constraints are sign-blind
        pc = -pc
    return pc


def _horn(pw: np.ndarray, pc: np.ndarray) -> Pose:
    """Closed-form rigid alignment taking world points onto camera points."""
    cw = pw.mean(axis=0)
    cc = pc.mean(axis=0)
    S = (pw - cw).T @ (pc - cc)
    U, _, Vt = np.linalg.svd(S)
    D = np.diag([1.0, 1.0, np.sign(np.linalg.det(Vt.T @ U.T))])
    R = Vt.T @ D @ U.T
    return Pose(R=R, t=cc - R @ cw)


def _weighted_cost(pose: Pose, pw, uv, cam, infos) -> float:
    pc = pw @ pose.R.T + pose.t
    if np.any(pc[:, 2] <= 0):
        return np.inf
    res = uv - cam.project(pc)
    return float(np.einsum("ni,nij,nj->", res, infos, res))


def _polish_pose(pose: Pose, pw, uv, cam, infos, iters: int) -> Pose:
    """Gauss-Newton on (rotation vector, translation) with backtracking."""
    cost = _weighted_cost(pose, pw, uv, cam, infos)
    for _ in range(iters):
        pc = pw @ pose.R.T + pose.t
        res = (uv - cam.project(pc)).reshape(-1)
        J = np.zeros((2 * len(pw), 6))
        for i in range(len(pw)):
            dpi = cam.projection_jacobian(pc[i])
            rp = pose.R @ pw[i]
            # residual is uv - proj and d(exp(w^) rp)/dw = -[rp]x, so the
            # rotation block is +dpi @ [rp]x
            J[2 * i : 2 * i + 2, :3] = dpi @ hat(rp)
            J[2 * i : 2 * i + 2, 3:] = -dpi
        W = np.zeros((2 * len(pw), 2 * len(pw)))
        for i, info in enumerate(infos):
            W[2 * i : 2 * i + 2, 2 * i : 2 * i + 2] = info
        JtW = J.T @ W
        try:
            step = np.linalg.solve(JtW @ J, -JtW @ res)
        except np.linalg.LinAlgError:
            break
        improved = False
        for _ in range(8):
            cand = Pose(R=expmap(step[:3]) @ pose.R, t=pose.t + step[3:])
            cand_cost = _weighted_cost(cand, pw, uv, cam, infos)
            if cand_cost < cost:
                tiny_drop = np.isfinite(cost) and (cost - cand_cost) < 1e-14 * max(cost, 1e-300)
                pose, cost = cand, cand_cost
                improved = True
                if tiny_drop:
                    return pose
                break
            step = 0.5 * step
        if not improved:
            break
    return pose


def _solve_core(
    pw: np.ndarray,
    uv: np.ndarray,
    cam: Camera,
    covs: np.ndarray | None,
    params: PnpParams,
) -> Pose:
    ctrl = _control_points(pw)
    alphas = _barycentric(pw, ctrl)
    rho = np.array(
        [np.sum((ctrl[i] - ctrl[j]) ** 2) for i, j in combinations(range(len(ctrl)), 2)]
    )

    if covs is None:
        whiteners = None
        infos = np.tile(np.eye(2), (len(pw), 1, 1))
    else:
        chol = np.linalg.cholesky(covs)
        whiteners = np.linalg.inv(chol)
        infos = np.linalg.inv(covs)

    M = _build_m(uv, alphas, cam, whiteners)
    V = _null_vectors(M)

    best: Pose | None = None
    best_cost = np.inf
    for betas in _betas_candidates(V, rho):
        betas = _gauss_newton_betas(V, betas, rho, params.beta_gn_iters)
        pc = _camera_points(V, betas, alphas)
        pose = _horn(pw, pc)
        cost = _weighted_cost(pose, pw, uv, cam, infos)
        if best is None or cost < best_cost:
            best, best_cost = pose, cost
    return _polish_pose(best, pw, uv, cam, infos, params.polish_iters)


def _as_points_array(points) -> np.ndarray:
    pts = [p.p if hasattr(p, "p") else p for p in points]
    return np.asarray(pts, dtype=float).reshape(-1, 3)


def _as_cov2_array(cov2s, n: int) -> np.ndarray:
    covs = np.empty((n, 2, 2))
    for i, c in enumerate(cov2s):
        covs[i] = c.as_array() if isinstance(c, Cov2) else np.asarray(c, dtype=float)
    sym_err = np.abs(covs - covs.transpose(0, 2, 1)).max()
    if sym_err > 1e-9 or np.any(np.linalg.eigvalsh(covs)[:, 0] <= 0):
        raise ValueError("2D covariances must be symmetric positive definite")
    return covs


def epnp(points, pixels, cam: Camera, params: PnpParams = PnpParams()) -> Pose:
    """EPnP camera pose from n >= 6 world-to-pixel correspondences.

    Control points are the centroid and principal directions of the 3D set;
    beta candidates come from the null space of the 2n x 12 system for
    N in {1, 2, 3}, each refined by Gauss-Newton and aligned with Horn's
    method; the candidate with the lowest reprojection error wins and gets a
    short Gauss-Newton pose polish.
    """
    pw = _as_points_array(points)
    uv = np.asarray(pixels, dtype=float).reshape(-1, 2)
    if len(pw) < params.min_points:
        raise ValueError(f"EPnP needs >= {params.min_points} correspondences, got {len(pw)}")
    if len(pw) != len(uv):
        raise ValueError(f"{len(pw)} points vs {len(uv)} pixels")
    return _solve_core(pw, uv, cam, None, params)


def epnpu(
    points,
    pixels,
    cam: Camera,
    cov2s,
    cov3s=None,
    params: PnpParams = PnpParams(),
) -> Pose:
    """Covariance-weighted EPnP.

    Each correspondence's two rows of the linear system are whitened by the
    inverse Cholesky factor of its total 2D covariance. When 3D covariances
    are present they are projected to 2D through the pose of a preliminary
    unweighted solve and added to the measured 2D covariance. With identity
    2D covariances and no 3D covariances this reduces exactly to `epnp`.
    Scaling all covariances by one positive factor leaves the result
    unchanged.
    """
    pw = _as_points_array(points)
    uv = np.asarray(pixels, dtype=float).reshape(-1, 2)
    if len(pw) < params.min_points:
        raise ValueError(f"EPnPU needs >= {params.min_points} correspondences, got {len(pw)}")
    if len(pw) != len(uv) or len(pw) != len(cov2s):
        raise ValueError("points, pixels and covariances must have equal length")
    covs = _as_cov2_array(cov2s, len(pw))

    if cov3s is not None and any(c is not None for c in cov3s):
        pose0 = _solve_core(pw, uv, cam, None, params)
        pc0 = pw @ pose0.R.T + pose0.t
        total = covs.copy()
        for i, c3 in enumerate(cov3s):
            if c3 is None:
                continue
            c3 = np.asarray(c3, dtype=float)
            Jp = cam.projection_jacobian(pc0[i]) @ pose0.R
            total[i] = total[i] + Jp @ c3 @ Jp.T
        covs = total
    return _solve_core(pw, uv, cam, covs, params)
