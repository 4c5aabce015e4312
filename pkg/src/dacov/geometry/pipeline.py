"""Uncertainty-mode pose-estimation pipeline over a scene.

For each query frame: triangulate every track from the non-query frames with
the ground-truth poses, refine the points (covariance-weighted unless the
mode disables uncertainties), localize the query frame with EPnP or EPnPU,
refine with motion-only bundle adjustment, and report pose errors.
"""

from __future__ import annotations

import logging

import numpy as np

from ..covariance import Cov2
from .motion_ba import motion_only_ba
from .pnp import epnp, epnpu
from .scene_io import FrameResult, PoseReport, Scene
from .triangulate import refine_point_lm, triangulate_dlt
from .types import DegenerateGeometryError, Observation, Track, pose_errors

logger = logging.getLogger(__name__)

MODES = ("none", "iso2d", "full2d", "iso2d+3d", "full2d+3d")
MIN_PNP_POINTS = 6


def _mode_cov(cov: Cov2, mode: str) -> Cov2:
    """Covariance as seen by the chosen uncertainty mode."""
    if mode.startswith("iso"):
        return Cov2.isotropic(0.5 * (cov.s11 + cov.s22))
    return cov


def evaluate_scene(scene: Scene, mode: str = "full2d") -> PoseReport:
    """Run the triangulate / refine / PnP / BA pipeline for each query frame."""
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}; expected one of {MODES}")
    use_uncertainty = mode != "none"
    use_3d = mode.endswith("+3d")
    query_set = set(scene.query_frames)

    report = PoseReport(mode=mode, frames=[])
    for q in scene.query_frames:
        pts3d, covs3d, uvs, covs2d = [], [], [], []
        for tr in scene.tracks:
            query_obs = [o for o in tr.observations if o.cam_index == q]
            ref_obs = [o for o in tr.observations if o.cam_index not in query_set]
            if not query_obs or len(ref_obs) < 2:
                continue
            ref_track = Track(
                observations=[
                    Observation(o.cam_index, o.uv, _mode_cov(o.cov, mode)) for o in ref_obs
                ]
            )
            try:
                init = triangulate_dlt(ref_track, scene.frames, scene.camera)
            except DegenerateGeometryError as exc:
                logger.debug("skipping degenerate track: %s", exc)
                continue
            refined = refine_point_lm(
                init, ref_track, scene.frames, scene.camera, weighted=use_uncertainty
            )
            pts3d.append(refined.point.p)
            covs3d.append(refined.point.cov3 if use_3d else None)
            uvs.append(query_obs[0].uv)
            covs2d.append(_mode_cov(query_obs[0].cov, mode))

        if len(pts3d) < MIN_PNP_POINTS:
            report.frames.append(
                FrameResult(frame=q, status="failed", n_points=len(pts3d),
                            reason=f"only {len(pts3d)} correspondences (need {MIN_PNP_POINTS})")
            )
            continue

        pts = np.asarray(pts3d)
        uv = np.asarray(uvs)
        if use_uncertainty:
            pose0 = epnpu(pts, uv, scene.camera, covs2d, covs3d if use_3d else None)
            ba = motion_only_ba(pose0, pts, uv, scene.camera, cov2s=covs2d,
                                cov3s=covs3d if use_3d else None)
        else:
            pose0 = epnp(pts, uv, scene.camera)
            ba = motion_only_ba(pose0, pts, uv, scene.camera)
        e_rot, e_t = pose_errors(ba.pose, scene.frames[q])
        report.frames.append(
            FrameResult(frame=q, status="ok", e_rot_deg=e_rot, e_t=e_t, n_points=len(pts3d))
        )
    return report
