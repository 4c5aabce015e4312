"""Uncertainty-aware multi-view estimation."""

from .motion_ba import RefinedPose, ba_jacobian, ba_residuals, motion_only_ba
from .pipeline import MODES, evaluate_scene
from .pnp import PnpParams, epnp, epnpu
from .scene_io import FrameResult, PoseReport, Scene, load_scene, save_scene
from .tracks import build_tracks, track_components
from .triangulate import LmParams, RefinedPoint, refine_point_lm, triangulate_dlt
from .types import (
    Camera,
    DegenerateGeometryError,
    Observation,
    Point3,
    Pose,
    Track,
    point_jacobian,
    pose_errors,
    project_point,
)

__all__ = [
    "Camera",
    "DegenerateGeometryError",
    "FrameResult",
    "LmParams",
    "MODES",
    "Observation",
    "PnpParams",
    "Point3",
    "Pose",
    "PoseReport",
    "RefinedPoint",
    "RefinedPose",
    "Scene",
    "Track",
    "ba_jacobian",
    "ba_residuals",
    "build_tracks",
    "epnp",
    "epnpu",
    "evaluate_scene",
    "load_scene",
    "motion_only_ba",
    "point_jacobian",
    "pose_errors",
    "project_point",
    "refine_point_lm",
    "save_scene",
    "track_components",
    "triangulate_dlt",
]
