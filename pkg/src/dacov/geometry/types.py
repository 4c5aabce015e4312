"""Core geometric types: pinhole camera, rigid pose, observations, tracks."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..covariance import Cov2


class DegenerateGeometryError(ValueError):
    """Raised when a geometric problem is rank-deficient or unsolvable."""


@dataclass(frozen=True)
class Camera:
    """Pinhole intrinsics in pixels."""

    fx: float
    fy: float
    cx: float
    cy: float

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")

    @property
    def K(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])

    def project(self, p_cam: np.ndarray) -> np.ndarray:
        """Project camera-frame points (..., 3) to pixels (..., 2)."""
        p = np.asarray(p_cam, dtype=float)
        z = p[..., 2]
        return np.stack(
            [self.fx * p[..., 0] / z + self.cx, self.fy * p[..., 1] / z + self.cy], axis=-1
        )

    def projection_jacobian(self, p_cam: np.ndarray) -> np.ndarray:
        """d(pixel)/d(camera-frame point), a 2x3 matrix."""
        x, y, z = np.asarray(p_cam, dtype=float)
        return np.array(
            [[self.fx / z, 0.0, -self.fx * x / z**2], [0.0, self.fy / z, -self.fy * y / z**2]]
        )


@dataclass(frozen=True, eq=False)
class Pose:
    """World-to-camera rigid transform: p_cam = R p_world + t."""

    R: np.ndarray
    t: np.ndarray

    def __post_init__(self):
        R = np.asarray(self.R, dtype=float)
        t = np.asarray(self.t, dtype=float).reshape(3)
        if R.shape != (3, 3):
            raise ValueError(f"R must be 3x3, got {R.shape}")
        if np.linalg.norm(R.T @ R - np.eye(3)) > 1e-9:
            raise ValueError("R is not orthonormal within 1e-9")
        if abs(np.linalg.det(R) - 1.0) > 1e-9:
            raise ValueError("det(R) is not +1 within 1e-9")
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "t", t)

    @classmethod
    def identity(cls) -> "Pose":
        return cls(R=np.eye(3), t=np.zeros(3))

    @classmethod
    def look_at(cls, center: np.ndarray, target: np.ndarray | None = None) -> "Pose":
        """Pose with the optical axis from `center` through `target`."""
        center = np.asarray(center, dtype=float)
        target = np.zeros(3) if target is None else np.asarray(target, dtype=float)
        z = target - center
        norm = np.linalg.norm(z)
        if norm < 1e-12:
            raise ValueError("camera center coincides with the look-at target")
        z = z / norm
        helper = np.array([0.0, 0.0, 1.0]) if abs(z[2]) < 0.9 else np.array([0.0, 1.0, 0.0])
        x = np.cross(helper, z)
        x = x / np.linalg.norm(x)
        y = np.cross(z, x)
        R = np.stack([x, y, z])
        return cls(R=R, t=-R @ center)

    def transform(self, p_world: np.ndarray) -> np.ndarray:
        p = np.asarray(p_world, dtype=float)
        return p @ self.R.T + self.t

    def center(self) -> np.ndarray:
        """Camera center in world coordinates."""
        return -self.R.T @ self.t

    def matrix34(self) -> np.ndarray:
        return np.hstack([self.R, self.t[:, None]])


@dataclass(frozen=True)
class Observation:
    """A 2D measurement of a track in one camera, with its covariance."""

    cam_index: int
    uv: np.ndarray
    cov: Cov2

    def __post_init__(self):
        object.__setattr__(self, "uv", np.asarray(self.uv, dtype=float).reshape(2))


@dataclass(frozen=True)
class Point3:
    """3D point, optionally with a 3x3 covariance from weighted refinement."""

    p: np.ndarray
    cov3: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "p", np.asarray(self.p, dtype=float).reshape(3))
        if self.cov3 is not None:
            c = np.asarray(self.cov3, dtype=float)
            if c.shape != (3, 3):
                raise ValueError(f"cov3 must be 3x3, got {c.shape}")
            if np.linalg.norm(c - c.T) > 1e-9 * max(1.0, np.linalg.norm(c)):
                raise ValueError("cov3 must be symmetric")
            if np.any(np.linalg.eigvalsh(0.5 * (c + c.T)) <= 0):
                raise ValueError("cov3 must be positive definite")
            object.__setattr__(self, "cov3", c)


@dataclass
class Track:
    """Observations of one latent 3D point across distinct cameras."""

    observations: list[Observation]
    point: Point3 | None = None

    def __post_init__(self):
        cams = [o.cam_index for o in self.observations]
        if len(set(cams)) != len(cams):
            raise ValueError(f"track has repeated camera indices: {cams}")


def project_point(cam: Camera, pose: Pose, p_world: np.ndarray) -> np.ndarray:
    return cam.project(pose.transform(p_world))


def point_jacobian(cam: Camera, pose: Pose, p_world: np.ndarray) -> np.ndarray:
    """d(pixel)/d(world point), a 2x3 matrix."""
    return cam.projection_jacobian(pose.transform(p_world)) @ pose.R


def pose_errors(est: Pose, truth: Pose) -> tuple[float, float]:
    """(rotation error in degrees, translation error in length units)."""
    cos_angle = 0.5 * (np.trace(truth.R.T @ est.R) - 1.0)
    e_rot = float(np.degrees(np.arccos(np.clip(cos_angle, -1.0, 1.0))))
    e_t = float(np.linalg.norm(truth.t - est.t))
    return e_rot, e_t
