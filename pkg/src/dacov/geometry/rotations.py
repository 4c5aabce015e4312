"""Rotation-vector helpers for pose optimization."""

from __future__ import annotations

import numpy as np


def hat(w: np.ndarray) -> np.ndarray:
    """Skew-symmetric cross-product matrix of a 3-vector."""
    x, y, z = np.asarray(w, dtype=float)
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def expmap(w: np.ndarray) -> np.ndarray:
    """Rodrigues' formula: rotation matrix of a rotation vector."""
    w = np.asarray(w, dtype=float)
    theta = np.linalg.norm(w)
    if theta < 1e-12:
        # second-order series keeps orthonormality to machine precision here
        W = hat(w)
        return np.eye(3) + W + 0.5 * W @ W
    axis = w / theta
    W = hat(axis)
    return np.eye(3) + np.sin(theta) * W + (1.0 - np.cos(theta)) * W @ W


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    """Uniform random rotation via QR of a Gaussian matrix."""
    q, r = np.linalg.qr(rng.standard_normal((3, 3)))
    q = q @ np.diag(np.sign(np.diag(r)))
    if np.linalg.det(q) < 0:
        q[:, 2] = -q[:, 2]
    return q
