"""Detector backends.

`superpoint` is a native port of the compact corner detector-descriptor
network; it needs a checkpoint file in the standard released layout and
exports its score map *prior to the channel-wise softmax* (the post-softmax
reshuffle alters patterns across cell boundaries, which matters to anyone
estimating spatial uncertainty from the map). `dog` and `gradmag` are
weight-free classical baselines that exercise the full export path without
any checkpoint.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F
from scipy import ndimage
from torch import nn


class MissingWeightsError(RuntimeError):
    """A recognized detector cannot run because its weights are unavailable."""


WEIGHT_FREE = ("dog", "gradmag")
NEEDS_WEIGHTS = ("superpoint",)
RECOGNIZED_UNPORTED = {
    "d2net": "D2Net needs its VGG-based network port plus the released caffe-style weights",
    "r2d2": "R2D2 needs its L2-Net style network port plus the released weights",
    "keynet": "Key.Net needs its handcrafted+learned filter bank port plus the released weights",
}
SUPPORTED = WEIGHT_FREE + NEEDS_WEIGHTS


@dataclass
class Detection:
    """Raw detector output before export."""

    score_map: np.ndarray       # exported map (pre-softmax for superpoint)
    scale_k: float
    pre_softmax: bool
    keypoints: np.ndarray       # (n, 3) columns x, y, score in image coordinates
    descriptors: np.ndarray     # (n, d)
    checkpoint_sha256: str | None = None


def local_max_keypoints(
    score: np.ndarray, nms_radius: int, threshold: float, max_keypoints: int
) -> np.ndarray:
    """Greedy-free local maxima: strict window maxima above threshold."""
    footprint = 2 * nms_radius + 1
    is_max = score == ndimage.maximum_filter(score, size=footprint, mode="nearest")
    ys, xs = np.nonzero(is_max & (score >= threshold))
    vals = score[ys, xs]
    order = np.argsort(-vals, kind="stable")[:max_keypoints]
    return np.column_stack([xs[order], ys[order], vals[order]]).astype(np.float64)


def patch_descriptors(image: np.ndarray, keypoints: np.ndarray, radius: int = 4) -> np.ndarray:
    """Flattened, mean-removed, L2-normalized intensity patches."""
    smoothed = ndimage.gaussian_filter(image, 1.0)
    h, w = image.shape
    descs = []
    for x, y, _ in keypoints:
        r, c = int(round(y)), int(round(x))
        r0, c0 = max(0, r - radius), max(0, c - radius)
        r1, c1 = min(h, r + radius + 1), min(w, c + radius + 1)
        patch = np.zeros((2 * radius + 1, 2 * radius + 1))
        patch[r0 - r + radius : r1 - r + radius, c0 - c + radius : c1 - c + radius] = smoothed[r0:r1, c0:c1]
        v = patch.ravel() - patch.mean()
        n = np.linalg.norm(v)
        descs.append(v / n if n > 1e-12 else v)
    return np.array(descs) if descs else np.zeros((0, (2 * radius + 1) ** 2))


class SuperPointNet(nn.Module):
    """VGG-style encoder with detector and descriptor heads.

    Layer names follow the released checkpoint layout, so published weights
    load directly with `load_state_dict`.
    """

    def __init__(self):
        super().__init__()
        self.relu = nn.ReLU(inplace=True)
        self.pool = nn.MaxPool2d(kernel_size=2, stride=2)
        c1, c2, c3, c4, c5, d1 = 64, 64, 128, 128, 256, 256
        self.conv1a = nn.Conv2d(1, c1, 3, 1, 1)
        self.conv1b = nn.Conv2d(c1, c1, 3, 1, 1)
        self.conv2a = nn.Conv2d(c1, c2, 3, 1, 1)
        self.conv2b = nn.Conv2d(c2, c2, 3, 1, 1)
        self.conv3a = nn.Conv2d(c2, c3, 3, 1, 1)
        self.conv3b = nn.Conv2d(c3, c3, 3, 1, 1)
        self.conv4a = nn.Conv2d(c3, c4, 3, 1, 1)
        self.conv4b = nn.Conv2d(c4, c4, 3, 1, 1)
        self.convPa = nn.Conv2d(c4, c5, 3, 1, 1)
        self.convPb = nn.Conv2d(c5, 65, 1, 1, 0)
        self.convDa = nn.Conv2d(c4, c5, 3, 1, 1)
        self.convDb = nn.Conv2d(c5, d1, 1, 1, 0)

    def forward(self, x: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        x = self.relu(self.conv1a(x))
        x = self.relu(self.conv1b(x))
        x = self.pool(x)
        x = self.relu(self.conv2a(x))
        x = self.relu(self.conv2b(x))
        x = self.pool(x)
        x = self.relu(self.conv3a(x))
        x = self.relu(self.conv3b(x))
        x = self.pool(x)
        x = self.relu(self.conv4a(x))
        x = self.relu(self.conv4b(x))
        semi = self.convPb(self.relu(self.convPa(x)))
        desc = self.convDb(self.relu(self.convDa(x)))
        return semi, desc


def _depth_to_space(cells: np.ndarray, cell: int = 8) -> np.ndarray:
    """(c*c, Hc, Wc) cell stack to the (Hc*c, Wc*c) full-resolution grid."""
    _, hc, wc = cells.shape
    grid = cells.reshape(cell, cell, hc, wc)
    return grid.transpose(2, 0, 3, 1).reshape(hc * cell, wc * cell)


def run_superpoint(
    image: np.ndarray,
    weights: str | Path,
    nms_radius: int = 4,
    threshold: float = 0.015,
    max_keypoints: int = 1000,
) -> Detection:
    """Forward pass plus standard decoding; exports the pre-softmax map.

    The image is cropped to multiples of the 8-pixel cell size. Keypoints are
    detected on the softmaxed probability map (the network's usual decision
    rule); the exported score map is the pre-softmax cell stack rearranged to
    full resolution, flagged `pre_softmax` in the metadata.
    """
    weights = Path(weights)
    if not weights.exists():
        raise MissingWeightsError(
            f"superpoint checkpoint not found at {weights}; download the released "
            "weights or pass --weights"
        )
    net = SuperPointNet()
    state = torch.load(weights, map_location="cpu", weights_only=True)
    net.load_state_dict(state)
    net.eval()

    h8, w8 = (image.shape[0] // 8) * 8, (image.shape[1] // 8) * 8
    image = image[:h8, :w8]
    with torch.no_grad():
        tensor = torch.from_numpy(image.astype(np.float32))[None, None]
        semi, coarse = net(tensor)
    semi = semi[0].numpy()
    pre_softmax = _depth_to_space(semi[:64])

    dense = np.exp(semi - semi.max(axis=0, keepdims=True))
    dense = dense / dense.sum(axis=0, keepdims=True)
    probs = _depth_to_space(dense[:64])

    keypoints = local_max_keypoints(probs, nms_radius, threshold, max_keypoints)

    if len(keypoints):
        coords = torch.from_numpy(keypoints[:, :2].astype(np.float32))
        norm = torch.stack(
            [coords[:, 0] / (w8 - 1) * 2 - 1, coords[:, 1] / (h8 - 1) * 2 - 1], dim=1
        )
        sampled = F.grid_sample(
            coarse, norm[None, :, None, :], mode="bilinear", align_corners=True
        )[0, :, :, 0].T
        descs = F.normalize(sampled, dim=1).numpy().astype(np.float64)
    else:
        descs = np.zeros((0, coarse.shape[1]))

    return Detection(
        score_map=pre_softmax.astype(np.float64),
        scale_k=1.0,
        pre_softmax=True,
        keypoints=keypoints,
        descriptors=descs,
        checkpoint_sha256=hashlib.sha256(weights.read_bytes()).hexdigest(),
    )


def run_dog(
    image: np.ndarray, nms_radius: int = 4, threshold: float = 0.01, max_keypoints: int = 1000
) -> Detection:
    """Difference-of-Gaussians blob score; no weights needed."""
    score = ndimage.gaussian_filter(image, 1.0) - ndimage.gaussian_filter(image, 2.0)
    keypoints = local_max_keypoints(score, nms_radius, threshold, max_keypoints)
    return Detection(
        score_map=score.astype(np.float64),
        scale_k=1.0,
        pre_softmax=False,
        keypoints=keypoints,
        descriptors=patch_descriptors(image, keypoints),
    )


def run_gradmag(
    image: np.ndarray, nms_radius: int = 4, threshold: float = 0.05, max_keypoints: int = 1000
) -> Detection:
    """Gradient-magnitude score; no weights needed."""
    gx = ndimage.sobel(image, axis=1, mode="nearest")
    gy = ndimage.sobel(image, axis=0, mode="nearest")
    score = np.hypot(gx, gy)
    keypoints = local_max_keypoints(score, nms_radius, threshold, max_keypoints)
    return Detection(
        score_map=score.astype(np.float64),
        scale_k=1.0,
        pre_softmax=False,
        keypoints=keypoints,
        descriptors=patch_descriptors(image, keypoints),
    )


def run_detector(name: str, image: np.ndarray, weights: str | Path | None = None, **kwargs) -> Detection:
    if name == "superpoint":
        if weights is None:
            raise MissingWeightsError("superpoint needs a checkpoint; pass --weights PATH")
        return run_superpoint(image, weights, **kwargs)
    if name == "dog":
        return run_dog(image, **kwargs)
    if name == "gradmag":
        return run_gradmag(image, **kwargs)
    if name in RECOGNIZED_UNPORTED:
        raise MissingWeightsError(f"detector {name!r} is recognized but not runnable here: "
                                  f"{RECOGNIZED_UNPORTED[name]}")
    raise ValueError(f"unsupported detector {name!r}; supported: {', '.join(SUPPORTED)}")
