"""Track building from pairwise feature matches via union-find."""

from __future__ import annotations

from typing import Mapping

import numpy as np

from ..covariance import Cov2
from .types import Observation, Track

FeatureKey = tuple[int, int]  # (camera index, feature index)


class _UnionFind:
    def __init__(self):
        self.parent: dict[FeatureKey, FeatureKey] = {}

    def find(self, k: FeatureKey) -> FeatureKey:
        root = self.parent.setdefault(k, k)
        while root != self.parent[root]:
            root = self.parent[root]
        while self.parent[k] != root:  # path compression
            self.parent[k], k = root, self.parent[k]
        return root

    def union(self, a: FeatureKey, b: FeatureKey) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[rb] = ra


def track_components(
    pairwise_matches: list[tuple[int, int, int, int]],
) -> list[list[FeatureKey]]:
    """Connected components of (cam, idx) nodes under match edges.

    Components observing any camera more than once are discarded (conflicting
    matches), and components are returned with their members sorted.
    """
    uf = _UnionFind()
    for cam_a, idx_a, cam_b, idx_b in pairwise_matches:
        uf.union((cam_a, idx_a), (cam_b, idx_b))

    groups: dict[FeatureKey, list[FeatureKey]] = {}
    for key in uf.parent:
        groups.setdefault(uf.find(key), []).append(key)

    components = []
    for members in groups.values():
        cams = [cam for cam, _ in members]
        if len(set(cams)) != len(cams):
            continue
        components.append(sorted(members))
    components.sort()
    return components


def build_tracks(
    pairwise_matches: list[tuple[int, int, int, int]],
    features: Mapping[FeatureKey, tuple[np.ndarray, Cov2]],
) -> list[Track]:
    """Materialize tracks from match components using a feature lookup.

    `features` maps (cam, idx) to (uv, cov). Only components with at least
    two observations survive (single features never form a track here).
    """
    tracks = []
    for comp in track_components(pairwise_matches):
        if len(comp) < 2:
            continue
        obs = []
        for cam, idx in comp:
            uv, cov = features[(cam, idx)]
            obs.append(Observation(cam_index=cam, uv=uv, cov=cov))
        tracks.append(Track(observations=obs))
    return tracks
