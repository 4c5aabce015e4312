"""Scene files and pose reports.

A scene file is JSON with a shared pinhole camera, ground-truth world-to-
camera frames (R row-major plus t), per-track observations
{cam, u, v, s11, s12, s22} and the indices of the frames to localize.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..covariance import Cov2
from .types import Camera, Observation, Pose, Track


@dataclass
class Scene:
    camera: Camera
    frames: list[Pose]
    tracks: list[Track]
    query_frames: list[int] = field(default_factory=list)

    def __post_init__(self):
        for q in self.query_frames:
            if not (0 <= q < len(self.frames)):
                raise ValueError(f"query frame {q} out of range for {len(self.frames)} frames")


def save_scene(scene: Scene, path: str | Path) -> None:
    payload = {
        "camera": {"fx": scene.camera.fx, "fy": scene.camera.fy, "cx": scene.camera.cx, "cy": scene.camera.cy},
        "frames": [{"R": p.R.ravel().tolist(), "t": p.t.tolist()} for p in scene.frames],
        "query_frames": scene.query_frames,
        "tracks": [
            {
                "observations": [
                    {
                        "cam": o.cam_index,
                        "u": o.uv[0],
                        "v": o.uv[1],
                        "s11": o.cov.s11,
                        "s12": o.cov.s12,
                        "s22": o.cov.s22,
                    }
                    for o in tr.observations
                ]
            }
            for tr in scene.tracks
        ],
    }
    Path(path).write_text(json.dumps(payload, indent=2) + "\n")


def load_scene(path: str | Path) -> Scene:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"scene file not found: {path}")
    raw = json.loads(path.read_text())
    try:
        cam = Camera(**{k: float(raw["camera"][k]) for k in ("fx", "fy", "cx", "cy")})
        frames = [
            Pose(R=np.asarray(f["R"], dtype=float).reshape(3, 3), t=np.asarray(f["t"], dtype=float))
            for f in raw["frames"]
        ]
        tracks = []
        for tr in raw["tracks"]:
            obs = [
                Observation(
                    cam_index=int(o["cam"]),
                    uv=np.array([float(o["u"]), float(o["v"])]),
                    cov=Cov2(s11=float(o["s11"]), s12=float(o["s12"]), s22=float(o["s22"])),
                )
                for o in tr["observations"]
            ]
            tracks.append(Track(observations=obs))
        query = [int(q) for q in raw.get("query_frames", [])]
    except (KeyError, TypeError, ValueError) as exc:
        raise ValueError(f"malformed scene file {path}: {exc}") from exc
    return Scene(camera=cam, frames=frames, tracks=tracks, query_frames=query)


@dataclass
class FrameResult:
    frame: int
    status: str  # "ok" or "failed"
    e_rot_deg: float | None = None
    e_t: float | None = None
    n_points: int = 0
    reason: str | None = None


@dataclass
class PoseReport:
    mode: str
    frames: list[FrameResult]

    @property
    def ok_frames(self) -> list[FrameResult]:
        return [f for f in self.frames if f.status == "ok"]

    def aggregate(self) -> dict:
        ok = self.ok_frames
        return {
            "n_ok": len(ok),
            "n_failed": len(self.frames) - len(ok),
            "mean_e_rot_deg": float(np.mean([f.e_rot_deg for f in ok])) if ok else None,
            "mean_e_t": float(np.mean([f.e_t for f in ok])) if ok else None,
        }

    def cumulative_curve(self, which: str = "rot") -> list[list[float]]:
        """Sorted (error, fraction of frames at or below it) samples."""
        ok = self.ok_frames
        if not ok:
            return []
        vals = sorted(f.e_rot_deg if which == "rot" else f.e_t for f in ok)
        n = len(self.frames)
        return [[float(v), (i + 1) / n] for i, v in enumerate(vals)]

    def to_json(self, path: str | Path) -> None:
        payload = {
            "mode": self.mode,
            "frames": [
                {
                    "frame": f.frame,
                    "status": f.status,
                    "e_rot_deg": f.e_rot_deg,
                    "e_t": f.e_t,
                    "n_points": f.n_points,
                    "reason": f.reason,
                }
                for f in self.frames
            ],
            "aggregate": self.aggregate(),
            "cumulative": {
                "rot_deg": self.cumulative_curve("rot"),
                "t": self.cumulative_curve("t"),
            },
        }
        Path(path).write_text(json.dumps(payload, indent=2) + "\n")
