"""Export detections in the dacov interchange formats.

Writers here implement the documented schemas directly (NumPy v1 container
with little-endian float32 values, `<file>.meta.json` sidecar, keypoint CSV,
descriptor `.npy`), so the exports double as an independent check of the
format contract.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .detectors import Detection, run_detector


@dataclass
class DetectorExport:
    """Paths and summary of one exported image."""

    image_id: str
    detector_name: str
    score_map_path: Path
    metadata_path: Path
    keypoints_path: Path
    descriptors_path: Path
    n_keypoints: int
    pre_softmax: bool


def load_image_gray(path: str | Path) -> np.ndarray:
    """Grayscale image as float in [0, 1]."""
    with Image.open(path) as img:
        return np.asarray(img.convert("L"), dtype=np.float64) / 255.0


def _write_score_map(det: Detection, image_id: str, detector: str, out_dir: Path) -> tuple[Path, Path]:
    map_path = out_dir / f"{image_id}__{detector}.npy"
    with open(map_path, "wb") as fh:
        np.lib.format.write_array(fh, det.score_map.astype("<f4"), version=(1, 0))
    meta = {
        "height": int(det.score_map.shape[0]),
        "width": int(det.score_map.shape[1]),
        "scale_k": float(det.scale_k),
        "detector_name": detector,
        "value_offset": 0.0,
        "value_scale": 1.0,
        "pre_softmax": bool(det.pre_softmax),
        "image": image_id,
    }
    if det.checkpoint_sha256:
        meta["checkpoint_sha256"] = det.checkpoint_sha256
    meta_path = Path(str(map_path) + ".meta.json")
    meta_path.write_text(json.dumps(meta, indent=2) + "\n")
    return map_path, meta_path


def _write_keypoints(det: Detection, image_id: str, detector: str, out_dir: Path) -> Path:
    path = out_dir / f"{image_id}__{detector}.keypoints.csv"
    lines = ["id,x,y,score"]
    for i, (x, y, s) in enumerate(det.keypoints):
        lines.append(f"{i},{float(x)!r},{float(y)!r},{float(s)!r}")
    path.write_text("\n".join(lines) + "\n")
    return path


def export_detections(
    image_path: str | Path,
    detector_name: str,
    out_dir: str | Path,
    weights: str | Path | None = None,
    **kwargs,
) -> DetectorExport:
    """Run one detector on one image and write all interchange files.

    Keypoint coordinates are in score-map pixels; with the map's `scale_k`
    they stay within the map bounds by construction. Descriptors go to a 2D
    `.npy` with one row per keypoint, aligned with the keypoint CSV ids.
    """
    image_path = Path(image_path)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    image = load_image_gray(image_path)
    det = run_detector(detector_name, image, weights=weights, **kwargs)

    image_id = image_path.stem
    map_path, meta_path = _write_score_map(det, image_id, detector_name, out_dir)
    kp_path = _write_keypoints(det, image_id, detector_name, out_dir)
    desc_path = out_dir / f"{image_id}__{detector_name}.descriptors.npy"
    np.save(desc_path, det.descriptors.astype(np.float32))

    return DetectorExport(
        image_id=image_id,
        detector_name=detector_name,
        score_map_path=map_path,
        metadata_path=meta_path,
        keypoints_path=kp_path,
        descriptors_path=desc_path,
        n_keypoints=len(det.keypoints),
        pre_softmax=det.pre_softmax,
    )
