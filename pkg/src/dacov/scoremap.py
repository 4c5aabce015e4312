"""Score maps: file I/O, spatial gradients and keypoint detection.

A score map is the dense per-pixel "interest" grid regressed by a feature
detector. This module is detector-agnostic: it loads maps from disk (or
receives synthetic ones), differentiates them with Sobel filters and extracts
keypoints by non-maximum suppression.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy import ndimage

FORMATS = ("npy", "pgm16", "raw_f32")

# 3x3 Sobel pair, applied by correlation. SOBEL_Y is the transpose of SOBEL_X.
SOBEL_X = np.array([[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]])
SOBEL_Y = SOBEL_X.T.copy()


@dataclass(frozen=True)
class ScoreMap:
    """Dense 2D grid of detector scores.

    `scale_k` relates the map to its source image: the map has resolution
    k*H_img x k*W_img, so a map coordinate maps to image coordinate x / k.
    """

    values: np.ndarray
    scale_k: float = 1.0
    detector_name: str = "unknown"

    def __post_init__(self):
        v = np.asarray(self.values)
        if v.ndim != 2:
            raise ValueError(f"score map must be 2D, got shape {v.shape}")
        if v.shape[0] < 3 or v.shape[1] < 3:
            raise ValueError(f"score map must be at least 3x3, got {v.shape}")
        bad = np.flatnonzero(~np.isfinite(v))
        if bad.size:
            raise ValueError(f"non-finite score at flat index {bad[0]}")
        if not (self.scale_k > 0):
            raise ValueError(f"scale_k must be positive, got {self.scale_k}")
        object.__setattr__(self, "values", v)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    def to_image_xy(self, x: float, y: float) -> tuple[float, float]:
        """Map-pixel coordinate to source-image coordinate."""
        return x / self.scale_k, y / self.scale_k


@dataclass(frozen=True)
class GradientField:
    """Per-pixel spatial gradients of a score map (same grid)."""

    gx: np.ndarray
    gy: np.ndarray

    def __post_init__(self):
        gx, gy = np.asarray(self.gx), np.asarray(self.gy)
        if gx.shape != gy.shape or gx.ndim != 2:
            raise ValueError(f"gradient grids must be equal 2D shapes, got {gx.shape} vs {gy.shape}")
        if not (np.isfinite(gx).all() and np.isfinite(gy).all()):
            raise ValueError("non-finite gradient value")


@dataclass(frozen=True)
class Keypoint:
    """Detected 2D location on a score map (x = column, y = row)."""

    x: float
    y: float
    score: float
    id: int = 0


@dataclass
class MapMetadata:
    """Sidecar metadata stored next to a score-map file."""

    height: int
    width: int
    scale_k: float = 1.0
    detector_name: str = "unknown"
    value_offset: float = 0.0
    value_scale: float = 1.0
    extra: dict = field(default_factory=dict)


def sidecar_path(path: str | Path) -> Path:
    return Path(str(path) + ".meta.json")


def _read_sidecar(path: Path) -> MapMetadata | None:
    sp = sidecar_path(path)
    if not sp.exists():
        return None
    raw = json.loads(sp.read_text())
    known = {"height", "width", "scale_k", "detector_name", "value_offset", "value_scale"}
    extra = {k: v for k, v in raw.items() if k not in known}
    return MapMetadata(
        height=int(raw["height"]),
        width=int(raw["width"]),
        scale_k=float(raw.get("scale_k", 1.0)),
        detector_name=str(raw.get("detector_name", "unknown")),
        value_offset=float(raw.get("value_offset", 0.0)),
        value_scale=float(raw.get("value_scale", 1.0)),
        extra=extra,
    )


def _write_sidecar(path: Path, meta: MapMetadata) -> None:
    payload = {
        "height": meta.height,
        "width": meta.width,
        "scale_k": meta.scale_k,
        "detector_name": meta.detector_name,
        "value_offset": meta.value_offset,
        "value_scale": meta.value_scale,
    }
    payload.update(meta.extra)
    sidecar_path(path).write_text(json.dumps(payload, indent=2) + "\n")


def infer_format(path: str | Path) -> str:
    suffix = Path(path).suffix.lower()
    if suffix == ".npy":
        return "npy"
    if suffix == ".pgm":
        return "pgm16"
    return "raw_f32"


def load_score_map(path: str | Path, fmt: str | None = None) -> ScoreMap:
    """Load a score map from disk.

    Supported formats: `npy` (NumPy container, 2D), `pgm16` (16-bit binary
    PGM with affine value scaling from the sidecar) and `raw_f32` (two
    little-endian uint32 dims followed by height*width little-endian float32
    values, row-major). A `<file>.meta.json` sidecar, when present, supplies
    scale_k and the pgm16 value scaling; scale_k defaults to 1.

    Raises:
        FileNotFoundError: missing file.
        ValueError: non-2D payload, truncated file, or non-finite values
            (reported with the offending flat index).
    """
    path = Path(path)
    if fmt is None:
        fmt = infer_format(path)
    if fmt not in FORMATS:
        raise ValueError(f"unknown score-map format {fmt!r}; expected one of {FORMATS}")
    if not path.exists():
        raise FileNotFoundError(f"score-map file not found: {path}")
    meta = _read_sidecar(path)

    if fmt == "npy":
        values = np.load(path)
        if values.ndim != 2:
            raise ValueError(f"expected a 2D array in {path}, got shape {values.shape}")
    elif fmt == "raw_f32":
        blob = path.read_bytes()
        if len(blob) < 8:
            raise ValueError(f"raw_f32 file too short: {path}")
        h, w = np.frombuffer(blob[:8], dtype="<u4")
        expected = 8 + 4 * int(h) * int(w)
        if len(blob) != expected:
            raise ValueError(f"raw_f32 payload size mismatch in {path}: got {len(blob)} bytes, expected {expected}")
        values = np.frombuffer(blob[8:], dtype="<f4").reshape(int(h), int(w))
    else:  # pgm16
        raw = _read_pgm16(path)
        offset = meta.value_offset if meta else 0.0
        scale = meta.value_scale if meta else 1.0
        values = offset + scale * raw.astype(np.float64)

    bad = np.flatnonzero(~np.isfinite(values))
    if bad.size:
        raise ValueError(f"non-finite score at flat index {bad[0]} in {path}")
    scale_k = meta.scale_k if meta else 1.0
    detector = meta.detector_name if meta else "unknown"
    if meta is not None and (meta.height, meta.width) != values.shape:
        raise ValueError(
            f"sidecar dims {(meta.height, meta.width)} disagree with payload {values.shape} for {path}"
        )
    return ScoreMap(values=values, scale_k=scale_k, detector_name=detector)


def save_score_map(
    score_map: ScoreMap,
    path: str | Path,
    fmt: str | None = None,
    value_offset: float | None = None,
    value_scale: float | None = None,
) -> None:
    """Write a score map plus its metadata sidecar.

    npy and raw_f32 store little-endian float32 and round-trip bit-exactly
    for float32-valued maps. pgm16 stores uint16 after the affine mapping
    raw = (value - value_offset) / value_scale; by default the mapping is
    fitted to the value range, and an explicit mapping that sends any value
    outside [0, 65535] is an error.
    """
    path = Path(path)
    if fmt is None:
        fmt = infer_format(path)
    if fmt not in FORMATS:
        raise ValueError(f"unknown score-map format {fmt!r}; expected one of {FORMATS}")
    values = score_map.values
    meta = MapMetadata(
        height=score_map.height,
        width=score_map.width,
        scale_k=score_map.scale_k,
        detector_name=score_map.detector_name,
    )

    if fmt == "npy":
        with open(path, "wb") as fh:
            np.lib.format.write_array(fh, values.astype("<f4"), version=(1, 0))
    elif fmt == "raw_f32":
        h = np.asarray(values.shape, dtype="<u4")
        with open(path, "wb") as fh:
            fh.write(h.tobytes())
            fh.write(values.astype("<f4").tobytes())
    else:  # pgm16
        if value_offset is None or value_scale is None:
            lo, hi = float(values.min()), float(values.max())
            value_offset = lo
            value_scale = (hi - lo) / 65535.0 if hi > lo else 1.0
        raw = (values - value_offset) / value_scale
        if raw.min() < -0.5 or raw.max() > 65535.5:
            raise ValueError(
                f"pgm16 values outside [0, 65535] after declared scaling "
                f"(offset={value_offset}, scale={value_scale})"
            )
        meta.value_offset = float(value_offset)
        meta.value_scale = float(value_scale)
        _write_pgm16(path, np.clip(np.rint(raw), 0, 65535).astype(">u2"))
    _write_sidecar(path, meta)


def _read_pgm16(path: Path) -> np.ndarray:
    blob = path.read_bytes()
    # binary PGM header: magic, width, height, maxval, separated by whitespace
    m = re.match(rb"P5\s+(?:#.*\s+)?(\d+)\s+(\d+)\s+(\d+)\s", blob)
    if m is None:
        raise ValueError(f"not a binary PGM file: {path}")
    w, h, maxval = (int(g) for g in m.groups())
    if maxval != 65535:
        raise ValueError(f"pgm16 requires maxval 65535, got {maxval} in {path}")
    data = np.frombuffer(blob[m.end():], dtype=">u2")
    if data.size != h * w:
        raise ValueError(f"PGM payload size mismatch in {path}")
    return data.reshape(h, w)


def _write_pgm16(path: Path, raw: np.ndarray) -> None:
    header = f"P5\n{raw.shape[1]} {raw.shape[0]}\n65535\n".encode("ascii")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(raw.astype(">u2").tobytes())


def read_keypoints_csv(path: str | Path) -> list[Keypoint]:
    """Read a plain keypoint CSV with header id,x,y,score."""
    import csv

    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or tuple(reader.fieldnames) != ("id", "x", "y", "score"):
            raise ValueError(f"bad keypoint header in {path}: {reader.fieldnames}")
        return [
            Keypoint(id=int(r["id"]), x=float(r["x"]), y=float(r["y"]), score=float(r["score"]))
            for r in reader
        ]


def write_keypoints_csv(keypoints: list[Keypoint], path: str | Path) -> None:
    import csv

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(("id", "x", "y", "score"))
        for k in keypoints:
            writer.writerow([int(k.id), repr(float(k.x)), repr(float(k.y)), repr(float(k.score))])


def sobel_gradients(score_map: ScoreMap) -> GradientField:
    """3x3 Sobel responses of the score map with replicate border padding.

    On a unit horizontal ramp the interior x-response is 8 (the kernel's
    one-sided weight times the two-pixel spacing).
    """
    v = score_map.values.astype(np.float64)
    gx = ndimage.correlate(v, SOBEL_X, mode="nearest")
    gy = ndimage.correlate(v, SOBEL_Y, mode="nearest")
    return GradientField(gx=gx, gy=gy)


def nms_detect(
    score_map: ScoreMap,
    nms_radius: int = 4,
    max_keypoints: int | None = None,
    min_score: float = -np.inf,
) -> list[Keypoint]:
    """Detect keypoints as local maxima of the score map.

    A pixel is kept iff its score beats every other pixel within Chebyshev
    distance `nms_radius`, where equal scores are beaten by the earlier pixel
    in row-major order, and at least one neighbor is beaten strictly (fully
    flat neighborhoods yield nothing). This is deterministic and guarantees
    any two returned keypoints are more than `nms_radius` apart in Chebyshev
    distance. Keypoints are sorted by descending score (row-major on ties)
    and truncated to `max_keypoints`.
    """
    if nms_radius < 1:
        raise ValueError(f"nms_radius must be >= 1, got {nms_radius}")
    v = score_map.values
    h, w = v.shape
    size = 2 * nms_radius + 1
    local_max = ndimage.maximum_filter(v, size=size, mode="nearest")
    cand_rows, cand_cols = np.nonzero((v == local_max) & (v >= min_score))

    kept: list[tuple[float, int, int]] = []
    for r, c in zip(cand_rows.tolist(), cand_cols.tolist()):
        s = v[r, c]
        r0, r1 = max(0, r - nms_radius), min(h, r + nms_radius + 1)
        c0, c1 = max(0, c - nms_radius), min(w, c + nms_radius + 1)
        window = v[r0:r1, c0:c1]
        ties_r, ties_c = np.nonzero(window == s)
        if ties_r.size == window.size:  # fully flat neighborhood
            continue
        # row-major-first pixel attaining the window max must be this one
        flat = (r0 + ties_r) * w + (c0 + ties_c)
        if flat.min() == r * w + c:
            kept.append((float(s), r, c))

    kept.sort(key=lambda t: (-t[0], t[1] * w + t[2]))
    if max_keypoints is not None:
        kept = kept[:max_keypoints]
    return [Keypoint(x=float(c), y=float(r), score=s, id=i) for i, (s, r, c) in enumerate(kept)]
