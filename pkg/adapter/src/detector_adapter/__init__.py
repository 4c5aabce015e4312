"""Detector exports in the dacov interchange formats."""

from .detectors import (
    Detection,
    MissingWeightsError,
    SUPPORTED,
    SuperPointNet,
    run_detector,
)
from .export import DetectorExport, export_detections, load_image_gray

__version__ = "0.1.0"
