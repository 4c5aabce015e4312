"""Detector-agnostic spatial covariances for keypoints, and their use in
matching evaluation, triangulation, PnP and motion-only bundle adjustment."""

from .covariance import (
    Cov2,
    CovarianceParams,
    CovarianceRecord,
    SymMat2,
    WindowSpec,
    batch_covariances,
    gaussian_window,
    invert_tensor,
    isotropic_covariance,
    make_records,
    read_covariance_records,
    structure_tensor,
    uniform_window,
    write_covariance_records,
)
from .scoremap import (
    GradientField,
    Keypoint,
    ScoreMap,
    load_score_map,
    nms_detect,
    read_keypoints_csv,
    save_score_map,
    sobel_gradients,
    write_keypoints_csv,
)

__version__ = "0.1.0"
