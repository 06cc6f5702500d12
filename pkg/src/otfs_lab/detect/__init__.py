"""Detector suite: symbol-wise MAP message passing, hybrid MAP/interference
cancellation, cross-domain iterative detection with its MSE predictor, and
linear baselines."""

from otfs_lab.detect.messages import (
    DetectionResult,
    GaussianMessage,
    StateTrace,
    extrinsic,
)
from otfs_lab.detect.linear import (
    TdLmmseSolver,
    lmmse_estimate,
    mmse_baseline,
    mrc_baseline,
)
from otfs_lab.detect.spa import (
    first_iteration_sinr,
    hybrid_map_pic_detect,
    map_spa_detect,
)
from otfs_lab.detect.cross_domain import cross_domain_detect, dd_symbol_detect
from otfs_lab.detect.state_evolution import denoiser_mse, state_evolution

__all__ = [
    "DetectionResult",
    "GaussianMessage",
    "StateTrace",
    "TdLmmseSolver",
    "cross_domain_detect",
    "dd_symbol_detect",
    "denoiser_mse",
    "extrinsic",
    "first_iteration_sinr",
    "hybrid_map_pic_detect",
    "lmmse_estimate",
    "map_spa_detect",
    "mmse_baseline",
    "mrc_baseline",
    "state_evolution",
]
