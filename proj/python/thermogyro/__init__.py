"""Thermal-gyro fusion rotational odometry.

A micro CNN estimates azimuth rotational speed from a short stack of
ultra-low-resolution (24x32) thermal frames and mixes it with the averaged
gyroscope reading through a learned gain. The heavy lifting lives in the
C++ extension; this package re-exports it.
"""

from thermogyro._core import (  # noqa: F401
    SPEED_SCALE_DEG_S,
    __version__,
    adaptive_threshold,
    berhu,
    berhu_grad,
    count_complexity,
    count_params,
    evaluate,
    fuse,
    gain_histogram,
    generate_dataset,
    integrate_angle,
    kfold,
    load_windows,
    median_iqr,
    predict,
    train,
)

__all__ = [
    "SPEED_SCALE_DEG_S",
    "__version__",
    "adaptive_threshold",
    "berhu",
    "berhu_grad",
    "count_complexity",
    "count_params",
    "evaluate",
    "fuse",
    "gain_histogram",
    "generate_dataset",
    "integrate_angle",
    "kfold",
    "load_windows",
    "median_iqr",
    "predict",
    "train",
]
