"""Hyperspectral and multispectral image fusion with inter-image variability.

Cubes are float64 numpy arrays shaped (bands, rows, cols).
"""

from ._core import (
    DEFAULT_SUBSPACE_DIM,
    DimensionError,
    FormatError,
    FusionConfig,
    IoError,
    MetricReport,
    NumericalError,
    SceneParams,
    SensorModel,
    SensorParams,
    TrainConfig,
    ValueError,
    VariabilityParams,
    apply_variability,
    bicubic_baseline,
    denoise,
    ergas,
    evaluate,
    fuse,
    make_sensor,
    psnr,
    read_hsc,
    sam,
    simulate_pair,
    synthetic_scene,
    uiqi,
    write_hsc,
)

__all__ = [name for name in dir() if not name.startswith("_")]
