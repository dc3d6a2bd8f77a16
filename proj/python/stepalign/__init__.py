"""Drop-DTW alignment, step localization and evaluation."""

from ._core import (
    BACKGROUND,
    DataError,
    Error,
    InvariantError,
    NumericalError,
    brute_force_align,
    diversity_reg,
    drop_dtw,
    dtw,
    framewise_metrics,
    hungarian,
    info_nce,
    kmeans,
    localize_steps,
    match_cost_matrix,
    percentile_drop_cost,
    run_cli,
    zero_shot_localize,
)

__all__ = [
    "BACKGROUND",
    "DataError",
    "Error",
    "InvariantError",
    "NumericalError",
    "brute_force_align",
    "diversity_reg",
    "drop_dtw",
    "dtw",
    "framewise_metrics",
    "hungarian",
    "info_nce",
    "kmeans",
    "localize_steps",
    "match_cost_matrix",
    "percentile_drop_cost",
    "run_cli",
    "zero_shot_localize",
]
