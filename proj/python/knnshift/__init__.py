"""k-nearest-neighbour matching estimators under covariate shift and for the ATE."""

from ._knnshift import (
    DegenerateFit,
    InvalidArgument,
    KnnShiftError,
    NNIndex,
    NumericalError,
    bias_gamma_factor,
    check_geometry,
    estimate_ate,
    estimate_ate_local_poly,
    estimate_csa,
    estimate_local_poly,
    estimate_weight,
    fit_rate,
    gen_ate,
    gen_setup,
    local_poly_regress,
    min_neighbours,
    multi_indices,
    oracle_expectation,
    run_sweep,
    setup_names,
    unit_ball_volume,
)

__all__ = [
    "DegenerateFit",
    "InvalidArgument",
    "KnnShiftError",
    "NNIndex",
    "NumericalError",
    "bias_gamma_factor",
    "check_geometry",
    "estimate_ate",
    "estimate_ate_local_poly",
    "estimate_csa",
    "estimate_local_poly",
    "estimate_weight",
    "fit_rate",
    "gen_ate",
    "gen_setup",
    "local_poly_regress",
    "min_neighbours",
    "multi_indices",
    "oracle_expectation",
    "run_sweep",
    "setup_names",
    "unit_ball_volume",
]
