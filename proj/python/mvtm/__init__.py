"""Multivariate Bayesian transport maps for spatial fields."""

from ._mvtm import (
    FittedMap,
    InputError,
    NumericalError,
    OrderingPlan,
    build_plan,
    component_loglik,
    conditioning_size,
    fit,
    maxmin_order,
    prior_params,
    recover_positions,
    simulate,
)

__all__ = [
    "FittedMap",
    "InputError",
    "NumericalError",
    "OrderingPlan",
    "build_plan",
    "component_loglik",
    "conditioning_size",
    "fit",
    "maxmin_order",
    "prior_params",
    "recover_positions",
    "simulate",
]
