"""Distributionally robust covariance steering and backward reachable trees."""

from drbrt.core import (
    AmbiguitySet,
    ControlLaw,
    Ellipsoid,
    FeasibilityReport,
    GaussianBelief,
    HalfspaceChance,
    LinearSystem,
    PlanningScene,
    chance_margin,
    control_box_constraints,
    ellipsoid_contains,
    point_ellipsoid,
    propagate_covariance,
    propagate_ellipsoid,
    propagate_mean,
    robust_sup_linear,
    triple_integrator_2d,
    validate_ambiguity_trajectory,
    validate_trajectory,
)

__version__ = "0.1.0"
