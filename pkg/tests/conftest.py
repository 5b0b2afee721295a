import warnings

import numpy as np
import pytest

from drbrt.brt import TreeConfig, build_tree
from drbrt.core import (
    AmbiguitySet,
    Ellipsoid,
    LinearSystem,
    PlanningScene,
    control_box_constraints,
)
from drbrt.programs import LinearizationRefs

# solver near-boundary warnings from intentionally-rejected candidates are noise
warnings.filterwarnings("ignore", message="solver returned")
warnings.filterwarnings("ignore", message="Solution may be inaccurate")


def di2d_system(noise=0.05):
    A = np.array([[1.0, 0.1], [0.0, 1.0]])
    B = np.array([[0.005], [0.1]])
    return LinearSystem(A, B, noise * np.eye(2))


def di2d_scene(beta=8.0, horizon=8):
    return PlanningScene(
        control_constraints=control_box_constraints(1, beta, 0.1), horizon=horizon
    )


def di2d_goal():
    return AmbiguitySet(Ellipsoid(np.zeros(2), 0.4 * np.eye(2)), 0.3 * np.eye(2))


def di2d_refs(goal):
    return LinearizationRefs(0.3 * np.eye(2), 4.0 * np.eye(1), goal.mean_set.shape)


def di2d_tree_config(variant="maxellipsoid", iterations=12, seed=0, **kwargs):
    system = di2d_system()
    goal = di2d_goal()
    defaults = dict(
        system=system,
        scene=di2d_scene(),
        goal=goal,
        variant=variant,
        iterations=iterations,
        seed=seed,
        r_sample=np.array([1.5, 0.8]),
        sigma_q=0.05 * np.eye(2),
        refs=di2d_refs(goal),
        workspace=(np.array([-12.0, -3.0]), np.array([12.0, 3.0])),
        position_dims=(0,),
    )
    defaults.update(kwargs)
    return TreeConfig(**defaults)


@pytest.fixture(scope="session")
def small_tree():
    return build_tree(di2d_tree_config())


@pytest.fixture(scope="session")
def small_point_tree():
    return build_tree(di2d_tree_config(variant="maxcovar", iterations=12, seed=1))
