"""Coverage comparison: ambiguity-set tree vs the two point-node baselines.

A reduced version of the planning experiment: three trees grown from the same
goal, the same annulus of query distributions thrown at each, success counts
and build times reported.  The ambiguity-set tree serves far more queries from
far fewer nodes because each edge certifies a family of distributions.
"""

import numpy as np

from drbrt.brt import TreeConfig, build_tree
from drbrt.core import (
    AmbiguitySet,
    Ellipsoid,
    GaussianBelief,
    PlanningScene,
    control_box_constraints,
    triple_integrator_2d,
)
from drbrt.planner import find_path

system = triple_integrator_2d(dt=0.1)
scene = PlanningScene(
    control_constraints=control_box_constraints(2, beta=25.0, epsilon=0.05),
    horizon=20,
)
goal = AmbiguitySet(Ellipsoid(np.zeros(6), 0.5 * np.eye(6)), 0.1 * np.eye(6))
common = dict(
    system=system, scene=scene, goal=goal, seed=0,
    r_sample=np.array([5.0, 5.0, 2.5, 2.5, 1.25, 1.25]),
    workspace=(np.array([-60.0, -60, -5, -5, -2.5, -2.5]),
               np.array([60.0, 60, 5, 5, 2.5, 2.5])),
)

budgets = {"maxellipsoid": 15, "maxcovar": 40, "randcovar": 40}
trees = {}
for variant, iterations in budgets.items():
    cfg = TreeConfig(variant=variant, iterations=iterations, **common)
    tree = build_tree(cfg)
    trees[variant] = tree
    print(f"{variant:13s}: {len(tree):3d} nodes from {iterations} iterations "
          f"in {tree.metadata['wall_time_s']:5.1f}s")

rng = np.random.default_rng(1000)
queries = []
for _ in range(20):
    theta = rng.uniform(0, 2 * np.pi)
    r = np.sqrt(rng.uniform(11.0**2, 15.0**2))
    queries.append(GaussianBelief(
        np.array([r * np.cos(theta), r * np.sin(theta),
                  *rng.uniform(-2.5, 2.5, 2), *rng.uniform(-0.625, 0.625, 2)]),
        0.2 * np.eye(6),
    ))

print(f"\nattempting {len(queries)} annulus queries against each tree (M=10):")
for variant, tree in trees.items():
    successes = sum(find_path(tree, q, M=10) is not None for q in queries)
    print(f"{variant:13s}: {successes}/{len(queries)} paths found")
