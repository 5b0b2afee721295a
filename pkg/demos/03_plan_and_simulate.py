"""Multi-query planning through a tree, then Monte-Carlo validation.

Run demos/02_build_brt.py first (or let this script rebuild the tree).  A
query distribution connects to the nearest reachable node; the concatenated
law is then simulated in closed loop and its empirical violation rates are
compared against the designed tolerances.
"""

import os

import numpy as np

from drbrt.brt import Tree
from drbrt.core import GaussianBelief
from drbrt.planner import find_path, monte_carlo, revalidate_plan

if not os.path.exists("maxellipsoid_tree.json"):
    import subprocess
    import sys

    subprocess.run([sys.executable, os.path.join(os.path.dirname(__file__), "02_build_brt.py")],
                   check=True)

with open("maxellipsoid_tree.json") as fh:
    tree = Tree.from_json(fh.read())
print(f"loaded tree with {len(tree)} nodes")

rng = np.random.default_rng(42)
theta = rng.uniform(0, 2 * np.pi)
r = np.sqrt(rng.uniform(11.0**2, 15.0**2))
query = GaussianBelief(
    np.array([r * np.cos(theta), r * np.sin(theta),
              *rng.uniform(-2.5, 2.5, 2), *rng.uniform(-0.625, 0.625, 2)]),
    0.2 * np.eye(6),
)
print(f"query mean xy = ({query.mean[0]:.1f}, {query.mean[1]:.1f}), "
      f"|xy| = {np.linalg.norm(query.mean[:2]):.1f}")

plan = find_path(tree, query, M=10)
if plan is None:
    print("no path found; try another seed")
    raise SystemExit(1)
print(f"connected to node {plan.node_path[0]} at depth {plan.depth}; "
      f"total law length {len(plan.law)} steps")

report = revalidate_plan(tree.system, plan)
print(f"full-horizon re-validation: {report.summary()}")

mc = monte_carlo(tree.system, plan, samples=10_000, seed=7)
print(f"\nMonte-Carlo over {mc.samples} rollouts:")
predicted = np.random.default_rng(99).multivariate_normal(
    plan.predicted_terminal_mean, plan.predicted_terminal_covariance, size=100_000
)
d = predicted - plan.goal.mean_set.center
inside = np.einsum("ij,ij->i", d @ np.linalg.inv(plan.goal.mean_set.shape), d) <= 1.0
print(f"  terminal state lands in the goal ellipsoid: {mc.terminal_membership_rate:.4f} "
      f"(Gaussian-predicted {inside.mean():.4f}; the guarantee is on the mean)")
worst = mc.control_violation_rates.max() if mc.control_violation_rates.size else 0.0
eps = tree.scene.control_constraints[0].epsilon
bound = eps + 3 * np.sqrt(eps * (1 - eps) / mc.samples)
print(f"  worst per-step control violation: {worst:.4f} "
      f"(tolerance {eps}, binomial 3-sigma bound {bound:.4f})")
print(f"  empirical terminal covariance trace: "
      f"{np.trace(mc.empirical_terminal_covariance):.4f} "
      f"(predicted {np.trace(plan.predicted_terminal_covariance):.4f})")
