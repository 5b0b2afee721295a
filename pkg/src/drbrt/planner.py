"""Multi-query planning through a built tree.

A query Gaussian connects to the tree by attempting a single-hop steering
solve to each of the M nearest nodes; the first success is concatenated with
the pre-computed edge controllers along the branch to the root.  Sequential
composition makes the full plan feasible end to end, which the Monte-Carlo
simulator and the re-validation helpers check empirically and exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from drbrt import programs
from drbrt.conic import DEFAULT_SETTINGS
from drbrt.core import (
    AmbiguitySet,
    ControlLaw,
    GaussianBelief,
    point_ellipsoid,
    propagate_covariance,
    propagate_mean,
    validate_trajectory,
)


def concatenate(a, b):
    """Sequential composition a then b; non-commutative, lengths add."""
    if len(a) == 0:
        return b
    if len(b) == 0:
        return a
    if a.m != b.m or a.n != b.n:
        raise ValueError("control laws have inconsistent dimensions")
    return ControlLaw(
        np.concatenate([a.gains, b.gains], axis=0),
        np.concatenate([a.feedforwards, b.feedforwards], axis=0),
    )


@dataclass
class Plan:
    """Concatenated law from a query distribution to the tree root."""

    query: GaussianBelief
    node_path: list  # connection node id, ..., root id
    segment_laws: list
    goal: AmbiguitySet
    scene: object
    predicted_means: np.ndarray
    predicted_covariances: np.ndarray

    @property
    def law(self):
        law = self.segment_laws[0]
        for seg in self.segment_laws[1:]:
            law = concatenate(law, seg)
        return law

    @property
    def depth(self):
        return len(self.node_path) - 1

    @property
    def predicted_terminal_mean(self):
        return self.predicted_means[-1]

    @property
    def predicted_terminal_covariance(self):
        return self.predicted_covariances[-1]


def find_path(tree, query, M, refs=None, settings=DEFAULT_SETTINGS,
              metric_dims=None):
    """Attempt single-hop connections to the M nearest nodes, nearest first.

    Ties break by node id; the first successful connection wins.  Returns a
    Plan or None.
    """
    if M < 1:
        raise ValueError("M must be >= 1")
    system, scene = tree.system, tree.scene
    if system is None or scene is None:
        raise ValueError("tree carries no system/scene")
    ids, centers = tree.centers()
    if metric_dims is not None:
        dims = list(metric_dims)
        dists = np.linalg.norm(centers[:, dims] - query.mean[dims], axis=1)
    else:
        dists = np.linalg.norm(centers - query.mean, axis=1)
    order = np.lexsort((np.array(ids), dists))
    for rank in order[:M]:
        node = tree.nodes[ids[int(rank)]]
        status, sol = programs.solve_optsteer(
            system, scene, query, node.ambiguity_set, refs, settings=settings
        )
        if sol is None:
            continue
        segments = [sol.law]
        path = tree.path_to_root(node.id)
        for child in path[:-1]:
            segments.append(tree.edge_law(child))
        law = segments[0]
        for seg in segments[1:]:
            law = concatenate(law, seg)
        means = propagate_mean(system, query.mean, law)
        covs = propagate_covariance(system, query.covariance, law)
        return Plan(
            query=query,
            node_path=path,
            segment_laws=segments,
            goal=tree.root.ambiguity_set,
            scene=scene,
            predicted_means=means,
            predicted_covariances=covs,
        )
    return None


def revalidate_plan(system, plan, tol=1e-6):
    """Full-horizon re-validation of the concatenated law against the root goal."""
    return validate_trajectory(
        system, plan.scene, plan.query, plan.law, plan.goal, tol=tol
    )


def plan_to_doc(plan, system=None):
    """Plan archive document; mirrors the tree archive format."""
    from drbrt.brt import FORMAT_VERSION, _mat_doc, _scene_doc

    def law_doc(law):
        return [
            {"K": _mat_doc(K), "v": [float(x) for x in v]} for K, v in law.steps()
        ]

    return {
        "format_version": FORMAT_VERSION,
        "system": None if system is None else {
            "A": _mat_doc(system.A), "B": _mat_doc(system.B), "D": _mat_doc(system.D),
        },
        "scene": _scene_doc(plan.scene),
        "query": {
            "mean": [float(x) for x in plan.query.mean],
            "covariance": _mat_doc(plan.query.covariance),
        },
        "goal": {
            "center": [float(x) for x in plan.goal.mean_set.center],
            "shape": _mat_doc(plan.goal.mean_set.shape),
            "covariance": _mat_doc(plan.goal.covariance),
        },
        "node_path": list(plan.node_path),
        "segments": [law_doc(seg) for seg in plan.segment_laws],
    }


def plan_from_doc(doc):
    from drbrt.brt import FORMAT_VERSION, _mat_load, _scene_load
    from drbrt.core import Ellipsoid, LinearSystem

    if doc.get("format_version") != FORMAT_VERSION:
        raise ValueError(f"unsupported archive format_version {doc.get('format_version')!r}")
    system = None
    if doc.get("system") is not None:
        system = LinearSystem(
            _mat_load(doc["system"]["A"]),
            _mat_load(doc["system"]["B"]),
            _mat_load(doc["system"]["D"]),
        )
    scene = _scene_load(doc["scene"])
    query = GaussianBelief(
        np.array(doc["query"]["mean"], dtype=float),
        _mat_load(doc["query"]["covariance"]),
    )
    goal = AmbiguitySet(
        Ellipsoid(np.array(doc["goal"]["center"], dtype=float), _mat_load(doc["goal"]["shape"])),
        _mat_load(doc["goal"]["covariance"]),
    )
    segments = []
    for seg in doc["segments"]:
        gains = np.array([_mat_load(s["K"]) for s in seg])
        ff = np.array([s["v"] for s in seg], dtype=float)
        segments.append(ControlLaw(gains, ff))
    plan = Plan(
        query=query,
        node_path=list(doc["node_path"]),
        segment_laws=segments,
        goal=goal,
        scene=scene,
        predicted_means=None,
        predicted_covariances=None,
    )
    if system is not None:
        plan.predicted_means = propagate_mean(system, query.mean, plan.law)
        plan.predicted_covariances = propagate_covariance(
            system, query.covariance, plan.law
        )
    return plan, system


@dataclass
class McReport:
    """Empirical rates from closed-loop rollouts of one plan."""

    samples: int
    control_violation_rates: np.ndarray  # (T, #control constraints)
    state_violation_rates: np.ndarray  # (T, #state constraints)
    terminal_membership_rate: float
    empirical_terminal_mean: np.ndarray
    empirical_terminal_covariance: np.ndarray
    step_means: np.ndarray  # (T+1, n) empirical mean trajectory

    def __post_init__(self):
        for rates in (self.control_violation_rates, self.state_violation_rates):
            if rates.size and (rates.min() < 0.0 or rates.max() > 1.0):
                raise ValueError("violation rates must lie in [0, 1]")


def _sample_noise(system, query, T, samples, seed):
    """Counter-based per-sample streams: reports do not depend on scheduling."""
    n = system.n
    x0 = np.empty((samples, n))
    w = np.empty((samples, T, n))
    Lq = np.linalg.cholesky(query.covariance)
    for i in range(samples):
        rng = np.random.Generator(np.random.Philox(key=np.array([seed, i], dtype=np.uint64)))
        draws = rng.standard_normal(n * (T + 1)).reshape(T + 1, n)
        x0[i] = query.mean + Lq @ draws[0]
        w[i] = draws[1:]
    return x0, w


def monte_carlo(system, plan, samples, seed):
    """Simulate the closed loop under the concatenated law.

    Feedback centers on the mean trajectory propagated from the query's
    realized mean, so the expected control equals the feedforward exactly.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    law = plan.law
    scene = plan.scene
    T = len(law)
    mu_hat = propagate_mean(system, plan.query.mean, law)
    x0, w = _sample_noise(system, plan.query, T, samples, seed)
    n_c = len(scene.control_constraints)
    n_s = len(scene.state_constraints)
    control_viol = np.zeros((T, n_c))
    state_viol = np.zeros((T, n_s))
    step_means = np.empty((T + 1, system.n))
    x = x0
    step_means[0] = x.mean(axis=0)
    for k in range(T):
        for j, c in enumerate(scene.state_constraints):
            state_viol[k, j] = np.mean(x @ c.alpha > c.beta)
        u = (x - mu_hat[k]) @ law.gains[k].T + law.feedforwards[k]
        for j, c in enumerate(scene.control_constraints):
            control_viol[k, j] = np.mean(u @ c.alpha > c.beta)
        x = x @ system.A.T + u @ system.B.T + w[:, k] @ system.D.T
        step_means[k + 1] = x.mean(axis=0)
    d = x - plan.goal.mean_set.center
    vals = np.einsum("ij,ij->i", d @ np.linalg.inv(plan.goal.mean_set.shape), d)
    membership = float(np.mean(vals <= 1.0))
    emp_cov = np.cov(x.T) if samples > 1 else np.zeros((system.n, system.n))
    return McReport(
        samples=samples,
        control_violation_rates=control_viol,
        state_violation_rates=state_viol,
        terminal_membership_rate=membership,
        empirical_terminal_mean=x.mean(axis=0),
        empirical_terminal_covariance=np.atleast_2d(emp_cov),
        step_means=step_means,
    )


def simulate_trajectories(system, plan, samples, seed):
    """Closed-loop state and control trajectories, (samples, T+1, n) and (samples, T, m)."""
    law = plan.law
    T = len(law)
    mu_hat = propagate_mean(system, plan.query.mean, law)
    x0, w = _sample_noise(system, plan.query, T, samples, seed)
    xs = np.empty((samples, T + 1, system.n))
    us = np.empty((samples, T, system.m))
    xs[:, 0] = x0
    for k in range(T):
        us[:, k] = (xs[:, k] - mu_hat[k]) @ law.gains[k].T + law.feedforwards[k]
        xs[:, k + 1] = (
            xs[:, k] @ system.A.T + us[:, k] @ system.B.T + w[:, k] @ system.D.T
        )
    return xs, us


def hbrs_member(query, target, h, system, scene, refs=None,
                settings=DEFAULT_SETTINGS):
    """Membership of `query` in the h-hop backward reachable set of `target`.

    One steering feasibility program over an h N horizon, re-validated; the
    target may be an ambiguity set or a plain distribution (exact mean reach).
    """
    if h < 1:
        raise ValueError("h must be >= 1")
    if isinstance(target, GaussianBelief):
        target = AmbiguitySet(point_ellipsoid(target.mean), target.covariance)
    status, sol = programs.solve_optsteer(
        system, scene, query, target, refs,
        settings=settings, horizon=h * scene.horizon,
    )
    return sol is not None


def hbrs_tree_member(query, tree, h, refs=None, settings=DEFAULT_SETTINGS):
    """Union over nodes: reachable iff some node at depth d < h admits the
    query in its (h - d)-hop backward reachable set."""
    if h < 1:
        raise ValueError("h must be >= 1")
    system, scene = tree.system, tree.scene
    for node_id in sorted(tree.nodes):
        node = tree.nodes[node_id]
        if node.depth >= h:
            continue
        if hbrs_member(query, node.ambiguity_set, h - node.depth, system, scene,
                       refs, settings):
            return True
    return False
