"""Backward reachable tree construction and archive format.

The tree is rooted at the goal ambiguity set and grown backwards: every
accepted node stores the payload (mean-set center, shape, covariance) together
with the control sequence certifying the maneuver to its parent.  Three
expansion variants are provided: the ambiguity-set builder (maximal-volume
mean sets, optionally refined by a maximal-covariance pass), the
maximal-covariance point-node baseline, and the random-covariance baseline.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field

import numpy as np

from drbrt import programs
from drbrt.conic import SolverSettings
from drbrt.core import (
    AmbiguitySet,
    ControlLaw,
    Ellipsoid,
    GaussianBelief,
    HalfspaceChance,
    LinearSystem,
    PlanningScene,
    is_point_ellipsoid,
    point_ellipsoid,
    project_pd,
    validate_ambiguity_trajectory,
    validate_trajectory,
)

FORMAT_VERSION = 1


@dataclass
class TreeNode:
    """Payload (center, shape, covariance) plus tree bookkeeping."""

    id: int
    center: np.ndarray
    shape: np.ndarray
    covariance: np.ndarray
    parent: int | None = None
    law_to_parent: ControlLaw | None = None
    children: list = field(default_factory=list)
    depth: int = 0

    @property
    def ambiguity_set(self):
        return AmbiguitySet(Ellipsoid(self.center, self.shape), self.covariance)

    @property
    def is_point(self):
        return is_point_ellipsoid(Ellipsoid(self.center, self.shape))


class Tree:
    """Rooted directed tree of ambiguity-set nodes with control-law edges."""

    def __init__(self, goal, system=None, scene=None):
        self.goal = goal
        self.system = system
        self.scene = scene
        self.nodes = {}
        self.metadata = {}

    @property
    def root(self):
        return self.nodes[0]

    def __len__(self):
        return len(self.nodes)

    def add_node(self, center, shape, covariance, parent, law):
        node_id = len(self.nodes)
        parent_node = self.nodes[parent]
        node = TreeNode(
            id=node_id,
            center=np.asarray(center, dtype=float).reshape(-1),
            shape=np.asarray(shape, dtype=float),
            covariance=np.asarray(covariance, dtype=float),
            parent=parent,
            law_to_parent=law,
            depth=parent_node.depth + 1,
        )
        self.nodes[node_id] = node
        parent_node.children.append(node_id)
        return node_id

    def edge_law(self, child_id):
        """Edge keys mirror parent pointers by construction."""
        return self.nodes[child_id].law_to_parent

    def path_to_root(self, node_id):
        path = [node_id]
        while self.nodes[path[-1]].parent is not None:
            path.append(self.nodes[path[-1]].parent)
        return path

    def centers(self):
        ids = sorted(self.nodes)
        return ids, np.array([self.nodes[i].center for i in ids])

    # ------------------------------------------------------------ validation

    def validate_edges(self, tol=1e-6):
        """Re-validate the certificate of every edge from scratch.

        Point nodes validate as distributions, ambiguity nodes robustly.
        Returns a list of (node id, FeasibilityReport).
        """
        if self.system is None or self.scene is None:
            raise ValueError("tree carries no system/scene to validate against")
        out = []
        for node_id in sorted(self.nodes):
            node = self.nodes[node_id]
            if node.parent is None:
                continue
            parent = self.nodes[node.parent]
            goal = parent.ambiguity_set
            if node.is_point:
                report = validate_trajectory(
                    self.system, self.scene,
                    GaussianBelief(node.center, node.covariance),
                    node.law_to_parent, goal, tol=tol,
                )
            else:
                report = validate_ambiguity_trajectory(
                    self.system, self.scene, node.ambiguity_set,
                    node.law_to_parent, goal, tol=tol,
                )
            out.append((node_id, report))
        return out

    # --------------------------------------------------------- serialization

    def to_doc(self, record_time=False):
        nodes = []
        for node_id in sorted(self.nodes):
            node = self.nodes[node_id]
            law = None
            if node.law_to_parent is not None:
                law = [
                    {"K": _mat_doc(K), "v": [float(x) for x in v]}
                    for K, v in node.law_to_parent.steps()
                ]
            nodes.append(
                {
                    "id": node_id,
                    "center": [float(x) for x in node.center],
                    "shape": _mat_doc(node.shape),
                    "covariance": _mat_doc(node.covariance),
                    "parent": node.parent,
                    "depth": node.depth,
                    "law": law,
                }
            )
        meta = {k: v for k, v in self.metadata.items() if k != "wall_time_s"}
        # volatile timing breaks byte-reproducibility; opt in explicitly
        meta["wall_time_s"] = self.metadata.get("wall_time_s") if record_time else None
        return {
            "format_version": FORMAT_VERSION,
            "system": None if self.system is None else {
                "A": _mat_doc(self.system.A),
                "B": _mat_doc(self.system.B),
                "D": _mat_doc(self.system.D),
            },
            "goal": {
                "center": [float(x) for x in self.goal.mean_set.center],
                "shape": _mat_doc(self.goal.mean_set.shape),
                "covariance": _mat_doc(self.goal.covariance),
            },
            "scene": None if self.scene is None else _scene_doc(self.scene),
            "nodes": nodes,
            "metadata": meta,
        }

    def to_json(self, record_time=False):
        return json.dumps(self.to_doc(record_time=record_time), indent=1, sort_keys=True) + "\n"

    @staticmethod
    def from_doc(doc):
        if doc.get("format_version") != FORMAT_VERSION:
            raise ValueError(f"unsupported archive format_version {doc.get('format_version')!r}")
        goal = AmbiguitySet(
            Ellipsoid(np.array(doc["goal"]["center"], dtype=float), _mat_load(doc["goal"]["shape"])),
            _mat_load(doc["goal"]["covariance"]),
        )
        system = None
        if doc.get("system") is not None:
            system = LinearSystem(
                _mat_load(doc["system"]["A"]),
                _mat_load(doc["system"]["B"]),
                _mat_load(doc["system"]["D"]),
            )
        scene = None if doc.get("scene") is None else _scene_load(doc["scene"])
        tree = Tree(goal, system=system, scene=scene)
        for rec in sorted(doc["nodes"], key=lambda r: r["id"]):
            law = None
            if rec["law"] is not None:
                gains = np.array([_mat_load(s["K"]) for s in rec["law"]])
                ff = np.array([s["v"] for s in rec["law"]], dtype=float)
                law = ControlLaw(gains, ff)
            node = TreeNode(
                id=rec["id"],
                center=np.array(rec["center"], dtype=float),
                shape=_mat_load(rec["shape"]),
                covariance=_mat_load(rec["covariance"]),
                parent=rec["parent"],
                law_to_parent=law,
                depth=rec["depth"],
            )
            tree.nodes[node.id] = node
            if node.parent is not None:
                tree.nodes[node.parent].children.append(node.id)
        tree.metadata = dict(doc.get("metadata", {}))
        return tree

    @staticmethod
    def from_json(text):
        return Tree.from_doc(json.loads(text))


def _mat_doc(M):
    M = np.asarray(M, dtype=float)
    return {"shape": list(M.shape), "data": [float(x) for x in M.reshape(-1)]}


def _mat_load(doc):
    return np.array(doc["data"], dtype=float).reshape(doc["shape"])


def _scene_doc(scene):
    def con(c):
        return {"alpha": [float(x) for x in c.alpha], "beta": c.beta, "epsilon": c.epsilon}

    return {
        "horizon": scene.horizon,
        "state_constraints": [con(c) for c in scene.state_constraints],
        "control_constraints": [con(c) for c in scene.control_constraints],
    }


def _scene_load(doc):
    def con(d):
        return HalfspaceChance(np.array(d["alpha"], dtype=float), d["beta"], d["epsilon"])

    return PlanningScene(
        state_constraints=tuple(con(d) for d in doc["state_constraints"]),
        control_constraints=tuple(con(d) for d in doc["control_constraints"]),
        horizon=doc["horizon"],
    )


# ------------------------------------------------------------- construction


def create_root(goal, system=None, scene=None):
    """Singleton tree whose root payload is the goal ambiguity set."""
    tree = Tree(goal, system=system, scene=scene)
    tree.nodes[0] = TreeNode(
        id=0,
        center=goal.mean_set.center.copy(),
        shape=goal.mean_set.shape.copy(),
        covariance=np.asarray(goal.covariance, dtype=float).copy(),
        parent=None,
        law_to_parent=None,
        depth=0,
    )
    return tree


def select_node(tree, rng, strategy="voronoi", workspace=None, metric_dims=None):
    """Pick the node to expand.

    `uniform` draws uniformly over node ids; `voronoi` samples a point in the
    workspace box and returns the node whose mean center is nearest (favoring
    relatively unexplored regions).
    """
    ids, centers = tree.centers()
    if strategy == "uniform":
        return ids[int(rng.integers(len(ids)))]
    if strategy == "voronoi":
        if workspace is None:
            raise ValueError("voronoi selection needs workspace bounds")
        lo, hi = workspace
        point = rng.uniform(np.asarray(lo, dtype=float), np.asarray(hi, dtype=float))
        if metric_dims is not None:
            dims = list(metric_dims)
            d = np.linalg.norm(centers[:, dims] - point[dims], axis=1)
        else:
            d = np.linalg.norm(centers - point, axis=1)
        return ids[int(np.argmin(d))]
    raise ValueError(f"unknown selection strategy {strategy!r}")


def sample_mean_around(node, r_sample, rng):
    """Uniform draw in the axis-aligned box node.center +- r_sample."""
    r = np.asarray(r_sample, dtype=float)
    if np.any(r <= 0):
        raise ValueError("sampling half-widths must be positive")
    return node.center + rng.uniform(-r, r)


def sample_spd_matrix(n, lambda_min_cap, rng):
    """Random SPD matrix with eigenvalues in (0.1 cap, cap] and Haar eigenvectors."""
    if lambda_min_cap <= 0:
        raise ValueError("cap must be positive")
    lams = rng.uniform(0.1 * lambda_min_cap, lambda_min_cap, size=n)
    G = rng.standard_normal((n, n))
    Q, R = np.linalg.qr(G)
    Q = Q * np.sign(np.diag(R))  # sign fix makes the distribution Haar
    return project_pd(Q @ np.diag(lams) @ Q.T, floor=1e-15)


@dataclass
class TreeConfig:
    """Everything one build needs; `variant` picks the expansion rule."""

    system: LinearSystem
    scene: PlanningScene
    goal: AmbiguitySet
    variant: str = "maxellipsoid"
    iterations: int = 50
    seed: int = 0
    r_sample: np.ndarray | None = None
    sigma_q: np.ndarray | None = None  # fixed expansion covariance (maxellipsoid)
    refs: programs.LinearizationRefs | None = None
    bilevel: bool = True
    strategy: str = "voronoi"
    workspace: tuple | None = None
    metric: str = "position"  # voronoi frontier bias works on the position subspace
    position_dims: tuple = (0, 1)
    # rejections need no rescue certificate (acceptances are post-checked),
    # so builds skip the fallback solver and stay fast
    settings: object = SolverSettings(fallback=None)

    def resolved_refs(self):
        if self.refs is not None:
            return self.refs
        return programs.default_refs(self.system, self.goal.mean_set.shape)

    def resolved_sigma_q(self):
        if self.sigma_q is not None:
            return np.asarray(self.sigma_q, dtype=float)
        return 0.1 * np.eye(self.system.n)

    def metric_dims(self):
        return list(self.position_dims) if self.metric == "position" else None


def _select_and_sample(tree, cfg, rng):
    node_id = select_node(
        tree, rng, strategy=cfg.strategy, workspace=cfg.workspace,
        metric_dims=cfg.metric_dims(),
    )
    node = tree.nodes[node_id]
    r = cfg.r_sample if cfg.r_sample is not None else np.ones(cfg.system.n)
    mu_q = sample_mean_around(node, r, rng)
    return node, mu_q


def _count(tree, key):
    tree.metadata[key] = tree.metadata.get(key, 0) + 1


def expand_maxellipsoid(tree, cfg, rng):
    """One expansion attempt: maximal mean-set edge, optional bi-level refinement."""
    node, mu_q = _select_and_sample(tree, cfg, rng)
    sigma_q = cfg.resolved_sigma_q()
    refs = cfg.resolved_refs()
    goal = node.ambiguity_set
    status, p_max, sol = programs.solve_maxellipsoid(
        cfg.system, cfg.scene, mu_q, sigma_q, goal, refs, settings=cfg.settings
    )
    if sol is None:
        _count(tree, f"rejected_{status}")
        return False
    shape, covariance, law = p_max, sigma_q, sol.law
    if cfg.bilevel:
        # the maximized shape sits on the containment boundary; re-certifying
        # it exactly stalls the solver, so the second stage runs marginally
        # inside and the node stores the shape its edge actually certifies
        for shrink in (1e-3, 5e-2):
            shrunk = (1.0 - shrink) * p_max
            status2, s_max, sol2 = programs.solve_maxcovarell(
                cfg.system, cfg.scene, Ellipsoid(mu_q, shrunk), goal, refs,
                settings=cfg.settings,
            )
            if sol2 is not None:
                shape, covariance, law = shrunk, s_max, sol2.law
                break
            _count(tree, f"bilevel_fallback_{status2}")
    tree.add_node(mu_q, shape, covariance, node.id, law)
    return True


def expand_maxcovar(tree, cfg, rng):
    """Point-node baseline: maximal covariance towards the parent distribution."""
    node, mu_q = _select_and_sample(tree, cfg, rng)
    goal = GaussianBelief(node.center, node.covariance)
    status, s_max, sol = programs.solve_maxcovar(
        cfg.system, cfg.scene, mu_q, goal, cfg.resolved_refs(), settings=cfg.settings
    )
    if sol is None:
        _count(tree, f"rejected_{status}")
        return False
    tree.add_node(mu_q, point_ellipsoid(mu_q).shape, s_max, node.id, sol.law)
    return True


def expand_randcovar(tree, cfg, rng):
    """Point-node baseline with a randomly sampled covariance.

    The maximal covariance sets the eigenvalue cap for the sample; the edge is
    an optimal-steering law for the sampled distribution.
    """
    node, mu_q = _select_and_sample(tree, cfg, rng)
    goal = GaussianBelief(node.center, node.covariance)
    refs = cfg.resolved_refs()
    status, s_max, _ = programs.solve_maxcovar(
        cfg.system, cfg.scene, mu_q, goal, refs, settings=cfg.settings
    )
    if s_max is None:
        _count(tree, f"rejected_cap_{status}")
        return False
    cap = float(np.linalg.eigvalsh(s_max).min())
    sigma_rand = sample_spd_matrix(cfg.system.n, cap, rng)
    status2, sol = programs.solve_optsteer(
        cfg.system, cfg.scene, GaussianBelief(mu_q, sigma_rand),
        AmbiguitySet(point_ellipsoid(node.center), node.covariance), refs,
        settings=cfg.settings,
    )
    if sol is None:
        _count(tree, f"rejected_{status2}")
        return False
    tree.add_node(mu_q, point_ellipsoid(mu_q).shape, sigma_rand, node.id, sol.law)
    return True


_EXPANDERS = {
    "maxellipsoid": expand_maxellipsoid,
    "maxcovar": expand_maxcovar,
    "randcovar": expand_randcovar,
}


def build_tree(cfg):
    """Run the expansion loop; deterministic for a fixed (config, seed)."""
    if cfg.variant not in _EXPANDERS:
        raise ValueError(f"unknown variant {cfg.variant!r}")
    if cfg.iterations < 0:
        raise ValueError("iterations must be >= 0")
    expander = _EXPANDERS[cfg.variant]
    rng = np.random.default_rng(cfg.seed)
    tree = create_root(cfg.goal, system=cfg.system, scene=cfg.scene)
    tree.metadata.update(
        seed=cfg.seed, variant=cfg.variant, iterations=cfg.iterations, accepted=0
    )
    t0 = time.perf_counter()
    for _ in range(cfg.iterations):
        if expander(tree, cfg, rng):
            tree.metadata["accepted"] += 1
    tree.metadata["wall_time_s"] = time.perf_counter() - t0
    return tree
