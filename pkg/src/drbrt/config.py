"""Experiment configuration: JSON with nested sections, scalars expand to scalar * I.

A resolved config is echoed into every artifact's metadata so runs can be
audited and reproduced from their outputs alone.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from drbrt.brt import TreeConfig
from drbrt.core import (
    AmbiguitySet,
    Ellipsoid,
    HalfspaceChance,
    LinearSystem,
    PlanningScene,
    control_box_constraints,
    triple_integrator_2d,
)
from drbrt.programs import LinearizationRefs


class ConfigError(ValueError):
    pass


def _as_matrix(value, n, name):
    """Scalar -> scalar * I_n, nested lists -> matrix."""
    if isinstance(value, (int, float)):
        return float(value) * np.eye(n)
    M = np.asarray(value, dtype=float)
    if M.shape != (n, n):
        raise ConfigError(f"{name} must be {n}x{n} or a scalar, got shape {M.shape}")
    return M


def _system_from(doc):
    if "preset" in doc:
        if doc["preset"] != "triple_integrator_2d":
            raise ConfigError(f"unknown system preset {doc['preset']!r}")
        return triple_integrator_2d(float(doc.get("dt", 0.1)))
    try:
        return LinearSystem(
            np.asarray(doc["A"], dtype=float),
            np.asarray(doc["B"], dtype=float),
            np.asarray(doc["D"], dtype=float),
        )
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"bad system block: {exc}") from exc


def _constraints_from(items, dim, name):
    out = []
    for rec in items:
        try:
            out.append(
                HalfspaceChance(
                    np.asarray(rec["alpha"], dtype=float),
                    float(rec["beta"]),
                    float(rec["epsilon"]),
                )
            )
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"bad {name} constraint {rec!r}: {exc}") from exc
        if out[-1].alpha.size != dim:
            raise ConfigError(f"{name} constraint alpha has wrong dimension")
    return tuple(out)


@dataclass
class ExperimentConfig:
    """Resolved experiment description built from one JSON document."""

    system: LinearSystem
    scene: PlanningScene
    goal: AmbiguitySet
    tree: dict
    refs: LinearizationRefs
    query: dict
    raw: dict

    @staticmethod
    def from_doc(doc):
        try:
            system = _system_from(doc["system"])
            n, m = system.n, system.m
            horizon = int(doc["horizon"])
            goal_doc = doc["goal"]
            goal = AmbiguitySet(
                Ellipsoid(
                    np.asarray(goal_doc["center"], dtype=float),
                    _as_matrix(goal_doc["shape"], n, "goal.shape"),
                ),
                _as_matrix(goal_doc["covariance"], n, "goal.covariance"),
            )
            scene_doc = doc.get("scene", {})
            control = _constraints_from(
                scene_doc.get("control_constraints", []), m, "control"
            )
            if "control_box" in scene_doc:
                box = scene_doc["control_box"]
                control = control + control_box_constraints(
                    m, float(box["beta"]), float(box["epsilon"])
                )
            scene = PlanningScene(
                state_constraints=_constraints_from(
                    scene_doc.get("state_constraints", []), n, "state"
                ),
                control_constraints=control,
                horizon=horizon,
            )
            lin = doc.get("linearization", {})
            refs = LinearizationRefs(
                _as_matrix(lin.get("sigma_r", 1.2), n, "sigma_r"),
                _as_matrix(lin.get("y_r", 15.0), m, "y_r"),
                goal.mean_set.shape if lin.get("p_r") is None
                else _as_matrix(lin["p_r"], n, "p_r"),
            )
            tree = dict(doc.get("tree", {}))
            query = dict(doc.get("query", {}))
        except ConfigError:
            raise
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"bad config: {exc}") from exc
        return ExperimentConfig(system, scene, goal, tree, refs, query, doc)

    @staticmethod
    def load(path):
        try:
            with open(path) as fh:
                doc = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
        return ExperimentConfig.from_doc(doc)

    def tree_config(self, variant=None, seed=None, settings=None):
        n = self.system.n
        t = self.tree
        workspace = None
        if "workspace" in t:
            workspace = (
                np.asarray(t["workspace"]["lo"], dtype=float),
                np.asarray(t["workspace"]["hi"], dtype=float),
            )
            if workspace[0].size != n or workspace[1].size != n:
                raise ConfigError("workspace bounds must have state dimension")
        resolved_variant = t.get("variant", "maxellipsoid") if variant is None else variant
        iterations = t.get("iterations", 50)
        if isinstance(iterations, dict):
            # per-variant budgets, mirroring unequal-iteration comparisons
            iterations = iterations[resolved_variant]
        kwargs = dict(
            system=self.system,
            scene=self.scene,
            goal=self.goal,
            variant=resolved_variant,
            iterations=int(iterations),
            seed=int(t.get("seed", 0)) if seed is None else int(seed),
            r_sample=None if "r_sample" not in t else np.asarray(t["r_sample"], dtype=float),
            sigma_q=None if "sigma_q" not in t else _as_matrix(t["sigma_q"], n, "sigma_q"),
            refs=self.refs,
            bilevel=bool(t.get("bilevel", True)),
            strategy=t.get("selection", "voronoi"),
            workspace=workspace,
            metric=t.get("metric", "position"),
            position_dims=tuple(t.get("position_dims", (0, 1))),
        )
        if settings is not None:
            kwargs["settings"] = settings
        return TreeConfig(**kwargs)

    def resolved_doc(self, tree_cfg=None):
        """The config as actually used, defaults applied, for artifact metadata."""
        cfg = self.tree_config() if tree_cfg is None else tree_cfg
        return {
            "horizon": self.scene.horizon,
            "tree": {
                "variant": cfg.variant,
                "iterations": cfg.iterations,
                "seed": cfg.seed,
                "bilevel": cfg.bilevel,
                "selection": cfg.strategy,
                "metric": cfg.metric,
                "position_dims": list(cfg.position_dims),
                "sigma_q": None if cfg.sigma_q is None else [[float(x) for x in row] for row in cfg.resolved_sigma_q()],
                "r_sample": None if cfg.r_sample is None else [float(x) for x in cfg.r_sample],
                "workspace": None if cfg.workspace is None else {
                    "lo": [float(x) for x in cfg.workspace[0]],
                    "hi": [float(x) for x in cfg.workspace[1]],
                },
            },
            "query": {
                "r_inner": float(self.query.get("r_inner", 0.0)),
                "r_outer": float(self.query.get("r_outer", 0.0)),
                "velocity_range": [float(x) for x in self.query.get("velocity_range", (0.0, 0.0))],
                "acceleration_range": [float(x) for x in self.query.get("acceleration_range", (0.0, 0.0))],
                "covariance": self.query.get("covariance"),
                "count": int(self.query.get("count", 0)),
                "m": int(self.query.get("m", 1)),
            },
        }

    def sample_queries(self, count, rng):
        """Annulus query sampling: positions uniform by area, velocity and
        acceleration coordinates uniform in their ranges."""
        if self.system.n != 6:
            raise ConfigError("annulus query sampling is defined for the 6-state plant")
        q = self.query
        r_in, r_out = float(q["r_inner"]), float(q["r_outer"])
        vel = q.get("velocity_range", (-2.5, 2.5))
        acc = q.get("acceleration_range", (-0.625, 0.625))
        cov = _as_matrix(q.get("covariance", 0.2), self.system.n, "query.covariance")
        out = []
        for _ in range(count):
            theta = rng.uniform(0.0, 2.0 * np.pi)
            r = np.sqrt(rng.uniform(r_in**2, r_out**2))
            mu = np.array(
                [
                    r * np.cos(theta),
                    r * np.sin(theta),
                    rng.uniform(vel[0], vel[1]),
                    rng.uniform(vel[0], vel[1]),
                    rng.uniform(acc[0], acc[1]),
                    rng.uniform(acc[0], acc[1]),
                ]
            )
            out.append(mu)
        return out, cov
