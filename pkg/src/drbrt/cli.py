"""Command-line surface: tree construction, planning, benchmarking, simulation.

Exit codes: 0 success, 1 planned negative (no path / validation failure),
2 input error, 3 solver backend unavailable.  Artifacts are byte-reproducible
for fixed seeds; volatile timing goes to stdout or an optional sidecar.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time

import numpy as np

from drbrt import planner
from drbrt.brt import Tree, build_tree
from drbrt.config import ConfigError, ExperimentConfig
from drbrt.conic import SolverSettings
from drbrt.core import GaussianBelief

EXIT_OK = 0
EXIT_NEGATIVE = 1
EXIT_INPUT = 2
EXIT_ENVIRONMENT = 3


def _settings(fallback="SCS"):
    tol = os.environ.get("DRBRT_SOLVER_TOL")
    if tol is None:
        return SolverSettings(fallback=fallback)
    t = float(tol)
    return SolverSettings(feas_tol=t, gap_tol=t, fallback=fallback)


def _backend_available():
    try:
        import cvxpy

        return bool({"CLARABEL", "SCS"} & set(cvxpy.installed_solvers()))
    except Exception:
        return False


def _load_tree(path):
    try:
        with open(path) as fh:
            return Tree.from_json(fh.read()), None
    except OSError as exc:
        return None, f"cannot read tree archive {path}: {exc}"
    except (KeyError, ValueError, json.JSONDecodeError) as exc:
        return None, f"malformed tree archive {path}: {exc}"


def _dump_json(doc, path):
    with open(path, "w") as fh:
        fh.write(json.dumps(doc, indent=1, sort_keys=True) + "\n")


# ------------------------------------------------------------------ commands


def cmd_build_tree(args):
    if not _backend_available():
        print("no conic solver backend available", file=sys.stderr)
        return EXIT_ENVIRONMENT
    try:
        cfg = ExperimentConfig.load(args.config)
        tree_cfg = cfg.tree_config(
            variant=args.variant, seed=args.seed,
            settings=_settings(fallback=None),
        )
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    tree = build_tree(tree_cfg)
    tree.metadata["resolved_config"] = cfg.resolved_doc(tree_cfg)
    with open(args.out, "w") as fh:
        fh.write(tree.to_json(record_time=args.record_time))
    accepted = tree.metadata.get("accepted", 0)
    wall = tree.metadata.get("wall_time_s", float("nan"))
    print(
        f"built {tree_cfg.variant} tree: {accepted}/{tree_cfg.iterations} accepted, "
        f"{len(tree)} nodes, wall {wall:.1f}s -> {args.out}"
    )
    return EXIT_OK


def _parse_query(text, n):
    doc = json.loads(text)
    mean = np.asarray(doc["mean"], dtype=float)
    cov = doc.get("covariance", 1.0)
    cov = float(cov) * np.eye(n) if isinstance(cov, (int, float)) else np.asarray(cov, dtype=float)
    return GaussianBelief(mean, cov)


def cmd_plan(args):
    if not _backend_available():
        print("no conic solver backend available", file=sys.stderr)
        return EXIT_ENVIRONMENT
    tree, err = _load_tree(args.tree)
    if err:
        print(err, file=sys.stderr)
        return EXIT_INPUT
    if tree.system is None or tree.scene is None:
        print("tree archive carries no system/scene", file=sys.stderr)
        return EXIT_INPUT
    try:
        if os.path.exists(args.query):
            with open(args.query) as fh:
                query = _parse_query(fh.read(), tree.system.n)
        else:
            query = _parse_query(args.query, tree.system.n)
    except (ValueError, KeyError, json.JSONDecodeError) as exc:
        print(f"bad query: {exc}", file=sys.stderr)
        return EXIT_INPUT
    plan = planner.find_path(tree, query, M=args.m, settings=_settings())
    if plan is None:
        print(f"no path found within the {args.m} nearest nodes")
        return EXIT_NEGATIVE
    _dump_json(planner.plan_to_doc(plan, system=tree.system), args.out)
    print(
        f"connected to node {plan.node_path[0]} at depth {plan.depth}; "
        f"law length {len(plan.law)} -> {args.out}"
    )
    return EXIT_OK


def cmd_bench(args):
    if not _backend_available():
        print("no conic solver backend available", file=sys.stderr)
        return EXIT_ENVIRONMENT
    try:
        cfg = ExperimentConfig.load(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    rng = np.random.default_rng(args.seed)
    try:
        means, cov = cfg.sample_queries(args.queries, rng)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    queries = [GaussianBelief(mu, cov) for mu in means]
    M = int(cfg.query.get("m", 6))
    settings = _settings()
    tree_rows = []
    csv_rows = ["query,tree,success,node,depth"]
    timing_rows = ["query,tree,seconds"]
    for path in args.trees.split(","):
        tree, err = _load_tree(path)
        if err:
            print(err, file=sys.stderr)
            return EXIT_INPUT
        variant = tree.metadata.get("variant", "unknown")
        outcomes = []
        successes = 0
        for qi, query in enumerate(queries):
            t0 = time.perf_counter()
            plan = planner.find_path(tree, query, M=M, settings=settings)
            dt = time.perf_counter() - t0
            ok = plan is not None
            successes += ok
            outcomes.append(
                {
                    "query": qi,
                    "success": ok,
                    "node": None if plan is None else plan.node_path[0],
                    "depth": None if plan is None else plan.depth,
                }
            )
            csv_rows.append(
                f"{qi},{variant},{int(ok)},"
                f"{'' if plan is None else plan.node_path[0]},"
                f"{'' if plan is None else plan.depth}"
            )
            timing_rows.append(f"{qi},{variant},{dt:.3f}")
            print(f"[{variant}] query {qi}: {'ok' if ok else 'no path'} ({dt:.2f}s)")
        tree_rows.append(
            {
                "tree": os.path.basename(path),
                "variant": variant,
                "nodes": len(tree),
                "successes": successes,
                "queries": args.queries,
                "outcomes": outcomes,
            }
        )
        print(f"[{variant}] total: {successes}/{args.queries}")
    report = {
        "format_version": 1,
        "config": cfg.resolved_doc(),
        "seed": args.seed,
        "queries": args.queries,
        "m": M,
        "query_means": [[float(x) for x in mu] for mu in means],
        "trees": tree_rows,
    }
    _dump_json(report, args.out)
    if args.csv:
        with open(args.csv, "w") as fh:
            fh.write("\n".join(csv_rows) + "\n")
    if args.timing_out:
        with open(args.timing_out, "w") as fh:
            fh.write("\n".join(timing_rows) + "\n")
    return EXIT_OK


def _trajectories_csv(xs, us):
    samples, steps, n = xs.shape
    m = us.shape[2]
    header = (
        "sample,step,"
        + ",".join(f"x_{i}" for i in range(n))
        + ","
        + ",".join(f"u_{j}" for j in range(m))
    )
    rows = [header]
    for s in range(samples):
        for k in range(steps):
            xvals = ",".join(repr(float(v)) for v in xs[s, k])
            uvals = (
                ",".join(repr(float(v)) for v in us[s, k]) if k < steps - 1
                else "," * (m - 1)
            )
            rows.append(f"{s},{k},{xvals},{uvals}")
    return "\n".join(rows) + "\n"


def _svg_ellipse(center, shape2, style):
    w, V = np.linalg.eigh(0.5 * (shape2 + shape2.T))
    rx, ry = np.sqrt(np.maximum(w, 0.0))
    angle = np.degrees(np.arctan2(V[1, 0], V[0, 0]))
    return (
        f'<ellipse cx="0" cy="0" rx="{rx:.4f}" ry="{ry:.4f}" '
        f'transform="translate({center[0]:.4f},{center[1]:.4f}) rotate({angle:.3f})" '
        f'{style}/>'
    )


def _trajectories_svg(xs, plan):
    """x-y projections: one path per sample, goal ellipse, 3-sigma query ellipse."""
    pts = xs[:, :, :2]
    goal_c = plan.goal.mean_set.center[:2]
    goal_shape = plan.goal.mean_set.shape[:2, :2]
    q_c = plan.query.mean[:2]
    q_shape = 9.0 * plan.query.covariance[:2, :2]
    lo = np.minimum(pts.reshape(-1, 2).min(axis=0), q_c) - 3.0
    hi = np.maximum(pts.reshape(-1, 2).max(axis=0), q_c) + 3.0
    width, height = hi - lo
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="{lo[0]:.2f} {-hi[1]:.2f} '
        f'{width:.2f} {height:.2f}">',
        f'<g transform="scale(1,-1)" fill="none" stroke-width="{max(width, height) / 400:.4f}">',
        _svg_ellipse(goal_c, goal_shape, 'stroke="green"'),
        _svg_ellipse(q_c, q_shape, 'stroke="red"'),
    ]
    for s in range(pts.shape[0]):
        d = "M " + " L ".join(f"{p[0]:.3f} {p[1]:.3f}" for p in pts[s])
        parts.append(f'<path d="{d}" stroke="black" stroke-opacity="0.25"/>')
    parts.append("</g></svg>")
    return "\n".join(parts) + "\n"


def cmd_simulate(args):
    try:
        with open(args.plan) as fh:
            plan, system = planner.plan_from_doc(json.load(fh))
    except OSError as exc:
        print(f"cannot read plan {args.plan}: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (KeyError, ValueError, json.JSONDecodeError) as exc:
        print(f"malformed plan archive: {exc}", file=sys.stderr)
        return EXIT_INPUT
    if system is None:
        print("plan archive carries no system block", file=sys.stderr)
        return EXIT_INPUT
    xs, us = planner.simulate_trajectories(system, plan, args.samples, args.seed)
    with open(args.out, "w") as fh:
        fh.write(_trajectories_csv(xs, us))
    if args.svg:
        with open(args.svg, "w") as fh:
            fh.write(_trajectories_svg(xs, plan))
    report = planner.monte_carlo(system, plan, args.samples, args.seed)
    worst_ctrl = (
        report.control_violation_rates.max()
        if report.control_violation_rates.size else 0.0
    )
    print(
        f"simulated {args.samples} rollouts over {len(plan.law)} steps; "
        f"terminal membership {report.terminal_membership_rate:.4f}, "
        f"worst control violation rate {worst_ctrl:.4f} -> {args.out}"
    )
    return EXIT_OK


def cmd_validate(args):
    tree, err = _load_tree(args.tree)
    if err:
        print(err, file=sys.stderr)
        return EXIT_INPUT
    if tree.system is None or tree.scene is None:
        print("tree archive carries no system/scene", file=sys.stderr)
        return EXIT_INPUT
    reports = tree.validate_edges()
    if not reports:
        print("singleton tree: nothing to validate")
        return EXIT_OK
    failures = [(nid, r) for nid, r in reports if not r.ok]
    worst_state = max(r.worst_state_margin for _, r in reports)
    worst_control = max(r.worst_control_margin for _, r in reports)
    worst_cov = max(r.terminal_cov_gap for _, r in reports)
    print(
        f"validated {len(reports)} edges: worst state margin {worst_state:.3e}, "
        f"worst control margin {worst_control:.3e}, worst covariance gap {worst_cov:.3e}"
    )
    if failures:
        for nid, r in failures:
            print(f"edge to node {nid} FAILS: {r.summary()}", file=sys.stderr)
        return EXIT_NEGATIVE
    return EXIT_OK


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="drbrt",
        description="Backward reachable trees of ambiguity sets for probabilistic planning",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build-tree", help="construct a tree archive from a config")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--variant", choices=["maxellipsoid", "maxcovar", "randcovar"])
    p.add_argument("--seed", type=int)
    p.add_argument("--record-time", action="store_true",
                   help="embed wall time in the archive (breaks byte reproducibility)")
    p.set_defaults(func=cmd_build_tree)

    p = sub.add_parser("plan", help="connect a query distribution to a tree")
    p.add_argument("--tree", required=True)
    p.add_argument("--query", required=True, help="JSON file or inline JSON")
    p.add_argument("--m", type=int, default=6)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("bench", help="multi-query planning benchmark over tree archives")
    p.add_argument("--config", required=True)
    p.add_argument("--trees", required=True, help="comma-separated tree archives")
    p.add_argument("--queries", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--csv", help="outcome rows as CSV")
    p.add_argument("--timing-out", help="volatile per-query timing sidecar")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("simulate", help="Monte-Carlo rollouts of a plan archive")
    p.add_argument("--plan", required=True)
    p.add_argument("--samples", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--svg")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("validate", help="re-validate every edge certificate of a tree")
    p.add_argument("--tree", required=True)
    p.set_defaults(func=cmd_validate)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
