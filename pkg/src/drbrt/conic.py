"""Conic-program container and solver adapter.

The steering programs are assembled against this layer so they stay
independent of the SDP backend: variables are declared by name, constraints
are registered with handles, and `solve` maps the backend's certificate onto a
small status vocabulary.  Inaccurate results are surfaced as such, never
upgraded to optimal.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import cvxpy as cp
import numpy as np

OPTIMAL = "optimal"
INACCURATE = "inaccurate"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
SOLVER_ERROR = "solver_error"

_STATUS_MAP = {
    cp.OPTIMAL: OPTIMAL,
    cp.OPTIMAL_INACCURATE: INACCURATE,
    cp.INFEASIBLE: INFEASIBLE,
    cp.INFEASIBLE_INACCURATE: INFEASIBLE,
    cp.UNBOUNDED: UNBOUNDED,
    cp.UNBOUNDED_INACCURATE: UNBOUNDED,
}


@dataclass(frozen=True)
class SolverSettings:
    """Backend selection and tolerances shared by every program solve."""

    solver: str = "CLARABEL"
    feas_tol: float = 1e-8
    gap_tol: float = 1e-8
    max_iters: int = 200_000
    verbose: bool = False
    fallback: str | None = "SCS"  # retried once when the primary backend errors

    def solver_options(self, solver=None):
        solver = self.solver if solver is None else solver
        if solver == "CLARABEL":
            # interior-point iterations are expensive; stalled solves must bail
            return {
                "tol_feas": self.feas_tol,
                "tol_gap_abs": self.gap_tol,
                "tol_gap_rel": self.gap_tol,
                "max_iter": min(self.max_iters, 300),
            }
        if solver == "SCS":
            # rescue path only: results are gated by the exact post-checks
            return {"eps": max(self.feas_tol, 1e-7), "max_iters": min(self.max_iters, 5_000)}
        return {}


DEFAULT_SETTINGS = SolverSettings()


@dataclass
class SolveResult:
    """Outcome of one conic solve; values present iff optimal or inaccurate."""

    status: str
    values: dict | None
    objective: float | None
    solve_time: float
    iterations: int | None

    @property
    def has_solution(self):
        return self.status in (OPTIMAL, INACCURATE)


class ConicProgram:
    """Linear + PSD (+ optional log-det objective) program with named variables."""

    def __init__(self, name=""):
        self.name = name
        self._vars = {}
        self._constraints = {}  # handle -> (kind, cvxpy constraint)
        self._objective_expr = cp.Constant(0.0)
        self._counter = 0

    # ------------------------------------------------------------ variables

    def scalar(self, name, nonneg=False):
        return self._register_var(name, cp.Variable(nonneg=nonneg, name=name))

    def vector(self, name, n):
        return self._register_var(name, cp.Variable(n, name=name))

    def matrix(self, name, rows, cols=None, symmetric=False):
        cols = rows if cols is None else cols
        if symmetric and rows != cols:
            raise ValueError("symmetric matrix must be square")
        var = cp.Variable((rows, cols), symmetric=symmetric, name=name)
        return self._register_var(name, var)

    def _register_var(self, name, var):
        if name in self._vars:
            raise ValueError(f"variable {name!r} already declared")
        self._vars[name] = var
        return var

    def var(self, name):
        return self._vars[name]

    def variable_names(self):
        return list(self._vars)

    # ---------------------------------------------------------- constraints

    def _handle(self, name, kind):
        self._counter += 1
        return name if name is not None else f"{kind}_{self._counter}"

    def add_equality(self, expr, name=None):
        """Register expr == 0 (scalar, vector or matrix affine expression)."""
        h = self._handle(name, "eq")
        self._constraints[h] = ("eq", expr == 0)
        return h

    def add_inequality(self, expr, name=None):
        """Register expr <= 0 elementwise."""
        h = self._handle(name, "ineq")
        self._constraints[h] = ("ineq", expr <= 0)
        return h

    def add_psd(self, expr, name=None):
        """Register a symmetric affine matrix expression expr >= 0 (PSD cone)."""
        if expr.shape[0] != expr.shape[1]:
            raise ValueError("PSD constraint matrix must be square")
        h = self._handle(name, "psd")
        self._constraints[h] = ("psd", expr >> 0)
        return h

    def add_psd_via_schur(self, sigma, u, y, name=None):
        """Register [[Sigma, U^T], [U, Y]] >= 0, the Schur form of U Sigma^{-1} U^T <= Y."""
        ns = sigma.shape[0]
        if sigma.shape != (ns, ns):
            raise ValueError("Sigma block must be square")
        if u.shape[1] != ns or y.shape != (u.shape[0], u.shape[0]):
            raise ValueError("U/Y blocks inconsistent with Sigma")
        block = cp.bmat([[sigma, u.T], [u, y]])
        return self.add_psd(block, name=name)

    def constraint_names(self):
        return list(self._constraints)

    def residual(self, handle):
        """Worst violation of one registered constraint at the current values."""
        kind, con = self._constraints[handle]
        if kind == "eq":
            val = np.atleast_1d(con.args[0].value - (con.args[1].value if con.args[1].value is not None else 0.0))
            return float(np.max(np.abs(val)))
        if kind == "ineq":
            lhs = np.atleast_1d(con.args[0].value)
            rhs = np.atleast_1d(con.args[1].value)
            return float(np.max(np.maximum(lhs - rhs, 0.0)))
        M = con.args[0].value
        M = 0.5 * (M + M.T)
        return float(max(0.0, -np.linalg.eigvalsh(M).min()))

    def max_residual(self):
        return max((self.residual(h) for h in self._constraints), default=0.0)

    # ------------------------------------------------------------ objective

    def set_objective(self, linear=None, logdet_of=None, logdet_coeff=0.0):
        """Minimize linear + logdet_coeff * logdet(var).

        The log-det term uses the backend's native support (exponential cone
        tower under the hood); a maximization of volume passes coeff = -1.
        """
        expr = cp.Constant(0.0) if linear is None else linear
        if logdet_of is not None and logdet_coeff != 0.0:
            expr = expr + logdet_coeff * cp.log_det(logdet_of)
        self._objective_expr = expr

    # ----------------------------------------------------------------- solve

    def solve(self, settings=DEFAULT_SETTINGS):
        problem = cp.Problem(
            cp.Minimize(self._objective_expr),
            [con for _, con in self._constraints.values()],
        )
        t0 = time.perf_counter()
        solvers = [settings.solver]
        if settings.fallback and settings.fallback != settings.solver:
            solvers.append(settings.fallback)
        solved = False
        for solver in solvers:
            try:
                problem.solve(
                    solver=solver,
                    verbose=settings.verbose,
                    **settings.solver_options(solver),
                )
                solved = True
                break
            except cp.error.SolverError:
                continue
        if not solved:
            return SolveResult(SOLVER_ERROR, None, None, time.perf_counter() - t0, None)
        wall = time.perf_counter() - t0
        status = _STATUS_MAP.get(problem.status, SOLVER_ERROR)
        stats = problem.solver_stats
        solve_time = wall if stats is None or stats.solve_time is None else float(stats.solve_time)
        iters = None if stats is None or stats.num_iters is None else int(stats.num_iters)
        values = None
        objective = None
        if status in (OPTIMAL, INACCURATE):
            values = {}
            for vname, var in self._vars.items():
                if var.value is None:
                    values = None
                    break
                values[vname] = np.atleast_1d(np.asarray(var.value, dtype=float)) if var.ndim else float(var.value)
            if values is None:
                status = SOLVER_ERROR
            else:
                objective = float(problem.value)
        return SolveResult(status, values, objective, solve_time, iters)
