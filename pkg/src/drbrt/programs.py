"""Steering program catalog: assembly, solving, control recovery, post-checks.

All programs share one relaxation skeleton: the change of variables U_k = K_k
Sigma_k with an auxiliary Y_k bounded below by U_k Sigma_k^{-1} U_k^T (a Schur
block), the covariance recursion as an equality in (Sigma, U, Y), tangent
overestimators for the square roots in the chance constraints, and a linear
matrix inequality that is sufficient for terminal mean-set containment.

Every solve is followed by an exact re-propagation of the recovered gains:
planned covariances must dominate the re-propagated ones, the exact (not
linearized) chance margins must clear, and terminal containment is confirmed
by the exact S-procedure oracle.  Solutions that fail this check are rejected.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import cvxpy as cp
import numpy as np

from drbrt import core
from drbrt.conic import (
    DEFAULT_SETTINGS,
    INACCURATE,
    INFEASIBLE,
    OPTIMAL,
    SOLVER_ERROR,
    UNBOUNDED,
    ConicProgram,
)
from drbrt.core import (
    AmbiguitySet,
    ControlLaw,
    Ellipsoid,
    GaussianBelief,
    is_point_ellipsoid,
    point_ellipsoid,
    project_pd,
    symmetrize,
)

GAMMA_FLOOR = 1e-9
TAU_FLOOR = 1e-9
TAU_CEIL = 1.0 - 1e-6
POST_CHECK_TOL = 1e-6


@dataclass(frozen=True)
class LinearizationRefs:
    """Reference points for the square-root tangent overestimators."""

    sigma_r: np.ndarray
    y_r: np.ndarray
    p_r: np.ndarray

    def __post_init__(self):
        for name in ("sigma_r", "y_r", "p_r"):
            M = symmetrize(np.asarray(getattr(self, name), dtype=float))
            if np.linalg.eigvalsh(M).min() <= 0:
                raise ValueError(f"{name} must be positive definite")
            object.__setattr__(self, name, M)


def default_refs(system, goal_shape=None, sigma_scale=1.2, y_scale=15.0):
    """Experiment defaults: Sigma_r = 1.2 I_n, Y_r = 15 I_m, P_r = goal shape."""
    p_r = np.eye(system.n) if goal_shape is None else np.asarray(goal_shape, dtype=float)
    return LinearizationRefs(
        sigma_scale * np.eye(system.n), y_scale * np.eye(system.m), p_r
    )


@dataclass
class SteeringSolution:
    """Recovered law plus the planned (relaxed) trajectory and certificates."""

    law: ControlLaw
    planned_covariances: np.ndarray  # (N+1, n, n) decision-variable values
    planned_centers: np.ndarray  # (N+1, n)
    planned_shapes: np.ndarray | None  # (N+1, n, n) mean-set shapes, if any
    tau: float | None
    gamma: float | None
    objective: float | None
    status: str
    solve_time: float
    report: core.FeasibilityReport | None = None
    dominance_gap: float = np.nan  # min_k lambda_min(planned_k - repropagated_k)
    extras: dict = field(default_factory=dict)


def recover_controls(u_values, sigma_values, ridge=1e-9, cond_cap=1e12):
    """Recover K_k = U_k Sigma_k^{-1} from the relaxed decision variables.

    Solved as a linear system; a small ridge is added when Sigma_k is close to
    numerically singular.
    """
    gains = []
    for U, S in zip(u_values, sigma_values):
        S = symmetrize(np.asarray(S, dtype=float))
        if np.linalg.cond(S) > cond_cap:
            S = S + ridge * np.eye(S.shape[0])
            if np.linalg.cond(S) > cond_cap:
                raise np.linalg.LinAlgError("planned covariance singular beyond ridge rescue")
        gains.append(np.linalg.solve(S, np.asarray(U, dtype=float).T).T)
    return np.array(gains)


def _propagated_shapes(system, p0, N):
    shapes = [symmetrize(np.asarray(p0, dtype=float))]
    for _ in range(N):
        shapes.append(symmetrize(system.A @ shapes[-1] @ system.A.T))
    return shapes


class _SteeringSDP:
    """Shared assembly of the relaxed steering program."""

    def __init__(self, system, scene, refs, horizon=None):
        self.system = system
        self.scene = scene
        self.refs = refs
        self.N = scene.horizon if horizon is None else int(horizon)
        if self.N < 1:
            raise ValueError("horizon must be >= 1")
        self.prog = ConicProgram()
        self.objective_terms = []
        n, m, N = system.n, system.m, self.N
        p = self.prog
        self.sigma = [None] * (N + 1)
        self.U = [p.matrix(f"U_{k}", m, n) for k in range(N)]
        self.Y = [p.matrix(f"Y_{k}", m, symmetric=True) for k in range(N)]
        self.v = [p.vector(f"v_{k}", m) for k in range(N)]
        self.mu = [None] * (N + 1)
        self.tau = None
        self.gamma = None
        self.p0_var = None
        self.shape_quads = None  # per state constraint: expressions alpha' P_k alpha

    # ---------------------------------------------------------- moment chain

    def covariance_chain(self, sigma0):
        """Sigma_0 fixed or free, Schur blocks, and the (U, Y) recursion."""
        sys, p, N = self.system, self.prog, self.N
        n = sys.n
        if sigma0 is None:
            self.sigma[0] = p.matrix("Sigma_0", n, symmetric=True)
        else:
            self.sigma[0] = cp.Constant(symmetrize(np.asarray(sigma0, dtype=float)))
        for k in range(1, N + 1):
            self.sigma[k] = p.matrix(f"Sigma_{k}", n, symmetric=True)
        A, B, DDt = sys.A, sys.B, sys.noise_cov
        for k in range(N):
            p.add_psd_via_schur(self.sigma[k], self.U[k], self.Y[k], name=f"schur_{k}")
            rhs = (
                A @ self.sigma[k] @ A.T
                + B @ self.U[k] @ A.T
                + A @ self.U[k].T @ B.T
                + B @ self.Y[k] @ B.T
                + DDt
            )
            p.add_equality(rhs - self.sigma[k + 1], name=f"recursion_{k}")

    def mean_chain(self, mu0):
        sys, p, N = self.system, self.prog, self.N
        mu0 = np.asarray(mu0, dtype=float).reshape(-1)
        self.mu[0] = cp.Constant(mu0)
        for k in range(1, N + 1):
            self.mu[k] = p.vector(f"mu_{k}", sys.n)
        for k in range(N):
            p.add_equality(
                sys.A @ self.mu[k] + sys.B @ self.v[k] - self.mu[k + 1],
                name=f"mean_{k}",
            )

    def shape_chain(self, p0):
        """Mean-set shapes: either fixed data or P_k = A^k P_0 A^{kT} with P_0 free."""
        sys, N = self.system, self.N
        if p0 is None:
            self.shapes = None
            return
        if isinstance(p0, str) and p0 == "free":
            P0 = self.prog.matrix("P_0", sys.n, symmetric=True)
            self.p0_var = P0
            self.prog.add_psd(P0 - 1e-8 * np.eye(sys.n), name="p0_floor")
            powers = [np.eye(sys.n)]
            for _ in range(N):
                powers.append(sys.A @ powers[-1])
            self.shapes = [(powers[k], P0) for k in range(N + 1)]  # P_k = Ak P0 Ak'
        else:
            self.shapes = _propagated_shapes(sys, p0, N)

    def _shape_quad(self, k, alpha):
        """alpha^T P_k alpha as a constant or an affine expression in P_0."""
        entry = self.shapes[k]
        if isinstance(entry, tuple):
            Ak, P0 = entry
            a = Ak.T @ alpha
            return a @ P0 @ a, None
        return None, float(alpha @ entry @ alpha)

    # ----------------------------------------------------------- constraints

    def chance_constraints(self, robust=False):
        """Tangent-linearized state and control chance constraints.

        With `robust`, the state constraint carries the sup of alpha^T mu over
        the mean set: exact sqrt for fixed shapes, tangent overestimate around
        P_r when the initial shape is a decision variable.
        """
        p, refs, N = self.prog, self.refs, self.N
        for j, c in enumerate(self.scene.control_constraints):
            q = c.quantile
            a = c.alpha
            yr = float(a @ refs.y_r @ a)
            coeff = q / (2.0 * np.sqrt(yr))
            beta_bar = c.beta - 0.5 * q * np.sqrt(yr)
            for k in range(N):
                p.add_inequality(
                    coeff * cp.sum(cp.multiply(np.outer(a, a), self.Y[k]))
                    + a @ self.v[k]
                    - beta_bar,
                    name=f"control_{j}_{k}",
                )
        for j, c in enumerate(self.scene.state_constraints):
            q = c.quantile
            a = c.alpha
            sr = float(a @ refs.sigma_r @ a)
            coeff = q / (2.0 * np.sqrt(sr))
            beta_bar = c.beta - 0.5 * q * np.sqrt(sr)
            for k in range(N):
                expr = coeff * cp.sum(cp.multiply(np.outer(a, a), self.sigma[k]))
                expr = expr + a @ self.mu[k]
                if robust and self.shapes is not None:
                    quad_expr, quad_const = self._shape_quad(k, a)
                    if quad_const is not None:
                        expr = expr + np.sqrt(max(0.0, quad_const))
                    else:
                        pr = float(a @ refs.p_r @ a)
                        expr = expr + quad_expr / (2.0 * np.sqrt(pr)) + 0.5 * np.sqrt(pr)
                p.add_inequality(expr - beta_bar, name=f"state_{j}_{k}")

    def terminal_covariance_cap(self, goal_cov):
        s = float(np.linalg.eigvalsh(np.asarray(goal_cov, dtype=float)).min())
        self.prog.add_psd(s * np.eye(self.system.n) - self.sigma[self.N], name="cov_cap")
        return s

    def terminal_mean_point(self, target):
        self.prog.add_equality(self.mu[self.N] - np.asarray(target, dtype=float),
                               name="mean_reach")

    def terminal_mean_in_ellipsoid(self, goal_set):
        """mu_N in the goal ellipsoid, encoded as a Schur PSD block (exact)."""
        d = self.mu[self.N] - goal_set.center
        n = self.system.n
        block = cp.bmat([[cp.Constant(goal_set.shape), cp.reshape(d, (n, 1), order="F")],
                         [cp.reshape(d, (1, n), order="F"), cp.Constant(np.ones((1, 1)))]])
        self.prog.add_psd(block, name="mean_membership")

    def terminal_containment_lmi(self, goal_set):
        """Sufficient LMI for R(mu_N, P_N) inside the goal ellipsoid.

        Linearized around mu_N = goal center; requires P_N <= gamma * P_G with
        0 < gamma and 0 < tau < 1.
        """
        p, n, N = self.prog, self.system.n, self.N
        Pg = goal_set.shape
        cg = goal_set.center
        Pg_inv = symmetrize(np.linalg.inv(Pg))
        tau = p.scalar("tau")
        gamma = p.scalar("gamma")
        self.tau, self.gamma = tau, gamma
        p.add_inequality(GAMMA_FLOOR - gamma, name="gamma_floor")
        p.add_inequality(TAU_FLOOR - tau, name="tau_floor")
        p.add_inequality(tau - TAU_CEIL, name="tau_ceil")

        entry = self.shapes[N]
        if isinstance(entry, tuple):
            Ak, P0 = entry
            PN = Ak @ P0 @ Ak.T
        else:
            PN = cp.Constant(entry)
        p.add_psd(gamma * cp.Constant(Pg) - PN, name="shape_cap")

        muN = self.mu[N]
        cgq = float(cg @ Pg_inv @ cg)
        top_left = (tau - 1.0) * cp.Constant(Pg_inv)
        off = -(cp.Constant(Pg_inv) @ (tau * cg - muN))
        m3 = (tau + 1.0) * cgq - 2.0 * (Pg_inv @ cg) @ muN - (tau - gamma)
        block = cp.bmat(
            [
                [top_left, cp.reshape(off, (n, 1), order="F")],
                [cp.reshape(off, (1, n), order="F"), cp.reshape(m3, (1, 1), order="F")],
            ]
        )
        p.add_psd(-block, name="containment_lmi")

    # ------------------------------------------------------------- objective

    def add_quadratic_cost(self, Q=None, R=None):
        """sum_k tr(Q Sigma_k) + mu_k' Q mu_k + tr(R Y_k) + v_k' R v_k.

        The quadratic vector terms enter through PSD epigraph blocks so the
        program stays inside the linear+PSD vocabulary.  Q defaults to zero
        (feasibility-first), R to identity (cheapest-control tie-break).
        """
        n, m, N, p = self.system.n, self.system.m, self.N, self.prog
        R = np.eye(m) if R is None else np.asarray(R, dtype=float)
        terms = []
        if np.any(R):
            R_inv = np.linalg.inv(R)
            for k in range(N):
                terms.append(cp.sum(cp.multiply(R, self.Y[k])))
                t = p.scalar(f"ctrl_energy_{k}")
                vk = self.v[k]
                block = cp.bmat(
                    [
                        [cp.Constant(R_inv), cp.reshape(vk, (m, 1), order="F")],
                        [cp.reshape(vk, (1, m), order="F"), cp.reshape(t, (1, 1), order="F")],
                    ]
                )
                p.add_psd(block, name=f"ctrl_energy_epi_{k}")
                terms.append(t)
        if Q is not None and np.any(Q):
            Q = np.asarray(Q, dtype=float)
            Q_inv = np.linalg.inv(Q)
            for k in range(N):
                terms.append(cp.sum(cp.multiply(Q, self.sigma[k])))
                t = p.scalar(f"state_energy_{k}")
                muk = self.mu[k]
                block = cp.bmat(
                    [
                        [cp.Constant(Q_inv), cp.reshape(muk, (n, 1), order="F")],
                        [cp.reshape(muk, (1, n), order="F"), cp.reshape(t, (1, 1), order="F")],
                    ]
                )
                p.add_psd(block, name=f"state_energy_epi_{k}")
                terms.append(t)
        self.objective_terms.extend(terms)

    # ------------------------------------------------------------ extraction

    def extract(self, result):
        N, n = self.N, self.system.n
        vals = result.values
        sigmas = np.empty((N + 1, n, n))
        for k in range(N + 1):
            S = self.sigma[k]
            sigmas[k] = symmetrize(
                S.value if isinstance(S, cp.Constant) else vals[f"Sigma_{k}"]
            )
        centers = np.empty((N + 1, n))
        centers[0] = np.asarray(self.mu[0].value).reshape(-1)
        for k in range(1, N + 1):
            centers[k] = np.asarray(vals[f"mu_{k}"]).reshape(-1)
        u_vals = [vals[f"U_{k}"] for k in range(N)]
        gains = recover_controls(u_vals, sigmas[:-1])
        v_vals = np.array([np.asarray(vals[f"v_{k}"]).reshape(-1) for k in range(N)])
        law = ControlLaw(gains, v_vals)
        shapes = None
        if self.shapes is not None:
            if self.p0_var is not None:
                p0 = symmetrize(vals["P_0"])
                shapes = np.array(_propagated_shapes(self.system, p0, N))
            else:
                shapes = np.array(self.shapes)
        tau = float(np.asarray(vals["tau"]).reshape(())) if self.tau is not None else None
        gamma = float(np.asarray(vals["gamma"]).reshape(())) if self.gamma is not None else None
        return SteeringSolution(
            law=law,
            planned_covariances=sigmas,
            planned_centers=centers,
            planned_shapes=shapes,
            tau=tau,
            gamma=gamma,
            objective=result.objective,
            status=result.status,
            solve_time=result.solve_time,
        )

    def solve(self, settings, extra_objective=None):
        terms = list(self.objective_terms)
        if extra_objective is not None:
            terms.append(extra_objective)
        linear = sum(terms) if terms else None
        if self.p0_var is not None:
            self.prog.set_objective(linear, logdet_of=self.p0_var, logdet_coeff=-1.0)
        else:
            self.prog.set_objective(linear)
        return self.prog.solve(settings)


def _dominance_gap(planned, repropagated):
    gaps = [
        float(np.linalg.eigvalsh(symmetrize(p) - symmetrize(r)).min())
        for p, r in zip(planned, repropagated)
    ]
    return min(gaps)


def _post_check(system, scene, init, goal, sol, tol):
    """Exact re-propagation check behind every accepted solve."""
    if isinstance(init, AmbiguitySet):
        report = core.validate_ambiguity_trajectory(
            system, scene, init, sol.law, goal, tol=tol
        )
        covs = core.propagate_covariance(system, init.covariance, sol.law)
    else:
        report = core.validate_trajectory(system, scene, init, sol.law, goal, tol=tol)
        covs = core.propagate_covariance(system, init.covariance, sol.law)
    sol.report = report
    sol.dominance_gap = _dominance_gap(sol.planned_covariances, covs)
    return report.ok and sol.dominance_gap >= -tol


def _finish(sdp, result, system, scene, init_builder, goal, settings):
    """Map the solver certificate and gate the solution on the exact post-check."""
    if result.status in (INFEASIBLE, UNBOUNDED, SOLVER_ERROR):
        return result.status, None
    sol = sdp.extract(result)
    init = init_builder(sol)
    tol = POST_CHECK_TOL if result.status == OPTIMAL else 10.0 * POST_CHECK_TOL
    if _post_check(system, scene, init, goal, sol, tol):
        return result.status, sol
    warnings.warn(
        f"solver returned {result.status} but exact re-validation failed "
        f"({sol.report.summary()}, dominance {sol.dominance_gap:.2e}); treating as infeasible",
        stacklevel=3,
    )
    return INFEASIBLE, None


def _goal_as_ambiguity(goal):
    if isinstance(goal, GaussianBelief):
        return AmbiguitySet(point_ellipsoid(goal.mean), goal.covariance)
    return goal


def _relinearized_refs(refs, sol, damping=0.5):
    """Fixed-point update of the tangent reference values from a planned trajectory."""
    sigma_bar = symmetrize(sol.planned_covariances.mean(axis=0))
    m = sol.law.m
    y_bar = np.zeros((m, m))
    for K, S in zip(sol.law.gains, sol.planned_covariances[:-1]):
        y_bar += K @ S @ K.T
    y_bar = symmetrize(y_bar / len(sol.law)) + 1e-9 * np.eye(m)
    p_bar = refs.p_r if sol.planned_shapes is None else symmetrize(sol.planned_shapes.mean(axis=0))
    return LinearizationRefs(
        damping * refs.sigma_r + (1 - damping) * (sigma_bar + 1e-9 * np.eye(sigma_bar.shape[0])),
        damping * refs.y_r + (1 - damping) * y_bar,
        damping * refs.p_r + (1 - damping) * (p_bar + 1e-9 * np.eye(p_bar.shape[0])),
    )


def _solve_with_relinearization(build_and_solve, refs, relinearize, max_passes=5):
    """Single linearization pass by default; optional damped fixed-point loop."""
    status, sol = build_and_solve(refs)
    if not relinearize:
        return status, sol
    best = (status, sol)
    for _ in range(max_passes - 1):
        if sol is None:
            break
        refs = _relinearized_refs(refs, sol)
        status, new_sol = build_and_solve(refs)
        if new_sol is None:
            break
        sol = new_sol
        best = (status, sol)
    return best


def solve_optsteer(system, scene, init, goal, refs=None, Q=None, R=None,
                   settings=DEFAULT_SETTINGS, horizon=None, relinearize=False):
    """Steer a Gaussian distribution to a goal ambiguity set.

    Terminal mean containment is a convex constraint and is encoded exactly
    (degenerate point goals become a mean equality).  Returns (status, solution).
    """
    goal = _goal_as_ambiguity(goal)
    base_refs = default_refs(system, goal.mean_set.shape) if refs is None else refs

    def run(refs):
        sdp = _SteeringSDP(system, scene, refs, horizon=horizon)
        sdp.covariance_chain(init.covariance)
        sdp.mean_chain(init.mean)
        sdp.shape_chain(None)
        sdp.chance_constraints(robust=False)
        sdp.terminal_covariance_cap(goal.covariance)
        if is_point_ellipsoid(goal.mean_set):
            sdp.terminal_mean_point(goal.mean_set.center)
        else:
            sdp.terminal_mean_in_ellipsoid(goal.mean_set)
        sdp.add_quadratic_cost(Q=Q, R=R)
        result = sdp.solve(settings)
        return _finish(sdp, result, system, scene, lambda sol: init, goal, settings)

    return _solve_with_relinearization(run, base_refs, relinearize)


def solve_edgesteer(system, scene, init, goal, refs=None, Q=None, R=None,
                    settings=DEFAULT_SETTINGS, relinearize=False):
    """Distributionally robust steering between two ambiguity sets.

    Returns (status, solution); an accepted solution certifies the maneuver
    for every distribution instantiated from the initial ambiguity set.
    """
    base_refs = default_refs(system, goal.mean_set.shape) if refs is None else refs

    def run(refs):
        sdp = _SteeringSDP(system, scene, refs)
        sdp.covariance_chain(init.covariance)
        sdp.mean_chain(init.mean_set.center)
        sdp.shape_chain(init.mean_set.shape)
        sdp.chance_constraints(robust=True)
        sdp.terminal_covariance_cap(goal.covariance)
        sdp.terminal_containment_lmi(goal.mean_set)
        sdp.add_quadratic_cost(Q=Q, R=R)
        result = sdp.solve(settings)
        return _finish(sdp, result, system, scene, lambda sol: init, goal, settings)

    return _solve_with_relinearization(run, base_refs, relinearize)


def solve_maxellipsoid(system, scene, mu_q, sigma_q, goal, refs=None,
                       settings=DEFAULT_SETTINGS):
    """Maximal-volume backward reachable mean-set for a fixed initial covariance.

    Returns (status, P0_max, solution).
    """
    refs = default_refs(system, goal.mean_set.shape) if refs is None else refs
    sdp = _SteeringSDP(system, scene, refs)
    sdp.covariance_chain(sigma_q)
    sdp.mean_chain(mu_q)
    sdp.shape_chain("free")
    sdp.chance_constraints(robust=True)
    sdp.terminal_covariance_cap(goal.covariance)
    sdp.terminal_containment_lmi(goal.mean_set)
    result = sdp.solve(settings)

    def init_builder(sol):
        # solver-level feasibility tolerance can leave P0 semidefinite
        p0 = project_pd(sol.planned_shapes[0])
        sol.planned_shapes[0] = p0
        return AmbiguitySet(Ellipsoid(mu_q, p0), np.asarray(sigma_q, dtype=float))

    status, sol = _finish(sdp, result, system, scene, init_builder, goal, settings)
    if sol is None:
        return status, None, None
    sol.extras["p0_max"] = sol.planned_shapes[0]
    return status, sol.planned_shapes[0], sol


def solve_maxcovarell(system, scene, init_mean_set, goal, refs=None,
                      settings=DEFAULT_SETTINGS):
    """Maximal minimum-eigenvalue initial covariance for a fixed mean set.

    Returns (status, Sigma0_max, solution).  Unbounded when the scene carries
    no control constraints (unbounded feedback contracts any covariance).
    """
    refs = default_refs(system, goal.mean_set.shape) if refs is None else refs
    sdp = _SteeringSDP(system, scene, refs)
    sdp.covariance_chain(None)
    sdp.mean_chain(init_mean_set.center)
    sdp.shape_chain(init_mean_set.shape)
    sdp.chance_constraints(robust=True)
    sdp.terminal_covariance_cap(goal.covariance)
    sdp.terminal_containment_lmi(goal.mean_set)
    t = sdp.prog.scalar("t_eig")
    sdp.prog.add_psd(sdp.sigma[0] - t * np.eye(system.n), name="sigma0_floor")
    result = sdp.solve(settings, extra_objective=-t)

    def init_builder(sol):
        sol.planned_covariances[0] = project_pd(sol.planned_covariances[0])
        return AmbiguitySet(init_mean_set, sol.planned_covariances[0])

    status, sol = _finish(sdp, result, system, scene, init_builder, goal, settings)
    if sol is None:
        return status, None, None
    sol.extras["sigma0_max"] = sol.planned_covariances[0]
    return status, sol.planned_covariances[0], sol


def solve_maxcovar(system, scene, mu_q, goal, refs=None, settings=DEFAULT_SETTINGS):
    """Prior-work baseline: maximal covariance with exact mean endpoints.

    `goal` is a Gaussian distribution (exact terminal mean), the objective
    maximizes lambda_min(Sigma_0).  Returns (status, Sigma_max, solution).
    """
    refs = default_refs(system) if refs is None else refs
    goal_amb = _goal_as_ambiguity(goal)
    sdp = _SteeringSDP(system, scene, refs)
    sdp.covariance_chain(None)
    sdp.mean_chain(mu_q)
    sdp.shape_chain(None)
    sdp.chance_constraints(robust=False)
    sdp.terminal_covariance_cap(goal_amb.covariance)
    sdp.terminal_mean_point(goal_amb.mean_set.center)
    t = sdp.prog.scalar("t_eig")
    sdp.prog.add_psd(sdp.sigma[0] - t * np.eye(system.n), name="sigma0_floor")
    result = sdp.solve(settings, extra_objective=-t)

    def init_builder(sol):
        sol.planned_covariances[0] = project_pd(sol.planned_covariances[0])
        return GaussianBelief(mu_q, sol.planned_covariances[0])

    status, sol = _finish(sdp, result, system, scene, init_builder, goal_amb, settings)
    if sol is None:
        return status, None, None
    sol.extras["sigma0_max"] = sol.planned_covariances[0]
    return status, sol.planned_covariances[0], sol


def containment_lmi_feasible(inner, outer, settings=DEFAULT_SETTINGS):
    """Feasibility of the sufficient containment LMI for fixed ellipsoids.

    Searches over (tau, gamma) only; sound but conservative relative to the
    exact S-procedure oracle.
    """
    n = inner.dim
    Pg_inv = symmetrize(np.linalg.inv(outer.shape))
    cg = outer.center
    muN = inner.center
    prog = ConicProgram()
    tau = prog.scalar("tau")
    gamma = prog.scalar("gamma")
    prog.add_inequality(GAMMA_FLOOR - gamma)
    prog.add_inequality(TAU_FLOOR - tau)
    prog.add_inequality(tau - TAU_CEIL)
    prog.add_psd(gamma * cp.Constant(outer.shape) - cp.Constant(inner.shape))
    cgq = float(cg @ Pg_inv @ cg)
    off = -(Pg_inv @ (tau * cg - muN))
    m3 = (tau + 1.0) * cgq - 2.0 * float((Pg_inv @ cg) @ muN) - (tau - gamma)
    block = cp.bmat(
        [
            [(tau - 1.0) * cp.Constant(Pg_inv), cp.reshape(off, (n, 1), order="F")],
            [cp.reshape(off, (1, n), order="F"), cp.reshape(m3, (1, 1), order="F")],
        ]
    )
    prog.add_psd(-block)
    prog.set_objective(gamma)
    return prog.solve(settings).status in (OPTIMAL, INACCURATE)
