"""Domain types, moment propagation, chance-constraint arithmetic and trajectory validation.

The conventions follow a discrete-time linear-Gaussian plant

    x_{k+1} = A x_k + B u_k + D w_k,   w_k ~ N(0, I),

steered by an affine state-feedback law u_k = K_k (x_k - mu_k) + v_k, where
mu_k is the mean trajectory propagated from the realized initial mean.  Under
that centering E[u_k] = v_k and cov(u_k) = K_k Sigma_k K_k^T exactly.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigh as scipy_eigh
from scipy.special import ndtri

__all__ = [
    "LinearSystem",
    "Ellipsoid",
    "GaussianBelief",
    "AmbiguitySet",
    "HalfspaceChance",
    "PlanningScene",
    "ControlLaw",
    "FeasibilityReport",
    "triple_integrator_2d",
    "point_ellipsoid",
    "is_point_ellipsoid",
    "control_box_constraints",
    "symmetrize",
    "project_pd",
    "normal_quantile",
    "propagate_mean",
    "propagate_ellipsoid",
    "propagate_covariance",
    "chance_margin",
    "robust_sup_linear",
    "containment_gap",
    "ellipsoid_contains",
    "validate_trajectory",
    "validate_ambiguity_trajectory",
]

POINT_SHAPE_EPS = 1e-12  # degenerate mean-set, represented as eps * I


def symmetrize(M):
    """(M + M^T) / 2, suppressing floating-point asymmetry drift."""
    return 0.5 * (M + M.T)


def project_pd(M, floor=None):
    """Nearest symmetric matrix with eigenvalues clamped at `floor`.

    The default floor scales with the spectral radius so the reconstruction
    round-off cannot push a clamped eigenvalue back below zero.
    """
    w, V = np.linalg.eigh(symmetrize(M))
    if floor is None:
        floor = 1e-10 * max(1.0, float(w.max()))
    return symmetrize(V @ np.diag(np.maximum(w, floor)) @ V.T)


def normal_quantile(p):
    """Inverse standard-normal CDF Phi^{-1}(p)."""
    return float(ndtri(p))


def _as_matrix(M, name):
    M = np.asarray(M, dtype=float)
    if M.ndim != 2:
        raise ValueError(f"{name} must be a 2-D array, got shape {M.shape}")
    return M


def _check_spd(M, name, sym_tol=1e-9, eig_floor=0.0):
    if np.max(np.abs(M - M.T)) > sym_tol:
        raise ValueError(f"{name} is not symmetric within {sym_tol}")
    w = np.linalg.eigvalsh(symmetrize(M))
    if w.min() <= eig_floor:
        raise ValueError(f"{name} is not positive definite (min eig {w.min():.3e})")


@dataclass(frozen=True)
class LinearSystem:
    """Discrete-time LTI triple (A, B, D); A must be nonsingular."""

    A: np.ndarray
    B: np.ndarray
    D: np.ndarray

    def __post_init__(self):
        A = _as_matrix(self.A, "A")
        B = _as_matrix(self.B, "B")
        D = _as_matrix(self.D, "D")
        n = A.shape[0]
        if A.shape != (n, n):
            raise ValueError(f"A must be square, got {A.shape}")
        if B.shape[0] != n:
            raise ValueError(f"B must have {n} rows, got {B.shape}")
        if D.shape != (n, n):
            raise ValueError(f"D must be {n}x{n}, got {D.shape}")
        if np.linalg.cond(A) > 1e12:
            raise ValueError("A is singular or near-singular (cond > 1e12)")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "D", D)

    @property
    def n(self):
        return self.A.shape[0]

    @property
    def m(self):
        return self.B.shape[1]

    @property
    def noise_cov(self):
        """D D^T, the per-step process-noise covariance."""
        return self.D @ self.D.T


def triple_integrator_2d(dt=0.1):
    """Planar triple-integrator plant (6 states, 2 inputs) with noise map 0.1 I."""
    I2 = np.eye(2)
    Z2 = np.zeros((2, 2))
    A = np.block([[I2, dt * I2, Z2], [Z2, I2, dt * I2], [Z2, Z2, I2]])
    B = np.vstack([Z2, Z2, dt * I2])
    D = 0.1 * np.eye(6)
    return LinearSystem(A, B, D)


@dataclass(frozen=True)
class Ellipsoid:
    """Region {x : (x - center)^T shape^{-1} (x - center) <= 1} with shape PD."""

    center: np.ndarray
    shape: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.center, dtype=float).reshape(-1)
        P = _as_matrix(self.shape, "shape")
        if P.shape != (c.size, c.size):
            raise ValueError(f"shape must be {c.size}x{c.size}, got {P.shape}")
        _check_spd(P, "shape")
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "shape", symmetrize(P))

    @property
    def dim(self):
        return self.center.size

    def membership_value(self, x):
        """(x - c)^T P^{-1} (x - c); <= 1 means x is inside."""
        d = np.asarray(x, dtype=float).reshape(-1) - self.center
        return float(d @ np.linalg.solve(self.shape, d))

    def contains_point(self, x, tol=1e-9):
        return self.membership_value(x) <= 1.0 + tol

    def boundary_points(self, n_points, rng):
        """Uniformly sampled points on the boundary (image of the unit sphere)."""
        u = rng.standard_normal((n_points, self.dim))
        u /= np.linalg.norm(u, axis=1, keepdims=True)
        L = np.linalg.cholesky(self.shape)
        return self.center + u @ L.T

    def interior_points(self, n_points, rng):
        """Uniformly sampled points in the interior (volume-uniform)."""
        u = rng.standard_normal((n_points, self.dim))
        u /= np.linalg.norm(u, axis=1, keepdims=True)
        r = rng.uniform(0.0, 1.0, size=(n_points, 1)) ** (1.0 / self.dim)
        L = np.linalg.cholesky(self.shape)
        return self.center + (r * u) @ L.T


def point_ellipsoid(center, eps=POINT_SHAPE_EPS):
    """Degenerate mean-set for a single point, represented as eps * I."""
    c = np.asarray(center, dtype=float).reshape(-1)
    return Ellipsoid(c, eps * np.eye(c.size))


def is_point_ellipsoid(e, tol=1e-10):
    return float(np.linalg.eigvalsh(e.shape).max()) <= tol


@dataclass(frozen=True)
class GaussianBelief:
    """Gaussian state distribution N(mean, covariance)."""

    mean: np.ndarray
    covariance: np.ndarray

    def __post_init__(self):
        mu = np.asarray(self.mean, dtype=float).reshape(-1)
        S = _as_matrix(self.covariance, "covariance")
        if S.shape != (mu.size, mu.size):
            raise ValueError("covariance shape inconsistent with mean")
        _check_spd(S, "covariance")
        object.__setattr__(self, "mean", mu)
        object.__setattr__(self, "covariance", symmetrize(S))

    @property
    def dim(self):
        return self.mean.size


@dataclass(frozen=True)
class AmbiguitySet:
    """Ellipsoidal set of means paired with a fixed covariance bound."""

    mean_set: Ellipsoid
    covariance: np.ndarray

    def __post_init__(self):
        S = _as_matrix(self.covariance, "covariance")
        if S.shape != (self.mean_set.dim, self.mean_set.dim):
            raise ValueError("covariance shape inconsistent with mean set")
        _check_spd(S, "covariance")
        object.__setattr__(self, "covariance", symmetrize(S))

    @property
    def dim(self):
        return self.mean_set.dim

    @property
    def lambda_min_cov(self):
        return float(np.linalg.eigvalsh(self.covariance).min())


@dataclass(frozen=True)
class HalfspaceChance:
    """Chance constraint P(alpha^T z <= beta) >= 1 - epsilon."""

    alpha: np.ndarray
    beta: float
    epsilon: float

    def __post_init__(self):
        a = np.asarray(self.alpha, dtype=float).reshape(-1)
        if not np.any(a):
            raise ValueError("alpha must not be the zero vector")
        if not 0.0 <= self.epsilon <= 0.5:
            raise ValueError("epsilon must lie in [0, 0.5]")
        object.__setattr__(self, "alpha", a)
        object.__setattr__(self, "beta", float(self.beta))
        object.__setattr__(self, "epsilon", float(self.epsilon))

    @property
    def quantile(self):
        return normal_quantile(1.0 - self.epsilon)


@dataclass(frozen=True)
class PlanningScene:
    """Halfspace chance constraints on state and control plus the edge horizon N."""

    state_constraints: tuple = ()
    control_constraints: tuple = ()
    horizon: int = 1

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        object.__setattr__(self, "state_constraints", tuple(self.state_constraints))
        object.__setattr__(self, "control_constraints", tuple(self.control_constraints))


def control_box_constraints(m, beta, epsilon):
    """Axis-aligned control box |u_i| <= beta as 2m halfspace chance constraints."""
    out = []
    for i in range(m):
        e = np.zeros(m)
        e[i] = 1.0
        out.append(HalfspaceChance(e, beta, epsilon))
        out.append(HalfspaceChance(-e, beta, epsilon))
    return tuple(out)


@dataclass(frozen=True)
class ControlLaw:
    """Sequence of (K_k, v_k) pairs; gains (N, m, n), feedforwards (N, m)."""

    gains: np.ndarray
    feedforwards: np.ndarray

    def __post_init__(self):
        K = np.asarray(self.gains, dtype=float)
        v = np.asarray(self.feedforwards, dtype=float)
        if K.ndim != 3 or v.ndim != 2:
            raise ValueError("gains must be (N, m, n), feedforwards (N, m)")
        if K.shape[0] != v.shape[0] or K.shape[1] != v.shape[1]:
            raise ValueError("gains and feedforwards are inconsistent")
        object.__setattr__(self, "gains", K)
        object.__setattr__(self, "feedforwards", v)

    def __len__(self):
        return self.gains.shape[0]

    @property
    def m(self):
        return self.gains.shape[1]

    @property
    def n(self):
        return self.gains.shape[2]

    def steps(self):
        return [(self.gains[k], self.feedforwards[k]) for k in range(len(self))]

    @staticmethod
    def zeros(N, m, n):
        return ControlLaw(np.zeros((N, m, n)), np.zeros((N, m)))

    @staticmethod
    def empty(m, n):
        """Zero-length law; valid only as a concatenation identity."""
        return ControlLaw(np.zeros((0, m, n)), np.zeros((0, m)))


def _check_law(system, law):
    if len(law) == 0:
        raise ValueError("control law must be nonempty")
    if law.n != system.n or law.m != system.m:
        raise ValueError(
            f"law dimensions ({law.m}x{law.n}) do not match system ({system.m}x{system.n})"
        )


def propagate_mean(system, mu0, law):
    """Mean trajectory mu_{k+1} = A mu_k + B v_k (feedback cancels at the mean)."""
    _check_law(system, law)
    mu = np.asarray(mu0, dtype=float).reshape(-1)
    if mu.size != system.n:
        raise ValueError("mu0 dimension does not match system")
    out = np.empty((len(law) + 1, system.n))
    out[0] = mu
    for k in range(len(law)):
        out[k + 1] = system.A @ out[k] + system.B @ law.feedforwards[k]
    return out


def propagate_ellipsoid(system, e0, law):
    """Mean-set trajectory: centers follow the mean recursion, shapes P_{k+1} = A P_k A^T."""
    centers = propagate_mean(system, e0.center, law)
    shapes = [e0.shape]
    for _ in range(len(law)):
        shapes.append(symmetrize(system.A @ shapes[-1] @ system.A.T))
    return [Ellipsoid(c, P) for c, P in zip(centers, shapes)]


def propagate_covariance(system, sigma0, law):
    """Closed-loop covariances Sigma_{k+1} = (A + B K_k) Sigma_k (.)^T + D D^T."""
    _check_law(system, law)
    S = symmetrize(_as_matrix(sigma0, "sigma0"))
    if S.shape != (system.n, system.n):
        raise ValueError("sigma0 shape does not match system")
    DDt = system.noise_cov
    out = np.empty((len(law) + 1, system.n, system.n))
    out[0] = S
    for k in range(len(law)):
        Acl = system.A + system.B @ law.gains[k]
        out[k + 1] = symmetrize(Acl @ out[k] @ Acl.T + DDt)
    return out


def chance_margin(constraint, mean, cov):
    """Phi^{-1}(1 - eps) sqrt(a^T S a) + a^T mu - beta; the constraint holds iff <= 0."""
    a = constraint.alpha
    mu = np.asarray(mean, dtype=float).reshape(-1)
    var = float(a @ np.asarray(cov, dtype=float) @ a)
    if var < 0.0:
        warnings.warn(f"negative constraint variance {var:.3e} clamped to 0", stacklevel=2)
        var = 0.0
    return constraint.quantile * np.sqrt(var) + float(a @ mu) - constraint.beta


def robust_sup_linear(e, alpha):
    """sup of alpha^T mu over the ellipsoid: alpha^T c + sqrt(alpha^T P alpha).

    Closed form from strong duality of the one-constraint QCQP.
    """
    a = np.asarray(alpha, dtype=float).reshape(-1)
    return float(a @ e.center + np.sqrt(max(0.0, a @ e.shape @ a)))


def _homogeneous_form(e):
    """Matrix M with [x;1]^T M [x;1] = (x-c)^T P^{-1} (x-c) - 1."""
    Pinv = np.linalg.inv(e.shape)
    Pinv = symmetrize(Pinv)
    c = e.center
    M = np.empty((e.dim + 1, e.dim + 1))
    M[: e.dim, : e.dim] = Pinv
    M[: e.dim, -1] = -Pinv @ c
    M[-1, : e.dim] = M[: e.dim, -1]
    M[-1, -1] = c @ Pinv @ c - 1.0
    return M


def containment_gap(inner, outer):
    """max_{lam >= 0} lambda_min(lam * M_inner - M_outer) and the maximizing lam.

    The S-procedure makes the gap >= 0 equivalent to inner being a subset of
    outer.  The objective is concave in lam, so a bracket expansion followed by
    golden-section search finds the maximizer; every evaluation is a single
    symmetric eigensolve.
    """
    if inner.dim != outer.dim:
        raise ValueError("ellipsoids must share a dimension")
    M_in = _homogeneous_form(inner)
    M_out = _homogeneous_form(outer)

    def g(lam):
        return float(np.linalg.eigvalsh(lam * M_in - M_out).min())

    # Any feasible lam satisfies lam * P_in^{-1} >= P_out^{-1} on the top block.
    n = inner.dim
    gen = scipy_eigh(M_out[:n, :n], M_in[:n, :n], eigvals_only=True)
    lo = 0.0
    hi = max(2.0 * float(gen.max()), 1.0)
    while g(hi) > g(0.5 * hi) and hi < 1e14:
        hi *= 4.0
    phi = 0.5 * (np.sqrt(5.0) - 1.0)
    a, b = lo, hi
    x1 = b - phi * (b - a)
    x2 = a + phi * (b - a)
    g1, g2 = g(x1), g(x2)
    for _ in range(200):
        if b - a <= 1e-12 * max(1.0, b):
            break
        if g1 < g2:
            a, x1, g1 = x1, x2, g2
            x2 = a + phi * (b - a)
            g2 = g(x2)
        else:
            b, x2, g2 = x2, x1, g1
            x1 = b - phi * (b - a)
            g1 = g(x1)
    lam = 0.5 * (a + b)
    return g(lam), lam


def ellipsoid_contains(inner, outer, tol=1e-9):
    """Exact containment test inner being a subset of outer via the S-procedure."""
    gap, lam = containment_gap(inner, outer)
    scale = max(1.0, float(np.linalg.norm(_homogeneous_form(outer), 2)),
                lam * float(np.linalg.norm(_homogeneous_form(inner), 2)))
    return gap >= -tol * scale


@dataclass(frozen=True)
class FeasibilityReport:
    """Per-step chance margins and terminal checks for one steering maneuver."""

    ok: bool
    state_margins: np.ndarray  # (N, #state constraints)
    control_margins: np.ndarray  # (N, #control constraints)
    terminal_mean_ok: bool
    terminal_mean_gap: float
    terminal_cov_gap: float  # lambda_max(Sigma_N) - lambda_min(Sigma_G)
    tol: float = 1e-6

    @property
    def worst_state_margin(self):
        return float(self.state_margins.max()) if self.state_margins.size else -np.inf

    @property
    def worst_control_margin(self):
        return float(self.control_margins.max()) if self.control_margins.size else -np.inf

    def summary(self):
        return (
            f"{'PASS' if self.ok else 'FAIL'} "
            f"state={self.worst_state_margin:.3e} control={self.worst_control_margin:.3e} "
            f"mean_gap={self.terminal_mean_gap:.3e} cov_gap={self.terminal_cov_gap:.3e}"
        )


def _margins_along(scene, law, means, covs, shapes=None):
    N = len(law)
    ns = len(scene.state_constraints)
    nc = len(scene.control_constraints)
    sm = np.full((N, ns), -np.inf)
    cm = np.full((N, nc), -np.inf)
    for k in range(N):
        for j, c in enumerate(scene.state_constraints):
            margin = chance_margin(c, means[k], covs[k])
            if shapes is not None:
                # robust term: sup of alpha^T mu over the step-k mean set
                margin += np.sqrt(max(0.0, c.alpha @ shapes[k] @ c.alpha))
            sm[k, j] = margin
        Kk = law.gains[k]
        vk = law.feedforwards[k]
        u_cov = Kk @ covs[k] @ Kk.T
        for j, c in enumerate(scene.control_constraints):
            cm[k, j] = chance_margin(c, vk, u_cov)
    return sm, cm


def validate_trajectory(system, scene, init, law, goal, tol=1e-6):
    """Check a given law against all constraints for a Gaussian initial distribution.

    State/control chance margins at every step, terminal mean membership in the
    goal ellipsoid and lambda_max(Sigma_N) <= lambda_min(Sigma_G).
    """
    _check_law(system, law)
    means = propagate_mean(system, init.mean, law)
    covs = propagate_covariance(system, init.covariance, law)
    sm, cm = _margins_along(scene, law, means, covs)
    mean_gap = goal.mean_set.membership_value(means[-1]) - 1.0
    mean_ok = mean_gap <= tol
    cov_gap = float(np.linalg.eigvalsh(covs[-1]).max()) - goal.lambda_min_cov
    ok = (
        mean_ok
        and cov_gap <= tol
        and (sm.size == 0 or sm.max() <= tol)
        and (cm.size == 0 or cm.max() <= tol)
    )
    return FeasibilityReport(ok, sm, cm, mean_ok, mean_gap, cov_gap, tol)


def validate_ambiguity_trajectory(system, scene, init, law, goal, tol=1e-6):
    """Like validate_trajectory, but for an ambiguity-set initial condition.

    State margins carry the robust sup over the propagated mean set, and the
    terminal mean check is exact ellipsoid containment of the propagated mean
    set in the goal ellipsoid.
    """
    _check_law(system, law)
    ells = propagate_ellipsoid(system, init.mean_set, law)
    covs = propagate_covariance(system, init.covariance, law)
    means = np.array([e.center for e in ells])
    shapes = [e.shape for e in ells]
    sm, cm = _margins_along(scene, law, means, covs, shapes=shapes)
    gap, _ = containment_gap(ells[-1], goal.mean_set)
    mean_ok = gap >= -tol
    cov_gap = float(np.linalg.eigvalsh(covs[-1]).max()) - goal.lambda_min_cov
    ok = (
        mean_ok
        and cov_gap <= tol
        and (sm.size == 0 or sm.max() <= tol)
        and (cm.size == 0 or cm.max() <= tol)
    )
    return FeasibilityReport(ok, sm, cm, mean_ok, -gap, cov_gap, tol)
