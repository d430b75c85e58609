"""One implicit step ``u + lam (A phi(u) + F(u)) = v``.

With ``w = phi(u)`` on interior nodes and the perturbation frozen at the
previous outer iterate, the step is the minimiser of the strictly convex

    J(w) = sum_i m_i (B(w_i) + eps w_i^2 / 2 - vt_i w_i) + lam E(w),

whose first-order condition ``beta(w) + eps w + lam A w = vt`` is the step
equation.  ``J`` is minimised by damped Newton with Armijo backtracking;
an outer Picard loop updates ``vt = v - lam F(u)``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from . import operator as op
from .brackets import j_integral, positive_part_norm
from .errors import ConfigurationError, DomainError, NumericalError
from .nonlinearity import nemytskii

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ResolventConfig:
    """Step size and solver tolerances for one resolvent evaluation.

    ``outer_tol`` bounds the weighted L1 residual of the step equation;
    ``inner_tol`` bounds the weighted L1 residual of each frozen-perturbation
    solve (defaults to ``outer_tol / 10``).
    """

    lam: float
    outer_max_iter: int = 100
    outer_tol: float = 1e-10
    inner_tol: float | None = None
    inner_max_iter: int = 200
    epsilon_reg: float = 0.0
    hessian_floor: float = 1e-9
    max_backtracks: int = 60

    def __post_init__(self):
        if not self.lam > 0:
            raise ConfigurationError(f"step lam must be positive, got {self.lam}")
        if self.outer_tol <= 0 or (self.inner_tol is not None and self.inner_tol <= 0):
            raise ConfigurationError("solver tolerances must be positive")
        if self.epsilon_reg < 0:
            raise ConfigurationError("epsilon_reg must be nonnegative")

    @property
    def inner_tolerance(self):
        return self.inner_tol if self.inner_tol is not None else 0.1 * self.outer_tol

    def with_lam(self, lam):
        return ResolventConfig(
            lam,
            self.outer_max_iter,
            self.outer_tol,
            self.inner_tol,
            self.inner_max_iter,
            self.epsilon_reg,
            self.hessian_floor,
            self.max_backtracks,
        )


@dataclass
class StepDiagnostics:
    outer_iters: int
    inner_iters: int
    residual_l1: float
    energy_after: float
    contraction_margin: float
    objective_trace: list = field(default_factory=list, repr=False)


def check_step(lam, omega):
    """Raise unless ``lam * omega < 1``."""
    if not lam * omega < 1.0:
        raise ConfigurationError(
            f"step lam={lam:g} with Lipschitz constant omega={omega:g} violates lam*omega < 1"
        )


class _InnerProblem:
    """The convex objective ``J`` for one frozen right-hand side."""

    def __init__(self, phi, kernel, lam, eps, vt, floor):
        self.phi = phi
        self.kernel = kernel
        self.lam = lam
        self.eps = eps
        self.vt = vt
        self.floor = floor
        self.m = kernel.grid.weights[kernel.grid.interior]

    def objective(self, w):
        try:
            B = self.phi.beta_primitive(w)
        except DomainError:
            return np.inf
        local = np.sum(self.m * (B + 0.5 * self.eps * w * w - self.vt * w))
        return float(local + self.lam * op.energy_interior(w, self.kernel))

    def gradient(self, w):
        """Gradient of ``J``; divided by ``m`` it is the pointwise step residual."""
        u = self.phi.beta(w)
        return self.m * (u + self.eps * w - self.vt) + self.lam * op.gradient_interior(w, self.kernel)

    def noise_floor(self, w):
        """Gradient size attributable to rounding in ``w``.

        Where ``psi`` (``p < 2``) or ``beta`` (``m > 1``) is only Hoelder
        continuous at 0, perturbing ``w`` by a few ulps ``du`` moves the
        gradient by ``du^(p-1)`` or ``du^(1/m)``, far above ``du``.
        """
        scale = max(float(np.max(np.abs(w))), float(np.max(np.abs(self.vt))), 1e-300)
        du = 8.0 * np.finfo(float).eps * scale
        p = self.kernel.p
        floor = 0.0
        if p < 2:
            total = float(self.kernel.interior_block.sum() + self.kernel.kappa.sum())
            floor += self.lam * total * du ** (p - 1.0)
        if self.phi.m is not None and self.phi.m > 1:
            floor += float(np.sum(self.m)) * du ** (1.0 / self.phi.m)
        return floor

    def hessian(self, w, secant=None, secant_pairs=None):
        """Hessian of ``J``.

        On ``secant`` nodes the local curvature is ``max(beta'(w), beta(w)/w)``
        and on ``secant_pairs`` the pair curvature is majorised the same way;
        this stops Newton from oscillating across points where ``beta`` or
        ``psi`` has infinite slope.
        """
        scale = max(float(np.max(np.abs(w))), float(np.max(np.abs(self.vt))), 1e-300)
        wf = np.maximum(np.abs(w), self.floor * scale)
        ws = np.where(w < 0, -wf, wf)
        local = self.phi.beta_derivative(ws)
        if secant is not None and np.any(secant):
            local = np.where(secant, np.maximum(local, self.phi.beta(ws) / ws), local)
        H = self.lam * op.hessian_interior(
            w, self.kernel, floor=self.floor * scale, secant_pairs=secant_pairs, secant_nodes=secant
        )
        H[np.diag_indices_from(H)] += self.m * (local + self.eps)
        return H


def _newton_direction(H, g):
    try:
        factor = scipy.linalg.cho_factor(H, check_finite=False)
        d = -scipy.linalg.cho_solve(factor, g, check_finite=False)
    except (np.linalg.LinAlgError, ValueError):
        d = None
    if d is None or not np.all(np.isfinite(d)) or np.dot(g, d) >= 0:
        # fall back to a diagonally scaled gradient step
        diag = np.abs(np.diag(H))
        diag = np.where(np.isfinite(diag) & (diag > 0), diag, 1.0)
        d = -g / diag
    return d


def _solve_inner(problem, w, cfg):
    """Damped Newton on ``J``; returns ``(w, gradient, iterations, objective trace)``.

    Stops when the gradient L1 norm is at most the inner tolerance.  If the
    iteration stalls (10 iterations without improvement, the iteration cap
    or a failed line search) with the best gradient already below the
    rounding floor of :meth:`_InnerProblem.noise_floor`, the best iterate is
    returned instead.
    """
    tol = cfg.inner_tolerance
    g = problem.gradient(w)
    J = problem.objective(w)
    trace = [J]
    secant = np.zeros(len(w), dtype=bool)
    # pair safeguard only matters where psi has infinite slope at 0
    pairs = np.zeros((len(w), len(w)), dtype=bool) if problem.kernel.p < 2 else None
    best = (float(np.sum(np.abs(g))), w, g, 0)
    stall = 0
    failure = "resolvent inner solve did not converge"
    for it in range(cfg.inner_max_iter + 1):
        gnorm = float(np.sum(np.abs(g)))
        if gnorm <= tol:
            return w, g, it, trace
        if gnorm < best[0]:
            best = (gnorm, w, g, it)
            stall = 0
        else:
            stall += 1
            if stall >= 10 and best[0] <= problem.noise_floor(best[1]):
                return best[1], best[2], it, trace
        if it == cfg.inner_max_iter:
            break
        d = _newton_direction(problem.hessian(w, secant, pairs), g)
        crossing = (w != 0) & (np.sign(w + d) == -np.sign(w)) & ~secant
        changed = bool(np.any(crossing))
        secant |= crossing
        if pairs is not None:
            D = w[:, None] - w[None, :]
            Dn = D + d[:, None] - d[None, :]
            flips = (D != 0) & (np.sign(Dn) == -np.sign(D)) & ~pairs
            if np.any(flips):
                pairs |= flips
                changed = True
        if changed:
            d = _newton_direction(problem.hessian(w, secant, pairs), g)
        slope = float(np.dot(g, d))
        alpha = 1.0
        accepted = False
        for _ in range(cfg.max_backtracks):
            w_new = w + alpha * d
            J_new = problem.objective(w_new)
            if J_new <= J + 1e-4 * alpha * slope:
                accepted = True
                break
            # near the minimiser J is flat to rounding; accept steps that do
            # not raise J beyond rounding and shrink the gradient
            if np.isfinite(J_new) and J_new - J <= 1e-13 * (abs(J) + 1e-300):
                g_new = problem.gradient(w_new)
                if np.sum(np.abs(g_new)) < gnorm:
                    accepted = True
                    break
            alpha *= 0.5
        if not accepted:
            failure = "line search failed in resolvent inner solve"
            break
        w = w_new
        J = J_new
        g = problem.gradient(w)
        trace.append(J)
    if best[0] <= problem.noise_floor(best[1]):
        return best[1], best[2], best[3], trace
    raise NumericalError(
        failure,
        gradient_l1=best[0],
        noise_floor=problem.noise_floor(best[1]),
        iterations=it,
    )


def resolvent_step(v, phi, pert, kernel, cfg, w0=None):
    """Solve ``u + lam (A phi(u) + F(u)) = v`` (plus ``eps phi(u)`` if regularised).

    Parameters
    ----------
    v : ndarray
        Right-hand side on all grid nodes; exterior entries are ignored (the
        homogeneous exterior datum is imposed).
    phi : Phi
    pert : Perturbation
    kernel : KernelTable
        Must be dense.
    cfg : ResolventConfig
    w0 : ndarray, optional
        Initial interior guess for ``phi(u)``; defaults to ``phi(v)``.

    Returns
    -------
    u : ndarray
        Solution on all nodes (zero outside the domain).
    diag : StepDiagnostics

    Raises
    ------
    ConfigurationError
        If ``lam * omega >= 1`` or the kernel is not dense.
    NumericalError
        If the inner solve or the outer Picard loop fails to converge.
    """
    grid = kernel.grid
    lam = float(cfg.lam)
    omega = pert.omega
    check_step(lam, omega)
    if not kernel.dense:
        raise ConfigurationError("the resolvent solver needs a dense kernel table")
    v = np.asarray(v, dtype=float)
    if not np.all(np.isfinite(v)):
        raise NumericalError("non-finite right-hand side in resolvent step")
    I = grid.interior
    m = grid.weights[I]
    v_int = v[I]
    w = phi(v_int) if w0 is None else np.array(w0, dtype=float)
    u_full = grid.zeros()

    def perturbation(u_int):
        if omega == 0.0 and pert.rule is None:
            return np.zeros_like(u_int)
        u_full[I] = u_int
        return nemytskii(pert, grid, u_full)[I]

    F = perturbation(phi.beta(w))
    inner_total = 0
    trace = []
    for outer in range(1, cfg.outer_max_iter + 1):
        problem = _InnerProblem(phi, kernel, lam, cfg.epsilon_reg, v_int - lam * F, cfg.hessian_floor)
        w, g, inner_its, inner_trace = _solve_inner(problem, w, cfg)
        inner_total += inner_its
        trace.extend(inner_trace)
        u_int = phi.beta(w)
        F_new = perturbation(u_int)
        residual = float(np.sum(np.abs(g + lam * m * (F_new - F))))
        F = F_new
        if residual <= max(cfg.outer_tol, problem.noise_floor(w)):
            break
    else:
        raise NumericalError(
            "outer Picard iteration did not converge", residual_l1=residual, iterations=outer
        )
    u = grid.extend(u_int)
    diag = StepDiagnostics(
        outer_iters=outer,
        inner_iters=inner_total,
        residual_l1=residual,
        energy_after=op.energy_interior(w, kernel),
        contraction_margin=1.0 - lam * omega,
        objective_trace=trace,
    )
    return u, diag


def step_residual(u, v, phi, pert, kernel, lam, epsilon_reg=0.0):
    """Weighted L1 norm of ``u + eps phi(u) + lam (A phi(u) + F(u)) - v`` over the interior."""
    grid = kernel.grid
    I = grid.interior
    w = phi(np.asarray(u, dtype=float))
    r = (
        np.asarray(u)[I]
        + epsilon_reg * w[I]
        + lam * (op.apply_operator(w, kernel)[I] + nemytskii(pert, grid, u)[I])
        - np.asarray(v)[I]
    )
    return float(np.sum(grid.weights[I] * np.abs(r)))


@dataclass
class ContractionReport:
    """Outcome of the T-contraction and complete-resolvent checks for one pair."""

    factor: float
    t_contraction_lhs: float
    t_contraction_rhs: float
    t_contraction_ok: bool
    j_checks: list = field(default_factory=list)

    @property
    def margin(self):
        return self.t_contraction_rhs - self.t_contraction_lhs

    @property
    def passed(self):
        return self.t_contraction_ok and all(ok for *_, ok in self.j_checks)


def resolvent_contraction_check(v1, v2, phi, pert, kernel, cfg, j_family=(), slack=1e-8):
    """Evaluate ``J v1``, ``J v2`` and check T-contraction and completeness.

    The T-contraction bound is
    ``||[J v1 - J v2]^+||_1 <= (1 - lam omega)^(-1) ||[v1 - v2]^+||_1``;
    for every ``j`` in ``j_family`` the completeness bound is
    ``sum m j(J v1) <= sum m j(v1 / (1 - lam omega))``, which follows from
    rewriting the step as a resolvent of the shifted accretive operator.
    """
    u1, _ = resolvent_step(v1, phi, pert, kernel, cfg)
    u2, _ = resolvent_step(v2, phi, pert, kernel, cfg)
    grid = kernel.grid
    factor = 1.0 / (1.0 - cfg.lam * pert.omega)
    lhs = positive_part_norm(grid, u1 - u2)
    rhs = factor * positive_part_norm(grid, np.asarray(v1) - np.asarray(v2))
    checks = []
    for j in j_family:
        jl = j_integral(j, grid, u1)
        jr = j_integral(j, grid, factor * np.asarray(v1))
        checks.append((str(j), jl, jr, jl <= jr + slack))
    return ContractionReport(factor, lhs, rhs, lhs <= rhs + slack, checks)
