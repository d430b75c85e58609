"""Implicit-Euler evolution (mild solutions) and trajectory-level checks."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import operator as op
from .brackets import bracket, truncate
from .errors import ConfigurationError, EvolutionError, NumericalError
from .nonlinearity import Perturbation, Phi, signed_power
from .resolvent import ResolventConfig, check_step, resolvent_step

log = logging.getLogger(__name__)

# 3-point Gauss-Legendre rule on [0, 1]
_GAUSS_X = 0.5 + 0.5 * np.array([-math.sqrt(0.6), 0.0, math.sqrt(0.6)])
_GAUSS_W = np.array([5.0, 8.0, 5.0]) / 18.0


# --------------------------------------------------------------------------
# forcing


class Forcing:
    """Time-dependent source ``g(t)`` on a grid, zero outside the domain.

    ``rule(t, grid)`` must return a full-length field.  Use the class methods
    for the common cases.
    """

    def __init__(self, rule, is_zero=False, description="custom"):
        self._rule = rule
        self.is_zero = is_zero
        self.description = description

    @classmethod
    def zero(cls):
        return cls(lambda t, grid: grid.zeros(), is_zero=True, description="zero")

    @classmethod
    def separable(cls, time_factor, profile, description=None):
        """``g(t, x) = time_factor(t) * profile(x)`` with ``profile`` a full-length field."""
        profile = np.asarray(profile, dtype=float)
        return cls(
            lambda t, grid: float(time_factor(t)) * profile,
            description=description or "separable",
        )

    @classmethod
    def constant(cls, profile):
        return cls.separable(lambda t: 1.0, profile, description="constant")

    def __call__(self, t, grid):
        out = np.array(self._rule(float(t), grid), dtype=float)
        out[grid.exterior] = 0.0
        return out

    def __str__(self):
        return self.description


def project_forcing(g, t_a, t_b, grid):
    """Time average of ``g`` over ``[t_a, t_b]`` by 3-point Gauss quadrature."""
    if not t_a < t_b:
        raise ConfigurationError(f"projection interval needs t_a < t_b, got [{t_a}, {t_b}]")
    if getattr(g, "is_zero", False):
        return grid.zeros()
    out = grid.zeros()
    for x, w in zip(_GAUSS_X, _GAUSS_W):
        out += w * g(t_a + x * (t_b - t_a), grid)
    return out


# --------------------------------------------------------------------------
# problem and configuration


@dataclass
class ProblemSpec:
    """The discrete problem: grid, kernel, ``phi``, ``f`` and ``g``."""

    kernel: object
    phi: Phi
    pert: Perturbation = field(default_factory=Perturbation)
    forcing: Forcing = field(default_factory=Forcing.zero)

    @property
    def grid(self):
        return self.kernel.grid

    @property
    def p(self):
        return self.kernel.p

    @property
    def s(self):
        return self.kernel.s

    @property
    def d(self):
        return self.kernel.d

    @property
    def omega(self):
        return self.pert.omega

    @property
    def m(self):
        """Power-law exponent of ``phi`` (``None`` for tabulated ``phi``)."""
        return self.phi.m


@dataclass(frozen=True)
class EvolutionConfig:
    T_final: float
    N_steps: int
    record_every: int = 1
    solver: ResolventConfig | None = None

    def __post_init__(self):
        if not self.T_final > 0:
            raise ConfigurationError(f"T_final must be positive, got {self.T_final}")
        if self.N_steps < 1 or self.record_every < 1:
            raise ConfigurationError("N_steps and record_every must be positive integers")

    @property
    def tau(self):
        return self.T_final / self.N_steps

    def resolvent_config(self):
        if self.solver is None:
            return ResolventConfig(self.tau)
        return self.solver.with_lam(self.tau)


# --------------------------------------------------------------------------
# norms


def lq_norm(grid, u, q):
    """Weighted ``L^q`` norm over interior nodes (``q = inf`` gives the max)."""
    I = grid.interior
    u = np.abs(np.asarray(u, dtype=float)[I])
    if math.isinf(q):
        return float(np.max(u)) if len(u) else 0.0
    return float(np.sum(grid.weights[I] * u**q) ** (1.0 / q))


def _norm_orders(m):
    orders = {"l1": 1.0, "l2": 2.0, "linf": math.inf}
    if m is not None:
        orders["lmp1"] = m + 1.0
    return orders


@dataclass
class Trajectory:
    """Recorded output of :func:`evolve`.

    ``times``/``fields``/``norms``/``energies`` are at recorded times; the
    ``step_*`` arrays cover every step ``n = 0..N`` (index 0 is the initial
    state; ``step_forcing[0]`` and ``step_increment[0]`` are placeholders).
    """

    problem: ProblemSpec
    tau: float
    times: list
    fields: list
    norms: dict
    energies: list
    diagnostics: list
    step_times: list
    step_energy: list
    step_increment: list
    step_forcing: list
    record_every: int

    @property
    def grid(self):
        return self.problem.grid

    @property
    def u0(self):
        return self.fields[0]

    @property
    def n_steps(self):
        return len(self.step_times) - 1

    def step_index(self, k):
        """Step number of the ``k``-th recorded time."""
        return int(round(self.times[k] / self.tau))

    def norm_series(self, key):
        return np.asarray(self.norms[key])

    def to_csv(self, path):
        """Write ``time, l1, l2, lmp1, linf, energy, outer_iters, residual`` rows."""
        path = Path(path)
        cols = ["time", "l1", "l2", "lmp1", "linf", "energy", "outer_iters", "residual"]
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(cols)
            for k, t in enumerate(self.times):
                n = self.step_index(k)
                d = self.diagnostics[n - 1] if n > 0 else None
                writer.writerow(
                    [
                        repr(float(t)),
                        repr(self.norms["l1"][k]),
                        repr(self.norms["l2"][k]),
                        repr(self.norms["lmp1"][k]) if "lmp1" in self.norms else "nan",
                        repr(self.norms["linf"][k]),
                        repr(float(self.energies[k])),
                        d.outer_iters if d else 0,
                        repr(float(d.residual_l1)) if d else "0.0",
                    ]
                )

    def write_snapshots(self, path):
        """Flat text: one row per recorded time, ``time`` then interior values."""
        I = self.grid.interior
        data = np.column_stack([np.asarray(self.times), np.asarray(self.fields)[:, I]])
        np.savetxt(path, data, fmt="%.17g")


def evolve(u0, problem, cfg):
    """Run implicit Euler ``u_n + tau (A phi(u_n) + F(u_n)) = u_{n-1} + tau g_n``.

    ``g_n`` is the time average of the forcing over the ``n``-th step.

    Raises
    ------
    ConfigurationError
        If ``tau * omega >= 1``.
    EvolutionError
        If a step fails; the partial trajectory is attached.
    """
    grid = problem.grid
    kernel = problem.kernel
    phi = problem.phi
    tau = cfg.tau
    check_step(tau, problem.omega)
    rcfg = cfg.resolvent_config()
    u = np.array(u0, dtype=float)
    if u.shape != (grid.size,):
        raise ConfigurationError(f"initial field has shape {u.shape}, grid has {grid.size} nodes")
    u[grid.exterior] = 0.0
    orders = _norm_orders(problem.m)

    traj = Trajectory(
        problem=problem,
        tau=tau,
        times=[],
        fields=[],
        norms={k: [] for k in orders},
        energies=[],
        diagnostics=[],
        step_times=[0.0],
        step_energy=[op.energy_interior(phi(u[grid.interior]), kernel)],
        step_increment=[0.0],
        step_forcing=[grid.zeros()],
        record_every=cfg.record_every,
    )

    def record(t, u, energy):
        traj.times.append(t)
        traj.fields.append(u.copy())
        for key, q in orders.items():
            traj.norms[key].append(lq_norm(grid, u, q))
        traj.energies.append(energy)

    record(0.0, u, traj.step_energy[0])
    I = grid.interior
    for n in range(1, cfg.N_steps + 1):
        t_a, t_b = (n - 1) * tau, n * tau
        g_n = project_forcing(problem.forcing, t_a, t_b, grid)
        try:
            u_new, diag = resolvent_step(u + tau * g_n, phi, problem.pert, kernel, rcfg)
        except (NumericalError, FloatingPointError) as exc:
            details = getattr(exc, "details", {})
            raise EvolutionError(
                f"step {n} (t={t_b:g}) failed: {exc}", step=n, trajectory=traj, **details
            ) from exc
        traj.diagnostics.append(diag)
        traj.step_times.append(t_b)
        traj.step_energy.append(diag.energy_after)
        traj.step_increment.append(float(np.sum(grid.weights[I] * np.abs(u_new[I] - u[I]))))
        traj.step_forcing.append(g_n)
        u = u_new
        if n % cfg.record_every == 0 or n == cfg.N_steps:
            record(t_b, u, diag.energy_after)
    return traj


# --------------------------------------------------------------------------
# reports


@dataclass
class CheckReport:
    """Observed vs bound series for one trajectory-level inequality."""

    name: str
    times: np.ndarray
    observed: np.ndarray
    bound: np.ndarray
    slack: np.ndarray
    passed: bool
    extra: dict = field(default_factory=dict)

    @property
    def margin(self):
        """Smallest ``bound - observed`` (negative means violation)."""
        if len(self.observed) == 0:
            return math.inf
        return float(np.min(self.bound - self.observed))


def _verdict(observed, bound, rel, atol=0.0):
    slack = rel * np.maximum(np.abs(bound), np.abs(observed)) + atol
    return slack, bool(np.all(observed <= bound + slack))


def _require_every_step(traj, what):
    if traj.record_every != 1:
        raise ConfigurationError(f"{what} needs a trajectory recorded at every step")


def growth_estimate(traj, q, rel_tol=1e-6, atol=1e-12, mode="discrete"):
    """``||u(t)||_q <= e^{wt} ||u0||_q + int_0^t e^{w(t-r)} ||g(r)||_q dr``.

    ``mode="discrete"`` uses the implicit-Euler analogue: ``e^{w t_n}`` becomes
    ``(1 - tau w)^{-n}`` and the integral is the step sum over the projected
    forcing.  ``mode="continuous"`` integrates the actual ``g`` with the exact
    exponential (3-point Gauss per step); with ``w > 0`` the scheme is only
    guaranteed to satisfy this form in the limit ``tau -> 0``.
    """
    grid = traj.grid
    tau = traj.tau
    w = traj.problem.omega
    key = {1: "l1", 2: "l2", math.inf: "linf"}.get(q)
    observed = (
        np.asarray(traj.norms[key])
        if key is not None
        else np.array([lq_norm(grid, u, q) for u in traj.fields])
    )
    N = traj.n_steps
    u0q = lq_norm(grid, traj.u0, q)
    g = traj.problem.forcing
    if mode == "discrete":
        rho = 1.0 / (1.0 - tau * w)
        gq = np.array([0.0] + [lq_norm(grid, f, q) for f in traj.step_forcing[1:]])
        acc = np.zeros(N + 1)
        for n in range(1, N + 1):
            acc[n] = rho * (acc[n - 1] + tau * gq[n])
        full = u0q * rho ** np.arange(N + 1) + acc
    elif mode == "continuous":
        # I_n = int_0^{t_n} e^{-w r} ||g(r)||_q dr by Gauss quadrature on each step
        cell = np.zeros(N + 1)
        if not getattr(g, "is_zero", False):
            for n in range(1, N + 1):
                t_a = (n - 1) * tau
                r = t_a + _GAUSS_X * tau
                vals = [math.exp(-w * ri) * lq_norm(grid, g(ri, grid), q) for ri in r]
                cell[n] = tau * float(np.dot(_GAUSS_W, vals))
        tn = np.arange(N + 1) * tau
        full = np.exp(w * tn) * (u0q + np.cumsum(cell))
    else:
        raise ConfigurationError(f"unknown growth-estimate mode {mode!r}")
    idx = [traj.step_index(k) for k in range(len(traj.times))]
    bound = full[idx]
    slack, ok = _verdict(observed, bound, rel_tol, atol)
    return CheckReport(f"growth estimate in L^{q} ({mode})", np.asarray(traj.times), observed, bound, slack, ok)


def comparison_estimate(traj1, traj2, nu, rel_tol=1e-6, atol=1e-12):
    """``||[u1 - u2]^nu||_1`` against the bracket-driven comparison bound.

    ``nu`` is ``"+"`` (positive part) or ``1`` (absolute value).  Uses the
    implicit-Euler form of the bound: with ``rho = (1 - tau w)^{-1}``,
    ``b_n = rho (b_{n-1} + tau [u1_n - u2_n, g1_n - g2_n]_nu)``.
    """
    _require_every_step(traj1, "comparison estimate")
    _require_every_step(traj2, "comparison estimate")
    if traj1.n_steps != traj2.n_steps or traj1.tau != traj2.tau:
        raise ConfigurationError("paired trajectories must share the time lattice")
    grid = traj1.grid
    tau = traj1.tau
    rho = 1.0 / (1.0 - tau * max(traj1.problem.omega, traj2.problem.omega))
    I = grid.interior
    mI = grid.weights[I]

    def size(D):
        D = D[I]
        if nu == "+":
            return float(np.sum(mI * np.maximum(D, 0.0)))
        return float(np.sum(mI * np.abs(D)))

    observed = [size(traj1.fields[0] - traj2.fields[0])]
    bound = [observed[0]]
    b = observed[0]
    for n in range(1, traj1.n_steps + 1):
        D = traj1.fields[n] - traj2.fields[n]
        dg = traj1.step_forcing[n] - traj2.step_forcing[n]
        b = rho * (b + tau * bracket(nu, grid, D, dg))
        observed.append(size(D))
        bound.append(b)
    observed = np.array(observed)
    bound = np.array(bound)
    slack, ok = _verdict(observed, bound, rel_tol, atol)
    return CheckReport(f"comparison estimate ({nu})", np.asarray(traj1.times), observed, bound, slack, ok)


def order_preserved(traj1, traj2, atol=1e-10):
    """True if ``u1 <= u2`` nodally (up to ``atol``) at every recorded time."""
    return all(np.all(a <= b + atol) for a, b in zip(traj1.fields, traj2.fields))


def energy_dissipation(traj, atol=1e-8):
    """``E(phi(u_n))`` nonincreasing and the per-step dissipation identity.

    Returns a report whose ``observed`` is ``E_n - E_{n-1}`` and ``bound`` is 0;
    ``extra["identity_ratio"]`` holds ``(E_{n-1} - E_n) / (tau sum m phi'(u) |du/tau|^2)``
    per step (``nan`` where the rate vanishes).
    """
    _require_every_step(traj, "energy dissipation")
    grid = traj.grid
    I = grid.interior
    phi = traj.problem.phi
    E = np.asarray(traj.step_energy)
    dE = np.diff(E)
    ratios = []
    for n in range(1, traj.n_steps + 1):
        du = (traj.fields[n][I] - traj.fields[n - 1][I]) / traj.tau
        mid = 0.5 * (traj.fields[n][I] + traj.fields[n - 1][I])
        rate = traj.tau * float(np.sum(grid.weights[I] * phi.derivative(mid) * du * du))
        ratios.append(-dE[n - 1] / rate if rate > 0 else math.nan)
    zeros = np.zeros_like(dE)
    slack = np.full_like(dE, atol)
    ok = bool(np.all(dE <= atol))
    return CheckReport(
        "energy dissipation",
        np.asarray(traj.step_times[1:]),
        dE,
        zeros,
        slack,
        ok,
        {"identity_ratio": np.array(ratios)},
    )


def level_set_energy_check(traj, lam, rel_tol=1e-8, atol=1e-12):
    """Discrete level-set energy inequality for ``phi(u) = u^m``, ``m >= 1``, ``g = f = 0``.

    Checks, for every step ``n``,
    ``||G(u_n)||_{m+1}^{m+1} + (m+1) tau sum_{k<=n} (1/2)[G(u_k)^m]^p <= ||G(u_0)||_{m+1}^{m+1}``
    with ``G = G_lam``.  The factor 1/2 is the pairing
    ``[G(u), A u^m]_{m+1} >= (1/2)[G(u)^m]^p`` under this package's operator
    normalisation.
    """
    _require_every_step(traj, "level-set energy inequality")
    prob = traj.problem
    if prob.m is None or prob.m < 1:
        raise ConfigurationError("level-set energy inequality needs phi(u) = u^m with m >= 1")
    if not prob.forcing.is_zero or prob.omega != 0:
        raise ConfigurationError("level-set energy inequality is checked for g = 0, f = 0")
    grid = traj.grid
    I = grid.interior
    mI = grid.weights[I]
    m = prob.m
    kernel = prob.kernel

    def mass(u):
        return float(np.sum(mI * np.abs(truncate(lam, u[I])) ** (m + 1)))

    base = mass(traj.fields[0])
    acc = 0.0
    observed = [base]
    for n in range(1, traj.n_steps + 1):
        Gm = signed_power(truncate(lam, traj.fields[n][I]), m)
        acc += (m + 1) * traj.tau * 0.5 * op.pair_sum_interior(Gm, kernel)
        observed.append(mass(traj.fields[n]) + acc)
    observed = np.array(observed)
    bound = np.full_like(observed, base)
    slack, ok = _verdict(observed, bound, rel_tol, atol)
    return CheckReport(f"level-set energy inequality (lambda={lam:g})", np.asarray(traj.step_times), observed, bound, slack, ok)


# --------------------------------------------------------------------------
# exponential formula, Lipschitz estimate, variation


@dataclass
class LadderReport:
    N_list: list
    finals: list
    differences: list
    ratios: list
    strictly_decreasing: bool


def exponential_formula_check(u0, problem, T_final, N_list, solver=None):
    """Compare ``u_N(T)`` across a doubling ladder of uniform partitions.

    Reports ``||u_{N_{k+1}}(T) - u_{N_k}(T)||_1`` and whether these strictly
    decrease.  Requires ``g = 0``.
    """
    if not problem.forcing.is_zero:
        raise ConfigurationError("the exponential formula check needs g = 0")
    N_list = sorted(int(n) for n in N_list)
    finals = []
    for N in N_list:
        traj = evolve(u0, problem, EvolutionConfig(T_final, N, record_every=N, solver=solver))
        finals.append(traj.fields[-1])
    grid = problem.grid
    I = grid.interior
    diffs = [
        float(np.sum(grid.weights[I] * np.abs(b[I] - a[I]))) for a, b in zip(finals, finals[1:])
    ]
    ratios = [b / a if a > 0 else math.nan for a, b in zip(diffs, diffs[1:])]
    decreasing = all(b < a for a, b in zip(diffs, diffs[1:])) or all(d == 0 for d in diffs)
    return LadderReport(N_list, finals, diffs, ratios, decreasing)


def lipschitz_constant(m, p):
    """``(m(p-1) + 2) / |m(p-1) - 1|``; ``None`` when ``m(p-1) = 1``."""
    a = m * (p - 1.0)
    if math.isclose(a, 1.0, rel_tol=1e-12):
        return None
    return (a + 2.0) / abs(a - 1.0)


def variation_series(g, times, grid, n_points=1000, xi=None, refine=16):
    """Discrete ``V(t, g)`` at each ``t`` in ``times``.

    ``V(t, g) = int_0^{t/(1+xi)} ||g(r(1+xi)) - g(r)||_1 / xi dr`` with
    ``xi = 1/n_points`` unless given.  The integrand is sampled at cell
    midpoints on one lattice of ``refine / xi`` cells up to the largest
    ``t`` and accumulated, so a jump of ``g``, whose footprint has width
    about ``t xi``, is still resolved by several cells.
    """
    times = np.atleast_1d(np.asarray(times, dtype=float))
    out = np.zeros(len(times))
    if getattr(g, "is_zero", False) or not np.any(times > 0):
        return out
    xi = 1.0 / n_points if xi is None else float(xi)
    upper = float(np.max(times)) / (1.0 + xi)
    n_cells = int(math.ceil(refine / xi))
    dr = upper / n_cells
    I = grid.interior
    mI = grid.weights[I]
    D = np.empty(n_cells)
    for k in range(n_cells):
        r = (k + 0.5) * dr
        D[k] = float(np.sum(mI * np.abs(g(r * (1.0 + xi), grid)[I] - g(r, grid)[I])))
    cum = np.concatenate([[0.0], np.cumsum(D) * dr])
    edges = np.arange(n_cells + 1) * dr
    pos = times > 0
    out[pos] = np.interp(times[pos] / (1.0 + xi), edges, cum) / xi
    return out


def variation_functional(g, t, grid, n_points=1000, xi=None, refine=16):
    """Discrete ``V(t, g)`` at a single time; see :func:`variation_series`."""
    if t <= 0:
        return 0.0
    return float(variation_series(g, [t], grid, n_points, xi, refine)[0])


def lipschitz_time_estimate(traj, t_min=0.0, n_variation=1000, rel_tol=1e-9):
    """Difference quotient ``||u_{n+1} - u_n||_1 / tau`` against the homogeneous-operator bound.

    Bound at ``t = t_n``:
    ``(C e^{2wt}/t)(||u0||_1 + int_0^t ||g||_1) + (e^{wt}/t) V(t, g)`` with
    ``C = (m(p-1)+2)/|m(p-1)-1|``.  Checked at every step time ``t_n >= t_min``
    that has a successor.  Returns ``None`` when the constant is undefined.
    """
    prob = traj.problem
    if prob.m is None:
        raise ConfigurationError("the Lipschitz estimate needs a power-law phi")
    C = lipschitz_constant(prob.m, prob.p)
    if C is None:
        return None
    grid = traj.grid
    tau = traj.tau
    w = prob.omega
    g = prob.forcing
    u0l1 = lq_norm(grid, traj.u0, 1.0)
    N = traj.n_steps
    # int_0^{t_n} ||g||_1 by per-step Gauss quadrature of the actual forcing
    gint = np.zeros(N + 1)
    if not g.is_zero:
        for n in range(1, N + 1):
            r = (n - 1) * tau + _GAUSS_X * tau
            gint[n] = gint[n - 1] + tau * float(
                np.dot(_GAUSS_W, [lq_norm(grid, g(ri, grid), 1.0) for ri in r])
            )
    steps = [n for n in range(1, N) if n * tau >= t_min - 1e-12 * tau]
    V = variation_series(g, [n * tau for n in steps], grid, n_variation)
    times, observed, bound = [], [], []
    for n, Vn in zip(steps, V):
        t = n * tau
        times.append(t)
        observed.append(traj.step_increment[n + 1] / tau)
        bound.append(C * math.exp(2 * w * t) / t * (u0l1 + gint[n]) + math.exp(w * t) / t * Vn)
    observed = np.array(observed)
    bound = np.array(bound)
    slack, ok = _verdict(observed, bound, rel_tol)
    return CheckReport(
        "Lipschitz-in-time estimate", np.array(times), observed, bound, slack, ok, {"C": C}
    )
