"""Finite-time extinction: explicit constants, the barrier supersolution and certificates.

For ``phi`` with ``1/phi^(p-1)`` integrable at 0 the barrier is
``V(x, t) = beta(mu(x) T(t))`` with the radial profile ``mu`` and
``T(t) = R^(d+ps) phi(sigma(t* - t))``, where ``sigma`` inverts
``G(sigma) = int_0^sigma phi^-(p-1) = C_R t``.  On ``B_R`` this gives
``V = sigma(t* - t)``, so ``V(., 0) = ||u0||_inf`` and ``V(., t*) = 0``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, optimize

from . import operator as op
from .errors import ConfigurationError, GateError
from .estimates import FAIL, PASS, CertificateReport
from .semigroup import lq_norm


def unit_ball_volume(k):
    """Volume of the unit ball in R^k (``k = 0`` gives 1)."""
    return math.pi ** (k / 2.0) / math.gamma(k / 2.0 + 1.0)


def extinction_constant(d, p, s, R):
    """``C_R = w_{d-1} / (4^(d+ps) d) (3^d - 2^d) (1 - 2^(-d-ps))^(p-1) R^(-sp)``.

    ``w_{d-1}`` is the volume of the ``(d-1)``-dimensional unit ball
    (``w_0 = 1``).
    """
    d, p, s, R = int(d), float(p), float(s), float(R)
    if d < 1 or not p > 1 or not 0 < s < 1 or not R > 0:
        raise ConfigurationError("need d >= 1, p > 1, 0 < s < 1 and R > 0")
    e = d + p * s
    return (
        unit_ball_volume(d - 1)
        / (4.0**e * d)
        * (3.0**d - 2.0**d)
        * (1.0 - 2.0 ** (-e)) ** (p - 1.0)
        * R ** (-s * p)
    )


def _integrand_exponent(mode, p):
    if mode == "statement":
        return 1.0
    if mode == "proof":
        return p - 1.0
    raise ConfigurationError(f"exponent_mode must be 'statement' or 'proof', got {mode!r}")


def barrier_integral(phi, upper, exponent):
    """``int_0^upper phi(r)^(-exponent) dr``.

    Raises
    ------
    GateError
        If the integrand is not integrable at 0.
    """
    upper = float(upper)
    if upper <= 0:
        return 0.0
    if phi.kind == "power":
        k = phi.m * exponent
        if k >= 1:
            raise GateError(
                f"phi^-{exponent:g} ~ r^-{k:g} is not integrable at 0: no extinction is claimed",
                "1/phi^(p-1) integrable at 0",
            )
        return upper ** (1.0 - k) / (1.0 - k)
    # tabulated phi is linear near 0
    if exponent >= 1:
        raise GateError(
            "a piecewise-linear phi makes phi^-e non-integrable at 0 for e >= 1",
            "1/phi^(p-1) integrable at 0",
        )
    knots = [r for r in phi._r if 0 < r < upper]
    total = 0.0
    for a, b in zip([0.0] + knots, knots + [upper]):
        val, _ = integrate.quad(lambda r: float(phi(r)) ** (-exponent), a, b, limit=200)
        total += val
    return total


def extinction_time(phi, u0_sup, C, exponent_mode="proof", p=2.0):
    """Extinction time bound ``(1/C) int_0^{u0_sup} phi^-e``.

    ``exponent_mode="statement"`` uses ``e = 1`` (``1/phi``),
    ``exponent_mode="proof"`` uses ``e = p - 1``; the two agree at ``p = 2``.
    For power laws these are ``M^(1-m)/(1-m)/C`` and
    ``M^(1-m(p-1))/(1-m(p-1))/C``.
    """
    if not C > 0:
        raise ConfigurationError("extinction constant must be positive")
    return barrier_integral(phi, u0_sup, _integrand_exponent(exponent_mode, p)) / C


def sigma_of(phi, p, C_R, t):
    """Solve ``int_0^sigma phi^-(p-1) = C_R t`` for ``sigma`` (vectorised in ``t``)."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    e = p - 1.0
    out = np.zeros_like(t)
    if phi.kind == "power":
        a = phi.m * e
        if a >= 1:
            raise GateError("sigma is undefined: phi^-(p-1) not integrable at 0", "1/phi^(p-1) integrable at 0")
        pos = t > 0
        out[pos] = ((1.0 - a) * C_R * t[pos]) ** (1.0 / (1.0 - a))
        return out
    hi_r = phi.r_range[1]
    for i, ti in enumerate(t):
        if ti <= 0:
            continue
        target = C_R * ti
        if barrier_integral(phi, hi_r, e) < target:
            raise ConfigurationError("sigma leaves the tabulated range of phi")
        out[i] = optimize.brentq(lambda x: barrier_integral(phi, x, e) - target, 0.0, hi_r, xtol=1e-14, rtol=1e-13)
    return out


@dataclass
class SupersolutionSpec:
    """Barrier data: radius, constant, extinction time and the profile on the grid."""

    R: float
    C_R: float
    t_star: float
    mu: np.ndarray
    u0_sup: float
    phi: object
    p: float
    d: int
    s: float

    def sigma(self, t):
        return sigma_of(self.phi, self.p, self.C_R, t)

    def sigma_table(self, n=65):
        ts = np.linspace(0.0, self.t_star, n)
        return ts, self.sigma(ts)


def barrier_profile(grid, R, d, p, s):
    """``mu(x)``: ``R^-(d+ps)`` on ``|x| <= R``, ``|x|^-(d+ps)`` up to ``3R``, 0 beyond."""
    e = d + p * s
    r = np.linalg.norm(grid.nodes, axis=1)
    tol = 1e-12 * max(R, 1.0)
    mu = np.where(r <= R + tol, R ** (-e), 0.0)
    mid = (r > R + tol) & (r < 3 * R - tol)
    mu[mid] = r[mid] ** (-e)
    return mu


def make_supersolution(grid, phi, p, s, R, u0_sup):
    """Assemble :class:`SupersolutionSpec` for ``u0_sup = ||u0||_inf`` (proof-mode ``t*``)."""
    d = grid.dim
    if not grid.exterior_radius >= 3 * R:
        raise ConfigurationError(
            f"barrier needs the grid to cover B_3R: R_ext={grid.exterior_radius:g} < 3R={3 * R:g}"
        )
    r = np.linalg.norm(grid.nodes[grid.interior], axis=1)
    if np.any(r > R + 1e-12 * max(R, 1.0)):
        raise ConfigurationError(f"domain is not contained in the ball of radius R={R:g}")
    C_R = extinction_constant(d, p, s, R)
    t_star = extinction_time(phi, u0_sup, C_R, "proof", p)
    mu = barrier_profile(grid, R, d, p, s)
    return SupersolutionSpec(R, C_R, t_star, mu, float(u0_sup), phi, float(p), d, float(s))


def build_supersolution(spec, t):
    """``V(., t) = beta(mu T(t))`` on every node; zero for ``t >= t*``."""
    if t >= spec.t_star:
        return np.zeros_like(spec.mu)
    sig = float(spec.sigma(spec.t_star - t)[0])
    T = spec.R ** (spec.d + spec.p * spec.s) * float(spec.phi(sig))
    return spec.phi.beta(spec.mu * T)


def supersolution_residual(V_t, V_next, delta, kernel, phi):
    """``(V(t+delta) - V(t))/delta + A phi(V(t))`` on interior nodes (exterior entries 0)."""
    grid = kernel.grid
    res = op.apply_operator(phi(V_t), kernel)
    res[grid.interior] += (V_next[grid.interior] - V_t[grid.interior]) / delta
    return res


def residual_certificate(spec, kernel, times, delta, rel_tol=1e-3):
    """Barrier check ``min_interior residual >= -rel_tol * scale`` at the given times.

    ``scale`` is the largest interior magnitude of ``A phi(V)`` at that time.
    """
    grid = kernel.grid
    I = grid.interior
    phi = spec.phi
    mins, scales = [], []
    for t in times:
        V = build_supersolution(spec, t)
        Vn = build_supersolution(spec, t + delta)
        AV = op.apply_operator(phi(V), kernel)[I]
        res = AV + (Vn[I] - V[I]) / delta
        mins.append(float(np.min(res)))
        scales.append(float(np.max(np.abs(AV))) if np.any(AV) else 1.0)
    mins = np.array(mins)
    scales = np.array(scales)
    rel = mins / scales
    rep = CertificateReport(
        "barrier supersolution residual",
        {"R": spec.R, "C_R": spec.C_R, "t_star": spec.t_star, "delta": delta},
        np.asarray(times, dtype=float),
        -mins,
        rel_tol * scales,
        constant="explicit",
    )
    rep.tolerance = rel_tol
    rep.margin = float(np.min(rel)) if len(rel) else math.inf
    rep.verdict = PASS if np.all(mins >= -rel_tol * scales) else FAIL
    rep.extra["min_relative_residual"] = rep.margin
    return rep


def comparison_harness(traj, spec, atol=1e-10):
    """Containment ``-V <= u <= V`` and the positive-part integral comparison.

    The integral comparison checks
    ``int (u(t) - V(t))^+ <= e^{wt} int (u0 - V(0))^+`` at every recorded time
    (zero forcing on both sides).
    """
    grid = traj.grid
    I = grid.interior
    mI = grid.weights[I]
    w = traj.problem.omega
    times = np.asarray(traj.times)
    over = []
    lhs_int = []
    for t, u in zip(times, traj.fields):
        V = build_supersolution(spec, t)
        over.append(float(max(np.max(u[I] - V[I]), np.max(-V[I] - u[I]))))
        lhs_int.append(float(np.sum(mI * np.maximum(u[I] - V[I], 0.0))))
    V0 = build_supersolution(spec, 0.0)
    base = float(np.sum(mI * np.maximum(traj.u0[I] - V0[I], 0.0)))
    rhs_int = np.exp(w * times) * base
    over = np.array(over)
    lhs_int = np.array(lhs_int)
    contained = bool(np.all(over <= atol))
    integral_ok = bool(np.all(lhs_int <= rhs_int + atol))
    rep = CertificateReport(
        "barrier comparison (containment -V <= u <= V)",
        {"R": spec.R, "t_star": spec.t_star},
        times,
        over,
        np.zeros_like(over),
        constant="explicit",
    )
    rep.tolerance = atol
    rep.margin = 0.0 - float(np.max(over)) if len(over) else math.inf
    rep.verdict = PASS if contained and integral_ok else FAIL
    rep.extra["integral_comparison_ok"] = integral_ok
    rep.extra["max_excess"] = float(np.max(over)) if len(over) else 0.0
    return rep


def extinction_certificate(traj, t_star, rel_tol=1e-6):
    """Finite-time extinction: observed time ``||u||_inf <= rel_tol ||u0||_inf`` against ``t*``.

    Pass iff the observed extinction time exists, is at most ``t*`` and the
    solution stays below the threshold at every later recorded time.
    Not applicable unless ``phi = u^m`` with ``0 < m < 1`` and ``f = g = 0``.
    """
    name = "finite-time extinction"
    prob = traj.problem
    if prob.m is None or not 0 < prob.m < 1:
        return CertificateReport.not_applicable(name, "extinction is only claimed for phi(u) = u^m, 0 < m < 1")
    if not prob.forcing.is_zero or prob.omega != 0:
        return CertificateReport.not_applicable(name, "extinction is certified for f = 0 and g = 0")
    times = np.asarray(traj.times)
    linf = np.asarray(traj.norms["linf"])
    thr = rel_tol * lq_norm(traj.grid, traj.u0, math.inf)
    below = linf <= thr
    observed = None
    for k in range(len(times)):
        if np.all(below[k:]):
            observed = float(times[k])
            break
    first = float(times[np.argmax(below)]) if np.any(below) else None
    rep = CertificateReport(
        name,
        {"t_star": t_star, "threshold": thr},
        times,
        linf,
        np.where(times >= t_star, thr, np.inf),
        constant="explicit",
    )
    rep.tolerance = rel_tol
    rep.extra["observed_extinction_time"] = first if first is not None else math.inf
    rep.extra["t_star"] = t_star
    ok = observed is not None and first is not None and first <= t_star and observed == first
    rep.margin = (t_star / first if first and first > 0 else math.inf) if ok else 0.0
    rep.verdict = PASS if ok else FAIL
    if observed is None:
        rep.notes.append("the solution never fell below the extinction threshold on the recorded window")
    return rep
