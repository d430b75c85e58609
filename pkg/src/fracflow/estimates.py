"""Smoothing exponents, fitted-constant certificates and the recursion lemma."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import mpmath
import numpy as np

from .brackets import truncate
from .errors import ConfigurationError, GateError
from .operator import sobolev_exponent
from .semigroup import lq_norm

PASS = "pass"
FAIL = "fail"
NOT_APPLICABLE = "not-applicable"


# --------------------------------------------------------------------------
# reports


@dataclass
class CertificateReport:
    """Evaluated bound against observed data for one certified inequality.

    ``margin`` is the smallest ``bound / observed`` over times where the
    observation is positive; the verdict is ``pass`` iff ``margin >= 1 - tol``.
    ``constant`` records where the prefactor came from: ``explicit`` (the
    result gives it), ``fitted`` (envelope of this run) or ``frozen``
    (fitted on a reference run and reused).
    """

    name: str
    parameters: dict = field(default_factory=dict)
    times: np.ndarray = field(default_factory=lambda: np.zeros(0))
    observed: np.ndarray = field(default_factory=lambda: np.zeros(0))
    bound: np.ndarray = field(default_factory=lambda: np.zeros(0))
    fitted_C: float | None = None
    constant: str = "explicit"
    margin: float = math.inf
    verdict: str = NOT_APPLICABLE
    tolerance: float = 0.0
    notes: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    @property
    def passed(self):
        return self.verdict == PASS

    @property
    def acceptable(self):
        return self.verdict in (PASS, NOT_APPLICABLE)

    def finalize(self, tol):
        """Set ``margin`` and ``verdict`` from the stored series."""
        self.tolerance = tol
        obs = np.asarray(self.observed, dtype=float)
        bnd = np.asarray(self.bound, dtype=float)
        pos = obs > 0
        self.margin = float(np.min(bnd[pos] / obs[pos])) if np.any(pos) else math.inf
        self.verdict = PASS if self.margin >= 1.0 - tol else FAIL
        return self

    @classmethod
    def not_applicable(cls, name, reason, **parameters):
        return cls(name=name, parameters=parameters, verdict=NOT_APPLICABLE, notes=[reason])

    def to_text(self):
        """Flat ``key = value`` report."""
        lines = [f"certificate = {self.name}", f"verdict = {self.verdict}"]
        lines.append(f"margin = {self.margin!r}")
        lines.append(f"tolerance = {self.tolerance!r}")
        lines.append(f"constant = {self.constant}")
        if self.fitted_C is not None:
            lines.append(f"fitted_C = {self.fitted_C!r}")
        for k, v in self.parameters.items():
            lines.append(f"param.{k} = {v}")
        for k, v in self.extra.items():
            if np.ndim(v) == 0:
                lines.append(f"extra.{k} = {v}")
        for i, note in enumerate(self.notes):
            lines.append(f"note.{i} = {note}")
        return "\n".join(lines) + "\n"

    def write(self, stem):
        """Write ``<stem>.txt`` (key-value) and ``<stem>.csv`` (t, observed, bound)."""
        stem = Path(stem)
        stem.with_suffix(".txt").write_text(self.to_text())
        with stem.with_suffix(".csv").open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "observed", "bound"])
            for t, o, b in zip(self.times, self.observed, self.bound):
                w.writerow([repr(float(t)), repr(float(o)), repr(float(b))])


# --------------------------------------------------------------------------
# exponents


@dataclass(frozen=True)
class SmoothingExponents:
    """Exponents of the L^ell - L^inf smoothing bounds.

    ``alpha``, ``gamma``, ``theta``, ``eta``, ``beta1``, ``beta2`` and
    ``gamma_psi`` belong to the forced bound; ``alpha_c``, ``gamma_c`` and
    ``beta_c`` to the unforced decay bound ``C e^{w beta_c t} t^-alpha_c ||u0||_ell^gamma_c``.
    """

    m: float
    p: float
    s: float
    d: int
    ell: float
    rho: float
    psi: float
    q_s: float
    alpha: float
    gamma: float
    theta: float
    eta: float
    beta1: float
    beta2: float
    gamma_psi: float
    alpha_c: float
    gamma_c: float
    beta_c: float

    def as_dict(self):
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def _inv(x):
    return 0.0 if math.isinf(x) else 1.0 / x


def smoothing_exponents(m, p, s, d, ell, rho=math.inf, psi=math.inf, p_tilde=None, forcing=False):
    """Exponents of the smoothing bounds for ``phi(u) = u^m``.

    Parameters
    ----------
    m, p, s, d : float
        Problem parameters; ``m >= 1`` is required.
    ell : float
        Integrability exponent of the initial datum, ``1 <= ell < m + 1``.
    rho, psi : float
        Space and time exponents of the forcing norm (``inf`` allowed).
    p_tilde : float, optional
        Embedding exponent, required when ``p = d/s``.
    forcing : bool
        Also check the hypotheses on ``(rho, psi)``.

    Raises
    ------
    GateError
        Naming the violated hypothesis.
    """
    m, p, s, ell = float(m), float(p), float(s), float(ell)
    rho, psi = float(rho), float(psi)
    if m < 1:
        raise GateError(f"m = {m:g} < 1: the smoothing bounds are only claimed for m >= 1", "m >= 1")
    lhs = m * (p - 1.0) + (m + 1.0) * s * p / d
    if not lhs > 1.0:
        raise GateError(
            f"m(p-1) + (m+1)sp/d = {lhs:g} is not > 1", "m(p-1) + (m+1)sp/d > 1"
        )
    q_s = sobolev_exponent(p, s, d, p_tilde)
    if p_tilde is not None and math.isclose(p, d / s, rel_tol=1e-12):
        if not q_s > max(p, 1.0 + 1.0 / m):
            raise GateError(
                f"q_s = {q_s:g} must exceed max(p, 1 + 1/m) = {max(p, 1 + 1 / m):g} when p = d/s",
                "q_s > max(p, 1 + 1/m)",
            )
    iq = _inv(q_s)
    a = m * (p - 1.0)
    ell_min = (1.0 - a) / (1.0 - p * iq)
    if not (1.0 <= ell < m + 1.0):
        raise GateError(f"ell = {ell:g} must satisfy 1 <= ell < m + 1", "1 <= ell < m + 1")
    if not ell > ell_min:
        raise GateError(
            f"ell = {ell:g} must exceed (1 - m(p-1))/(1 - p/q_s) = {ell_min:g}",
            "ell > (1 - m(p-1))/(1 - p/q_s)",
        )
    ipsi = _inv(psi)
    irho = _inv(rho)
    if forcing:
        if not (rho >= m + 1.0 and psi > 1.0):
            raise GateError("forcing exponents need rho >= m + 1 and psi > 1", "rho >= m+1, psi > 1")
        if a >= 1.0:
            ok = irho < (1.0 - ipsi) * p * (1.0 / p - iq)
            ineq = "1/rho < (1 - 1/psi) p (1/p - 1/q_s)"
        else:
            ok = irho <= (1.0 - ipsi) * p * (m / (m + 1.0) - iq)
            ineq = "1/rho <= (1 - 1/psi) p (m/(m+1) - 1/q_s)"
        if not ok:
            raise GateError(f"forcing exponents violate {ineq}", ineq)
        if not rho >= ell_min:
            raise GateError(
                f"rho = {rho:g} must be at least (1 - m(p-1))/(1 - p/q_s) = {ell_min:g}",
                "rho >= (1 - m(p-1))/(1 - p/q_s)",
            )

    denom = m / (m + 1.0) - iq
    alpha = 1.0 / ((m + 1.0) * p * denom)
    gamma = (1.0 / p - iq) / denom
    theta = 1.0 - gamma * (1.0 - ell / (m + 1.0))
    eta_den = 1.0 - (m + 1.0) * irho + m * p * (1.0 - ipsi) * (1.0 - (m + 1.0) * iq / m)
    eta = 1.0 / eta_den
    if a < 1.0:
        beta1 = (1.0 / (m * p) - 1.0 / (m + 1.0)) / (1.0 / (m + 1.0) - iq / m)
        beta2 = eta * (1.0 - a) * (1.0 - ipsi)
    else:
        beta1 = beta2 = 0.0
    # general level-set theorem with q = m+1, sigma = mp, r = m q_s
    q, sigma, ir = m + 1.0, m * p, iq / m
    gp_num = (1.0 - ipsi) * (1.0 / sigma - ir) - irho / sigma
    gp_den = (1.0 - ipsi) * (1.0 / q - ir) - irho / sigma + 1.0 / (q * sigma)
    gamma_psi = gp_num / gp_den
    dc = a - 1.0 + ell * (1.0 - p * iq)
    alpha_c = 1.0 / dc
    gamma_c = ell * (1.0 - p * iq) * alpha_c
    if a < 1.0:
        beta_c = (1.0 / p - m / (m + 1.0)) / (
            m / (m + 1.0) - 1.0 / p + ell / (m + 1.0) * (1.0 / p - iq)
        )
    else:
        beta_c = 0.0
    return SmoothingExponents(
        m, p, s, int(d), ell, rho, psi, q_s,
        alpha, gamma, theta, eta, beta1, beta2, gamma_psi, alpha_c, gamma_c, beta_c,
    )


# --------------------------------------------------------------------------
# decay certificates


def _window(times, t_range):
    t = np.asarray(times, dtype=float)
    lo, hi = t_range if t_range is not None else (0.0, math.inf)
    tol = 1e-12 * max(1.0, float(np.max(t)) if len(t) else 1.0)
    return (t > 0) & (t >= lo - tol) & (t <= hi + tol)


def _loglog_slope(t, y):
    pos = y > 0
    if np.count_nonzero(pos) < 2:
        return math.nan
    return float(np.polyfit(np.log(t[pos]), np.log(y[pos]), 1)[0])


def decay_certificate(traj, exps, C=None, t_range=None, fit_range=None, tol=1e-6):
    """Unforced smoothing bound ``||u(t)||_inf <= C e^{w beta t} t^-alpha ||u0||_ell^gamma``.

    If ``C`` is not given it is fitted as the smallest constant making the
    bound hold on ``fit_range`` (default: the whole verification range);
    pass a constant fitted on a reference run to test its uniformity.
    The log-log slope of the observation is reported for information only.
    """
    name = "unforced L^ell-L^inf smoothing bound"
    if not traj.problem.forcing.is_zero:
        return CertificateReport.not_applicable(name, "trajectory has a nonzero forcing term")
    grid = traj.grid
    w = traj.problem.omega
    sel = _window(traj.times, t_range)
    t = np.asarray(traj.times)[sel]
    obs = np.asarray(traj.norms["linf"])[sel]
    u0_ell = lq_norm(grid, traj.u0, exps.ell)
    shape = np.exp(w * exps.beta_c * t) * t ** (-exps.alpha_c) * u0_ell**exps.gamma_c
    params = {"alpha": exps.alpha_c, "gamma": exps.gamma_c, "beta": exps.beta_c, "ell": exps.ell}
    if u0_ell == 0.0:
        rep = CertificateReport(name, params, t, obs, np.zeros_like(t), 0.0, "fitted")
        rep.notes.append("zero initial datum: observation vanishes identically")
        return rep.finalize(tol)
    source = "frozen"
    if C is None:
        fsel = _window(t, fit_range)
        C = float(np.max(obs[fsel] / shape[fsel])) if np.any(fsel) else math.nan
        source = "fitted"
    rep = CertificateReport(name, params, t, obs, C * shape, C, source)
    rep.extra["loglog_slope"] = _loglog_slope(t, obs)
    rep.extra["minus_alpha"] = -exps.alpha_c
    rep.notes.append("prefactor is not explicit; the certificate tests its uniformity across runs")
    return rep.finalize(tol)


# --------------------------------------------------------------------------
# forced bound


def _cell_norms(traj, q):
    """``||g_n||_q`` of the projected forcing on each step cell (index 0 unused)."""
    grid = traj.grid
    return np.array([0.0] + [lq_norm(grid, g, q) for g in traj.step_forcing[1:]])


def bochner_norm(cell_values, tau, a, b, psi):
    """``L^psi(a, b)`` norm of the piecewise-constant function with value
    ``cell_values[n]`` on ``((n-1) tau, n tau]``."""
    if b <= a:
        return 0.0
    n = np.arange(1, len(cell_values))
    lo = np.maximum((n - 1) * tau, a)
    hi = np.minimum(n * tau, b)
    length = np.maximum(hi - lo, 0.0)
    vals = np.asarray(cell_values)[1:]
    if math.isinf(psi):
        active = length > 0
        return float(np.max(vals[active])) if np.any(active) else 0.0
    return float(np.sum(length * vals**psi) ** (1.0 / psi))


def smoothing_bound_with_forcing(traj, exps, C=None, t_range=None, tol=1e-6):
    """Forced smoothing bound assembled from ``M(t)``, ``N(t)`` and lattice Bochner norms.

    Right-hand side (without ``C``)::

        max(e^{w b1 t}(1/t + w)^alpha, e^{w b2 t} G(t)^eta)^(1/theta)
          * (1 + N(t)^gamma) * Y(t)^(ell gamma / ((m+1) theta))

    with ``G(t) = ||g||_{L^psi(0,t;L^rho)}`` and
    ``Y(t) = e^{wt}||u0||_ell + int_0^t e^{w(t-r)}||g(r)||_ell dr``.
    """
    name = "forced L^ell-L^inf smoothing bound"
    grid = traj.grid
    tau = traj.tau
    w = traj.problem.omega
    e = exps
    m = e.m
    N_steps = traj.n_steps
    g_rho = _cell_norms(traj, e.rho)
    g_mp1 = _cell_norms(traj, m + 1.0)
    g_ell = _cell_norms(traj, e.ell)
    u0_ell = lq_norm(grid, traj.u0, e.ell)
    if u0_ell == 0.0 and not np.any(g_ell > 0):
        return CertificateReport.not_applicable(
            name, "identically zero data: N(t) is undefined (0/0)", **e.as_dict()
        )

    def G(t):
        return bochner_norm(g_rho, tau, 0.0, t, e.psi)

    def M(t):
        return max(
            math.exp(w * e.beta1 * t) * (1.0 / t + w) ** e.alpha,
            math.exp(w * e.beta2 * t) * G(t) ** e.eta,
        ) ** (1.0 / e.gamma)

    # Y at step times by the exact discrete convolution of the piecewise-constant norms
    Y = np.zeros(N_steps + 1)
    acc = 0.0
    for n in range(1, N_steps + 1):
        decay = math.exp(w * tau)
        cell = g_ell[n] * ((decay - 1.0) / w if w > 0 else tau)
        acc = acc * decay + cell
        Y[n] = math.exp(w * n * tau) * u0_ell + acc
    Y[0] = u0_ell

    ratios = []
    for n in range(1, N_steps + 1):
        sv = n * tau
        num = M(sv / 2) * bochner_norm(g_mp1, tau, sv / 2, sv, 1.0) + math.exp(
            w * e.beta2 * sv / (2 * e.gamma)
        ) * G(sv / 2) ** (e.eta / e.gamma)
        den = M(sv) ** (1.0 / e.theta) * Y[n] ** (e.ell / ((m + 1) * e.theta))
        ratios.append(num / den if den > 0 else 0.0)
    N_sup = np.maximum.accumulate(np.array(ratios))

    idx = [traj.step_index(k) for k in range(len(traj.times))]
    sel = _window(traj.times, t_range)
    times, observed, shape = [], [], []
    for k in np.flatnonzero(sel):
        n = idx[k]
        t = n * tau
        lead = max(
            math.exp(w * e.beta1 * t) * (1.0 / t + w) ** e.alpha,
            math.exp(w * e.beta2 * t) * G(t) ** e.eta,
        ) ** (1.0 / e.theta)
        rhs = lead * (1.0 + N_sup[n - 1] ** e.gamma) * Y[n] ** (e.ell * e.gamma / ((m + 1) * e.theta))
        times.append(t)
        observed.append(traj.norms["linf"][k])
        shape.append(rhs)
    shape = np.array(shape)
    observed = np.array(observed)
    source = "frozen"
    if C is None:
        C = float(np.max(observed / shape)) if len(shape) else math.nan
        source = "fitted"
    rep = CertificateReport(name, e.as_dict(), np.array(times), observed, C * shape, C, source)
    rep.extra["N_final"] = float(N_sup[-1]) if len(N_sup) else 0.0
    rep.notes.append("prefactor is not explicit; the certificate tests its uniformity across runs")
    return rep.finalize(tol)


# --------------------------------------------------------------------------
# recursion lemma


@dataclass
class RecursionReport:
    applicable: bool
    C: float
    delta_m: float
    threshold: float
    holds: bool
    first_violation: int | None
    worst_log_ratio: float
    proof_sum: float
    log_y: np.ndarray = field(repr=False)

    @property
    def verdict(self):
        if not self.applicable:
            return NOT_APPLICABLE
        return PASS if self.holds else FAIL


def degiorgi_recursion_check(b, c, delta, y0, k_max=100, rtol=1e-12):
    """Iterate ``y_{k+1} = b^k sum_i c_i y_k^(1+delta_i)`` and test
    ``y_k <= (C/M) b^(-1/delta_m^2) b^(-k/delta_m)`` for ``k <= k_max``.

    ``C = min_i c_i^(-1/delta_i)``, ``delta_m = min_i delta_i``.  When ``y0``
    exceeds the threshold the bound is not claimed and the report is marked
    not applicable.  ``proof_sum = sum_i c_i (C/M)^delta_i`` is reported
    because the induction step closes whenever it is at most 1.

    At the threshold the recursion sits on an unstable equality (relative
    errors grow by ``1 + delta`` per step), so the iteration runs in
    arbitrary precision with enough bits to absorb that growth; the inputs
    are taken as exact binary floats.
    """
    b = float(b)
    c = [float(x) for x in np.atleast_1d(c)]
    delta = [float(x) for x in np.atleast_1d(delta)]
    if b < 1 or len(c) == 0 or len(c) != len(delta):
        raise ConfigurationError("need b >= 1 and equally long, nonempty c and delta lists")
    if min(c) <= 0 or min(delta) <= 0:
        raise ConfigurationError("all c_i and delta_i must be positive")
    if y0 < 0:
        raise ConfigurationError("y0 must be nonnegative")
    bits = 80 + int(math.ceil(k_max * math.log2(1.0 + max(delta))))
    ctx = mpmath.mp.clone()
    ctx.prec = bits
    M = len(c)
    mb = ctx.mpf(b)
    mc = [ctx.mpf(x) for x in c]
    md = [ctx.mpf(x) for x in delta]
    C = min(ci ** (-1 / di) for ci, di in zip(mc, md))
    dm = min(md)
    threshold = C / M * mb ** (-1 / dm**2)
    proof_sum = ctx.fsum(ci * (C / M) ** di for ci, di in zip(mc, md))
    y = ctx.mpf(y0)
    applicable = y <= threshold
    log_ratio = np.full(k_max + 1, -np.inf)
    log_y = np.full(k_max + 1, -np.inf)
    first = None
    for k in range(k_max + 1):
        if y > 0:
            bound = threshold * mb ** (-ctx.mpf(k) / dm)
            log_y[k] = float(ctx.log(y))
            log_ratio[k] = float(ctx.log(y / bound))
            if first is None and y > bound * (1 + ctx.mpf(rtol)):
                first = k
        if k < k_max:
            y = mb**k * ctx.fsum(ci * y ** (1 + di) for ci, di in zip(mc, md))
    finite = log_ratio[np.isfinite(log_ratio)]
    return RecursionReport(
        applicable=bool(applicable),
        C=float(C),
        delta_m=float(dm),
        threshold=float(threshold),
        holds=first is None,
        first_violation=first,
        worst_log_ratio=float(np.max(finite)) if len(finite) else -math.inf,
        proof_sum=float(proof_sum),
        log_y=log_y,
    )


# --------------------------------------------------------------------------
# truncated growth


def growth_with_truncation_check(traj, lam, q, atol=1e-10, rtol=1e-9):
    """Truncated growth estimate on every pair of step times ``s < t``.

    Discrete form: with ``r = 1 - tau w`` and ``v_n = u_{n-1} + tau g_n``,
    ``a_n = ||G_lam(r^n u_n)||_q`` satisfies
    ``a_t <= a_s + sum_{s<n<=t} tau r^(n-1) ||g_n 1{r^(n-1)|v_n| > lam}||_q``,
    the implicit-Euler counterpart of weighting by ``e^{-w t}``.
    Requires a trajectory recorded at every step.
    """
    if traj.record_every != 1:
        raise ConfigurationError("truncated growth check needs a trajectory recorded at every step")
    grid = traj.grid
    tau = traj.tau
    r = 1.0 - tau * traj.problem.omega
    N = traj.n_steps
    a = np.zeros(N + 1)
    inc = np.zeros(N + 1)
    for n in range(N + 1):
        a[n] = lq_norm(grid, truncate(lam, r**n * traj.fields[n]), q)
        if n > 0:
            g = traj.step_forcing[n]
            if np.any(g):
                v = traj.fields[n - 1] + tau * g
                mask = r ** (n - 1) * np.abs(v) > lam
                inc[n] = tau * r ** (n - 1) * lq_norm(grid, np.where(mask, g, 0.0), q)
    S = np.cumsum(inc)
    h = a - S  # must be nonincreasing
    running_min = np.minimum.accumulate(h)
    # margin at t: min over s < t of (h_s - h_t)
    margins = running_min[:-1] - h[1:]
    scale = np.maximum(a[1:], 1.0)
    ok = bool(np.all(margins >= -(atol + rtol * scale)))
    return CheckResult(
        f"truncated growth estimate (lambda={lam:g}, q={q:g})",
        float(np.min(margins)) if len(margins) else math.inf,
        ok,
    )


@dataclass
class CheckResult:
    name: str
    margin: float
    passed: bool
