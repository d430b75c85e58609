import math

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from fracflow.errors import ConfigurationError, GateError
from fracflow.estimates import (
    FAIL,
    NOT_APPLICABLE,
    PASS,
    CertificateReport,
    bochner_norm,
    decay_certificate,
    degiorgi_recursion_check,
    growth_with_truncation_check,
    smoothing_bound_with_forcing,
    smoothing_exponents,
)
from fracflow.grid import Interval, build_grid, build_kernel
from fracflow.nonlinearity import Perturbation, Phi
from fracflow.semigroup import EvolutionConfig, Forcing, ProblemSpec, evolve


@pytest.fixture(scope="module")
def grid():
    return build_grid(Interval(-1.0, 1.0), 0.2, 2.0)


def bump(grid):
    x = grid.nodes[grid.interior, 0]
    return grid.extend(1 - x * x)


# exponents ------------------------------------------------------------------


def test_exponents_linear_2d():
    e = smoothing_exponents(1, 2, 0.5, 2, 1)
    assert e.q_s == 4
    assert (e.alpha_c, e.gamma_c, e.beta_c) == pytest.approx((2.0, 1.0, 0.0))


def test_exponents_supercritical():
    # p > d/s so 1/q_s = 0
    e = smoothing_exponents(2, 2, 0.75, 1, 1)
    assert math.isinf(e.q_s)
    assert (e.alpha_c, e.gamma_c, e.beta_c) == pytest.approx((0.5, 0.5, 0.0))


def test_exponents_critical_needs_p_tilde():
    with pytest.raises(ConfigurationError):
        smoothing_exponents(1, 2, 0.5, 1, 1)
    e = smoothing_exponents(1, 2, 0.5, 1, 1, p_tilde=4)
    assert e.q_s == 4


@pytest.mark.parametrize(
    "args, kwargs, inequality",
    [
        ((0.5, 2, 0.5, 2, 1), {}, "m >= 1"),
        ((1, 1.05, 0.05, 3, 1), {}, "m(p-1) + (m+1)sp/d > 1"),
        ((1, 2, 0.5, 2, 2.5), {}, "1 <= ell < m + 1"),
        ((1, 2, 0.5, 2, 1), {"rho": 1.5, "psi": 2, "forcing": True}, "rho >= m+1, psi > 1"),
        ((1, 2, 0.5, 1, 1), {"p_tilde": 2}, "q_s > max(p, 1 + 1/m)"),
    ],
)
def test_exponent_gates(args, kwargs, inequality):
    with pytest.raises(GateError) as info:
        smoothing_exponents(*args, **kwargs)
    assert info.value.inequality == inequality


def test_ell_lower_gate():
    # m(p-1) < 1 makes the lower bound on ell bite: m=1, p=1.5, s=0.9, d=1
    # gives q_s = inf and ell_min = 0.5, so ell = 1 is fine; with s=0.5, d=2
    # q_s = 2.4 and ell_min = 4/3
    smoothing_exponents(1, 1.5, 0.9, 1, 1)
    with pytest.raises(GateError) as info:
        smoothing_exponents(1, 1.5, 0.5, 2, 1)
    assert "ell >" in info.value.inequality


admissible = st.tuples(
    st.floats(1, 4),  # m
    st.floats(1.2, 4),  # p
    st.floats(0.1, 0.9),  # s
    st.integers(1, 3),  # d
    st.floats(0, 1),  # position of ell in its range
)


def build_exponents(t):
    m, p, s, d, frac = t
    if math.isclose(p, d / s, rel_tol=1e-6):
        assume(False)
    ell = 1 + frac * m * 0.999
    try:
        return smoothing_exponents(m, p, s, d, ell)
    except GateError:
        assume(False)


@given(admissible)
def test_decay_exponent_consistency(t):
    e = build_exponents(t)
    iq = 0.0 if math.isinf(e.q_s) else 1 / e.q_s
    assert e.alpha_c * (e.m * (e.p - 1) - 1 + e.ell * (1 - e.p * iq)) == pytest.approx(1.0)
    assert e.gamma_c == pytest.approx(e.alpha_c * e.ell * (1 - e.p * iq))
    assert e.theta > 0


@given(admissible)
def test_theta_collapses_at_top_exponent(t):
    m, p, s, d, _ = t
    e = build_exponents(t)
    assert e.theta == pytest.approx(1 - e.gamma * (1 - e.ell / (m + 1)))
    # gamma does not depend on ell, so theta -> 1 as ell -> m + 1
    top = smoothing_exponents(m, p, s, d, (m + 1) * (1 - 1e-12))
    assert top.gamma == pytest.approx(e.gamma)
    assert top.theta == pytest.approx(1.0, abs=1e-10)


def test_beta_branches():
    fast = smoothing_exponents(1, 1.5, 0.9, 1, 1.5)
    assert fast.beta1 > 0 and fast.beta_c != 0
    slow = smoothing_exponents(2, 2, 0.75, 1, 1)
    assert slow.beta1 == slow.beta2 == slow.beta_c == 0


# Bochner norm ---------------------------------------------------------------


@pytest.mark.parametrize("psi", [1.0, 2.0, 3.5, math.inf])
def test_bochner_norm_constant(psi):
    tau, c = 0.01, 2.5
    cells = np.full(101, c)
    for t in (0.1, 0.37, 1.0):
        expected = c if math.isinf(psi) else t ** (1 / psi) * c
        assert bochner_norm(cells, tau, 0.0, t, psi) == pytest.approx(expected, rel=1e-6)
    assert bochner_norm(cells, tau, 0.5, 0.5, psi) == 0.0


# certificates ---------------------------------------------------------------


def test_report_finalize_and_text(tmp_path):
    rep = CertificateReport("demo", {"a": 1}, np.array([1.0, 2.0]), np.array([1.0, 0.0]),
                            np.array([2.0, 0.0]), 1.5, "fitted").finalize(1e-6)
    assert rep.margin == 2.0 and rep.verdict == PASS
    rep.write(tmp_path / "demo")
    text = (tmp_path / "demo.txt").read_text()
    assert "verdict = pass" in text and "param.a = 1" in text
    bad = CertificateReport("x", observed=np.array([2.0]), bound=np.array([1.0])).finalize(0.1)
    assert bad.verdict == FAIL and not bad.acceptable
    na = CertificateReport.not_applicable("y", "why")
    assert na.verdict == NOT_APPLICABLE and na.acceptable


@pytest.fixture(scope="module")
def decay_run(grid):
    prob = ProblemSpec(build_kernel(grid, 0.75, 2.0), Phi.power(2.0))
    return evolve(bump(grid), prob, EvolutionConfig(1.0, 50))


def test_decay_certificate_fitted_and_frozen(decay_run):
    e = smoothing_exponents(2, 2, 0.75, 1, 1)
    rep = decay_certificate(decay_run, e)
    assert rep.passed and rep.margin == pytest.approx(1.0)
    assert rep.constant == "fitted"
    frozen = decay_certificate(decay_run, e, C=rep.fitted_C * 0.5)
    assert frozen.verdict == FAIL and frozen.constant == "frozen"


def test_decay_certificate_zero_data(grid):
    prob = ProblemSpec(build_kernel(grid, 0.75, 2.0), Phi.power(2.0))
    traj = evolve(grid.zeros(), prob, EvolutionConfig(0.1, 5))
    assert decay_certificate(traj, smoothing_exponents(2, 2, 0.75, 1, 1)).passed


def test_decay_certificate_forced_not_applicable(grid):
    prof = grid.zeros()
    prof[grid.interior] = 1.0
    prob = ProblemSpec(build_kernel(grid, 0.75, 2.0), Phi.power(2.0), forcing=Forcing.constant(prof))
    traj = evolve(bump(grid), prob, EvolutionConfig(0.1, 5))
    rep = decay_certificate(traj, smoothing_exponents(2, 2, 0.75, 1, 1))
    assert rep.verdict == NOT_APPLICABLE


def test_forced_bound_collapses_without_forcing(decay_run):
    e = smoothing_exponents(2, 2, 0.75, 1, 1)
    rep = smoothing_bound_with_forcing(decay_run, e)
    assert rep.passed and rep.extra["N_final"] == 0.0
    # with g = 0 the shape is max(t^-alpha) * Y^(...) with Y = ||u0||_ell
    t = rep.times
    shape = rep.bound / rep.fitted_C
    u0 = float(np.sum(decay_run.grid.weights[decay_run.grid.interior] * np.abs(decay_run.u0[decay_run.grid.interior])))
    expected = t ** (-e.alpha / e.theta) * u0 ** (e.ell * e.gamma / ((e.m + 1) * e.theta))
    np.testing.assert_allclose(shape, expected, rtol=1e-12)


def test_forced_bound_with_forcing(grid):
    prof = bump(grid)
    prob = ProblemSpec(build_kernel(grid, 0.75, 2.0), Phi.power(2.0), Perturbation("tanh", 0.5),
                       Forcing.separable(lambda t: math.exp(-t), prof))
    traj = evolve(bump(grid), prob, EvolutionConfig(0.5, 25))
    e = smoothing_exponents(2, 2, 0.75, 1, 1, rho=4, psi=4, forcing=True)
    rep = smoothing_bound_with_forcing(traj, e)
    assert rep.passed and rep.extra["N_final"] > 0


# recursion lemma ------------------------------------------------------------


def test_recursion_worked_example():
    rep = degiorgi_recursion_check(2, [1], [1], 0.5, k_max=100)
    assert rep.applicable and rep.holds
    assert rep.threshold == 0.5 and rep.C == 1.0
    # equality iteration stays exactly on the bound 2^(-1-k)
    k = np.arange(101)
    np.testing.assert_allclose(rep.log_y, -(1 + k) * math.log(2), rtol=1e-12)


def test_recursion_zero_start():
    rep = degiorgi_recursion_check(3, [1, 2], [0.5, 1], 0.0)
    assert rep.holds and rep.verdict == PASS
    assert rep.worst_log_ratio == -math.inf


def test_recursion_two_term_example():
    rep = degiorgi_recursion_check(4, [1, 2], [1, 0.5], 0.00048828125)
    assert rep.threshold == 0.00048828125
    assert rep.proof_sum == pytest.approx(0.125 + 2 * math.sqrt(0.125))
    assert rep.holds


def test_recursion_counterexample():
    # two equal terms with delta < 1: sum c_i (C/M)^delta_i = sqrt(2) > 1 and
    # the first step already exceeds the claimed bound
    rep = degiorgi_recursion_check(1, [1, 1], [0.5, 0.5], 0.5)
    assert rep.applicable
    assert rep.proof_sum == pytest.approx(math.sqrt(2))
    assert not rep.holds and rep.first_violation == 1
    assert rep.verdict == FAIL


def test_recursion_above_threshold():
    rep = degiorgi_recursion_check(2, [1], [1], 0.75, k_max=10)
    assert rep.verdict == NOT_APPLICABLE


@pytest.mark.parametrize(
    "b, c, delta, y0",
    [(0.5, [1], [1], 0.1), (2, [1, 2], [1], 0.1), (2, [0], [1], 0.1), (2, [1], [-1], 0.1), (2, [1], [1], -1)],
)
def test_recursion_errors(b, c, delta, y0):
    with pytest.raises(ConfigurationError):
        degiorgi_recursion_check(b, c, delta, y0)


@given(
    b=st.floats(1, 8),
    terms=st.lists(st.tuples(st.floats(0.1, 5), st.floats(0.2, 2)), min_size=1, max_size=3),
    frac=st.floats(0, 1),
)
def test_recursion_holds_when_proof_sum_at_most_one(b, terms, frac):
    c = [t[0] for t in terms]
    delta = [t[1] for t in terms]
    probe = degiorgi_recursion_check(b, c, delta, 0.0, k_max=1)
    assume(probe.proof_sum <= 1 + 1e-12)
    rep = degiorgi_recursion_check(b, c, delta, frac * probe.threshold, k_max=60, rtol=1e-9)
    assert rep.holds


# truncated growth -----------------------------------------------------------


def test_truncated_growth_lambda_zero_is_norm_decay(decay_run):
    res = growth_with_truncation_check(decay_run, 0.0, 2.0)
    assert res.passed
    # with g = 0, w = 0 the margin is the smallest one-step decrease of the norm
    n2 = decay_run.norm_series("l2")
    assert res.margin == pytest.approx(float(np.min(-np.diff(n2) + 0.0)), abs=1e-12)


def test_truncated_growth_above_sup(decay_run):
    res = growth_with_truncation_check(decay_run, 2.0, 1.0)
    assert res.passed and res.margin == 0.0


def test_truncated_growth_with_forcing(grid, rng):
    prof = grid.extend(rng.normal(size=grid.n_interior))
    prob = ProblemSpec(build_kernel(grid, 0.5, 2.5), Phi.power(1.5), Perturbation("sine", 1.0),
                       Forcing.separable(lambda t: math.sin(5 * t), prof))
    traj = evolve(bump(grid), prob, EvolutionConfig(0.4, 20))
    for lam in (0.0, 0.3, 0.8):
        for q in (1.0, 2.0, math.inf):
            assert growth_with_truncation_check(traj, lam, q).passed


def test_truncated_growth_needs_every_step(grid):
    prob = ProblemSpec(build_kernel(grid, 0.5, 2.0), Phi.power(1.0))
    traj = evolve(bump(grid), prob, EvolutionConfig(0.4, 4, record_every=2))
    with pytest.raises(ConfigurationError):
        growth_with_truncation_check(traj, 0.0, 1.0)
