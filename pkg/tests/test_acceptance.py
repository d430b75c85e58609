"""Acceptance suite: one test per criterion, each recording a single PASS/FAIL line."""

import math

import numpy as np
import pytest

from fracflow import extinction as ext
from fracflow.brackets import JZeroFunction, j_integral, positive_part_norm, truncation_power_inequality
from fracflow.estimates import PASS, decay_certificate, degiorgi_recursion_check, smoothing_exponents
from fracflow.grid import Interval, build_grid, build_kernel
from fracflow.nonlinearity import Perturbation, Phi
from fracflow.operator import apply_operator, energy
from fracflow.resolvent import ResolventConfig, resolvent_step
from fracflow.semigroup import (
    EvolutionConfig,
    Forcing,
    ProblemSpec,
    comparison_estimate,
    energy_dissipation,
    evolve,
    exponential_formula_check,
    growth_estimate,
    lipschitz_time_estimate,
    lq_norm,
)

from .conftest import ACCEPTANCE_LINES

pytestmark = pytest.mark.acceptance


def record(number, title, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number:>2}: {title}: {detail}"
    print(line)
    ACCEPTANCE_LINES.append(line)
    return ok


def bump(grid, centre=0.0, width=0.5):
    x = grid.nodes[:, 0]
    u = np.maximum(1.0 - ((x - centre) / width) ** 2, 0.0)
    u[grid.exterior] = 0.0
    return u


# --------------------------------------------------------------------------
# 1, 2: resolvent sweep


RESOLVENT_CASES = [(2.0, 1.0), (3.0, 2.0), (1.5, 1.0)]


@pytest.fixture(scope="module")
def resolvent_sweep():
    grid = build_grid(Interval(-1.0, 1.0), 0.01, 1.5)
    assert grid.n_interior == 199
    rng = np.random.default_rng(2024)
    cfg = ResolventConfig(0.05, outer_tol=1e-11)
    out = []
    for p, m in RESOLVENT_CASES:
        kernel = build_kernel(grid, 0.5, p)
        phi = Phi.power(m)
        for _ in range(100):
            v1, v2 = grid.zeros(), grid.zeros()
            v1[grid.interior] = rng.uniform(-1, 1, grid.n_interior)
            v2[grid.interior] = rng.uniform(-1, 1, grid.n_interior)
            u1, _ = resolvent_step(v1, phi, Perturbation(), kernel, cfg)
            u2, _ = resolvent_step(v2, phi, Perturbation(), kernel, cfg)
            out.append((p, m, grid, v1, v2, u1, u2))
    return out


def test_criterion_01_t_contraction(resolvent_sweep):
    worst = math.inf
    for p, m, grid, v1, v2, u1, u2 in resolvent_sweep:
        lhs = positive_part_norm(grid, u1 - u2)
        rhs = positive_part_norm(grid, v1 - v2)
        worst = min(worst, rhs + 1e-8 - lhs)
    ok = record(1, "resolvent T-contraction", worst >= 0,
                f"min(||[v1-v2]^+|| + 1e-8 - ||[Jv1-Jv2]^+||) = {worst:.3e} over {len(resolvent_sweep)} pairs")
    assert ok


def test_criterion_02_complete_resolvent(resolvent_sweep):
    js = [JZeroFunction("abs_power", 1.0), JZeroFunction("power_plus", 2.0), JZeroFunction("shifted_plus", 0.25)]
    worst = math.inf
    for p, m, grid, v1, v2, u1, u2 in resolvent_sweep:
        for j in js:
            for v, u in ((v1, u1), (v2, u2)):
                worst = min(worst, j_integral(j, grid, v) + 1e-8 - j_integral(j, grid, u))
    ok = record(2, "complete resolvent", worst >= 0,
                f"min(sum j(v) + 1e-8 - sum j(Jv)) = {worst:.3e} for {len(js)} functions")
    assert ok


# --------------------------------------------------------------------------
# 3, 4: growth and comparison on paired trajectories


def _paired_trajectories():
    grid = build_grid(Interval(-1.0, 1.0), 0.05, 2.0)
    rng = np.random.default_rng(7)
    cases = [
        (2.0, 1.0, Perturbation()),
        (3.0, 2.0, Perturbation("sine", 0.5)),
        (1.5, 1.0, Perturbation("tanh", 1.0)),
        (2.0, 0.5, Perturbation("linear", -0.5)),
    ]
    kernels = {p: build_kernel(grid, 0.5, p) for p in (1.5, 2.0, 3.0)}
    evo = EvolutionConfig(0.5, 50)
    pairs = []
    for k in range(20):
        p, m, pert = cases[k % len(cases)]
        trajs = []
        for _ in range(2):
            u0 = grid.zeros()
            u0[grid.interior] = rng.uniform(-1, 1, grid.n_interior)
            profile = grid.zeros()
            profile[grid.interior] = rng.uniform(-1, 1, grid.n_interior)
            freq = rng.uniform(0, 6)
            g = Forcing.separable(lambda t, f=freq: math.cos(f * t), profile)
            trajs.append(evolve(u0, ProblemSpec(kernels[p], Phi.power(m), pert, g), evo))
        pairs.append(tuple(trajs))
    return pairs


@pytest.fixture(scope="module")
def paired():
    return _paired_trajectories()


def test_criterion_03_growth_estimate(paired):
    worst = math.inf
    ok = True
    for t1, t2 in paired:
        for traj in (t1, t2):
            for q in (1.0, 2.0, math.inf):
                rep = growth_estimate(traj, q, rel_tol=1e-6)
                ok &= rep.passed
                rel = np.min((rep.bound - rep.observed) / np.maximum(np.abs(rep.bound), 1e-300))
                worst = min(worst, float(rel))
    ok = record(3, "growth estimate (q = 1, 2, inf)", ok,
                f"min relative margin {worst:.3e} over {2 * len(paired)} trajectories (slack 1e-6)")
    assert ok


def test_criterion_04_comparison_estimate(paired):
    ok = True
    worst = math.inf
    for t1, t2 in paired:
        for nu in ("+", 1):
            rep = comparison_estimate(t1, t2, nu, rel_tol=1e-6)
            ok &= rep.passed
            worst = min(worst, float(np.min((rep.bound - rep.observed) / np.maximum(rep.bound, 1e-300))))
    ok = record(4, "comparison estimate (nu = +, 1)", ok,
                f"min relative margin {worst:.3e} over {len(paired)} pairs (slack 1e-6)")
    assert ok


# --------------------------------------------------------------------------
# 5: linear oracle


def dense_linear_operator(grid, s):
    """Independent assembly of the p = 2 operator restricted to interior nodes."""
    x = grid.nodes[:, 0]
    h = grid.spacing
    I = list(grid.interior)
    n = len(I)
    L = np.zeros((n, n))
    for a, i in enumerate(I):
        for j in range(grid.size):
            if j == i:
                continue
            k = h / abs(x[i] - x[j]) ** (1 + 2 * s)  # m_j |x_i - x_j|^(-d-2s)
            L[a, a] += k
            if j in I:
                L[a, I.index(j)] -= k
    return L


def test_criterion_05_linear_oracle():
    grid = build_grid(Interval(-1.0, 1.0), 0.1, 2.5)
    assert grid.n_interior <= 50
    kernel = build_kernel(grid, 0.5, 2.0)
    u0 = bump(grid, 0.1, 0.7)
    N = 2000
    traj = evolve(u0, ProblemSpec(kernel, Phi.power(1.0)), EvolutionConfig(1.0, N, record_every=N))
    L = dense_linear_operator(grid, 0.5)
    tau = 1.0 / (16 * N)
    lu = np.linalg.inv(np.eye(len(L)) + tau * L)
    u = u0[grid.interior]
    for _ in range(16 * N):
        u = lu @ u
    err = float(np.max(np.abs(traj.fields[-1][grid.interior] - u)))
    ok = record(5, "linear-case oracle", err <= 1e-4,
                f"||u_N(1) - u_ref(1)||_inf = {err:.3e} (N = {N}, reference 16N, tol 1e-4)")
    assert ok


# --------------------------------------------------------------------------
# 6: gradient check


def test_criterion_06_gradient_check():
    # smooth field whose pair differences stay away from 0, where the
    # central difference of |t|^p (p < 2) has a large truncation error
    grid = build_grid(Interval(-1.0, 1.0), 0.05, 2.0)
    rng = np.random.default_rng(6)
    I = grid.interior
    x = grid.nodes[:, 0]
    u = np.where(grid.interior_mask, 1.5 + x + 0.2 * np.sin(3 * x), 0.0)
    eps = 1e-5
    worst = 0.0
    for p in (1.5, 2.0, 3.0):
        kernel = build_kernel(grid, 0.5, p)
        for _ in range(50):
            d = grid.zeros()
            d[I] = rng.normal(size=len(I))
            fd = (energy(u + eps * d, kernel).energy - energy(u - eps * d, kernel).energy) / (2 * eps)
            an = float(np.sum(grid.weights[I] * apply_operator(u, kernel)[I] * d[I]))
            worst = max(worst, abs(fd - an) / abs(an))
    ok = record(6, "operator vs finite-difference energy gradient", worst <= 1e-5,
                f"max relative error {worst:.3e} (eps 1e-5, tol 1e-5)")
    assert ok


# --------------------------------------------------------------------------
# 7: exponential formula


def test_criterion_07_exponential_formula():
    grid = build_grid(Interval(-1.0, 1.0), 0.05, 2.0)
    details = []
    ok = True
    for p, m in ((2.0, 1.0), (3.0, 2.0)):
        kernel = build_kernel(grid, 0.5, p)
        lad = exponential_formula_check(bump(grid), ProblemSpec(kernel, Phi.power(m)), 0.5, [8, 16, 32, 64, 128])
        ok &= lad.strictly_decreasing
        details.append(f"(p={p:g}, m={m:g}) ratios " + ",".join(f"{r:.3f}" for r in lad.ratios))
    ok = record(7, "exponential formula ladder", ok, "; ".join(details))
    assert ok


# --------------------------------------------------------------------------
# 8: energy dissipation


def test_criterion_08_energy_dissipation():
    grid = build_grid(Interval(-1.0, 1.0), 0.05, 2.0)
    rng = np.random.default_rng(8)
    worst = -math.inf
    ok = True
    for p, m in ((2.0, 1.0), (3.0, 2.0), (1.5, 1.0), (2.0, 0.5), (3.0, 0.5)):
        kernel = build_kernel(grid, 0.5, p)
        u0 = grid.zeros()
        u0[grid.interior] = rng.uniform(-1, 1, grid.n_interior)
        traj = evolve(u0, ProblemSpec(kernel, Phi.power(m)), EvolutionConfig(0.5, 100))
        rep = energy_dissipation(traj, atol=1e-8)
        ok &= rep.passed
        worst = max(worst, float(np.max(rep.observed)))
    ok = record(8, "energy dissipation", ok, f"max E_n - E_(n-1) = {worst:.3e} (slack 1e-8)")
    assert ok


# --------------------------------------------------------------------------
# 9: recursion lemma


def admissible_tuples(n, seed=9):
    """Random tuples satisfying the stated hypotheses: b > 1, c_i > 0,
    delta_i > 0 and y0 at most the threshold."""
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        M = int(rng.integers(1, 4))
        b = 1.0 + rng.exponential(2.0)
        c = np.exp(rng.normal(size=M))
        delta = rng.uniform(0.1, 2.0, size=M)
        C = np.min(c ** (-1.0 / delta))
        thr = C / M * b ** (-1.0 / np.min(delta) ** 2)
        out.append((b, c, delta, rng.uniform(0, 1) * thr))
    return out


def test_criterion_09_recursion_lemma():
    worked = degiorgi_recursion_check(2.0, [1.0], [1.0], 0.5, k_max=100)
    reports = [degiorgi_recursion_check(b, c, d, y0, k_max=100) for b, c, d, y0 in admissible_tuples(1000)]
    assert all(r.applicable for r in reports)
    bad = [r for r in reports if not r.holds]
    ok = worked.holds and not bad
    detail = f"worked example {'holds' if worked.holds else 'violated'}; {len(bad)}/1000 random tuples violate the bound"
    if bad:
        detail += f" (all with sum c_i (C/M)^delta_i > 1: {all(r.proof_sum > 1 for r in bad)})"
    ok = record(9, "level-set recursion bound", ok, detail)
    assert ok


# --------------------------------------------------------------------------
# 10: smoothing / decay


def test_criterion_10_decay():
    exps = smoothing_exponents(1, 2, 0.5, 1, 1, p_tilde=4)
    assert (exps.alpha_c, exps.gamma_c) == pytest.approx((2.0, 1.0))
    grid = build_grid(Interval(-1.0, 1.0), 0.01, 1.5)
    kernel = build_kernel(grid, 0.5, 2.0)
    x = grid.nodes[:, 0]
    base = np.where(grid.interior_mask, np.exp(-20 * x**2), 0.0)
    reps = []
    for scale in (1, 2, 4):
        traj = evolve(scale * base, ProblemSpec(kernel, Phi.power(1.0)), EvolutionConfig(1.0, 400))
        reps.append(decay_certificate(traj, exps, t_range=(0.01, 1.0)))
    C_ref = reps[0].fitted_C
    Cs = np.array([r.fitted_C for r in reps])
    spread = float(Cs.max() / Cs.min() - 1.0)
    frozen_ok = True
    for scale, rep in zip((2, 4), reps[1:]):
        traj_rep = rep
        frozen = traj_rep.bound / traj_rep.fitted_C * C_ref
        frozen_ok &= bool(np.all(traj_rep.observed <= frozen * (1 + 1e-6)))
    ok = all(r.verdict == PASS for r in reps) and frozen_ok and spread <= 0.25
    ok = record(10, "L^1-L^inf decay with one fitted constant", ok,
                f"fitted C = {', '.join(f'{c:.6g}' for c in Cs)}; spread {spread:.2e} (tol 0.25); frozen C holds: {frozen_ok}")
    assert ok


# --------------------------------------------------------------------------
# 11: extinction


def test_criterion_11_extinction():
    grid = build_grid(Interval(-1.0, 1.0), 1.0 / 64, 3.125)
    assert 390 <= grid.size <= 410
    kernel = build_kernel(grid, 0.5, 2.0)
    phi = Phi.power(0.5)
    u0 = bump(grid, 0.0, 1.0)
    assert lq_norm(grid, u0, math.inf) == 1.0
    spec = ext.make_supersolution(grid, phi, 2.0, 0.5, 1.0, 1.0)
    traj = evolve(u0, ProblemSpec(kernel, phi), EvolutionConfig(4.0, 800))
    cert = ext.extinction_certificate(traj, spec.t_star)
    times = np.linspace(0.0, spec.t_star, 32, endpoint=False)
    res = ext.residual_certificate(spec, kernel, times, 1e-6 * spec.t_star)
    cont = ext.comparison_harness(traj, spec)
    t_obs = cert.extra["observed_extinction_time"]
    ok = cert.passed and res.passed and cont.passed
    ok = record(11, "finite-time extinction", ok,
                f"observed {t_obs:.4g} <= T* = {spec.t_star:.6g}; min residual/scale {res.margin:.3e} (>= -1e-3); "
                f"containment excess {cont.extra['max_excess']:.3e}")
    assert ok


# --------------------------------------------------------------------------
# 12: truncation inequality


def test_criterion_12_truncation_inequality():
    rng = np.random.default_rng(12)
    n = 100_000
    m = 1.0 + rng.exponential(1.5, n)
    p = 1.0 + rng.exponential(1.5, n) + 1e-3
    a = rng.normal(0, 3, n)
    b = rng.normal(0, 3, n)
    lam = rng.exponential(1.0, n)
    ok_mask = truncation_power_inequality(m, lam, a, b, p)
    ok = record(12, "truncation power inequality", bool(ok_mask.all()),
                f"{int(ok_mask.sum())}/{n} samples satisfy both inequalities")
    assert ok


# --------------------------------------------------------------------------
# 13: Lipschitz in time


def test_criterion_13_lipschitz_in_time():
    grid = build_grid(Interval(-1.0, 1.0), 0.05, 2.0)
    details = []
    ok = True
    for m, p in ((2.0, 2.0), (1.0, 3.0)):
        kernel = build_kernel(grid, 0.5, p)
        traj = evolve(bump(grid, 0.0, 0.8), ProblemSpec(kernel, Phi.power(m)), EvolutionConfig(1.0, 200))
        rep = lipschitz_time_estimate(traj, t_min=0.05)
        ok &= rep.passed
        details.append(f"(m={m:g}, p={p:g}) C={rep.extra['C']:g} min bound/observed {np.min(rep.bound / rep.observed):.3g}")
    ok = record(13, "Lipschitz-in-time estimate", ok, "; ".join(details))
    assert ok
