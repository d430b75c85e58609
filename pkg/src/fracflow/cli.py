"""Command-line entry point: ``run``, ``sweep``, ``check-recursion`` and ``exponents``.

Exit status: 0 when every requested certificate passes or is not
applicable, 1 when one fails, 2 for configuration and gate errors, 3 when
the solver fails.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import extinction as ext
from .config import ConfigError, build, build_u0, build_forcing, load_config, set_field
from .errors import ConfigurationError, EvolutionError, GateError, NumericalError
from .estimates import (
    FAIL,
    NOT_APPLICABLE,
    PASS,
    CertificateReport,
    decay_certificate,
    degiorgi_recursion_check,
    growth_with_truncation_check,
    smoothing_bound_with_forcing,
    smoothing_exponents,
)
from .semigroup import (
    ProblemSpec,
    comparison_estimate,
    energy_dissipation,
    evolve,
    exponential_formula_check,
    growth_estimate,
    level_set_energy_check,
    lipschitz_time_estimate,
    lq_norm,
)

log = logging.getLogger(__name__)

EVERY_STEP = ("comparison", "energy", "level_set", "truncated_growth")


@dataclass
class RunResult:
    reports: list = field(default_factory=list)
    trajectory: object = None

    @property
    def failed(self):
        return [r for r in self.reports if r.verdict == FAIL]

    @property
    def exit_code(self):
        return 1 if self.failed else 0


def _from_check(check, tol=0.0, parameters=None):
    """Wrap a trajectory check into a :class:`CertificateReport`."""
    rep = CertificateReport(
        check.name,
        dict(parameters or {}),
        np.asarray(check.times),
        np.asarray(check.observed),
        np.asarray(check.bound),
        constant="explicit",
    )
    rep.tolerance = tol
    rep.margin = check.margin
    rep.verdict = PASS if check.passed else FAIL
    for k, v in check.extra.items():
        rep.extra[k] = v
    return rep


def _as_list(value, default):
    if value is None:
        return list(default)
    return list(value) if isinstance(value, list) else [value]


def _na(name, reason):
    return CertificateReport.not_applicable(name, reason)


def _unforced(problem):
    return problem.forcing.is_zero and problem.omega == 0


def _certify(setup, traj):
    cfg = setup.config
    problem = setup.problem
    grid = setup.grid
    out = []
    for cert in cfg.certificates:
        P = lambda key, default=None: cfg.param(cert, key, default)  # noqa: E731
        if cert == "growth":
            mode = P("mode", "discrete")
            for q in _as_list(P("q"), (1.0, 2.0, math.inf)):
                chk = growth_estimate(traj, q, rel_tol=P("rel_tol", 1e-6), mode=mode)
                out.append(_from_check(chk, P("rel_tol", 1e-6), {"q": q, "mode": mode}))
        elif cert == "comparison":
            u0b = build_u0(P("u0", "zero"), grid, cfg.seed + 1, cfg.u0_scale)
            forcing_b = build_forcing(P("g"), grid) if P("g") else problem.forcing
            other = ProblemSpec(problem.kernel, problem.phi, problem.pert, forcing_b)
            traj_b = evolve(u0b, other, setup.evolution)
            for nu in ("+", 1):
                chk = comparison_estimate(traj, traj_b, nu, rel_tol=P("rel_tol", 1e-6))
                out.append(_from_check(chk, P("rel_tol", 1e-6), {"nu": nu}))
        elif cert == "energy":
            if not _unforced(problem):
                out.append(_na("energy dissipation", "monotone energy is certified for f = 0, g = 0"))
                continue
            chk = energy_dissipation(traj, atol=P("atol", 1e-8))
            out.append(_from_check(chk, P("atol", 1e-8)))
        elif cert == "level_set":
            if not _unforced(problem):
                out.append(_na("level-set energy inequality", "checked for f = 0, g = 0"))
                continue
            sup = lq_norm(grid, setup.u0, math.inf)
            for lam in _as_list(P("lambda"), (0.0, 0.1 * sup, 0.5 * sup)):
                out.append(_from_check(level_set_energy_check(traj, lam), 1e-8, {"lambda": lam}))
        elif cert == "truncated_growth":
            sup = lq_norm(grid, setup.u0, math.inf)
            for lam in _as_list(P("lambda"), (0.1 * sup, 0.5 * sup)):
                for q in _as_list(P("q"), (1.0, 2.0)):
                    res = growth_with_truncation_check(traj, lam, q)
                    rep = CertificateReport(res.name, {"lambda": lam, "q": q}, constant="explicit")
                    rep.margin = res.margin
                    rep.verdict = PASS if res.passed else FAIL
                    out.append(rep)
        elif cert == "decay":
            t_range = tuple(P("t_range")) if P("t_range") is not None else None
            out.append(decay_certificate(traj, setup.exponents, C=P("C"), t_range=t_range))
        elif cert == "forced_smoothing":
            t_range = tuple(P("t_range")) if P("t_range") is not None else None
            ex = smoothing_exponents(
                problem.m, problem.p, problem.s, problem.d, P("ell", 1.0),
                rho=P("rho", math.inf), psi=P("psi", math.inf), p_tilde=P("p_tilde"), forcing=True,
            )
            out.append(smoothing_bound_with_forcing(traj, ex, C=P("C"), t_range=t_range))
        elif cert == "lipschitz":
            if problem.m is None:
                out.append(_na("Lipschitz-in-time estimate", "needs phi = power(m)"))
                continue
            chk = lipschitz_time_estimate(traj, t_min=P("t_min_fraction", 0.05) * cfg.T_final)
            if chk is None:
                out.append(_na("Lipschitz-in-time estimate", "constant undefined at m(p-1) = 1"))
            else:
                out.append(_from_check(chk, 1e-9))
        elif cert == "exponential_formula":
            if not problem.forcing.is_zero:
                out.append(_na("exponential formula ladder", "needs g = 0"))
                continue
            N_list = [int(n) for n in _as_list(P("N"), (8, 16, 32, 64, 128))]
            lad = exponential_formula_check(setup.u0, problem, cfg.T_final, N_list, setup.evolution.solver)
            rep = CertificateReport(
                "exponential formula ladder",
                {"N": N_list},
                np.asarray(N_list[1:], dtype=float),
                np.asarray(lad.differences),
                np.asarray(lad.differences),
                constant="explicit",
            )
            rep.verdict = PASS if lad.strictly_decreasing else FAIL
            rep.margin = float(np.min(lad.ratios)) if lad.ratios else math.inf
            rep.extra["max_ratio"] = float(np.max(lad.ratios)) if lad.ratios else math.nan
            out.append(rep)
        elif cert == "extinction":
            out.extend(_extinction_reports(setup, traj, P))
    return out


def _extinction_reports(setup, traj, P):
    problem = setup.problem
    m = problem.m
    if m is None or not 0 < m < 1 or not _unforced(problem):
        return [ext.extinction_certificate(traj, math.inf)]
    grid = setup.grid
    R = float(P("R", grid.geometry.bounding_radius()))
    sup = lq_norm(grid, setup.u0, math.inf)
    try:
        spec = ext.make_supersolution(grid, problem.phi, problem.p, problem.s, R, sup)
    except GateError as exc:
        return [_na("finite-time extinction", str(exc))]
    t_stmt = ext.extinction_time(problem.phi, sup, spec.C_R, "statement", problem.p)
    n_samples = int(P("residual_samples", 16))
    times = np.linspace(0.0, spec.t_star, n_samples, endpoint=False)
    delta = float(P("residual_delta", 1e-6 * spec.t_star))
    res = ext.residual_certificate(spec, problem.kernel, times, delta, rel_tol=P("residual_tol", 1e-3))
    cont = ext.comparison_harness(traj, spec)
    cert = ext.extinction_certificate(traj, spec.t_star, rel_tol=P("threshold", 1e-6))
    cert.extra["t_star_statement_mode"] = t_stmt
    cert.extra["C_R"] = spec.C_R
    cert.extra["unit_ball_convention"] = "w_0 = 1"
    cert.extra["residual_min_relative"] = res.margin
    cert.extra["containment_max_excess"] = cont.extra["max_excess"]
    return [res, cont, cert]


def _slug(name):
    keep = "".join(c if c.isalnum() else "_" for c in name.lower())
    return "_".join(filter(None, keep.split("_")))


def write_outputs(result, out_dir):
    out_dir = Path(out_dir)
    (out_dir / "reports").mkdir(parents=True, exist_ok=True)
    if result.trajectory is not None:
        result.trajectory.to_csv(out_dir / "trajectory.csv")
        result.trajectory.write_snapshots(out_dir / "snapshots.txt")
    seen = {}
    lines = []
    for rep in result.reports:
        stem = _slug(rep.name) or "report"
        for k, v in rep.parameters.items():
            if np.ndim(v) == 0 and k in ("q", "nu", "lambda", "mode"):
                stem += f"_{k}{_slug(str(v)) or 'plus'}"
        seen[stem] = seen.get(stem, 0) + 1
        if seen[stem] > 1:
            stem += f"_{seen[stem]}"
        rep.write(out_dir / "reports" / stem)
        lines.append(f"{stem} = {rep.verdict} (margin {rep.margin:.6g})")
    (out_dir / "summary.txt").write_text("\n".join(lines) + "\n")


def run_config(cfg, write=True, out_dir=None):
    """Validate, evolve and certify one configuration.

    Raises
    ------
    ConfigurationError
        Before any compute when the configuration or a gate is violated.
    EvolutionError
        When a step fails.
    """
    if any(c in cfg.certificates for c in EVERY_STEP) and cfg.record_every != 1:
        need = [c for c in cfg.certificates if c in EVERY_STEP]
        raise ConfigError(f"certificates {need} need evolution.record_every = 1", key="evolution.record_every")
    setup = build(cfg)
    traj = evolve(setup.u0, setup.problem, setup.evolution)
    result = RunResult(_certify(setup, traj), traj)
    if write:
        write_outputs(result, out_dir if out_dir is not None else _resolve(cfg, cfg.output_dir))
    return result


def _resolve(cfg, path):
    path = Path(path)
    return path if path.is_absolute() else cfg.base_dir / path


def sweep(cfg, axis, values, write=True):
    """Rerun the certificate suite for each value of a numeric field.

    Returns ``(rows, summary)``: one row per value with verdicts and fitted
    constants, and the aggregate (spread of each fitted constant and the
    successive L1 differences of the final fields).
    """
    rows = []
    finals = []
    base_out = _resolve(cfg, cfg.output_dir)
    for value in values:
        point = set_field(cfg, axis, value)
        res = run_config(point, write=write, out_dir=base_out / f"{_slug(axis)}_{value:g}")
        fitted = {r.name: r.fitted_C for r in res.reports if r.fitted_C is not None}
        rows.append(
            {
                "value": value,
                "verdicts": [r.verdict for r in res.reports],
                "fitted": fitted,
                "failed": [r.name for r in res.failed],
            }
        )
        grid = res.trajectory.grid
        finals.append((grid, res.trajectory.fields[-1]))
    summary = {"axis": axis, "n": len(rows), "spread": {}, "final_differences": []}
    names = sorted({k for r in rows for k in r["fitted"]})
    for name in names:
        Cs = np.array([r["fitted"][name] for r in rows if name in r["fitted"]])
        if len(Cs) and np.all(Cs > 0):
            summary["spread"][name] = float(Cs.max() / Cs.min() - 1.0)
    for (g1, a), (g2, b) in zip(finals, finals[1:]):
        if g1.size == g2.size:
            I = g1.interior
            summary["final_differences"].append(float(np.sum(g1.weights[I] * np.abs(b[I] - a[I]))))
    d = summary["final_differences"]
    summary["differences_decreasing"] = all(y < x for x, y in zip(d, d[1:]))
    if write:
        base_out.mkdir(parents=True, exist_ok=True)
        lines = [f"axis = {axis}", f"points = {len(rows)}"]
        for r in rows:
            lines.append(f"point.{r['value']:g}.failed = {','.join(r['failed']) or 'none'}")
            for name, C in r["fitted"].items():
                lines.append(f"point.{r['value']:g}.fitted_C.{_slug(name)} = {C!r}")
        for name, spread in summary["spread"].items():
            lines.append(f"spread.{_slug(name)} = {spread!r}")
        lines.append(f"final_differences = {','.join(repr(x) for x in d)}")
        lines.append(f"differences_decreasing = {summary['differences_decreasing']}")
        (base_out / f"sweep_{_slug(axis)}.txt").write_text("\n".join(lines) + "\n")
    return rows, summary


# --------------------------------------------------------------------------
# argument handling


def _floats(text):
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma-separated list of numbers, got {text!r}") from None


def _kv(text):
    if "=" not in text:
        raise argparse.ArgumentTypeError(f"expected name=value, got {text!r}")
    k, v = text.split("=", 1)
    return k.strip(), float(v)


def _parser():
    ap = argparse.ArgumentParser(prog="fracflow", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("run", help="evolve one configuration and certify it")
    p.add_argument("config")
    p.add_argument("--output-dir")

    p = sub.add_parser("sweep", help="rerun the certificates along one numeric field")
    p.add_argument("config")
    p.add_argument("--axis", required=True)
    p.add_argument("--values", type=_floats, required=True)
    p.add_argument("--output-dir")
    p.add_argument("--uniformity", type=float, default=0.25, help="allowed spread of fitted constants")

    p = sub.add_parser(
        "check-recursion",
        aliases=["check-lemma32"],
        help="iterate the level-set recursion and test its decay bound",
    )
    p.add_argument("b", type=float)
    p.add_argument("c", type=_floats)
    p.add_argument("delta", type=_floats)
    p.add_argument("y0", type=float)
    p.add_argument("--k-max", type=int, default=100)

    p = sub.add_parser("exponents", help="print smoothing exponents, e.g. m=1 p=2 s=0.5 d=1 ell=1 p_tilde=4")
    p.add_argument("params", nargs="+", type=_kv)
    return ap


def _cmd_run(args):
    cfg = load_config(args.config)
    if args.output_dir:
        cfg.output_dir = str(Path(args.output_dir).resolve())
    res = run_config(cfg)
    for rep in res.reports:
        print(f"{rep.verdict:>14}  {rep.name}  margin={rep.margin:.6g}")
    if res.failed:
        print(f"first failing certificate: {res.failed[0].name}", file=sys.stderr)
    return res.exit_code


def _cmd_sweep(args):
    cfg = load_config(args.config)
    if args.output_dir:
        cfg.output_dir = str(Path(args.output_dir).resolve())
    rows, summary = sweep(cfg, args.axis, args.values)
    code = 0
    for r in rows:
        print(f"{args.axis} = {r['value']:g}: failed = {', '.join(r['failed']) or 'none'}")
        if r["failed"]:
            code = 1
    for name, spread in summary["spread"].items():
        ok = spread <= args.uniformity
        print(f"fitted C spread [{name}] = {spread:.4g} ({'uniform' if ok else 'not uniform'})")
        if not ok:
            code = 1
    if summary["final_differences"]:
        print("final-field differences:", ", ".join(f"{x:.4g}" for x in summary["final_differences"]))
    return code


def _cmd_lemma(args):
    rep = degiorgi_recursion_check(args.b, args.c, args.delta, args.y0, k_max=args.k_max)
    print(f"verdict = {rep.verdict}")
    print(f"C = {rep.C!r}")
    print(f"delta_m = {rep.delta_m!r}")
    print(f"threshold = {rep.threshold!r}")
    print(f"proof_sum = {rep.proof_sum!r}")
    print(f"first_violation = {rep.first_violation}")
    print(f"worst_log_ratio = {rep.worst_log_ratio!r}")
    return 1 if rep.verdict == FAIL else 0


def _cmd_exponents(args):
    params = dict(args.params)
    missing = {"m", "p", "s", "d", "ell"} - params.keys()
    if missing:
        raise ConfigError(f"missing parameters: {', '.join(sorted(missing))}")
    ex = smoothing_exponents(
        params["m"], params["p"], params["s"], int(params["d"]), params["ell"],
        rho=params.get("rho", math.inf), psi=params.get("psi", math.inf),
        p_tilde=params.get("p_tilde"), forcing="rho" in params or "psi" in params,
    )
    for k, v in ex.as_dict().items():
        print(f"{k} = {v!r}")
    return 0


def main(argv=None):
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    handlers = {"run": _cmd_run, "sweep": _cmd_sweep, "check-recursion": _cmd_lemma, "check-lemma32": _cmd_lemma, "exponents": _cmd_exponents}
    try:
        return handlers[args.verb](args)
    except GateError as exc:
        print(f"gate violated [{exc.inequality}]: {exc}", file=sys.stderr)
        return 2
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except EvolutionError as exc:
        print(f"solver failure at step {exc.step}: {exc}", file=sys.stderr)
        return 3
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
