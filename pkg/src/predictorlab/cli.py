"""Command-line interface: ``predictorlab <command> [options]``.

Exit codes: 0 success, 2 configuration or usage error, 3 a ``--strict``
condition failed or the predictor contraction requirement is violated,
4 the closed loop diverged.
"""

from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

import numpy as np
from pydantic import ValidationError

from .analysis import SweepSpec, design_report, run_sweep, worker_count
from .config import ScenarioFile, dump_scenario, load_scenario, shipped_scenario
from .errors import ContractionViolated, PredictorLabError, SimulationDiverged
from .plant import LtiPlant
from .predictor import PredictorConfig, estimate_K_per_l, lti_predict, phi
from .simulator import MONITOR_TOL, error_norm, run_closed_loop

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_STRICT = 3
EXIT_DIVERGED = 4


class UsageError(PredictorLabError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    src = p.add_mutually_exclusive_group()
    src.add_argument("--config", metavar="PATH", help="scenario TOML file")
    src.add_argument("--scenario", metavar="NAME",
                     help="bundled scenario (example4, example4_forced, lti, limit, sweep_sampling)")
    p.add_argument("--out", metavar="PATH", help="output file (default: standard output)")
    p.add_argument("--strict", action="store_true",
                   help="exit with status 3 when a checked condition fails")
    p.add_argument("--seed", type=int, metavar="N", help="override simulation.seed")
    p.add_argument("--h", type=float, metavar="STEP", help="override the integration step")
    p.add_argument("--t-end", type=float, metavar="T", help="override the simulated horizon")
    return p


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="predictorlab",
                     description="Predictor-based sampled-data output feedback with delays.")
    sub = parser.add_subparsers(dest="command", metavar="command", parser_class=_Parser)
    sub.required = True
    common = _common()

    sub.add_parser("simulate", parents=[common], help="run the closed loop and write a CSV trace")
    sub.add_parser("check", parents=[common], help="synthesize certificates and evaluate the design conditions")
    pr = sub.add_parser("predict", parents=[common], help="evaluate the predictor at t = 0")
    pr.add_argument("--state", type=float, nargs="+", metavar="Z",
                    help="delayed state estimate (default: [predict].state or initial.x0)")
    pr.add_argument("--exact", action="store_true", help="use the exact LTI predictor")
    sub.add_parser("sweep", parents=[common], help="run the [sweep] grid and write a CSV summary")
    sub.add_parser("config-dump", parents=[common], help="print the fully resolved scenario as TOML")
    ek = sub.add_parser("estimate-k", parents=[common], help="estimate the predictor-error constant")
    ek.add_argument("--trials", type=int, default=50, metavar="N")
    ek.add_argument("--l-max", type=int, default=6, metavar="L")
    return parser


# --------------------------------------------------------------------------

def _scenario(args) -> ScenarioFile:
    if args.config:
        sc = load_scenario(args.config)
    elif args.scenario:
        sc = shipped_scenario(args.scenario)
    else:
        sc = ScenarioFile()
    data = sc.model_dump()
    sim = data["simulation"]
    if args.seed is not None:
        sim["seed"] = args.seed
    if args.h is not None:
        sim["h"] = args.h
    if args.t_end is not None:
        sim["t_end"] = args.t_end
    # re-validate so overrides go through the same checks as file values
    try:
        return ScenarioFile.model_validate(data)
    except ValidationError as exc:
        raise UsageError(f"invalid override: {exc}") from None


def _emit(text: str, out):
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def cmd_simulate(args, sc: ScenarioFile) -> int:
    cfg = sc.to_sim_config()
    out = args.out or sc.output.trace
    try:
        tr = run_closed_loop(cfg)
    except SimulationDiverged as exc:
        if out and exc.trace is not None:
            exc.trace.to_csv(out)
        print(f"diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    if out:
        tr.to_csv(out)
    else:
        sys.stdout.write(tr.to_csv())
    info = sys.stderr if not out else sys.stdout
    print(f"rows={len(tr)} t_end={_fmt(tr.t[-1])} backend={tr.meta.get('backend')}", file=info)
    print(f"max|x|={_fmt(np.max(np.linalg.norm(tr.x, axis=1)))} "
          f"final_error={_fmt(error_norm(tr))}", file=info)
    minima = tr.meta.get("monitor_minima", {})
    for k, v in minima.items():
        print(f"monitor {k} min={_fmt(v)}", file=info)
    if args.strict and any(v < -MONITOR_TOL for v in minima.values() if not math.isnan(v)):
        print("strict: a monitored bound was violated", file=sys.stderr)
        return EXIT_STRICT
    return EXIT_OK


def strict_failures(report) -> list[str]:
    """Conditions that make ``check --strict`` fail.

    Every sampling, holding, gain and predictor condition must hold; of the
    two Lyapunov tiers (a sufficient eigenvalue test and a sampled test) one
    passing is enough.
    """
    failed = [r.name for r in report if not r.passed and not r.name.startswith("lyapunov.")]
    lyap = [r for r in report if r.name.startswith("lyapunov.")]
    if lyap and not any(r.passed for r in lyap):
        failed.append("lyapunov")
    return failed


def cmd_check(args, sc: ScenarioFile) -> int:
    cfg = sc.to_sim_config()
    report, cert = design_report(cfg, q=sc.design.q, s=sc.design.s, K=sc.design.K,
                                 grid_points=sc.design.grid_points)
    lines = [f"certificate: mu={_fmt(cert.mu)} gamma={_fmt(cert.gamma)} K1={_fmt(cert.K1)} "
             f"K2={_fmt(cert.K2)} q={_fmt(cert.q)} a={_fmt(cert.a)} ({cert.mu_source})",
             report.format_table()]
    failed = strict_failures(report)
    lines.append("all conditions hold" if not failed else "failed: " + ", ".join(failed))
    _emit("\n".join(lines) + "\n", args.out)
    return EXIT_STRICT if (args.strict and failed) else EXIT_OK


def cmd_predict(args, sc: ScenarioFile) -> int:
    cfg = sc.to_sim_config()
    plant = cfg.build_plant()
    state = args.state or sc.predict.state or list(cfg.x0)
    if len(state) != plant.n:
        raise UsageError(f"state must have {plant.n} entries")
    u_hist = cfg.input_history(plant)
    exact = args.exact or sc.predict.mode == "exact" or cfg.predictor == "exact"
    if exact:
        if not isinstance(plant, LtiPlant):
            raise UsageError("the exact predictor is only available for LTI plants")
        val = lti_predict(plant, state, u_hist, 0.0)
    else:
        pcfg = PredictorConfig.for_plant(plant, cfg.l, cfg.m, cfg.n_q)
        val = phi(plant, pcfg, state, u_hist, 0.0)
    _emit("".join(_fmt(v) + "\n" for v in val), args.out)
    return EXIT_OK


def cmd_sweep(args, sc: ScenarioFile) -> int:
    if sc.sweep is None or not sc.sweep.axes:
        raise UsageError("the scenario has no [sweep] table with axes")
    spec = SweepSpec(sc.to_sim_config(), dict(sc.sweep.axes), sc.sweep.criterion,
                     sc.sweep.bound, sc.sweep.conditions)
    nw = worker_count(len(spec.points()))
    res = run_sweep(spec)
    out = args.out or sc.output.sweep
    text = res.to_csv(out)
    if not out:
        sys.stdout.write(text)
    ok = sum(res.successes())
    print(f"points={len(res)} succeeded={ok} workers={nw}", file=sys.stderr if not out else sys.stdout)
    return EXIT_STRICT if (args.strict and ok < len(res)) else EXIT_OK


def cmd_config_dump(args, sc: ScenarioFile) -> int:
    sc.to_sim_config()  # surface semantic errors (dimensions, signals) as usage errors
    text = dump_scenario(sc)
    _emit(text, args.out)
    return EXIT_OK


def cmd_estimate_k(args, sc: ScenarioFile) -> int:
    cfg = sc.to_sim_config()
    plant = cfg.build_plant()
    if args.trials < 1 or args.l_max < 1:
        raise UsageError("--trials and --l-max must be positive")
    pcfg = PredictorConfig.for_plant(plant, 1, cfg.m, cfg.n_q)
    per_l = estimate_K_per_l(plant, cfg.m, range(1, args.l_max + 1), args.trials,
                             sc.simulation.seed, cfg.n_q)
    lines = [f"# plant={plant.name} m={cfg.m} n_q={cfg.n_q} rho={_fmt(pcfg.rho(plant))} "
             f"trials={args.trials}", "l,K_hat"]
    lines += [f"{l},{_fmt(k)}" for l, k in per_l.items()]
    lines.append(f"# K_hat = {_fmt(max(per_l.values()))}")
    _emit("\n".join(lines) + "\n", args.out)
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "check": cmd_check,
    "predict": cmd_predict,
    "sweep": cmd_sweep,
    "config-dump": cmd_config_dump,
    "estimate-k": cmd_estimate_k,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        sc = _scenario(args)
        return COMMANDS[args.command](args, sc)
    except ContractionViolated as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_STRICT
    except SimulationDiverged as exc:
        print(f"diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (PredictorLabError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
