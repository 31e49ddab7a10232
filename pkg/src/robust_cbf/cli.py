"""Robust CBF safety filter: solve, simulate, verify, check-derivs.

Exit codes: 0 success, 1 errors (bad config, write failure, failed checks),
2 infeasible solve or a scenario that cannot start.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .config import Config, load_config
from .constraint import assemble_constraint, normalize_constraint
from .errors import ConfigError, ContractViolation, InfeasibleError, RobustCBFError, SetupError
from .model import AgentState, check_jets_fd, eval_barrier_jet, eval_model_jet
from .oracle import solve_nominal_qp, worst_case_z
from .output import write_csv, write_svg
from .sdp import SolveStatus, SolverOptions, solve_safe_control
from .sim import run_simulation, safety_report
from .verification import run_verify

EXIT_OK, EXIT_ERROR, EXIT_INFEASIBLE = 0, 1, 2
FD_STATES = 20


def _fmt(v) -> str:
    return " ".join(f"{x:.6f}" for x in np.atleast_1d(v))


def _need_config(args) -> Config:
    if args.config is None:
        raise ConfigError(f"{args.command} needs --config")
    return load_config(args.config)


def _tilde_from_config(cfg: Config, args):
    est = cfg.estimate()
    if cfg.raw_mode:
        data = cfg.constraint_data()
    else:
        model = cfg.scenario_model()
        xA, xR = cfg.state(model)
        s = AgentState(xA, xR)
        data = assemble_constraint(eval_model_jet(model, s), eval_barrier_jet(model, xA), cfg.gains())
    if est.theta_hat.size != data.p:
        raise cfg.error("estimate.theta_hat", f"has length {est.theta_hat.size}, expected p={data.p}")
    return data, est, normalize_constraint(data, est)


def cmd_solve(args) -> int:
    cfg = _need_config(args)
    data, est, t = _tilde_from_config(cfg, args)
    opts = cfg.solver_options(args.slack_mode)
    if args.dry_run:
        print(f"config ok: p={t.p} m={t.m}")
        return EXIT_OK
    sol = solve_safe_control(t, opts)
    print(f"u = {_fmt(sol.u)}")
    print(f"lambda = {sol.lam:.6g}")
    print(f"t = {sol.t:.6g}")
    print(f"status = {sol.status.value}")
    print(f"kkt_residual = {sol.kkt_residual:.3e}")
    print(f"iterations = {sol.iterations}")
    if opts.slack_mode:
        print(f"slack = {sol.slack:.6g}")
    if sol.optimal:
        print(f"robust_margin = {worst_case_z(t, sol.u).value:.3e}")
    if est.eta == 0.0:
        th = est.theta_hat
        row = (data.C.T @ th + data.d, float(th @ data.H @ th + data.fcoef @ th + data.g))
        try:
            print(f"nominal_qp_u = {_fmt(solve_nominal_qp([row]))}")
        except InfeasibleError:
            print("nominal_qp_u = infeasible")
    if sol.status is SolveStatus.OPTIMAL:
        return EXIT_OK
    if sol.status is SolveStatus.INFEASIBLE:
        return EXIT_INFEASIBLE
    return EXIT_ERROR


def cmd_simulate(args) -> int:
    cfg = _need_config(args)
    if cfg.raw_mode:
        raise ConfigError("coeffs.* keys describe a single constraint; simulate needs a model")
    try:
        sc = cfg.scenario(seed=args.seed, slack_mode=args.slack_mode)
    except SetupError as exc:
        print(f"setup error: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    out = Path(args.out) if args.out else Path(Path(args.config).stem + ".csv")
    if args.dry_run:
        print(f"config ok: {sc.steps + 1} rows would be written to {out}")
        return EXIT_OK
    try:
        log = run_simulation(sc)
    except SetupError as exc:
        print(f"setup error: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    try:
        with open(out, "w", newline="", encoding="utf-8") as fh:
            write_csv(log, fh)
        if args.svg:
            write_svg(log, out.with_suffix(".svg"))
    except OSError as exc:
        print(f"error: cannot write output: {exc}", file=sys.stderr)
        return EXIT_ERROR
    print(f"wrote {len(log)} rows to {out}")
    print(safety_report(log))
    return EXIT_OK


def cmd_verify(args) -> int:
    if args.count < 1 or args.p < 1 or args.m < 1:
        print("error: --count, --p and --m must be positive", file=sys.stderr)
        return EXIT_ERROR
    if args.config:
        opts = load_config(args.config).solver_options(args.slack_mode)
    else:
        opts = SolverOptions(slack_mode=args.slack_mode)
    seed = 0 if args.seed is None else args.seed
    if args.dry_run:
        print(f"would verify {args.count} instances (seed {seed}, p={args.p}, m={args.m})")
        return EXIT_OK
    report = run_verify(args.count, seed, args.p, args.m, opts)
    print(f"seed {seed}, p={args.p}, m={args.m}")
    print(report)
    print("all pass" if report.passed else "FAILURES")
    return EXIT_OK if report.passed else EXIT_ERROR


def cmd_check_derivs(args) -> int:
    cfg = _need_config(args)
    model = cfg.scenario_model()
    if "state.xA" in cfg or "state.xR" in cfg:
        cfg.state(model)  # dimension check
    if args.dry_run:
        print(f"config ok: model {model.name}, n={model.n}, p={model.p}")
        return EXIT_OK
    rng = np.random.default_rng(cfg.get("sim.seed", 0) if args.seed is None else args.seed)
    worst: dict = {}
    failures = 0
    for _ in range(FD_STATES):
        s = AgentState(rng.standard_normal(model.n), rng.standard_normal(model.n))
        rep = check_jets_fd(model, s)
        failures += int(not rep.passed)
        for k, v in rep.errors.items():
            worst[k] = max(worst.get(k, 0.0), v)
        tol = rep.tol
    print(f"model {model.name}: {FD_STATES} random states, {failures} failing")
    for k, v in worst.items():
        print(f"  {'ok  ' if v <= tol else 'FAIL'} {k:<8} max rel err {v:.3e} (tol {tol:g})")
    return EXIT_OK if failures == 0 else EXIT_ERROR


COMMANDS = {
    "solve": cmd_solve,
    "simulate": cmd_simulate,
    "verify": cmd_verify,
    "check-derivs": cmd_check_derivs,
}


def _global_flags(suppress: bool) -> argparse.ArgumentParser:
    # subcommand copies use SUPPRESS so a flag given before the subcommand survives
    kw = {"default": argparse.SUPPRESS} if suppress else {}
    flag = {"action": "store_true", **kw}
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", help="scenario file (key = value)", **kw)
    p.add_argument("--out", help="output CSV path for simulate", **kw)
    p.add_argument("--seed", type=int, help="seed overriding the config", **kw)
    p.add_argument("--svg", help="also write an SVG plot of h and eta", **flag)
    p.add_argument("--dry-run", help="validate inputs, write nothing", **flag)
    p.add_argument("--slack-mode", help="relax the LMI with a penalized slack", **flag)
    return p


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="robust-cbf", description=__doc__.splitlines()[0], parents=[_global_flags(False)]
    )
    sub = parser.add_subparsers(dest="command", required=True)
    common = _global_flags(True)
    sub.add_parser("solve", parents=[common], help="one-shot robust safe control")
    sub.add_parser("simulate", parents=[common], help="closed-loop simulation to CSV")
    v = sub.add_parser("verify", parents=[common], help="cross-method checks on random instances")
    v.add_argument("--count", type=int, default=200)
    v.add_argument("--p", type=int, default=3)
    v.add_argument("--m", type=int, default=2)
    sub.add_parser("check-derivs", parents=[common], help="finite-difference check of model jets")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except SetupError as exc:
        print(f"setup error: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (ContractViolation, RobustCBFError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
