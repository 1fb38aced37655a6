"""Command-line entry point: ``mjlsq {solve,learn,stability,chain}``.

Exit status is 0 on success, 1 for unreadable or invalid input, and 2 when a
numerical procedure fails (no convergence, lost excitation, starved modes).
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import io
from .errors import InputError, NoConvergence, NumericalError
from .model import (
    MjlsPlant,
    monte_carlo_rollouts,
    sample_mode_path,
    simulate,
    split_streams,
    stationary_distribution,
    validate_model,
)
from .qlearn import estimate_dataset_length, q_learning
from .riccati import DEFAULT_MAX_ITER, DEFAULT_TOL, ms_stability_radius, value_iteration

fmt = io.fmt
SNAPSHOT_ITERS = (0, 2, 5)


def _gains_line(K) -> str:
    """Human summary with 3-decimal rounding."""
    parts = []
    for i, Ki in enumerate(K):
        vals = " ".join(f"{v:.3f}" for v in np.ravel(Ki))
        parts.append(f"K_{i + 1}=[{vals}]")
    return " ".join(parts)


def _print_gains(K) -> None:
    for i, Ki in enumerate(K):
        for r, row in enumerate(np.atleast_2d(Ki)):
            label = f"K_{i + 1}" if Ki.shape[0] == 1 else f"K_{i + 1}[{r + 1}]"
            print(f"  {label} = [" + ", ".join(fmt(v) for v in row) + "]")


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_solve(args) -> int:
    model, weights = io.load_model(args.model)
    validate_model(model, weights)
    sol = value_iteration(model, weights, tol=args.tol, max_iter=args.max_iter)
    out = _out_dir(args)
    io.write_json(out / "riccati.json", io.riccati_to_dict(sol))
    print(f"value iteration converged: iterations={sol.iterations} residual={fmt(sol.residual)}")
    _print_gains(sol.K)
    print(_gains_line(sol.K))
    return 0


def cmd_learn(args) -> int:
    model, weights = io.load_model(args.model)
    validate_model(model, weights)
    cfg_doc = io.load_document(args.learning_config or args.model)
    config = io.learning_config_from_dict(cfg_doc)
    section = cfg_doc.get("learning", cfg_doc)
    if args.seed is not None:
        config.seed = args.seed
    theta0 = int(section.get("theta0", 1)) - 1
    streams = split_streams(config.seed)
    plant = MjlsPlant(model, streams.chain, theta0=theta0)
    out = _out_dir(args)

    oracle_K = None
    if args.oracle:
        oracle_K = value_iteration(model, weights, tol=args.tol, max_iter=args.max_iter).K

    status = 0
    try:
        report = q_learning(plant, weights, model.phi, config, streams.noise, streams.reset)
    except NoConvergence as exc:
        report = exc.result
        print(f"error: {exc}", file=sys.stderr)
        status = 2

    io.write_learning_report_csv(out / "learning_report.csv", report)
    io.write_gains_trace_csv(out / "gains_trace.csv", report, oracle_K)

    x0 = config.x0 if config.x0 is not None else np.eye(model.n)[0]
    final = report.iterations
    runs = {}
    for it in sorted(set(s for s in SNAPSHOT_ITERS if s < final) | {final}):
        rng = split_streams(config.seed).evaluation
        try:
            runs[it] = simulate(model, report.K_history[it], x0, theta0, args.horizon, rng=rng)
        except NumericalError:
            print(f"note: closed loop under iteration-{it} gains diverged; omitted from closed_loop.csv")
    io.write_closed_loop_csv(out / "closed_loop.csv", runs, model.n, model.m)
    if args.svg:
        iters = np.arange(len(report.K_history))
        gains = np.array([K.ravel() for K in report.K_history])
        labels = io.gain_columns(*report.K.shape)
        io.write_svg_lines(out / "gains_trace.svg",
                           {lab: (iters, gains[:, c]) for c, lab in enumerate(labels)},
                           title="controller gains per iteration")

    print(f"q-learning {'converged' if report.converged else 'stopped'} after "
          f"{report.iterations} iterations, final e_K={fmt(report.e_K_history[-1])}")
    _print_gains(report.K)
    print(_gains_line(report.K))
    if oracle_K is not None:
        err = float(np.max(np.abs(report.K - oracle_K)))
        print(f"max |K - K_oracle| = {fmt(err)}")
    return status


def cmd_stability(args) -> int:
    model, weights = io.load_model(args.model)
    validate_model(model, weights)
    K = io.load_gains(args.gains)
    radius = ms_stability_radius(model, K)
    verdict = "PASS" if radius < 1.0 else "FAIL"
    print(f"lifted spectral radius = {fmt(radius)}  {verdict}")
    x0 = np.eye(model.n)[0]
    stats = monte_carlo_rollouts(model, K, x0, 0, args.horizon, args.rollouts,
                                 split_streams(args.seed).evaluation)
    trips = int(stats.tripped.sum())
    mean = float(np.mean(stats.sum_sq_state))
    print(f"empirical mean of sum |x_k|^2 over {args.horizon} steps "
          f"({args.rollouts} rollouts) = {fmt(mean)}; overflow-guard trips = {trips}")
    return 0


def cmd_chain(args) -> int:
    model, weights = io.load_model(args.model)
    validate_model(model, weights)
    pi = stationary_distribution(model.phi)
    print("stationary distribution = [" + ", ".join(fmt(p) for p in pi) + "]")
    streams = split_streams(args.seed)
    est = estimate_dataset_length(model.phi, args.L, args.trials, streams.evaluation)
    print(f"data length for L={args.L} samples per mode ({args.trials} trials): "
          f"mean={fmt(est.mean)} std={fmt(est.std)} "
          f"95% CI=[{fmt(est.ci95[0])}, {fmt(est.ci95[1])}]")
    print("quantiles: " + " ".join(f"q{q}={fmt(v)}" for q, v in est.quantiles.items()))
    out = _out_dir(args)
    path = sample_mode_path(model.phi, 0, args.T, streams.chain)
    io.write_mode_trace_csv(out / "mode_trace.csv", path)
    if args.svg:
        io.write_svg_lines(out / "mode_trace.svg", {"theta": (np.arange(args.T), path + 1)},
                           title="Markov mode", step=True)
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--model", required=True, help="model document (JSON)")
    common.add_argument("--out", default=".", help="output directory")
    common.add_argument("--seed", type=int, default=None, help="master random seed")
    common.add_argument("--tol", type=float, default=DEFAULT_TOL, help="value-iteration tolerance")
    common.add_argument("--max-iter", type=int, default=DEFAULT_MAX_ITER, help="value-iteration cap")
    common.add_argument("--svg", action="store_true", help="also write SVG line charts")

    ap = argparse.ArgumentParser(prog="mjlsq", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", parents=[common], help="model-based gains by value iteration")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("learn", parents=[common], help="model-free gains by Q-learning")
    p.add_argument("--learning-config", help="document with a 'learning' section (default: --model)")
    p.add_argument("--oracle", action="store_true", help="compare with model-based gains")
    p.add_argument("--horizon", type=int, default=200, help="closed-loop simulation length")
    p.set_defaults(func=cmd_learn)

    p = sub.add_parser("stability", parents=[common], help="mean-square stability of given gains")
    p.add_argument("--gains", required=True, help="JSON document with a 'K' field")
    p.add_argument("--rollouts", type=int, default=10_000)
    p.add_argument("--horizon", type=int, default=200)
    p.set_defaults(func=cmd_stability)

    p = sub.add_parser("chain", parents=[common], help="mode-chain statistics")
    p.add_argument("--L", type=int, default=15, help="samples required per mode")
    p.add_argument("--trials", type=int, default=100_000)
    p.add_argument("--T", type=int, default=50, help="length of the sample mode path")
    p.set_defaults(func=cmd_chain)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.seed is None and args.command != "learn":
        args.seed = 0
    try:
        return args.func(args)
    except (InputError, OSError, KeyError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except NumericalError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
