"""
Command-line entry point.

Subcommands: ``care``, ``simulate``, ``mc``, ``diagnose`` and ``plot``.
Exit status is 0 on success, 2 for invalid input or configuration and 3 for
numerical failures (non-convergence, instability, failed diagnostics).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from ..dynamics import TimeGrid, simulate_bundle
from ..errors import (
    ConvergenceError,
    DomainError,
    HybridSDEError,
    SingularMatrixError,
    StabilizabilityError,
)
from ..harness import diagnose_ladder, regime_for, scaling_study
from ..noise import generate_noise
from ..regimes import Regime, ScalingRegime, snap_delta
from ..riccati import closed_loop_eigen_check, solve_care
from .config import DEFAULT_SEED, ConfigError, RunConfig, build_model, load_config, lqr_spec
from .svg import line_chart
from .tables import read_csv, write_atomic, write_csv

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_NUMERICAL = 3


def _fmt_row(values) -> str:
    return "[" + ", ".join(f"{v:#.4g}" for v in values) + "]"


def _load(args) -> RunConfig:
    if args.config is None:
        raise ConfigError("--config is required for this command")
    config = load_config(args.config)
    if args.seed is not None:
        config.seed = args.seed
    return config


def _out_dir(args) -> Path:
    return Path(args.out) if args.out else Path(".")


def cmd_care(args) -> int:
    config = _load(args)
    spec = lqr_spec(config)
    sol = solve_care(spec)
    eigs = closed_loop_eigen_check(spec.A, spec.B, sol.K)
    print("P =")
    for row in sol.P:
        print("  " + _fmt_row(row))
    print("K = " + "; ".join(_fmt_row(row) for row in sol.K))
    print(f"CARE residual = {sol.residual:.3e}")
    print("closed-loop eigenvalues: " + ", ".join(f"{e.real:.6g}{e.imag:+.6g}j" for e in eigs))
    if args.out:
        rows = [(0, i, j, sol.P[i, j]) for i in range(sol.P.shape[0]) for j in range(sol.P.shape[1])]
        rows += [(1, i, j, sol.K[i, j]) for i in range(sol.K.shape[0]) for j in range(sol.K.shape[1])]
        path = write_csv(_out_dir(args) / "care.csv", ["matrix", "row", "col", "value"], rows)
        print(f"wrote {path}  (matrix 0 = P, 1 = K)")
    return EXIT_OK


def _single_epsilon(config: RunConfig) -> float:
    if config.epsilon is None:
        raise ConfigError("this command needs a single 'epsilon'")
    return config.epsilon


def cmd_simulate(args) -> int:
    config = _load(args)
    model, _ = build_model(config)
    eps = _single_epsilon(config)
    delta, _, _ = snap_delta(config.delta_for(eps), config.dt)
    grid = TimeGrid.build(config.T, config.dt, delta)
    if eps == 0:
        regime = ScalingRegime(0.0, grid.delta, Regime.REGIME1, 0.0)
    else:
        regime = regime_for(config.rule, eps, grid.delta, config.c_mode)
    noise = generate_noise(grid.n_steps, grid.dt, model.n, config.seed, 0, config.measurement_noise)
    bundle = simulate_bundle(model, grid, noise, regime)

    n = model.n
    header = ["t"] + [f"X{i + 1}" for i in range(n)] + [f"x{i + 1}" for i in range(n)]
    header += [f"S{i + 1}" for i in range(n)]
    blocks = [grid.times[:, None], bundle.X, bundle.x_det, bundle.first_order]
    if args.sampled:
        header += [f"xd{i + 1}" for i in range(n)]
        blocks.append(bundle.x_sampled)
    table = np.hstack(blocks)
    out = _out_dir(args)
    csv_path = write_csv(out / "simulate.csv", header, table)
    print(f"wrote {csv_path} ({len(table)} rows)")
    if not args.no_svg:
        series = []
        for i in range(n):
            series.append((f"X{i + 1}", grid.times, bundle.X[:, i]))
            series.append((f"S{i + 1}", grid.times, bundle.first_order[:, i]))
        title = f"sample path, eps={eps:g}, delta={grid.delta:g}"
        svg = line_chart(series, title=title, xlabel="t", ylabel="state")
        print(f"wrote {write_atomic(out / 'simulate.svg', svg)}")
    return EXIT_OK


def cmd_mc(args) -> int:
    config = _load(args)
    if not config.epsilons:
        raise ConfigError("mc needs an 'epsilons' list")
    model, _ = build_model(config)
    report = scaling_study(
        model,
        config.rule,
        config.epsilons,
        config.T,
        config.dt,
        config.n_paths,
        config.seed,
        c_mode=config.c_mode,
        measurement_noise=config.measurement_noise,
        threads=args.threads,
    )
    n = model.n
    header = ["epsilon", "delta", "c", "order0_mean", "order0_halfwidth", "order1_mean", "order1_halfwidth"]
    header += [f"e{j + 1}" for j in range(n)]
    rows = []
    for k, eps in enumerate(report.epsilons):
        c = report.cs[k] if report.cs[k] is not None else float("inf")
        rows.append(
            [eps, report.deltas[k], c, report.order0_errors[k], report.order0_halfwidths[k],
             report.order1_errors[k], report.order1_halfwidths[k], *report.terminal_errors[k]]
        )
    out = _out_dir(args)
    print(f"wrote {write_csv(out / 'mc.csv', header, rows)}")
    summary = json.dumps(report.summary(), indent=2, sort_keys=True) + "\n"
    print(f"wrote {write_atomic(out / 'mc_summary.json', summary)}")
    series = [
        ("E sup|X - x|", report.epsilons, report.order0_errors),
        ("E sup|X - S|", report.epsilons, report.order1_errors),
    ]
    term = np.asarray(report.terminal_errors)
    series += [(f"e_{j + 1} = E|X{j + 1}(T) - S{j + 1}(T)|", report.epsilons, term[:, j]) for j in range(n)]
    series = [s for s in series if np.all(np.asarray(s[2]) > 0)]
    if series:
        svg = line_chart(series, title="error versus epsilon", xlabel="epsilon", ylabel="error",
                         logx=True, logy=True)
        print(f"wrote {write_atomic(out / 'mc.svg', svg)}")
    print(f"slope order 0 = {report.slope0:.4f}, slope order 1 = {report.slope1:.4f}")
    return EXIT_OK


def cmd_diagnose(args) -> int:
    config = _load(args)
    eps = _single_epsilon(config)
    if not eps > 0:
        raise ConfigError("diagnose needs epsilon > 0 (the decomposition divides by epsilon)")
    model, _ = build_model(config)
    ladder = sorted(config.dt_ladder, reverse=True)
    delta, _, _ = snap_delta(config.delta_for(eps), ladder[0])
    report = diagnose_ladder(
        model, config.T, delta, eps, ladder, config.seed, measurement_noise=config.measurement_noise
    )
    header = ["dt", "sol_diff", "decomposition", "l2_sup", "l3_sup", "l1_minus_drift"]
    rows = zip(report.dts, report.sol_diff, report.decomposition, report.l2_sup, report.l3_sup,
               report.l1_minus_drift)
    out = _out_dir(args)
    print(f"wrote {write_csv(out / 'diagnose.csv', header, rows)}")
    verdict = "pass" if report.passed else "fail"
    summary = {
        "order_sol_diff": report.order_sol_diff,
        "order_decomposition": report.order_decomposition,
        "monotone": report.monotone,
        "threshold": report.threshold,
        "verdict": verdict,
    }
    text = json.dumps(summary, indent=2, sort_keys=True) + "\n"
    print(f"wrote {write_atomic(out / 'diagnose_summary.json', text)}")
    print(
        f"decay order: sol_diff {report.order_sol_diff:.3f}, decomposition "
        f"{report.order_decomposition:.3f}; monotone={report.monotone}; verdict: {verdict}"
    )
    return EXIT_OK if report.passed else EXIT_NUMERICAL


def cmd_plot(args) -> int:
    try:
        header, columns = read_csv(args.csv)
    except (OSError, ValueError, StopIteration) as exc:
        raise ConfigError(f"cannot read {args.csv}: {exc}") from exc
    xcol = args.x or header[0]
    ycols = args.y.split(",") if args.y else [h for h in header if h != xcol]
    missing = [c for c in [xcol, *ycols] if c not in columns]
    if missing:
        raise ConfigError(f"missing column(s) {missing}; available: {header}")
    series = [(c, columns[xcol], columns[c]) for c in ycols]
    try:
        svg = line_chart(series, title=args.title or "", xlabel=xcol, ylabel=args.ylabel or "",
                         logx=args.logx, logy=args.logy)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    output = Path(args.output) if args.output else _out_dir(args) / (Path(args.csv).stem + ".svg")
    print(f"wrote {write_atomic(output, svg)}")
    return EXIT_OK


def _global_flags(parser, suppress: bool):
    default = argparse.SUPPRESS if suppress else None
    parser.add_argument("--config", default=default, help="JSON run configuration")
    parser.add_argument("--seed", type=int, default=default, help=f"RNG seed (default {DEFAULT_SEED})")
    parser.add_argument("--out", default=default, help="output directory (default: current)")
    parser.add_argument("--threads", type=int, default=argparse.SUPPRESS if suppress else 1,
                        help="worker threads for Monte Carlo")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hybridsde",
        description="Sampled-data linear systems with small noise: simulation and error studies.",
    )
    _global_flags(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("care", help="solve the Riccati equation and print the LQR gain")
    _global_flags(p, suppress=True)
    p.set_defaults(func=cmd_care)

    p = sub.add_parser("simulate", help="one coupled sample path to CSV (and SVG)")
    _global_flags(p, suppress=True)
    p.add_argument("--sampled", action="store_true", help="add zero-order-hold columns xd*")
    p.add_argument("--no-svg", action="store_true", help="skip the SVG chart")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("mc", help="Monte Carlo error-versus-epsilon study")
    _global_flags(p, suppress=True)
    p.set_defaults(func=cmd_mc)

    p = sub.add_parser("diagnose", help="pathwise identity residuals along a dt ladder")
    _global_flags(p, suppress=True)
    p.set_defaults(func=cmd_diagnose)

    p = sub.add_parser("plot", help="line chart of CSV columns as SVG")
    _global_flags(p, suppress=True)
    p.add_argument("csv", help="input CSV with a header row")
    p.add_argument("--x", help="x column (default: first)")
    p.add_argument("--y", help="comma-separated y columns (default: all others)")
    p.add_argument("--logx", action="store_true", help="log2 x axis")
    p.add_argument("--logy", action="store_true", help="log2 y axis")
    p.add_argument("--title")
    p.add_argument("--ylabel")
    p.add_argument("--output", help="SVG path (default: <out>/<csv stem>.svg)")
    p.set_defaults(func=cmd_plot)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, SingularMatrixError, DomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (ConvergenceError, StabilizabilityError, HybridSDEError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
