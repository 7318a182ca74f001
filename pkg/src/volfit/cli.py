"""``volfit`` command line: fit, sweep, benchmark, mc, invert.

Exit codes: 0 success, 1 usage or input error, 2 computation failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import warnings
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from volfit.bench import emit_report, load_corpus, outcome_rows, run_benchmark
from volfit.benchmarks import FitError, PolyParams, SviParams
from volfit.black import ConvergenceError, ForwardContext, NoSolutionError, OptionKind, implied_vol
from volfit.calibrate import FitConfig, ModelKind, fit, model_vol, param_names
from volfit.hagan import SabrParams, sigma_hagan_beta1, sigma_hagan_full
from volfit.market_io import (
    ChainParseError,
    SelectionRule,
    build_smile,
    group_snapshots,
    parse_chain_csv,
    parse_time_window,
)
from volfit.mc import HaganGeneralBeta, HaganLognormal, McConfig, SkewVariance, mc_implied_vol, simulate_terminal
from volfit.skew import NegativeVolatilityWarning, SkewSabrParams, SkewSdeParams, equivalent_hagan_params

EXIT_OK, EXIT_INPUT, EXIT_COMPUTE = 0, 1, 2

BASELINE_FORWARD = 5685.6
BASELINE_TAU = 0.176
BASELINE_STRIKES = "3900:7400:100"

SWEEP_BASELINES: dict[str, dict[str, float]] = {
    "hagan": {"alpha": 0.25, "beta": 0.9, "rho": -0.2, "nu": 1.0},
    "skew": {"alpha": 0.55, "rho": -0.2, "nu": 2.8, "c": 0.3, "d": -0.3},
    "svi": {"a": 0.004, "b": 0.05, "rho": -0.4, "m": 0.0, "sigma": 0.1},
    "poly": {"a0": 0.25, "a1": -0.2, "a2": 0.5, "a3": 0.0, "a4": 0.0},
}


class InputError(Exception):
    """Bad user input detected after argument parsing."""


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # argparse exits 2 by default; usage errors are 1 here
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


class Formatter:
    def __init__(self, precision: int):
        if not 1 <= precision <= 17:
            raise InputError("--precision must lie in [1, 17]")
        self.precision = precision

    def num(self, x: float) -> str:
        return f"{x:.{self.precision}g}"

    def json_value(self, x: Any) -> Any:
        if isinstance(x, float):
            return float(self.num(x)) if math.isfinite(x) else None
        if isinstance(x, dict):
            return {k: self.json_value(v) for k, v in x.items()}
        if isinstance(x, (list, tuple)):
            return [self.json_value(v) for v in x]
        return x


def _floats(text: str) -> list[float]:
    try:
        values = [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise InputError(f"bad number list {text!r}") from exc
    if not values or not all(math.isfinite(v) for v in values):
        raise InputError(f"expected finite comma-separated numbers, got {text!r}")
    return values


def _strike_grid(text: str) -> np.ndarray:
    """``lo:hi:step`` (inclusive) or a comma list."""
    if ":" in text:
        try:
            lo, hi, step = (float(v) for v in text.split(":"))
        except ValueError as exc:
            raise InputError(f"bad strike range {text!r}, expected lo:hi:step") from exc
        if not (0 < lo <= hi and step > 0):
            raise InputError(f"bad strike range {text!r}")
        n = int(math.floor((hi - lo) / step + 1e-9)) + 1
        return lo + step * np.arange(n)
    grid = np.array(_floats(text))
    if np.any(grid <= 0):
        raise InputError("strikes must be positive")
    return grid


def _assignments(items: Sequence[str] | None) -> dict[str, float]:
    out = {}
    for item in items or ():
        name, sep, value = item.partition("=")
        if not sep:
            raise InputError(f"expected name=value, got {item!r}")
        try:
            out[name.strip()] = float(value)
        except ValueError as exc:
            raise InputError(f"bad value in {item!r}") from exc
    return out


def _threads(args) -> int:
    if args.threads is not None:
        n = args.threads
    else:
        env = os.environ.get("VOLFIT_THREADS", "1")
        try:
            n = int(env)
        except ValueError as exc:
            raise InputError(f"VOLFIT_THREADS must be an integer, got {env!r}") from exc
    if n < 1:
        raise InputError("thread count must be >= 1")
    return n


def _fit_config(args) -> FitConfig:
    beta: float | None
    if args.beta == "free":
        beta = None
    else:
        try:
            beta = float(args.beta)
        except ValueError as exc:
            raise InputError(f"--beta must be a number or 'free', got {args.beta!r}") from exc
    try:
        return FitConfig(n_starts=args.n_starts, seed=args.seed, hagan_beta=beta,
                         fixed=_assignments(getattr(args, "fix", None)),
                         max_iterations=args.max_iterations)
    except ValueError as exc:
        raise InputError(str(exc)) from exc


def _write(text: str, path: str | None, out) -> None:
    if path in (None, "-"):
        out.write(text)
    else:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(text, encoding="utf-8")


def _csv_text(header: Sequence[str], rows: Sequence[Sequence[str]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _render(name: str, *args) -> None:
    from volfit import plotting  # matplotlib only loads when a figure is requested

    getattr(plotting, name)(*args)


# ---------------------------------------------------------------- fit

def cmd_fit(args, out) -> int:
    fmt = Formatter(args.precision)
    try:
        records = parse_chain_csv(args.input)
    except OSError as exc:
        raise InputError(f"cannot read {args.input}: {exc}") from exc
    except ChainParseError as exc:
        raise InputError(str(exc)) from exc
    snaps = group_snapshots(records)
    if args.timestamp:
        snaps = {k: v for k, v in snaps.items() if k[0] == args.timestamp}
    if args.expiry:
        snaps = {k: v for k, v in snaps.items() if k[1].isoformat() == args.expiry}
    if len(snaps) != 1:
        keys = ", ".join(f"{t} {e}" for t, e in snaps) or "none"
        raise InputError(f"expected one snapshot, found {len(snaps)} ({keys}); use --timestamp/--expiry")
    (timestamp, expiry), group = next(iter(snaps.items()))
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            built = build_smile(group, SelectionRule(args.rule))
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    smile = built.smile
    config = _fit_config(args)
    allowed = param_names(args.model, free_beta=config.hagan_beta is None)
    if set(config.fixed) - set(allowed):
        raise InputError(f"--fix names must be among {', '.join(allowed)}")
    result = fit(args.model, smile, config)
    if not math.isfinite(result.rmse):
        raise FitError("fit produced non-finite model vols")
    doc = {
        "model": result.model.value,
        "params": result.param_dict(),
        "rmse": result.rmse,
        "objective": result.objective,
        "converged": result.converged,
        "n_evals": result.n_evals,
        "start_index": result.start_index,
        "timestamp": timestamp,
        "expiry": expiry.isoformat(),
        "forward": smile.ctx.forward,
        "tau": smile.ctx.tau,
        "n_points": len(smile),
        "n_dropped": built.n_dropped,
    }
    out.write(json.dumps(fmt.json_value(doc), indent=2) + "\n")
    if args.curve or args.figure:
        dense = np.linspace(smile.strikes[0], smile.strikes[-1], 200)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", NegativeVolatilityWarning)
            vols = np.asarray(result.vol(dense), dtype=float)
        if args.curve:
            rows = [("market", fmt.num(k), fmt.num(v)) for k, v in zip(smile.strikes, smile.ivs)]
            rows += [("model", fmt.num(k), fmt.num(v)) for k, v in zip(dense, vols)]
            _write(_csv_text(("series", "strike", "iv"), rows), args.curve, out)
        if args.figure:
            _render("fit_figure", smile.strikes, smile.ivs, dense, vols, result.model.value, args.figure)
    return EXIT_OK


# ---------------------------------------------------------------- sweep

def _sweep_params(model: str, values: dict[str, float]):
    v = values
    if model == "hagan":
        return SabrParams(v["alpha"], v["beta"], v["rho"], v["nu"])
    if model == "skew":
        return SkewSabrParams(v["alpha"], v["rho"], v["nu"], v["c"], v["d"])
    if model == "svi":
        return SviParams(v["a"], v["b"], v["rho"], v["m"], v["sigma"])
    return PolyParams(tuple(v[f"a{i}"] for i in range(5)))


def sweep_rows(model: str, param: str, values: Sequence[float], base: dict[str, float],
               ctx: ForwardContext, strikes: np.ndarray) -> list[tuple[float, float, float]]:
    """(param_value, strike, iv) for each swept value; hagan uses the general-beta formula."""
    baseline = dict(SWEEP_BASELINES[model])
    unknown = (set(base) | {param}) - set(baseline)
    if unknown:
        raise InputError(f"{model} has no parameter(s) {sorted(unknown)}; choose from {sorted(baseline)}")
    baseline.update(base)
    rows = []
    for value in values:
        try:
            p = _sweep_params(model, {**baseline, param: value})
        except ValueError as exc:
            raise InputError(f"{param}={value}: {exc}") from exc
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", NegativeVolatilityWarning)
            if model == "hagan":
                ivs = sigma_hagan_full(p, ctx, strikes)
            else:
                ivs = model_vol(model, p, ctx, strikes)
        rows.extend((value, float(k), float(iv)) for k, iv in zip(strikes, np.atleast_1d(ivs)))
    return rows


def cmd_sweep(args, out) -> int:
    fmt = Formatter(args.precision)
    try:
        ctx = ForwardContext(args.forward, args.tau)
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    strikes = _strike_grid(args.strikes)
    rows = sweep_rows(args.model, args.param, _floats(args.values), _assignments(args.set), ctx, strikes)
    text = _csv_text(("param_value", "strike", "iv"), [[fmt.num(x) for x in r] for r in rows])
    _write(text, args.output, out)
    if args.figure:
        _render("sweep_figure", rows, args.param, args.figure)
    return EXIT_OK


# ---------------------------------------------------------------- benchmark

def cmd_benchmark(args, out) -> int:
    fmt = Formatter(args.precision)
    if not Path(args.corpus).is_dir():
        raise InputError(f"corpus directory {args.corpus} does not exist")
    window = parse_time_window(args.time_window) if args.time_window else None
    corpus = load_corpus(args.corpus, SelectionRule(args.rule), window)
    for name, reason in corpus.skipped:
        print(f"skipped {name}: {reason}", file=sys.stderr)
    if not corpus.smiles:
        raise InputError(f"no usable smiles in {args.corpus}")
    models = [m.strip() for m in args.models.split(",") if m.strip()]
    try:
        models = [ModelKind(m) for m in models]
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    report = run_benchmark(corpus.smiles, models, _fit_config(args), trim=args.trim, threads=_threads(args))
    report.metadata["n_dropped_quotes"] = corpus.n_dropped_quotes
    report.metadata["n_skipped_files"] = len(corpus.skipped)
    report_format = args.format or {".json": "json", ".md": "markdown"}.get(Path(args.report or "").suffix, "csv")
    _write(emit_report(report, report_format, args.precision), args.report, out)
    if args.plot_data:
        rows = [(g, str(i), m, fmt.num(r) if math.isfinite(r) else "") for g, i, m, r in outcome_rows(report)]
        _write(_csv_text(("group", "smile", "model", "rmse"), rows), args.plot_data, out)
    if args.figure:
        _render("benchmark_figure", report.rows, args.figure)
    return EXIT_OK


# ---------------------------------------------------------------- mc

def _dynamics(args):
    try:
        if args.dynamics == "skew":
            p = SkewSdeParams(args.alpha, args.rho, args.nu, args.m)
            return SkewVariance(p), lambda ctx, k: sigma_hagan_beta1(equivalent_hagan_params(p), ctx, k)
        if args.dynamics == "lognormal":
            p = SabrParams(args.alpha, 1.0, args.rho, args.nu)
            return HaganLognormal(p), lambda ctx, k: sigma_hagan_beta1(p, ctx, k)
        p = SabrParams(args.alpha, args.beta, args.rho, args.nu)
        return HaganGeneralBeta(p), lambda ctx, k: sigma_hagan_full(p, ctx, k)
    except ValueError as exc:
        raise InputError(str(exc)) from exc


def mc_rows(dyn, closed_form, ctx: ForwardContext, strikes, cfg: McConfig):
    """(strike, mc_iv, std_error, asymptotic_iv, gap); OTM option at each strike."""
    terminal = simulate_terminal(dyn, ctx, cfg)
    rows = []
    for k in strikes:
        kind = OptionKind.PUT if k < ctx.forward else OptionKind.CALL
        est = mc_implied_vol(dyn, ctx, float(k), kind, cfg, terminal)
        ref = float(closed_form(ctx, float(k)))
        rows.append((float(k), est.value, est.std_error, ref, est.value - ref))
    return rows


def cmd_mc(args, out) -> int:
    fmt = Formatter(args.precision)
    try:
        ctx = ForwardContext(args.forward, args.tau)
        cfg = McConfig(n_paths=args.paths, n_steps=args.steps, seed=args.seed,
                       antithetic=not args.no_antithetic, threads=_threads(args))
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    dyn, closed_form = _dynamics(args)
    strikes = _strike_grid(args.strikes)
    rows = mc_rows(dyn, closed_form, ctx, strikes, cfg)
    text = _csv_text(("strike", "mc_iv", "std_error", "asymptotic_iv", "gap"),
                     [[fmt.num(x) for x in r] for r in rows])
    _write(text, args.output, out)
    if args.figure:
        k, v, se, ref, _ = np.array(rows).T
        _render("mc_figure", k, v, se, ref, args.figure)
    return EXIT_OK


# ---------------------------------------------------------------- invert

def cmd_invert(args, out) -> int:
    fmt = Formatter(args.precision)
    try:
        ctx = ForwardContext(args.forward, args.tau)
        kind = OptionKind.parse(args.kind)
        if not args.strike > 0:
            raise ValueError("strike must be positive")
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    out.write(fmt.num(implied_vol(ctx, args.strike, args.price, kind)) + "\n")
    return EXIT_OK


# ---------------------------------------------------------------- parser

def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--precision", type=int, default=17, help="significant digits in numeric output")


def _fit_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n-starts", type=int, default=8)
    p.add_argument("--max-iterations", type=int, default=2000)
    p.add_argument("--beta", default="1", help="hagan beta, or 'free' to calibrate it")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="volfit", description="SABR-family smile fitting and benchmarking")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    models = [m.value for m in ModelKind]
    rules = [r.value for r in SelectionRule]

    p = sub.add_parser("fit", help="calibrate one model to one chain snapshot")
    p.add_argument("--input", required=True, help="chain CSV")
    p.add_argument("--model", required=True, choices=models)
    p.add_argument("--rule", default="spread", choices=rules, help="quote selection rule")
    p.add_argument("--timestamp", help="snapshot to use when the file holds several")
    p.add_argument("--expiry", help="expiry (YYYY-MM-DD) to use when the file holds several")
    p.add_argument("--fix", action="append", metavar="NAME=VALUE", help="hold a parameter fixed")
    p.add_argument("--curve", help="write market and fitted curve CSV here")
    p.add_argument("--figure", help="render the fit to this image file")
    _fit_flags(p)
    _common(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("sweep", help="implied-vol curves varying one parameter")
    p.add_argument("--model", required=True, choices=list(SWEEP_BASELINES))
    p.add_argument("--param", required=True)
    p.add_argument("--values", required=True, help="comma-separated values")
    p.add_argument("--set", action="append", metavar="NAME=VALUE", help="override a baseline parameter")
    p.add_argument("--forward", type=float, default=BASELINE_FORWARD)
    p.add_argument("--tau", type=float, default=BASELINE_TAU)
    p.add_argument("--strikes", default=BASELINE_STRIKES, help="lo:hi:step or comma list")
    p.add_argument("--output", help="CSV path (default stdout)")
    p.add_argument("--figure", help="render the curve family to this image file")
    _common(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("benchmark", help="fit all models over a corpus directory")
    p.add_argument("--corpus", required=True, help="directory of <contract>__<timestamp>.csv files")
    p.add_argument("--models", default=",".join(models))
    p.add_argument("--report", help="report path (default stdout)")
    p.add_argument("--format", choices=["csv", "json", "markdown"])
    p.add_argument("--rule", default="spread", choices=rules)
    p.add_argument("--trim", action="store_true", help="drop per-smile RMSEs outside the 5-95%% quantiles")
    p.add_argument("--time-window", help="keep snapshots with time of day in HH:MM-HH:MM")
    p.add_argument("--plot-data", help="write per-smile RMSE CSV here")
    p.add_argument("--figure", help="render mean RMSE bars to this image file")
    p.add_argument("--threads", type=int)
    _fit_flags(p)
    _common(p)
    p.set_defaults(func=cmd_benchmark)

    p = sub.add_parser("mc", help="Monte Carlo implied vols against the closed form")
    p.add_argument("--dynamics", required=True, choices=["hagan", "lognormal", "skew"])
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--beta", type=float, default=1.0)
    p.add_argument("--rho", type=float, required=True)
    p.add_argument("--nu", type=float, required=True)
    p.add_argument("--m", type=float, default=0.0, help="skew dynamics level shift")
    p.add_argument("--forward", type=float, default=100.0)
    p.add_argument("--tau", type=float, required=True)
    p.add_argument("--strikes", required=True, help="lo:hi:step or comma list")
    p.add_argument("--paths", type=int, default=1 << 18)
    p.add_argument("--steps", type=int, default=128)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--no-antithetic", action="store_true")
    p.add_argument("--threads", type=int)
    p.add_argument("--output", help="CSV path (default stdout)")
    p.add_argument("--figure", help="render the comparison to this image file")
    _common(p)
    p.set_defaults(func=cmd_mc)

    p = sub.add_parser("invert", help="Black implied vol from an undiscounted price")
    p.add_argument("--forward", type=float, required=True)
    p.add_argument("--strike", type=float, required=True)
    p.add_argument("--tau", type=float, required=True)
    p.add_argument("--price", type=float, required=True)
    p.add_argument("--kind", required=True, help="C or P")
    _common(p)
    p.set_defaults(func=cmd_invert)
    return parser


def main(argv: Sequence[str] | None = None, out=None) -> int:
    out = out or sys.stdout
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args, out)
    except InputError as exc:
        print(f"volfit {args.command}: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (FitError, NoSolutionError, ConvergenceError, ArithmeticError, ValueError) as exc:
        print(f"volfit {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_COMPUTE


if __name__ == "__main__":
    sys.exit(main())
