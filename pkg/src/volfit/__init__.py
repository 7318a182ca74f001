"""SABR-family implied-volatility smiles: closed forms, calibration, Monte Carlo checks, benchmarks."""

from volfit.bench import BenchReport, BenchRow, emit_report, load_corpus, rmse, run_benchmark
from volfit.benchmarks import (
    FitError,
    PolyParams,
    SplineModel,
    SviParams,
    eval_spline,
    fit_spline,
    poly_vol,
    svi_total_variance,
    svi_vol,
)
from volfit.black import (
    ConvergenceError,
    ForwardContext,
    NoSolutionError,
    OptionKind,
    black_price,
    black_vega,
    implied_vol,
)
from volfit.calibrate import FitConfig, FitResult, ModelKind, Smile, fit, model_vol, objective, strike_weight
from volfit.hagan import (
    SabrParams,
    expansion_terms,
    general_expansion,
    i0_taylor,
    sigma_hagan_beta1,
    sigma_hagan_full,
)
from volfit.market_io import ChainRecord, SelectionRule, build_smile, parse_chain_csv, select_quote
from volfit.mc import (
    HaganGeneralBeta,
    HaganLognormal,
    McConfig,
    McEstimate,
    SkewVariance,
    mc_implied_vol,
    mc_option_price,
    simulate_terminal,
)
from volfit.skew import (
    SkewSabrParams,
    SkewSdeParams,
    equivalent_hagan_params,
    sigma_skew,
    theoretical_c_star,
    theoretical_d_star,
)

__version__ = "0.1.0"

__all__ = [
    "BenchReport",
    "BenchRow",
    "black_price",
    "black_vega",
    "build_smile",
    "ChainRecord",
    "ConvergenceError",
    "emit_report",
    "equivalent_hagan_params",
    "eval_spline",
    "expansion_terms",
    "fit",
    "fit_spline",
    "FitConfig",
    "FitError",
    "FitResult",
    "ForwardContext",
    "general_expansion",
    "HaganGeneralBeta",
    "HaganLognormal",
    "i0_taylor",
    "implied_vol",
    "load_corpus",
    "mc_implied_vol",
    "mc_option_price",
    "McConfig",
    "McEstimate",
    "model_vol",
    "ModelKind",
    "NoSolutionError",
    "objective",
    "OptionKind",
    "parse_chain_csv",
    "poly_vol",
    "PolyParams",
    "rmse",
    "run_benchmark",
    "SabrParams",
    "select_quote",
    "SelectionRule",
    "sigma_hagan_beta1",
    "sigma_hagan_full",
    "sigma_skew",
    "simulate_terminal",
    "SkewSabrParams",
    "SkewSdeParams",
    "SkewVariance",
    "Smile",
    "SplineModel",
    "strike_weight",
    "svi_total_variance",
    "svi_vol",
    "SviParams",
    "theoretical_c_star",
    "theoretical_d_star",
]
