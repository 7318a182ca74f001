"""Weighted least-squares calibration of the five smile models.

Nonlinear models (hagan, skew, svi) are fitted by bounded Nelder-Mead from a
deterministic set of starts; each start's simplex result is then polished with
a bounded trust-region least-squares step on the same residual vector. The
polynomial is a weighted linear least-squares solve and the spline delegates to
:func:`volfit.benchmarks.fit_spline`.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Any, Mapping

import numpy as np
from scipy.optimize import least_squares, minimize
from scipy.stats import qmc

from volfit.benchmarks import (
    FitError,
    PolyParams,
    SplineModel,
    SviParams,
    _svi_w,
    eval_spline,
    fit_spline,
    poly_vol,
)
from volfit.black import ForwardContext
from volfit.hagan import SabrParams, _hagan_beta1, _hagan_full
from volfit.skew import SkewSabrParams, _skew_kernel

__all__ = [
    "FitConfig",
    "FitError",
    "FitResult",
    "ModelKind",
    "Smile",
    "default_bounds",
    "fit",
    "model_vol",
    "objective",
    "param_names",
    "strike_weight",
]

# stands in for a non-finite model value inside residual vectors
_BAD_RESIDUAL = 1e3
# skew-SABR keeps its ATM level alpha + d at least this far above zero
LEVEL_FLOOR = 1e-4


class ModelKind(str, enum.Enum):
    HAGAN = "hagan"
    SKEW = "skew"
    SVI = "svi"
    POLY = "poly"
    SPLINE = "spline"


def strike_weight(strike, forward: float):
    """Gaussian weight exp(-0.25 ((K - f) / (0.1 f))^2), peaking at 1 on the forward."""
    if not forward > 0:
        raise ValueError("forward must be positive")
    x = (np.asarray(strike, dtype=float) - forward) / (0.1 * forward)
    out = np.exp(-0.25 * x * x)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True, slots=True, eq=False)
class Smile:
    """One implied-vol cross-section at a fixed forward and maturity."""

    ctx: ForwardContext
    strikes: np.ndarray
    ivs: np.ndarray
    weights: np.ndarray

    def __post_init__(self) -> None:
        k = np.array(self.strikes, dtype=float)
        v = np.array(self.ivs, dtype=float)
        w = np.array(self.weights, dtype=float)
        if not (k.ndim == 1 and k.shape == v.shape == w.shape):
            raise ValueError("strikes, ivs and weights must be 1-d arrays of equal length")
        if len(k) < 6:
            raise ValueError(f"a smile needs at least 6 points, got {len(k)}")
        if np.any(k <= 0) or np.any(np.diff(k) <= 0):
            raise ValueError("strikes must be positive and strictly increasing")
        if np.any(~np.isfinite(v)) or np.any(v <= 0):
            raise ValueError("market ivs must be positive")
        if np.any(w < 0) or np.count_nonzero(w > 0) < 5:
            raise ValueError("weights must be nonnegative with at least 5 positive")
        for name, arr in (("strikes", k), ("ivs", v), ("weights", w)):
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    @classmethod
    def from_ivs(cls, ctx: ForwardContext, strikes, ivs, weights=None) -> Smile:
        strikes = np.asarray(strikes, dtype=float)
        if weights is None:
            weights = strike_weight(strikes, ctx.forward)
        return cls(ctx, strikes, np.asarray(ivs, dtype=float), np.asarray(weights, dtype=float))

    @property
    def points(self) -> list[tuple[float, float, float]]:
        return list(zip(self.strikes.tolist(), self.ivs.tolist(), self.weights.tolist()))

    @property
    def log_moneyness(self) -> np.ndarray:
        return np.log(self.strikes / self.ctx.forward)

    def __len__(self) -> int:
        return len(self.strikes)


@dataclass(frozen=True, slots=True)
class FitConfig:
    max_iterations: int = 2000
    tolerance: float = 1e-12
    n_starts: int = 8
    bounds: Mapping[str, tuple[float, float]] | None = None
    penalty_scale: float = 1e4
    seed: int = 0
    # beta used by the hagan model; None calibrates it as a fourth parameter
    hagan_beta: float | None = 1.0
    # "gaussian" or "equal" weights for the SVI total-variance objective
    svi_weights: str = "gaussian"
    # parameters held at the given values instead of calibrated
    fixed: Mapping[str, float] = field(default_factory=dict)
    polish: bool = True

    def __post_init__(self) -> None:
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive")
        if self.n_starts < 1:
            raise ValueError("n_starts must be >= 1")
        if not self.penalty_scale > 0:
            raise ValueError("penalty_scale must be positive")
        if self.svi_weights not in ("gaussian", "equal"):
            raise ValueError("svi_weights must be 'gaussian' or 'equal'")
        if self.hagan_beta is not None and not 0.0 <= self.hagan_beta <= 1.0:
            raise ValueError("hagan_beta must lie in [0, 1]")


@dataclass(frozen=True, slots=True)
class FitResult:
    model: ModelKind
    params: Any
    objective: float
    rmse: float
    converged: bool
    n_evals: int
    start_index: int
    ctx: ForwardContext

    def vol(self, strikes):
        return model_vol(self.model, self.params, self.ctx, strikes)

    def param_dict(self) -> dict[str, Any]:
        if isinstance(self.params, PolyParams):
            return {f"a{i}": c for i, c in enumerate(self.params.coeffs)}
        if isinstance(self.params, SplineModel):
            return {
                "degree": self.params.degree,
                "interior_knots": list(self.params.interior_knots),
                "boundary_knots": list(self.params.boundary_knots),
                "coeffs": list(self.params.coeffs),
            }
        return {name: getattr(self.params, name) for name in self.params.__dataclass_fields__}


def param_names(kind: ModelKind | str, free_beta: bool = False) -> tuple[str, ...]:
    kind = ModelKind(kind)
    if kind is ModelKind.HAGAN:
        return ("alpha", "beta", "rho", "nu") if free_beta else ("alpha", "rho", "nu")
    if kind is ModelKind.SKEW:
        return ("alpha", "rho", "nu", "c", "d")
    if kind is ModelKind.SVI:
        return ("a", "b", "rho", "m", "sigma")
    if kind is ModelKind.POLY:
        return ("a0", "a1", "a2", "a3", "a4")
    return ("coeffs",)


def default_bounds(
    kind: ModelKind | str, free_beta: bool = False, forward: float = 1.0
) -> dict[str, tuple[float, float]]:
    kind = ModelKind(kind)
    if kind is ModelKind.HAGAN:
        if free_beta:
            # alpha carries units of F^(1 - beta)
            return {
                "alpha": (1e-4, 5.0 * max(1.0, forward)),
                "beta": (0.0, 1.0),
                "rho": (-0.999, 0.999),
                "nu": (1e-4, 10.0),
            }
        return {"alpha": (1e-4, 5.0), "rho": (-0.999, 0.999), "nu": (1e-4, 10.0)}
    if kind is ModelKind.SKEW:
        return {
            "alpha": (1e-4, 5.0),
            "rho": (-0.999, 0.999),
            "nu": (1e-4, 10.0),
            "c": (-5.0, 5.0),
            "d": (-2.0, 2.0),
        }
    if kind is ModelKind.SVI:
        return {
            "a": (1e-8, 1.0),
            "b": (1e-8, 10.0),
            "rho": (-1.0, 1.0),
            "m": (-2.0, 2.0),
            "sigma": (1e-4, 5.0),
        }
    return {}


# ---------------------------------------------------------------------------
# model evaluation on raw parameter vectors


def _raw_vol(kind: ModelKind, x: np.ndarray, ctx: ForwardContext, strikes, beta: float | None):
    f, tau = ctx.forward, ctx.tau
    if kind is ModelKind.HAGAN:
        if beta is None:
            alpha, b, rho, nu = x
            return _hagan_full(alpha, b, rho, nu, f, strikes, tau)
        alpha, rho, nu = x
        if beta == 1.0:
            return _hagan_beta1(alpha, rho, nu, f, strikes, tau)
        return _hagan_full(alpha, beta, rho, nu, f, strikes, tau)
    if kind is ModelKind.SKEW:
        return _skew_kernel(*x, f, strikes, tau)
    if kind is ModelKind.SVI:
        w = _svi_w(*x, np.log(np.asarray(strikes, dtype=float) / f))
        with np.errstate(invalid="ignore"):
            return np.sqrt(w / tau)
    if kind is ModelKind.POLY:
        return poly_vol(PolyParams(tuple(x)), np.log(np.asarray(strikes, dtype=float) / f))
    raise ValueError(f"no raw evaluator for {kind}")


def model_vol(kind: ModelKind | str, params, ctx: ForwardContext, strikes):
    """Implied vol of a fitted parameter object at ``strikes``."""
    kind = ModelKind(kind)
    if kind is ModelKind.SPLINE:
        return eval_spline(params, strikes)
    if kind is ModelKind.HAGAN:
        x = np.array([params.alpha, params.rho, params.nu])
        return _raw_vol(kind, x, ctx, strikes, params.beta)
    return _raw_vol(kind, _to_vector(kind, params), ctx, strikes, None)


def _to_vector(kind: ModelKind, params) -> np.ndarray:
    if isinstance(params, PolyParams):
        return np.array(params.coeffs, dtype=float)
    if hasattr(params, "__dataclass_fields__"):
        names = param_names(kind, free_beta=isinstance(params, SabrParams))
        return np.array([getattr(params, n) for n in names], dtype=float)
    return np.asarray(params, dtype=float)


def _from_vector(kind: ModelKind, x: np.ndarray, beta: float | None):
    x = [float(v) for v in x]
    if kind is ModelKind.HAGAN:
        if beta is None:
            return SabrParams(*x)
        alpha, rho, nu = x
        return SabrParams(alpha, beta, rho, nu)
    if kind is ModelKind.SKEW:
        return SkewSabrParams(*x)
    if kind is ModelKind.SVI:
        return SviParams(*x)
    return PolyParams(tuple(x))


# ---------------------------------------------------------------------------
# objective


class _Problem:
    """Residual vector for one (model, smile, config) with pinned parameters removed."""

    def __init__(self, kind: ModelKind, smile: Smile, config: FitConfig):
        self.kind = kind
        self.smile = smile
        self.config = config
        self.beta = config.hagan_beta if kind is ModelKind.HAGAN else None
        self.names = param_names(kind, free_beta=kind is ModelKind.HAGAN and self.beta is None)
        unknown = set(config.fixed) - set(self.names)
        if unknown:
            raise ValueError(f"cannot fix {sorted(unknown)} for model {kind.value}")
        bounds = default_bounds(kind, free_beta=self.beta is None and kind is ModelKind.HAGAN,
                                forward=smile.ctx.forward)
        bounds.update(config.bounds or {})
        self.bounds = bounds
        self.free = [n for n in self.names if n not in config.fixed]
        self.lower = np.array([bounds[n][0] for n in self.free])
        self.upper = np.array([bounds[n][1] for n in self.free])
        if kind is ModelKind.SVI:
            w = smile.weights if config.svi_weights == "gaussian" else np.ones(len(smile))
            self.target = smile.ivs**2 * smile.ctx.tau
        else:
            w = smile.weights
            self.target = smile.ivs
        self.sqrt_w = np.sqrt(w)
        self.sqrt_pen = math.sqrt(config.penalty_scale)
        self.n_evals = 0

    def full(self, free_x: np.ndarray) -> np.ndarray:
        values = dict(self.config.fixed)
        values.update(zip(self.free, free_x))
        return np.array([values[n] for n in self.names], dtype=float)

    def model_values(self, full_x: np.ndarray) -> np.ndarray:
        """Model quantity compared against ``target`` (total variance for SVI)."""
        s = self.smile
        if self.kind is ModelKind.SVI:
            return _svi_w(*full_x, s.log_moneyness)
        with np.errstate(all="ignore"):
            return np.asarray(_raw_vol(self.kind, full_x, s.ctx, s.strikes, self.beta), dtype=float)

    def residuals(self, free_x: np.ndarray) -> np.ndarray:
        self.n_evals += 1
        return self.residuals_full(self.full(free_x))

    def residuals_full(self, full_x: np.ndarray) -> np.ndarray:
        try:
            vals = self.model_values(full_x)
        except (ValueError, FloatingPointError, ZeroDivisionError):
            vals = np.full(len(self.smile), np.nan)
        fit = self.sqrt_w * (vals - self.target)
        pen = self.sqrt_pen * np.maximum(-vals, 0.0)
        if self.kind is ModelKind.SKEW:
            level = full_x[0] + full_x[4]
            if not level > 0.0:
                return np.full(len(fit) + len(pen) + 1, _BAD_RESIDUAL)
            pen = np.append(pen, self.sqrt_pen * max(LEVEL_FLOOR - level, 0.0))
        r = np.concatenate([fit, pen])
        return np.where(np.isfinite(r), r, _BAD_RESIDUAL)

    def sse(self, free_x: np.ndarray) -> float:
        r = self.residuals(free_x)
        return float(r @ r)

    def clip(self, x: np.ndarray) -> np.ndarray:
        return np.minimum(np.maximum(x, self.lower), self.upper)


def objective(kind: ModelKind | str, params, smile: Smile, config: FitConfig | None = None) -> float:
    """Weighted squared error of ``params`` against ``smile`` plus constraint penalties.

    For SVI the error is measured in total variance, for every other model in
    implied vol. The spline uses equal weights.
    """
    kind = ModelKind(kind)
    config = config or FitConfig()
    if kind is ModelKind.SPLINE:
        resid = eval_spline(params, smile.strikes) - smile.ivs
        return float(resid @ resid)
    if kind is ModelKind.HAGAN and isinstance(params, SabrParams):
        config = replace(config, hagan_beta=params.beta, fixed={})
        x = np.array([params.alpha, params.rho, params.nu])
    else:
        config = replace(config, fixed={})
        x = _to_vector(kind, params)
    if kind is ModelKind.POLY:
        resid = np.sqrt(smile.weights) * (poly_vol(PolyParams(tuple(x)), smile.log_moneyness) - smile.ivs)
        return float(resid @ resid)
    prob = _Problem(kind, smile, config)
    r = prob.residuals_full(x)
    return float(r @ r)


# ---------------------------------------------------------------------------
# starting points


def _smile_features(smile: Smile) -> tuple[float, float, float]:
    """ATM vol, slope and curvature in log-moneyness from a weighted quadratic fit."""
    k = smile.log_moneyness
    atm = float(smile.ivs[np.argmin(np.abs(k))])
    sw = np.sqrt(smile.weights)
    design = np.c_[np.ones_like(k), k, k * k] * sw[:, None]
    coef, *_ = np.linalg.lstsq(design, smile.ivs * sw, rcond=None)
    return atm, float(coef[1]), float(coef[2])


def _seed_point(prob: _Problem) -> dict[str, float]:
    atm, slope, _ = _smile_features(prob.smile)
    tau = prob.smile.ctx.tau
    rho = float(np.clip(2.0 * slope, -0.9, 0.9))
    if prob.kind is ModelKind.HAGAN:
        seed = {"alpha": atm, "rho": rho, "nu": 1.0}
        if prob.beta is None:
            seed["beta"] = 1.0
        return seed
    if prob.kind is ModelKind.SKEW:
        return {"alpha": atm, "rho": rho, "nu": 1.0, "c": 0.0, "d": 0.0}
    # SVI: minimum total variance near the money
    b, sigma = 0.1, 0.1
    return {"a": max(atm * atm * tau - b * sigma, 1e-6), "b": b, "rho": float(np.sign(slope)) * 0.3,
            "m": 0.0, "sigma": sigma}


def _start_box(prob: _Problem) -> dict[str, tuple[float, float]]:
    atm, _, _ = _smile_features(prob.smile)
    tau = prob.smile.ctx.tau
    if prob.kind is ModelKind.HAGAN:
        box = {"alpha": (0.3 * atm, 2.0 * atm), "rho": (-0.9, 0.9), "nu": (0.05, 5.0)}
        if prob.beta is None:
            box["beta"] = (0.0, 1.0)
        return box
    if prob.kind is ModelKind.SKEW:
        return {"alpha": (0.2 * atm, 3.0 * atm), "rho": (-0.9, 0.9), "nu": (0.05, 5.0),
                "c": (-1.0, 1.0), "d": (-0.2 * atm, 0.2 * atm)}
    return {"a": (1e-4, atm * atm * tau), "b": (0.01, 1.0), "rho": (-0.9, 0.9), "m": (-0.3, 0.3),
            "sigma": (0.01, 0.5)}


def _starts(prob: _Problem, n: int, seed: int) -> list[np.ndarray]:
    """Heuristic seed first, then a scrambled Halton sequence over a start box.

    The Halton sequence is prefix-stable, so the start set for ``n`` is a subset
    of the set for ``n + 1``.
    """
    seeded = _seed_point(prob)
    forward = prob.smile.ctx.forward
    if prob.kind is ModelKind.HAGAN and prob.beta is None:
        seeded["alpha"] *= forward ** (1.0 - seeded["beta"])
    starts = [prob.clip(np.array([seeded[k] for k in prob.free]))]
    if n > 1 and prob.free:
        box = _start_box(prob)
        lo = np.array([box[k][0] for k in prob.free])
        hi = np.array([box[k][1] for k in prob.free])
        pts = qmc.Halton(d=len(prob.free), scramble=True, seed=seed).random(n - 1)
        for u in pts:
            x = lo + u * (hi - lo)
            named = dict(zip(prob.free, x))
            if prob.kind is ModelKind.SKEW and "d" in named and "alpha" in named:
                # keep alpha + d near the ATM level
                named["d"] = seeded["alpha"] - named["alpha"] + named["d"]
            if prob.kind is ModelKind.HAGAN and prob.beta is None and "alpha" in named:
                named["alpha"] *= forward ** (1.0 - named.get("beta", 1.0))
            starts.append(prob.clip(np.array([named[k] for k in prob.free])))
    return starts


# ---------------------------------------------------------------------------
# fitting


def _local_fit(prob: _Problem, x0: np.ndarray) -> tuple[np.ndarray, float, bool]:
    cfg = prob.config
    bounds = list(zip(prob.lower, prob.upper))
    res = minimize(
        prob.sse,
        x0,
        method="Nelder-Mead",
        bounds=bounds,
        options={
            "maxiter": cfg.max_iterations,
            "maxfev": 4 * cfg.max_iterations,
            "fatol": cfg.tolerance,
            "xatol": 1e-10,
            "adaptive": len(x0) > 3,
        },
    )
    x = prob.clip(np.asarray(res.x, dtype=float))
    val = prob.sse(x)
    converged = bool(res.success)
    if cfg.polish:
        try:
            pol = least_squares(
                prob.residuals,
                x,
                bounds=(prob.lower, prob.upper),
                method="trf",
                x_scale="jac",
                ftol=1e-15,
                xtol=1e-15,
                gtol=1e-15,
                max_nfev=400 * (len(x) + 1),
            )
        except ValueError:
            pol = None
        if pol is not None:
            px = prob.clip(pol.x)
            pval = prob.sse(px)
            if pval <= val:
                x, val = px, pval
                converged = converged or pol.status > 0
    return x, val, converged


def _fit_nonlinear(kind: ModelKind, smile: Smile, config: FitConfig) -> FitResult:
    prob = _Problem(kind, smile, config)
    if not prob.free:
        full = prob.full(np.array([]))
        r = prob.residuals_full(full)
        return _finish(kind, prob, full, float(r @ r), True, 1, 0)

    best: tuple[float, int, np.ndarray, bool] | None = None
    for idx, x0 in enumerate(_starts(prob, config.n_starts, config.seed)):
        x, val, converged = _local_fit(prob, x0)
        if not math.isfinite(val):
            continue
        # strict < keeps the lowest start index on ties
        if best is None or val < best[0]:
            best = (val, idx, x, converged)
    if best is None:
        raise FitError(f"{kind.value}: no start produced a finite objective ({prob.n_evals} evaluations)")
    val, idx, x, converged = best
    return _finish(kind, prob, prob.full(x), val, converged, prob.n_evals, idx)


def _finish(kind, prob: _Problem, full_x, val, converged, n_evals, idx) -> FitResult:
    smile = prob.smile
    try:
        params = _from_vector(kind, full_x, prob.beta)
    except ValueError as exc:
        raise FitError(f"{kind.value}: fitted parameters are invalid: {exc}") from exc
    vols = _raw_vol(kind, full_x, smile.ctx, smile.strikes, prob.beta)
    return FitResult(
        model=kind,
        params=params,
        objective=val,
        rmse=_rmse(vols, smile.ivs),
        converged=converged,
        n_evals=n_evals,
        start_index=idx,
        ctx=smile.ctx,
    )


def _rmse(model_ivs, market_ivs) -> float:
    diff = np.asarray(model_ivs, dtype=float) - np.asarray(market_ivs, dtype=float)
    if not np.all(np.isfinite(diff)):
        return math.inf
    return float(math.sqrt(np.mean(diff * diff)))


def _fit_poly(smile: Smile, config: FitConfig) -> FitResult:
    k = smile.log_moneyness
    sw = np.sqrt(smile.weights)
    design = np.vander(k, 5, increasing=True)
    fixed = {int(n[1:]): v for n, v in config.fixed.items()}
    if set(config.fixed) - set(param_names(ModelKind.POLY)):
        raise ValueError("poly parameters are a0..a4")
    free = [i for i in range(5) if i not in fixed]
    rhs = smile.ivs - sum(design[:, i] * v for i, v in fixed.items())
    coef = np.zeros(5)
    for i, v in fixed.items():
        coef[i] = v
    if free:
        sol, _, rank, _ = np.linalg.lstsq(design[:, free] * sw[:, None], rhs * sw, rcond=None)
        if rank < len(free):
            raise FitError("polynomial design matrix is rank deficient")
        coef[free] = sol
    params = PolyParams(tuple(float(c) for c in coef))
    vols = poly_vol(params, k)
    resid = sw * (vols - smile.ivs)
    return FitResult(ModelKind.POLY, params, float(resid @ resid), _rmse(vols, smile.ivs), True, 1, 0,
                     smile.ctx)


def _fit_spline(smile: Smile) -> FitResult:
    model = fit_spline(smile.strikes, smile.ivs, smile.ctx.forward)
    vols = eval_spline(model, smile.strikes)
    resid = vols - smile.ivs
    return FitResult(ModelKind.SPLINE, model, float(resid @ resid), _rmse(vols, smile.ivs), True, 1, 0,
                     smile.ctx)


def fit(kind: ModelKind | str, smile: Smile, config: FitConfig | None = None) -> FitResult:
    """Calibrate ``kind`` to ``smile``; the best of ``config.n_starts`` local fits is returned."""
    kind = ModelKind(kind)
    config = config or FitConfig()
    if kind is ModelKind.POLY:
        return _fit_poly(smile, config)
    if kind is ModelKind.SPLINE:
        return _fit_spline(smile)
    return _fit_nonlinear(kind, smile, config)

