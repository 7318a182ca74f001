"""Comparison smile models: SVI total variance, quartic polynomial, LSQ cubic B-spline."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import BSpline, make_lsq_spline

SPLINE_DEGREE = 3


class FitError(RuntimeError):
    """A calibration could not produce a usable model."""


@dataclass(frozen=True, slots=True)
class SviParams:
    a: float
    b: float
    rho: float
    m: float
    sigma: float

    def __post_init__(self) -> None:
        if not self.a > 0:
            raise ValueError(f"a must be positive, got {self.a}")
        if not self.b > 0:
            raise ValueError(f"b must be positive, got {self.b}")
        if not abs(self.rho) <= 1.0:
            raise ValueError(f"|rho| must be <= 1, got {self.rho}")
        if not self.sigma > 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")


@dataclass(frozen=True, slots=True)
class PolyParams:
    coeffs: tuple[float, float, float, float, float]

    def __post_init__(self) -> None:
        if len(self.coeffs) != 5:
            raise ValueError(f"expected 5 coefficients, got {len(self.coeffs)}")
        if not all(math.isfinite(c) for c in self.coeffs):
            raise ValueError("coefficients must be finite")


@dataclass(frozen=True, slots=True)
class SplineModel:
    degree: int
    interior_knots: tuple[float, ...]
    boundary_knots: tuple[float, float]
    coeffs: tuple[float, ...]

    def __post_init__(self) -> None:
        lo, hi = self.boundary_knots
        knots = (lo, *self.interior_knots, hi)
        if any(b <= a for a, b in zip(knots, knots[1:])):
            raise ValueError("knots must be strictly increasing")
        if len(self.coeffs) != self.degree + len(self.interior_knots) + 1:
            raise ValueError("coefficient count must equal degree + interior knots + 1")

    @property
    def knot_vector(self) -> np.ndarray:
        lo, hi = self.boundary_knots
        p = self.degree
        return np.r_[[lo] * (p + 1), self.interior_knots, [hi] * (p + 1)].astype(float)


def _svi_w(a, b, rho, m, sigma, k):
    x = np.asarray(k, dtype=float) - m
    return a + b * (rho * x + np.sqrt(x * x + sigma * sigma))


def svi_total_variance(p: SviParams, k):
    out = _svi_w(p.a, p.b, p.rho, p.m, p.sigma, k)
    return float(out) if np.ndim(out) == 0 else out


def svi_vol(p: SviParams, k, tau: float):
    if not tau > 0:
        raise ValueError("tau must be positive")
    w = np.asarray(svi_total_variance(p, k))
    if np.any(w < 0):
        raise ValueError("negative SVI total variance")
    out = np.sqrt(w / tau)
    return float(out) if out.ndim == 0 else out


def poly_vol(p: PolyParams, k):
    k = np.asarray(k, dtype=float)
    acc = np.zeros_like(k)
    for c in reversed(p.coeffs):
        acc = acc * k + c
    return float(acc) if acc.ndim == 0 else acc


def spline_knot(strikes: np.ndarray, forward: float) -> float:
    """Strike nearest the forward, moved to the nearest interior strike if on the boundary."""
    idx = int(np.argmin(np.abs(strikes - forward)))
    if 0 < idx < len(strikes) - 1:
        return float(strikes[idx])
    interior = strikes[1:-1]
    return float(interior[np.argmin(np.abs(interior - forward))])


def fit_spline(strikes, ivs, forward: float) -> SplineModel:
    """Equal-weight least-squares cubic B-spline in strike with one interior knot."""
    x = np.asarray(strikes, dtype=float)
    y = np.asarray(ivs, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("strikes and ivs must be 1-d arrays of equal length")
    if len(np.unique(x)) < 6:
        raise FitError(f"spline fit needs at least 6 distinct strikes, got {len(np.unique(x))}")
    if np.any(np.diff(x) <= 0):
        raise ValueError("strikes must be strictly increasing")
    knot = spline_knot(x, forward)
    t = np.r_[[x[0]] * (SPLINE_DEGREE + 1), knot, [x[-1]] * (SPLINE_DEGREE + 1)]
    try:
        spl = make_lsq_spline(x, y, t, k=SPLINE_DEGREE)
    except (ValueError, np.linalg.LinAlgError) as exc:
        raise FitError(f"degenerate spline design: {exc}") from exc
    if not np.all(np.isfinite(spl.c)):
        raise FitError("spline coefficients are not finite")
    return SplineModel(
        degree=SPLINE_DEGREE,
        interior_knots=(knot,),
        boundary_knots=(float(x[0]), float(x[-1])),
        coeffs=tuple(float(c) for c in spl.c),
    )


def eval_spline(model: SplineModel, strike):
    """Evaluate inside the knot range; hold the boundary value outside it."""
    lo, hi = model.boundary_knots
    x = np.clip(np.asarray(strike, dtype=float), lo, hi)
    out = BSpline(model.knot_vector, np.asarray(model.coeffs), model.degree, extrapolate=False)(x)
    return float(out) if np.ndim(out) == 0 else out
