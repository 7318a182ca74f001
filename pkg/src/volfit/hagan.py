"""Hagan-SABR lognormal implied-volatility asymptotics.

All kernels are vectorised over strikes. The public functions take the
parameter/context dataclasses; the underscore kernels take raw floats so the
calibrator can call them without building validated objects on every step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.integrate import quad

from volfit.black import ForwardContext

SERIES_SWITCH = 1e-6


@dataclass(frozen=True, slots=True)
class SabrParams:
    alpha: float
    beta: float
    rho: float
    nu: float

    def __post_init__(self) -> None:
        if not self.alpha > 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if not 0.0 <= self.beta <= 1.0:
            raise ValueError(f"beta must lie in [0, 1], got {self.beta}")
        if not abs(self.rho) < 1.0:
            raise ValueError(f"|rho| must be < 1, got {self.rho}")
        if not self.nu > 0:
            raise ValueError(f"nu must be positive, got {self.nu}")


@dataclass(frozen=True, slots=True)
class ExpansionTerms:
    i0: float | np.ndarray
    i1: float | np.ndarray
    zeta: float | np.ndarray


def _check_rho(rho: float) -> None:
    if not abs(rho) < 1.0:
        raise ValueError(f"|rho| must be < 1, got {rho}")


def _scalar(x: np.ndarray):
    return float(x) if np.ndim(x) == 0 else x


def chi(z, rho: float):
    """log((sqrt(1 - 2 rho z + z^2) - rho + z) / (1 - rho))."""
    _check_rho(rho)
    z = np.asarray(z, dtype=float)
    root = np.sqrt(1.0 - 2.0 * rho * z + z * z)
    shifted = z - rho
    # rationalised form where root + shifted cancels (z - rho < 0)
    with np.errstate(divide="ignore"):
        num = np.where(shifted >= 0, root + shifted, (1.0 - rho * rho) / (root - shifted))
    far = np.log(num / (1.0 - rho))
    # near zero the log argument is 1 + O(z): take log1p of the exact offset
    # z factored out so subnormal z does not cancel to zero
    near = np.log1p(z * ((1.0 + (z - 2.0 * rho) / (root + 1.0)) / (1.0 - rho)))
    return _scalar(np.where(np.abs(z) < 0.5, near, far))


def z_over_chi(z, rho: float):
    """z / chi(z) with the removable singularity at z = 0 filled by its series."""
    _check_rho(rho)
    z = np.asarray(z, dtype=float)
    small = np.abs(z) < SERIES_SWITCH
    series = 1.0 - 0.5 * rho * z + (1.0 / 6.0 - 0.25 * rho * rho) * z * z
    safe = np.where(small, 1.0, z)
    exact = safe / np.asarray(chi(safe, rho))
    return _scalar(np.where(small, series, exact))


def i1_beta1(alpha: float, rho: float, nu: float) -> float:
    """Strike-independent first-order correction rate for beta = 1."""
    return 0.25 * rho * nu * alpha + (2.0 - 3.0 * rho * rho) / 24.0 * nu * nu


def _hagan_beta1(alpha, rho, nu, forward, strike, tau):
    strike = np.asarray(strike, dtype=float)
    zeta = nu / alpha * np.log(forward / strike)
    i0 = alpha * z_over_chi(zeta, rho)
    return i0 * (1.0 + i1_beta1(alpha, rho, nu) * tau)


def _hagan_full(alpha, beta, rho, nu, forward, strike, tau):
    strike = np.asarray(strike, dtype=float)
    omb = 1.0 - beta
    log_fk = np.log(forward / strike)
    fk_pow = (forward * strike) ** (0.5 * omb)
    zeta = nu / alpha * fk_pow * log_fk
    log2 = log_fk * log_fk
    denom = 1.0 + omb * omb / 24.0 * log2 + omb**4 / 1920.0 * log2 * log2
    i1 = (
        omb * omb * alpha * alpha / (24.0 * fk_pow * fk_pow)
        + 0.25 * rho * alpha * nu * beta / fk_pow
        + (2.0 - 3.0 * rho * rho) / 24.0 * nu * nu
    )
    return alpha / fk_pow / denom * z_over_chi(zeta, rho) * (1.0 + i1 * tau)


def sigma_hagan_beta1(p: SabrParams, ctx: ForwardContext, strike):
    """Lognormal SABR implied vol with beta fixed at 1 (``p.beta`` is ignored)."""
    _positive_strike(strike)
    return _scalar(_hagan_beta1(p.alpha, p.rho, p.nu, ctx.forward, strike, ctx.tau))


def sigma_hagan_full(p: SabrParams, ctx: ForwardContext, strike):
    """Hagan's general-beta formula, including the log^4 denominator term."""
    _positive_strike(strike)
    return _scalar(_hagan_full(p.alpha, p.beta, p.rho, p.nu, ctx.forward, strike, ctx.tau))


def i0_taylor(p: SabrParams, ctx: ForwardContext, strike):
    """Quadratic expansion of I0 in log-moneyness around the forward."""
    _positive_strike(strike)
    k = np.log(np.asarray(strike, dtype=float) / ctx.forward)
    a, r, v = p.alpha, p.rho, p.nu
    return _scalar(a + 0.5 * r * v * k + (1.0 / 6.0 - 0.25 * r * r) * v * v / a * k * k)


def expansion_terms(p: SabrParams, ctx: ForwardContext, strike) -> ExpansionTerms:
    """I0, I1 and zeta for beta = 1."""
    _positive_strike(strike)
    zeta = p.nu / p.alpha * np.log(ctx.forward / np.asarray(strike, dtype=float))
    return ExpansionTerms(
        i0=_scalar(p.alpha * z_over_chi(zeta, p.rho)),
        i1=i1_beta1(p.alpha, p.rho, p.nu),
        zeta=_scalar(zeta),
    )


def general_expansion(
    alpha: float,
    rho: float,
    nu: float,
    ctx: ForwardContext,
    strike: float,
    c: Callable[[float], float],
    dc: Callable[[float], float],
    d2c: Callable[[float], float],
    integral: Callable[[float, float], float] | None = None,
) -> ExpansionTerms:
    """I0, I1, zeta for an arbitrary local-vol function ``C`` (single strike).

    ``integral(K, f)`` should return the integral of dx / C(x) from K to f; it
    defaults to adaptive quadrature. The strike must differ from the forward
    unless ``integral`` handles that limit.
    """
    _check_rho(rho)
    f = ctx.forward
    if integral is None:
        val, _ = quad(lambda x: 1.0 / c(x), strike, f, epsabs=0.0, epsrel=1e-13, limit=200)
    else:
        val = integral(strike, f)
    f_ave = math.sqrt(f * strike)
    g1 = dc(f_ave) / c(f_ave)
    g2 = d2c(f_ave) / c(f_ave)
    zeta = nu / alpha * val
    i0 = alpha * math.log(f / strike) / val * z_over_chi(zeta, rho)
    i1 = (
        (2.0 * g2 - g1 * g1 + 1.0 / (f_ave * f_ave)) / 24.0 * alpha**2 * c(f_ave) ** 2
        + 0.25 * rho * nu * alpha * g1 * c(f_ave)
        + (2.0 - 3.0 * rho * rho) / 24.0 * nu * nu
    )
    return ExpansionTerms(i0=float(i0), i1=float(i1), zeta=float(zeta))


def cev_local_vol(beta: float):
    """C(x) = x**beta together with its first two derivatives."""
    return (
        lambda x: x**beta,
        lambda x: beta * x ** (beta - 1.0),
        lambda x: beta * (beta - 1.0) * x ** (beta - 2.0),
    )


def _positive_strike(strike) -> None:
    if np.any(np.asarray(strike, dtype=float) <= 0):
        raise ValueError("strike must be positive")
