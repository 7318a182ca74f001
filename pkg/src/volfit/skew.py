"""skew-SABR: Hagan lognormal SABR plus an explicit log-moneyness skew and level term.

The underlying dynamics put a lognormal factor on the variance,

    dF = Y C(F) dW1,  dY = (nu/2) Y dW2,  C(F) = (alpha + m)/alpha * F,

whose Hagan solution is exactly the beta = 1 formula at (alpha + m, rho, nu/2).
Expanding that around (alpha, rho, nu) gives the closed-form skew and level
coefficients returned by :func:`theoretical_c_star` and :func:`theoretical_d_star`.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from volfit.black import ForwardContext
from volfit.hagan import SabrParams, _hagan_beta1, _positive_strike, i1_beta1


class NegativeVolatilityWarning(UserWarning):
    pass


@dataclass(frozen=True, slots=True)
class SkewSabrParams:
    alpha: float
    rho: float
    nu: float
    c: float
    d: float

    def __post_init__(self) -> None:
        if not self.alpha > 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if not abs(self.rho) < 1.0:
            raise ValueError(f"|rho| must be < 1, got {self.rho}")
        if not self.nu > 0:
            raise ValueError(f"nu must be positive, got {self.nu}")
        if not (math.isfinite(self.c) and math.isfinite(self.d)):
            raise ValueError("c and d must be finite")
        if not self.alpha + self.d > 0:
            raise ValueError(f"alpha + d must be positive, got {self.alpha + self.d}")

    def hagan(self) -> SabrParams:
        return SabrParams(self.alpha, 1.0, self.rho, self.nu)


@dataclass(frozen=True, slots=True)
class SkewSdeParams:
    alpha: float
    rho: float
    nu: float
    m: float

    def __post_init__(self) -> None:
        if not self.alpha > 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if not abs(self.rho) < 1.0:
            raise ValueError(f"|rho| must be < 1, got {self.rho}")
        if not self.nu > 0:
            raise ValueError(f"nu must be positive, got {self.nu}")
        if not self.alpha + self.m > 0:
            raise ValueError(f"alpha + m must be positive, got {self.alpha + self.m}")

    @property
    def gamma(self) -> float:
        return (self.alpha + self.m) / self.alpha

    @property
    def u(self) -> float:
        return 0.5 * self.nu

    @property
    def w(self) -> float:
        return -0.5 * self.nu


def _skew_kernel(alpha, rho, nu, c, d, forward, strike, tau):
    strike = np.asarray(strike, dtype=float)
    base = _hagan_beta1(alpha, rho, nu, forward, strike, tau) + c * np.log(strike / forward)
    return base + d


def sigma_skew(p: SkewSabrParams, ctx: ForwardContext, strike):
    """skew-SABR implied vol. Warns (does not clamp) when the result is nonpositive."""
    _positive_strike(strike)
    out = _skew_kernel(p.alpha, p.rho, p.nu, p.c, p.d, ctx.forward, strike, ctx.tau)
    if np.any(out <= 0):
        warnings.warn("skew-SABR volatility is nonpositive at some strikes", NegativeVolatilityWarning,
                      stacklevel=2)
    return float(out) if out.ndim == 0 else out


def equivalent_hagan_params(p: SkewSdeParams) -> SabrParams:
    return SabrParams(alpha=p.alpha + p.m, beta=1.0, rho=p.rho, nu=p.u)


def delta_i1(alpha: float, rho: float, nu: float, w: float) -> float:
    """I1(alpha, rho, nu + w) - I1(alpha, rho, nu) for beta = 1."""
    return 0.25 * rho * w * alpha + (2.0 - 3.0 * rho * rho) / 24.0 * (2.0 * nu * w + w * w)


def theoretical_c_star(p: SkewSdeParams, tau: float) -> float:
    if not tau >= 0:
        raise ValueError("tau must be nonnegative")
    a, r, v, m = p.alpha, p.rho, p.nu, p.m
    u, w = p.u, p.w
    lead = 0.5 * r * w
    rate = 0.5 * r * w * i1_beta1(a, r, u) + 0.125 * r * r * u * u * m + 0.5 * r * v * delta_i1(a, r, v, w)
    return lead + rate * tau


def theoretical_d_star(p: SkewSdeParams, tau: float) -> float:
    if not tau >= 0:
        raise ValueError("tau must be nonnegative")
    a, r, v, m = p.alpha, p.rho, p.nu, p.m
    u, w = p.u, p.w
    rate = m * i1_beta1(a + m, r, u) + 0.25 * a * r * u * m + a * delta_i1(a, r, v, w)
    return m + rate * tau
