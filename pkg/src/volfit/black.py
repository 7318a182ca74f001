"""Undiscounted Black-76 pricing on forwards and implied-volatility inversion."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

VOL_LOWER = 1e-6
VOL_UPPER = 10.0
PRICE_TOL = 1e-12
MAX_ITERATIONS = 200

_SQRT_2PI = math.sqrt(2.0 * math.pi)


class NoSolutionError(ValueError):
    """Price lies outside the no-arbitrage band, so no volatility reproduces it."""


class ConvergenceError(RuntimeError):
    pass


class OptionKind(enum.Enum):
    CALL = "C"
    PUT = "P"

    @classmethod
    def parse(cls, text: str) -> OptionKind:
        key = text.strip().upper()
        if key in ("C", "CALL"):
            return cls.CALL
        if key in ("P", "PUT"):
            return cls.PUT
        raise ValueError(f"unknown option kind {text!r}")

    @property
    def sign(self) -> float:
        return 1.0 if self is OptionKind.CALL else -1.0


@dataclass(frozen=True, slots=True)
class ForwardContext:
    forward: float
    tau: float

    def __post_init__(self) -> None:
        if not (self.forward > 0 and math.isfinite(self.forward)):
            raise ValueError(f"forward must be positive, got {self.forward}")
        if not (self.tau > 0 and math.isfinite(self.tau)):
            raise ValueError(f"tau must be positive, got {self.tau}")


def intrinsic(forward: float, strike, kind: OptionKind):
    return np.maximum(kind.sign * (forward - np.asarray(strike, dtype=float)), 0.0)


def black_price(ctx: ForwardContext, strike, vol, kind: OptionKind):
    """Black-76 value with unit discount factor.

    ``strike`` and ``vol`` broadcast; scalars in give a float out.
    """
    k = np.asarray(strike, dtype=float)
    v = np.asarray(vol, dtype=float)
    if np.any(k <= 0):
        raise ValueError("strike must be positive")
    if np.any(v < 0):
        raise ValueError("vol must be nonnegative")
    f = ctx.forward
    s = v * math.sqrt(ctx.tau)
    # s -> 0 sends d1 to +-inf, which ndtr maps to the intrinsic value
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        d1 = np.log(f / k) / s + 0.5 * s
        d2 = d1 - s
    # value the OTM side and add intrinsic via parity; the ITM formula cancels badly
    eta = np.where(k >= f, 1.0, -1.0)
    otm = np.maximum(eta * (f * ndtr(eta * d1) - k * ndtr(eta * d2)), 0.0)
    itm = intrinsic(f, k, kind)
    price = np.where(s > 0, itm + otm, itm)
    return float(price) if price.ndim == 0 else price


def black_vega(ctx: ForwardContext, strike, vol):
    """dPrice/dvol, identical for calls and puts."""
    k = np.asarray(strike, dtype=float)
    v = np.asarray(vol, dtype=float)
    sqrt_t = math.sqrt(ctx.tau)
    s = v * sqrt_t
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        d1 = np.log(ctx.forward / k) / s + 0.5 * s
        out = np.where(s > 0, ctx.forward * np.exp(-0.5 * d1 * d1) / _SQRT_2PI * sqrt_t, 0.0)
    return float(out) if out.ndim == 0 else out


def implied_vol(ctx: ForwardContext, strike: float, price: float, kind: OptionKind) -> float:
    """Invert :func:`black_price` for a single quote.

    The quote is first mapped to the out-of-the-money side through put-call
    parity, which keeps the target away from the intrinsic floor where
    precision is lost. Newton steps are taken inside a shrinking bracket on
    ``[VOL_LOWER, VOL_UPPER]`` and replaced by bisection whenever they leave it.
    """
    f = ctx.forward
    if strike <= 0:
        raise ValueError("strike must be positive")
    if not math.isfinite(price):
        raise NoSolutionError(f"non-finite price {price}")
    lower = float(intrinsic(f, strike, kind))
    upper = f if kind is OptionKind.CALL else strike
    if price < lower or price >= upper:
        raise NoSolutionError(
            f"price {price!r} outside arbitrage bounds [{lower!r}, {upper!r}) "
            f"for {kind.name} K={strike} f={f}"
        )

    # work on the OTM option: same vol, no intrinsic component
    otm = OptionKind.PUT if strike < f else OptionKind.CALL
    target = price if otm is kind else price - kind.sign * (f - strike)
    target = max(target, 0.0)

    lo, hi = VOL_LOWER, VOL_UPPER
    p_lo = black_price(ctx, strike, lo, otm)
    p_hi = black_price(ctx, strike, hi, otm)
    if target <= p_lo:
        if p_lo - target <= PRICE_TOL:
            return lo
        raise NoSolutionError(f"price {price!r} implies vol below {lo}")
    if target >= p_hi:
        if target - p_hi <= PRICE_TOL:
            return hi
        raise NoSolutionError(f"price {price!r} implies vol above {hi}")

    # ATM-style starting guess, clipped into the bracket
    vol = math.sqrt(2.0 * math.pi / ctx.tau) * target / math.sqrt(f * strike)
    vol = min(max(vol, 0.05), 2.0)
    for _ in range(MAX_ITERATIONS):
        diff = black_price(ctx, strike, vol, otm) - target
        if diff > 0:
            hi = vol
        else:
            lo = vol
        vega = black_vega(ctx, strike, vol)
        step = diff / vega if vega > 0 else math.inf
        candidate = vol - step
        if not (lo < candidate < hi):
            candidate = 0.5 * (lo + hi)
        if abs(candidate - vol) <= 1e-15 * (1.0 + vol) or hi - lo <= 1e-15 * (1.0 + vol):
            vol = candidate
            break
        vol = candidate
    else:
        raise ConvergenceError(f"implied vol did not converge (K={strike}, price={price})")

    residual = abs(black_price(ctx, strike, vol, otm) - target)
    if residual > max(PRICE_TOL, 1e-14 * f):
        raise ConvergenceError(f"implied vol residual {residual:.3e} above tolerance")
    return vol
