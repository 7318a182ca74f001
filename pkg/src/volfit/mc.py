"""Monte Carlo simulation of the SABR-family forward dynamics.

Stream layout: paths are generated in blocks of ``BLOCK_PAIRS`` antithetic
pairs. Block ``b`` draws its normals from a Philox generator keyed by
``SeedSequence(seed).spawn(n_blocks)[b]``, one (2, BLOCK_PAIRS) draw per time
step in step order. Path ``i`` therefore depends only on ``seed`` and ``i``,
never on how many worker threads ran the blocks.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Union

import numpy as np

from volfit.black import ForwardContext, NoSolutionError, OptionKind, black_vega, implied_vol
from volfit.hagan import SabrParams
from volfit.skew import SkewSdeParams

BLOCK_PAIRS = 1 << 13


@dataclass(frozen=True, slots=True)
class HaganGeneralBeta:
    """dF = a F^beta dW1, da = nu a dW2."""

    params: SabrParams


@dataclass(frozen=True, slots=True)
class HaganLognormal:
    """dF = a F dW1, da = nu a dW2."""

    params: SabrParams

    def __post_init__(self) -> None:
        if self.params.beta != 1.0:
            raise ValueError("HaganLognormal requires beta = 1")


@dataclass(frozen=True, slots=True)
class SkewVariance:
    """dF = gamma Y F dW1 with Y = sqrt(theta) exp(nu^2 t / 8), d theta = nu theta dW2."""

    params: SkewSdeParams


DynamicsKind = Union[HaganGeneralBeta, HaganLognormal, SkewVariance]


@dataclass(frozen=True, slots=True)
class McConfig:
    n_paths: int = 1 << 18
    n_steps: int = 128
    seed: int = 0
    scheme: str = "log-euler"
    antithetic: bool = True
    threads: int = 1

    def __post_init__(self) -> None:
        if self.n_paths < 2 or self.n_paths % 2:
            raise ValueError("n_paths must be even and >= 2")
        if self.n_steps < 1:
            raise ValueError("n_steps must be >= 1")
        if self.scheme != "log-euler":
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if self.threads < 1:
            raise ValueError("threads must be >= 1")


@dataclass(frozen=True, slots=True)
class McEstimate:
    value: float
    std_error: float
    n_effective: int


def _block_sizes(n_pairs: int) -> list[int]:
    full, rest = divmod(n_pairs, BLOCK_PAIRS)
    return [BLOCK_PAIRS] * full + ([rest] if rest else [])


def _simulate_block(dyn: DynamicsKind, ctx: ForwardContext, cfg: McConfig, seq, n_pairs: int) -> np.ndarray:
    """Terminal forwards for one block of ``2 * n_pairs`` paths.

    With antithetics the first half is driven by z and the second by -z;
    otherwise every path gets its own draw.
    """
    rng = np.random.Generator(np.random.Philox(seq))
    dt = ctx.tau / cfg.n_steps
    sqrt_dt = math.sqrt(dt)
    n = 2 * n_pairs

    if isinstance(dyn, SkewVariance):
        p = dyn.params
        rho, gamma = p.rho, p.gamma
        vol_of_factor = p.nu
        level = p.alpha * p.alpha  # theta(0)
    else:
        p = dyn.params
        rho, gamma = p.rho, 1.0
        vol_of_factor = p.nu
        level = p.alpha
    beta = dyn.params.beta if isinstance(dyn, HaganGeneralBeta) else 1.0
    rho_bar = math.sqrt(1.0 - rho * rho)

    log_factor = np.full(n, math.log(level))
    log_f = np.full(n, math.log(ctx.forward))
    fwd = np.full(n, ctx.forward)
    alive = np.ones(n, dtype=bool)
    t = 0.0
    for _ in range(cfg.n_steps):
        if cfg.antithetic:
            z = rng.standard_normal((2, n_pairs))
            z = np.concatenate([z, -z], axis=1)
        else:
            z = rng.standard_normal((2, n))
        dw1 = z[0] * sqrt_dt
        dw2 = (rho * z[0] + rho_bar * z[1]) * sqrt_dt
        if isinstance(dyn, SkewVariance):
            # Y = sqrt(theta) exp(nu^2 t / 8), effective vol gamma * Y
            vol = gamma * np.exp(0.5 * log_factor + 0.125 * vol_of_factor**2 * t)
        else:
            vol = np.exp(log_factor)
        if beta == 1.0:
            log_f += vol * dw1 - 0.5 * vol * vol * dt
        else:
            step = fwd + vol * np.power(np.maximum(fwd, 0.0), beta) * dw1
            fwd = np.where(alive & (step > 0), step, 0.0)
            alive &= fwd > 0
        # exact lognormal step for the volatility (or variance) factor
        log_factor += vol_of_factor * dw2 - 0.5 * vol_of_factor**2 * dt
        t += dt
    return np.exp(log_f) if beta == 1.0 else fwd


def simulate_terminal(dyn: DynamicsKind, ctx: ForwardContext, cfg: McConfig) -> np.ndarray:
    """Terminal forward sample of length ``cfg.n_paths``.

    With antithetics the layout is block-wise ``[z-paths, -z-paths]``; use
    :func:`pair_means` to average payoffs over antithetic pairs.
    """
    n_pairs = cfg.n_paths // 2
    sizes = _block_sizes(n_pairs)
    seqs = np.random.SeedSequence(cfg.seed).spawn(len(sizes))

    def run(seq, size):
        return _simulate_block(dyn, ctx, cfg, seq, size)

    if cfg.threads > 1 and len(sizes) > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            blocks = list(pool.map(run, seqs, sizes))
    else:
        blocks = [run(s, n) for s, n in zip(seqs, sizes)]
    return np.concatenate(blocks)


def pair_means(values: np.ndarray, cfg: McConfig) -> np.ndarray:
    """Average each path with its antithetic mirror (identity without antithetics)."""
    if not cfg.antithetic:
        return values
    out = []
    start = 0
    for size in _block_sizes(cfg.n_paths // 2):
        block = values[start : start + 2 * size]
        out.append(0.5 * (block[:size] + block[size:]))
        start += 2 * size
    return np.concatenate(out)


def _estimate(samples: np.ndarray) -> McEstimate:
    n = len(samples)
    return McEstimate(float(samples.mean()), float(samples.std(ddof=1) / math.sqrt(n)), n)


def mean_forward(dyn: DynamicsKind, ctx: ForwardContext, cfg: McConfig, terminal=None) -> McEstimate:
    terminal = simulate_terminal(dyn, ctx, cfg) if terminal is None else terminal
    return _estimate(pair_means(terminal, cfg))


def mc_option_price(
    dyn: DynamicsKind,
    ctx: ForwardContext,
    strike: float,
    kind: OptionKind,
    cfg: McConfig,
    terminal: np.ndarray | None = None,
) -> McEstimate:
    """Undiscounted expected payoff. Pass ``terminal`` to reuse one simulation across strikes."""
    terminal = simulate_terminal(dyn, ctx, cfg) if terminal is None else terminal
    payoff = np.maximum(kind.sign * (terminal - strike), 0.0)
    return _estimate(pair_means(payoff, cfg))


def mc_implied_vol(
    dyn: DynamicsKind,
    ctx: ForwardContext,
    strike: float,
    kind: OptionKind,
    cfg: McConfig,
    terminal: np.ndarray | None = None,
) -> McEstimate:
    """Black implied vol of the MC price; the error is the price error over Black vega."""
    price = mc_option_price(dyn, ctx, strike, kind, cfg, terminal)
    try:
        vol = implied_vol(ctx, strike, price.value, kind)
        vega = black_vega(ctx, strike, vol)
        if not vega > 0.0:
            raise NoSolutionError("price carries no time value")
    except NoSolutionError as exc:
        raise NoSolutionError(
            f"MC price {price.value:.6g} +/- {price.std_error:.2g} at K={strike} has no implied vol: {exc}"
        ) from exc
    return McEstimate(vol, price.std_error / vega, price.n_effective)
