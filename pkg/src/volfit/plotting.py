"""Optional matplotlib figures for the CLI outputs.

Uses the object-oriented ``Figure`` API so no GUI backend or global pyplot
state is involved; every function writes one file and returns its path.
"""

from __future__ import annotations

from collections import defaultdict
from pathlib import Path
from typing import Sequence

import numpy as np
from matplotlib.figure import Figure


def _figure(width=6.0, height=4.0) -> Figure:
    return Figure(figsize=(width, height), layout="constrained")


def _apply(ax) -> None:
    ax.grid(True, alpha=0.3)
    for side in ("top", "right"):
        ax.spines[side].set_visible(False)


def _save(fig: Figure, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=150)
    return path


def sweep_figure(rows: Sequence[tuple[float, float, float]], param: str, path) -> Path:
    """One curve per swept value from (param_value, strike, iv) rows."""
    curves = defaultdict(list)
    for value, strike, iv in rows:
        curves[value].append((strike, iv))
    fig = _figure()
    ax = fig.add_subplot()
    for value in sorted(curves):
        k, v = np.array(sorted(curves[value])).T
        ax.plot(k, v, label=f"{param} = {value:g}")
    ax.set_xlabel("strike")
    ax.set_ylabel("implied volatility")
    ax.legend(frameon=False, fontsize="small")
    _apply(ax)
    return _save(fig, path)


def fit_figure(strikes, market_ivs, model_strikes, model_ivs, model: str, path) -> Path:
    fig = _figure()
    ax = fig.add_subplot()
    ax.plot(strikes, market_ivs, "o", ms=4, label="market")
    ax.plot(model_strikes, model_ivs, "-", label=model)
    ax.set_xlabel("strike")
    ax.set_ylabel("implied volatility")
    ax.legend(frameon=False)
    _apply(ax)
    return _save(fig, path)


def mc_figure(strikes, mc_ivs, std_errors, closed_form_ivs, path) -> Path:
    fig = _figure()
    ax = fig.add_subplot()
    ax.errorbar(strikes, mc_ivs, yerr=3 * np.asarray(std_errors), fmt="o", ms=3, capsize=2,
                label="Monte Carlo (3 s.e.)")
    ax.plot(strikes, closed_form_ivs, "-", label="closed form")
    ax.set_xlabel("strike")
    ax.set_ylabel("implied volatility")
    ax.legend(frameon=False)
    _apply(ax)
    return _save(fig, path)


def benchmark_figure(rows, path) -> Path:
    """Grouped bars of mean RMSE per model, one cluster per group."""
    groups = list(dict.fromkeys(r.group for r in rows))
    models = list(dict.fromkeys(r.model for r in rows))
    table = {(r.group, r.model): r.mean_rmse for r in rows}
    fig = _figure(max(6.0, 1.2 * len(groups) + 3), 4.0)
    ax = fig.add_subplot()
    width = 0.8 / max(len(models), 1)
    x = np.arange(len(groups))
    for j, m in enumerate(models):
        heights = [table.get((g, m), np.nan) for g in groups]
        ax.bar(x + (j - (len(models) - 1) / 2) * width, heights, width, label=m)
    ax.set_xticks(x, groups)
    ax.set_ylabel("mean RMSE")
    ax.set_yscale("log")
    ax.legend(frameon=False, fontsize="small", ncols=min(len(models), 5))
    _apply(ax)
    return _save(fig, path)
