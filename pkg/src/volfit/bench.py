"""Benchmark harness: fit every model to every smile, score by RMSE, aggregate per group."""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import io
import json
import math
import re
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from volfit.benchmarks import FitError
from volfit.calibrate import FitConfig, ModelKind, Smile, fit
from volfit.market_io import (
    ChainParseError,
    SelectionRule,
    build_smile,
    group_snapshots,
    in_time_window,
    parse_chain_csv,
)

COLUMNS = ("group", "model", "mean_rmse", "n_smiles", "n_failures")
REPORT_SCHEMA_ID = "volfit.bench-report/1"
CORPUS_FILE = re.compile(r"^(?P<contract>.+?)__(?P<timestamp>[^_].*)\.csv$")

REPORT_JSON_SCHEMA: dict[str, Any] = {
    "type": "object",
    "required": ["schema", "metadata", "rows"],
    "properties": {
        "schema": {"const": REPORT_SCHEMA_ID},
        "metadata": {
            "type": "object",
            "required": ["config", "corpus_fingerprint", "models", "trim"],
            "properties": {
                "config": {"type": "object"},
                "corpus_fingerprint": {"type": "string", "pattern": "^[0-9a-f]{64}$"},
                "models": {"type": "array", "items": {"type": "string"}},
                "trim": {"type": "boolean"},
            },
        },
        "rows": {
            "type": "array",
            "items": {
                "type": "object",
                "required": list(COLUMNS),
                "additionalProperties": False,
                "properties": {
                    "group": {"type": "string"},
                    "model": {"type": "string"},
                    "mean_rmse": {"type": ["number", "null"], "minimum": 0},
                    "n_smiles": {"type": "integer", "minimum": 1},
                    "n_failures": {"type": "integer", "minimum": 0},
                },
            },
        },
    },
}


@dataclass(frozen=True, slots=True)
class BenchRow:
    group: str
    model: str
    mean_rmse: float  # nan when every fit in the group failed
    n_smiles: int
    n_failures: int


@dataclass(frozen=True, slots=True)
class SmileOutcome:
    group: str
    index: int
    model: str
    rmse: float | None
    error: str | None = None


@dataclass(frozen=True, slots=True)
class BenchReport:
    rows: tuple[BenchRow, ...]
    metadata: dict[str, Any]
    outcomes: tuple[SmileOutcome, ...] = ()


@dataclass(frozen=True, slots=True)
class LoadedCorpus:
    smiles: list[tuple[str, Smile]]
    skipped: list[tuple[str, str]]
    n_dropped_quotes: int


def rmse(model_ivs, market_ivs) -> float:
    """Unweighted root mean squared error."""
    a = np.asarray(model_ivs, dtype=float)
    b = np.asarray(market_ivs, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError(f"length mismatch: {a.shape} vs {b.shape}")
    if a.size == 0:
        raise ValueError("need at least one point")
    d = a - b
    return float(math.sqrt(np.mean(d * d)))


def corpus_fingerprint(corpus: Sequence[tuple[str, Smile]]) -> str:
    h = hashlib.sha256()
    for label, s in corpus:
        h.update(label.encode())
        h.update(np.array([s.ctx.forward, s.ctx.tau]).tobytes())
        for arr in (s.strikes, s.ivs, s.weights):
            h.update(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    return h.hexdigest()


def _config_echo(config: FitConfig) -> dict[str, Any]:
    out = dataclasses.asdict(config)
    out["bounds"] = None if config.bounds is None else {k: list(v) for k, v in config.bounds.items()}
    out["fixed"] = dict(config.fixed)
    return out


def _score(label: str, index: int, smile: Smile, model: ModelKind, config: FitConfig) -> SmileOutcome:
    try:
        result = fit(model, smile, config)
        with np.errstate(all="ignore"), warnings.catch_warnings():
            warnings.simplefilter("ignore")
            value = rmse(result.vol(smile.strikes), smile.ivs)
    except (FitError, ValueError, ArithmeticError) as exc:
        return SmileOutcome(label, index, model.value, None, f"{type(exc).__name__}: {exc}")
    if not math.isfinite(value):
        return SmileOutcome(label, index, model.value, None, "non-finite model vols")
    return SmileOutcome(label, index, model.value, value)


def _trimmed(values: list[float]) -> list[float]:
    if len(values) < 3:
        return values
    lo, hi = np.quantile(values, [0.05, 0.95])
    return [v for v in values if lo <= v <= hi]


def run_benchmark(
    corpus: Sequence[tuple[str, Smile]],
    models: Iterable[ModelKind | str],
    config: FitConfig | None = None,
    trim: bool = False,
    threads: int = 1,
) -> BenchReport:
    """Fit each model to each smile and average the per-smile RMSE within each group.

    Failed fits are left out of the mean and counted. With ``trim`` the
    per-smile RMSEs outside the 5%-95% quantiles of their group are dropped
    before averaging.
    """
    models = sorted({ModelKind(m) for m in models}, key=lambda m: m.value)
    if not models:
        raise ValueError("empty model set")
    if not corpus:
        raise ValueError("empty corpus")
    config = config or FitConfig()
    jobs = [(label, i, smile, m) for i, (label, smile) in enumerate(corpus) for m in models]

    def run(job):
        return _score(*job, config)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            outcomes = list(pool.map(run, jobs))
    else:
        outcomes = [run(j) for j in jobs]

    groups: dict[tuple[str, str], list[SmileOutcome]] = {}
    for o in outcomes:
        groups.setdefault((o.group, o.model), []).append(o)
    rows = []
    for (group, model) in sorted(groups):
        cell = groups[(group, model)]
        ok = [o.rmse for o in cell if o.rmse is not None]
        if trim:
            ok = _trimmed(ok)
        mean = float(np.mean(ok)) if ok else math.nan
        rows.append(BenchRow(group, model, mean, len(cell), sum(o.rmse is None for o in cell)))
    metadata = {
        "config": _config_echo(config),
        "corpus_fingerprint": corpus_fingerprint(corpus),
        "models": [m.value for m in models],
        "trim": trim,
        "n_smiles": len(corpus),
    }
    return BenchReport(tuple(rows), metadata, tuple(outcomes))


def _fmt(x: float, precision: int) -> str:
    return "" if math.isnan(x) else f"{x:.{precision}g}"


def emit_report(report: BenchReport, fmt: str = "csv", precision: int = 17) -> str:
    """Render a report as ``csv``, ``json`` or ``markdown`` text."""
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(COLUMNS)
        for r in report.rows:
            w.writerow([r.group, r.model, _fmt(r.mean_rmse, precision), r.n_smiles, r.n_failures])
        return buf.getvalue()
    if fmt == "json":
        doc = {
            "schema": REPORT_SCHEMA_ID,
            "metadata": report.metadata,
            "rows": [
                {**dataclasses.asdict(r), "mean_rmse": None if math.isnan(r.mean_rmse) else r.mean_rmse}
                for r in report.rows
            ],
        }
        return json.dumps(doc, indent=2) + "\n"
    if fmt == "markdown":
        out = []
        for group in dict.fromkeys(r.group for r in report.rows):
            out.append(f"### {group}\n")
            out.append("| Model | Mean RMSE | Smiles | Failures |")
            out.append("|---|---:|---:|---:|")
            for r in report.rows:
                if r.group == group:
                    mean = _fmt(r.mean_rmse, min(precision, 6)) or "n/a"
                    out.append(f"| {r.model} | {mean} | {r.n_smiles} | {r.n_failures} |")
            out.append("")
        return "\n".join(out)
    raise ValueError(f"unknown report format {fmt!r}")


def parse_report_csv(text: str) -> list[BenchRow]:
    reader = csv.DictReader(io.StringIO(text))
    if tuple(reader.fieldnames or ()) != COLUMNS:
        raise ValueError(f"unexpected header {reader.fieldnames}")
    return [
        BenchRow(r["group"], r["model"], float(r["mean_rmse"]) if r["mean_rmse"] else math.nan,
                 int(r["n_smiles"]), int(r["n_failures"]))
        for r in reader
    ]


def outcome_rows(report: BenchReport) -> list[tuple[str, int, str, float]]:
    """Per-smile (group, index, model, rmse) records behind the aggregate table; failures give nan."""
    return [(o.group, o.index, o.model, math.nan if o.rmse is None else o.rmse) for o in report.outcomes]


def load_corpus(
    directory: str | Path,
    rule: SelectionRule = SelectionRule.SPREAD_BASED,
    window=None,
) -> LoadedCorpus:
    """Read ``<contract>__<timestamp>.csv`` snapshots; the contract prefix is the group label.

    A file holding several expiries yields one smile per expiry. Files that
    cannot be parsed or have too few usable strikes are skipped and listed.
    """
    directory = Path(directory)
    smiles, skipped, dropped = [], [], 0
    for path in sorted(directory.glob("*.csv")):
        m = CORPUS_FILE.match(path.name)
        if not m:
            skipped.append((path.name, "name does not match <contract>__<timestamp>.csv"))
            continue
        try:
            records = parse_chain_csv(path)
        except (ChainParseError, OSError, UnicodeDecodeError) as exc:
            skipped.append((path.name, str(exc)))
            continue
        for (timestamp, expiry), group in group_snapshots(records).items():
            if not in_time_window(timestamp, window):
                continue
            try:
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore")
                    built = build_smile(group, rule)
            except ValueError as exc:
                skipped.append((f"{path.name}[{expiry}]", str(exc)))
                continue
            dropped += built.n_dropped
            smiles.append((m.group("contract"), built.smile))
    return LoadedCorpus(smiles, skipped, dropped)
