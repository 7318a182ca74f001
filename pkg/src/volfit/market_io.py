"""Option-chain CSV ingestion and OTM quote selection.

Schema (header required, extra columns ignored)::

    timestamp,expiry,strike,kind,bid,ask,forward,tau[,iv]
"""

from __future__ import annotations

import csv
import datetime as dt
import enum
import io
import math
import os
import warnings
from collections import defaultdict
from dataclasses import dataclass
from typing import IO, Iterable

import numpy as np

from volfit.black import ConvergenceError, ForwardContext, NoSolutionError, OptionKind, implied_vol
from volfit.calibrate import Smile

REQUIRED_COLUMNS = ("timestamp", "expiry", "strike", "kind", "bid", "ask", "forward", "tau")
OPTIONAL_COLUMNS = ("iv",)
MIN_STRIKES = 6


class ChainParseError(ValueError):
    """Raised with every row-level problem found in one file."""

    def __init__(self, errors: list[str]):
        self.errors = list(errors)
        shown = "; ".join(self.errors[:10])
        more = f" (+{len(self.errors) - 10} more)" if len(self.errors) > 10 else ""
        super().__init__(f"{len(self.errors)} bad row(s): {shown}{more}")


class SelectionError(ValueError):
    pass


class MarketDataWarning(UserWarning):
    pass


@dataclass(frozen=True, slots=True)
class ChainRecord:
    timestamp: str
    expiry: dt.date
    strike: float
    kind: OptionKind
    bid: float
    ask: float
    forward: float
    tau: float
    iv: float | None = None

    def __post_init__(self) -> None:
        if not self.strike > 0:
            raise ValueError(f"strike must be positive, got {self.strike}")
        if not self.bid >= 0:
            raise ValueError(f"bid must be nonnegative, got {self.bid}")
        if not self.ask >= self.bid:
            raise ValueError(f"ask {self.ask} below bid {self.bid}")
        if not self.forward > 0:
            raise ValueError(f"forward must be positive, got {self.forward}")
        if not self.tau > 0:
            raise ValueError(f"tau must be positive, got {self.tau}")
        if self.iv is not None and not self.iv > 0:
            raise ValueError(f"iv must be positive, got {self.iv}")

    @property
    def spread(self) -> float:
        return self.ask - self.bid

    @property
    def mid(self) -> float:
        return 0.5 * (self.bid + self.ask)


class SelectionRule(enum.Enum):
    SPREAD_BASED = "spread"
    OTM_SIDE = "otm"
    PRECOMPUTED_IV = "iv"


@dataclass(frozen=True, slots=True)
class SmileBuild:
    smile: Smile
    n_dropped: int
    dropped_strikes: tuple[float, ...]
    selected: tuple[ChainRecord, ...]


def _number(text: str, name: str) -> float:
    value = float(text)
    if not math.isfinite(value):
        raise ValueError(f"{name} is not finite")
    return value


def _parse_row(row: dict[str, str], has_iv: bool) -> ChainRecord:
    timestamp = row["timestamp"].strip()
    dt.datetime.fromisoformat(timestamp)
    iv_text = (row.get("iv") or "").strip() if has_iv else ""
    return ChainRecord(
        timestamp=timestamp,
        expiry=dt.date.fromisoformat(row["expiry"].strip()),
        strike=_number(row["strike"], "strike"),
        kind=OptionKind.parse(row["kind"]),
        bid=_number(row["bid"], "bid"),
        ask=_number(row["ask"], "ask"),
        forward=_number(row["forward"], "forward"),
        tau=_number(row["tau"], "tau"),
        iv=_number(iv_text, "iv") if iv_text else None,
    )


def _text_stream(source) -> IO[str]:
    if isinstance(source, (str, os.PathLike)):
        return open(source, newline="", encoding="utf-8")
    if isinstance(source, (bytes, bytearray)):
        return io.StringIO(bytes(source).decode("utf-8"), newline="")
    if isinstance(source, io.TextIOBase):
        return source
    return io.TextIOWrapper(source, encoding="utf-8", newline="")


def parse_chain_csv(source) -> list[ChainRecord]:
    """Parse a chain snapshot from a path, bytes, or a binary/text stream.

    Row numbers in errors count the header as row 1.
    """
    stream = _text_stream(source)
    try:
        reader = csv.DictReader(stream)
        header = [h.strip() for h in (reader.fieldnames or [])]
        missing = [c for c in REQUIRED_COLUMNS if c not in header]
        if missing:
            raise ChainParseError([f"missing required column(s): {', '.join(missing)}"])
        reader.fieldnames = header
        has_iv = "iv" in header
        records, errors = [], []
        for lineno, row in enumerate(reader, start=2):
            if None in row or any(row.get(c) is None for c in REQUIRED_COLUMNS):
                errors.append(f"row {lineno}: wrong number of fields")
                continue
            try:
                records.append(_parse_row(row, has_iv))
            except ValueError as exc:
                errors.append(f"row {lineno}: {exc}")
    finally:
        if isinstance(source, (str, os.PathLike)):
            stream.close()
    if errors:
        raise ChainParseError(errors)
    return records


def _otm(put: ChainRecord | None, call: ChainRecord | None, forward: float) -> ChainRecord:
    strike = (put or call).strike
    preferred = put if strike < forward else call
    return preferred if preferred is not None else (put or call)


def select_quote(
    put: ChainRecord | None, call: ChainRecord | None, forward: float, rule: SelectionRule
) -> ChainRecord:
    """Pick one quote per strike.

    ``OTM_SIDE`` falls back to the other side when the OTM quote is missing.
    """
    if put is None and call is None:
        raise SelectionError("no quote at this strike")
    if put is not None and call is not None:
        if put.strike != call.strike or put.expiry != call.expiry:
            raise SelectionError(f"put/call mismatch: K {put.strike} vs {call.strike}")
        if put.kind is not OptionKind.PUT or call.kind is not OptionKind.CALL:
            raise SelectionError("put and call arguments are swapped")
    if rule is SelectionRule.PRECOMPUTED_IV:
        carriers = [r for r in (put, call) if r is not None and r.iv is not None]
        if len(carriers) != 1:
            raise SelectionError(f"expected exactly one quote with an iv, found {len(carriers)}")
        return carriers[0]
    if put is None or call is None:
        return put or call
    # decimal quotes: 16.0 - 15.8 and 0.6 - 0.4 differ in binary, so compare with a rounding tolerance
    if rule is SelectionRule.SPREAD_BASED and not math.isclose(put.spread, call.spread, rel_tol=1e-9, abs_tol=1e-12):
        return put if put.spread < call.spread else call
    return _otm(put, call, forward)


def _record_key(r: ChainRecord):
    return (r.timestamp, r.expiry, r.strike, r.kind.value)


def build_smile(records: Iterable[ChainRecord], rule: SelectionRule = SelectionRule.SPREAD_BASED) -> SmileBuild:
    """Select one quote per strike and turn the chain into a :class:`Smile`.

    Mids outside the Black no-arbitrage bounds are dropped and counted; a
    :class:`MarketDataWarning` reports how many.
    """
    records = sorted(records, key=_record_key)
    if not records:
        raise ValueError("no records")
    first = records[0]
    for r in records:
        if (r.timestamp, r.expiry) != (first.timestamp, first.expiry):
            raise ValueError("records span several snapshots or expiries")
        if (r.forward, r.tau) != (first.forward, first.tau):
            raise ValueError("inconsistent forward/tau across records")
    ctx = ForwardContext(first.forward, first.tau)

    by_strike: dict[float, dict[OptionKind, ChainRecord]] = defaultdict(dict)
    for r in records:
        if r.kind in by_strike[r.strike]:
            raise ValueError(f"duplicate {r.kind.name.lower()} quote at strike {r.strike}")
        by_strike[r.strike][r.kind] = r

    strikes, ivs, dropped, chosen = [], [], [], []
    for strike in sorted(by_strike):
        side = by_strike[strike]
        pick = select_quote(side.get(OptionKind.PUT), side.get(OptionKind.CALL), ctx.forward, rule)
        if pick.iv is not None:
            iv = pick.iv
        else:
            try:
                iv = implied_vol(ctx, strike, pick.mid, pick.kind)
            except (NoSolutionError, ConvergenceError):
                dropped.append(strike)
                continue
        strikes.append(strike)
        ivs.append(iv)
        chosen.append(pick)

    if dropped:
        warnings.warn(f"dropped {len(dropped)} strike(s) whose mid violates arbitrage bounds",
                      MarketDataWarning, stacklevel=2)
    if len(strikes) < MIN_STRIKES:
        raise ValueError(f"only {len(strikes)} usable strikes, need {MIN_STRIKES}")
    smile = Smile.from_ivs(ctx, np.array(strikes), np.array(ivs))
    return SmileBuild(smile, len(dropped), tuple(dropped), tuple(chosen))


def group_snapshots(records: Iterable[ChainRecord]) -> dict[tuple[str, dt.date], list[ChainRecord]]:
    """Split records by (timestamp, expiry), ordered by key."""
    groups: dict[tuple[str, dt.date], list[ChainRecord]] = defaultdict(list)
    for r in records:
        groups[(r.timestamp, r.expiry)].append(r)
    return {k: groups[k] for k in sorted(groups)}


def parse_time_window(text: str) -> tuple[dt.time, dt.time]:
    """``"HH:MM-HH:MM"`` to a pair of times."""
    try:
        lo, hi = (dt.time.fromisoformat(part.strip()) for part in text.split("-"))
    except ValueError as exc:
        raise ValueError(f"bad time window {text!r}, expected HH:MM-HH:MM") from exc
    if hi < lo:
        raise ValueError(f"time window {text!r} ends before it starts")
    return lo, hi


def in_time_window(timestamp: str, window: tuple[dt.time, dt.time] | None) -> bool:
    """True when the time-of-day of ``timestamp`` lies in the closed window (or no window is set)."""
    if window is None:
        return True
    t = dt.datetime.fromisoformat(timestamp).time().replace(tzinfo=None)
    return window[0] <= t <= window[1]


def write_chain_csv(records: Iterable[ChainRecord], stream: IO[str]) -> None:
    """Inverse of :func:`parse_chain_csv` (iv column always written, blank when absent)."""
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow([*REQUIRED_COLUMNS, *OPTIONAL_COLUMNS])
    for r in records:
        writer.writerow([
            r.timestamp, r.expiry.isoformat(), repr(r.strike), r.kind.value, repr(r.bid), repr(r.ask),
            repr(r.forward), repr(r.tau), "" if r.iv is None else repr(r.iv),
        ])
