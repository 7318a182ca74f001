import json
from pathlib import Path

import numpy as np
import pytest

from volfit.black import ForwardContext, OptionKind, black_price

DATA = Path(__file__).parent / "data"

# filled by test_acceptance, printed once at the end of the session
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def frozen():
    raw = json.loads((DATA / "frozen_oracle.json").read_text())
    return {k: float(v) for k, v in raw.items()}


def chain_rows(ctx: ForwardContext, strikes, ivs, half_spread=0.01, timestamp="2025-04-17T09:50:05",
               expiry="2025-06-20", with_iv=False, sides="both"):
    """Quote rows priced off ``ivs``: put and call at every strike, symmetric spread around the Black price."""
    rows = []
    for k, v in zip(strikes, ivs):
        k = float(k)
        for kind in (OptionKind.PUT, OptionKind.CALL):
            if sides == "otm" and (kind is OptionKind.PUT) != (k < ctx.forward):
                continue
            p = black_price(ctx, k, v, kind)
            bid, ask = max(p - half_spread, 0.0), p + half_spread
            if bid == 0.0:
                ask = 2 * p  # keep the mid on the model price
            iv = repr(float(v)) if with_iv else ""
            rows.append(f"{timestamp},{expiry},{k!r},{kind.value},{bid!r},{ask!r},{ctx.forward!r},{ctx.tau!r},{iv}")
    return rows


def write_chain(path: Path, ctx, strikes, ivs, **kw) -> Path:
    header = "timestamp,expiry,strike,kind,bid,ask,forward,tau,iv"
    path.write_text("\n".join([header, *chain_rows(ctx, strikes, ivs, **kw)]) + "\n")
    return path


@pytest.fixture
def baseline_ctx():
    return ForwardContext(5685.6, 0.176)


@pytest.fixture
def baseline_strikes():
    return np.arange(3900.0, 7401.0, 100.0)
