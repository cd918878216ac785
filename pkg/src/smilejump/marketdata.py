"""CSV schemas, ingestion screening and artifact writers.

Wire formats (headers are exact):
    underlying CSV : timestamp,price
    options CSV    : timestamp,expiry,strike,right,bid,ask,underlying_price
with ISO-8601 timestamps at minute resolution and right in {C, P}.

Ingestion keeps only quotes inside the trading session, repairs interior
minute gaps in the underlying by forward fill, and screens option rows:
crossed or zero-bid quotes, in-the-money rights (the pipeline works with
OTM and ATM quotes), quotes outside the fitted moneyness/maturity window,
and mids violating the no-arbitrage price bounds are all dropped with a
per-reason count.  Floats are written with repr so artifacts round-trip
bit-exactly.
"""

from __future__ import annotations

import csv
import datetime as dt
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

from .config import RunConfig
from .jumps import PriceSeries
from .pricing import OptionQuote, price_bounds
from .timegrid import in_session, minute_index

__all__ = [
    "IngestError",
    "IngestReport",
    "DayQuotes",
    "ingest_underlying",
    "ingest_options",
    "write_underlying_csv",
    "write_options_csv",
    "write_truth_csv",
    "write_rows",
]

log = logging.getLogger(__name__)

UNDERLYING_HEADER = ["timestamp", "price"]
OPTIONS_HEADER = ["timestamp", "expiry", "strike", "right", "bid", "ask", "underlying_price"]


class IngestError(RuntimeError):
    """Fatal ingestion problem (missing/empty file, bad header)."""


@dataclass
class IngestReport:
    rows_read: int = 0
    rows_accepted: int = 0
    rejected: dict[str, int] = field(default_factory=dict)
    days: int = 0
    usable_minutes: int = 0
    gap_filled_minutes: int = 0

    def reject(self, reason: str) -> None:
        self.rejected[reason] = self.rejected.get(reason, 0) + 1

    def balanced(self) -> bool:
        return self.rows_read == self.rows_accepted + sum(self.rejected.values())

    def to_json_dict(self) -> dict:
        return {
            "rows_read": self.rows_read,
            "rows_accepted": self.rows_accepted,
            "rejected": dict(sorted(self.rejected.items())),
            "days": self.days,
            "usable_minutes": self.usable_minutes,
            "gap_filled_minutes": self.gap_filled_minutes,
        }


@dataclass(frozen=True)
class DayQuotes:
    """One day's accepted option quotes as flat arrays, minute-sorted."""

    day: dt.date
    minute: np.ndarray
    tau: np.ndarray
    strike: np.ndarray
    is_call: np.ndarray
    mid: np.ndarray
    spot: np.ndarray

    def __len__(self) -> int:
        return len(self.minute)


def _open_checked(path: Path) -> list[str]:
    if not path.exists():
        raise IngestError(f"missing input file: {path}")
    text = path.read_text()
    if not text.strip():
        raise IngestError(f"empty input file: {path}")
    return text.splitlines()


def ingest_underlying(path: str | Path, report: IngestReport | None = None) -> tuple[PriceSeries, IngestReport]:
    """Parse, screen and gap-repair the minute-level underlying prices."""
    path = Path(path)
    report = report or IngestReport()
    lines = _open_checked(path)
    reader = csv.reader(lines)
    header = next(reader)
    if [h.strip() for h in header] != UNDERLYING_HEADER:
        raise IngestError(f"{path}: expected header {','.join(UNDERLYING_HEADER)}")

    by_day: dict[dt.date, dict[int, float]] = {}
    for lineno, row in enumerate(reader, start=2):
        report.rows_read += 1
        try:
            ts = dt.datetime.fromisoformat(row[0])
            price = float(row[1])
            if not math.isfinite(price) or price <= 0.0:
                raise ValueError("price must be positive")
        except (ValueError, IndexError) as exc:
            report.reject("schema")
            log.warning("%s:%d rejected: %s", path, lineno, exc)
            continue
        if not in_session(ts.time()):
            report.reject("window")
            continue
        by_day.setdefault(ts.date(), {})[minute_index(ts.time())] = price
        report.rows_accepted += 1

    days, minutes_per_day, prices_per_day = [], [], []
    for day in sorted(by_day):
        obs = by_day[day]
        if len(obs) < 2:
            log.warning("%s: day %s dropped (%d observations)", path, day, len(obs))
            continue
        first, last = min(obs), max(obs)
        minutes = np.arange(first, last + 1)
        prices = np.empty(len(minutes))
        prev = obs[first]
        for i, m in enumerate(minutes):
            if m in obs:
                prev = obs[m]
            else:
                report.gap_filled_minutes += 1
            prices[i] = prev
        days.append(day)
        minutes_per_day.append(minutes)
        prices_per_day.append(prices)
    if not days:
        raise IngestError(f"{path}: no usable trading days")
    series = PriceSeries.from_days(days, minutes_per_day, prices_per_day)
    report.days = len(days)
    return series, report


def _options_files(path: Path) -> list[Path]:
    if path.is_dir():
        files = sorted(path.glob("*.csv"))
        if not files:
            raise IngestError(f"no CSV files in directory {path}")
        return files
    return [path]


def ingest_options(path: str | Path, config: RunConfig) -> tuple[dict[dt.date, DayQuotes], IngestReport]:
    """Screen option rows and group the survivors into per-day arrays."""
    report = IngestReport()
    # 1e-9 slack: strikes quoted on a moneyness grid round-trip through
    # strike/spot with float noise right at the window edges
    m_lo = config.moneyness_lo - config.fit_moneyness_margin - 1e-9
    m_hi = config.moneyness_hi + config.fit_moneyness_margin + 1e-9
    tau_hi = max(config.maturities) + config.tau_margin

    acc: dict[dt.date, list[tuple]] = {}
    for file in _options_files(Path(path)):
        lines = _open_checked(file)
        reader = csv.reader(lines)
        header = next(reader)
        if [h.strip() for h in header] != OPTIONS_HEADER:
            raise IngestError(f"{file}: expected header {','.join(OPTIONS_HEADER)}")
        for lineno, row in enumerate(reader, start=2):
            report.rows_read += 1
            try:
                ts = dt.datetime.fromisoformat(row[0])
                expiry = dt.date.fromisoformat(row[1])
                strike = float(row[2])
                right = row[3].strip()
                bid = float(row[4])
                ask = float(row[5])
                spot = float(row[6])
                if right not in ("C", "P"):
                    raise ValueError(f"right must be C or P, got {right!r}")
                if not all(map(math.isfinite, (strike, bid, ask, spot))):
                    raise ValueError("non-finite numeric field")
                if strike <= 0.0 or spot <= 0.0:
                    raise ValueError("strike and underlying_price must be positive")
            except (ValueError, IndexError) as exc:
                report.reject("schema")
                log.warning("%s:%d rejected: %s", file, lineno, exc)
                continue
            if not in_session(ts.time()):
                report.reject("window")
                continue
            if ask < bid:
                report.reject("crossed quote")
                continue
            if bid <= 0.0:
                report.reject("zero bid")
                continue
            tau = (expiry - ts.date()).days / 365.0
            if tau <= 0.0 or tau > tau_hi:
                report.reject("maturity")
                continue
            m = strike / spot
            if not m_lo <= m <= m_hi:
                report.reject("moneyness")
                continue
            is_call = right == "C"
            if (is_call and m < 1.0) or (not is_call and m > 1.0):
                report.reject("itm")
                continue
            mid = 0.5 * (bid + ask)
            lo_b, hi_b = price_bounds(spot, strike, config.rate, tau, right)
            if not lo_b < mid < hi_b:
                report.reject("bound violation")
                continue
            acc.setdefault(ts.date(), []).append(
                (minute_index(ts.time()), tau, strike, is_call, mid, spot)
            )
            report.rows_accepted += 1

    out: dict[dt.date, DayQuotes] = {}
    usable = 0
    for day in sorted(acc):
        rows = sorted(acc[day])
        minute = np.asarray([r[0] for r in rows], dtype=int)
        tau = np.asarray([r[1] for r in rows])
        strike = np.asarray([r[2] for r in rows])
        is_call = np.asarray([r[3] for r in rows], dtype=bool)
        mid = np.asarray([r[4] for r in rows])
        spot = np.asarray([r[5] for r in rows])
        out[day] = DayQuotes(day, minute, tau, strike, is_call, mid, spot)
        for mnt in np.unique(minute):
            sel = minute == mnt
            if sel.sum() >= 3 and len(np.unique(tau[sel])) >= 2 and len(np.unique(strike[sel] / spot[sel])) >= 2:
                usable += 1
    report.days = len(out)
    report.usable_minutes = usable
    return out, report


# ---------------------------------------------------------------------------
# Writers.  repr() keeps every float bit-exact and runs byte-identical.
# ---------------------------------------------------------------------------

def _fmt(value) -> str:
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return str(value)


def write_rows(path: str | Path, header: list[str], rows: Iterable[Iterable]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def write_underlying_csv(path: str | Path, series: PriceSeries) -> None:
    def rows() -> Iterator[list]:
        for d in range(series.n_days):
            sl = series.day_slice(d)
            for minute, price in zip(series.minutes[sl], series.prices[sl]):
                ts = dt.datetime.combine(
                    series.days[d],
                    dt.time((9 * 60 + 31 + int(minute)) // 60, (9 * 60 + 31 + int(minute)) % 60),
                )
                yield [ts.isoformat(), float(price)]

    write_rows(path, UNDERLYING_HEADER, rows())


def write_options_csv(path: str | Path, quotes: Iterable[OptionQuote]) -> None:
    def rows() -> Iterator[list]:
        for q in quotes:
            yield [
                q.timestamp.isoformat(), q.expiry.isoformat(), float(q.strike),
                q.right, float(q.bid), float(q.ask), float(q.spot),
            ]

    write_rows(path, OPTIONS_HEADER, rows())


def write_truth_csv(path: str | Path, true_jumps, jump_morning_days) -> None:
    morning = set(jump_morning_days)
    rows = [
        [day.isoformat(), int(minute), float(size), int(day in morning)]
        for day, minute, size in true_jumps
    ]
    write_rows(path, ["day", "minute", "log_size", "morning_jump_day"], rows)
