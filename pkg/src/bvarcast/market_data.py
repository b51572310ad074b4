"""Price ingestion, calendar alignment and percent log returns.

Targets trade every calendar day; predictors (equity indices, metals, rates,
VIX) do not. Predictor prices are carried forward over closed-market days so
their return on those days is exactly zero.
"""

from __future__ import annotations

import csv
import io
import json
import math
import urllib.request
from dataclasses import dataclass, field
from datetime import date, timedelta
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import DataError

PRICE_HEADER = ("date", "price")


def _freeze(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


def _check_increasing(dates, what):
    for prev, cur in zip(dates, dates[1:]):
        if cur <= prev:
            kind = "duplicate" if cur == prev else "out-of-order"
            raise DataError(f"{what}: {kind} date {cur.isoformat()}", date=cur)


@dataclass(frozen=True, eq=False)
class PriceSeries:
    name: str
    dates: tuple[date, ...]
    prices: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "dates", tuple(self.dates))
        object.__setattr__(self, "prices", _freeze(self.prices))
        if self.prices.ndim != 1 or len(self.prices) != len(self.dates):
            raise DataError(f"{self.name}: dates and prices differ in length", series=self.name)
        _check_increasing(self.dates, self.name)
        bad = np.flatnonzero(~(self.prices > 0) | ~np.isfinite(self.prices))
        if bad.size:
            d = self.dates[bad[0]]
            raise DataError(
                f"{self.name}: non-positive price {self.prices[bad[0]]!r} on {d.isoformat()}",
                series=self.name, date=d,
            )

    def __len__(self):
        return len(self.dates)

    def window(self, start=None, end=None) -> "PriceSeries":
        keep = [i for i, d in enumerate(self.dates)
                if (start is None or d >= start) and (end is None or d <= end)]
        return PriceSeries(self.name, [self.dates[i] for i in keep], self.prices[keep])


@dataclass(frozen=True, eq=False)
class ReturnPanel:
    """Dated T x N matrix of percent log returns."""

    dates: tuple[date, ...]
    names: tuple[str, ...]
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "dates", tuple(self.dates))
        object.__setattr__(self, "names", tuple(self.names))
        v = _freeze(self.values)
        if v.ndim == 1:
            v = _freeze(v[:, None])
        object.__setattr__(self, "values", v)
        if v.shape != (len(self.dates), len(self.names)):
            raise DataError(
                f"panel shape {v.shape} does not match {len(self.dates)} dates x {len(self.names)} names"
            )
        if not np.all(np.isfinite(v)):
            raise DataError("panel contains non-finite values")
        _check_increasing(self.dates, "panel")

    @property
    def T(self) -> int:
        return len(self.dates)

    @property
    def N(self) -> int:
        return len(self.names)

    def rows(self, start: int, stop: int) -> "ReturnPanel":
        return type(self)(self.dates[start:stop], self.names, self.values[start:stop])

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.names.index(name)]


@dataclass(frozen=True, eq=False)
class PredictorPanel(ReturnPanel):
    """Calendar-aligned predictor returns; closed-market days hold exactly 0.0.

    ``carried_forward`` maps each predictor to the dates on which its price
    was carried forward from an earlier quote.
    """

    carried_forward: Mapping[str, tuple[date, ...]] = field(default_factory=dict, compare=False)

    def rows(self, start: int, stop: int) -> "PredictorPanel":
        lo, hi = self.dates[start:stop][:1], self.dates[start:stop][-1:]
        kept = {}
        if lo and hi:
            kept = {k: tuple(d for d in v if lo[0] <= d <= hi[0]) for k, v in self.carried_forward.items()}
        return PredictorPanel(self.dates[start:stop], self.names, self.values[start:stop], kept)


@dataclass(frozen=True, eq=False)
class DescriptiveStats:
    names: tuple[str, ...]
    maximum: np.ndarray
    minimum: np.ndarray
    mean: np.ndarray
    median: np.ndarray
    std: np.ndarray
    skewness: np.ndarray
    kurtosis: np.ndarray

    ROWS = ("maximum", "minimum", "mean", "median", "std", "skewness", "kurtosis")

    def as_dict(self) -> dict[str, dict[str, float]]:
        return {stat: {n: float(getattr(self, stat)[i]) for i, n in enumerate(self.names)}
                for stat in self.ROWS}


# ---------------------------------------------------------------------------
# transforms

def to_log_returns(prices: PriceSeries) -> np.ndarray:
    """Percent log returns ``100 * log(S_t / S_{t-1})``; one shorter than the input."""
    if len(prices) < 2:
        raise DataError(f"{prices.name}: need at least 2 observations, got {len(prices)}",
                        series=prices.name)
    return 100.0 * np.diff(np.log(prices.prices))


def prices_from_returns(first_price: float, returns) -> np.ndarray:
    """Invert :func:`to_log_returns` given the initial price."""
    r = np.asarray(returns, dtype=float)
    return first_price * np.exp(np.concatenate([[0.0], np.cumsum(r / 100.0)]))


def build_return_panel(series: Sequence[PriceSeries], start: date | None = None,
                       end: date | None = None) -> ReturnPanel:
    """Stack target price series into a return panel.

    Every series must cover the same, gap-free daily calendar over
    ``[start, end]``; the first date is consumed by differencing.
    """
    if not series:
        raise DataError("no target series given")
    clipped = [s.window(start, end) for s in series]
    ref = clipped[0]
    for s in clipped:
        if len(s) < 2:
            raise DataError(f"{s.name}: need at least 2 observations in range", series=s.name)
        if s.dates != ref.dates:
            missing = sorted(set(ref.dates) ^ set(s.dates))
            raise DataError(
                f"{s.name}: calendar differs from {ref.name} (first mismatch {missing[0].isoformat()})",
                series=s.name, date=missing[0],
            )
    for prev, cur in zip(ref.dates, ref.dates[1:]):
        if cur - prev != timedelta(days=1):
            gap = prev + timedelta(days=1)
            raise DataError(f"target calendar has a gap starting {gap.isoformat()}", date=gap)
    values = np.column_stack([to_log_returns(s) for s in clipped])
    return ReturnPanel(ref.dates[1:], [s.name for s in clipped], values)


def align_predictors(target_dates: Sequence[date], raw: Sequence[PriceSeries]) -> PredictorPanel:
    """Carry predictor prices forward onto the target calendar, then difference.

    The output date axis is ``target_dates[1:]``. A target date without a
    quote reuses the last earlier price, so its return is exactly 0.0.
    """
    target_dates = tuple(target_dates)
    if len(target_dates) < 2:
        raise DataError("need at least 2 target dates")
    _check_increasing(target_dates, "target dates")
    first = target_dates[0]
    cols, names, filled = [], [], {}
    for s in raw:
        if not len(s) or s.dates[0] > first:
            raise DataError(
                f"predictor {s.name} starts after the first target date {first.isoformat()}",
                series=s.name,
            )
        # index of the last quote on or before each target date
        ordinals = np.array([d.toordinal() for d in s.dates])
        tgt = np.array([d.toordinal() for d in target_dates])
        idx = np.searchsorted(ordinals, tgt, side="right") - 1
        aligned = s.prices[idx]
        quoted = ordinals[idx] == tgt
        ret = 100.0 * np.diff(np.log(aligned))
        # identical prices give log(1) == 0.0 exactly; force it anyway for clarity
        ret[idx[1:] == idx[:-1]] = 0.0
        cols.append(ret)
        names.append(s.name)
        filled[s.name] = tuple(d for d, q in zip(target_dates[1:], quoted[1:]) if not q)
    return PredictorPanel(target_dates[1:], names, np.column_stack(cols), filled)


def describe(panel: ReturnPanel) -> DescriptiveStats:
    """Table-style summary per series.

    Standard deviation uses the T-1 denominator; skewness and kurtosis are
    the biased standardized third and fourth moments (raw kurtosis, 3 for a
    normal population).
    """
    x = panel.values
    if panel.T < 4:
        raise DataError(f"need at least 4 observations per series, got {panel.T}")
    centred = x - x.mean(axis=0)
    m2 = np.mean(centred**2, axis=0)
    degenerate = [n for n, v in zip(panel.names, m2) if not v > 0]
    if degenerate:
        raise DataError(f"zero-variance series: {', '.join(degenerate)}", series=degenerate[0])
    return DescriptiveStats(
        names=panel.names,
        maximum=x.max(axis=0),
        minimum=x.min(axis=0),
        mean=x.mean(axis=0),
        median=np.median(x, axis=0),
        std=x.std(axis=0, ddof=1),
        skewness=np.mean(centred**3, axis=0) / m2**1.5,
        kurtosis=np.mean(centred**4, axis=0) / m2**2,
    )


# ---------------------------------------------------------------------------
# file formats

def _parse_price_rows(rows, source, name):
    dates, prices = [], []
    for lineno, row in rows:
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != 2:
            raise DataError(f"{source}:{lineno}: expected 2 fields, got {len(row)}", series=name, line=lineno)
        try:
            d = date.fromisoformat(row[0].strip())
        except ValueError:
            raise DataError(f"{source}:{lineno}: bad date {row[0]!r}", series=name, line=lineno) from None
        try:
            p = float(row[1])
        except ValueError:
            raise DataError(f"{source}:{lineno}: bad price {row[1]!r}", series=name, line=lineno) from None
        if not (p > 0 and math.isfinite(p)):
            raise DataError(f"{source}:{lineno}: non-positive price {row[1].strip()} on {d.isoformat()}",
                            series=name, date=d, line=lineno)
        if dates and d <= dates[-1]:
            raise DataError(f"{source}:{lineno}: date {d.isoformat()} not after {dates[-1].isoformat()}",
                            series=name, date=d, line=lineno)
        dates.append(d)
        prices.append(p)
    return dates, prices


def read_price_csv(path, name: str | None = None) -> PriceSeries:
    """Read a ``date,price`` CSV (ISO-8601 dates, strictly increasing)."""
    path = Path(path)
    name = name or path.stem
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip().lower() for h in header) != PRICE_HEADER:
            raise DataError(f"{path}:1: header must be 'date,price', got {header!r}", series=name, line=1)
        dates, prices = _parse_price_rows(((i, r) for i, r in enumerate(reader, start=2)), path, name)
    return PriceSeries(name, dates, prices)


def write_price_csv(series: PriceSeries, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(PRICE_HEADER)
        for d, p in zip(series.dates, series.prices):
            w.writerow([d.isoformat(), repr(float(p))])


def write_panel_csv(panel: ReturnPanel, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["date", *panel.names])
        for d, row in zip(panel.dates, panel.values):
            w.writerow([d.isoformat(), *(repr(float(v)) for v in row)])


def read_panel_csv(path, kind=ReturnPanel):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[0].strip() != "date" or len(header) < 2:
            raise DataError(f"{path}:1: panel header must start with 'date'", line=1)
        dates, rows = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise DataError(f"{path}:{lineno}: expected {len(header)} fields", line=lineno)
            try:
                dates.append(date.fromisoformat(row[0]))
                rows.append([float(v) for v in row[1:]])
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: {exc}", line=lineno) from None
    values = np.array(rows, dtype=float).reshape(len(rows), len(header) - 1)
    return kind(dates, header[1:], values)


def fetch_price_series(url: str, name: str, *, date_field: str = "date",
                       price_field: str = "price", timeout: float = 30.0) -> PriceSeries:
    """Download a daily price history from a public endpoint.

    The endpoint may return CSV with a header row, or JSON holding a list of
    objects (optionally under a top-level ``"data"`` key). Only the two named
    fields are used. Dates may be ISO strings or unix timestamps in seconds.
    """
    with urllib.request.urlopen(url, timeout=timeout) as resp:
        body = resp.read().decode("utf-8")
    text = body.lstrip()
    if text.startswith("[") or text.startswith("{"):
        payload = json.loads(text)
        if isinstance(payload, dict):
            payload = payload.get("data", payload)
        records = [(rec[date_field], rec[price_field]) for rec in payload]
    else:
        reader = csv.DictReader(io.StringIO(body))
        records = [(rec[date_field], rec[price_field]) for rec in reader]

    def as_date(v):
        if isinstance(v, (int, float)) or str(v).isdigit():
            return date.fromordinal(date(1970, 1, 1).toordinal() + int(float(v)) // 86400)
        return date.fromisoformat(str(v)[:10])

    by_day = {}
    for d, p in records:
        by_day[as_date(d)] = float(p)  # last quote of a day wins
    days = sorted(by_day)
    return PriceSeries(name, days, [by_day[d] for d in days])
