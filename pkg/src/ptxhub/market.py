"""Exogenous hourly inputs and the grid-interface price construction.

Prices at the interface between the hub and the external grids:

* electricity purchase: ``spot + TF_p + em_t * co2_tax``
* electricity sale: ``spot - TF_sl``
* natural gas purchase: ``ng + em_NG * co2_tax``
* district-heating sale: a fixed 54 EUR/MWh
* biochar credit: ``co2_tax`` per tonne sequestered

Grid electricity may feed RFNBO production only in hours whose spot price is
at most 20 EUR/MWh, and the annual renewable electricity the hub may sell is
capped by scaling the DK1 demand profile to ``maxRE`` times the electricity
used by the PtX processes.
"""
from __future__ import annotations

import csv
import hashlib
import math
from dataclasses import dataclass, field, replace
from datetime import datetime, timedelta, timezone
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
import pandas as pd

from .catalog.scenario import DEFAULT_WEEKS, Tariffs

HOUR = timedelta(hours=1)
SERIES_FILES = {
    "spot": "spot_price.csv",
    "ng": "ng_price.csv",
    "emission": "grid_emission.csv",
    "dk1_demand": "dk1_demand.csv",
    "dh_demand": "dh_demand.csv",
    "wind_cf": "wind_cf.csv",
    "solar_cf": "solar_cf.csv",
}
DH_SALE_PRICE = 54.0
RFNBO_THRESHOLD = 20.0


class SeriesError(ValueError):
    """Malformed time-series file."""


def _parse_ts(text: str) -> datetime:
    s = text.strip()
    if s.endswith("Z"):
        s = s[:-1] + "+00:00"
    ts = datetime.fromisoformat(s)
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    return ts.astimezone(timezone.utc)


def load_series_csv(path: str | Path, name: str | None = None, *, forward_fill: bool = False,
                    start: datetime | None = None, hours: int | None = None) -> pd.Series:
    """Read a ``timestamp,value`` CSV into an hourly UTC series.

    Files whose rows are evenly spaced at a whole multiple of one hour (e.g.
    daily gas prices) are expanded to hourly resolution by holding each value
    until the next timestamp.  Irregular gaps are rejected unless
    ``forward_fill`` is set.

    Parameters
    ----------
    path : path-like
    name : str, optional
        Series name; defaults to the file stem.
    forward_fill : bool
        Fill missing hours of an hourly file with the previous value.
    start, hours : optional
        Expected first timestamp and length; the series is checked against them
        (a coarse file is extended to cover ``hours``).

    Raises
    ------
    SeriesError
        Missing header, unparseable rows, duplicate timestamps, unsorted rows
        or missing hours.  Messages name the offending line numbers.
    """
    path = Path(path)
    stamps: list[datetime] = []
    values: list[float] = []
    lines: list[int] = []
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip().lower() for h in header[:2]] != ["timestamp", "value"]:
            raise SeriesError(f"{path}: line 1: expected header 'timestamp,value'")
        for row in reader:
            lineno = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) < 2:
                raise SeriesError(f"{path}: line {lineno}: expected two fields, got {row!r}")
            try:
                ts = _parse_ts(row[0])
                val = float(row[1])
            except ValueError:
                raise SeriesError(f"{path}: line {lineno}: cannot parse {row!r}") from None
            if not math.isfinite(val):
                raise SeriesError(f"{path}: line {lineno}: non-finite value {row[1]!r}")
            stamps.append(ts)
            values.append(val)
            lines.append(lineno)
    if not stamps:
        raise SeriesError(f"{path}: no data rows")
    seen: dict[datetime, int] = {}
    for ts, ln in zip(stamps, lines):
        if ts in seen:
            raise SeriesError(f"{path}: line {ln}: duplicate timestamp {ts.isoformat()} "
                              f"(first at line {seen[ts]})")
        seen[ts] = ln
    for i in range(1, len(stamps)):
        if stamps[i] <= stamps[i - 1]:
            raise SeriesError(f"{path}: line {lines[i]}: timestamps not increasing")
    steps = {stamps[i] - stamps[i - 1] for i in range(1, len(stamps))}
    coarse = (
        len(steps) == 1
        and next(iter(steps)) > HOUR
        and next(iter(steps)) % HOUR == timedelta(0)
    )
    index = pd.DatetimeIndex(stamps)
    series = pd.Series(values, index=index, name=name or path.stem, dtype=float)
    if coarse:
        step_h = next(iter(steps)) // HOUR
        end = stamps[-1] + step_h * HOUR
        if hours is not None and start is not None:
            end = max(end, start + hours * HOUR)
        full = pd.date_range(stamps[0], end - HOUR, freq="h")
        series = series.reindex(full).ffill()
    else:
        for i in range(1, len(stamps)):
            gap = stamps[i] - stamps[i - 1]
            if gap != HOUR and not forward_fill:
                missing = gap // HOUR - 1
                raise SeriesError(
                    f"{path}: line {lines[i]}: gap of {missing} missing hour(s) after "
                    f"{stamps[i - 1].isoformat()} (line {lines[i - 1]})"
                )
        if forward_fill:
            full = pd.date_range(stamps[0], stamps[-1], freq="h")
            series = series.reindex(full).ffill()
    if start is not None:
        if series.index[0] > pd.Timestamp(start):
            raise SeriesError(f"{path}: series starts at {series.index[0]}, expected {start}")
        series = series[series.index >= pd.Timestamp(start)]
    if hours is not None:
        if len(series) < hours:
            raise SeriesError(f"{path}: {len(series)} hours available, {hours} required")
        series = series.iloc[:hours]
    series.name = name or path.stem
    return series


def file_digest(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


@dataclass(frozen=True, eq=False)
class MarketSeries:
    """Hourly exogenous inputs sharing one timestamp index."""

    timestamps: tuple[datetime, ...]
    spot: np.ndarray
    ng: np.ndarray
    emission: np.ndarray
    dk1_demand: np.ndarray
    dh_demand: np.ndarray
    wind_cf: np.ndarray
    solar_cf: np.ndarray
    tariffs: Tariffs = field(default_factory=Tariffs)
    year: int | None = None
    sources: Mapping[str, str] = field(default_factory=dict)  # name -> sha256

    def __post_init__(self):
        n = len(self.timestamps)
        for key in SERIES_FILES:
            arr = np.array(getattr(self, key), dtype=float)
            if arr.shape == ():
                arr = np.full(n, float(arr))
            if arr.shape != (n,):
                raise ValueError(f"{key} has shape {arr.shape}, expected ({n},)")
            arr.setflags(write=False)
            object.__setattr__(self, key, arr)

    @property
    def hours(self) -> int:
        return len(self.timestamps)

    def problems(self) -> list[str]:
        out = []
        for key in ("wind_cf", "solar_cf"):
            arr = getattr(self, key)
            if arr.min() < 0 or arr.max() > 1:
                out.append(f"{key} outside [0, 1]")
        if self.emission.min() < 0:
            out.append("grid emission intensity negative")
        if self.dk1_demand.min() < 0 or self.dh_demand.min() < 0:
            out.append("negative demand profile")
        for i in range(1, len(self.timestamps)):
            if self.timestamps[i] - self.timestamps[i - 1] != HOUR:
                out.append(f"market timestamps not hourly at index {i}")
                break
        return out

    @classmethod
    def from_arrays(cls, spot, *, ng=0.0, emission=0.0, dk1_demand=1.0, dh_demand=0.0,
                    wind_cf=0.0, solar_cf=0.0, tariffs: Tariffs | None = None,
                    start="2030-01-01T00:00Z", year=None) -> "MarketSeries":
        spot = np.atleast_1d(np.asarray(spot, dtype=float))
        t0 = _parse_ts(start)
        stamps = tuple(t0 + i * HOUR for i in range(spot.size))
        return cls(stamps, spot, ng, emission, dk1_demand, dh_demand, wind_cf, solar_cf,
                   tariffs or Tariffs(), year)

    def select(self, idx: Sequence[int], contiguous: bool = True) -> "MarketSeries":
        """Sub-series at positions ``idx``; re-timed onto a contiguous hourly index."""
        idx = np.asarray(idx, dtype=int)
        if contiguous:
            t0 = self.timestamps[int(idx[0])]
            stamps = tuple(t0 + i * HOUR for i in range(idx.size))
        else:
            stamps = tuple(self.timestamps[i] for i in idx)
        kw = {k: getattr(self, k)[idx] for k in SERIES_FILES}
        return replace(self, timestamps=stamps, **kw)

    def with_tariffs(self, tariffs: Tariffs) -> "MarketSeries":
        return replace(self, tariffs=tariffs)


def load_market(data_dir: str | Path, year: int, tariffs: Tariffs | None = None,
                forward_fill: bool = False) -> MarketSeries:
    """Load the seven series of one price year from ``data_dir/<year>/``."""
    folder = Path(data_dir) / str(year)
    if not folder.is_dir():
        raise FileNotFoundError(f"no market data folder {folder}")
    paths = {k: folder / f for k, f in SERIES_FILES.items()}
    for p in paths.values():
        if not p.exists():
            raise FileNotFoundError(f"missing market file {p}")
    spot = load_series_csv(paths["spot"], "spot", forward_fill=forward_fill)
    start, n = spot.index[0].to_pydatetime(), len(spot)
    data = {"spot": spot.to_numpy()}
    for key, p in paths.items():
        if key == "spot":
            continue
        s = load_series_csv(p, key, forward_fill=forward_fill, start=start, hours=n)
        data[key] = s.to_numpy()
    stamps = tuple(ts.to_pydatetime() for ts in spot.index)
    market = MarketSeries(stamps, tariffs=tariffs or Tariffs(), year=year,
                          sources={k: file_digest(p) for k, p in paths.items()}, **data)
    problems = market.problems()
    if problems:
        raise SeriesError(f"{folder}: " + "; ".join(problems))
    return market


def representative_weeks(n_hours: int, weeks: Sequence[int] = DEFAULT_WEEKS) -> np.ndarray:
    """Hour positions of 1-based calendar weeks (168 h each), concatenated."""
    idx = []
    for w in weeks:
        lo = (int(w) - 1) * 168
        if lo + 168 > n_hours:
            raise ValueError(f"week {w} exceeds a {n_hours}-hour series")
        idx.extend(range(lo, lo + 168))
    return np.array(idx, dtype=int)


def slice_horizon(market: MarketSeries, hours: int | None = None,
                  weeks: Sequence[int] | None = None) -> MarketSeries:
    if hours is not None:
        return market.select(np.arange(hours))
    if weeks is not None:
        return market.select(representative_weeks(market.hours, weeks))
    return market


# ---------------------------------------------------------------------------
# price construction
# ---------------------------------------------------------------------------


def purchase_price(series: MarketSeries, co2_tax: float) -> np.ndarray:
    """Grid electricity purchase price per hour (EUR/MWh)."""
    return series.spot + series.tariffs.purchase + series.emission * co2_tax


def sale_price(series: MarketSeries) -> np.ndarray:
    """Grid electricity sale price per hour (EUR/MWh); may be negative."""
    return series.spot - series.tariffs.sale


def ng_price(series: MarketSeries, co2_tax: float) -> np.ndarray:
    """Natural gas purchase price per hour including the CO2 tax (EUR/MWh)."""
    return series.ng + series.tariffs.ng_emission * co2_tax


def dh_price() -> float:
    return DH_SALE_PRICE


def biochar_credit(co2_tax: float) -> float:
    """Credit per tonne of CO2 sequestered in biochar, equal to the CO2 tax."""
    return float(co2_tax)


def rfnbo_mask(spot, threshold: float = RFNBO_THRESHOLD) -> np.ndarray:
    """1.0 in hours with spot price at most ``threshold``, else 0.0."""
    return np.where(np.asarray(spot, dtype=float) <= threshold, 1.0, 0.0)


def external_demand(profile, max_re: float, *, ptx_electricity: float | None = None,
                    h2_demand: float = 0.0, meoh_demand: float = 0.0,
                    alpha_h2: float = 0.622, alpha_meoh: float | None = None) -> np.ndarray:
    """Scale ``profile`` so its sum equals ``max_re`` times the PtX electricity.

    The PtX electricity is either given directly or computed as
    ``h2_demand / alpha_h2 + meoh_demand / alpha_meoh`` (all in MWh over the
    horizon of ``profile``).

    Raises
    ------
    ValueError
        If the profile sums to zero or contains negative values.
    """
    profile = np.asarray(profile, dtype=float)
    if np.any(profile < 0):
        raise ValueError("demand profile has negative values")
    total = profile.sum()
    if not total > 0:
        raise ValueError("demand profile sums to zero")
    if ptx_electricity is None:
        ptx_electricity = h2_demand / alpha_h2
        if meoh_demand:
            if alpha_meoh is None:
                raise ValueError("alpha_meoh required when meoh_demand is non-zero")
            ptx_electricity += meoh_demand / alpha_meoh
    target = ptx_electricity * max_re
    return profile * (target / total)


# ---------------------------------------------------------------------------
# synthetic data
# ---------------------------------------------------------------------------

_YEAR_SHAPE = {
    # spot mean level, demand slope, wind slope, noise sd, autumn spike,
    # ng level, ng swing, emission level
    2019: dict(spot=44.0, dem=10.0, wind=60.0, sd=6.0, spike=0.0, ng=14.5, ngs=3.0, em=0.17),
    2022: dict(spot=215.0, dem=55.0, wind=300.0, sd=45.0, spike=160.0, ng=125.0, ngs=60.0, em=0.14),
}


def synthetic_market(year: int = 2019, seed: int = 0, hours: int = 8760,
                     tariffs: Tariffs | None = None) -> MarketSeries:
    """Deterministic synthetic year resembling a Danish onshore site.

    Spot prices fall with wind output and rise with demand; 2019-like years
    average roughly 40 EUR/MWh and 2022-like years roughly 200 EUR/MWh with
    a late-summer spike.  The series are for testing and demonstration only.
    """
    if year not in _YEAR_SHAPE:
        raise ValueError(f"no synthetic shape for year {year}")
    p = _YEAR_SHAPE[year]
    rng = np.random.default_rng(np.random.SeedSequence([seed, year]))
    t = np.arange(hours)
    doy = t / 24.0
    hod = t % 24
    season = np.cos(2 * np.pi * (doy - 15) / 365.0)  # +1 mid-January

    def ar1(phi, size):
        e = rng.standard_normal(size)
        out = np.empty(size)
        out[0] = e[0]
        k = math.sqrt(1 - phi * phi)
        for i in range(1, size):
            out[i] = phi * out[i - 1] + k * e[i]
        return out

    z = ar1(0.985, hours)
    wind = 1.0 / (1.0 + np.exp(-(1.5 * z + 0.45 * season - 0.55)))
    wind = np.clip(0.97 * wind ** 1.3, 0.0, 1.0)

    lat = math.radians(56.57)
    decl = np.radians(23.44) * np.sin(2 * np.pi * (284 + doy) / 365.0)
    omega = np.radians(15.0 * (hod + 0.5 - 11.4))
    sin_el = np.sin(lat) * np.sin(decl) + np.cos(lat) * np.cos(decl) * np.cos(omega)
    daily_cloud = np.repeat(np.clip(0.65 + 0.3 * ar1(0.6, hours // 24 + 1), 0.1, 1.0), 24)[:hours]
    solar = np.clip(0.8 * np.maximum(sin_el, 0.0) ** 1.15 * daily_cloud, 0.0, 1.0)

    weekday = (doy.astype(int) + 1) % 7  # 2019-01-01 was a Tuesday
    weekend = (weekday >= 5).astype(float)
    daily = np.exp(-((hod - 12.5) / 5.0) ** 2)
    dk1 = 2200 + 380 * season + 520 * daily - 230 * weekend + 60 * ar1(0.9, hours)
    dk1 = np.maximum(dk1, 800.0)
    dnorm = (dk1 - dk1.mean()) / dk1.std()

    spike = p["spike"] * np.exp(-(((doy - 235) / 30.0) ** 2))
    spot = (p["spot"] + p["dem"] * dnorm - p["wind"] * (wind - wind.mean()) + spike
            + p["sd"] * ar1(0.8, hours))
    spot = np.round(np.maximum(spot, -30.0), 2)

    ng_daily = p["ng"] + p["ngs"] * np.cos(2 * np.pi * (np.arange(hours // 24 + 1) - 20) / 365.0)
    ng_daily += 0.25 * p["ngs"] * ar1(0.95, ng_daily.size)
    ng_daily += 0.5 * p["spike"] * np.exp(-(((np.arange(ng_daily.size) - 235) / 30.0) ** 2))
    ng = np.round(np.repeat(np.maximum(ng_daily, 1.0), 24)[:hours], 2)

    em = np.clip(p["em"] - 0.2 * (wind - wind.mean()) + 0.01 * ar1(0.9, hours), 0.01, None)
    dh = np.maximum(14 + 9 * season + 2.5 * daily + 0.8 * ar1(0.9, hours), 2.0)

    start = datetime(year, 1, 1, tzinfo=timezone.utc)
    stamps = tuple(start + i * HOUR for i in range(hours))
    return MarketSeries(stamps, spot, ng, np.round(em, 4), np.round(dk1, 1), np.round(dh, 2),
                        np.round(wind, 4), np.round(solar, 4), tariffs or Tariffs(), year)


def write_market_csv(market: MarketSeries, folder: str | Path, ng_step_hours: int = 1) -> dict:
    """Write the seven series as ``timestamp,value`` files into ``folder``.

    ``ng_step_hours > 1`` writes the gas price at that coarser resolution.
    """
    folder = Path(folder)
    folder.mkdir(parents=True, exist_ok=True)
    stamps = [t.strftime("%Y-%m-%dT%H:%M:%SZ") for t in market.timestamps]
    written = {}
    for key, fname in SERIES_FILES.items():
        arr = getattr(market, key)
        step = ng_step_hours if key == "ng" else 1
        path = folder / fname
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["timestamp", "value"])
            for i in range(0, len(stamps), step):
                w.writerow([stamps[i], repr(float(arr[i]))])
        written[key] = path
    return written
