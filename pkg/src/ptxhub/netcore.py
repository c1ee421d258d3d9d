"""Multi-carrier network data model.

A :class:`Network` is a copper-plate collection of buses joined by
generators, multi-links, stores and loads over a fixed set of hourly
snapshots.  All objects are frozen once built; time series are stored as
read-only numpy arrays so a network can be shared between concurrent case
runs without copying.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, fields, replace
from datetime import datetime, timedelta, timezone
from types import MappingProxyType
from typing import Any, Iterable, Mapping, NamedTuple, Sequence, Union

import numpy as np

Series = Union[float, np.ndarray]

UNITS = ("MW", "t/h")
HOURS_PER_YEAR = 8760
_HOUR = timedelta(hours=1)


def _freeze(value):
    """Scalars become floats, sequences become read-only float arrays."""
    if value is None:
        return None
    if np.isscalar(value):
        return float(value)
    arr = np.array(value, dtype=float)
    if arr.ndim == 0:
        return float(arr)
    arr.setflags(write=False)
    return arr


def as_series(value: Series, n: int) -> np.ndarray:
    """Broadcast a scalar or length-``n`` array to a float array of length ``n``."""
    if np.isscalar(value):
        return np.full(n, float(value))
    arr = np.asarray(value, dtype=float)
    if arr.shape != (n,):
        raise ValueError(f"series has shape {arr.shape}, expected ({n},)")
    return arr


def _parse_time(value) -> datetime:
    if isinstance(value, datetime):
        ts = value
    else:
        text = str(value).strip()
        if text.endswith("Z"):
            text = text[:-1] + "+00:00"
        ts = datetime.fromisoformat(text)
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    return ts.astimezone(timezone.utc)


class Snapshots:
    """Ordered hourly instants in UTC.

    Construction accepts any sequence of timestamps; ordering and spacing are
    checked by :func:`validate_network` so that a malformed index shows up in
    the validation report instead of as an exception.
    """

    __slots__ = ("_stamps",)

    def __init__(self, timestamps: Iterable):
        self._stamps = tuple(_parse_time(t) for t in timestamps)

    @classmethod
    def hourly(cls, count: int, start="2030-01-01T00:00Z") -> "Snapshots":
        t0 = _parse_time(start)
        return cls(t0 + i * _HOUR for i in range(count))

    @property
    def timestamps(self) -> tuple[datetime, ...]:
        return self._stamps

    @property
    def count(self) -> int:
        return len(self._stamps)

    @property
    def horizon_weight(self) -> float:
        """Hours in a year per modelled hour (8760 / N)."""
        return HOURS_PER_YEAR / self.count

    @property
    def year_fraction(self) -> float:
        return self.count / HOURS_PER_YEAR

    def problems(self) -> list[str]:
        out = []
        if self.count < 1:
            out.append("snapshots are empty")
        for i in range(1, self.count):
            step = self._stamps[i] - self._stamps[i - 1]
            if step <= timedelta(0):
                out.append(f"snapshots not strictly increasing at index {i}")
                break
            if step != _HOUR:
                out.append(f"non-uniform snapshot spacing at index {i} ({step})")
                break
        return out

    def isoformat(self) -> list[str]:
        return [t.strftime("%Y-%m-%dT%H:%M:%SZ") for t in self._stamps]

    def __len__(self):
        return self.count

    def __iter__(self):
        return iter(self._stamps)

    def __getitem__(self, item):
        return self._stamps[item]

    def __eq__(self, other):
        return isinstance(other, Snapshots) and self._stamps == other._stamps

    def __hash__(self):
        return hash(self._stamps)

    def __repr__(self):
        if not self._stamps:
            return "Snapshots([])"
        return f"Snapshots({self.isoformat()[0]}, N={self.count})"


@dataclass(frozen=True)
class Carrier:
    name: str
    unit: str = "MW"


@dataclass(frozen=True)
class Bus:
    name: str
    carrier: str
    # optional explicit unit, must agree with the carrier's
    unit: str | None = None


@dataclass(frozen=True, eq=False)
class Generator:
    """Injects ``g_t`` into one bus, bounded by availability times capacity."""

    name: str
    bus: str
    extendable: bool = False
    fixed_capacity: float = 0.0
    capital_cost: float = 0.0
    marginal_cost: Series = 0.0
    availability_min: Series = 0.0
    availability_max: Series = 1.0
    potential: float | None = None
    ramp_up: float | None = None
    ramp_down: float | None = None
    group: str | None = None

    def __post_init__(self):
        for name in ("marginal_cost", "availability_min", "availability_max"):
            object.__setattr__(self, name, _freeze(getattr(self, name)))


@dataclass(frozen=True, eq=False)
class MultiLink:
    """Conversion process with one flow variable ``f_t`` measured on the input bus.

    The input bus receives ``-input_ratio * f_t``; every output bus receives
    ``efficiency * f_t`` where a negative efficiency denotes an additional
    input.  ``input_ratio`` lets the flow be expressed in the unit of a
    product (e.g. MW of methanol) while still drawing from a feed bus.
    """

    name: str
    input_bus: str
    outputs: tuple[tuple[str, Series], ...] = ()
    input_ratio: float = 1.0
    extendable: bool = False
    fixed_capacity: float = 0.0
    capital_cost: float = 0.0
    marginal_cost: Series = 0.0
    availability_min: Series = 0.0
    availability_max: Series = 1.0
    potential: float | None = None
    ramp_up: float | None = None
    ramp_down: float | None = None
    min_load: float = 0.0
    capacity_min: float = 0.0
    # semi-continuous threshold: capacity is either 0 or >= min_build
    min_build: float = 0.0
    # (store name, rate per hour): capacity <= rate * store energy capacity
    store_rate: tuple[str, float] | None = None
    group: str | None = None

    def __post_init__(self):
        outs = tuple((str(bus), _freeze(eff)) for bus, eff in self.outputs)
        object.__setattr__(self, "outputs", outs)
        for name in ("marginal_cost", "availability_min", "availability_max"):
            object.__setattr__(self, name, _freeze(getattr(self, name)))
        if self.store_rate is not None:
            store, rate = self.store_rate
            object.__setattr__(self, "store_rate", (str(store), float(rate)))


@dataclass(frozen=True, eq=False)
class Store:
    name: str
    bus: str
    extendable: bool = False
    fixed_capacity: float = 0.0
    capital_cost: float = 0.0
    potential: float | None = None
    cyclic: bool = True
    standing_loss: float = 0.0
    group: str | None = None


@dataclass(frozen=True, eq=False)
class Load:
    """Either a fixed hourly series (``series``) or an annual total (``annual_total``)."""

    name: str
    bus: str
    series: Series | None = None
    annual_total: float | None = None

    def __post_init__(self):
        if (self.series is None) == (self.annual_total is None):
            raise ValueError(f"load {self.name!r} needs exactly one of series/annual_total")
        object.__setattr__(self, "series", _freeze(self.series))
        if self.annual_total is not None:
            object.__setattr__(self, "annual_total", float(self.annual_total))

    @property
    def kind(self) -> str:
        return "annual_total" if self.annual_total is not None else "fixed_series"


class Violation(NamedTuple):
    code: str
    subject: str
    message: str

    def __str__(self):
        return f"{self.subject}: {self.message}"


class BalanceTerm(NamedTuple):
    """One term a component places in a bus balance row.

    ``variable`` is one of ``dispatch`` (generator), ``flow`` (link),
    ``delivery`` (annual load), ``level`` and ``level_prev`` (store).
    ``coefficient`` is a non-negative magnitude (scalar or per-snapshot).
    """

    component: str
    variable: str
    sign: int
    coefficient: Series

    @property
    def signed(self) -> Series:
        return self.sign * self.coefficient


class Network:
    """Immutable container of carriers, buses and components."""

    def __init__(
        self,
        snapshots: Snapshots,
        carriers: Sequence[Carrier] = (),
        buses: Sequence[Bus] = (),
        generators: Sequence[Generator] = (),
        links: Sequence[MultiLink] = (),
        stores: Sequence[Store] = (),
        loads: Sequence[Load] = (),
        meta: Mapping[str, Any] | None = None,
    ):
        self.snapshots = snapshots
        self.carriers = tuple(carriers)
        self.buses = tuple(buses)
        self.generators = tuple(generators)
        self.links = tuple(links)
        self.stores = tuple(stores)
        self.loads = tuple(loads)
        self.meta = MappingProxyType(dict(meta or {}))
        self._index = {}
        for comp in self.components():
            self._index.setdefault(comp.name, comp)
        self._bus_index = {}
        for bus in self.buses:
            self._bus_index.setdefault(bus.name, bus)
        self._carrier_index = {}
        for c in self.carriers:
            self._carrier_index.setdefault(c.name, c)
        self._frozen = True

    def __setattr__(self, key, value):
        if getattr(self, "_frozen", False):
            raise AttributeError("Network is immutable")
        super().__setattr__(key, value)

    @property
    def n_snapshots(self) -> int:
        return self.snapshots.count

    def components(self):
        yield from self.generators
        yield from self.links
        yield from self.stores
        yield from self.loads

    def component(self, name: str):
        return self._index[name]

    def bus(self, name: str) -> Bus:
        return self._bus_index[name]

    def carrier(self, name: str) -> Carrier:
        return self._carrier_index[name]

    def has_bus(self, name: str) -> bool:
        return name in self._bus_index

    def has_component(self, name: str) -> bool:
        return name in self._index

    def store_on_bus(self, bus: str) -> Store | None:
        for st in self.stores:
            if st.bus == bus:
                return st
        return None

    def fixed_load(self, bus: str) -> np.ndarray:
        """Sum of fixed-series loads on ``bus`` (the balance right-hand side)."""
        n = self.n_snapshots
        total = np.zeros(n)
        for ld in self.loads:
            if ld.bus == bus and ld.series is not None:
                total += as_series(ld.series, n)
        return total

    def replace_component(self, name: str, **changes) -> "Network":
        """Return a copy with one component's fields changed."""
        def swap(seq):
            return [replace(c, **changes) if c.name == name else c for c in seq]

        if name not in self._index:
            raise KeyError(name)
        return build_network(
            self.snapshots, self.carriers, self.buses, swap(self.generators),
            swap(self.links), swap(self.stores), swap(self.loads), self.meta,
        )

    def __repr__(self):
        return (
            f"Network(N={self.n_snapshots}, buses={len(self.buses)}, "
            f"generators={len(self.generators)}, links={len(self.links)}, "
            f"stores={len(self.stores)}, loads={len(self.loads)})"
        )


def build_network(snapshots, carriers=(), buses=(), generators=(), links=(),
                  stores=(), loads=(), meta=None) -> Network:
    """Construct and freeze a :class:`Network`."""
    return Network(snapshots, carriers, buses, generators, links, stores, loads, meta)


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------


def _check_range(arr, lo, hi, subject, label, out):
    arr = np.atleast_1d(np.asarray(arr, dtype=float))
    if not np.all(np.isfinite(arr)):
        out.append(Violation("non_finite", subject, f"{label} not finite"))
        return
    if arr.min() < lo:
        out.append(Violation("out_of_range", subject, f"{label} < {lo:g}"))
    if arr.max() > hi:
        out.append(Violation("out_of_range", subject, f"{label} > {hi:g}"))


def _check_length(value, n, subject, label, out):
    if value is not None and not np.isscalar(value) and np.shape(value) != (n,):
        out.append(Violation("bad_length", subject, f"{label} has length {np.size(value)}, expected {n}"))
        return False
    return True


def validate_network(network: Network) -> list[Violation]:
    """Return every structural problem found; an empty list means valid."""
    out: list[Violation] = []
    n = network.n_snapshots
    for msg in network.snapshots.problems():
        out.append(Violation("snapshots", "snapshots", msg))

    seen = set()
    for c in network.carriers:
        if c.name in seen:
            out.append(Violation("duplicate", c.name, "duplicate carrier name"))
        seen.add(c.name)
        if c.unit not in UNITS:
            out.append(Violation("unit", c.name, f"unknown unit {c.unit!r}"))

    seen = set()
    for b in network.buses:
        if b.name in seen:
            out.append(Violation("duplicate", b.name, "duplicate bus name"))
        seen.add(b.name)
        if b.carrier not in network._carrier_index:
            out.append(Violation("unknown_carrier", b.name, f"unknown carrier {b.carrier!r}"))
        elif b.unit is not None and b.unit != network.carrier(b.carrier).unit:
            out.append(Violation(
                "unit_mismatch", b.name,
                f"carrier-unit mismatch: bus unit {b.unit!r} vs carrier {b.carrier!r} "
                f"in {network.carrier(b.carrier).unit!r}",
            ))

    seen = set()
    for comp in network.components():
        if comp.name in seen:
            out.append(Violation("duplicate", comp.name, "duplicate component name"))
        seen.add(comp.name)

    def bus_ref(bus, subject):
        if bus not in network._bus_index:
            out.append(Violation("unknown_bus", subject, f"unknown bus {bus!r}"))

    def capacity_fields(comp):
        if comp.capital_cost < 0:
            out.append(Violation("negative_cost", comp.name, "capital_cost < 0"))
        if not comp.extendable:
            if not comp.fixed_capacity >= 0:
                out.append(Violation("negative_capacity", comp.name, "fixed_capacity < 0"))
        if comp.potential is not None and comp.potential < 0:
            out.append(Violation("negative_capacity", comp.name, "potential < 0"))

    def ramp_fields(comp):
        for label in ("ramp_up", "ramp_down"):
            r = getattr(comp, label)
            if r is not None and not r >= 0:
                out.append(Violation("out_of_range", comp.name, f"{label} < 0"))
        if (
            not comp.extendable and math.isinf(comp.fixed_capacity)
            and (comp.ramp_up is not None or comp.ramp_down is not None)
        ):
            out.append(Violation("unbounded", comp.name, "ramp limit on unbounded capacity"))

    for g in network.generators:
        bus_ref(g.bus, g.name)
        capacity_fields(g)
        ramp_fields(g)
        ok = all(_check_length(getattr(g, f), n, g.name, f, out)
                 for f in ("marginal_cost", "availability_min", "availability_max"))
        _check_range(g.availability_min, 0.0, 1.0, g.name, "availability_min", out)
        _check_range(g.availability_max, 0.0, 1.0, g.name, "availability", out)
        if ok and np.any(as_series(g.availability_min, n) > as_series(g.availability_max, n)):
            out.append(Violation("out_of_range", g.name, "availability_min > availability_max"))
        unbounded = not g.extendable and math.isinf(g.fixed_capacity)
        if ok and unbounded and np.any(as_series(g.availability_min, n) > 0):
            out.append(Violation("unbounded", g.name, "positive availability_min on unbounded capacity"))

    store_names = {s.name for s in network.stores}
    for lk in network.links:
        bus_ref(lk.input_bus, lk.name)
        for bus, eff in lk.outputs:
            bus_ref(bus, lk.name)
            if not _check_length(eff, n, lk.name, f"efficiency to {bus}", out):
                continue
            arr = np.atleast_1d(np.asarray(eff, dtype=float))
            if not np.all(np.isfinite(arr)):
                out.append(Violation("non_finite", lk.name, f"efficiency to {bus} not finite"))
            elif arr.min() < 0 < arr.max():
                out.append(Violation("sign_change", lk.name, f"efficiency to {bus} changes sign"))
        if not lk.input_ratio > 0:
            out.append(Violation("out_of_range", lk.name, "input_ratio <= 0"))
        capacity_fields(lk)
        ramp_fields(lk)
        ok = all(_check_length(getattr(lk, f), n, lk.name, f, out)
                 for f in ("marginal_cost", "availability_min", "availability_max"))
        _check_range(lk.availability_min, -1.0, 1.0, lk.name, "availability_min", out)
        _check_range(lk.availability_max, 0.0, 1.0, lk.name, "availability", out)
        if ok and np.any(as_series(lk.availability_min, n) > as_series(lk.availability_max, n)):
            out.append(Violation("out_of_range", lk.name, "availability_min > availability_max"))
        if not 0.0 <= lk.min_load < 1.0:
            out.append(Violation("out_of_range", lk.name, "min_load >= 1" if lk.min_load >= 1 else "min_load < 0"))
        if lk.capacity_min < 0 or lk.min_build < 0:
            out.append(Violation("out_of_range", lk.name, "negative capacity_min/min_build"))
        if not lk.extendable and math.isinf(lk.fixed_capacity):
            if lk.min_load > 0 or (ok and np.any(as_series(lk.availability_min, n) != 0)):
                out.append(Violation("unbounded", lk.name, "lower availability on unbounded capacity"))
        if lk.store_rate is not None:
            st, rate = lk.store_rate
            if st not in store_names:
                out.append(Violation("unknown_store", lk.name, f"unknown store {st!r}"))
            if not rate > 0:
                out.append(Violation("out_of_range", lk.name, "store rate <= 0"))
            if not lk.extendable and math.isinf(lk.fixed_capacity):
                out.append(Violation("unbounded", lk.name, "store rate on unbounded capacity"))

    per_bus = {}
    for st in network.stores:
        bus_ref(st.bus, st.name)
        capacity_fields(st)
        if not 0.0 <= st.standing_loss < 1.0:
            out.append(Violation("out_of_range", st.name, "standing_loss outside [0, 1)"))
        if not st.extendable and math.isinf(st.fixed_capacity):
            out.append(Violation("unbounded", st.name, "store energy capacity must be finite"))
        if st.bus in per_bus:
            out.append(Violation("store_bus", st.name, f"bus {st.bus!r} already hosts store {per_bus[st.bus]!r}"))
        per_bus.setdefault(st.bus, st.name)

    for ld in network.loads:
        bus_ref(ld.bus, ld.name)
        if ld.series is not None:
            if _check_length(ld.series, n, ld.name, "series", out):
                _check_range(ld.series, 0.0, math.inf, ld.name, "load series", out)
        elif not ld.annual_total >= 0:
            out.append(Violation("out_of_range", ld.name, "annual_total < 0"))
    return out


class NetworkError(ValueError):
    def __init__(self, violations: Sequence[Violation]):
        self.violations = list(violations)
        lines = "\n  ".join(str(v) for v in self.violations)
        super().__init__(f"{len(self.violations)} network violation(s):\n  {lines}")


# ---------------------------------------------------------------------------
# balance signature
# ---------------------------------------------------------------------------


def _term(component, variable, value) -> BalanceTerm:
    if np.isscalar(value):
        sign = -1 if value < 0 else 1
        return BalanceTerm(component, variable, sign, abs(float(value)))
    arr = np.asarray(value, dtype=float)
    sign = -1 if arr.min() < 0 else 1
    return BalanceTerm(component, variable, sign, np.abs(arr))


def carrier_balance_signature(network: Network, bus: str) -> list[BalanceTerm]:
    """List the terms the nodal balance of ``bus`` contains, with their signs.

    Terms are ordered generators, links, annual-load deliveries, store levels,
    each group sorted by component name.  Fixed-series loads are right-hand
    side data and therefore not listed.
    """
    if not network.has_bus(bus):
        raise KeyError(f"unknown bus {bus!r}")
    terms: list[BalanceTerm] = []
    for g in sorted(network.generators, key=lambda c: c.name):
        if g.bus == bus:
            terms.append(BalanceTerm(g.name, "dispatch", 1, 1.0))
    for lk in sorted(network.links, key=lambda c: c.name):
        coef: Series = 0.0
        touched = False
        if lk.input_bus == bus:
            coef = -lk.input_ratio
            touched = True
        for out_bus, eff in lk.outputs:
            if out_bus == bus:
                coef = coef + eff
                touched = True
        if touched:
            terms.append(_term(lk.name, "flow", coef))
    for ld in sorted(network.loads, key=lambda c: c.name):
        if ld.bus == bus and ld.annual_total is not None:
            terms.append(BalanceTerm(ld.name, "delivery", -1, 1.0))
    for st in sorted(network.stores, key=lambda c: c.name):
        if st.bus == bus:
            terms.append(BalanceTerm(st.name, "level", -1, 1.0))
            terms.append(BalanceTerm(st.name, "level_prev", 1, 1.0 - st.standing_loss))
    return terms


def annual_demand_total(load: Load, snapshots: Snapshots) -> float:
    """Annual demand prorated to the modelled horizon, ``D * N / 8760``."""
    if load.annual_total is None:
        raise ValueError(f"load {load.name!r} is a fixed series, not an annual total")
    return load.annual_total * snapshots.count / HOURS_PER_YEAR


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------


def _plain(value):
    if isinstance(value, np.ndarray):
        return [float(v) for v in value]
    if isinstance(value, float) and math.isinf(value):
        return "inf" if value > 0 else "-inf"
    if isinstance(value, tuple):
        return [_plain(v) for v in value]
    return value


def _unplain(value):
    if value == "inf":
        return math.inf
    if value == "-inf":
        return -math.inf
    return value


def _record(obj) -> dict:
    return {f.name: _plain(getattr(obj, f.name)) for f in fields(obj)}


def network_to_dict(network: Network) -> dict:
    return {
        "schema": "ptxhub.network/1",
        "snapshots": network.snapshots.isoformat(),
        "carriers": [_record(c) for c in network.carriers],
        "buses": [_record(b) for b in network.buses],
        "generators": [_record(g) for g in network.generators],
        "links": [_record(lk) for lk in network.links],
        "stores": [_record(s) for s in network.stores],
        "loads": [_record(ld) for ld in network.loads],
        "meta": {k: _plain(v) for k, v in network.meta.items()},
    }


def network_from_dict(data: Mapping) -> Network:
    def load(cls, rec):
        kw = {k: _unplain(v) for k, v in rec.items()}
        if cls is MultiLink:
            kw["outputs"] = tuple((b, e) for b, e in kw.get("outputs", ()))
            if kw.get("store_rate") is not None:
                kw["store_rate"] = tuple(kw["store_rate"])
        return cls(**kw)

    return build_network(
        Snapshots(data["snapshots"]),
        [load(Carrier, r) for r in data.get("carriers", ())],
        [load(Bus, r) for r in data.get("buses", ())],
        [load(Generator, r) for r in data.get("generators", ())],
        [load(MultiLink, r) for r in data.get("links", ())],
        [load(Store, r) for r in data.get("stores", ())],
        [load(Load, r) for r in data.get("loads", ())],
        data.get("meta"),
    )


def dumps(network: Network, indent: int | None = 1) -> str:
    return json.dumps(network_to_dict(network), indent=indent, sort_keys=True)


def loads(text: str) -> Network:
    return network_from_dict(json.loads(text))
