"""Compile a :class:`~ptxhub.netcore.Network` into a sparse linear program.

Columns
    ``cap.<component>``          capacity of an extendable component
    ``gen.<generator>.<t>``      generator dispatch
    ``flow.<link>.<t>``          link flow measured on its input bus
    ``lvl.<store>.<t>``          store level at the end of snapshot ``t``
    ``dlv.<load>.<t>``           delivery to an annual-total load

Rows are grouped as nodal balances (one per bus and snapshot, in bus-name
order), then component rows in component-name order, then one annual-demand
row per annual load.  A bus that hosts a store carries the store's state
equation in its balance row, which is therefore tagged ``store_continuity``.

Sign convention of all duals: ``dual = d objective / d rhs``.
"""
from __future__ import annotations

import hashlib
import math
import warnings
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
import scipy.sparse as sp

from .netcore import (
    HOURS_PER_YEAR,
    Generator,
    Load,
    MultiLink,
    Network,
    NetworkError,
    Snapshots,
    Store,
    annual_demand_total,
    as_series,
    validate_network,
)

EQ, LE, GE = "=", "<=", ">="

ROW_KINDS = (
    "nodal_balance",
    "store_continuity",
    "gen_upper",
    "gen_lower",
    "link_upper",
    "link_lower",
    "store_bounds",
    "ramp_up",
    "ramp_down",
    "potential",
    "store_rate",
    "annual_demand",
)


class RowTag(NamedTuple):
    """Semantic home of a row.

    ``subject`` is the bus for ``nodal_balance`` rows and the component name
    otherwise; ``bus`` is set for both balance-type kinds.
    """

    kind: str
    subject: str
    snapshot: int | None = None
    bus: str | None = None


class ColTag(NamedTuple):
    kind: str  # capacity | dispatch | flow | level | delivery
    component: str
    snapshot: int | None = None


class LpInfeasibleWarning(UserWarning):
    pass


@dataclass(eq=False)
class LpProblem:
    """Minimise ``obj @ x + obj_constant`` subject to ``A x (sense) rhs`` and bounds."""

    col_names: list[str]
    col_lower: np.ndarray
    col_upper: np.ndarray
    obj: np.ndarray
    row_names: list[str]
    row_sense: np.ndarray
    rhs: np.ndarray
    A: sp.csr_matrix
    row_tags: list[RowTag] = field(default_factory=list)
    col_tags: list[ColTag] = field(default_factory=list)
    obj_constant: float = 0.0
    horizon: int | None = None

    def __post_init__(self):
        self._col_index = None
        self._row_index = None

    @property
    def n_cols(self) -> int:
        return len(self.col_names)

    @property
    def n_rows(self) -> int:
        return len(self.row_names)

    @property
    def col_index(self) -> dict[str, int]:
        if self._col_index is None:
            self._col_index = {n: i for i, n in enumerate(self.col_names)}
        return self._col_index

    @property
    def row_index(self) -> dict[str, int]:
        if self._row_index is None:
            self._row_index = {n: i for i, n in enumerate(self.row_names)}
        return self._row_index

    def triplets(self):
        """Return ``(row, col, value)`` arrays of the constraint matrix."""
        coo = self.A.tocoo()
        return coo.row, coo.col, coo.data

    def rows_of_kind(self, kind: str) -> np.ndarray:
        return np.array([i for i, t in enumerate(self.row_tags) if t.kind == kind], dtype=int)

    def check(self) -> list[str]:
        """Structural self-check; an empty list means consistent."""
        out = []
        if len(set(self.col_names)) != self.n_cols:
            out.append("duplicate column names")
        if len(set(self.row_names)) != self.n_rows:
            out.append("duplicate row names")
        if self.A.shape != (self.n_rows, self.n_cols):
            out.append(f"matrix shape {self.A.shape} != ({self.n_rows}, {self.n_cols})")
        if np.any(self.col_lower > self.col_upper):
            out.append("column lower bound above upper bound")
        if len(self.row_tags) != self.n_rows:
            out.append("untagged rows")
        bad = set(np.unique(self.row_sense)) - {EQ, LE, GE}
        if bad:
            out.append(f"unknown row senses {sorted(bad)}")
        return out

    def fingerprint(self) -> str:
        """SHA-256 over names, bounds, costs, senses, right-hand sides and matrix."""
        h = hashlib.sha256()
        A = self.A.tocsr()
        A.sort_indices()
        for part in (
            "\n".join(self.col_names).encode(),
            "\n".join(self.row_names).encode(),
            "".join(self.row_sense.tolist()).encode(),
        ):
            h.update(part)
            h.update(b"\0")
        for arr in (self.col_lower, self.col_upper, self.obj, self.rhs, A.data):
            h.update(np.ascontiguousarray(arr, dtype="<f8").tobytes())
        for arr in (A.indptr, A.indices):
            h.update(np.ascontiguousarray(arr, dtype="<i8").tobytes())
        h.update(repr(float(self.obj_constant)).encode())
        return h.hexdigest()


# ---------------------------------------------------------------------------
# builder
# ---------------------------------------------------------------------------


def _sorted(components):
    return sorted(components, key=lambda c: c.name)


def _all_sorted(network: Network):
    return sorted(network.components(), key=lambda c: c.name)


def _has_capacity(comp) -> bool:
    """True when the component is capacity-limited (extendable or finite fixed)."""
    return comp.extendable or math.isfinite(comp.fixed_capacity)


class _Builder:
    def __init__(self, network: Network, snapshots: Snapshots):
        self.net = network
        self.snap = snapshots
        self.n = snapshots.count
        self.cap_scale = self.n / HOURS_PER_YEAR
        self.col_names: list[str] = []
        self.col_tags: list[ColTag] = []
        self.lo: list[np.ndarray] = []
        self.hi: list[np.ndarray] = []
        self.cost: list[np.ndarray] = []
        self.ncol = 0
        self.cap_col: dict[str, int] = {}
        self.series_col: dict[str, int] = {}  # first of N consecutive columns
        self.row_names: list[str] = []
        self.row_tags: list[RowTag] = []
        self.sense: list[str] = []
        self.rhs: list[np.ndarray] = []
        self.nrow = 0
        self.ti: list[np.ndarray] = []
        self.tj: list[np.ndarray] = []
        self.tv: list[np.ndarray] = []
        # constant cost terms declared on the network (e.g. a reference-operation credit)
        self.obj_constant = float(network.meta.get("objective_offset", 0.0))

    # columns -------------------------------------------------------------
    def _add_cols(self, names, tags, lo, hi, cost):
        k = len(names)
        start = self.ncol
        self.col_names.extend(names)
        self.col_tags.extend(tags)
        self.lo.append(np.broadcast_to(np.asarray(lo, float), (k,)).copy())
        self.hi.append(np.broadcast_to(np.asarray(hi, float), (k,)).copy())
        self.cost.append(np.broadcast_to(np.asarray(cost, float), (k,)).copy())
        self.ncol += k
        return start

    def _series_cols(self, prefix, kind, name, lo, hi, cost):
        n = self.n
        names = [f"{prefix}.{name}.{t}" for t in range(n)]
        tags = [ColTag(kind, name, t) for t in range(n)]
        self.series_col[name] = self._add_cols(names, tags, lo, hi, cost)

    def build_columns(self):
        n = self.n
        for comp in _all_sorted(self.net):
            if isinstance(comp, Load):
                if comp.annual_total is not None:
                    self._series_cols("dlv", "delivery", comp.name, 0.0, np.inf, 0.0)
                continue
            if comp.extendable:
                lo = getattr(comp, "capacity_min", 0.0)
                self.cap_col[comp.name] = self._add_cols(
                    [f"cap.{comp.name}"], [ColTag("capacity", comp.name)],
                    lo, np.inf, comp.capital_cost * self.cap_scale,
                )
            elif math.isfinite(comp.fixed_capacity):
                self.obj_constant += comp.capital_cost * self.cap_scale * comp.fixed_capacity
            if isinstance(comp, Store):
                self._series_cols("lvl", "level", comp.name, 0.0, np.inf, 0.0)
                continue
            amax = as_series(comp.availability_max, n)
            amin = as_series(comp.availability_min, n)
            hi = np.where(amax == 0.0, 0.0, np.inf)
            lo = np.where(amin < 0.0, -np.inf, 0.0)
            cost = as_series(comp.marginal_cost, n)
            if isinstance(comp, Generator):
                self._series_cols("gen", "dispatch", comp.name, lo, hi, cost)
            else:
                self._series_cols("flow", "flow", comp.name, lo, hi, cost)

    # rows ----------------------------------------------------------------
    def _add_rows(self, names, tags, sense, rhs):
        k = len(names)
        start = self.nrow
        self.row_names.extend(names)
        self.row_tags.extend(tags)
        self.sense.extend([sense] * k)
        self.rhs.append(np.broadcast_to(np.asarray(rhs, float), (k,)).copy())
        self.nrow += k
        return start

    def _entries(self, rows, cols, vals):
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.broadcast_to(np.asarray(cols, dtype=np.int64), rows.shape)
        vals = np.broadcast_to(np.asarray(vals, dtype=float), rows.shape)
        self.ti.append(rows)
        self.tj.append(cols.copy())
        self.tv.append(vals.copy())

    def _per_t_rows(self, kind, comp_name, sense, rhs, ts=None):
        ts = np.arange(self.n) if ts is None else ts
        names = [f"{kind}.{comp_name}.{t}" for t in ts]
        tags = [RowTag(kind, comp_name, int(t)) for t in ts]
        return self._add_rows(names, tags, sense, rhs), ts

    def emit_nodal_balance(self):
        net, n = self.net, self.n
        hosts = {st.bus: st for st in net.stores}
        terms: dict[str, list] = {b.name: [] for b in net.buses}
        for g in _sorted(net.generators):
            terms[g.bus].append((self.series_col[g.name], 1.0))
        for lk in _sorted(net.links):
            coef: dict[str, np.ndarray] = {}
            coef[lk.input_bus] = np.full(n, -lk.input_ratio)
            for bus, eff in lk.outputs:
                coef[bus] = coef.get(bus, 0.0) + as_series(eff, n)
            for bus, c in coef.items():
                terms[bus].append((self.series_col[lk.name], c))
        for ld in _sorted(net.loads):
            if ld.annual_total is not None:
                terms[ld.bus].append((self.series_col[ld.name], -1.0))
        t = np.arange(n)
        for bus in sorted(terms):
            rhs = net.fixed_load(bus)
            st = hosts.get(bus)
            if st is None:
                names = [f"balance.{bus}.{k}" for k in t]
                tags = [RowTag("nodal_balance", bus, int(k), bus) for k in t]
            else:
                names = [f"continuity.{st.name}.{k}" for k in t]
                tags = [RowTag("store_continuity", st.name, int(k), bus) for k in t]
            r0 = self._add_rows(names, tags, EQ, rhs)
            for c0, c in terms[bus]:
                self._entries(r0 + t, c0 + t, c)
            if st is not None:
                c0 = self.series_col[st.name]
                self._entries(r0 + t, c0 + t, -1.0)
                keep = 1.0 - st.standing_loss
                if st.cyclic:
                    self._entries(r0 + t, c0 + (t - 1) % n, keep)
                elif n > 1:
                    self._entries(r0 + t[1:], c0 + t[:-1], keep)
            if not terms[bus] and st is None and np.any(rhs != 0):
                warnings.warn(
                    f"bus {bus!r} has no attached components but nonzero demand; "
                    "the problem is infeasible",
                    LpInfeasibleWarning,
                    stacklevel=3,
                )

    def _bound_pair(self, comp, kind_hi, kind_lo, coef_hi, coef_lo):
        """Emit ``x - coef_hi*C <= 0`` and ``x - coef_lo*C >= 0`` per snapshot."""
        t = np.arange(self.n)
        x0 = self.series_col[comp.name]
        if comp.extendable:
            cap = self.cap_col[comp.name]
            r, _ = self._per_t_rows(kind_hi, comp.name, LE, 0.0)
            self._entries(r + t, x0 + t, 1.0)
            self._entries(r + t, cap, -coef_hi)
            r, _ = self._per_t_rows(kind_lo, comp.name, GE, 0.0)
            self._entries(r + t, x0 + t, 1.0)
            self._entries(r + t, cap, -coef_lo)
        else:
            C = comp.fixed_capacity
            r, _ = self._per_t_rows(kind_hi, comp.name, LE, coef_hi * C)
            self._entries(r + t, x0 + t, 1.0)
            r, _ = self._per_t_rows(kind_lo, comp.name, GE, coef_lo * C)
            self._entries(r + t, x0 + t, 1.0)

    def _ramp(self, comp, lower_avail):
        n = self.n
        if n < 2:
            return
        x0 = self.series_col[comp.name]
        t = np.arange(1, n)
        bidirectional = bool(np.any(lower_avail < 0))
        for kind, rate, sense, sign in (
            ("ramp_up", comp.ramp_up, LE, -1.0),
            ("ramp_down", comp.ramp_down, GE, 1.0),
        ):
            if rate is None or (rate >= 1.0 and not bidirectional):
                continue
            if comp.extendable:
                r, _ = self._per_t_rows(kind, comp.name, sense, 0.0, ts=t)
                self._entries(r + t - 1, self.cap_col[comp.name], sign * rate)
            else:
                r, _ = self._per_t_rows(kind, comp.name, sense, -sign * rate * comp.fixed_capacity, ts=t)
            self._entries(r + t - 1, x0 + t, 1.0)
            self._entries(r + t - 1, x0 + t - 1, -1.0)

    def _potential(self, comp):
        if comp.extendable and comp.potential is not None:
            r = self._add_rows([f"potential.{comp.name}"], [RowTag("potential", comp.name)], LE, comp.potential)
            self._entries([r], self.cap_col[comp.name], 1.0)

    def _store_rate(self, lk: MultiLink):
        if lk.store_rate is None:
            return
        st_name, rate = lk.store_rate
        st = self.net.component(st_name)
        if not lk.extendable and not st.extendable:
            return
        name = f"store_rate.{lk.name}"
        tag = RowTag("store_rate", lk.name)
        rhs = 0.0
        if not st.extendable:
            rhs += rate * st.fixed_capacity
        if not lk.extendable:
            rhs -= lk.fixed_capacity
        r = self._add_rows([name], [tag], LE, rhs)
        if lk.extendable:
            self._entries([r], self.cap_col[lk.name], 1.0)
        if st.extendable:
            self._entries([r], self.cap_col[st.name], -rate)

    def emit_component_rows(self):
        n = self.n
        for comp in _all_sorted(self.net):
            if isinstance(comp, Load):
                continue
            if isinstance(comp, Store):
                t = np.arange(n)
                x0 = self.series_col[comp.name]
                if comp.extendable:
                    r, _ = self._per_t_rows("store_bounds", comp.name, LE, 0.0)
                    self._entries(r + t, x0 + t, 1.0)
                    self._entries(r + t, self.cap_col[comp.name], -1.0)
                else:
                    r, _ = self._per_t_rows("store_bounds", comp.name, LE, comp.fixed_capacity)
                    self._entries(r + t, x0 + t, 1.0)
                self._potential(comp)
                continue
            amax = as_series(comp.availability_max, n)
            amin = as_series(comp.availability_min, n)
            if isinstance(comp, MultiLink):
                lower = np.maximum(amin, comp.min_load)
                kinds = ("link_upper", "link_lower")
            else:
                lower = amin
                kinds = ("gen_upper", "gen_lower")
            if _has_capacity(comp):
                self._bound_pair(comp, kinds[0], kinds[1], amax, lower)
                self._ramp(comp, amin)
            self._potential(comp)
            if isinstance(comp, MultiLink):
                self._store_rate(comp)

    def emit_annual_demand(self):
        t = np.arange(self.n)
        for ld in _sorted(self.net.loads):
            if ld.annual_total is None:
                continue
            total = annual_demand_total(ld, self.snap)
            r = self._add_rows([f"annual.{ld.name}"], [RowTag("annual_demand", ld.name)], EQ, total)
            self._entries(np.full(self.n, r), self.series_col[ld.name] + t, 1.0)

    def finish(self) -> LpProblem:
        rows = np.concatenate(self.ti) if self.ti else np.zeros(0, np.int64)
        cols = np.concatenate(self.tj) if self.tj else np.zeros(0, np.int64)
        vals = np.concatenate(self.tv) if self.tv else np.zeros(0)
        keep = vals != 0.0
        A = sp.csr_matrix((vals[keep], (rows[keep], cols[keep])), shape=(self.nrow, self.ncol))
        A.sum_duplicates()
        A.sort_indices()
        cat = lambda parts: np.concatenate(parts) if parts else np.zeros(0)  # noqa: E731
        return LpProblem(
            col_names=self.col_names,
            col_lower=cat(self.lo),
            col_upper=cat(self.hi),
            obj=cat(self.cost),
            row_names=self.row_names,
            row_sense=np.array(self.sense, dtype="<U2"),
            rhs=cat(self.rhs),
            A=A,
            row_tags=self.row_tags,
            col_tags=self.col_tags,
            obj_constant=self.obj_constant,
            horizon=self.n,
        )


def _check_snapshots(network: Network, snapshots: Snapshots | None) -> Snapshots:
    if snapshots is None:
        return network.snapshots
    if snapshots != network.snapshots:
        raise ValueError("snapshots differ from the network's snapshot index")
    return snapshots


def build_columns(network: Network, snapshots: Snapshots | None = None) -> list[str]:
    """Names of all decision columns, in problem order."""
    b = _Builder(network, _check_snapshots(network, snapshots))
    b.build_columns()
    return list(b.col_names)


def _partial(network, snapshots, *steps) -> LpProblem:
    b = _Builder(network, _check_snapshots(network, snapshots))
    b.build_columns()
    for step in steps:
        getattr(b, step)()
    return b.finish()


def emit_nodal_balance(network: Network, snapshots: Snapshots | None = None) -> LpProblem:
    """Problem containing only the nodal-balance and store-continuity rows."""
    return _partial(network, snapshots, "emit_nodal_balance")


def emit_store_continuity(network: Network, snapshots: Snapshots | None = None) -> LpProblem:
    """Store state-equation rows (the balance rows of store-hosting buses)."""
    full = emit_nodal_balance(network, snapshots)
    return select_rows(full, lambda tag: tag.kind == "store_continuity")


def emit_capacity_coupling(network: Network, snapshots: Snapshots | None = None) -> LpProblem:
    """Availability, min-load, store-bound, potential and store-rate rows."""
    full = _partial(network, snapshots, "emit_component_rows")
    return select_rows(full, lambda tag: not tag.kind.startswith("ramp"))


def emit_ramp_rows(network: Network, snapshots: Snapshots | None = None) -> LpProblem:
    full = _partial(network, snapshots, "emit_component_rows")
    return select_rows(full, lambda tag: tag.kind.startswith("ramp"))


def emit_annual_demand(network: Network, snapshots: Snapshots | None = None) -> LpProblem:
    return _partial(network, snapshots, "emit_annual_demand")


def build_objective(network: Network, snapshots: Snapshots | None = None) -> dict[str, float]:
    """Objective coefficient of every column, keyed by column name."""
    b = _Builder(network, _check_snapshots(network, snapshots))
    b.build_columns()
    cost = np.concatenate(b.cost) if b.cost else np.zeros(0)
    return dict(zip(b.col_names, cost.tolist()))


def select_rows(problem: LpProblem, keep) -> LpProblem:
    """Sub-problem restricted to rows whose tag satisfies ``keep``."""
    idx = np.array([i for i, tag in enumerate(problem.row_tags) if keep(tag)], dtype=int)
    return LpProblem(
        col_names=problem.col_names,
        col_lower=problem.col_lower,
        col_upper=problem.col_upper,
        obj=problem.obj,
        row_names=[problem.row_names[i] for i in idx],
        row_sense=problem.row_sense[idx],
        rhs=problem.rhs[idx],
        A=problem.A[idx],
        row_tags=[problem.row_tags[i] for i in idx],
        col_tags=problem.col_tags,
        obj_constant=problem.obj_constant,
        horizon=problem.horizon,
    )


def assemble(network: Network, snapshots: Snapshots | None = None) -> LpProblem:
    """Validate ``network`` and compile the complete linear program.

    Raises
    ------
    NetworkError
        If :func:`~ptxhub.netcore.validate_network` reports any violation.
    """
    snapshots = _check_snapshots(network, snapshots)
    violations = validate_network(network)
    if violations:
        raise NetworkError(violations)
    b = _Builder(network, snapshots)
    b.build_columns()
    b.emit_nodal_balance()
    b.emit_component_rows()
    b.emit_annual_demand()
    problem = b.finish()
    problems = problem.check()
    if problems:
        raise RuntimeError("; ".join(problems))
    return problem
