"""Post-processing of optimal solutions: levelized costs, shadow prices,
cost breakdowns and the duality audit.

Levelized costs are read from the duals of the annual-demand rows.  The
duals of a horizon of ``N`` hours are directly comparable with full-year
values because capital costs are prorated by ``N / 8760``; horizon totals
(objective, breakdown) are reported both as computed and scaled to a year.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
import pandas as pd

from .lpform import LpProblem
from .netcore import Generator, Load, MultiLink, Network, Store
from .solver.kkt import check_kkt
from .solver.types import LpSolution

H2_LHV_MWH_PER_T = 33.33          # 33.33 kWh/kg
MEOH_LHV_MWH_PER_T = 19.9 / 3.6   # 19.9 MJ/kg, external physical constant

# product label -> annual load name in hub networks
PRODUCTS = {"LCOH": "H2_to_grid", "LCOM": "MeOH_demand"}
DEFAULT_QUANTILES = (0.05, 0.25, 0.5, 0.75, 0.95)
BALANCE_KINDS = ("nodal_balance", "store_continuity")


# ---------------------------------------------------------------------------
# levelized costs
# ---------------------------------------------------------------------------


def demand_dual(solution: LpSolution, problem: LpProblem, load: str) -> float:
    """Dual of the annual-demand row of ``load``.

    A zero demand is degenerate (any dual between 0 and the marginal cost is
    optimal), so its levelized cost is reported as 0.
    """
    name = f"annual.{load}"
    try:
        i = problem.row_index[name]
    except KeyError:
        raise KeyError(f"missing demand row for load {load!r}") from None
    if problem.rhs[i] == 0.0:
        return 0.0
    return float(solution.duals[i])


def levelized_costs(solution: LpSolution, problem: LpProblem,
                    products: Mapping[str, str] | None = None) -> dict[str, float]:
    """Levelized cost (EUR per MWh of product) of each annual demand.

    Parameters
    ----------
    products : mapping, optional
        Label to annual-load name.  Every entry must exist in ``problem``.
        When omitted, every annual-demand row is reported; loads named in
        :data:`PRODUCTS` are labelled ``LCOH``/``LCOM``, others by load name.

    Raises
    ------
    KeyError
        A requested load has no annual-demand row.
    """
    if products is not None:
        return {label: demand_dual(solution, problem, load) for label, load in products.items()}
    names = {v: k for k, v in PRODUCTS.items()}
    out = {}
    for i in problem.rows_of_kind("annual_demand"):
        load = problem.row_tags[i].subject
        out[names.get(load, load)] = demand_dual(solution, problem, load)
    return out


def per_mass(label: str, eur_per_mwh: float) -> tuple[str, float] | None:
    """Convert a levelized cost to EUR/kg (hydrogen) or EUR/t (methanol)."""
    if label == "LCOH":
        return "eur_per_kg", eur_per_mwh * H2_LHV_MWH_PER_T / 1000.0
    if label == "LCOM":
        return "eur_per_t", eur_per_mwh * MEOH_LHV_MWH_PER_T
    return None


# ---------------------------------------------------------------------------
# shadow prices
# ---------------------------------------------------------------------------


def nearest_rank(values: np.ndarray, q: float) -> float:
    """Nearest-rank quantile: the ``ceil(q * n)``-th smallest value (q=0: minimum)."""
    v = np.sort(np.asarray(values, dtype=float))
    if v.size == 0:
        raise ValueError("no values")
    if not 0.0 <= q <= 1.0:
        raise ValueError(f"quantile {q} outside [0, 1]")
    k = max(1, math.ceil(q * v.size))
    return float(v[k - 1])


def bus_rows(problem: LpProblem, bus: str) -> np.ndarray:
    """Row indices of the balance rows of ``bus`` in snapshot order."""
    rows = [i for i, t in enumerate(problem.row_tags) if t.kind in BALANCE_KINDS and t.bus == bus]
    if not rows:
        raise KeyError(f"unknown bus {bus!r}")
    rows.sort(key=lambda i: problem.row_tags[i].snapshot)
    return np.asarray(rows, dtype=int)


def bus_names(problem: LpProblem) -> list[str]:
    seen = []
    for t in problem.row_tags:
        if t.kind in BALANCE_KINDS and t.bus not in seen:
            seen.append(t.bus)
    return seen


def bus_prices(solution: LpSolution, problem: LpProblem, bus: str, offset=None) -> np.ndarray:
    """Hourly shadow price of ``bus``, optionally minus a reference series."""
    lam = solution.duals[bus_rows(problem, bus)]
    if offset is not None:
        lam = lam - np.asarray(offset, dtype=float)
    return lam


def shadow_stats(solution: LpSolution, problem: LpProblem, bus: str, offset=None,
                 quantiles: Sequence[float] = DEFAULT_QUANTILES) -> dict[str, float]:
    """Mean, extremes and nearest-rank quantiles of the hourly shadow price.

    ``offset`` (scalar or hourly series) is subtracted first; hub results use
    it to report the biomethane bus relative to the plant's reference
    operating cost.

    Raises
    ------
    KeyError
        ``bus`` has no balance rows.
    """
    lam = bus_prices(solution, problem, bus, offset)
    out = {"mean": float(lam.mean()), "min": float(lam.min()), "max": float(lam.max())}
    for q in quantiles:
        out[f"q{round(100 * q):02d}"] = nearest_rank(lam, q)
    return out


def _offsets(network: Network | None) -> dict[str, np.ndarray]:
    if network is None or "biomethane_reference_cost" not in network.meta:
        return {}
    return {"biomethane": np.asarray(network.meta["biomethane_reference_cost"], dtype=float)}


def hourly_duals(solution: LpSolution, problem: LpProblem,
                 network: Network | None = None) -> pd.DataFrame:
    """Hourly shadow price of every bus (columns) as a data frame."""
    offs = _offsets(network)
    data = {b: bus_prices(solution, problem, b, offs.get(b)) for b in bus_names(problem)}
    frame = pd.DataFrame(data)
    frame.index.name = "snapshot"
    if network is not None:
        frame.insert(0, "timestamp", network.snapshots.isoformat())
    return frame


# ---------------------------------------------------------------------------
# capacities and flows
# ---------------------------------------------------------------------------


def _series(problem: LpProblem, solution: LpSolution, prefix: str, name: str, n: int):
    j = problem.col_index.get(f"{prefix}.{name}.0")
    if j is None:
        return None
    return solution.x[j:j + n]


def capacity(network: Network, problem: LpProblem, solution: LpSolution, name: str) -> float:
    comp = network.component(name)
    if comp.extendable:
        return float(solution.x[problem.col_index[f"cap.{name}"]])
    return float(comp.fixed_capacity)


def capacities(network: Network, problem: LpProblem, solution: LpSolution) -> dict[str, float]:
    out = {}
    for comp in sorted(network.components(), key=lambda c: c.name):
        if isinstance(comp, Load):
            continue
        out[comp.name] = capacity(network, problem, solution, comp.name)
    return out


def flows(network: Network, problem: LpProblem, solution: LpSolution, name: str) -> np.ndarray:
    """Hourly dispatch, flow or level of a component."""
    comp = network.component(name)
    n = network.n_snapshots
    prefix = {Generator: "gen", MultiLink: "flow", Store: "lvl", Load: "dlv"}[type(comp)]
    out = _series(problem, solution, prefix, name, n)
    if out is None:
        raise KeyError(f"component {name!r} has no hourly columns")
    return out


def annual_flows(network: Network, problem: LpProblem, solution: LpSolution) -> dict[str, float]:
    """Sum of hourly dispatch/flow of every generator and link, scaled to a year."""
    w = network.snapshots.horizon_weight
    out = {}
    for comp in sorted(list(network.generators) + list(network.links), key=lambda c: c.name):
        out[comp.name] = float(flows(network, problem, solution, comp.name).sum() * w)
    return out


# ---------------------------------------------------------------------------
# cost breakdown
# ---------------------------------------------------------------------------


@dataclass
class Breakdown:
    """Objective split into capital, operating, trade and constant terms.

    All values are horizon totals in EUR; ``per_year`` scales by ``8760/N``.
    """

    capital: dict[str, float]
    operating: dict[str, float]
    trade: dict[str, float]
    constant: dict[str, float]
    total: float
    objective: float
    ptx_value: float
    horizon_weight: float

    @property
    def total_with_ptx_sales(self) -> float:
        """Total cost minus the value of the products at their levelized costs."""
        return self.total - self.ptx_value

    @property
    def residual(self) -> float:
        return abs(self.total - self.objective) / max(1.0, abs(self.objective))

    def per_year(self, value: float) -> float:
        return value * self.horizon_weight

    def rows(self) -> list[dict]:
        out = []
        for cat in ("capital", "operating", "trade", "constant"):
            for key, v in sorted(getattr(self, cat).items()):
                out.append({"category": cat, "item": key, "eur_horizon": v,
                            "eur_per_year": self.per_year(v)})
        for key, v in (("total", self.total), ("total_with_ptx_sales", self.total_with_ptx_sales)):
            out.append({"category": "summary", "item": key, "eur_horizon": v,
                        "eur_per_year": self.per_year(v)})
        return out

    def to_dict(self) -> dict:
        d = asdict(self)
        d["total_with_ptx_sales"] = self.total_with_ptx_sales
        d["residual"] = self.residual
        return d


def cost_breakdown(solution: LpSolution, problem: LpProblem, network: Network,
                   trade: Sequence[str] | None = None,
                   default_group: str | None = None) -> Breakdown:
    """Group the objective by component group.

    Capital costs go to the component's group; marginal costs of components
    listed in ``trade`` (default: the network's ``trade_components``) are
    reported per component as external trade, all others as operating cost
    of their group.  Negative values are revenues.

    Raises
    ------
    ValueError
        A component contributing to the objective has no group and no
        ``default_group`` is given.
    """
    if trade is None:
        trade = network.meta.get("trade_components", ())
    trade = set(trade)
    n = network.n_snapshots
    scale = n / 8760.0
    capital: dict[str, float] = {}
    operating: dict[str, float] = {}
    trades: dict[str, float] = {}

    def group_of(comp):
        g = getattr(comp, "group", None) or default_group
        if g is None:
            raise ValueError(f"component {comp.name!r} has no group tag")
        return g

    for comp in sorted(network.components(), key=lambda c: c.name):
        if isinstance(comp, Load):
            continue
        cap = capacity(network, problem, solution, comp.name)
        if comp.capital_cost and math.isfinite(cap):
            g = group_of(comp)
            capital[g] = capital.get(g, 0.0) + comp.capital_cost * scale * cap
        if isinstance(comp, Store):
            continue
        x = flows(network, problem, solution, comp.name)
        cost = np.broadcast_to(np.asarray(comp.marginal_cost, dtype=float), (n,))
        value = float(cost @ x)
        if comp.name in trade:
            trades[comp.name] = value
        elif np.any(cost != 0):
            g = group_of(comp)
            operating[g] = operating.get(g, 0.0) + value
    constant = {}
    offset = float(network.meta.get("objective_offset", 0.0))
    if offset:
        constant["reference_operation"] = offset
    total = sum(capital.values()) + sum(operating.values()) + sum(trades.values()) + offset
    ptx_value = 0.0
    for ld in network.loads:
        if ld.annual_total is not None:
            ptx_value += demand_dual(solution, problem, ld.name) * ld.annual_total * scale
    return Breakdown(capital, operating, trades, constant, total, float(solution.objective),
                     ptx_value, network.snapshots.horizon_weight)


# ---------------------------------------------------------------------------
# duality audit
# ---------------------------------------------------------------------------


@dataclass
class AuditReport:
    """Reconstruction of the objective from duals (strong duality).

    ``terms`` holds the dual-side contributions: the value of fixed loads
    per bus (``load:<bus>``), of annual demands (``demand:<load>``), of
    other right-hand sides per row kind (``rhs:<kind>``), of active column
    bounds (``bounds``) and the objective constant.  ``trade`` lists the
    cash flows of external-trade components, used for the cost-recovery
    view: non-trade cost = load value + demand value + trade revenue + rents.
    """

    objective: float
    reconstructed: float
    terms: dict[str, float]
    trade: dict[str, float]
    bus_table: pd.DataFrame
    tolerance: float

    @property
    def residual(self) -> float:
        return abs(self.reconstructed - self.objective) / max(1.0, abs(self.objective))

    @property
    def max_imbalance(self) -> float:
        if self.bus_table.empty:
            return 0.0
        return float(self.bus_table["max_imbalance"].max())

    @property
    def passed(self) -> bool:
        return self.residual <= self.tolerance and self.max_imbalance <= self.tolerance

    def value_of(self, prefix: str) -> float:
        return float(sum(v for k, v in self.terms.items() if k.startswith(prefix)))

    @property
    def load_value(self) -> float:
        return self.value_of("load:")

    @property
    def demand_value(self) -> float:
        return self.value_of("demand:")

    @property
    def rents(self) -> float:
        return self.value_of("rhs:") + self.terms.get("bounds", 0.0)

    def summary(self) -> dict:
        return {
            "passed": self.passed,
            "objective": self.objective,
            "reconstructed": self.reconstructed,
            "residual": self.residual,
            "max_imbalance": self.max_imbalance,
            "load_value": self.load_value,
            "demand_value": self.demand_value,
            "rents": self.rents,
            "trade_cashflow": float(sum(self.trade.values())),
            "terms": dict(self.terms),
        }


def duality_audit(solution: LpSolution, problem: LpProblem, network: Network | None = None,
                  tol: float = 1e-6) -> AuditReport:
    """Reconcile the objective with the dual valuation of all right-hand sides.

    For an optimal LP, ``c'x + k = b'y + l'z+ + u'z- + k``.  Fixed loads enter
    ``b`` on their balance rows and annual demands on their own rows, so on a
    closed system (no potentials, fixed capacities or exogenous prices) the
    objective equals ``sum(lambda * d) + sum(lambda_D * D)``.  The bus table
    lists, per bus, the dual value of its loads and its worst primal
    imbalance; a corrupted primal or dual vector shows up in one of the two.
    """
    x, y = np.asarray(solution.x, float), np.asarray(solution.duals, float)
    b = problem.rhs
    terms: dict[str, float] = {}
    for i, tag in enumerate(problem.row_tags):
        if b[i] == 0.0:
            continue
        if tag.kind in BALANCE_KINDS:
            key = f"load:{tag.bus}"
        elif tag.kind == "annual_demand":
            key = f"demand:{tag.subject}"
        else:
            key = f"rhs:{tag.kind}"
        terms[key] = terms.get(key, 0.0) + float(b[i] * y[i])
    z = problem.obj - problem.A.T @ y
    lo, hi = problem.col_lower, problem.col_upper
    bound = float(np.where(np.isfinite(lo), lo, 0.0) @ np.maximum(z, 0.0)
                  + np.where(np.isfinite(hi), hi, 0.0) @ np.minimum(z, 0.0))
    if bound:
        terms["bounds"] = bound
    if problem.obj_constant:
        terms["constant"] = float(problem.obj_constant)
    reconstructed = float(sum(terms.values()))

    resid = problem.A @ x - b
    rows = []
    for bus in bus_names(problem):
        idx = bus_rows(problem, bus)
        rows.append({
            "bus": bus,
            "load_value": float(b[idx] @ y[idx]),
            "max_imbalance": float(np.max(np.abs(resid[idx]) / (1.0 + np.abs(b[idx])))),
        })
    table = pd.DataFrame(rows, columns=["bus", "load_value", "max_imbalance"])

    trade = {}
    if network is not None:
        n = network.n_snapshots
        for name in network.meta.get("trade_components", ()):
            comp = network.component(name)
            cost = np.broadcast_to(np.asarray(comp.marginal_cost, dtype=float), (n,))
            trade[name] = float(cost @ flows(network, problem, solution, name))
    return AuditReport(float(solution.objective), reconstructed, terms, trade, table, tol)


# ---------------------------------------------------------------------------
# case result
# ---------------------------------------------------------------------------


@dataclass
class CaseResult:
    """Everything reported for one scenario run."""

    name: str
    status: str
    config: dict = field(default_factory=dict)
    message: str = ""
    objective: float | None = None
    horizon_hours: int | None = None
    capacities: dict = field(default_factory=dict)
    annual_flows: dict = field(default_factory=dict)
    levelized: dict = field(default_factory=dict)
    shadow: dict = field(default_factory=dict)
    breakdown: dict = field(default_factory=dict)
    audit: dict = field(default_factory=dict)
    kkt: dict = field(default_factory=dict)
    solver: dict = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)
    hourly: pd.DataFrame | None = field(default=None, repr=False, compare=False)

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"

    def lcoh(self) -> float | None:
        return self.levelized.get("LCOH", {}).get("eur_per_mwh")

    def lcom(self) -> float | None:
        return self.levelized.get("LCOM", {}).get("eur_per_mwh")

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("hourly")
        return d

    @classmethod
    def from_dict(cls, data: Mapping) -> "CaseResult":
        kw = {k: v for k, v in data.items() if k != "hourly"}
        return cls(**kw)

    def summary(self) -> str:
        lines = [f"case {self.name}: {self.status}"]
        if self.message:
            lines.append(f"  {self.message}")
        if not self.optimal:
            return "\n".join(lines)
        lines.append(f"  objective {self.objective:,.0f} EUR over {self.horizon_hours} h "
                     f"({self.breakdown.get('total_per_year', float('nan')):,.0f} EUR/y)")
        for label, v in self.levelized.items():
            extra = "".join(f", {v[k]:.3f} {k.replace('eur_per_', 'EUR/')}"
                            for k in ("eur_per_kg", "eur_per_t") if k in v)
            lines.append(f"  {label}: {v['eur_per_mwh']:.2f} EUR/MWh{extra}")
        lines.append("  capacities:")
        for k, v in self.capacities.items():
            if math.isfinite(v) and abs(v) > 1e-6:
                lines.append(f"    {k:<28} {v:12.3f}")
        lines.append("  annual cost by category (EUR/y):")
        for row in self.breakdown.get("rows", []):
            lines.append(f"    {row['category']:<10} {row['item']:<28} {row['eur_per_year']:14,.0f}")
        a = self.audit
        if a:
            lines.append(f"  duality audit: {'pass' if a['passed'] else 'FAIL'} "
                         f"(residual {a['residual']:.2e})")
        if self.kkt:
            lines.append(f"  KKT: {'pass' if self.kkt['passed'] else 'FAIL'} "
                         f"(worst {self.kkt['worst']} {self.kkt['worst_value']:.2e})")
        for w in self.warnings:
            lines.append(f"  warning: {w}")
        return "\n".join(lines)


def summarize(network: Network, problem: LpProblem, solution: LpSolution, name: str = "case",
              config: Mapping | None = None, provenance: Mapping | None = None,
              check: bool = True) -> CaseResult:
    """Build a :class:`CaseResult` from an optimal solution."""
    if not solution.optimal:
        return CaseResult(name, solution.status, dict(config or {}), solution.message,
                          solver={"name": solution.solver, "wall_time": solution.wall_time})
    lev = {}
    for label, v in levelized_costs(solution, problem).items():
        entry = {"eur_per_mwh": v}
        conv = per_mass(label, v)
        if conv:
            entry[conv[0]] = conv[1]
        lev[label] = entry
    offs = _offsets(network)
    shadow = {b: shadow_stats(solution, problem, b, offs.get(b)) for b in bus_names(problem)}
    bd = cost_breakdown(solution, problem, network, default_group="other")
    bdd = bd.to_dict()
    bdd["rows"] = bd.rows()
    bdd["total_per_year"] = bd.per_year(bd.total)
    audit = duality_audit(solution, problem, network)
    kkt = {}
    if check:
        rep = check_kkt(problem, solution)
        worst = rep.worst()
        kkt = {"passed": rep.passed, "worst": worst.name, "worst_value": worst.worst,
               "worst_at": worst.where, "failures": [c.name for c in rep.failures()]}
    return CaseResult(
        name=name,
        status="optimal",
        config=dict(config or {}),
        message=solution.message,
        objective=float(solution.objective),
        horizon_hours=network.n_snapshots,
        capacities=capacities(network, problem, solution),
        annual_flows=annual_flows(network, problem, solution),
        levelized=lev,
        shadow=shadow,
        breakdown=bdd,
        audit=audit.summary(),
        kkt=kkt,
        solver={"name": solution.solver, "wall_time": solution.wall_time,
                "iterations": solution.iterations, "rows": problem.n_rows,
                "columns": problem.n_cols, "fingerprint": problem.fingerprint()},
        provenance=dict(provenance or {}),
        hourly=hourly_duals(solution, problem, network),
    )


# ---------------------------------------------------------------------------
# files
# ---------------------------------------------------------------------------

RESULT_FILES = ("result.json", "capacities.csv", "prices_stats.csv", "breakdown.csv",
                "duals_hourly.csv")


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def write_case(result: CaseResult, folder: str | Path) -> dict[str, Path]:
    """Write ``result.json`` plus the flat CSV tables into ``folder``."""
    folder = Path(folder)
    folder.mkdir(parents=True, exist_ok=True)
    paths = {"result.json": folder / "result.json"}
    paths["result.json"].write_text(json.dumps(result.to_dict(), indent=2, sort_keys=True,
                                               default=_json_default, allow_nan=True))
    if not result.optimal:
        return paths
    cap = pd.DataFrame(
        [{"component": k, "capacity": v, "annual_flow": result.annual_flows.get(k, np.nan)}
         for k, v in result.capacities.items()])
    stats = pd.DataFrame([{"bus": b, **s} for b, s in result.shadow.items()])
    bd = pd.DataFrame(result.breakdown.get("rows", []))
    tables = {"capacities.csv": cap, "prices_stats.csv": stats, "breakdown.csv": bd}
    if result.hourly is not None:
        tables["duals_hourly.csv"] = result.hourly
    for fname, frame in tables.items():
        path = folder / fname
        frame.to_csv(path, index=fname == "duals_hourly.csv", float_format="%.10g")
        paths[fname] = path
    return paths


def read_case(folder: str | Path) -> CaseResult:
    folder = Path(folder)
    data = json.loads((folder / "result.json").read_text())
    res = CaseResult.from_dict(data)
    hourly = folder / "duals_hourly.csv"
    if hourly.exists():
        res.hourly = pd.read_csv(hourly, index_col=0)
    return res
