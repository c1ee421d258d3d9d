"""Sensitivity sweeps: enumerate, run, persist and aggregate scenario cases.

Results layout::

    <out>/cases/<config_hash>/config.yaml
                              result.json, capacities.csv, prices_stats.csv,
                              breakdown.csv, duals_hourly.csv
    <out>/sweep_long.csv                  one row per case and metric
    <out>/corr_<scenario>_<year>.csv      capacity / price correlation matrices

A case whose ``result.json`` exists with a status other than ``error`` is
skipped on resume.
"""
from __future__ import annotations

import itertools
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
import pandas as pd
import yaml

from . import market as mk
from .catalog import Catalog, ScenarioConfig, build_hub, load_catalog, save_config
from .catalog.scenario import GRID_VALUES
from .lpform import assemble
from .netcore import MultiLink, Network
from .results import CaseResult, read_case, summarize, write_case
from .solver import BackendConfig, solve
from .solver.types import SolverError

log = logging.getLogger(__name__)

GRID_ORDER = tuple(GRID_VALUES)
_SHORT = {"scenario": "", "co2_tax": "tax", "co2_recovery_ratio": "rec", "max_re": "re",
          "price_year": "y", "dh_enabled": "dh", "biochar_enabled": "bc"}


def case_name(config: ScenarioConfig, keys: Iterable[str] = GRID_ORDER) -> str:
    parts = []
    for k in keys:
        v = getattr(config, k)
        if isinstance(v, bool):
            v = int(v)
        parts.append(f"{_SHORT.get(k, k)}{v}")
    return "-".join(parts)


def enumerate_cases(base: ScenarioConfig | None = None,
                    grid: Mapping[str, Sequence] | None = None) -> list[ScenarioConfig]:
    """Cartesian product of ``grid`` applied to ``base``.

    Parameters follow the order of :data:`GRID_VALUES` (unknown keys after
    them, alphabetically); the last parameter varies fastest.  Omitted
    parameters keep the base value.  ``grid=None`` enumerates the full
    default grid of 720 cases.

    Raises
    ------
    ValueError
        An empty value list or a key that is not a configuration field.
    """
    base = base or ScenarioConfig()
    grid = dict(GRID_VALUES if grid is None else grid)
    fields = set(base.to_dict())
    for key, values in grid.items():
        if key not in fields:
            raise ValueError(f"unknown sweep parameter {key!r}")
        if len(list(values)) == 0:
            raise ValueError(f"empty value list for {key!r}")
    keys = [k for k in GRID_ORDER if k in grid] + sorted(k for k in grid if k not in GRID_ORDER)
    cases = []
    for combo in itertools.product(*(list(grid[k]) for k in keys)):
        cfg = base.with_(**dict(zip(keys, combo)))
        cases.append(cfg.with_(name=case_name(cfg)))
    return cases


# ---------------------------------------------------------------------------
# single case
# ---------------------------------------------------------------------------


@dataclass
class RunOptions:
    solver: str = "highs"
    backend: BackendConfig | None = None
    check_kkt: bool = True
    branch_tol: float = 1e-6


def _solve(network: Network, options: RunOptions):
    problem = assemble(network)
    return problem, solve(problem, options.solver, options.backend)


def _semi_continuous_violations(network, problem, solution, tol):
    out = []
    for lk in network.links:
        if isinstance(lk, MultiLink) and lk.extendable and lk.min_build > 0:
            cap = solution.x[problem.col_index[f"cap.{lk.name}"]]
            if tol < cap < lk.min_build - tol:
                out.append(lk)
    return out


def solve_with_min_build(network: Network, options: RunOptions | None = None,
                         depth: int = 0):
    """Solve, enforcing ``capacity = 0 or >= min_build`` by branching.

    When the relaxed optimum builds a link below its threshold, the case is
    re-solved with that capacity fixed at zero and with ``capacity_min`` at
    the threshold; the cheaper feasible branch is kept.  Returns
    ``(network, problem, solution, branches)`` for the chosen branch.
    """
    options = options or RunOptions()
    problem, sol = _solve(network, options)
    if not sol.optimal:
        return network, problem, sol, []
    bad = _semi_continuous_violations(network, problem, sol, options.branch_tol)
    if not bad or depth > 8:
        return network, problem, sol, []
    lk = bad[0]
    best = None
    for label, change in (("off", dict(extendable=False, fixed_capacity=0.0)),
                          ("on", dict(capacity_min=lk.min_build))):
        sub = network.replace_component(lk.name, **change)
        res = solve_with_min_build(sub, options, depth + 1)
        if res[2].optimal and (best is None or res[2].objective < best[2].objective):
            best = (res[0], res[1], res[2], [f"{lk.name}:{label}"] + res[3])
    if best is None:
        return network, problem, sol, [f"{lk.name}:no feasible branch"]
    return best


def provenance(config: ScenarioConfig, catalog: Catalog, market: mk.MarketSeries,
               solver: str) -> dict:
    return {
        "config_hash": config.config_hash(),
        "catalog_version": catalog.version,
        "catalog_digest": catalog.digest,
        "catalog_source": catalog.source,
        "data_files": dict(market.sources) or {"synthetic": f"year {market.year}"},
        "solver": solver,
    }


def run_case(config: ScenarioConfig, catalog: Catalog | None = None,
             market: mk.MarketSeries | None = None,
             options: RunOptions | None = None) -> CaseResult:
    """Build, assemble, solve and post-process one case.

    Never raises for case-level failures: infeasible or unbounded problems
    keep their status, and exceptions (missing data, solver failures) give
    status ``error`` with the message.
    """
    options = options or RunOptions()
    name = config.name or case_name(config)
    start = time.perf_counter()
    try:
        problems = config.validate()
        if problems:
            raise ValueError("; ".join(problems))
        cat = catalog or load_catalog(config.catalog_path)
        if market is None:
            if config.data_dir is None:
                raise ValueError("config has no data_dir and no market series was given")
            market = mk.load_market(config.data_dir, config.price_year, config.tariffs)
        else:
            market = market.with_tariffs(config.tariffs)
        market = mk.slice_horizon(market, config.hours, config.weeks)
        network = build_hub(config, market, cat)
        network, problem, sol, branches = solve_with_min_build(network, options)
        prov = provenance(config, cat, market, sol.solver)
        result = summarize(network, problem, sol, name=name, config=config.to_dict(),
                           provenance=prov, check=options.check_kkt)
        if branches:
            result.solver["branches"] = branches
        result.warnings = config.warnings()
    except (OSError, ValueError, KeyError, SolverError, mk.SeriesError) as exc:
        log.warning("case %s failed: %s", name, exc)
        result = CaseResult(name, "error", config.to_dict(), f"{type(exc).__name__}: {exc}")
    result.solver["total_time"] = time.perf_counter() - start
    return result


# ---------------------------------------------------------------------------
# sweep execution
# ---------------------------------------------------------------------------


@dataclass
class SweepSpec:
    base: ScenarioConfig = field(default_factory=ScenarioConfig)
    grid: dict = field(default_factory=lambda: dict(GRID_VALUES))
    solver: str = "highs"
    jobs: int = 1

    def cases(self) -> list[ScenarioConfig]:
        return enumerate_cases(self.base, self.grid)


def load_sweep_spec(path: str | Path) -> SweepSpec:
    """Read a YAML sweep spec with keys ``base``, ``grid``, ``solver``, ``jobs``."""
    path = Path(path)
    data = yaml.safe_load(path.read_text()) or {}
    unknown = set(data) - {"base", "grid", "solver", "jobs"}
    if unknown:
        raise ValueError(f"{path}: unknown sweep keys {sorted(unknown)}")
    base = dict(data.get("base") or {})
    for key in ("data_dir", "catalog_path"):
        if base.get(key) is not None and not Path(base[key]).is_absolute():
            base[key] = str((path.parent / base[key]).resolve())
    grid = data.get("grid")
    return SweepSpec(ScenarioConfig.from_dict(base),
                     dict(GRID_VALUES) if grid is None else dict(grid),
                     data.get("solver", "highs"), int(data.get("jobs", 1)))


def case_dir(out: str | Path, config: ScenarioConfig) -> Path:
    return Path(out) / "cases" / config.config_hash()


def _done(folder: Path) -> bool:
    f = folder / "result.json"
    if not f.exists():
        return False
    try:
        return read_case(folder).status != "error"
    except (ValueError, OSError, TypeError):
        return False


def _run_and_store(args) -> CaseResult:
    config, out, options, market = args
    folder = case_dir(out, config)
    folder.mkdir(parents=True, exist_ok=True)
    save_config(config, folder / "config.yaml")
    result = run_case(config, market=market, options=options)
    write_case(result, folder)
    return result


def run_sweep(cases: Sequence[ScenarioConfig], out: str | Path, jobs: int = 1,
              options: RunOptions | None = None,
              markets: Mapping[int, mk.MarketSeries] | None = None,
              resume: bool = True) -> list[CaseResult]:
    """Run every case (in parallel when ``jobs > 1``) and persist each result.

    Results are returned in case order regardless of completion order.
    ``markets`` maps price years to in-memory series; cases without an entry
    load their data from ``config.data_dir``.
    """
    options = options or RunOptions()
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    results: list[CaseResult | None] = [None] * len(cases)
    todo = []
    for i, cfg in enumerate(cases):
        folder = case_dir(out, cfg)
        if resume and _done(folder):
            results[i] = read_case(folder)
            log.info("resume: %s already done", cfg.name)
        else:
            todo.append(i)
    args = [(cases[i], out, options, (markets or {}).get(cases[i].price_year)) for i in todo]
    if jobs > 1 and len(args) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for i, res in zip(todo, pool.map(_run_and_store, args)):
                results[i] = res
    else:
        for i, a in zip(todo, args):
            results[i] = _run_and_store(a)
    return results  # type: ignore[return-value]


def load_results(out: str | Path) -> list[CaseResult]:
    folders = sorted((Path(out) / "cases").glob("*/result.json"))
    return [read_case(f.parent) for f in folders]


# ---------------------------------------------------------------------------
# aggregation
# ---------------------------------------------------------------------------

CASE_COLUMNS = ["case", "config_hash", "status", *GRID_ORDER]
LONG_COLUMNS = CASE_COLUMNS + ["metric", "value"]


def _case_fields(res: CaseResult) -> dict:
    cfg = res.config
    out = {"case": res.name, "config_hash": res.provenance.get("config_hash", ""),
           "status": res.status}
    for k in GRID_ORDER:
        out[k] = cfg.get(k)
    return out


def case_metrics(res: CaseResult) -> dict[str, float]:
    if not res.optimal:
        return {}
    m = {"objective": res.objective,
         "objective_per_year": res.breakdown.get("total_per_year", math.nan)}
    for label, v in res.levelized.items():
        m[label] = v["eur_per_mwh"]
    for comp, v in res.capacities.items():
        if math.isfinite(v):
            m[f"capacity:{comp}"] = v
    for bus, s in res.shadow.items():
        m[f"price_mean:{bus}"] = s["mean"]
    return m


def aggregate(results: Sequence[CaseResult]) -> tuple[pd.DataFrame, dict[str, pd.DataFrame]]:
    """Long table of every case metric plus per-group correlation matrices.

    Groups are (scenario, price year); a matrix correlates capacities and
    mean shadow prices across the optimal cases of a group and is only
    formed for groups with at least three cases.
    """
    rows = []
    for res in results:
        base = _case_fields(res)
        metrics = case_metrics(res)
        if not metrics:
            rows.append({**base, "metric": "status", "value": math.nan})
        for k, v in metrics.items():
            rows.append({**base, "metric": k, "value": v})
    long = pd.DataFrame(rows, columns=LONG_COLUMNS)
    matrices: dict[str, pd.DataFrame] = {}
    ok = long[(long["status"] == "optimal")
              & long["metric"].str.match(r"^(capacity|price_mean):", na=False)]
    for (scen, year), grp in ok.groupby(["scenario", "price_year"], sort=True):
        wide = grp.pivot(index="case", columns="metric", values="value")
        if len(wide) < 3:
            continue
        wide = wide.loc[:, wide.std(ddof=0) > 1e-9]
        matrices[f"{scen}_{year}"] = wide.corr()
    return long, matrices


def cost_vs_recovery(long: pd.DataFrame) -> pd.DataFrame:
    """One row per case: grid parameters plus LCOH and LCOM, sorted for plotting."""
    cols = CASE_COLUMNS + ["LCOH", "LCOM"]
    if long.empty:
        return pd.DataFrame(columns=cols)
    keyed = long[long["metric"].isin(["LCOH", "LCOM"])]
    wide = keyed.pivot_table(index="case", columns="metric", values="value", aggfunc="first")
    cases = long.drop_duplicates("case").set_index("case")[CASE_COLUMNS[1:]]
    table = cases.join(wide, how="left").reset_index()
    for c in ("LCOH", "LCOM"):
        if c not in table:
            table[c] = math.nan
    order = [k for k in GRID_ORDER if k != "co2_recovery_ratio"] + ["co2_recovery_ratio"]
    return table[cols].sort_values(order, kind="stable").reset_index(drop=True)


def write_aggregate(results: Sequence[CaseResult], out: str | Path) -> dict[str, Path]:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    long, matrices = aggregate(results)
    paths = {"long": out / "sweep_long.csv"}
    long.to_csv(paths["long"], index=False, float_format="%.10g")
    for key, mat in matrices.items():
        p = out / f"corr_{key}.csv"
        mat.to_csv(p, float_format="%.6g")
        paths[f"corr_{key}"] = p
    return paths


def write_gnuplot(table: pd.DataFrame, out: str | Path) -> dict[str, Path]:
    """Write ``cost_vs_recovery.csv``, one ``.dat`` block file and a gnuplot script.

    Each curve holds the cases that differ only in recovery ratio.
    """
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / "cost_vs_recovery.csv"
    table.to_csv(csv_path, index=False, float_format="%.10g")
    dat = out / "cost_vs_recovery.dat"
    keys = [k for k in GRID_ORDER if k != "co2_recovery_ratio"]
    titles = []
    with dat.open("w") as fh:
        fh.write("# recovery LCOM LCOH\n")
        if not table.empty:
            for block, (key, grp) in enumerate(table.groupby(keys, sort=False, dropna=False)):
                title = " ".join(f"{_SHORT.get(k, k)}{int(v) if isinstance(v, (bool, np.bool_)) else v}"
                                 for k, v in zip(keys, key)).strip()
                titles.append(title)
                if block:
                    fh.write("\n\n")
                fh.write(f"# {title}\n")
                for _, r in grp.iterrows():
                    fh.write(f"{r['co2_recovery_ratio']} {r['LCOM']} {r['LCOH']}\n")
    gp = out / "cost_vs_recovery.gp"
    plots = ", \\\n     ".join(
        f"'{dat.name}' index {i} using 1:2 with linespoints title '{t}'"
        for i, t in enumerate(titles))
    gp.write_text(
        "set terminal pngcairo size 900,600\n"
        "set output 'cost_vs_recovery.png'\n"
        "set xlabel 'CO2 recovery ratio'\n"
        "set ylabel 'LCOM (EUR/MWh)'\n"
        "set key outside right\n"
        + (f"plot {plots}\n" if titles else "")
    )
    return {"csv": csv_path, "dat": dat, "gnuplot": gp}
