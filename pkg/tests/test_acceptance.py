"""Acceptance suite: one test per criterion, each printing a pass/fail line.

Criteria 4, 6 and 7 solve the hub with HiGHS on synthetic market data
(about half a minute per case at 672 hours).  Criterion 8 needs measured
Danish market data and capacity factors; point ``PTXHUB_REAL_DATA_DIR`` at a
folder with ``2019/`` and ``2022/`` subfolders to run it.
"""
import os
import time
from pathlib import Path

import numpy as np
import pytest

from oracles import annuity_by_cash_flow, brute_force, random_toy
from ptxhub import market as mk
from ptxhub.catalog import ScenarioConfig, build_hub, load_catalog
from ptxhub.lpform import assemble
from ptxhub.netcore import Bus, Carrier, Generator, Load, MultiLink, Snapshots, Store, build_network
from ptxhub.results import duality_audit, flows
from ptxhub.solver import check_kkt, solve

pytestmark = pytest.mark.acceptance

REDUCED = ScenarioConfig(weeks=(2, 15, 28, 41))


# ---------------------------------------------------------------------------
# 1. LP optimum against a brute-force oracle
# ---------------------------------------------------------------------------


def test_criterion_1_lp_matches_brute_force(acceptance):
    with acceptance(1, "LP optimum equals grid-search + greedy oracle on random toys") as rec:
        rng = np.random.default_rng(1)
        start = time.perf_counter()
        worst, count = 0.0, 0
        for _ in range(24):
            toy = random_toy(rng)
            assert toy.n_buses <= 3 and toy.n_snapshots <= 3 and 1 <= len(toy.extendables()) <= 2
            expected, _ = brute_force(toy)
            sol = solve(assemble(toy.to_network()), "reference")
            assert sol.optimal
            rel = abs(sol.objective - expected) / max(1.0, abs(expected))
            worst = max(worst, rel)
            count += 1
        elapsed = time.perf_counter() - start
        rec.detail = f"{count} toys, worst rel. diff {worst:.1e}, {elapsed:.1f} s"
        assert worst <= 1e-4
        assert elapsed < 10.0


# ---------------------------------------------------------------------------
# 2. KKT conditions and cost recovery
# ---------------------------------------------------------------------------


def closed_toy(rng):
    """Random system with only extendable capacities, a store and an annual demand."""
    n = int(rng.integers(2, 6))
    snap = Snapshots.hourly(n)
    gens = [
        Generator("wind", "el", extendable=True, capital_cost=float(rng.uniform(5e4, 1.5e5)),
                  availability_max=rng.uniform(0.0, 1.0, n).round(3)),
        Generator("gas", "el", extendable=True, capital_cost=float(rng.uniform(1e4, 4e4)),
                  marginal_cost=float(rng.uniform(40.0, 90.0))),
        Generator("import", "h2", fixed_capacity=np.inf, marginal_cost=float(rng.uniform(150, 300))),
    ]
    links = [
        MultiLink("electrolysis", "el", (("h2", float(rng.uniform(0.55, 0.7))),), extendable=True,
                  capital_cost=float(rng.uniform(2e4, 8e4)), min_load=float(rng.uniform(0, 0.3))),
        MultiLink("charge", "el", (("battery", 0.95),), extendable=True,
                  capital_cost=float(rng.uniform(1e3, 1e4)), store_rate=("battery", 1.0)),
        MultiLink("discharge", "battery", (("el", 0.95),), extendable=True,
                  store_rate=("battery", 1.0)),
    ]
    stores = [Store("battery", "battery", extendable=True, capital_cost=float(rng.uniform(5e3, 3e4)))]
    loads = [
        Load("el_demand", "el", series=rng.uniform(1.0, 10.0, n).round(2)),
        Load("h2_demand", "h2", annual_total=float(rng.uniform(1e4, 5e4))),
    ]
    buses = [Bus("el", "el"), Bus("h2", "h2"), Bus("battery", "el")]
    carriers = [Carrier("el"), Carrier("h2")]
    return build_network(snap, carriers, buses, gens, links, stores, loads)


def test_criterion_2_kkt_and_cost_recovery(acceptance, hubs):
    with acceptance(2, "KKT at 1e-6 and cost recovery on closed systems") as rec:
        rng = np.random.default_rng(2)
        worst_recovery = 0.0
        checked = 0
        for _ in range(12):
            net = closed_toy(rng)
            problem = assemble(net)
            for solver in ("reference", "highs"):
                sol = solve(problem, solver)
                assert sol.optimal
                report = check_kkt(problem, sol, abs_tol=1e-6, rel_tol=1e-6)
                assert report.passed, str(report)
                # value of loads at their shadow prices, straight from the rows
                kinds = [t.kind for t in problem.row_tags]
                other = [i for i, k in enumerate(kinds)
                         if k not in ("nodal_balance", "store_continuity", "annual_demand")]
                assert np.all(problem.rhs[other] == 0.0)
                load_value = float(problem.rhs @ sol.duals)
                rel = abs(load_value - sol.objective) / abs(sol.objective)
                worst_recovery = max(worst_recovery, rel)
                assert duality_audit(sol, problem, net).passed
                checked += 1
        hub = hubs.run(REDUCED)
        hub_report = check_kkt(hub.problem, hub.solution, abs_tol=1e-6, rel_tol=1e-6)
        rec.detail = (f"{checked} toy solves, worst recovery gap {worst_recovery:.1e}; "
                      f"hub KKT worst {hub_report.worst().worst:.1e}")
        assert worst_recovery <= 1e-6
        assert hub_report.passed, str(hub_report)


# ---------------------------------------------------------------------------
# 3. Catalog annuities
# ---------------------------------------------------------------------------

# name: (investment as quoted, fixed O&M %, lifetime, scale to k EUR)
COST_TABLE = {
    "onshore_wind": (1040, 1.22, 30, 1),
    "solar_pv": (380, 1.95, 40, 1),
    "grid_connection": (140, 2, 40, 1),
    "electrolysis_100mw": (575, 4, 25, 1),
    "electrolysis_10mw": (900, 4, 25, 1),
    "water_purification": (135, 2, 25, 1),
    "skyclean": (2011, 3.64, 25, 1),
    "ng_boiler": (50, 1.04, 20, 1),
    "electric_boiler": (70, 1.0, 25, 1),       # blank lifetime -> 25 y
    "biomass_boiler": (590, 7.5, 20, 1),
    "methanol_synthesis": (651, 3.0, 30, 1),
    "co2_compressor": (1516, 4.0, 15, 1),
    "h2_compressor": (79.4, 4.0, 15, 1),
    "co2_liquefaction": (19.76, 5.0, 25, 1),
    "co2_liquid_tank": (2.53, 1.0, 25, 1),
    "co2_cylinders": (77.2, 1.0, 25, 1),
    "h2_storage": (12.3, 2.0, 20, 1),
    "transformers_grid": (0.140, 2.0, 40, 1000),
    "li_ion_battery": (0.142, 0.0, 25, 1000),
    "battery_inverter": (0.160, 0.34, 10, 1000),
    "hot_water_tank": (0.540, 0.55, 25, 1),
    "thermal_battery": (25, 0.0, 25, 1),
    "local_heat_network": (25, 0.0, 25, 1),
    "heat_exchangers": (100, 0.0, 25, 1),
    "local_h2_pipe": (3.8, 3.17, 50, 1),
    "local_co2_pipe": (130, 0.1, 50, 1),
    "heat_pump": (780, 0.11, 20, 1),
}


def test_criterion_3_catalog_annuities(acceptance):
    with acceptance(3, "catalog annuities match cash-flow recomputation, wind 96.50") as rec:
        cat = load_catalog()
        assert set(COST_TABLE) == set(cat.records)
        worst = 0.0
        for name, (inv, om, life, scale) in COST_TABLE.items():
            expected = annuity_by_cash_flow(inv * scale, life, 0.07, om)
            got = cat[name].annualized_keur(0.07)
            worst = max(worst, abs(got - expected) / expected)
        wind = cat["onshore_wind"].annualized_keur(0.07)
        rec.detail = f"{len(COST_TABLE)} rows, worst rel. diff {worst:.1e}, wind {wind:.4f} kEUR/MW/y"
        assert worst <= 1e-9
        assert round(wind, 2) == 96.50


# ---------------------------------------------------------------------------
# 4. RFNBO mask on a solved hub slice
# ---------------------------------------------------------------------------


def straddling_market(hours=48):
    t = np.arange(hours)
    spot = 20.0 + 45.0 * np.sin(2 * np.pi * t / 24.0)
    spot[::7] = 20.0          # exactly at the threshold: purchase allowed
    spot[3::11] = 20.001      # just above: purchase forbidden
    wind = 0.25 + 0.2 * np.cos(2 * np.pi * t / 31.0)
    solar = np.clip(np.sin(2 * np.pi * (t - 6) / 24.0), 0.0, None) * 0.6
    return mk.MarketSeries.from_arrays(spot, ng=30.0, emission=0.0, dk1_demand=1.0 + 0.1 * (t % 5),
                                       wind_cf=wind, solar_cf=solar, year=2019)


def test_criterion_4_rfnbo_mask(acceptance, hubs):
    with acceptance(4, "no grid purchase to the renewable bus above 20 EUR/MWh") as rec:
        market = straddling_market()
        config = ScenarioConfig(name="rfnbo_slice")
        run = hubs.run(config, market=market)
        assert run.solution.optimal
        f = flows(run.network, run.problem, run.solution, "DK1_to_El3")
        above = market.spot > 20.0
        assert above.any() and (~above).any()
        rec.detail = (f"{int(above.sum())} hours above threshold, max flow there {f[above].max():g} MW; "
                      f"{f[~above].sum():.1f} MWh bought in allowed hours")
        assert np.all(f[above] == 0.0)
        assert f[~above].sum() > 0.0


# ---------------------------------------------------------------------------
# 5. External demand sum
# ---------------------------------------------------------------------------

ALPHA_H2 = 0.622
# electrolysis share of the H2 input, synthesis power, CO2 and H2 compressor power
ALPHA_MEOH = 1.0 / (1.155 / 0.622 + 0.018 + 0.253 * 0.096 + 1.155 * 0.010)


@pytest.mark.parametrize("max_re", [0.1, 0.5, 1.0])
def test_criterion_5_external_demand_sum(acceptance, max_re):
    with acceptance(5, "external demand sums to maxRE x PtX electricity at 1e-9") as rec:
        config = ScenarioConfig(max_re=max_re)
        market = mk.synthetic_market(2019, seed=3)
        net = build_hub(config, market)
        d_h2 = 272.0 * 1000.0
        d_meoh = 190.0 * 1000.0 * 0.0982 * 0.9 / 0.253
        expected = (d_h2 / ALPHA_H2 + d_meoh / ALPHA_MEOH) * max_re
        got = float(np.sum(net.component("DK1_external").series))
        rel = abs(got - expected) / expected
        rec.detail = f"maxRE {max_re}: {got:.3f} MWh vs {expected:.3f}, rel {rel:.1e}"
        assert rel <= 1e-9


# ---------------------------------------------------------------------------
# 7. Trends at four representative weeks (run before 6, which reuses them)
# ---------------------------------------------------------------------------

RECOVERY = (0.8, 0.85, 0.9, 0.95, 0.99)
MAX_RE = (0.1, 0.5, 1.0)


def test_criterion_7_trends(acceptance, hubs):
    with acceptance(7, "LCOM up with recovery, standalone dearer, costs down with maxRE (2022)") as rec:
        times = []

        def lev(config):
            start = time.perf_counter()
            run = hubs.run(config)
            times.append(time.perf_counter() - start)
            assert run.solution.optimal, run.solution.message
            return run.result.levelized

        lcom = [lev(REDUCED.with_(co2_recovery_ratio=r))["LCOM"]["eur_per_mwh"] for r in RECOVERY]
        standalone = lev(REDUCED.with_(scenario="MeOH_standalone"))["LCOM"]["eur_per_mwh"]
        integrated = lcom[RECOVERY.index(0.9)]
        year22 = [lev(REDUCED.with_(price_year=2022, max_re=m)) for m in MAX_RE]
        lcoh22 = [v["LCOH"]["eur_per_mwh"] for v in year22]
        lcom22 = [v["LCOM"]["eur_per_mwh"] for v in year22]
        rec.detail = (
            "LCOM by recovery " + "/".join(f"{v:.2f}" for v in lcom)
            + f"; standalone {standalone:.2f} vs {integrated:.2f}"
            + "; 2022 LCOH " + "/".join(f"{v:.2f}" for v in lcoh22)
            + " LCOM " + "/".join(f"{v:.2f}" for v in lcom22)
            + f"; slowest case {max(times):.0f} s"
        )
        tol = 1e-6
        assert all(b >= a - tol for a, b in zip(lcom, lcom[1:]))
        assert standalone > integrated
        assert all(b <= a + tol for a, b in zip(lcoh22, lcoh22[1:]))
        assert all(b <= a + tol for a, b in zip(lcom22, lcom22[1:]))
        assert max(times) < 300.0


# ---------------------------------------------------------------------------
# 6. Operational feasibility in every solved hub case
# ---------------------------------------------------------------------------


def operational_violations(run, tol=1e-6):
    net, problem, sol = run.network, run.problem, run.solution
    cap = lambda name: sol.x[problem.col_index[f"cap.{name}"]]  # noqa: E731
    out = []
    F = cap("methanol_synthesis")
    f = flows(net, problem, sol, "methanol_synthesis")
    scale = tol * max(1.0, F)
    if np.any(f < 0.20 * F - scale):
        out.append("methanol min-load")
    if np.any(f > F + scale):
        out.append("methanol capacity")
    if np.any(np.abs(np.diff(f)) > F / 48.0 + scale):
        out.append("methanol ramp")
    energy = cap("battery")
    for name in ("battery_charge", "battery_discharge"):
        if np.any(flows(net, problem, sol, name) > 1.0 * energy + tol * max(1.0, energy)):
            out.append(f"{name} C-rate")
    for name in ("CO2_liquefaction", "CO2_evaporation"):
        c = cap(name)
        if c > tol and not 1.0 - tol <= c <= 15.0 + tol:
            out.append(f"{name} rate {c:g} outside [1, 15]")
        if np.any(flows(net, problem, sol, name) > 15.0 + tol):
            out.append(f"{name} hourly flow above 15 t/h")
    return out


def test_criterion_6_operational_feasibility(acceptance, hubs):
    with acceptance(6, "MeOH min-load/ramp, battery C-rate, liquid CO2 rate in every solved case") as rec:
        hubs.run(REDUCED)
        runs = [r for r in hubs.all_runs() if r.solution.optimal]
        bad = {r.config.name or r.config.config_hash(): operational_violations(r) for r in runs}
        bad = {k: v for k, v in bad.items() if v}
        built = sum(1 for r in runs
                    if r.solution.x[r.problem.col_index["cap.CO2_liquefaction"]] > 1e-6)
        rec.detail = f"{len(runs)} solved cases, {built} with liquid CO2 built"
        assert not bad, bad


# ---------------------------------------------------------------------------
# 8. Published numbers (needs measured data)
# ---------------------------------------------------------------------------

DATA_ENV = "PTXHUB_REAL_DATA_DIR"


def test_criterion_8_published_numbers(acceptance, hubs):
    with acceptance(8, "reproduce published LCOH/LCOM and standalone penalty") as rec:
        folder = os.environ.get(DATA_ENV)
        if not folder or not all((Path(folder) / str(y)).is_dir() for y in (2019, 2022)):
            rec.detail = f"waived: set {DATA_ENV} to measured 2019/2022 data"
            pytest.skip(rec.detail)
        out = []
        for year in (2019, 2022):
            base = ScenarioConfig(price_year=year, data_dir=folder)
            market = mk.load_market(folder, year, base.tariffs)
            integ = hubs.run(base, market=market)
            alone = hubs.run(base.with_(scenario="MeOH_standalone"), market=market)
            lcoh = integ.result.levelized["LCOH"]["eur_per_mwh"]
            lcom = integ.result.levelized["LCOM"]["eur_per_mwh"]
            penalty = alone.result.levelized["LCOM"]["eur_per_mwh"] / lcom - 1.0
            out.append((year, lcoh, lcom, penalty))
        rec.detail = "; ".join(f"{y}: LCOH {h:.1f} LCOM {m:.1f} penalty {100 * p:.0f}%"
                               for y, h, m, p in out)
        for _, lcoh, lcom, penalty in out:
            assert 87.0 * 0.85 <= lcoh <= 92.0 * 1.15
            assert 111.0 * 0.85 <= lcom <= 114.0 * 1.15
            assert 0.13 <= penalty <= 0.33
