import math

import numpy as np
import pandas as pd
import pytest

from ptxhub import market as mk
from ptxhub import sweep as sw
from ptxhub.catalog import GRID_VALUES, ScenarioConfig, load_catalog, load_config
from ptxhub.results import CaseResult

TINY = ScenarioConfig(hours=6)


@pytest.fixture(scope="module")
def markets():
    return {y: mk.synthetic_market(y, seed=0) for y in (2019, 2022)}


@pytest.fixture(scope="module")
def catalog():
    return load_catalog()


# ---------------------------------------------------------------------------
# enumeration
# ---------------------------------------------------------------------------


def test_default_grid_has_720_cases():
    cases = sw.enumerate_cases()
    assert len(cases) == math.prod(len(v) for v in GRID_VALUES.values()) == 720
    assert len({c.config_hash() for c in cases}) == 720


def test_single_value_lists_give_one_case():
    (case,) = sw.enumerate_cases(grid={k: [v[0]] for k, v in GRID_VALUES.items()})
    assert case.validate() == []


def test_reference_slice_defaults():
    c = ScenarioConfig()
    assert (c.co2_tax, c.co2_recovery_ratio, c.max_re, c.dh_enabled, c.biochar_enabled) == (
        150, 0.9, 0.5, False, False)


def test_enumeration_order_is_deterministic():
    grid = {"max_re": [0.1, 1.0], "scenario": ["H2_to_grid", "MeOH_standalone"]}
    cases = sw.enumerate_cases(grid=grid)
    assert [(c.scenario, c.max_re) for c in cases] == [
        ("H2_to_grid", 0.1), ("H2_to_grid", 1.0),
        ("MeOH_standalone", 0.1), ("MeOH_standalone", 1.0)]
    assert cases[0].name == "H2_to_grid-tax150.0-rec0.9-re0.1-y2019-dh0-bc0"
    assert [c.name for c in cases] == [c.name for c in sw.enumerate_cases(grid=grid)]


@pytest.mark.parametrize(
    "grid, message",
    [({"co2_tax": []}, "empty value list"), ({"colour": [1]}, "unknown sweep parameter")],
)
def test_enumeration_errors(grid, message):
    with pytest.raises(ValueError, match=message):
        sw.enumerate_cases(grid=grid)


def test_sweep_spec_file(tmp_path):
    path = tmp_path / "spec.yaml"
    path.write_text("base:\n  hours: 24\n  data_dir: data\ngrid:\n  max_re: [0.1, 0.5]\njobs: 3\n")
    spec = sw.load_sweep_spec(path)
    assert spec.jobs == 3
    assert [c.max_re for c in spec.cases()] == [0.1, 0.5]
    assert spec.base.data_dir == str((tmp_path / "data").resolve())
    path.write_text("grid: {}\nworkers: 2\n")
    with pytest.raises(ValueError, match="unknown sweep keys"):
        sw.load_sweep_spec(path)


# ---------------------------------------------------------------------------
# single case
# ---------------------------------------------------------------------------


def test_run_case_reference_week(markets, catalog):
    res = sw.run_case(ScenarioConfig(hours=168), catalog, markets[2019])
    assert res.optimal
    assert res.capacities["wind"] > 0
    assert res.provenance["config_hash"] == ScenarioConfig(hours=168).config_hash()
    assert res.provenance["catalog_digest"] == catalog.digest
    assert res.kkt["passed"] and res.audit["passed"]


def test_run_case_with_bad_data_path(tmp_path):
    res = sw.run_case(TINY.with_(data_dir=str(tmp_path / "missing")))
    assert res.status == "error"
    assert "missing" in res.message


def test_run_case_without_data():
    res = sw.run_case(TINY)
    assert res.status == "error"
    assert "no data_dir" in res.message


def test_run_case_with_invalid_config(markets):
    res = sw.run_case(TINY.with_(co2_recovery_ratio=1.2), market=markets[2019])
    assert res.status == "error"
    assert "co2_recovery_ratio" in res.message


def test_min_build_is_respected(markets, catalog):
    res = sw.run_case(ScenarioConfig(hours=168, co2_recovery_ratio=0.99), catalog, markets[2019])
    cap = res.capacities["CO2_liquefaction"]
    assert cap == pytest.approx(0.0, abs=1e-6) or cap >= 1.0 - 1e-6


# ---------------------------------------------------------------------------
# sweeps
# ---------------------------------------------------------------------------


@pytest.fixture(scope="module")
def four_cases():
    grid = {"scenario": ["H2_to_grid", "MeOH_standalone"], "max_re": [0.1, 1.0]}
    return sw.enumerate_cases(TINY, grid)


def objectives(results):
    return [r.objective for r in results]


def test_parallel_sweep_is_deterministic(tmp_path, four_cases, markets):
    serial = sw.run_sweep(four_cases, tmp_path / "a", jobs=1, markets=markets)
    parallel = sw.run_sweep(four_cases, tmp_path / "b", jobs=2, markets=markets)
    assert [r.name for r in parallel] == [c.name for c in four_cases]
    assert all(r.optimal for r in serial)
    np.testing.assert_allclose(objectives(parallel), objectives(serial), rtol=1e-12)


def test_sweep_layout_and_resume(tmp_path, four_cases, markets, monkeypatch):
    sw.run_sweep(four_cases[:2], tmp_path, markets=markets)
    folders = sorted(p.name for p in (tmp_path / "cases").iterdir())
    assert folders == sorted(c.config_hash() for c in four_cases[:2])
    for c in four_cases[:2]:
        assert (sw.case_dir(tmp_path, c) / "config.yaml").exists()
        assert (sw.case_dir(tmp_path, c) / "result.json").exists()

    ran = []
    real = sw.run_case

    def spy(config, *args, **kwargs):
        ran.append(config.name)
        return real(config, *args, **kwargs)

    monkeypatch.setattr(sw, "run_case", spy)
    results = sw.run_sweep(four_cases, tmp_path, markets=markets)
    assert ran == [c.name for c in four_cases[2:]]
    assert len(results) == 4 and all(r.optimal for r in results)
    assert len(sw.load_results(tmp_path)) == 4


def test_error_cases_are_retried_on_resume(tmp_path, monkeypatch):
    case = TINY.with_(name="bad", data_dir=str(tmp_path / "nowhere"))
    (first,) = sw.run_sweep([case], tmp_path)
    assert first.status == "error"
    ran = []
    monkeypatch.setattr(sw, "run_case", lambda c, **kw: ran.append(c) or first)
    sw.run_sweep([case], tmp_path)
    assert len(ran) == 1


def test_rerun_from_persisted_config_is_reproducible(tmp_path, markets):
    options = sw.RunOptions(solver="reference")
    (first,) = sw.run_sweep([TINY.with_(name="tiny")], tmp_path, options=options, markets=markets)
    config = load_config(sw.case_dir(tmp_path, TINY.with_(name="tiny")) / "config.yaml")
    again = sw.run_case(config, market=markets[2019], options=options)
    assert again.objective == pytest.approx(first.objective, rel=1e-9)
    assert again.solver["fingerprint"] == first.solver["fingerprint"]


# ---------------------------------------------------------------------------
# aggregation
# ---------------------------------------------------------------------------


def fake_result(name, max_re, lcom, wind, price, scenario="H2_to_grid", year=2019, rec=0.9):
    cfg = ScenarioConfig(scenario=scenario, max_re=max_re, price_year=year,
                         co2_recovery_ratio=rec).to_dict()
    return CaseResult(name, "optimal", cfg, objective=1.0,
                      levelized={"LCOH": {"eur_per_mwh": 90.0}, "LCOM": {"eur_per_mwh": lcom}},
                      capacities={"wind": wind, "grid": math.inf},
                      shadow={"El3": {"mean": price}}, provenance={"config_hash": name})


def test_aggregate_two_cases():
    long, matrices = sw.aggregate([fake_result("a", 0.1, 110.0, 200.0, 50.0),
                                   fake_result("b", 0.5, 105.0, 230.0, 48.0)])
    lcom = long[long["metric"] == "LCOM"].set_index("max_re")["value"]
    assert lcom[0.5] - lcom[0.1] == pytest.approx(-5.0)
    assert "capacity:grid" not in set(long["metric"])
    assert matrices == {}


def test_aggregate_correlation_matrix():
    results = [fake_result(str(i), 0.5, 100.0 + i, 200.0 + 10 * i, 50.0 - i) for i in range(4)]
    _, matrices = sw.aggregate(results)
    corr = matrices["H2_to_grid_2019"]
    assert corr.loc["capacity:wind", "price_mean:El3"] == pytest.approx(-1.0)


def test_aggregate_empty_has_header():
    long, matrices = sw.aggregate([])
    assert long.empty and list(long.columns) == sw.LONG_COLUMNS
    assert matrices == {}
    assert list(sw.cost_vs_recovery(long).columns) == sw.CASE_COLUMNS + ["LCOH", "LCOM"]


def test_failed_case_keeps_a_status_row():
    long, _ = sw.aggregate([CaseResult("x", "error", ScenarioConfig().to_dict())])
    assert list(long["metric"]) == ["status"]
    assert long["status"].iloc[0] == "error"


def test_cost_vs_recovery_and_gnuplot(tmp_path):
    results = [fake_result(f"{s}{r}", 0.5, 100 + 10 * r, 90.0, 50.0, scenario=s, rec=r)
               for s in ("MeOH_standalone", "H2_to_grid") for r in (0.99, 0.8)]
    table = sw.cost_vs_recovery(sw.aggregate(results)[0])
    assert len(table) == 4
    assert list(table["scenario"]) == ["H2_to_grid"] * 2 + ["MeOH_standalone"] * 2
    assert list(table["co2_recovery_ratio"]) == [0.8, 0.99, 0.8, 0.99]
    paths = sw.write_gnuplot(table, tmp_path)
    blocks = paths["dat"].read_text().split("\n\n\n")
    assert len(blocks) == 2
    assert blocks[0].splitlines()[1:] == [
        "# H2_to_grid tax150.0 re0.5 y2019 dh0 bc0", "0.8 108.0 90.0", "0.99 109.9 90.0"]
    assert "index 1" in paths["gnuplot"].read_text()
    assert len(pd.read_csv(paths["csv"])) == 4


def test_write_aggregate(tmp_path):
    results = [fake_result(str(i), 0.5, 100.0 + i, 200.0 + i, 50.0 + i) for i in range(3)]
    paths = sw.write_aggregate(results, tmp_path)
    assert set(paths) == {"long", "corr_H2_to_grid_2019"}
    assert len(pd.read_csv(paths["long"])) == 3 * 6


@pytest.mark.slow
def test_full_recovery_needs_storage(hubs, reduced_config):
    low = hubs.run(reduced_config.with_(co2_recovery_ratio=0.8)).result.capacities
    high = hubs.run(reduced_config.with_(co2_recovery_ratio=0.99)).result.capacities
    assert high["CO2_liquid"] + high["H2_store"] > 1e-3
    assert high["CO2_liquid"] + high["H2_store"] > low["CO2_liquid"] + low["H2_store"]
