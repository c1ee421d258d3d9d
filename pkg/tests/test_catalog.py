import math

import numpy as np
import pytest
import yaml
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import annuity_by_cash_flow
from ptxhub import market as mk
from ptxhub.catalog import (
    GRID_VALUES,
    REFERENCE_SLICE,
    Catalog,
    ScenarioConfig,
    UnknownCarrierError,
    alpha_meoh_el,
    annuity,
    build_hub,
    co2_budget,
    instantiate_technology,
    load_catalog,
    load_config,
    meoh_demand_mwh,
    save_config,
)
from ptxhub.catalog.records import default_catalog_path

RATE = 0.07

# Conversion data transcribed by hand from the published technology tables:
# (technology, side, carrier) -> value.
GOLDEN_COEFFICIENTS = {
    ("biomethane_plant", "inputs", "mt_heat"): 0.103,
    ("biomethane_plant", "inputs", "electricity"): 0.04,
    ("biomethane_plant", "outputs", "co2"): 0.0982,
    ("biomethane_plant", "outputs", "pellets"): 0.09,
    ("skyclean", "inputs", "electricity"): 0.067,
    ("skyclean", "outputs", "mt_heat"): 0.36,
    ("electrolysis", "outputs", "h2"): 0.622,
    ("electrolysis", "outputs", "lt_heat"): 0.223,
    ("methanol_synthesis", "inputs", "mt_heat"): 0.105,
    ("methanol_synthesis", "inputs", "electricity"): 0.018,
    ("methanol_synthesis", "inputs", "h2"): 1.155,
    ("methanol_synthesis", "inputs", "co2"): 0.253,
    ("methanol_synthesis", "outputs", "dh_heat"): 0.256,
    ("co2_compressor", "inputs", "electricity"): 0.096,
    ("h2_compressor", "inputs", "electricity"): 0.010,
    ("heat_pump", "inputs", "lt_heat"): 1.7,
    ("heat_pump", "outputs", "dh_heat"): 2.7,
}
GOLDEN_FIELDS = {
    ("skyclean", "co2_emissions"): -0.164,
    ("skyclean", "ramp_hours"): 12,
    ("electrolysis", "min_load"): 0.15,
    ("methanol_synthesis", "min_load"): 0.20,
    ("methanol_synthesis", "ramp_hours"): 48,
    ("co2_liquid_tank", "electricity"): 0.077,
    ("co2_liquid_tank", "rate_min"): 1,
    ("co2_liquid_tank", "rate_max"): 15,
    ("thermal_energy_storage", "max_rate"): 1 / 6,
    ("thermal_battery", "max_rate"): 1 / 6,
    ("li_ion_battery", "max_rate"): 1,
}


@pytest.fixture(scope="module")
def catalog():
    return load_catalog()


@pytest.fixture(scope="module")
def market():
    return mk.slice_horizon(mk.synthetic_market(2019), 6)


def hub_with(market, **changes):
    return build_hub(ScenarioConfig(hours=market.hours).with_(**changes), market)


# ---------------------------------------------------------------------------
# annuities
# ---------------------------------------------------------------------------


@pytest.mark.parametrize(
    "investment, life, rate, om, expected",
    [(1040, 30, RATE, 1.22, 96.50), (100, 10, 0.0, 0.0, 10.0), (575, 25, RATE, 4, 72.34)],
)
def test_annuity_examples(investment, life, rate, om, expected):
    assert round(annuity(investment, life, rate, om), 2) == pytest.approx(expected, abs=1e-9)


@pytest.mark.parametrize("life", [0, -5])
def test_annuity_rejects_non_positive_lifetime(life):
    with pytest.raises(ValueError):
        annuity(100, life, RATE)


@settings(max_examples=60)
@given(
    investment=st.floats(1.0, 5000.0),
    life=st.integers(1, 60),
    rate=st.floats(0.0, 0.2),
    om=st.floats(0.0, 10.0),
)
def test_annuity_matches_cash_flow(investment, life, rate, om):
    assert annuity(investment, life, rate, om) == pytest.approx(
        annuity_by_cash_flow(investment, life, rate, om), rel=1e-9)


# ---------------------------------------------------------------------------
# catalog file
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("key, value", sorted(GOLDEN_COEFFICIENTS.items()))
def test_golden_coefficients(catalog, key, value):
    assert catalog.coefficient(*key) == value


@pytest.mark.parametrize("key, value", sorted(GOLDEN_FIELDS.items()))
def test_golden_fields(catalog, key, value):
    tech, name = key
    assert catalog.tech(tech)[name] == pytest.approx(value, rel=1e-15)


def test_blank_rows_are_flagged(catalog):
    flagged = catalog.flagged()
    assert "lifetime" in flagged["electric_boiler"]
    assert catalog["electric_boiler"].effective_lifetime == 25.0


def test_catalog_digest_tracks_content(tmp_path, catalog):
    data = yaml.safe_load(default_catalog_path().read_text())
    data["costs"]["onshore_wind"]["investment"] = 1041
    path = tmp_path / "edited.yaml"
    path.write_text(yaml.safe_dump(data))
    edited = load_catalog(path)
    assert edited.digest != catalog.digest
    assert edited["onshore_wind"].investment == 1041


@pytest.mark.parametrize("output, expected", [(190, 18_658.0), (0, 0.0), (240, 23_568.0)])
def test_co2_budget(catalog, output, expected):
    assert co2_budget(output, catalog) == pytest.approx(expected, rel=1e-12)


def test_meoh_demand_arithmetic(catalog):
    assert meoh_demand_mwh(190, 0.9, catalog) == pytest.approx(190_000 * 0.0982 * 0.9 / 0.253, rel=1e-12)


def test_alpha_meoh_counts_compressors(catalog):
    expected = 1 / (1.155 / 0.622 + 0.018 + 0.253 * 0.096 + 1.155 * 0.010)
    assert alpha_meoh_el(catalog) == pytest.approx(expected, rel=1e-12)


# ---------------------------------------------------------------------------
# technology instantiation
# ---------------------------------------------------------------------------


def outputs(link):
    return {bus: float(eff) for bus, eff in link.outputs}


def test_methanol_link(catalog):
    lk = instantiate_technology(catalog, "methanol_synthesis", name="m", input_bus="H2_HP",
                                input_carrier="h2", extra_outputs=(("MeOH", 1.0),))
    assert lk.input_ratio == 1.155
    assert outputs(lk) == {"MT_heat": -0.105, "El2": -0.018, "CO2_HP": -0.253,
                           "DH_heat": 0.256, "MeOH": 1.0}
    assert (lk.min_load, lk.ramp_up, lk.ramp_down) == (0.2, 1 / 48, 1 / 48)
    assert lk.capital_cost == pytest.approx(1000 * annuity(651, 30, RATE, 3.0))


def test_co2_compressor_electricity(catalog):
    lk = instantiate_technology(catalog, "co2_compressor", name="c", input_bus="CO2_LP")
    assert outputs(lk)["El2"] == -0.096


def test_heat_pump_link(catalog):
    lk = instantiate_technology(catalog, "heat_pump", name="hp", input_bus="El2")
    assert lk.input_ratio == 1.0
    assert outputs(lk) == {"LT_heat": -1.7, "DH_heat": 2.7}
    assert lk.ramp_up is None


def test_electrolysis_has_no_hourly_ramp(catalog):
    lk = instantiate_technology(catalog, "electrolysis", name="e", input_bus="El3",
                                cost="electrolysis_100mw")
    assert outputs(lk) == {"H2": 0.622, "LT_heat": 0.223}
    assert lk.ramp_up is None and lk.min_load == 0.15


def test_unknown_carrier(catalog):
    data = yaml.safe_load(default_catalog_path().read_text())
    data["technologies"]["heat_pump"]["outputs"]["plasma"] = 1.0
    with pytest.raises(UnknownCarrierError):
        instantiate_technology(Catalog(data), "heat_pump", name="hp", input_bus="El2")


# ---------------------------------------------------------------------------
# hub topology
# ---------------------------------------------------------------------------


def test_h2_to_grid_has_annual_load(market):
    net = hub_with(market)
    assert net.component("H2_to_grid").annual_total == 272_000.0


def test_standalone_has_no_grid_h2_and_small_electrolyser_cost(market, catalog):
    net = hub_with(market, scenario="MeOH_standalone")
    integrated = hub_with(market)
    assert not net.has_component("H2_to_grid")
    water = integrated.component("electrolysis").capital_cost - catalog.annualized("electrolysis_100mw")
    stack = net.component("electrolysis").capital_cost - water
    assert stack == pytest.approx(1000 * annuity(900, 25, RATE, 4))


def test_meoh_load(market):
    net = hub_with(market)
    assert net.component("MeOH_demand").annual_total == pytest.approx(66_372.332, abs=1e-3)


@pytest.mark.parametrize("dh", [False, True])
@pytest.mark.parametrize("biochar", [False, True])
def test_optional_topology(market, dh, biochar):
    net = hub_with(market, dh_enabled=dh, biochar_enabled=biochar)
    for name in ("heat_pump", "DH_sale", "DH_external"):
        assert net.has_component(name) is dh
    assert net.has_bus("DH_grid") is dh
    assert net.has_component("skyclean") is biochar
    assert net.has_bus("bioChar") is biochar


def test_skyclean_limits(market):
    sky = hub_with(market, biochar_enabled=True).component("skyclean")
    assert sky.potential == 40.0
    assert outputs(sky)["bioChar"] == 0.164


def test_biochar_text_coefficient(market):
    sky = hub_with(market, biochar_enabled=True, biochar_coefficient="text").component("skyclean")
    assert outputs(sky)["bioChar"] == 0.173


def test_pellet_price(catalog):
    assert catalog.pellet_price_per_mwh == pytest.approx(380 / (16.0 * 0.8 / 3.6))


def test_storage_extras(market):
    net = hub_with(market)
    assert outputs(net.component("H2_store_charge"))["El2"] == pytest.approx(-0.068 / 33.33)
    assert outputs(net.component("CO2_cylinders_charge"))["El2"] == pytest.approx(-0.010)
    assert outputs(net.component("CO2_liquefaction"))["El2"] == pytest.approx(-0.077)
    for name in ("CO2_liquefaction", "CO2_evaporation"):
        lk = net.component(name)
        assert (lk.min_build, lk.potential) == (1.0, 15.0)
    assert net.component("battery_charge").store_rate == ("battery", 1.0)
    assert net.component("thermal_battery_discharge").store_rate[1] == pytest.approx(1 / 6)
    assert net.component("hot_water_tank_charge").store_rate[1] == pytest.approx(1 / 6)


def test_scaling_invariance():
    market = mk.slice_horizon(mk.synthetic_market(2019), 6)
    base = hub_with(market, biomethane_output=150.0)
    double = hub_with(market, biomethane_output=300.0)
    assert co2_budget(300.0) == pytest.approx(2 * co2_budget(150.0), rel=1e-15)
    np.testing.assert_allclose(double.component("biomethane_output").series,
                               2 * base.component("biomethane_output").series, rtol=1e-15)
    assert double.component("NG_boiler_existing").fixed_capacity == pytest.approx(
        2 * base.component("NG_boiler_existing").fixed_capacity, rel=1e-15)
    assert double.meta["meoh_demand_mwh"] == pytest.approx(2 * base.meta["meoh_demand_mwh"], rel=1e-15)
    assert double.meta["objective_offset"] == pytest.approx(2 * base.meta["objective_offset"], rel=1e-12)


# ---------------------------------------------------------------------------
# scenario configuration
# ---------------------------------------------------------------------------


def test_reference_slice():
    assert REFERENCE_SLICE == {"co2_tax": 150, "co2_recovery_ratio": 0.9, "max_re": 0.5,
                               "dh_enabled": False, "biochar_enabled": False}
    config = ScenarioConfig()
    assert all(getattr(config, k) == v for k, v in REFERENCE_SLICE.items())


def test_grid_size():
    assert math.prod(len(v) for v in GRID_VALUES.values()) == 720


@pytest.mark.parametrize("change", [{"co2_tax": 100}, {"max_re": 0.3}, {"price_year": 2020}])
def test_out_of_range_values(change):
    problems = ScenarioConfig(**change).validate()
    assert len(problems) == 1
    assert "out of sensitivity range" in problems[0]


def test_non_positive_biomethane():
    assert ScenarioConfig(biomethane_output=0).validate() == ["biomethane_output must be positive"]


def test_biochar_without_tax_warns():
    warnings = ScenarioConfig(biochar_enabled=True, co2_tax=0).warnings()
    assert any("biochar" in w for w in warnings)


def test_config_round_trip(tmp_path):
    config = ScenarioConfig(weeks=(2, 15), co2_tax=250, name="x")
    path = tmp_path / "case.yaml"
    save_config(config, path)
    again = load_config(path)
    assert again == config
    assert again.config_hash() == config.config_hash()


def test_config_hash_changes():
    assert ScenarioConfig().config_hash() != ScenarioConfig(max_re=1.0).config_hash()


def test_unknown_config_key(tmp_path):
    path = tmp_path / "bad.yaml"
    path.write_text("co2_tax: 150\ncolour: blue\n")
    with pytest.raises(ValueError, match="unknown configuration keys"):
        load_config(path)
