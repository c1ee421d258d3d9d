"""Turn a scenario configuration plus market data into a hub network.

Bus layout
----------
External grids: ``DK1`` (electricity), ``NG``, ``DH_grid`` (only with district
heating sales) and ``bioChar`` (only with biochar credits).

Inside the hub: ``El3`` (renewables and RFNBO production), ``El2`` (all other
electricity users), ``H2`` and ``H2_HP`` (compressed), ``CO2_LP`` and
``CO2_HP``, ``biogas``, ``biomethane``, ``pellets``, ``MeOH`` and three heat
levels ``MT_heat``, ``DH_heat``, ``LT_heat``.  Every store sits on a bus of its
own and exchanges with the hub through a charge and a discharge link.

Capital costs on components are annual EUR per unit of capacity; flows of
links are measured on their input bus (``input_ratio`` rescales a product
referenced link such as methanol synthesis).
"""
from __future__ import annotations

import logging
import math
from typing import Mapping

import numpy as np

from .. import market as mk
from ..netcore import Bus, Carrier, Generator, Load, MultiLink, Network, Snapshots, Store
from .records import Catalog, load_catalog
from .scenario import ScenarioConfig

log = logging.getLogger(__name__)

INF = math.inf

CARRIERS = (
    Carrier("electricity"),
    Carrier("hydrogen"),
    Carrier("co2", "t/h"),
    Carrier("biogas"),
    Carrier("methane"),
    Carrier("natural_gas"),
    Carrier("pellets"),
    Carrier("methanol"),
    Carrier("biochar", "t/h"),
    Carrier("heat_mt"),
    Carrier("heat_dh"),
    Carrier("heat_lt"),
)

# default bus for each catalog carrier key
CARRIER_BUS = {
    "electricity": "El2",
    "h2": "H2",
    "co2": "CO2_HP",
    "pellets": "pellets",
    "mt_heat": "MT_heat",
    "dh_heat": "DH_heat",
    "lt_heat": "LT_heat",
}

TRADE_COMPONENTS = (
    "DK1_to_El3", "DK1_to_El2", "El3_to_DK1", "NG_supply", "DH_sale",
    "biochar_credit", "pellets_market",
)


class UnknownCarrierError(KeyError):
    pass


# ---------------------------------------------------------------------------
# derived quantities
# ---------------------------------------------------------------------------


def alpha_h2_el(catalog: Catalog) -> float:
    """MW of hydrogen per MW of electricity in electrolysis."""
    return catalog.coefficient("electrolysis", "outputs", "h2")


def alpha_meoh_el(catalog: Catalog) -> float:
    """MW of methanol per MW of total electricity at steady state.

    Counts the electrolysis power for the hydrogen input, the synthesis
    electricity, and both compressors (CO2 per tonne, H2 per MW)::

        1 / (h2_in / alpha_h2 + el_syn + co2_in * el_co2 + h2_in * el_h2)
    """
    h2_in = catalog.coefficient("methanol_synthesis", "inputs", "h2")
    co2_in = catalog.coefficient("methanol_synthesis", "inputs", "co2")
    el_syn = catalog.coefficient("methanol_synthesis", "inputs", "electricity")
    el_co2 = catalog.coefficient("co2_compressor", "inputs", "electricity")
    el_h2 = catalog.coefficient("h2_compressor", "inputs", "electricity")
    total = h2_in / alpha_h2_el(catalog) + el_syn + co2_in * el_co2 + h2_in * el_h2
    return 1.0 / total


def meoh_demand_mwh(biomethane_output_gwh: float, recovery: float,
                    catalog: Catalog | None = None) -> float:
    """Annual methanol demand (MWh/y) set by the converted share of biogenic CO2.

    >>> round(meoh_demand_mwh(190, 0.9), 1)
    66372.3
    """
    cat = catalog or load_catalog()
    co2 = biomethane_output_gwh * 1000.0 * cat.coefficient("biomethane_plant", "outputs", "co2")
    return co2 * recovery / cat.coefficient("methanol_synthesis", "inputs", "co2")


def ptx_electricity_mwh(config: ScenarioConfig, catalog: Catalog) -> float:
    """Annual electricity used by the PtX processes (MWh/y) at steady state."""
    h2 = config.h2_demand_gwh * 1000.0
    meoh = meoh_demand_mwh(config.biomethane_output, config.co2_recovery_ratio, catalog)
    return h2 / alpha_h2_el(catalog) + meoh / alpha_meoh_el(catalog)


# ---------------------------------------------------------------------------
# technology instantiation
# ---------------------------------------------------------------------------


def _signed_coefficients(tech: Mapping) -> list[tuple[str, float]]:
    out = [(c, -float(v)) for c, v in (tech.get("inputs") or {}).items()]
    out += [(c, float(v)) for c, v in (tech.get("outputs") or {}).items()]
    return out


def instantiate_technology(
    catalog: Catalog,
    tech: str,
    *,
    name: str,
    input_bus: str,
    cost: str | None = None,
    rate: float | None = None,
    buses: Mapping[str, str] | None = None,
    input_carrier: str | None = None,
    extra_outputs: tuple = (),
    capital_cost: float | None = None,
    marginal_cost=None,
    **link_kwargs,
) -> MultiLink:
    """Build the conversion link of one catalog technology.

    Parameters
    ----------
    catalog : Catalog
    tech : str
        Key in the catalog's ``technologies`` section (coefficients, min load,
        ramp time).
    name, input_bus : str
        Link name and the bus carrying the flow variable.
    cost : str, optional
        Key of the cost row; defaults to ``tech``.  Pass ``""`` for a
        cost-free link.
    rate : float, optional
        Discount rate for the annuity; defaults to the catalog rate.
    buses : mapping, optional
        Carrier key to bus overrides on top of :data:`CARRIER_BUS`.
    input_carrier : str, optional
        When the reference flow is a product, the carrier drawn from
        ``input_bus``; its coefficient becomes ``input_ratio``.
    extra_outputs : tuple
        Additional ``(bus, efficiency)`` pairs, e.g. the product itself.
    capital_cost, marginal_cost : optional
        Overrides in EUR per unit of link capacity (per year) and per unit of
        flow.

    Raises
    ------
    UnknownCarrierError
        A coefficient names a carrier with no bus mapping.
    """
    spec = catalog.tech(tech)
    mapping = dict(CARRIER_BUS)
    mapping.update(buses or {})
    input_ratio = 1.0
    outputs = []
    for carrier, coef in _signed_coefficients(spec):
        if carrier == input_carrier:
            input_ratio = -coef
            continue
        if carrier not in mapping:
            raise UnknownCarrierError(f"{tech}: unknown carrier {carrier!r}")
        outputs.append((mapping[carrier], coef))
    outputs.extend(extra_outputs)
    cost_key = tech if cost is None else cost
    rate = catalog.discount_rate if rate is None else rate
    record = catalog[cost_key] if cost_key else None
    if capital_cost is None:
        capital_cost = record.annualized(rate) if record is not None else 0.0
    if marginal_cost is None:
        marginal_cost = record.marginal if record is not None else 0.0
    ramp_hours = spec.get("ramp_hours")
    ramp = 1.0 / ramp_hours if ramp_hours is not None and ramp_hours > 1 else None
    kw = dict(
        extendable=True,
        min_load=float(spec.get("min_load", 0.0)),
        ramp_up=ramp,
        ramp_down=ramp,
    )
    kw.update(link_kwargs)
    return MultiLink(name, input_bus, tuple(outputs), input_ratio=input_ratio,
                     capital_cost=capital_cost, marginal_cost=marginal_cost, **kw)


def _storage(name, hub_bus, store_bus, *, energy_cost, charge_eff=1.0, discharge_eff=1.0,
             charge_cost=0.0, rate=None, charge_extra=(), group=None, potential=None,
             min_build=0.0):
    """Store on its own bus plus charge and discharge links."""
    store = Store(name, store_bus, extendable=True, capital_cost=energy_cost, group=group)
    link_kw = dict(extendable=rate is not None, fixed_capacity=0.0 if rate is not None else INF,
                   group=group, potential=potential, min_build=min_build)
    if rate is not None:
        link_kw["store_rate"] = (name, rate)
    charge = MultiLink(f"{name}_charge", hub_bus, ((store_bus, charge_eff),) + tuple(charge_extra),
                       capital_cost=charge_cost, **link_kw)
    discharge = MultiLink(f"{name}_discharge", store_bus, ((hub_bus, discharge_eff),), **link_kw)
    return store, charge, discharge


# ---------------------------------------------------------------------------
# the hub
# ---------------------------------------------------------------------------


def build_hub(config: ScenarioConfig, market: mk.MarketSeries,
              catalog: Catalog | None = None) -> Network:
    """Assemble the hub network for one scenario.

    ``market`` must already cover the modelled horizon (see
    :func:`ptxhub.market.slice_horizon`); annual quantities are prorated to
    its length.
    """
    cat = catalog or load_catalog(config.catalog_path)
    rate = config.discount_rate
    n = market.hours
    frac = n / 8760.0
    snapshots = Snapshots(market.timestamps)
    ann = lambda key: cat.annualized(key, rate)  # noqa: E731
    const = cat.const

    buses = [
        Bus("DK1", "electricity"), Bus("El3", "electricity"), Bus("El2", "electricity"),
        Bus("NG", "natural_gas"), Bus("biogas", "biogas"), Bus("biomethane", "methane"),
        Bus("H2", "hydrogen"), Bus("H2_HP", "hydrogen"),
        Bus("CO2_LP", "co2"), Bus("CO2_HP", "co2"),
        Bus("pellets", "pellets"), Bus("MeOH", "methanol"),
        Bus("MT_heat", "heat_mt"), Bus("DH_heat", "heat_dh"), Bus("LT_heat", "heat_lt"),
        Bus("battery", "electricity"), Bus("H2_tank", "hydrogen"),
        Bus("CO2_cyl", "co2"), Bus("CO2_liq", "co2"),
        Bus("thermal_battery", "heat_mt"), Bus("hot_water", "heat_dh"),
    ]
    gens: list[Generator] = []
    links: list[MultiLink] = []
    stores: list[Store] = []
    loads: list[Load] = []

    purchase = mk.purchase_price(market, config.co2_tax)
    sale = mk.sale_price(market)
    ng = mk.ng_price(market, config.co2_tax)
    mask = mk.rfnbo_mask(market.spot, const("rfnbo_spot_threshold"))

    # biomethane plant, fixed and flat --------------------------------------
    bm = cat.tech("biomethane_plant")
    p_bm = config.biomethane_output * 1000.0 / 8760.0  # MW
    p_max = max(float(bm["capacity_gwh_per_year"]), config.biomethane_output) * 1000.0 / 8760.0
    gens.append(Generator("biogas_feed", "biogas", fixed_capacity=INF, group="biomethane"))
    links.append(instantiate_technology(
        cat, "biomethane_plant", name="biomethane_plant", input_bus="biogas", cost="",
        buses={"co2": "CO2_LP"}, extra_outputs=(("biomethane", 1.0),),
        extendable=False, fixed_capacity=p_max, group="biomethane",
    ))
    loads.append(Load("biomethane_output", "biomethane", series=np.full(n, p_bm)))

    boilers = cat.tech("boilers")
    mt_need = bm["inputs"]["mt_heat"] * p_bm
    links.append(MultiLink("NG_boiler_existing", "NG", (("MT_heat", boilers["ng_efficiency"]),),
                           fixed_capacity=mt_need / boilers["ng_efficiency"],
                           marginal_cost=cat["ng_boiler"].marginal * boilers["ng_efficiency"],
                           group="biomethane"))
    # reference operation: NG heat and grid electricity at scenario prices
    reference_cost = (bm["inputs"]["mt_heat"] * (ng / boilers["ng_efficiency"]
                                                 + cat["ng_boiler"].marginal)
                      + bm["inputs"]["electricity"] * purchase)
    objective_offset = -float(np.sum(reference_cost * p_bm))

    # renewables and grid interface ----------------------------------------
    gens.append(Generator("wind", "El3", extendable=True, capital_cost=ann("onshore_wind"),
                          marginal_cost=cat["onshore_wind"].marginal,
                          availability_max=market.wind_cf, group="renewables"))
    gens.append(Generator("solar", "El3", extendable=True, capital_cost=ann("solar_pv"),
                          marginal_cost=cat["solar_pv"].marginal,
                          availability_max=market.solar_cf, group="renewables"))
    links.append(MultiLink("DK1_to_El3", "DK1", (("El3", 1.0),), extendable=True,
                           capital_cost=ann("grid_connection"), marginal_cost=purchase,
                           availability_max=mask, group="renewables"))
    links.append(MultiLink("El3_to_DK1", "El3", (("DK1", 1.0),), extendable=True,
                           capital_cost=ann("grid_connection"), marginal_cost=-sale,
                           group="renewables"))
    links.append(MultiLink("DK1_to_El2", "DK1", (("El2", 1.0),), extendable=True,
                           capital_cost=ann("transformers_grid"), marginal_cost=purchase,
                           group="symbiosis"))
    links.append(MultiLink("El3_to_El2", "El3", (("El2", 1.0),), extendable=True,
                           capital_cost=ann("transformers_grid"), group="symbiosis"))

    # external DK1 demand capping renewable sales
    ptx_el = ptx_electricity_mwh(config, cat) * frac
    dk1 = mk.external_demand(market.dk1_demand, config.max_re, ptx_electricity=ptx_el)
    gens.append(Generator("DK1_supply", "DK1", fixed_capacity=INF, group="external"))
    loads.append(Load("DK1_external", "DK1", series=dk1))

    gens.append(Generator("NG_supply", "NG", fixed_capacity=INF, marginal_cost=ng, group="trade"))

    # battery on the renewable bus
    li = cat.tech("li_ion_battery")
    st, ch, dis = _storage("battery", "El3", "battery", energy_cost=ann("li_ion_battery"),
                           charge_eff=li["charge_efficiency"],
                           discharge_eff=li["discharge_efficiency"],
                           charge_cost=ann("battery_inverter"), rate=float(li["max_rate"]),
                           group="renewables")
    stores.append(st)
    links += [ch, dis]

    # hydrogen ------------------------------------------------------------
    h2_lhv = const("h2_lhv_mwh_per_t")
    el_spec = cat.tech("electrolysis")
    water_t_per_mw = alpha_h2_el(cat) / h2_lhv * float(el_spec["water_t_per_t_h2"])
    el_cost = "electrolysis_100mw" if config.integrated else "electrolysis_10mw"
    links.append(instantiate_technology(
        cat, "electrolysis", name="electrolysis", input_bus="El3", cost=el_cost, rate=rate,
        capital_cost=ann(el_cost) + water_t_per_mw * ann("water_purification"),
        group="electrolysis",
    ))
    h2c = cat.tech("h2_compressor")
    el_h2c = h2c["inputs"]["electricity"]
    links.append(instantiate_technology(
        cat, "h2_compressor", name="H2_compressor", input_bus="H2", rate=rate,
        extra_outputs=(("H2_HP", 1.0), ("DH_heat", h2c["intercooling_heat_share"] * el_h2c)),
        capital_cost=ann("h2_compressor") + cat.network["h2_network_km"] * ann("local_h2_pipe"),
        group="meoh_chain",
    ))
    h2t = cat.tech("h2_tank")
    st, ch, dis = _storage("H2_store", "H2_HP", "H2_tank", energy_cost=ann("h2_storage"),
                           charge_extra=(("El2", -h2t["electricity_roundtrip"] / h2_lhv),),
                           group="meoh_chain")
    stores.append(st)
    links += [ch, dis]
    if config.integrated:
        loads.append(Load("H2_to_grid", "H2", annual_total=config.h2_demand_gwh * 1000.0))

    # CO2 -----------------------------------------------------------------
    co2c = cat.tech("co2_compressor")
    el_co2c = co2c["inputs"]["electricity"]
    links.append(instantiate_technology(
        cat, "co2_compressor", name="CO2_compressor", input_bus="CO2_LP", rate=rate,
        extra_outputs=(("CO2_HP", 1.0), ("DH_heat", co2c["intercooling_heat_share"] * el_co2c)),
        capital_cost=ann("co2_compressor") + cat.network["co2_network_km"] * ann("local_co2_pipe"),
        group="meoh_chain",
    ))
    links.append(MultiLink("CO2_vent", "CO2_LP", (), fixed_capacity=INF, group="symbiosis"))
    cyl = cat.tech("co2_cylinders")
    st, ch, dis = _storage("CO2_cylinders", "CO2_HP", "CO2_cyl", energy_cost=ann("co2_cylinders"),
                           charge_extra=(("El2", -cyl["electricity_roundtrip"]),),
                           group="meoh_chain")
    stores.append(st)
    links += [ch, dis]
    liq = cat.tech("co2_liquid_tank")
    evaporator_cost = 1000.0 * cat.annual_costs["co2_evaporator"]
    stores.append(Store("CO2_liquid", "CO2_liq", extendable=True,
                        capital_cost=ann("co2_liquid_tank"), group="meoh_chain"))
    liq_kw = dict(extendable=True, potential=float(liq["rate_max"]),
                  min_build=float(liq["rate_min"]) if config.enforce_min_build else 0.0,
                  group="meoh_chain")
    links.append(MultiLink("CO2_liquefaction", "CO2_LP",
                           (("CO2_liq", 1.0), ("El2", -liq["electricity"]),
                            ("LT_heat", liq["refrigeration_heat"])),
                           capital_cost=ann("co2_liquefaction"), **liq_kw))
    links.append(MultiLink("CO2_evaporation", "CO2_liq", (("CO2_LP", 1.0),),
                           capital_cost=evaporator_cost, **liq_kw))

    # methanol ------------------------------------------------------------
    links.append(instantiate_technology(
        cat, "methanol_synthesis", name="methanol_synthesis", input_bus="H2_HP", rate=rate,
        input_carrier="h2", extra_outputs=(("MeOH", 1.0),), group="meoh_chain",
    ))
    meoh = meoh_demand_mwh(config.biomethane_output, config.co2_recovery_ratio, cat)
    loads.append(Load("MeOH_demand", "MeOH", annual_total=meoh))

    # heat ----------------------------------------------------------------
    links.append(MultiLink("NG_boiler", "NG", (("MT_heat", boilers["ng_efficiency"]),),
                           extendable=True,
                           capital_cost=ann("ng_boiler") * boilers["ng_efficiency"],
                           marginal_cost=cat["ng_boiler"].marginal * boilers["ng_efficiency"],
                           group="heat"))
    links.append(MultiLink("electric_boiler", "El2", (("MT_heat", boilers["electric_efficiency"]),),
                           extendable=True,
                           capital_cost=ann("electric_boiler") * boilers["electric_efficiency"],
                           marginal_cost=cat["electric_boiler"].marginal
                           * boilers["electric_efficiency"],
                           group="heat"))
    links.append(MultiLink("biomass_boiler", "pellets", (("MT_heat", boilers["biomass_efficiency"]),),
                           extendable=True,
                           capital_cost=ann("biomass_boiler") * boilers["biomass_efficiency"],
                           marginal_cost=cat["biomass_boiler"].marginal
                           * boilers["biomass_efficiency"],
                           group="heat"))
    hx = ann("heat_exchangers")
    links.append(MultiLink("MT_to_DH", "MT_heat", (("DH_heat", 1.0),), extendable=True,
                           capital_cost=hx, group="symbiosis"))
    links.append(MultiLink("DH_to_LT", "DH_heat", (("LT_heat", 1.0),), extendable=True,
                           capital_cost=hx, group="symbiosis"))
    links.append(MultiLink("LT_vent", "LT_heat", (), fixed_capacity=INF, group="symbiosis"))

    tb = cat.tech("thermal_battery")
    eff = math.sqrt(tb["roundtrip_efficiency"])
    st, ch, dis = _storage("thermal_battery", "MT_heat", "thermal_battery",
                           energy_cost=ann("thermal_battery"), charge_eff=eff, discharge_eff=eff,
                           rate=float(tb["max_rate"]), group="heat")
    stores.append(st)
    links += [ch, dis]
    tes = cat.tech("thermal_energy_storage")
    eff = math.sqrt(tes["roundtrip_efficiency"])
    st, ch, dis = _storage("hot_water_tank", "DH_heat", "hot_water",
                           energy_cost=ann("hot_water_tank"), charge_eff=eff, discharge_eff=eff,
                           rate=float(tes["max_rate"]), group="heat")
    stores.append(st)
    links += [ch, dis]

    if config.dh_enabled:
        buses.append(Bus("DH_grid", "heat_dh"))
        hp = cat["heat_pump"]
        dh_out = cat.coefficient("heat_pump", "outputs", "dh_heat")
        links.append(instantiate_technology(
            cat, "heat_pump", name="heat_pump", input_bus="El2", rate=rate,
            capital_cost=ann("heat_pump") * dh_out, marginal_cost=hp.marginal * dh_out,
            group="heat",
        ))
        links.append(MultiLink("DH_sale", "DH_heat", (("DH_grid", 1.0),), extendable=True,
                               capital_cost=cat.network["heat_network_km"]
                               * ann("local_heat_network"),
                               marginal_cost=-mk.dh_price(), group="symbiosis"))
        gens.append(Generator("DH_supply", "DH_grid", fixed_capacity=INF, group="external"))
        loads.append(Load("DH_external", "DH_grid", series=market.dh_demand))

    # pellets and biochar ------------------------------------------------
    gens.append(Generator("pellets_market", "pellets", fixed_capacity=INF,
                          marginal_cost=cat.pellet_price_per_mwh, group="trade"))
    links.append(MultiLink("pellet_disposal", "pellets", (), fixed_capacity=INF,
                           group="symbiosis"))
    if config.biochar_enabled:
        buses.append(Bus("bioChar", "biochar"))
        sky = cat.tech("skyclean")
        yield_ = (-float(sky["co2_emissions"]) if config.biochar_coefficient == "table"
                  else float(sky["biochar_yield_text"]))
        links.append(instantiate_technology(
            cat, "skyclean", name="skyclean", input_bus="pellets", rate=rate,
            extra_outputs=(("bioChar", yield_),), potential=float(sky["max_capacity"]),
            group="heat",
        ))
        links.append(MultiLink("biochar_credit", "bioChar", (), fixed_capacity=INF,
                               marginal_cost=-mk.biochar_credit(config.co2_tax), group="trade"))

    meta = {
        "scenario": config.scenario,
        "config_hash": config.config_hash(),
        "catalog_version": cat.version,
        "catalog_digest": cat.digest,
        "market_year": market.year,
        "alpha_h2_el": alpha_h2_el(cat),
        "alpha_meoh_el": alpha_meoh_el(cat),
        "h2_demand_mwh": config.h2_demand_gwh * 1000.0,
        "meoh_demand_mwh": meoh,
        "ptx_electricity_mwh": ptx_el,
        "biomethane_mw": p_bm,
        "biomethane_reference_cost": reference_cost,
        "objective_offset": objective_offset,
        "purchase_price": purchase,
        "sale_price": sale,
        "rfnbo_mask": mask,
        "trade_components": [c for c in TRADE_COMPONENTS
                             if any(x.name == c for x in gens + links)],
    }
    log.info("alpha_MeOH/el = 1/(%g/%g + %g + %g*%g + %g*%g) = %.6f",
             cat.coefficient("methanol_synthesis", "inputs", "h2"), alpha_h2_el(cat),
             cat.coefficient("methanol_synthesis", "inputs", "electricity"),
             cat.coefficient("methanol_synthesis", "inputs", "co2"), el_co2c,
             cat.coefficient("methanol_synthesis", "inputs", "h2"), el_h2c, alpha_meoh_el(cat))
    return Network(snapshots, CARRIERS, buses, gens, links, stores, loads, meta)


def build_case(config: ScenarioConfig, market: mk.MarketSeries | None = None,
               catalog: Catalog | None = None) -> Network:
    """Load (or take) the market data, slice the horizon and build the hub."""
    cat = catalog or load_catalog(config.catalog_path)
    if market is None:
        if config.data_dir is None:
            raise ValueError("config has no data_dir and no market series was given")
        market = mk.load_market(config.data_dir, config.price_year, config.tariffs)
    else:
        market = market.with_tariffs(config.tariffs)
    market = mk.slice_horizon(market, config.hours, config.weeks)
    return build_hub(config, market, cat)


__all__ = [
    "CARRIERS", "CARRIER_BUS", "TRADE_COMPONENTS", "UnknownCarrierError",
    "alpha_h2_el", "alpha_meoh_el", "meoh_demand_mwh", "ptx_electricity_mwh",
    "instantiate_technology", "build_hub", "build_case",
]
