"""Technology catalog, scenario configuration and the hub builder."""
from .records import (
    Catalog,
    TechnologyRecord,
    annuity,
    annuity_factor,
    co2_budget,
    default_catalog_path,
    load_catalog,
)
from .scenario import (
    DEFAULT_WEEKS,
    GRID_VALUES,
    REFERENCE_SLICE,
    SCENARIOS,
    ScenarioConfig,
    Tariffs,
    load_config,
    save_config,
)
from .hub import (
    CARRIER_BUS,
    TRADE_COMPONENTS,
    UnknownCarrierError,
    alpha_h2_el,
    alpha_meoh_el,
    build_case,
    build_hub,
    instantiate_technology,
    meoh_demand_mwh,
    ptx_electricity_mwh,
)
