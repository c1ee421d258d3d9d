"""Solve the reference hub and compare two CO2 recovery ratios.

The first run covers one week; the comparison uses four representative
weeks (about a minute per case), which is enough for storage to pay off.
Uses the shipped synthetic market data, so the numbers illustrate the
mechanics rather than reproduce measured outcomes.

Run with ``python demos/hub_week.py``.
"""
from ptxhub import market as mk
from ptxhub.catalog import ScenarioConfig, load_catalog
from ptxhub.sweep import run_case


def main():
    catalog = load_catalog()
    market = mk.synthetic_market(2019)
    base = ScenarioConfig(hours=168, name="week-rec0.9")
    result = run_case(base, catalog, market)
    print(result.summary())
    el = result.shadow["El3"]
    print(f"renewable bus price: mean {el['mean']:.1f}, median {el['q50']:.1f} EUR/MWh")

    print("\nLCOM against the CO2 recovery ratio (four representative weeks):")
    weeks = ScenarioConfig(weeks=(2, 15, 28, 41))
    for ratio in (0.8, 0.99):
        res = run_case(weeks.with_(co2_recovery_ratio=ratio, name=f"rec{ratio}"), catalog, market)
        caps = res.capacities
        print(f"  recovery {ratio:4.2f}: LCOM {res.lcom():7.2f} EUR/MWh, "
              f"liquid CO2 store {max(caps['CO2_liquid'], 0.0):6.2f} t, "
              f"H2 store {max(caps['H2_store'], 0.0):6.2f} MWh")


if __name__ == "__main__":
    main()
