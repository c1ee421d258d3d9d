"""Levelized cost from a demand dual on the smallest possible system.

One plant (80 000 EUR/MW/y capital, 10 EUR/MWh marginal) must deliver a flat
1 MW on average.  The dual of the annual-demand row equals the textbook
levelized cost 80000/8760 + 10, and the cost is fully recovered by valuing
the demand at that price.

Run with ``python demos/toy_levelized_cost.py``.
"""
from ptxhub.lpform import assemble
from ptxhub.netcore import Bus, Carrier, Generator, Load, Snapshots, build_network
from ptxhub.results import cost_breakdown, duality_audit, levelized_costs
from ptxhub.solver import check_kkt, solve


def main():
    net = build_network(
        Snapshots.hourly(24),
        [Carrier("h2")],
        [Bus("H", "h2")],
        [Generator("plant", "H", extendable=True, capital_cost=80_000.0, marginal_cost=10.0,
                   group="plant")],
        loads=[Load("H2_to_grid", "H", annual_total=8760.0)],
    )
    problem = assemble(net)
    sol = solve(problem, "reference")
    print(f"LP: {problem.n_rows} rows x {problem.n_cols} columns, status {sol.status}")
    print(f"KKT: {'pass' if check_kkt(problem, sol).passed else 'FAIL'}")

    lcoh = levelized_costs(sol, problem)["LCOH"]
    print(f"LCOH from the dual:  {lcoh:.4f} EUR/MWh")
    print(f"80000/8760 + 10:     {80_000 / 8760 + 10:.4f} EUR/MWh")

    bd = cost_breakdown(sol, problem, net)
    audit = duality_audit(sol, problem, net)
    print(f"total cost over 24 h {bd.total:.2f} EUR, with product sales {bd.total_with_ptx_sales:.2e}")
    print(f"duality audit residual {audit.residual:.1e}")


if __name__ == "__main__":
    main()
