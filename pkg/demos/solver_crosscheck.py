"""Cross-check the in-package simplex against HiGHS on a small hub slice.

Both solutions are verified with the KKT checker; the objectives must agree
even where degenerate duals differ.

Run with ``python demos/solver_crosscheck.py``.
"""
import numpy as np

from ptxhub import market as mk
from ptxhub.catalog import ScenarioConfig, build_hub
from ptxhub.lpform import assemble
from ptxhub.solver import check_kkt, solve, write_lp_text


def main():
    config = ScenarioConfig(hours=8)
    net = build_hub(config, mk.slice_horizon(mk.synthetic_market(2019), 8))
    problem = assemble(net)
    print(f"hub slice: {problem.n_rows} rows x {problem.n_cols} columns, "
          f"fingerprint {problem.fingerprint()[:16]}")
    text, _ = write_lp_text(problem)
    print(f"LP file: {len(text.splitlines())} lines")

    sols = {name: solve(problem, name) for name in ("reference", "highs")}
    for name, sol in sols.items():
        report = check_kkt(problem, sol)
        print(f"{name:>9}: {sol.status}, objective {sol.objective:,.4f}, "
              f"{sol.wall_time:.2f} s, KKT {'pass' if report.passed else 'FAIL'}")
    a, b = sols["reference"], sols["highs"]
    print(f"relative objective gap {abs(a.objective - b.objective) / abs(b.objective):.1e}")
    print(f"largest dual difference {np.max(np.abs(a.duals - b.duals)):.2e}")


if __name__ == "__main__":
    main()
