"""Command-line interface.

Exit codes: 0 success, 1 domain problem (invalid configuration, infeasible or
failed case, empty results), 2 environment problem (missing or unreadable
files, refused output directory).
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import __version__
from . import market as mk
from .catalog import ScenarioConfig, build_hub, load_catalog, load_config
from .lpform import assemble
from .netcore import validate_network
from .results import write_case
from .solver import MAX_COLUMNS, MAX_ROWS, BackendConfig
from .sweep import (
    RunOptions,
    aggregate,
    cost_vs_recovery,
    load_results,
    load_sweep_spec,
    provenance,
    run_case,
    run_sweep,
    write_aggregate,
    write_gnuplot,
)

log = logging.getLogger("ptxhub")

OK, DOMAIN, ENVIRONMENT = 0, 1, 2


def _market_for(config: ScenarioConfig, seed: int = 0) -> mk.MarketSeries:
    """Market series of the configured year; synthetic when no data_dir is set."""
    if config.data_dir is None:
        log.warning("no data_dir configured: using synthetic %s series", config.price_year)
        return mk.synthetic_market(config.price_year, seed=seed, tariffs=config.tariffs)
    return mk.load_market(config.data_dir, config.price_year, config.tariffs)


def _log_provenance(prov: dict) -> None:
    log.info("config hash %s", prov["config_hash"])
    log.info("catalog %s (sha256 %s)", prov["catalog_version"], prov["catalog_digest"][:16])
    for name, digest in sorted(prov["data_files"].items()):
        log.info("data %s %s", name, digest)
    log.info("solver %s", prov["solver"])


def cmd_validate(args) -> int:
    try:
        config = load_config(args.config)
        catalog = load_catalog(config.catalog_path)
        market = _market_for(config)
    except (OSError, mk.SeriesError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return ENVIRONMENT
    except ValueError as exc:
        print(f"invalid configuration: {exc}")
        return DOMAIN
    problems = [f"config: {p}" for p in config.validate()]
    if not problems:
        try:
            sliced = mk.slice_horizon(market, config.hours, config.weeks)
            network = build_hub(config, sliced, catalog)
            problems += [f"network: {v}" for v in validate_network(network)]
        except ValueError as exc:
            problems.append(f"network: {exc}")
    problems += [f"market: {p}" for p in market.problems()]
    for w in config.warnings():
        print(f"warning: {w}")
    if problems:
        for p in problems:
            print(p)
        print(f"{len(problems)} problem(s)")
        return DOMAIN
    print(f"ok: {args.config} (config {config.config_hash()}, catalog {catalog.version})")
    return OK


def _backend(args) -> BackendConfig | None:
    if args.solver == "reference":
        return None
    return BackendConfig(name=args.solver, executable=getattr(args, "solver_path", None),
                         time_limit=getattr(args, "time_limit", None))


def _reference_size(config: ScenarioConfig, catalog, sliced: mk.MarketSeries) -> tuple[int, int]:
    """LP size of the case, extrapolated from 2- and 3-hour builds (it is linear in N)."""
    sizes = []
    for n in (2, 3):
        p = assemble(build_hub(config.with_(hours=n, weeks=None), sliced.select(range(n)), catalog))
        sizes.append((p.n_rows, p.n_cols))
    n = sliced.hours
    return tuple(a + (b - a) * (n - 2) for a, b in zip(*sizes))


def cmd_run(args) -> int:
    out = Path(args.out)
    if out.exists() and any(out.iterdir()) and not args.force:
        print(f"error: output directory {out} is not empty (use --force)", file=sys.stderr)
        return ENVIRONMENT
    try:
        config = load_config(args.config)
        catalog = load_catalog(config.catalog_path)
        market = _market_for(config)
    except (OSError, mk.SeriesError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return ENVIRONMENT
    except ValueError as exc:
        print(f"invalid configuration: {exc}")
        return DOMAIN
    sliced = mk.slice_horizon(market, config.hours, config.weeks)
    if args.solver == "reference":
        rows, cols = _reference_size(config, catalog, sliced)
        if rows > MAX_ROWS or cols > MAX_COLUMNS:
            print(f"error: the case has about {rows} rows x {cols} columns over {sliced.hours} h; "
                  f"the reference solver accepts at most {MAX_ROWS} x {MAX_COLUMNS} "
                  f"(size limit); use --solver highs or cbc", file=sys.stderr)
            return DOMAIN
    _log_provenance(provenance(config, catalog, sliced, args.solver))
    options = RunOptions(solver=args.solver, backend=_backend(args))
    result = run_case(config, catalog, market, options)
    try:
        write_case(result, out)
        (out / "summary.txt").write_text(result.summary() + "\n")
    except OSError as exc:
        print(f"error: cannot write results: {exc}", file=sys.stderr)
        return ENVIRONMENT
    print(result.summary())
    return OK if result.optimal else DOMAIN


def cmd_sweep(args) -> int:
    try:
        spec = load_sweep_spec(args.spec)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return ENVIRONMENT
    except ValueError as exc:
        print(f"invalid sweep spec: {exc}")
        return DOMAIN
    cases = spec.cases()
    jobs = args.jobs if args.jobs is not None else spec.jobs
    solver = args.solver or spec.solver
    options = RunOptions(solver=solver, backend=None if solver == "reference"
                         else BackendConfig(name=solver))
    markets = None
    if spec.base.data_dir is None:
        years = sorted({c.price_year for c in cases})
        log.warning("no data_dir configured: using synthetic series for %s", years)
        markets = {y: mk.synthetic_market(y) for y in years}
    log.info("sweep: %d cases, %d job(s), solver %s", len(cases), jobs, solver)
    results = run_sweep(cases, args.out, jobs=jobs, options=options, markets=markets,
                        resume=not args.no_resume)
    write_aggregate(results, args.out)
    failed = [r for r in results if not r.optimal]
    print(f"{len(results) - len(failed)}/{len(results)} cases optimal; results in {args.out}")
    for r in failed:
        print(f"  {r.name}: {r.status} {r.message}")
    return DOMAIN if failed else OK


def cmd_report(args) -> int:
    folder = Path(args.results)
    if not folder.is_dir():
        print(f"error: no results directory {folder}", file=sys.stderr)
        return ENVIRONMENT
    results = load_results(folder)
    if not results:
        print(f"no case results under {folder}")
        return DOMAIN
    out = Path(args.out) if args.out else folder
    long, _ = aggregate(results)
    table = cost_vs_recovery(long)
    paths = write_gnuplot(table, out)
    write_aggregate(results, out)
    print(f"{len(results)} case(s); wrote {paths['csv']} and {paths['gnuplot']}")
    return OK


def cmd_make_data(args) -> int:
    for year in args.years:
        m = mk.synthetic_market(year, seed=args.seed)
        folder = Path(args.out) / str(year)
        mk.write_market_csv(m, folder, ng_step_hours=24 if year == 2022 else 1)
        print(f"wrote {folder}")
    return OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ptxhub", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = p.add_subparsers(dest="command", required=True)

    v = sub.add_parser("validate", help="check a scenario configuration and its data")
    v.add_argument("config")
    v.set_defaults(func=cmd_validate)

    r = sub.add_parser("run", help="solve one scenario")
    r.add_argument("config")
    r.add_argument("--solver", choices=("reference", "highs", "cbc"), default="highs")
    r.add_argument("--solver-path", help="external solver executable")
    r.add_argument("--time-limit", type=float)
    r.add_argument("--out", required=True)
    r.add_argument("--force", action="store_true", help="write into a non-empty directory")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("sweep", help="run a sensitivity grid")
    s.add_argument("spec")
    s.add_argument("--out", required=True)
    s.add_argument("--jobs", type=int)
    s.add_argument("--solver", choices=("reference", "highs", "cbc"))
    s.add_argument("--no-resume", action="store_true")
    s.set_defaults(func=cmd_sweep)

    rep = sub.add_parser("report", help="aggregate sweep results and write plot files")
    rep.add_argument("results")
    rep.add_argument("--out")
    rep.set_defaults(func=cmd_report)

    d = sub.add_parser("make-data", help="write synthetic market CSV files")
    d.add_argument("out")
    d.add_argument("--years", type=int, nargs="+", default=[2019, 2022])
    d.add_argument("--seed", type=int, default=0)
    d.set_defaults(func=cmd_make_data)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
