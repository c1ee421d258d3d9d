import sys
from contextlib import contextmanager
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from ptxhub import market as mk  # noqa: E402
from ptxhub.catalog import ScenarioConfig, build_hub, load_catalog  # noqa: E402
from ptxhub.results import summarize  # noqa: E402
from ptxhub.sweep import RunOptions, solve_with_min_build  # noqa: E402

ACCEPTANCE = {}


@dataclass
class Outcome:
    label: str
    passed: bool | None = None
    detail: str = ""


def _merge(number, out):
    """Parametrized criteria pass only if every parameter passes."""
    prev = ACCEPTANCE.get(number)
    if prev is None:
        ACCEPTANCE[number] = out
        return
    if prev.passed is False or out.passed is False:
        prev.passed = False
    elif prev.passed is None or out.passed is None:
        prev.passed = prev.passed if out.passed is None else out.passed
    prev.detail = "; ".join(d for d in (prev.detail, out.detail) if d)


@pytest.fixture
def acceptance():
    """Record one acceptance criterion; the summary prints at the end of the run."""

    @contextmanager
    def record(number, label):
        out = Outcome(label)
        try:
            yield out
        except pytest.skip.Exception as exc:
            out.passed = None
            out.detail = out.detail or str(exc)
            raise
        except BaseException:
            out.passed = False
            raise
        else:
            out.passed = True
        finally:
            _merge(number, out)

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        o = ACCEPTANCE[number]
        flag = {True: "PASS", False: "FAIL", None: "WAIVED"}[o.passed]
        line = f"[{flag}] criterion {number}: {o.label}"
        if o.detail:
            line += f" ({o.detail})"
        terminalreporter.write_line(line)


# ---------------------------------------------------------------------------
# shared hub solves
# ---------------------------------------------------------------------------


@dataclass
class HubRun:
    config: ScenarioConfig
    network: object
    problem: object
    solution: object
    result: object


class HubCache:
    """Solve each hub configuration once per session."""

    def __init__(self):
        self.catalog = load_catalog()
        self._markets = {}
        self._runs = {}

    def market(self, year):
        if year not in self._markets:
            self._markets[year] = mk.synthetic_market(year, seed=0)
        return self._markets[year]

    def run(self, config, market=None) -> HubRun:
        key = config.config_hash() if market is None else (config.config_hash(), id(market))
        if key not in self._runs:
            series = market if market is not None else self.market(config.price_year)
            series = mk.slice_horizon(series.with_tariffs(config.tariffs), config.hours, config.weeks)
            network = build_hub(config, series, self.catalog)
            network, problem, sol, _ = solve_with_min_build(network, RunOptions(solver="highs"))
            result = summarize(network, problem, sol, name=config.name or "case",
                               config=config.to_dict())
            self._runs[key] = HubRun(config, network, problem, sol, result)
        return self._runs[key]

    def all_runs(self):
        return list(self._runs.values())


@pytest.fixture(scope="session")
def hubs():
    return HubCache()


REDUCED = ScenarioConfig(weeks=(2, 15, 28, 41))


@pytest.fixture(scope="session")
def reduced_config():
    return REDUCED


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
