"""Scenario configuration: one point of the sensitivity grid plus run settings."""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Mapping

import yaml

SCENARIOS = ("H2_to_grid", "MeOH_standalone")

# admissible values of the sensitivity parameters
GRID_VALUES: dict[str, tuple] = {
    "scenario": SCENARIOS,
    "co2_tax": (0, 150, 250),
    "co2_recovery_ratio": (0.80, 0.85, 0.90, 0.95, 0.99),
    "max_re": (0.1, 0.5, 1.0),
    "price_year": (2019, 2022),
    "dh_enabled": (False, True),
    "biochar_enabled": (False, True),
}

REFERENCE_SLICE = {
    "co2_tax": 150,
    "co2_recovery_ratio": 0.9,
    "max_re": 0.5,
    "dh_enabled": False,
    "biochar_enabled": False,
}

DEFAULT_WEEKS = (2, 15, 28, 41)


@dataclass(frozen=True)
class Tariffs:
    """Grid interface scalars.  Defaults are placeholders, not published values."""

    purchase: float = 20.0       # TF_p, EUR/MWh added to the spot price on purchase
    sale: float = 1.0            # TF_sl, EUR/MWh deducted from the spot price on sale
    ng_emission: float = 0.202   # em_NG, t CO2 / MWh natural gas

    PLACEHOLDER = "tariff defaults are placeholders; supply measured values for final results"


@dataclass(frozen=True)
class ScenarioConfig:
    scenario: str = "H2_to_grid"
    h2_grid_demand: float = 272.0          # GWh/y, ignored for MeOH_standalone
    co2_recovery_ratio: float = 0.9
    co2_tax: float = 150.0                 # EUR / t
    max_re: float = 0.5
    price_year: int = 2019
    dh_enabled: bool = False
    biochar_enabled: bool = False
    biomethane_output: float = 190.0       # GWh/y
    discount_rate: float = 0.07
    # horizon: full year, the first `hours`, or representative `weeks` (1-based)
    hours: int | None = None
    weeks: tuple[int, ...] | None = None
    data_dir: str | None = None            # contains <price_year>/*.csv
    catalog_path: str | None = None
    tariffs: Tariffs = field(default_factory=Tariffs)
    biochar_coefficient: str = "table"     # "table" (0.164) or "text" (0.173)
    enforce_min_build: bool = True
    name: str | None = None

    def __post_init__(self):
        if self.weeks is not None:
            object.__setattr__(self, "weeks", tuple(int(w) for w in self.weeks))
        if isinstance(self.tariffs, Mapping):
            object.__setattr__(self, "tariffs", Tariffs(**self.tariffs))

    @property
    def h2_demand_gwh(self) -> float:
        return self.h2_grid_demand if self.scenario == "H2_to_grid" else 0.0

    @property
    def integrated(self) -> bool:
        return self.scenario == "H2_to_grid"

    def with_(self, **changes) -> "ScenarioConfig":
        return replace(self, **changes)

    def validate(self) -> list[str]:
        """Problems with the configuration; empty means usable."""
        out = []
        for key, allowed in GRID_VALUES.items():
            value = getattr(self, key)
            if not any(value == a for a in allowed):
                out.append(f"{key}={value!r} out of sensitivity range {list(allowed)}")
        if not self.biomethane_output > 0:
            out.append("biomethane_output must be positive")
        if self.h2_grid_demand < 0:
            out.append("h2_grid_demand must be non-negative")
        if not 0 <= self.discount_rate < 1:
            out.append("discount_rate must lie in [0, 1)")
        if self.hours is not None and self.weeks is not None:
            out.append("set at most one of hours and weeks")
        if self.hours is not None and not 1 <= self.hours <= 8760:
            out.append("hours must lie in [1, 8760]")
        if self.weeks is not None and (not self.weeks or any(not 1 <= w <= 52 for w in self.weeks)):
            out.append("weeks must be a non-empty list of week numbers in [1, 52]")
        if self.biochar_coefficient not in ("table", "text"):
            out.append("biochar_coefficient must be 'table' or 'text'")
        return out

    def warnings(self) -> list[str]:
        out = []
        if self.biochar_enabled and self.co2_tax == 0:
            out.append("biochar credits enabled with co2_tax 0: the credit is worth nothing")
        if self.tariffs == Tariffs():
            out.append(Tariffs.PLACEHOLDER)
        return out

    # serialization -----------------------------------------------------
    def to_dict(self) -> dict:
        d = asdict(self)
        if d["weeks"] is not None:
            d["weeks"] = list(d["weeks"])
        return d

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "ScenarioConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown configuration keys: {sorted(unknown)}")
        kw = dict(data)
        if "tariffs" in kw and isinstance(kw["tariffs"], Mapping):
            kw["tariffs"] = Tariffs(**kw["tariffs"])
        return cls(**kw)

    def config_hash(self) -> str:
        """Stable digest of every field (including data and catalog paths)."""
        text = json.dumps(self.to_dict(), sort_keys=True, default=str)
        return hashlib.sha256(text.encode()).hexdigest()[:16]


def load_config(path: str | Path) -> ScenarioConfig:
    """Read a YAML (or JSON) scenario file; relative paths resolve against its folder."""
    path = Path(path)
    data = yaml.safe_load(path.read_text()) or {}
    if not isinstance(data, Mapping):
        raise ValueError(f"{path}: expected a mapping at top level")
    for key in ("data_dir", "catalog_path"):
        if data.get(key) is not None and not Path(data[key]).is_absolute():
            data[key] = str((path.parent / data[key]).resolve())
    return ScenarioConfig.from_dict(data)


def save_config(config: ScenarioConfig, path: str | Path) -> None:
    Path(path).write_text(yaml.safe_dump(config.to_dict(), sort_keys=True))
