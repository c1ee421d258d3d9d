"""Technology records, annuities and the shipped catalog file."""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Mapping

import yaml

HOURS_PER_YEAR = 8760


def annuity_factor(lifetime: float, rate: float) -> float:
    """Capital recovery factor ``r / (1 - (1 + r)^-n)``; ``1/n`` at ``r = 0``."""
    if not lifetime > 0:
        raise ValueError(f"lifetime must be positive, got {lifetime!r}")
    if rate < 0:
        raise ValueError(f"rate must be non-negative, got {rate!r}")
    if rate == 0:
        return 1.0 / lifetime
    # expm1/log1p keep the factor accurate for rates near zero
    return rate / -math.expm1(-lifetime * math.log1p(rate))


def annuity(investment: float, lifetime: float, rate: float, fixed_om_pct: float = 0.0) -> float:
    """Annual fixed cost of an investment.

    Parameters
    ----------
    investment : float
        Upfront cost per reference unit.
    lifetime : float
        Economic lifetime in years, must be positive.
    rate : float
        Discount rate, e.g. 0.07.
    fixed_om_pct : float
        Fixed operation and maintenance in percent of ``investment`` per year.

    Returns
    -------
    float
        ``investment * (r / (1 - (1 + r)^-n) + fixed_om_pct / 100)`` in the
        unit of ``investment`` per year.

    Examples
    --------
    >>> round(annuity(1040, 30, 0.07, 1.22), 2)
    96.5
    >>> annuity(100, 10, 0.0)
    10.0
    """
    return investment * (annuity_factor(lifetime, rate) + fixed_om_pct / 100.0)


@dataclass(frozen=True)
class TechnologyRecord:
    """One catalog row: costs plus, where available, conversion data."""

    name: str
    label: str
    reference: str
    investment: float                 # k EUR per reference unit, as quoted
    fixed_om: float | None            # % of investment per year
    variable_om: float | None         # EUR per reference unit-hour
    lifetime: float | None            # years
    unit_scale: float = 1.0           # multiplier bringing investment to k EUR
    coefficients: tuple[tuple[str, float], ...] = ()
    min_load: float = 0.0
    ramp_hours: float | None = None
    extra: Mapping[str, Any] = field(default_factory=dict)
    blank_defaults: Mapping[str, float] = field(default_factory=dict)

    @property
    def flags(self) -> list[str]:
        """Fields that were blank in the source and took a default."""
        out = []
        if self.lifetime is None:
            out.append("lifetime")
        if self.fixed_om is None:
            out.append("fixed_om")
        return out

    @property
    def investment_keur(self) -> float:
        return self.investment * self.unit_scale

    @property
    def effective_lifetime(self) -> float:
        if self.lifetime is None:
            return float(self.blank_defaults.get("lifetime", 25))
        return float(self.lifetime)

    @property
    def effective_fixed_om(self) -> float:
        if self.fixed_om is None:
            return float(self.blank_defaults.get("fixed_om", 0.0))
        return float(self.fixed_om)

    def annualized_keur(self, rate: float) -> float:
        """Annual fixed cost in k EUR per reference unit."""
        return annuity(self.investment_keur, self.effective_lifetime, rate, self.effective_fixed_om)

    def annualized(self, rate: float) -> float:
        """Annual fixed cost in EUR per reference unit."""
        return 1000.0 * self.annualized_keur(rate)

    @property
    def marginal(self) -> float:
        """Variable O&M in EUR per reference unit-hour (0 if blank)."""
        return float(self.variable_om or 0.0)

    @property
    def ramp_rate(self) -> float | None:
        """Per-unit change per hour (``1 / ramp_hours``), or None if not limiting."""
        if self.ramp_hours is None or self.ramp_hours <= 1:
            return None
        return 1.0 / self.ramp_hours


class Catalog:
    """Parsed catalog file."""

    def __init__(self, data: Mapping, source: str = "<memory>", digest: str = ""):
        self.data = data
        self.source = source
        self.digest = digest
        self.version = str(data.get("version", "unknown"))
        self.discount_rate = float(data.get("discount_rate", 0.07))
        self.blank_defaults = dict(data.get("blank_defaults", {}))
        self.technologies = dict(data.get("technologies", {}))
        self.constants = dict(data.get("constants", {}))
        self.network = dict(data.get("network", {}))
        self.annual_costs = dict(data.get("annual_costs", {}))
        self.records: dict[str, TechnologyRecord] = {}
        for name, row in data.get("costs", {}).items():
            tech = self.technologies.get(name, {})
            coefs = [(c, -float(v)) for c, v in (tech.get("inputs") or {}).items()]
            coefs += [(c, float(v)) for c, v in (tech.get("outputs") or {}).items()]
            self.records[name] = TechnologyRecord(
                name=name,
                label=row.get("label", name),
                reference=row.get("reference", ""),
                investment=float(row["investment"]),
                fixed_om=None if row.get("fixed_om") is None else float(row["fixed_om"]),
                variable_om=None if row.get("variable_om") is None else float(row["variable_om"]),
                lifetime=None if row.get("lifetime") is None else float(row["lifetime"]),
                unit_scale=float(row.get("unit_scale", 1.0)),
                coefficients=tuple(coefs),
                min_load=float(tech.get("min_load", 0.0)),
                ramp_hours=tech.get("ramp_hours"),
                extra={k: v for k, v in tech.items() if k not in ("inputs", "outputs")},
                blank_defaults=self.blank_defaults,
            )

    def __getitem__(self, name: str) -> TechnologyRecord:
        return self.records[name]

    def __contains__(self, name: str) -> bool:
        return name in self.records

    def tech(self, name: str) -> dict:
        return self.technologies[name]

    def coefficient(self, tech: str, side: str, carrier: str) -> float:
        return float(self.technologies[tech][side][carrier])

    def const(self, name: str) -> float:
        return float(self.constants[name])

    def annualized(self, name: str, rate: float | None = None) -> float:
        """EUR per reference unit per year at ``rate`` (default: catalog rate)."""
        return self.records[name].annualized(self.discount_rate if rate is None else rate)

    def flagged(self) -> dict[str, list[str]]:
        return {n: r.flags for n, r in self.records.items() if r.flags}

    @property
    def pellet_price_per_mwh(self) -> float:
        """Market pellet price converted from EUR/t to EUR/MWh (dry-matter LHV)."""
        mwh_per_t = self.const("pellet_lhv_dry_mj_per_kg") * self.const("pellet_dry_matter") / 3.6
        return self.const("pellet_price_eur_per_t") / mwh_per_t

    @property
    def meoh_lhv_mwh_per_t(self) -> float:
        return self.const("meoh_lhv_mj_per_kg") / 3.6


def default_catalog_path() -> Path:
    return Path(str(resources.files("ptxhub.catalog").joinpath("catalog.yaml")))


def load_catalog(path: str | Path | None = None) -> Catalog:
    """Read a catalog YAML file (the shipped one when ``path`` is None)."""
    path = Path(path) if path is not None else default_catalog_path()
    raw = path.read_bytes()
    data = yaml.safe_load(raw)
    return Catalog(data, source=str(path), digest=hashlib.sha256(raw).hexdigest())


def co2_budget(biomethane_output_gwh: float, catalog: Catalog | None = None) -> float:
    """Biogenic CO2 available per year (t/y) from a biomethane output in GWh/y.

    >>> round(co2_budget(190))
    18658
    """
    if biomethane_output_gwh < 0 or not math.isfinite(biomethane_output_gwh):
        raise ValueError("biomethane output must be a non-negative finite number")
    cat = catalog or load_catalog()
    per_mwh = cat.coefficient("biomethane_plant", "outputs", "co2")
    return biomethane_output_gwh * 1000.0 * per_mwh
