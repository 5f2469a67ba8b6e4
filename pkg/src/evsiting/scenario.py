"""Scenario files: demand, caps, candidate overrides, and term toggles.

A scenario bundles the cost parameters with the knobs that vary between
runs of the same network: spot cap per station, the candidate-bus subset,
per-bus expansion-length overrides, which objective terms are active, and
an optional watch region for regional reporting.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

from .costs import ALL_TERMS, CostParameters

__all__ = ["Scenario", "ScenarioError", "parse_scenario", "load_scenario"]


class ScenarioError(ValueError):
    """Raised for malformed or inconsistent scenario files."""


@dataclass(frozen=True)
class Scenario:
    name: str
    params: CostParameters
    spot_cap: int | None = None
    candidates: tuple[int, ...] | None = None
    length_override_km: Mapping[int, float] = field(default_factory=dict)
    enabled_terms: frozenset[str] = ALL_TERMS
    region: tuple[int, ...] | None = None

    def __post_init__(self) -> None:
        if self.spot_cap is not None and self.spot_cap < 1:
            raise ScenarioError("spot_cap must be >= 1")
        bad = self.enabled_terms - ALL_TERMS
        if bad:
            raise ScenarioError(f"unknown objective terms: {sorted(bad)}")

    def effective_cap(self) -> int:
        """Per-station spot bound used by the optimizer.  An explicit cap is
        honored; with no cap a station never needs more spots than the whole
        demand requires, so the demand minimum doubles as the bound."""
        if self.spot_cap is not None:
            return self.spot_cap
        return max(1, self.params.min_spots())

    def with_params(self, params: CostParameters) -> "Scenario":
        return replace(self, params=params)

    def with_terms(self, terms: Sequence[str]) -> "Scenario":
        return replace(self, enabled_terms=frozenset(terms))


def _coerce_demand(demand: Mapping, costs: Mapping) -> float:
    """Daily charge demand S, either given directly or converted from an
    hourly EV flow (S = 24 h x flow)."""
    if "s_charges_per_day" in demand:
        return float(demand["s_charges_per_day"])
    if "ev_per_hour" in demand:
        return float(demand["ev_per_hour"]) * 24.0
    raise ScenarioError("demand needs s_charges_per_day or ev_per_hour")


def parse_scenario(text: str) -> Scenario:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"invalid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ScenarioError("scenario file must be a JSON object")
    costs = raw.get("costs")
    if not isinstance(costs, dict):
        raise ScenarioError("scenario needs a 'costs' object")
    demand = raw.get("demand")
    if not isinstance(demand, dict):
        raise ScenarioError("scenario needs a 'demand' object")

    budget = costs.get("budget")
    try:
        params = CostParameters(
            c1=float(costs["c1"]),
            c2=float(costs["c2"]),
            c3=float(costs["c3"]),
            c4=float(costs["c4"]),
            c5=float(costs["c5"]),
            p_ev_kw=float(costs.get("p_ev_kw", 44.0)),
            p_sur_kva=float(costs.get("p_sur_kva", 1000.0)),
            d_per_spot=float(costs.get("d_per_spot", 68.0)),
            s_demand=_coerce_demand(demand, costs),
            i_ev_a=float(costs.get("i_ev_a", 2.0)),
            budget=math.inf if budget is None else float(budget),
            horizon_years=float(costs.get("horizon_years", 1.0)),
        )
    except KeyError as exc:
        raise ScenarioError(f"missing cost parameter {exc.args[0]!r}") from exc
    except ValueError as exc:
        raise ScenarioError(str(exc)) from exc

    cap = raw.get("spot_cap")
    candidates = raw.get("candidates")
    override = {
        int(k): float(v) for k, v in (raw.get("length_override_km") or {}).items()
    }
    terms = raw.get("enabled_terms")
    region = raw.get("region")
    if region is None:
        region_t = None
    elif isinstance(region, dict):
        region_t = tuple(int(b) for b in region["buses"])
    else:
        region_t = tuple(int(b) for b in region)
    return Scenario(
        name=str(raw.get("name", "scenario")),
        params=params,
        spot_cap=None if cap is None else int(cap),
        candidates=None if candidates is None else tuple(int(b) for b in candidates),
        length_override_km=override,
        enabled_terms=ALL_TERMS if terms is None else frozenset(terms),
        region=region_t,
    )


def load_scenario(path) -> Scenario:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_scenario(fh.read())
