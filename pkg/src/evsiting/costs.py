"""The four cost components of the siting objective.

Station cost, distribution expansion (line + substation), voltage
regulation, and protective-device upgrade, evaluated exactly (step
functions and all) for a given placement.  These evaluators are the ground
truth the optimizer's linear surrogates are checked against.

All functions are pure over immutable inputs and safe to call from parallel
scenario workers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Mapping

from .catalog import (
    DeviceCatalog,
    DeviceCatalogError,
    DeviceClass,
    FitLine,
    REFERENCE_TRENDLINES,
    calibrate_fit_convention,
    fit_device_line,
    required_class,
)
from .netmodel import Branch, DistributionNetwork, downstream_ev_count
from .powerflow import VoltageSolution

__all__ = [
    "CostParameters",
    "Placement",
    "CostBreakdown",
    "DeviceUpgrade",
    "ALL_TERMS",
    "station_cost",
    "substation_expansion_kw",
    "surplus_threshold_spots",
    "distribution_cost",
    "voltage_regulation_cost",
    "protection_cost",
    "baseline_maintenance_cost",
    "total_cost",
    "expansion_length_km",
    # re-exported catalog contract
    "required_class",
    "fit_device_line",
    "calibrate_fit_convention",
    "REFERENCE_TRENDLINES",
    "FitLine",
]

ALL_TERMS = frozenset({"station", "distribution", "voltage", "protection"})


@dataclass(frozen=True)
class CostParameters:
    """Economic and demand parameters of one siting scenario.

    c1: $/station, c2: $/spot, c3: $/(kVA km), c4: $/kVA, c5: $/p.u.^2.
    ``s_demand`` is the daily charge demand to cover; ``d_per_spot`` the
    daily charges one spot serves; ``budget`` may be infinite.
    """

    c1: float
    c2: float
    c3: float
    c4: float
    c5: float
    p_ev_kw: float = 44.0
    p_sur_kva: float = 1000.0
    d_per_spot: float = 68.0
    s_demand: float = 2040.0
    i_ev_a: float = 2.0
    budget: float = math.inf
    horizon_years: float = 1.0

    def __post_init__(self) -> None:
        for name in (
            "c1",
            "c2",
            "c3",
            "c4",
            "c5",
            "p_ev_kw",
            "p_sur_kva",
            "s_demand",
            "i_ev_a",
            "horizon_years",
        ):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.d_per_spot < 1:
            raise ValueError("d_per_spot must be >= 1")
        if self.budget <= 0:
            raise ValueError("budget must be positive (or infinite)")

    def min_spots(self) -> int:
        """Smallest spot total satisfying the serviceability demand."""
        return int(math.ceil(self.s_demand / self.d_per_spot - 1e-12))

    def scaled_prices(self, factor: float) -> "CostParameters":
        return replace(
            self,
            c1=self.c1 * factor,
            c2=self.c2 * factor,
            c3=self.c3 * factor,
            c4=self.c4 * factor,
            c5=self.c5 * factor,
        )


@dataclass(frozen=True)
class Placement:
    """Decision variables: per-bus station indicator x and spot count y."""

    x: Mapping[int, int]
    y: Mapping[int, int]

    def __post_init__(self) -> None:
        for bid, xi in self.x.items():
            if xi not in (0, 1):
                raise ValueError(f"x[{bid}] must be 0 or 1, got {xi}")
        for bid, yi in self.y.items():
            if yi != int(yi) or yi < 0:
                raise ValueError(f"y[{bid}] must be a non-negative integer")
            if yi > 0 and self.x.get(bid, 0) != 1:
                raise ValueError(f"y[{bid}] > 0 requires x[{bid}] = 1")

    @classmethod
    def from_spots(cls, spots: Mapping[int, int]) -> "Placement":
        y = {int(b): int(v) for b, v in spots.items()}
        return cls(x={b: (1 if v > 0 else 0) for b, v in y.items()}, y=y)

    @classmethod
    def empty(cls) -> "Placement":
        return cls(x={}, y={})

    def total_spots(self) -> int:
        return sum(self.y.values())

    def station_count(self) -> int:
        return sum(self.x.values())

    def spots_at(self, bus_id: int) -> int:
        return int(self.y.get(bus_id, 0))

    def as_sorted_tuple(self) -> tuple[tuple[int, int, int], ...]:
        keys = sorted(set(self.x) | set(self.y))
        return tuple((k, self.x.get(k, 0), self.y.get(k, 0)) for k in keys)


@dataclass(frozen=True)
class DeviceUpgrade:
    branch_id: int
    dtype: str
    old_class: DeviceClass
    new_class: DeviceClass
    current_a: float


@dataclass(frozen=True)
class CostBreakdown:
    c_sta: float
    c_dis: float
    c_vr: float
    c_prot: float
    upgrades: tuple[DeviceUpgrade, ...] = ()
    voltages: VoltageSolution | None = None
    within_budget: bool = True

    @property
    def total(self) -> float:
        return self.c_sta + self.c_dis + self.c_vr + self.c_prot


def station_cost(p: Placement, params: CostParameters) -> float:
    """Fixed station cost plus per-spot cost: sum(c1 x_i + c2 y_i)."""
    return params.c1 * p.station_count() + params.c2 * p.total_spots()


def surplus_threshold_spots(params: CostParameters) -> int:
    """Spot total at which charging load reaches the substation surplus."""
    return int(math.ceil(params.p_sur_kva / params.p_ev_kw - 1e-12))


def substation_expansion_kw(p: Placement, params: CostParameters) -> float:
    """Piecewise substation expansion: zero while the added charging load
    fits inside the surplus capacity, the full added load once it does not."""
    added = params.p_ev_kw * p.total_spots()
    return 0.0 if added < params.p_sur_kva else added


def expansion_length_km(
    net: DistributionNetwork,
    bus_id: int,
    override: Mapping[int, float] | None = None,
) -> float:
    """Line-expansion length for a candidate bus: scenario override when
    present, else the length of the branch feeding the bus."""
    if override is not None and bus_id in override:
        return float(override[bus_id])
    br = net.feeding_branch.get(bus_id)
    return 0.0 if br is None else br.length_km


def distribution_cost(
    p: Placement,
    net: DistributionNetwork,
    params: CostParameters,
    length_override: Mapping[int, float] | None = None,
) -> float:
    """Distribution expansion: line term plus substation term.

    Line term per open station: c3 l_i (P0_i + p_ev y_i), with the constant
    part P0_i charged only where x_i = 1 (no station, no line work).
    """
    line = 0.0
    for bid in sorted(set(p.x) | set(p.y)):
        xi = p.x.get(bid, 0)
        yi = p.y.get(bid, 0)
        if xi == 0 and yi == 0:
            continue
        li = expansion_length_km(net, bid, length_override)
        br = net.feeding_branch.get(bid)
        p0 = br.capacity_kva if br is not None else 0.0
        line += params.c3 * li * (p0 * xi + params.p_ev_kw * yi)
    return line + params.c4 * substation_expansion_kw(p, params)


def voltage_regulation_cost(v: VoltageSolution, params: CostParameters) -> float:
    """c5 times the summed squared deviation of |V| from 1.0 p.u., slack
    included."""
    mags = v.magnitudes(include_slack=True)
    return params.c5 * float(((mags - 1.0) ** 2).sum())


def _device_branches(net: DistributionNetwork) -> list[Branch]:
    return [br for br in net.branches if br.device is not None]


def _base_current(br: Branch) -> float:
    if br.base_current_a is None:
        raise ValueError(
            f"branch {br.id}: base current missing; run a base-case power "
            "flow or set base_current_a in the network file"
        )
    return br.base_current_a


def protection_cost(
    net: DistributionNetwork,
    p: Placement,
    catalog: DeviceCatalog,
    params: CostParameters,
) -> tuple[float, tuple[DeviceUpgrade, ...]]:
    """Exact step-function protection cost for a placement.

    Each protected branch carries its base current plus the charging current
    of every downstream spot.  When that total leaves the installed class's
    range the device is replaced in place by the covering class: the new
    device's acquisition (netted per type/class across the feeder, reusing
    freed devices before buying) and install, the old device's uninstall.
    Every installed device, upgraded or not, accrues maintenance over the
    planning horizon.
    """
    counts = downstream_ev_count(net, dict(p.y))
    upgrades: list[DeviceUpgrade] = []
    install = 0.0
    uninstall = 0.0
    maintenance = 0.0
    # net new installs per (type, class index): +1 where a class is newly
    # required, -1 where it is vacated; negative cells are reuse, not refunds
    delta: dict[tuple[str, int], int] = {}
    for br in _device_branches(net):
        dev = br.device
        base_cls = catalog.cls(dev.type, dev.cls)
        current = _base_current(br) + counts[br.id] * params.i_ev_a
        try:
            new_cls = required_class(catalog, dev.type, current)
        except DeviceCatalogError as exc:
            raise DeviceCatalogError(f"branch {br.id}: {exc}") from exc
        maintenance += params.horizon_years * new_cls.annual_maintenance_usd
        if new_cls.index != base_cls.index:
            upgrades.append(
                DeviceUpgrade(
                    branch_id=br.id,
                    dtype=dev.type,
                    old_class=base_cls,
                    new_class=new_cls,
                    current_a=current,
                )
            )
            install += new_cls.install_usd
            uninstall += base_cls.uninstall_usd
            delta[(dev.type, new_cls.index)] = delta.get((dev.type, new_cls.index), 0) + 1
            delta[(dev.type, base_cls.index)] = delta.get((dev.type, base_cls.index), 0) - 1
    acquisition = 0.0
    for (dtype, idx), a in sorted(delta.items()):
        if a > 0:
            acquisition += catalog.cls(dtype, idx).acquisition_usd * a
    total = acquisition + install + uninstall + maintenance
    return total, tuple(upgrades)


def baseline_maintenance_cost(
    net: DistributionNetwork, catalog: DeviceCatalog, params: CostParameters
) -> float:
    """Protection cost of doing nothing: horizon maintenance of the
    installed base devices."""
    cost, _ = protection_cost(net, Placement.empty(), catalog, params)
    return cost


def total_cost(
    net: DistributionNetwork,
    p: Placement,
    v: VoltageSolution,
    catalog: DeviceCatalog,
    params: CostParameters,
    terms: frozenset[str] = ALL_TERMS,
    length_override: Mapping[int, float] | None = None,
) -> CostBreakdown:
    """Exact cost breakdown for a placement at the given voltage solution.

    ``terms`` selects which of the four components enter (disabled terms are
    reported as zero); the budget flag compares the enabled total against
    the budget.
    """
    c_sta = station_cost(p, params) if "station" in terms else 0.0
    c_dis = (
        distribution_cost(p, net, params, length_override)
        if "distribution" in terms
        else 0.0
    )
    c_vr = voltage_regulation_cost(v, params) if "voltage" in terms else 0.0
    if "protection" in terms:
        c_prot, upgrades = protection_cost(net, p, catalog, params)
    else:
        c_prot, upgrades = 0.0, ()
    total = c_sta + c_dis + c_vr + c_prot
    return CostBreakdown(
        c_sta=c_sta,
        c_dis=c_dis,
        c_vr=c_vr,
        c_prot=c_prot,
        upgrades=upgrades,
        voltages=v,
        within_budget=bool(total <= params.budget),
    )
