"""Protective-device catalog: capacity classes, costs, and trend-line fits.

A catalog holds, per device type (fuse, recloser, overcurrent relay, DORSR),
an ascending list of capacity classes.  Each class covers a continuous-current
range and carries four costs: acquisition, install, uninstall, and annual
maintenance.  Ranges are validated to be contiguous (integer-amp convention:
the next class starts one amp above the previous class's upper bound) and
class membership for a real-valued current uses the equivalent half-open
intervals (prev_high, high].

``fit_device_line`` produces the straight-line approximation of acquisition
cost versus current used by the siting model, under a selectable
representative-point convention; ``calibrate_fit_convention`` searches the
named conventions against reference lines and reports the closest match.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, Mapping

import numpy as np

__all__ = [
    "DEVICE_TYPES",
    "DeviceClass",
    "DeviceCatalog",
    "DeviceCatalogError",
    "FitLine",
    "FIT_CONVENTIONS",
    "REFERENCE_TRENDLINES",
    "load_catalog",
    "parse_catalog",
    "required_class",
    "fit_device_line",
    "calibrate_fit_convention",
]

DEVICE_TYPES = ("fuse", "recloser", "overcurrent_relay", "dorsr")


class DeviceCatalogError(ValueError):
    """Raised for malformed catalogs or currents outside every class."""


@dataclass(frozen=True)
class DeviceClass:
    index: int  # 1-based position within the type
    amp_low: float
    amp_high: float
    acquisition_usd: float
    install_usd: float
    uninstall_usd: float
    annual_maintenance_usd: float

    def covers(self, current_a: float, prev_high: float) -> bool:
        return prev_high < current_a <= self.amp_high

    def label(self) -> str:
        return f"{self.amp_low:g}-{self.amp_high:g}A"


@dataclass(frozen=True)
class FitLine:
    slope: float  # $/A
    intercept: float  # $
    r_squared: float


class DeviceCatalog:
    """Validated, immutable catalog keyed by device-type name."""

    def __init__(self, classes_by_type: Mapping[str, Iterable[DeviceClass]]):
        self._classes: dict[str, tuple[DeviceClass, ...]] = {}
        for dtype, classes in classes_by_type.items():
            ordered = tuple(classes)
            self._validate(dtype, ordered)
            self._classes[dtype] = ordered

    @staticmethod
    def _validate(dtype: str, classes: tuple[DeviceClass, ...]) -> None:
        if not classes:
            raise DeviceCatalogError(f"{dtype}: no capacity classes")
        prev: DeviceClass | None = None
        for k, c in enumerate(classes, start=1):
            if c.index != k:
                raise DeviceCatalogError(
                    f"{dtype}: class index {c.index} at position {k}"
                )
            if c.amp_high <= c.amp_low and not (k == 1 and c.amp_low == 0):
                raise DeviceCatalogError(
                    f"{dtype} class {k}: empty current range {c.label()}"
                )
            if prev is not None:
                if c.amp_low <= prev.amp_high:
                    raise DeviceCatalogError(
                        f"{dtype}: overlapping ranges {prev.label()} and {c.label()}"
                    )
                if c.amp_low != prev.amp_high + 1:
                    raise DeviceCatalogError(
                        f"{dtype}: gap between {prev.label()} and {c.label()}"
                    )
                if c.acquisition_usd < prev.acquisition_usd:
                    raise DeviceCatalogError(
                        f"{dtype}: acquisition cost decreases at class {k}"
                    )
            for fld in (
                "acquisition_usd",
                "install_usd",
                "uninstall_usd",
                "annual_maintenance_usd",
            ):
                if getattr(c, fld) < 0:
                    raise DeviceCatalogError(f"{dtype} class {k}: negative {fld}")
            prev = c

    @property
    def types(self) -> tuple[str, ...]:
        return tuple(self._classes)

    def classes(self, dtype: str) -> tuple[DeviceClass, ...]:
        try:
            return self._classes[dtype]
        except KeyError:
            raise DeviceCatalogError(f"unknown device type {dtype!r}") from None

    def cls(self, dtype: str, index: int) -> DeviceClass:
        classes = self.classes(dtype)
        if not 1 <= index <= len(classes):
            raise DeviceCatalogError(
                f"{dtype}: class {index} out of range 1..{len(classes)}"
            )
        return classes[index - 1]

    def scaled_prices(self, factor: float) -> "DeviceCatalog":
        """Catalog with every cost multiplied by ``factor`` (ranges kept)."""
        out: dict[str, list[DeviceClass]] = {}
        for dtype, classes in self._classes.items():
            out[dtype] = [
                DeviceClass(
                    index=c.index,
                    amp_low=c.amp_low,
                    amp_high=c.amp_high,
                    acquisition_usd=c.acquisition_usd * factor,
                    install_usd=c.install_usd * factor,
                    uninstall_usd=c.uninstall_usd * factor,
                    annual_maintenance_usd=c.annual_maintenance_usd * factor,
                )
                for c in classes
            ]
        return DeviceCatalog(out)

    def scaled_acquisition(self, dtype: str, factor: float) -> "DeviceCatalog":
        """Catalog with one type's acquisition prices rescaled."""
        out: dict[str, list[DeviceClass]] = {}
        for t, classes in self._classes.items():
            f = factor if t == dtype else 1.0
            out[t] = [
                DeviceClass(
                    index=c.index,
                    amp_low=c.amp_low,
                    amp_high=c.amp_high,
                    acquisition_usd=c.acquisition_usd * f,
                    install_usd=c.install_usd,
                    uninstall_usd=c.uninstall_usd,
                    annual_maintenance_usd=c.annual_maintenance_usd,
                )
                for c in classes
            ]
        return DeviceCatalog(out)


def parse_catalog(text: str) -> DeviceCatalog:
    """Parse a catalog file (JSON: {"devices": {type: {classes: [...] }}})."""
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DeviceCatalogError(f"invalid JSON: {exc}") from exc
    devices = raw.get("devices")
    if not isinstance(devices, dict):
        raise DeviceCatalogError("catalog must contain a 'devices' object")
    by_type: dict[str, list[DeviceClass]] = {}
    for dtype, spec in devices.items():
        classes = []
        for k, c in enumerate(spec["classes"], start=1):
            classes.append(
                DeviceClass(
                    index=k,
                    amp_low=float(c["amp_low"]),
                    amp_high=float(c["amp_high"]),
                    acquisition_usd=float(c["acquisition_usd"]),
                    install_usd=float(c["install_usd"]),
                    uninstall_usd=float(c["uninstall_usd"]),
                    annual_maintenance_usd=float(c["annual_maintenance_usd"]),
                )
            )
        by_type[dtype] = classes
    return DeviceCatalog(by_type)


def load_catalog(path) -> DeviceCatalog:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_catalog(fh.read())


def required_class(
    catalog: DeviceCatalog, dtype: str, current_a: float
) -> DeviceClass:
    """The unique capacity class whose current range covers ``current_a``.

    Raises DeviceCatalogError when the current exceeds the largest class.
    """
    if not current_a > 0:
        raise DeviceCatalogError(f"{dtype}: current must be > 0, got {current_a}")
    prev_high = 0.0
    for c in catalog.classes(dtype):
        if c.covers(current_a, prev_high):
            return c
        prev_high = c.amp_high
    raise DeviceCatalogError(
        f"no device class covers current: {dtype} at {current_a:g} A "
        f"(max class ends at {prev_high:g} A)"
    )


# -- trend-line fitting -------------------------------------------------------

FIT_CONVENTIONS = ("midpoint", "upper", "lower", "endpoints", "dense")

# Published straight-line references for the bundled catalog (acquisition
# cost in $ versus current in A), used only for calibration reporting.
REFERENCE_TRENDLINES: dict[str, FitLine] = {
    "fuse": FitLine(3.771, 548.26, 0.775),
    "recloser": FitLine(16.381, 18219.0, 0.797),
    "overcurrent_relay": FitLine(2.040, 4515.9, 0.756),
    "dorsr": FitLine(2.040, 6515.9, 0.756),
}


def _fit_points(
    classes: tuple[DeviceClass, ...], convention: str
) -> tuple[np.ndarray, np.ndarray]:
    xs: list[float] = []
    ys: list[float] = []
    for c in classes:
        if convention == "midpoint":
            xs.append((c.amp_low + c.amp_high) / 2.0)
            ys.append(c.acquisition_usd)
        elif convention == "upper":
            xs.append(c.amp_high)
            ys.append(c.acquisition_usd)
        elif convention == "lower":
            xs.append(c.amp_low)
            ys.append(c.acquisition_usd)
        elif convention == "endpoints":
            xs.extend((c.amp_low, c.amp_high))
            ys.extend((c.acquisition_usd, c.acquisition_usd))
        elif convention == "dense":
            grid = np.arange(int(c.amp_low), int(c.amp_high) + 1, dtype=float)
            xs.extend(grid.tolist())
            ys.extend([c.acquisition_usd] * len(grid))
        else:
            raise DeviceCatalogError(f"unknown fit convention {convention!r}")
    return np.asarray(xs), np.asarray(ys)


def fit_device_line(
    catalog: DeviceCatalog, dtype: str, convention: str = "midpoint"
) -> FitLine:
    """Ordinary least squares of acquisition cost against class current.

    The abscissa per class follows ``convention`` (default: range midpoint).
    Raises on types with fewer than two classes or a degenerate abscissa.
    """
    classes = catalog.classes(dtype)
    if len(classes) < 2:
        raise DeviceCatalogError(f"{dtype}: need >= 2 classes to fit a line")
    x, y = _fit_points(classes, convention)
    sxx = float(np.sum((x - x.mean()) ** 2))
    if sxx == 0.0:
        raise DeviceCatalogError(f"{dtype}: degenerate abscissa (all equal)")
    sxy = float(np.sum((x - x.mean()) * (y - y.mean())))
    syy = float(np.sum((y - y.mean()) ** 2))
    slope = sxy / sxx
    intercept = float(y.mean() - slope * x.mean())
    r2 = 1.0 if syy == 0.0 else sxy * sxy / (sxx * syy)
    return FitLine(slope=slope, intercept=intercept, r_squared=r2)


def calibrate_fit_convention(
    catalog: DeviceCatalog,
    reference: Mapping[str, FitLine] | None = None,
) -> dict:
    """Try every named convention against the reference lines.

    Returns a report dict with per-convention, per-type fitted lines and
    deviations, the convention minimizing the worst R-squared deviation, and
    whether that best convention lands every type within the published
    tolerance (2% on coefficients, 0.02 absolute on R-squared).
    """
    ref = dict(reference if reference is not None else REFERENCE_TRENDLINES)
    rows: dict[str, dict] = {}
    best_name = None
    best_score = np.inf
    for conv in FIT_CONVENTIONS:
        per_type = {}
        worst_r2 = 0.0
        all_ok = True
        for dtype, target in sorted(ref.items()):
            line = fit_device_line(catalog, dtype, conv)
            d_slope = abs(line.slope - target.slope) / abs(target.slope)
            d_inter = abs(line.intercept - target.intercept) / abs(target.intercept)
            d_r2 = abs(line.r_squared - target.r_squared)
            ok = d_slope <= 0.02 and d_inter <= 0.02 and d_r2 <= 0.02
            all_ok &= ok
            worst_r2 = max(worst_r2, d_r2)
            per_type[dtype] = {
                "fit": line,
                "target": target,
                "slope_rel_err": d_slope,
                "intercept_rel_err": d_inter,
                "r2_abs_err": d_r2,
                "within_tolerance": ok,
            }
        rows[conv] = {
            "types": per_type,
            "worst_r2_abs_err": worst_r2,
            "all_within_tolerance": all_ok,
        }
        if worst_r2 < best_score:
            best_score = worst_r2
            best_name = conv
    return {
        "conventions": rows,
        "chosen_convention": best_name,
        "chosen_within_tolerance": rows[best_name]["all_within_tolerance"],
    }
