"""Command-line entry point.

Subcommands map one-to-one onto the studies: ``solve``, ``stack``,
``sweep``, ``compare-convexification``, ``protection-share``,
``validate-linearization``, ``validate-config``.  Tables land as CSV,
reports as JSON, and a human-readable summary (the four-component cost
breakdown) goes to standard output.

Exit codes: 0 success, 2 config/validation error, 3 I/O error,
4 infeasible scenario, 5 catalog-coverage error, 1 unexpected failure.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import dataclass, replace
from multiprocessing import Pool
from pathlib import Path

import numpy as np

from . import __version__, bundled_path
from .catalog import DeviceCatalog, DeviceCatalogError, load_catalog
from .costs import CostParameters, Placement
from .experiments import (
    STACK_CSV_HEADER,
    SWEEP_CSV_HEADER,
    SweepSpec,
    TOY_REFERENCE_TOTALS,
    constraint_stack,
    convexification_comparison,
    protection_share,
    regional_presets,
    rows_to_csv,
    run_metadata,
    run_sweep,
)
from .netmodel import DistributionNetwork, NetworkError, load_network
from .opt import InfeasibleScenarioError, SolveReport, solve_scenario
from .powerflow import linearization_error_pct
from .scenario import Scenario, ScenarioError, load_scenario

EXIT_OK = 0
EXIT_UNEXPECTED = 1
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_INFEASIBLE = 4
EXIT_CATALOG = 5


@dataclass
class RunConfig:
    command: str
    network: Path | None = None
    catalog: Path | None = None
    scenario: Path | None = None
    out: Path = Path(".")
    workers: int = 1
    param: str | None = None
    sweep_from: float | None = None
    sweep_to: float | None = None
    steps: int | None = None
    region_preset: str | None = None


def validate_config(config: RunConfig) -> list[str]:
    """Every schema violation in the configured inputs, as diagnostics.

    An empty list means the bundle is runnable.  Nothing raises; problems
    are collected so a user sees all of them at once.
    """
    diags: list[str] = []
    if config.workers < 1:
        diags.append("workers must be >= 1")
    net = catalog = scenario = None
    if config.network is not None:
        if not Path(config.network).exists():
            diags.append(f"network file not found: {config.network}")
        else:
            try:
                net = load_network(config.network)
            except NetworkError as exc:
                diags.append(f"network: {exc}")
    if config.catalog is not None:
        if not Path(config.catalog).exists():
            diags.append(f"catalog file not found: {config.catalog}")
        else:
            try:
                catalog = load_catalog(config.catalog)
            except DeviceCatalogError as exc:
                diags.append(f"catalog: {exc}")
    if config.scenario is not None:
        if not Path(config.scenario).exists():
            diags.append(f"scenario file not found: {config.scenario}")
        else:
            try:
                scenario = load_scenario(config.scenario)
            except ScenarioError as exc:
                diags.append(f"scenario: {exc}")
    if net is not None and catalog is not None:
        for br in net.branches:
            if br.device is None:
                continue
            try:
                cls = catalog.cls(br.device.type, br.device.cls)
            except DeviceCatalogError as exc:
                diags.append(f"branch {br.id}: {exc}")
                continue
            if br.base_current_a is not None and not (
                cls.amp_low <= br.base_current_a <= cls.amp_high
                or (cls.index == 1 and br.base_current_a <= cls.amp_high)
            ):
                diags.append(
                    f"branch {br.id}: base current {br.base_current_a:g} A outside "
                    f"installed class {cls.label()}"
                )
    if net is not None and scenario is not None and scenario.candidates is not None:
        for bid in scenario.candidates:
            if bid not in net.bus_by_id:
                diags.append(f"scenario candidate bus {bid} not in network")
    return diags


def _load_bundle(
    config: RunConfig,
) -> tuple[DistributionNetwork, DeviceCatalog, Scenario | None]:
    if config.network is None:
        raise ScenarioError("--network is required for this command")
    for path in (config.network, config.catalog):
        if path is not None and not Path(path).exists():
            raise FileNotFoundError(path)
    if config.scenario is not None and not Path(config.scenario).exists():
        raise FileNotFoundError(config.scenario)
    net = load_network(config.network)
    catalog = load_catalog(config.catalog)
    scenario = None
    if config.scenario is not None:
        scenario = load_scenario(config.scenario)
        if config.region_preset:
            preset = regional_presets(
                config.region_preset, s_demand=scenario.params.s_demand
            )
            merged = replace(
                scenario.params,
                c1=preset.c1,
                c2=preset.c2,
                c3=preset.c3,
                c4=preset.c4,
            )
            scenario = scenario.with_params(merged)
    return net, catalog, scenario


def _placement_json(p: Placement) -> dict:
    return {str(bid): p.spots_at(bid) for bid in sorted(p.y)}


def _report_json(rep: SolveReport) -> dict:
    bd = rep.breakdown
    return {
        "status": rep.status,
        "placement": _placement_json(rep.placement),
        "stations": rep.placement.station_count(),
        "spots": rep.placement.total_spots(),
        "breakdown": None
        if bd is None
        else {
            "c_sta": round(bd.c_sta, 2),
            "c_dis": round(bd.c_dis, 2),
            "c_vr": round(bd.c_vr, 2),
            "c_prot": round(bd.c_prot, 2),
            "total": round(bd.total, 2),
            "within_budget": bd.within_budget,
            "upgrades": [
                {
                    "branch": u.branch_id,
                    "type": u.dtype,
                    "from_class": u.old_class.label(),
                    "to_class": u.new_class.label(),
                    "current_a": round(u.current_a, 2),
                }
                for u in bd.upgrades
            ],
        },
        "model_objective": rep.model_objective,
        "relaxation_bound": rep.relaxation_bound,
        "nodes_explored": rep.nodes_explored,
        "warnings": list(rep.warnings),
    }


def _print_breakdown(rep: SolveReport) -> None:
    bd = rep.breakdown
    print(f"status: {rep.status}")
    print(
        "placement:",
        ", ".join(
            f"bus {bid}: {rep.placement.spots_at(bid)} spots"
            for bid in sorted(rep.placement.y)
        )
        or "(none)",
    )
    if bd is not None:
        print(f"  stations            : {rep.placement.station_count()}")
        print(f"  spots               : {rep.placement.total_spots()}")
        print(f"  station cost        : $ {bd.c_sta:,.2f}")
        print(f"  distribution cost   : $ {bd.c_dis:,.2f}")
        print(f"  voltage-reg cost    : $ {bd.c_vr:,.2f}")
        print(f"  protection cost     : $ {bd.c_prot:,.2f}")
        print(f"  total               : $ {bd.total:,.2f}")
    for w in rep.warnings:
        print(f"  warning: {w}")


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


def _cmd_solve(config: RunConfig) -> int:
    net, catalog, scenario = _load_bundle(config)
    if scenario is None:
        print("solve requires --scenario", file=sys.stderr)
        return EXIT_CONFIG
    try:
        rep = solve_scenario(net, catalog, scenario)
    except InfeasibleScenarioError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    _write(
        config.out / "report.json",
        json.dumps(_report_json(rep), indent=2, sort_keys=True) + "\n",
    )
    _print_breakdown(rep)
    if rep.status in ("optimal", "saturated"):
        return EXIT_OK
    return EXIT_INFEASIBLE


def _cmd_stack(config: RunConfig) -> int:
    net, catalog, scenario = _load_bundle(config)
    if scenario is None:
        print("stack requires --scenario", file=sys.stderr)
        return EXIT_CONFIG
    rows = constraint_stack(
        net, catalog, scenario.params, scenario, reference_totals=TOY_REFERENCE_TOTALS
    )
    for row in rows:
        placements = row["enum_placements"] or (row["placement"],)
        names = " or ".join(
            "("
            + ", ".join(f"{bid}:{p.spots_at(bid)}" for bid in sorted(p.y))
            + ")"
            for p in placements
        )
        print(
            f"{row['terms']:<45} {names:<22} total $ {row['total']:,.2f}"
            f"  (row convention $ {row['total_row_convention']:,.2f})"
        )
    _write(config.out / "stack.csv", rows_to_csv(STACK_CSV_HEADER, rows))
    _write(
        config.out / "stack.json",
        json.dumps(
            [
                {
                    k: (
                        _placement_json(v)
                        if isinstance(v, Placement)
                        else [_placement_json(p) for p in v]
                        if isinstance(v, tuple) and v and isinstance(v[0], Placement)
                        else v
                    )
                    for k, v in row.items()
                }
                for row in rows
            ],
            indent=2,
            sort_keys=True,
            default=str,
        )
        + "\n",
    )
    return EXIT_OK


def _cmd_sweep(config: RunConfig) -> int:
    net, catalog, scenario = _load_bundle(config)
    if scenario is None or config.param is None:
        print("sweep requires --scenario and --param", file=sys.stderr)
        return EXIT_CONFIG
    if config.sweep_from is None or config.sweep_to is None or not config.steps:
        print("sweep requires --from/--to/--steps", file=sys.stderr)
        return EXIT_CONFIG
    values = np.linspace(config.sweep_from, config.sweep_to, config.steps)
    if config.param == "spot_cap":
        values = np.unique(np.round(values).astype(int))
    spec = SweepSpec(
        parameter=config.param, values=tuple(float(v) for v in values), base=scenario
    )
    if config.workers > 1:
        with Pool(config.workers) as pool:
            rows = run_sweep(spec, net, catalog, pool=pool)
    else:
        rows = run_sweep(spec, net, catalog)
    _write(config.out / "sweep.csv", rows_to_csv(SWEEP_CSV_HEADER, rows))
    meta = run_metadata(
        {
            "command": "sweep",
            "parameter": spec.parameter,
            "values": list(spec.values),
            "scenario": scenario.name,
            "workers": config.workers,
        }
    )
    meta["wall_times_s"] = [round(r.get("wall_time_s", math.nan), 3) for r in rows]
    _write(config.out / "sweep_meta.json", json.dumps(meta, indent=2) + "\n")
    for row in rows:
        print(
            f"{spec.parameter}={row['value']:g}: {row['status']}, "
            f"{row['stations']} stations, {row['spots']} spots, "
            f"total $ {row['total']:,.2f}"
        )
    return EXIT_OK


def _cmd_compare(config: RunConfig) -> int:
    net, catalog, _ = _load_bundle(config)
    if config.scenario is None:
        print("compare-convexification requires --scenario (a battery file)",
              file=sys.stderr)
        return EXIT_CONFIG
    battery = json.loads(Path(config.scenario).read_text())
    scenarios = []
    base_costs = battery["base_costs"]
    for point in battery["points"]:
        payload = {
            "name": f"ev{point['ev_per_hour']}-cap{point['spot_cap']}",
            "costs": base_costs,
            "demand": {"ev_per_hour": point["ev_per_hour"]},
            "spot_cap": point["spot_cap"],
        }
        from .scenario import parse_scenario

        scenarios.append(parse_scenario(json.dumps(payload)))
    result = convexification_comparison(net, catalog, scenarios)
    print(f"scenarios                : {result['n_scenarios']}")
    print(f"convex failure rate      : {result['convex_failure_pct']:.1f}%")
    print(f"baseline failure rate    : {result['baseline_failure_pct']:.1f}%")
    print(f"avg total, convex path   : $ {result['avg_cost_convex']:,.2f}")
    print(f"avg total, baseline      : $ {result['avg_cost_baseline']:,.2f}")
    _write(
        config.out / "comparison.json",
        json.dumps(result, indent=2, sort_keys=True, default=str) + "\n",
    )
    return EXIT_OK


def _cmd_protection_share(config: RunConfig) -> int:
    net, catalog, scenario = _load_bundle(config)
    if scenario is None:
        print("protection-share requires --scenario", file=sys.stderr)
        return EXIT_CONFIG
    result = protection_share(net, catalog, scenario.params, scenario)
    if result["status"] not in ("optimal", "saturated"):
        print(f"infeasible: {result['status']}", file=sys.stderr)
        return EXIT_INFEASIBLE
    print(f"total cost        : $ {result['total']:,.2f}")
    print(f"protection cost   : $ {result['c_prot']:,.2f}")
    print(f"protection share  : {result['share_pct']:.2f}%")
    print(f"stations / spots  : {result['stations']} / {result['spots']}")
    _write(
        config.out / "protection_share.json",
        json.dumps(
            {k: v for k, v in result.items() if k not in ("placement", "upgrades")},
            indent=2,
            sort_keys=True,
            default=str,
        )
        + "\n",
    )
    return EXIT_OK


def _cmd_validate_linearization(config: RunConfig) -> int:
    lo = 0.95 if config.sweep_from is None else config.sweep_from
    hi = 1.05 if config.sweep_to is None else config.sweep_to
    steps = config.steps or 10_001
    grid = np.linspace(lo, hi, steps)
    err = linearization_error_pct(grid)
    lines = ["v,psi_pct"]
    lines += [f"{v:.6f},{e:.6f}" for v, e in zip(grid, err)]
    _write(config.out / "linearization.csv", "\n".join(lines) + "\n")
    print(
        f"max error {float(np.max(err)):.2f}% on [{lo:g},{hi:g}] "
        f"(grid of {steps} points)"
    )
    return EXIT_OK


def _cmd_validate_config(config: RunConfig) -> int:
    diags = validate_config(config)
    if not diags:
        print("configuration OK")
        return EXIT_OK
    for d in diags:
        print(f"diagnostic: {d}")
    return EXIT_CONFIG


_COMMANDS = {
    "solve": _cmd_solve,
    "stack": _cmd_stack,
    "sweep": _cmd_sweep,
    "compare-convexification": _cmd_compare,
    "protection-share": _cmd_protection_share,
    "validate-linearization": _cmd_validate_linearization,
    "validate-config": _cmd_validate_config,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="evsiting",
        description="EV charging station siting on radial distribution feeders",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--network", type=Path, default=None)
        p.add_argument("--catalog", type=Path, default=bundled_path("catalog_paper.json"))
        p.add_argument("--scenario", type=Path, default=None)
        p.add_argument("--out", type=Path, default=Path("."))
        p.add_argument("--workers", type=int, default=1)
        p.add_argument("--param", choices=("ev_per_hour", "c4", "c5", "spot_cap"))
        p.add_argument("--from", dest="sweep_from", type=float, default=None)
        p.add_argument("--to", dest="sweep_to", type=float, default=None)
        p.add_argument("--steps", type=int, default=None)
        p.add_argument("--region-preset", choices=("us", "beijing"), default=None)
    return parser


def run(config: RunConfig) -> int:
    """Dispatch one command; returns the process exit status."""
    handler = _COMMANDS.get(config.command)
    if handler is None:
        print(f"unknown command {config.command!r}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return handler(config)
    except FileNotFoundError as exc:
        print(f"file not found: {exc}", file=sys.stderr)
        return EXIT_IO
    except (NetworkError, ScenarioError) as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DeviceCatalogError as exc:
        print(f"catalog error: {exc}", file=sys.stderr)
        return EXIT_CATALOG
    except InfeasibleScenarioError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    config = RunConfig(
        command=args.command,
        network=args.network,
        catalog=args.catalog,
        scenario=args.scenario,
        out=args.out,
        workers=args.workers,
        param=args.param,
        sweep_from=args.sweep_from,
        sweep_to=args.sweep_to,
        steps=args.steps,
        region_preset=args.region_preset,
    )
    return run(config)


if __name__ == "__main__":
    sys.exit(main())
