"""Generate the bundled 123-bus feeder fixture.

Builds a 123-bus radial feeder (12.5 kV, slack at 1.05 p.u.): a 12-bus
trunk with seven laterals, a deep lateral whose tail is the watch region
(buses 33-37), protective devices on lateral roots / mid-laterals / 3-bus
tail taps, and branch ratings sized so a full build-out at 10 spots per bus
stays inside the voltage band and every protected branch stays inside its
device type's catalog coverage.

Run with --check to verify the electrical envelope of the written fixture.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from evsiting.netmodel import parse_network  # noqa: E402
from evsiting.powerflow import (  # noqa: E402
    InjectionSet,
    branch_currents_amps,
    newton_power_flow,
)

OUT = Path(__file__).resolve().parents[1] / "src" / "evsiting" / "data" / "ieee123.json"

KV = 12.5
BASE_MVA = 10.0
SLACK_V = 1.05

# chains: (first_bus, last_bus, parent_of_first)
TRUNK = (2, 13, 1)
LATERALS = [
    (14, 19, 3),    # L1
    (20, 27, 5),    # L2
    (28, 37, 13),   # L7: deep lateral, tail 33..37 is the watch region
    (38, 52, 7),    # L3
    (53, 70, 9),    # L4
    (71, 95, 11),   # L5
    (96, 123, 12),  # L6
]

# trunk impedance per branch (ohms) and lengths (km) by group; lateral
# impedance scales inversely with the downstream bus count (conductor sized
# to the load it carries), deep-lateral spans are electrically longer
Z_TRUNK = (0.016, 0.032, 0.15)
LATERAL_R_K = 0.40
DEEP_R_K = 1.00
LEN_LATERAL = 0.22
LEN_DEEP = 0.35

CAP_TRUNK_KVA = 12_000.0
CAP_LATERAL_KVA = 1_500.0

# protective devices: branch identified by its downstream bus
DEVICES = {
    14: "overcurrent_relay",  # L1 root
    20: "recloser",           # L2 root
    28: "recloser",           # L7 root (deep lateral)
    38: "dorsr",              # L3 root
    53: "recloser",           # L4 root
    71: "recloser",           # L5 root
    96: "recloser",           # L6 root
    46: "overcurrent_relay",  # L3 mid
    62: "recloser",           # L4 mid
    80: "recloser",           # L5 mid
    88: "dorsr",              # L5 deep
    105: "recloser",          # L6 mid
    114: "overcurrent_relay", # L6 deep
    # 3-bus tail taps, fuse-protected
    17: "fuse",
    25: "fuse",
    50: "fuse",
    68: "fuse",
    93: "fuse",
    121: "fuse",
    35: "fuse",               # feeds {35,36,37}: watch-region tail
}

CATALOG_MAX = {"fuse": 200.0, "recloser": 1000.0,
               "overcurrent_relay": 1000.0, "dorsr": 1000.0}

CLASS_EDGES = {
    "fuse": [20, 50, 80, 100, 200],
    "recloser": [50, 100, 300, 500, 1000],
    "overcurrent_relay": [50, 100, 300, 500, 1000],
    "dorsr": [50, 100, 200, 500, 1000],
}


def class_of(dtype: str, current: float) -> int:
    prev = 0.0
    for k, hi in enumerate(CLASS_EDGES[dtype], start=1):
        if prev < current <= hi:
            return k
        prev = hi
    raise ValueError(f"{dtype} current {current} beyond catalog")


def load_kw(bus_id: int) -> float:
    return 20.0 + 6.0 * (bus_id % 5)


def build() -> dict:
    buses = [
        {"id": 1, "kind": "slack", "nominal_kv": KV, "candidate": False},
    ]
    parent: dict[int, int] = {}
    group: dict[int, str] = {}
    for b in range(TRUNK[0], TRUNK[1] + 1):
        parent[b] = b - 1 if b > TRUNK[0] else TRUNK[2]
        group[b] = "trunk"
    for first, last, off in LATERALS:
        deep = first == 28
        for b in range(first, last + 1):
            parent[b] = off if b == first else b - 1
            group[b] = "deep" if deep else "lateral"

    for b in sorted(parent):
        p = load_kw(b)
        zl: dict = {}
        if b % 11 == 0:
            zl["sz"] = {"p_kw": round(p * 0.3, 3), "q_kvar": round(p * 0.1, 3)}
            p *= 0.7
        if b % 7 == 0:
            zl["si"] = {"p_kw": round(p * 0.3, 3), "q_kvar": round(p * 0.1, 3)}
            p *= 0.7
        zl["sp"] = {"p_kw": round(p, 3), "q_kvar": round(p / 3.0, 3)}
        buses.append(
            {"id": b, "kind": "load", "nominal_kv": KV, "candidate": True,
             "zip_load": zl}
        )

    # subtree sizes, needed to size lateral conductors
    children: dict[int, list[int]] = {}
    for b, p in parent.items():
        children.setdefault(p, []).append(b)

    def subtree_size(b: int) -> int:
        return 1 + sum(subtree_size(c) for c in children.get(b, ()))

    branches = []
    for k, b in enumerate(sorted(parent), start=1):
        g = group[b]
        if g == "trunk":
            r, x, length = Z_TRUNK
        else:
            n_down = subtree_size(b)
            k_r = DEEP_R_K if g == "deep" else LATERAL_R_K
            r = k_r / max(3, n_down)
            x = 1.2 * r
            length = LEN_DEEP if g == "deep" else LEN_LATERAL
        branches.append(
            {
                "id": k,
                "from": parent[b],
                "to": b,
                "r_ohm": round(r, 5),
                "x_ohm": round(x, 5),
                "length_km": length,
                "capacity_kva": CAP_TRUNK_KVA if g == "trunk" else CAP_LATERAL_KVA,
                "rated_current_a": 0.0,  # filled below
            }
        )

    net = parse_network(
        json.dumps(
            {
                "base_mva": BASE_MVA,
                "slack_v_pu": SLACK_V,
                "buses": buses,
                "branches": [dict(br, rated_current_a=10_000.0) for br in branches],
            }
        )
    )
    base_sol = newton_power_flow(net, InjectionSet.from_network(net))
    base_amps = branch_currents_amps(net, base_sol)

    # ratings: cap-10 full build-out plus headroom; small subtrees get
    # concentration headroom (25 spots/bus); protected branches stay inside
    # their device type's catalog coverage
    down_count = {}
    for br in net.branches:
        down_count[br.id] = len(net.subtree_ids(br))
    by_down = {net.downstream_bus(br): br for br in net.branches}
    for raw in branches:
        br = net.branch_by_id[raw["id"]]
        n_down = down_count[br.id]
        base = base_amps[br.id]
        if n_down <= 8:
            rated = base + 50.0 * n_down + 30.0
        else:
            rated = (base + 20.0 * n_down) * 1.15 + 20.0
        down_bus = net.downstream_bus(br)
        dtype = DEVICES.get(down_bus)
        if dtype is not None:
            rated = min(rated, CATALOG_MAX[dtype])
        raw["rated_current_a"] = float(math.ceil(rated))
        raw["base_current_a"] = round(base, 3)
        if dtype is not None:
            raw["device"] = {"type": dtype, "class": class_of(dtype, max(base, 1.0))}

    return {
        "description": (
            "123-bus radial feeder at 12.5 kV used for the large-system "
            "studies: 12-bus trunk, seven laterals, watch region at buses "
            "33-37 on the electrically deepest lateral. All non-slack buses "
            "are candidate station sites. Device classes cover the base-case "
            "currents; ratings allow a full 10-spot-per-bus build-out."
        ),
        "base_mva": BASE_MVA,
        "slack_v_pu": SLACK_V,
        "buses": buses,
        "branches": branches,
    }


def check(path: Path) -> int:
    net = parse_network(path.read_text())
    assert net.n_bus == 123 and net.n_branch == 122
    base = newton_power_flow(net, InjectionSet.from_network(net))
    mags = base.magnitudes()
    print(f"base |V| in [{mags.min():.4f}, {mags.max():.4f}]  "
          f"(load {sum(load_kw(b) for b in range(2,124)):.0f} kW nominal)")
    ok = True
    if mags.min() < 1.0:
        print("FAIL: base profile dips below 1.0")
        ok = False
    full = {b: 10 * 44.0 for b in range(2, 124)}
    sol = newton_power_flow(net, InjectionSet.from_network(net, extra_p_kw=full))
    mags = sol.magnitudes()
    amps = branch_currents_amps(net, sol)
    print(f"full cap-10 build-out |V| in [{mags.min():.4f}, {mags.max():.4f}]")
    if mags.min() < 0.95:
        print("FAIL: build-out dips below 0.95")
        ok = False
    over = [
        (br.id, amps[br.id], br.rated_current_a)
        for br in net.branches
        if amps[br.id] > br.rated_current_a
    ]
    if over:
        print(f"FAIL: {len(over)} branches over rating: {over[:5]}")
        ok = False
    # catalog coverage at full build-out for protected branches
    from evsiting.netmodel import downstream_ev_count

    counts = downstream_ev_count(net, {b: 10 for b in range(2, 124)})
    for br in net.branches:
        if br.device is None:
            continue
        worst = br.base_current_a + 2.0 * counts[br.id]
        if worst > CATALOG_MAX[br.device.type]:
            print(f"FAIL: branch {br.id} ({br.device.type}) worst {worst:.0f} A")
            ok = False
    region = [net.position(b) - 1 for b in (33, 34, 35, 36, 37)]
    sens = []
    for b in (14, 22, 60, 37):
        one = newton_power_flow(
            net, InjectionSet.from_network(net, extra_p_kw={b: 440.0})
        )
        drop = float(np.abs(base.v).sum() - np.abs(one.v).sum())
        sens.append((b, drop))
    print("10-spot sum|V| drop by bus:", [(b, round(d, 5)) for b, d in sens])
    print("devices:", sum(1 for br in net.branches if br.device is not None))
    print("OK" if ok else "NOT OK")
    return 0 if ok else 1


if __name__ == "__main__":
    ap = argparse.ArgumentParser()
    ap.add_argument("--check", action="store_true")
    args = ap.parse_args()
    if not args.check:
        data = build()
        OUT.write_text(json.dumps(data, indent=1) + "\n", encoding="utf-8")
        print(f"wrote {OUT}")
    sys.exit(check(OUT))
