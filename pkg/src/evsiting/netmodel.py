"""Radial distribution network model.

Holds the bus/branch data model, JSON ingestion, admittance matrix
construction, and the tree queries used by the protection and current-limit
machinery (everything downstream of a branch, seen from the slack).

Conventions:
- exactly one slack bus per network; bus ordering for all matrix work is
  slack first, then non-slack buses in ascending id order
- impedances are entered in ohms and converted to per-unit on ``base_mva``
  and the (single) nominal kV of the feeder
- loads are ZIP triples in kW/kvar (consumption positive)
"""

from __future__ import annotations

import cmath
import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

__all__ = [
    "Bus",
    "Branch",
    "DistributionNetwork",
    "InstalledDevice",
    "NetworkError",
    "ZipLoad",
    "parse_network",
    "load_network",
    "admittance_partitions",
    "downstream_ev_count",
]


class NetworkError(ValueError):
    """Raised when a network file violates the data-model invariants."""


@dataclass(frozen=True)
class ZipLoad:
    """Constant-impedance / constant-current / constant-power load triple.

    Components are complex powers in kVA (kW + j kvar), consumption positive.
    """

    sz: complex = 0j
    si: complex = 0j
    sp: complex = 0j

    def total(self) -> complex:
        return self.sz + self.si + self.sp


@dataclass(frozen=True)
class InstalledDevice:
    """Protective device installed on a branch: type name plus 1-based
    capacity-class index into the device catalog."""

    type: str
    cls: int


@dataclass(frozen=True)
class Bus:
    id: int
    kind: str  # "slack" | "load"
    nominal_kv: float
    zip_load: ZipLoad = field(default_factory=ZipLoad)
    candidate: bool = True

    def __post_init__(self) -> None:
        if self.kind not in ("slack", "load"):
            raise NetworkError(f"bus {self.id}: unknown kind {self.kind!r}")
        if not self.nominal_kv > 0:
            raise NetworkError(f"bus {self.id}: nominal_kv must be > 0")
        for name in ("sz", "si", "sp"):
            s = getattr(self.zip_load, name)
            if not (math.isfinite(s.real) and math.isfinite(s.imag)):
                raise NetworkError(f"bus {self.id}: non-finite zip_load.{name}")


@dataclass(frozen=True)
class Branch:
    id: int
    from_bus: int
    to_bus: int
    r_ohm: float
    x_ohm: float
    length_km: float
    capacity_kva: float
    rated_current_a: float
    device: InstalledDevice | None = None
    base_current_a: float | None = None

    def __post_init__(self) -> None:
        if abs(complex(self.r_ohm, self.x_ohm)) == 0.0:
            raise NetworkError(f"branch {self.id}: zero impedance")
        if self.length_km < 0:
            raise NetworkError(f"branch {self.id}: negative length_km")
        if not self.capacity_kva > 0:
            raise NetworkError(f"branch {self.id}: capacity_kva must be > 0")
        if not self.rated_current_a > 0:
            raise NetworkError(f"branch {self.id}: rated_current_a must be > 0")
        if self.from_bus == self.to_bus:
            raise NetworkError(f"branch {self.id}: from == to ({self.from_bus})")

    @property
    def impedance_ohm(self) -> complex:
        return complex(self.r_ohm, self.x_ohm)


class DistributionNetwork:
    """Immutable radial feeder: buses, branches, and derived tree structure.

    Construction validates all invariants (unique ids, single slack,
    radiality, connectivity). After construction the object is read-only and
    safe to share between parallel workers.
    """

    def __init__(
        self,
        buses: Iterable[Bus],
        branches: Iterable[Branch],
        base_mva: float,
        slack_v_pu: complex = 1.0 + 0j,
    ):
        self.buses: tuple[Bus, ...] = tuple(buses)
        self.branches: tuple[Branch, ...] = tuple(branches)
        self.base_mva = float(base_mva)
        self.slack_v_pu = complex(slack_v_pu)
        if not self.base_mva > 0:
            raise NetworkError("base_mva must be > 0")
        self._validate_ids()
        self._validate_slack()
        self._validate_radial()
        self._index_tree()

    # -- validation ---------------------------------------------------------

    def _validate_ids(self) -> None:
        seen: set[int] = set()
        for b in self.buses:
            if b.id in seen:
                raise NetworkError(f"duplicate bus id {b.id}")
            seen.add(b.id)
        bseen: set[int] = set()
        for br in self.branches:
            if br.id in bseen:
                raise NetworkError(f"duplicate branch id {br.id}")
            bseen.add(br.id)
            if br.from_bus not in seen:
                raise NetworkError(f"branch {br.id}: unknown from bus {br.from_bus}")
            if br.to_bus not in seen:
                raise NetworkError(f"branch {br.id}: unknown to bus {br.to_bus}")
        kvs = {b.nominal_kv for b in self.buses}
        if len(kvs) > 1:
            raise NetworkError(
                "mixed nominal_kv values on one feeder (transformers unsupported): "
                f"{sorted(kvs)}"
            )

    def _validate_slack(self) -> None:
        slacks = [b.id for b in self.buses if b.kind == "slack"]
        if len(slacks) == 0:
            raise NetworkError("missing slack bus")
        if len(slacks) > 1:
            raise NetworkError(f"multiple slack buses: {slacks}")
        self.slack_id: int = slacks[0]

    def _validate_radial(self) -> None:
        n, m = len(self.buses), len(self.branches)
        if m != n - 1:
            raise NetworkError(f"non-radial topology: {n} buses, {m} branches")
        # connectivity from the slack; with m = n-1 this also excludes cycles
        adj: dict[int, list[tuple[int, Branch]]] = {b.id: [] for b in self.buses}
        for br in self.branches:
            adj[br.from_bus].append((br.to_bus, br))
            adj[br.to_bus].append((br.from_bus, br))
        reached = {self.slack_id}
        stack = [self.slack_id]
        while stack:
            u = stack.pop()
            for v, _ in adj[u]:
                if v not in reached:
                    reached.add(v)
                    stack.append(v)
        missing = sorted(b.id for b in self.buses if b.id not in reached)
        if missing:
            raise NetworkError(f"buses unreachable from slack: {missing}")
        self._adj = adj

    def _index_tree(self) -> None:
        # orient every branch away from the slack and record each bus's
        # feeding branch plus a slack-out BFS order for subtree accumulation
        self.parent: dict[int, int] = {}
        self.feeding_branch: dict[int, Branch] = {}
        order: list[int] = []
        visited = {self.slack_id}
        queue = [self.slack_id]
        while queue:
            u = queue.pop(0)
            order.append(u)
            for v, br in sorted(self._adj[u], key=lambda t: t[0]):
                if v not in visited:
                    visited.add(v)
                    self.parent[v] = u
                    self.feeding_branch[v] = br
                    queue.append(v)
        self.bfs_order: tuple[int, ...] = tuple(order)
        # sorted id list, slack first
        nonslack = sorted(b.id for b in self.buses if b.id != self.slack_id)
        self.bus_order: tuple[int, ...] = (self.slack_id, *nonslack)
        self._pos = {bid: k for k, bid in enumerate(self.bus_order)}
        self.bus_by_id: dict[int, Bus] = {b.id: b for b in self.buses}
        self.branch_by_id: dict[int, Branch] = {br.id: br for br in self.branches}

    # -- derived quantities -------------------------------------------------

    @property
    def n_bus(self) -> int:
        return len(self.buses)

    @property
    def n_branch(self) -> int:
        return len(self.branches)

    @property
    def nonslack_ids(self) -> tuple[int, ...]:
        return self.bus_order[1:]

    @property
    def candidate_ids(self) -> tuple[int, ...]:
        return tuple(
            bid for bid in self.nonslack_ids if self.bus_by_id[bid].candidate
        )

    @property
    def nominal_kv(self) -> float:
        return self.buses[0].nominal_kv

    @property
    def z_base_ohm(self) -> float:
        return self.nominal_kv**2 / self.base_mva

    @property
    def i_base_a(self) -> float:
        """Base current in amps for per-unit branch currents (three-phase
        convention: kVA / (sqrt(3) kV))."""
        return self.base_mva * 1e3 / (math.sqrt(3.0) * self.nominal_kv)

    def position(self, bus_id: int) -> int:
        """Index of a bus in the slack-first ordering."""
        return self._pos[bus_id]

    def downstream_bus(self, branch: Branch) -> int:
        """The endpoint of a branch on the side away from the slack."""
        down = branch.to_bus if self.parent.get(branch.to_bus) == branch.from_bus else branch.from_bus
        return down

    def subtree_ids(self, branch: Branch) -> tuple[int, ...]:
        """All bus ids in the subtree hanging off a branch (slack side
        excluded), including the branch's downstream endpoint."""
        root = self.downstream_bus(branch)
        out = [root]
        stack = [root]
        while stack:
            u = stack.pop()
            for v, _ in self._adj[u]:
                if self.parent.get(v) == u:
                    out.append(v)
                    stack.append(v)
        return tuple(sorted(out))

    def with_base_currents(self, currents_a: Mapping[int, float]) -> "DistributionNetwork":
        """Copy of the network with base currents filled in per branch id."""
        new_branches = []
        for br in self.branches:
            if br.base_current_a is None and br.id in currents_a:
                new_branches.append(
                    Branch(
                        id=br.id,
                        from_bus=br.from_bus,
                        to_bus=br.to_bus,
                        r_ohm=br.r_ohm,
                        x_ohm=br.x_ohm,
                        length_km=br.length_km,
                        capacity_kva=br.capacity_kva,
                        rated_current_a=br.rated_current_a,
                        device=br.device,
                        base_current_a=float(currents_a[br.id]),
                    )
                )
            else:
                new_branches.append(br)
        return DistributionNetwork(
            self.buses, new_branches, self.base_mva, self.slack_v_pu
        )


# -- file ingestion ----------------------------------------------------------


def _parse_power(obj: Mapping | None, where: str) -> complex:
    if obj is None:
        return 0j
    try:
        return complex(float(obj.get("p_kw", 0.0)), float(obj.get("q_kvar", 0.0)))
    except (TypeError, ValueError) as exc:
        raise NetworkError(f"{where}: bad power entry {obj!r}") from exc


def parse_network(text: str) -> DistributionNetwork:
    """Parse a network file (JSON) into a validated DistributionNetwork.

    Top-level keys: ``base_mva``, optional ``slack_v_pu``, ``buses[]``,
    ``branches[]``. See the bundled ``ieee4.json`` for the full schema.
    """
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise NetworkError(f"invalid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise NetworkError("network file must be a JSON object")
    for key in ("base_mva", "buses", "branches"):
        if key not in raw:
            raise NetworkError(f"missing top-level key {key!r}")

    buses = []
    for b in raw["buses"]:
        where = f"bus {b.get('id', '?')}"
        zl = b.get("zip_load") or {}
        kind = b.get("kind", "load")
        candidate = b.get("candidate")
        if candidate is None:
            candidate = kind != "slack"
        if kind == "slack":
            candidate = False
        buses.append(
            Bus(
                id=int(b["id"]),
                kind=kind,
                nominal_kv=float(b["nominal_kv"]),
                zip_load=ZipLoad(
                    sz=_parse_power(zl.get("sz"), where),
                    si=_parse_power(zl.get("si"), where),
                    sp=_parse_power(zl.get("sp"), where),
                ),
                candidate=bool(candidate),
            )
        )

    branches = []
    for br in raw["branches"]:
        dev = br.get("device")
        device = None
        if dev is not None:
            device = InstalledDevice(type=str(dev["type"]), cls=int(dev["class"]))
        base_i = br.get("base_current_a")
        branches.append(
            Branch(
                id=int(br["id"]),
                from_bus=int(br["from"]),
                to_bus=int(br["to"]),
                r_ohm=float(br["r_ohm"]),
                x_ohm=float(br["x_ohm"]),
                length_km=float(br.get("length_km", 0.0)),
                capacity_kva=float(br["capacity_kva"]),
                rated_current_a=float(br["rated_current_a"]),
                device=device,
                base_current_a=None if base_i is None else float(base_i),
            )
        )

    slack_v = raw.get("slack_v_pu", 1.0)
    if isinstance(slack_v, (list, tuple)):
        slack_v = complex(slack_v[0], slack_v[1])
    return DistributionNetwork(
        buses, branches, float(raw["base_mva"]), complex(slack_v)
    )


def load_network(path) -> DistributionNetwork:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_network(fh.read())


# -- admittance --------------------------------------------------------------


def admittance_partitions(
    net: DistributionNetwork,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Bus admittance matrix partitioned slack-first: (Y_SS, Y_SN, Y_NS, Y_NN).

    Series-element (shunt-free) construction, per-unit on the network bases.
    Raises NetworkError if Y_NN is singular.  Partitions are computed once
    per network and cached (networks are immutable).
    """
    cached = getattr(net, "_partition_cache", None)
    if cached is not None:
        return cached
    n = net.n_bus
    y = np.zeros((n, n), dtype=complex)
    zb = net.z_base_ohm
    for br in net.branches:
        yser = 1.0 / (br.impedance_ohm / zb)
        i, j = net.position(br.from_bus), net.position(br.to_bus)
        y[i, i] += yser
        y[j, j] += yser
        y[i, j] -= yser
        y[j, i] -= yser
    y_ss = y[:1, :1]
    y_sn = y[:1, 1:]
    y_ns = y[1:, :1]
    y_nn = y[1:, 1:]
    if n > 1:
        if not np.all(np.isfinite(y_nn)):
            raise NetworkError("ill-conditioned network: non-finite admittance")
        try:
            cond = np.linalg.cond(y_nn, 1)
        except np.linalg.LinAlgError as exc:
            raise NetworkError("ill-conditioned network: singular Y_NN") from exc
        if not np.isfinite(cond) or cond > 1e14:
            raise NetworkError("ill-conditioned network: singular Y_NN")
    for part in (y_ss, y_sn, y_ns, y_nn):
        part.setflags(write=False)
    net._partition_cache = (y_ss, y_sn, y_ns, y_nn)
    return net._partition_cache


# -- tree queries ------------------------------------------------------------


def downstream_ev_count(
    net: DistributionNetwork, spots: Mapping[int, int]
) -> dict[int, int]:
    """Per-branch count of charging spots in the subtree away from the slack.

    ``spots`` maps bus id -> spot count (missing buses count as zero).
    Computed in one reverse-BFS accumulation pass, O(n).
    """
    for bid in spots:
        if bid not in net.bus_by_id:
            raise NetworkError(f"placement references unknown bus {bid}")
    acc = {bid: int(spots.get(bid, 0)) for bid in net.bus_by_id}
    for bid in reversed(net.bfs_order):
        p = net.parent.get(bid)
        if p is not None:
            acc[p] += acc[bid]
    counts: dict[int, int] = {}
    for br in net.branches:
        counts[br.id] = acc[net.downstream_bus(br)]
    return counts
