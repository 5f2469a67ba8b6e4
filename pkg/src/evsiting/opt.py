"""Siting optimizer: convex surrogate model, branch and bound, oracles.

The convex path builds a mixed-integer *linear* surrogate of the siting
problem -- linear power-flow voltages, tangent-cut epigraph for the squared
voltage deviation, straight-line protection costs, and the linear branch of
the substation-surplus piecewise rule -- and solves it to global optimality
with a deterministic best-bound branch and bound over LP relaxations.
Returned placements are always re-evaluated with the exact nonconvex cost
stack (Newton voltages, step protection costs); any constraint violation
found at exact evaluation is reported as a gap warning, never silently
accepted.

Two reference solvers accompany it: an exhaustive enumerator (ground truth
on small instances) and a single-coordinate local search over the exact
costs (the non-convex baseline whose bad-start failures the convex path is
measured against).
"""

from __future__ import annotations

import heapq
import itertools
import math
import time
from dataclasses import dataclass, replace
from typing import Mapping, Sequence

import numpy as np
from scipy.optimize import linprog

from .catalog import DeviceCatalog, DeviceCatalogError, fit_device_line
from .costs import (
    ALL_TERMS,
    CostBreakdown,
    CostParameters,
    Placement,
    surplus_threshold_spots,
    total_cost,
)
from .netmodel import DistributionNetwork, downstream_ev_count
from .powerflow import (
    InjectionSet,
    PowerFlowError,
    VoltageSolution,
    branch_currents_amps,
    linear_power_flow,
    linear_sensitivity,
    newton_power_flow,
)
from .scenario import Scenario

__all__ = [
    "ConvexModel",
    "SolveReport",
    "LpSolution",
    "InfeasibleScenarioError",
    "VMIN",
    "VMAX",
    "ensure_base_currents",
    "build_convex_model",
    "solve_lp",
    "branch_and_bound",
    "enumerate_optimum",
    "solve_nonconvex_baseline",
    "solve_scenario",
    "evaluate_exact",
    "start_spread_uniform",
    "start_all_zeros_repair",
]

VMIN = 0.95
VMAX = 1.05
INT_TOL = 1e-6
LP_TOL = 1e-6
N_TANGENT_CUTS = 8


class InfeasibleScenarioError(RuntimeError):
    """Raised when a scenario is provably infeasible before any solve."""


# ---------------------------------------------------------------------------
# base currents
# ---------------------------------------------------------------------------


def ensure_base_currents(net: DistributionNetwork) -> DistributionNetwork:
    """Fill missing per-branch base currents from a zero-EV Newton solve."""
    if all(br.base_current_a is not None for br in net.branches):
        return net
    sol = newton_power_flow(net, InjectionSet.from_network(net))
    amps = branch_currents_amps(net, sol)
    missing = {
        br.id: amps[br.id] for br in net.branches if br.base_current_a is None
    }
    return net.with_base_currents(missing)


# ---------------------------------------------------------------------------
# exact evaluation
# ---------------------------------------------------------------------------


def evaluate_exact(
    net: DistributionNetwork,
    catalog: DeviceCatalog,
    scenario: Scenario,
    placement: Placement,
) -> tuple[CostBreakdown, tuple[str, ...]]:
    """Exact breakdown and constraint check for a placement.

    Newton voltages at the placement's charging load, exact branch currents,
    the full step protection costs.  Returns the breakdown plus a tuple of
    violation messages (voltage band, branch ratings, budget, demand).
    """
    params = scenario.params
    extra = {bid: params.p_ev_kw * n for bid, n in placement.y.items() if n}
    inj = InjectionSet.from_network(net, extra_p_kw=extra)
    sol = newton_power_flow(net, inj)
    breakdown = total_cost(
        net,
        placement,
        sol,
        catalog,
        params,
        terms=scenario.enabled_terms,
        length_override=scenario.length_override_km,
    )
    violations: list[str] = []
    if params.d_per_spot * placement.total_spots() < params.s_demand - 1e-9:
        violations.append(
            f"serviceability: {placement.total_spots()} spots cover "
            f"{params.d_per_spot * placement.total_spots():g} < {params.s_demand:g}"
        )
    mags = sol.magnitudes(include_slack=True)
    ids = (net.slack_id, *net.nonslack_ids)
    for bid, m in zip(ids, mags):
        if m < VMIN - 1e-6 or m > VMAX + 1e-6:
            violations.append(f"voltage: bus {bid} at {m:.4f} p.u.")
    amps = branch_currents_amps(net, sol)
    for br in net.branches:
        if amps[br.id] > br.rated_current_a * (1 + 1e-6):
            violations.append(
                f"current: branch {br.id} at {amps[br.id]:.1f} A "
                f"> rated {br.rated_current_a:g} A"
            )
    if breakdown.total > params.budget + 0.005:
        violations.append(
            f"budget: total {breakdown.total:.2f} > {params.budget:.2f}"
        )
    return breakdown, tuple(violations)


# ---------------------------------------------------------------------------
# convex model
# ---------------------------------------------------------------------------


@dataclass
class ConvexModel:
    """Affine surrogate: minimize c @ v + c0 subject to A_ub @ v <= b_ub.

    Variable layout: x (binary, per candidate), y (integer, per candidate),
    then t (continuous voltage-deviation epigraph, per non-slack bus, only
    when the voltage term is active).
    """

    candidates: tuple[int, ...]
    c: np.ndarray
    c0: float
    a_ub: np.ndarray
    b_ub: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    integrality: np.ndarray  # bool per variable
    var_names: tuple[str, ...]
    surplus_mode: str  # "above" | "below"
    net: DistributionNetwork | None = None
    catalog: DeviceCatalog | None = None
    scenario: Scenario | None = None
    budget_row: int | None = None

    @property
    def n_cand(self) -> int:
        return len(self.candidates)

    def placement_from_vector(self, v: np.ndarray) -> Placement:
        """Round the y block to a placement; stations follow the spots
        (an open station with zero spots never improves any cost term)."""
        k = self.n_cand
        y = {
            bid: int(round(v[k + j]))
            for j, bid in enumerate(self.candidates)
            if int(round(v[k + j])) > 0
        }
        return Placement.from_spots(y)


@dataclass(frozen=True)
class LpSolution:
    status: str  # "optimal" | "infeasible" | "unbounded" | "error"
    x: np.ndarray | None
    objective: float | None
    message: str = ""


@dataclass
class SolveReport:
    """Outcome of one solve: placement, exact breakdown, solver statistics."""

    placement: Placement
    breakdown: CostBreakdown | None
    status: str  # "optimal" | "infeasible" | "budget-infeasible" | "saturated" | "local-optimum"
    model_objective: float | None = None
    relaxation_bound: float | None = None
    nodes_explored: int = 0
    wall_time_s: float = 0.0
    warnings: tuple[str, ...] = ()
    co_optimal: tuple[Placement, ...] = ()
    ranked: tuple[tuple[float, Placement], ...] | None = None

    @property
    def exact_total(self) -> float | None:
        return None if self.breakdown is None else self.breakdown.total


def _voltage_map(
    net: DistributionNetwork, params: CostParameters, candidates: Sequence[int]
) -> tuple[np.ndarray, np.ndarray]:
    """Base linear voltages and the per-spot sensitivity matrix.

    The linear solve is affine in the constant-power injections, so one
    column per candidate (unit spot of charging load) captures the exact
    linear-model response for any spot vector.
    """
    base, sens = linear_sensitivity(
        net, InjectionSet.from_network(net), candidates, params.p_ev_kw
    )
    return base.v, sens


def build_convex_model(
    net: DistributionNetwork,
    catalog: DeviceCatalog,
    params: CostParameters,
    scenario: Scenario,
    surplus_mode: str = "above",
) -> ConvexModel:
    """Assemble the affine surrogate for one substation-surplus branch.

    ``surplus_mode`` picks the branch of the piecewise substation rule:
    "above" charges c4 on every added kW and keeps spot totals at or past
    the surplus threshold; "below" drops the c4 term and keeps totals
    strictly under it.  Callers solve the branches that can contain the
    optimum and keep the cheaper exact result.
    """
    if surplus_mode not in ("above", "below"):
        raise ValueError(f"unknown surplus_mode {surplus_mode!r}")
    net = ensure_base_currents(net)
    candidates = tuple(
        scenario.candidates if scenario.candidates is not None else net.candidate_ids
    )
    if not candidates:
        raise InfeasibleScenarioError("no candidate buses")
    unknown = [b for b in candidates if b not in net.bus_by_id]
    if unknown:
        raise InfeasibleScenarioError(f"candidate buses not in network: {unknown}")
    k = len(candidates)
    cap = scenario.effective_cap()
    min_spots = params.min_spots()
    if min_spots > cap * k:
        raise InfeasibleScenarioError(
            f"demand needs {min_spots} spots but {k} candidates x cap {cap} "
            f"= {cap * k} spots are available"
        )

    use_voltage_term = "voltage" in scenario.enabled_terms
    nonslack = net.nonslack_ids
    nb = len(nonslack)
    nt = nb if use_voltage_term else 0
    nvar = 2 * k + nt
    names = (
        tuple(f"x[{b}]" for b in candidates)
        + tuple(f"y[{b}]" for b in candidates)
        + tuple(f"t[{b}]" for b in (nonslack if use_voltage_term else ()))
    )

    v0, m_sens = _voltage_map(net, params, candidates)
    mu0 = v0.real
    mu_sens = m_sens.real

    c = np.zeros(nvar)
    c0 = 0.0
    rows: list[np.ndarray] = []
    rhs: list[float] = []

    def add_row(row: np.ndarray, b: float) -> None:
        rows.append(row)
        rhs.append(float(b))

    # station cost
    if "station" in scenario.enabled_terms:
        c[:k] += params.c1
        c[k : 2 * k] += params.c2

    # distribution cost: line term per candidate, c4 term in "above" mode
    if "distribution" in scenario.enabled_terms:
        for j, bid in enumerate(candidates):
            li = scenario.length_override_km.get(bid)
            if li is None:
                br = net.feeding_branch.get(bid)
                li = 0.0 if br is None else br.length_km
            br = net.feeding_branch.get(bid)
            p0 = br.capacity_kva if br is not None else 0.0
            c[j] += params.c3 * li * p0
            c[k + j] += params.c3 * li * params.p_ev_kw
        if surplus_mode == "above":
            c[k : 2 * k] += params.c4 * params.p_ev_kw

    # voltage regulation: epigraph t >= tangent cuts of (mu - 1)^2
    if use_voltage_term:
        c[2 * k :] += params.c5
        c0 += params.c5 * (abs(net.slack_v_pu) - 1.0) ** 2
        for b_idx in range(nb):
            for u0 in np.linspace(VMIN, VMAX, N_TANGENT_CUTS):
                a = 2.0 * (u0 - 1.0)
                row = np.zeros(nvar)
                row[k : 2 * k] = a * mu_sens[b_idx]
                row[2 * k + b_idx] = -1.0
                add_row(row, a * u0 - (u0 - 1.0) ** 2 - a * mu0[b_idx])

    # protection cost: straight-line device cost versus through current
    if "protection" in scenario.enabled_terms:
        cand_pos = {bid: j for j, bid in enumerate(candidates)}
        for br in net.branches:
            if br.device is None:
                continue
            line = fit_device_line(catalog, br.device.type)
            c0 += line.slope * br.base_current_a + line.intercept
            for bid in net.subtree_ids(br):
                j = cand_pos.get(bid)
                if j is not None:
                    c[k + j] += line.slope * params.i_ev_a

    # (2a)/(2b) linking: y_j <= cap x_j
    for j in range(k):
        row = np.zeros(nvar)
        row[k + j] = 1.0
        row[j] = -float(cap)
        add_row(row, 0.0)

    # (2c) serviceability
    row = np.zeros(nvar)
    row[k : 2 * k] = -params.d_per_spot
    add_row(row, -params.s_demand)

    # (2f) voltage band on the linear-model magnitudes
    for b_idx in range(nb):
        row = np.zeros(nvar)
        row[k : 2 * k] = mu_sens[b_idx]
        add_row(row, VMAX - mu0[b_idx])
        row = np.zeros(nvar)
        row[k : 2 * k] = -mu_sens[b_idx]
        add_row(row, mu0[b_idx] - VMIN)

    # (2e) branch current limits via downstream charging-current aggregation
    for br in net.branches:
        down = [bid for bid in net.subtree_ids(br) if bid in set(candidates)]
        if not down:
            continue
        row = np.zeros(nvar)
        for bid in down:
            row[k + candidates.index(bid)] = params.i_ev_a
        add_row(row, br.rated_current_a - br.base_current_a)

    # substation-surplus branch selector (only meaningful while the
    # distribution term is active; c4 is the only piecewise piece)
    if "distribution" in scenario.enabled_terms:
        thr = surplus_threshold_spots(params)
        if surplus_mode == "above":
            row = np.zeros(nvar)
            row[k : 2 * k] = -1.0
            add_row(row, -float(thr))
        else:
            row = np.zeros(nvar)
            row[k : 2 * k] = 1.0
            add_row(row, float(thr - 1))

    # (2g) budget on the surrogate objective
    budget_row = None
    if math.isfinite(params.budget):
        budget_row = len(rows)
        add_row(c.copy(), params.budget - c0)

    lo = np.zeros(nvar)
    hi = np.concatenate(
        (np.ones(k), np.full(k, float(cap)), np.full(nt, np.inf))
    )
    integrality = np.concatenate(
        (np.ones(2 * k, dtype=bool), np.zeros(nt, dtype=bool))
    )
    return ConvexModel(
        candidates=candidates,
        c=c,
        c0=c0,
        a_ub=np.vstack(rows) if rows else np.zeros((0, nvar)),
        b_ub=np.asarray(rhs),
        lo=lo,
        hi=hi,
        integrality=integrality,
        var_names=names,
        surplus_mode=surplus_mode,
        net=net,
        catalog=catalog,
        scenario=scenario,
        budget_row=budget_row,
    )


# ---------------------------------------------------------------------------
# LP engine
# ---------------------------------------------------------------------------

_LP_STATUS = {0: "optimal", 1: "error", 2: "infeasible", 3: "unbounded", 4: "error"}


def solve_lp(
    model: ConvexModel,
    relaxed: bool = True,
    tie_break: bool = True,
    lo: np.ndarray | None = None,
    hi: np.ndarray | None = None,
) -> LpSolution:
    """Solve the model's LP (integrality dropped when ``relaxed``).

    Backed by the HiGHS dual simplex, which is deterministic for fixed
    input.  Among co-optimal vertices a second pass minimizes an
    index-weighted mass so ties resolve to the lowest-index bus, making the
    returned vertex deterministic as well.
    """
    lo = model.lo if lo is None else lo
    hi = model.hi if hi is None else hi
    if np.any(lo > hi + 1e-12):
        return LpSolution(status="infeasible", x=None, objective=None,
                          message="empty variable bound")
    bounds = list(zip(lo.tolist(), [None if math.isinf(u) else u for u in hi]))
    integrality = None if relaxed else model.integrality.astype(int)
    res = linprog(
        model.c,
        A_ub=model.a_ub,
        b_ub=model.b_ub,
        bounds=bounds,
        method="highs",
        integrality=integrality,
    )
    status = _LP_STATUS.get(res.status, "error")
    if status != "optimal":
        return LpSolution(status=status, x=None, objective=None, message=res.message)
    z = float(res.fun)
    x = np.asarray(res.x)
    if tie_break:
        k = model.n_cand
        w = np.zeros(len(model.c))
        w[:k] = 1.0 + np.arange(k)
        w[k : 2 * k] = 1.0 + np.arange(k)
        a2 = np.vstack([model.a_ub, model.c[None, :]])
        b2 = np.concatenate([model.b_ub, [z + 1e-7 * max(1.0, abs(z))]])
        res2 = linprog(
            w,
            A_ub=a2,
            b_ub=b2,
            bounds=bounds,
            method="highs",
            integrality=integrality,
        )
        if res2.status == 0:
            x = np.asarray(res2.x)
    return LpSolution(status="optimal", x=x, objective=z)


# ---------------------------------------------------------------------------
# branch and bound
# ---------------------------------------------------------------------------


def _is_integral(v: np.ndarray, mask: np.ndarray) -> bool:
    frac = np.abs(v[mask] - np.round(v[mask]))
    return bool(np.all(frac <= INT_TOL))


def _most_fractional(v: np.ndarray, mask: np.ndarray) -> int:
    frac = np.abs(v - np.round(v))
    frac[~mask] = -1.0
    # distance of the fractional part from 1/2, smaller = more fractional
    dist = np.abs(frac - 0.5)
    dist[~mask] = np.inf
    dist[frac <= INT_TOL] = np.inf
    return int(np.argmin(dist))


def branch_and_bound(model: ConvexModel) -> SolveReport:
    """Deterministic best-bound branch and bound on the surrogate model.

    Most-fractional branching (ties to the lowest variable index), node
    selection by best bound, zero bound gap at termination.  The winning
    placement is re-evaluated with the exact cost stack when the model
    carries its evaluation context.
    """
    t0 = time.perf_counter()
    root = solve_lp(model, relaxed=True, tie_break=False)
    if root.status != "optimal":
        status = root.status
        if status == "infeasible" and model.budget_row is not None:
            # distinguish a budget-bound infeasibility from a physical one
            trimmed = replace(
                model,
                a_ub=np.delete(model.a_ub, model.budget_row, axis=0),
                b_ub=np.delete(model.b_ub, model.budget_row),
                budget_row=None,
            )
            if solve_lp(trimmed, relaxed=True, tie_break=False).status == "optimal":
                status = "budget-infeasible"
        return SolveReport(
            placement=Placement.empty(),
            breakdown=None,
            status=status,
            wall_time_s=time.perf_counter() - t0,
        )

    relaxation_bound = root.objective + model.c0
    int_mask = model.integrality
    tol = 1e-9 * max(1.0, abs(root.objective))
    best_x: np.ndarray | None = None
    best_obj = math.inf
    nodes = 0
    counter = itertools.count()
    heap: list[tuple[float, int, np.ndarray, np.ndarray]] = []
    heapq.heappush(heap, (root.objective, next(counter), model.lo, model.hi))

    while heap:
        bound, _, lo, hi = heapq.heappop(heap)
        if bound >= best_obj - tol:
            continue
        sol = solve_lp(model, relaxed=True, tie_break=False, lo=lo, hi=hi)
        nodes += 1
        if sol.status != "optimal":
            continue
        if sol.objective >= best_obj - tol:
            continue
        if _is_integral(sol.x, int_mask):
            # first incumbent at a given objective wins; exploration order is
            # deterministic, so the returned placement is too
            best_obj = sol.objective
            best_x = np.where(int_mask, np.round(sol.x), sol.x)
            continue
        j = _most_fractional(sol.x, int_mask)
        val = sol.x[j]
        lo_child = lo.copy()
        hi_child = hi.copy()
        hi_child[j] = math.floor(val)
        if lo[j] <= hi_child[j]:
            heapq.heappush(heap, (sol.objective, next(counter), lo.copy(), hi_child))
        lo_child[j] = math.ceil(val)
        if lo_child[j] <= hi[j]:
            heapq.heappush(heap, (sol.objective, next(counter), lo_child, hi.copy()))

    wall = time.perf_counter() - t0
    if best_x is None:
        return SolveReport(
            placement=Placement.empty(),
            breakdown=None,
            status="infeasible",
            relaxation_bound=relaxation_bound,
            nodes_explored=nodes,
            wall_time_s=wall,
        )
    placement = model.placement_from_vector(best_x)
    model_obj = float(model.c @ best_x) + model.c0
    breakdown = None
    warnings: tuple[str, ...] = ()
    if model.net is not None and model.catalog is not None and model.scenario is not None:
        breakdown, warnings = evaluate_exact(
            model.net, model.catalog, model.scenario, placement
        )
        warnings = tuple(f"convexification gap: {w}" for w in warnings)
    return SolveReport(
        placement=placement,
        breakdown=breakdown,
        status="optimal",
        model_objective=model_obj,
        relaxation_bound=relaxation_bound,
        nodes_explored=nodes,
        wall_time_s=wall,
        warnings=warnings,
    )


# ---------------------------------------------------------------------------
# scenario driver (surplus branches, saturation)
# ---------------------------------------------------------------------------


def solve_scenario(
    net: DistributionNetwork,
    catalog: DeviceCatalog,
    scenario: Scenario,
    allow_saturation: bool = False,
) -> SolveReport:
    """Solve one scenario on the convex path.

    Handles the piecewise substation rule by solving the applicable
    surplus branches and keeping the cheaper exact result.  When the demand
    provably exceeds the system's spot capacity and ``allow_saturation`` is
    set, the serviceability row is dropped and the maximum buildable spot
    total is planned instead (status "saturated").
    """
    net = ensure_base_currents(net)
    params = scenario.params
    candidates = (
        scenario.candidates if scenario.candidates is not None else net.candidate_ids
    )
    cap = scenario.effective_cap()
    min_spots = params.min_spots()
    thr = surplus_threshold_spots(params)

    if min_spots > cap * len(candidates):
        if not allow_saturation:
            raise InfeasibleScenarioError(
                f"demand needs {min_spots} spots but only "
                f"{cap * len(candidates)} can be built"
            )
        return _solve_saturated(net, catalog, scenario)

    modes: list[str]
    if "distribution" not in scenario.enabled_terms:
        modes = ["above"]  # c4 inactive; branch selector is irrelevant
    elif min_spots >= thr:
        modes = ["above"]
    elif cap * len(candidates) < thr:
        modes = ["below"]
    else:
        modes = ["below", "above"]

    reports: list[SolveReport] = []
    nodes = 0
    wall = 0.0
    for mode in modes:
        model = build_convex_model(net, catalog, params, scenario, surplus_mode=mode)
        rep = branch_and_bound(model)
        nodes += rep.nodes_explored
        wall += rep.wall_time_s
        reports.append(rep)
    feasible = [r for r in reports if r.status == "optimal"]
    if not feasible:
        worst = reports[0]
        return replace(worst, nodes_explored=nodes, wall_time_s=wall)
    best = min(
        feasible,
        key=lambda r: (r.exact_total, r.placement.as_sorted_tuple()),
    )
    return replace(best, nodes_explored=nodes, wall_time_s=wall)


def _solve_saturated(
    net: DistributionNetwork, catalog: DeviceCatalog, scenario: Scenario
) -> SolveReport:
    """Two-phase saturated solve: maximize buildable spots, then minimize
    cost at that build-out."""
    t0 = time.perf_counter()
    params = scenario.params
    base = build_convex_model(
        net,
        catalog,
        replace(params, s_demand=params.d_per_spot),  # one spot always required
        scenario.with_params(replace(params, s_demand=params.d_per_spot)),
        surplus_mode="above",
    )
    k = base.n_cand
    phase1 = replace(base, c=np.zeros_like(base.c), c0=0.0)
    phase1.c[k : 2 * k] = -1.0
    rep1 = branch_and_bound(
        replace(phase1, net=None, catalog=None, scenario=None)
    )
    if rep1.status != "optimal":
        return SolveReport(
            placement=Placement.empty(),
            breakdown=None,
            status="infeasible",
            wall_time_s=time.perf_counter() - t0,
        )
    max_spots = int(round(-rep1.model_objective))
    # phase 2: original objective, spot total pinned to the maximum
    row = np.zeros(base.c.shape[0])
    row[k : 2 * k] = -1.0
    model2 = replace(
        base,
        a_ub=np.vstack([base.a_ub, row[None, :]]),
        b_ub=np.concatenate([base.b_ub, [-float(max_spots)]]),
    )
    rep2 = branch_and_bound(model2)
    if rep2.status != "optimal":
        return replace(rep2, wall_time_s=time.perf_counter() - t0)
    return replace(
        rep2,
        status="saturated",
        nodes_explored=rep1.nodes_explored + rep2.nodes_explored,
        wall_time_s=time.perf_counter() - t0,
    )


# ---------------------------------------------------------------------------
# enumeration oracle
# ---------------------------------------------------------------------------


def enumerate_optimum(
    net: DistributionNetwork,
    catalog: DeviceCatalog,
    params: CostParameters,
    scenario: Scenario,
    return_ranked: bool = False,
    max_candidates: int = 6,
    max_points: int = 1_000_000,
) -> SolveReport:
    """Exhaustive ground-truth search over every feasible placement.

    Exact Newton voltages and exact step protection costs at every point;
    refuses search spaces beyond ``max_points`` with a size estimate.
    Placements whose protection current exceeds the catalog are infeasible
    by construction (the upgrade cannot be priced).
    """
    t0 = time.perf_counter()
    net = ensure_base_currents(net)
    scenario = scenario.with_params(params)
    candidates = tuple(
        scenario.candidates if scenario.candidates is not None else net.candidate_ids
    )
    k = len(candidates)
    if k > max_candidates:
        raise ValueError(f"enumeration limited to {max_candidates} candidates, got {k}")
    cap = scenario.effective_cap()
    n_points = (cap + 1) ** k
    if n_points > max_points:
        raise ValueError(
            f"search space too large: ({cap}+1)^{k} = {n_points} > {max_points}"
        )
    min_spots = params.min_spots()
    best_total = math.inf
    best: list[tuple[tuple, Placement, CostBreakdown]] = []
    ranked: list[tuple[float, Placement]] = []
    evaluated = 0
    for combo in itertools.product(range(cap + 1), repeat=k):
        if sum(combo) < min_spots:
            continue
        placement = Placement.from_spots(
            {bid: n for bid, n in zip(candidates, combo) if n > 0}
        )
        try:
            breakdown, violations = evaluate_exact(net, catalog, scenario, placement)
        except (DeviceCatalogError, PowerFlowError):
            continue
        evaluated += 1
        if violations:
            continue
        total = breakdown.total
        if return_ranked:
            ranked.append((total, placement))
        if total < best_total - 0.005:
            best_total = total
            best = [(placement.as_sorted_tuple(), placement, breakdown)]
        elif abs(total - best_total) <= 0.005:
            best.append((placement.as_sorted_tuple(), placement, breakdown))
            best_total = min(best_total, total)
    wall = time.perf_counter() - t0
    if not best:
        return SolveReport(
            placement=Placement.empty(),
            breakdown=None,
            status="infeasible",
            nodes_explored=evaluated,
            wall_time_s=wall,
        )
    best.sort(key=lambda t: t[0])
    _, placement, breakdown = best[0]
    report = SolveReport(
        placement=placement,
        breakdown=breakdown,
        status="optimal",
        model_objective=None,
        relaxation_bound=breakdown.total,
        nodes_explored=evaluated,
        wall_time_s=wall,
        co_optimal=tuple(p for _, p, _ in best),
    )
    if return_ranked:
        ranked.sort(key=lambda t: (t[0], t[1].as_sorted_tuple()))
        report.ranked = tuple(ranked)
    return report


# ---------------------------------------------------------------------------
# non-convex baseline
# ---------------------------------------------------------------------------


def start_spread_uniform(net: DistributionNetwork, scenario: Scenario) -> Placement:
    """Open every candidate and spread the demand minimum uniformly."""
    candidates = (
        scenario.candidates if scenario.candidates is not None else net.candidate_ids
    )
    cap = scenario.effective_cap()
    need = scenario.params.min_spots()
    per = max(1, min(cap, round(need / len(candidates))))
    y = {bid: per for bid in candidates}
    short = need - sum(y.values())
    for bid in sorted(candidates):
        if short <= 0:
            break
        room = cap - y[bid]
        add = min(room, short)
        y[bid] += add
        short -= add
    return Placement.from_spots(y)


def start_all_zeros_repair(
    net: DistributionNetwork,
    catalog: DeviceCatalog,
    scenario: Scenario,
) -> Placement:
    """Greedy repair from the empty placement: repeatedly fill the cheapest
    station (by exact total cost) until the demand is covered."""
    net = ensure_base_currents(net)
    candidates = sorted(
        scenario.candidates if scenario.candidates is not None else net.candidate_ids
    )
    cap = scenario.effective_cap()
    need = scenario.params.min_spots()
    y: dict[int, int] = {}
    while sum(y.values()) < need:
        remaining = need - sum(y.values())
        best_bid = None
        best_total = math.inf
        for bid in candidates:
            room = cap - y.get(bid, 0)
            if room <= 0:
                continue
            add = min(room, remaining)
            trial = dict(y)
            trial[bid] = trial.get(bid, 0) + add
            try:
                breakdown, _ = evaluate_exact(
                    net, catalog, scenario, Placement.from_spots(trial)
                )
            except (DeviceCatalogError, PowerFlowError):
                continue
            if breakdown.total < best_total - 1e-9:
                best_total = breakdown.total
                best_bid = bid
        if best_bid is None:
            raise InfeasibleScenarioError("greedy repair could not cover demand")
        y[best_bid] = y.get(best_bid, 0) + min(cap - y.get(best_bid, 0), remaining)
    return Placement.from_spots(y)


def solve_nonconvex_baseline(
    net: DistributionNetwork,
    catalog: DeviceCatalog,
    params: CostParameters,
    scenario: Scenario,
    start: Placement,
) -> SolveReport:
    """Integer local search over the exact nonconvex costs.

    Single-coordinate moves: one spot up, one spot down, station close
    (spots to zero).  Accepts the best strictly improving feasible move each
    sweep; terminates at a local optimum.  Stagnation away from the global
    optimum is an expected, recorded outcome.
    """
    t0 = time.perf_counter()
    net = ensure_base_currents(net)
    scenario = scenario.with_params(params)
    candidates = sorted(
        scenario.candidates if scenario.candidates is not None else net.candidate_ids
    )
    cap = scenario.effective_cap()

    def feasible_eval(y: Mapping[int, int]):
        placement = Placement.from_spots({b: n for b, n in y.items() if n > 0})
        try:
            breakdown, violations = evaluate_exact(net, catalog, scenario, placement)
        except (DeviceCatalogError, PowerFlowError):
            return None
        if violations:
            return None
        return placement, breakdown

    current = {b: start.spots_at(b) for b in candidates}
    state = feasible_eval(current)
    if state is None:
        raise ValueError("baseline start is infeasible for the scenario")
    placement, breakdown = state
    evaluations = 1
    improved = True
    while improved:
        improved = False
        best_move = None
        best_total = breakdown.total
        for bid in candidates:
            yi = current.get(bid, 0)
            moves = []
            if yi < cap:
                moves.append(yi + 1)
            if yi > 0:
                moves.append(yi - 1)
            if yi > 1:
                moves.append(0)  # station close
            for new_y in moves:
                trial = dict(current)
                trial[bid] = new_y
                got = feasible_eval(trial)
                evaluations += 1
                if got is None:
                    continue
                _, bd = got
                if bd.total < best_total - 1e-9:
                    best_total = bd.total
                    best_move = (bid, new_y, got)
        if best_move is not None:
            bid, new_y, (placement, breakdown) = best_move
            current[bid] = new_y
            improved = True
    return SolveReport(
        placement=placement,
        breakdown=breakdown,
        status="local-optimum",
        nodes_explored=evaluations,
        wall_time_s=time.perf_counter() - t0,
    )
