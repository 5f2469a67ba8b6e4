"""Power flow on the balanced single-phase feeder equivalent.

Two solvers over the same ZIP injection model plus the scalar error metric
of the voltage linearization:

- ``linear_power_flow``: closed-form linear solve.  Nodal current balance
  ``Y_NS V_S + Y_NN V_N = I_N(V_N)`` is written in the rectangular form
  ``A + B V_N* + C V_N = 0`` and split into real/imaginary parts, giving one
  real system of dimension 2(n-1).  With all powers stored as injections
  (consumption negative) the blocks are::

      A = Y_NS V_S - 2 h S_PN* - h S_IN*
      B = h^2 diag(S_PN*)        (evaluated at nominal voltage, see below)
      C = Y_NN - h^2 diag(S_ZN*)

  The constant-power block B multiplies V_N*, which would make the solution
  a rational (not affine) function of S_PN.  We evaluate that bilinear term
  at the nominal voltage V* = 1/h, collapsing the S_PN contribution to
  ``-h S_PN*`` inside A and leaving B = 0.  That keeps the solve exactly
  affine in (S_PN, S_IN) -- the property the siting model relies on -- at
  the cost of treating constant-power load as its nominal-voltage current.
  The error is second order in the voltage deviation and stays well under
  the 1% acceptance bound inside the 0.95..1.05 operating band.

- ``newton_power_flow``: full Newton-Raphson on the exact ZIP current
  balance, used as the reference oracle.

Constant-impedance load is carried exactly by both solvers (it is linear in
V), so a pure-Z network solves identically on both paths.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .netmodel import DistributionNetwork, admittance_partitions

__all__ = [
    "InjectionSet",
    "VoltageSolution",
    "PowerFlowError",
    "linear_power_flow",
    "newton_power_flow",
    "linearization_error_pct",
    "branch_currents_amps",
]


class PowerFlowError(RuntimeError):
    """Raised on singular systems or Newton non-convergence."""

    def __init__(self, message: str, mismatch: float | None = None):
        super().__init__(message)
        self.mismatch = mismatch


@dataclass(frozen=True)
class InjectionSet:
    """Per-unit complex ZIP injections at the non-slack buses.

    Arrays follow the network's slack-first ordering with the slack entry
    dropped; consumption enters negative.  ``h = 1/V_nom`` is 1.0 in the
    per-unit system used throughout.
    """

    s_z: np.ndarray
    s_i: np.ndarray
    s_p: np.ndarray
    h: float = 1.0

    def __post_init__(self) -> None:
        if not self.h > 0:
            raise ValueError("h must be > 0")
        n = len(self.s_z)
        if len(self.s_i) != n or len(self.s_p) != n:
            raise ValueError("ZIP arrays must share one length")

    @classmethod
    def from_network(
        cls,
        net: DistributionNetwork,
        extra_p_kw: dict[int, float] | None = None,
    ) -> "InjectionSet":
        """Base-load injections, optionally with extra constant-power draw
        (kW, consumption positive) added per bus id -- the hook the siting
        model uses to inject charging load."""
        ids = net.nonslack_ids
        sb_kva = net.base_mva * 1e3
        s_z = np.zeros(len(ids), dtype=complex)
        s_i = np.zeros(len(ids), dtype=complex)
        s_p = np.zeros(len(ids), dtype=complex)
        for k, bid in enumerate(ids):
            zl = net.bus_by_id[bid].zip_load
            s_z[k] = -zl.sz / sb_kva
            s_i[k] = -zl.si / sb_kva
            s_p[k] = -zl.sp / sb_kva
            if extra_p_kw:
                s_p[k] -= complex(extra_p_kw.get(bid, 0.0)) / sb_kva
        return cls(s_z=s_z, s_i=s_i, s_p=s_p, h=1.0)

    def scaled(self, factor: float) -> "InjectionSet":
        return InjectionSet(
            s_z=self.s_z * factor,
            s_i=self.s_i * factor,
            s_p=self.s_p * factor,
            h=self.h,
        )


@dataclass(frozen=True)
class VoltageSolution:
    """Complex per-unit voltages at the non-slack buses plus the slack."""

    v: np.ndarray
    slack_v: complex
    method: str  # "linear" | "newton"
    iterations: int = 0
    mismatch: float = 0.0
    outside_trust_region: bool = False

    def magnitudes(self, include_slack: bool = False) -> np.ndarray:
        mags = np.abs(self.v)
        if include_slack:
            return np.concatenate(([abs(self.slack_v)], mags))
        return mags

    def all_voltages(self) -> np.ndarray:
        return np.concatenate(([self.slack_v], self.v))


def _split_solve(b_mat: np.ndarray, c_mat: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve B V* + C V = rhs for complex V via the 2n real split.

    ``rhs`` may be a vector or a matrix of stacked right-hand sides (one
    factorization serves them all).
    """
    br, bi = b_mat.real, b_mat.imag
    cr, ci = c_mat.real, c_mat.imag
    n = b_mat.shape[0]
    m = np.empty((2 * n, 2 * n))
    # real part:  (Br+Cr) e + (Bi-Ci) f = Re rhs
    # imag part:  (Bi+Ci) e + (Cr-Br) f = Im rhs
    m[:n, :n] = br + cr
    m[:n, n:] = bi - ci
    m[n:, :n] = bi + ci
    m[n:, n:] = cr - br
    b = np.concatenate((rhs.real, rhs.imag), axis=0)
    try:
        ef = np.linalg.solve(m, b)
    except np.linalg.LinAlgError as exc:
        raise PowerFlowError("linearization singular") from exc
    return ef[:n] + 1j * ef[n:]


def linear_power_flow(
    net: DistributionNetwork, inj: InjectionSet
) -> VoltageSolution:
    """Linearized AC power flow (see module docstring for the resolved form).

    Deterministic for fixed inputs; affine in (s_p, s_i) with s_z held fixed.
    """
    _, _, y_ns, y_nn = admittance_partitions(net)
    h = inj.h
    v_s = net.slack_v_pu
    # A collects the slack coupling and the nominal-voltage current of the
    # constant-power and constant-current loads; B is identically zero after
    # evaluating the bilinear term at V_nom (affinity; see module docstring)
    a_vec = (y_ns[:, 0] * v_s) - h * np.conj(inj.s_p) - h * np.conj(inj.s_i)
    c_mat = y_nn - (h * h) * np.diag(np.conj(inj.s_z))
    b_mat = np.zeros_like(c_mat)
    v = _split_solve(b_mat, c_mat, -a_vec)
    mags = np.abs(v)
    outside = bool(np.any((mags <= 0.0) | (mags >= 2.0)))
    return VoltageSolution(
        v=v, slack_v=v_s, method="linear", outside_trust_region=outside
    )


def linear_sensitivity(
    net: DistributionNetwork,
    inj: InjectionSet,
    bus_ids: Sequence[int],
    p_kw: float,
) -> tuple[VoltageSolution, np.ndarray]:
    """Base linear solution plus per-bus voltage sensitivity columns.

    Column j is the exact change of the linear solution when a constant-power
    draw of ``p_kw`` is added at ``bus_ids[j]`` (the solve is affine in the
    constant-power injections, so columns superpose exactly).  One
    factorization serves the base case and every column.
    """
    _, _, y_ns, y_nn = admittance_partitions(net)
    h = inj.h
    v_s = net.slack_v_pu
    a_vec = (y_ns[:, 0] * v_s) - h * np.conj(inj.s_p) - h * np.conj(inj.s_i)
    c_mat = y_nn - (h * h) * np.diag(np.conj(inj.s_z))
    b_mat = np.zeros_like(c_mat)
    n = len(a_vec)
    pos = {bid: k for k, bid in enumerate(net.nonslack_ids)}
    p_pu = p_kw / (net.base_mva * 1e3)
    rhs = np.zeros((n, 1 + len(bus_ids)), dtype=complex)
    rhs[:, 0] = -a_vec
    for j, bid in enumerate(bus_ids):
        rhs[pos[bid], 1 + j] = -h * p_pu  # extra draw enters as -h conj(ds_p)
    out = _split_solve(b_mat, c_mat, rhs)
    v0 = out[:, 0]
    sens = out[:, 1:]
    base = VoltageSolution(
        v=v0,
        slack_v=v_s,
        method="linear",
        outside_trust_region=bool(np.any((np.abs(v0) <= 0) | (np.abs(v0) >= 2))),
    )
    return base, sens


def _zip_current(inj: InjectionSet, v: np.ndarray) -> np.ndarray:
    """Exact ZIP injection current at voltage v."""
    return (
        np.conj(inj.s_p) / np.conj(v)
        + inj.h * np.conj(inj.s_i)
        + inj.h**2 * np.conj(inj.s_z) * v
    )


def newton_power_flow(
    net: DistributionNetwork,
    inj: InjectionSet,
    tol: float = 1e-8,
    max_iter: int = 50,
) -> VoltageSolution:
    """Newton-Raphson on the exact ZIP current balance.

    Converged when the per-bus power mismatch |V conj(F(V))| drops below
    ``tol`` (per-unit).  Raises PowerFlowError carrying the last mismatch
    norm if it fails to converge within ``max_iter`` iterations.
    """
    _, _, y_ns, y_nn = admittance_partitions(net)
    h = inj.h
    v_s = net.slack_v_pu
    n = len(inj.s_p)
    v = np.full(n, v_s, dtype=complex)
    const = y_ns[:, 0] * v_s

    def residual(v: np.ndarray) -> np.ndarray:
        return const + y_nn @ v - _zip_current(inj, v)

    mis = np.inf
    for it in range(max_iter + 1):
        f = residual(v)
        mis = float(np.max(np.abs(v * np.conj(f))))
        if mis < tol:
            return VoltageSolution(
                v=v, slack_v=v_s, method="newton", iterations=it, mismatch=mis
            )
        if it == max_iter:
            break
        # Wirtinger blocks: dF/dV and dF/dV*
        d_v = y_nn - (h * h) * np.diag(np.conj(inj.s_z))
        d_vc = np.diag(np.conj(inj.s_p) / np.conj(v) ** 2)
        jr = np.empty((2 * n, 2 * n))
        # F = G(V, V*); with V = e + jf:
        #   dF/de = dF/dV + dF/dV*,  dF/df = j(dF/dV - dF/dV*)
        d_e = d_v + d_vc
        d_f = 1j * (d_v - d_vc)
        jr[:n, :n] = d_e.real
        jr[:n, n:] = d_f.real
        jr[n:, :n] = d_e.imag
        jr[n:, n:] = d_f.imag
        rhs = -np.concatenate((f.real, f.imag))
        try:
            step = np.linalg.solve(jr, rhs)
        except np.linalg.LinAlgError as exc:
            raise PowerFlowError(
                f"newton jacobian singular (mismatch {mis:.3e})", mismatch=mis
            ) from exc
        v = v + step[:n] + 1j * step[n:]
        if not np.all(np.isfinite(v)) or np.any(np.abs(v) < 1e-6):
            raise PowerFlowError(
                f"newton diverged (mismatch {mis:.3e})", mismatch=mis
            )
    raise PowerFlowError(
        f"newton did not converge in {max_iter} iterations "
        f"(last mismatch {mis:.3e})",
        mismatch=mis,
    )


def linearization_error_pct(v) -> np.ndarray | float:
    """Percent error of the 1/V ~ 2 - V substitution at voltage magnitude v.

    Valid on 0 < v < 2 (the geometric-series expansion's trust region).
    Accepts scalars or arrays.
    """
    arr = np.asarray(v, dtype=float)
    if np.any(arr <= 0.0) or np.any(arr >= 2.0):
        raise ValueError("voltage magnitude must lie in (0, 2)")
    err = 100.0 * np.abs(1.0 / arr - (2.0 - arr))
    if np.isscalar(v) or arr.ndim == 0:
        return float(err)
    return err


def branch_currents_amps(
    net: DistributionNetwork, sol: VoltageSolution
) -> dict[int, float]:
    """Exact branch current magnitudes (amps) implied by a voltage solution."""
    vfull = {net.slack_id: sol.slack_v}
    for k, bid in enumerate(net.nonslack_ids):
        vfull[bid] = sol.v[k]
    out: dict[int, float] = {}
    zb = net.z_base_ohm
    for br in net.branches:
        yser = 1.0 / (br.impedance_ohm / zb)
        i_pu = (vfull[br.from_bus] - vfull[br.to_bus]) * yser
        out[br.id] = abs(i_pu) * net.i_base_a
    return out
