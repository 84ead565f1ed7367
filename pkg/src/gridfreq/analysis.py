"""Equilibrium computation, security checking, and energy-function monitoring.

An equilibrium is found in stages: a scalar bisection on the aggregate static
supply map pins the common frequency deviation, a damped Newton solve on bus
phases recovers angles and flows for the resulting injections, and every
balance and flow-law condition is re-checked independently of the solver path
before the solution is accepted.  Solutions with any |eta| >= pi/2 are
rejected (security constraint), since the flow law leaves its stable branch
there.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .controllers import Role
from .energy import LyapunovBreakdown, StorageEvaluator, iter_block_assignments
from .errors import (
    AngleSolveFailed,
    BalanceInfeasible,
    NoStorageAvailable,
    SecurityViolated,
    ToleranceNotMet,
)
from .network import NetworkModel, bus_mismatch, validate_topology
from .rootfind import bisect_decreasing, bracket_decreasing, polish_decreasing

_SECURITY_MARGIN = math.pi / 2


def _load_vector(model: NetworkModel, load_steps) -> np.ndarray:
    loads = np.array([b.load_step for b in model.buses])
    if load_steps is not None:
        pos = {b.id: i for i, b in enumerate(model.buses)}
        for bus_id, value in load_steps.items():
            loads[pos[bus_id]] = value
    return loads


def _net_supply_map(model: NetworkModel, blocks, loads: np.ndarray):
    """The decreasing scalar map whose root is the common frequency deviation."""
    entries = [(bus_id, block) for bus_id, _, block in iter_block_assignments(blocks)]
    total_load = float(loads.sum())

    def value(omega: float) -> float:
        total = -total_load
        for _, block in entries:
            total += block.supply_sign * block.static_output(-omega)
        return total

    def slope(omega: float) -> float:
        s = 0.0
        for _, block in entries:
            lo, hi = block.static_slope_limits(-omega)
            s -= block.supply_sign * 0.5 * (lo + hi)
        return s

    return value, slope


def equilibrium_frequency(model: NetworkModel, blocks, load_steps=None,
                          tol: float = 1e-13) -> float:
    """Common steady-state frequency deviation from the scalar balance stage."""
    loads = _load_vector(model, load_steps)
    value, slope = _net_supply_map(model, blocks, loads)
    try:
        a, b = bracket_decreasing(value)
    except ValueError as exc:
        raise BalanceInfeasible(
            f"aggregate supply cannot meet the load step: {exc}") from exc
    omega, a, b = bisect_decreasing(value, a, b, tol=tol)
    return polish_decreasing(value, slope, omega, a, b, tol=tol)


def _solve_angles(model: NetworkModel, injections: np.ndarray,
                  tol: float = 1e-13, max_iter: int = 60) -> np.ndarray:
    """Bus phases (reference bus pinned to 0) matching the injection deviations."""
    n = len(model.buses)
    pos = {b.id: i for i, b in enumerate(model.buses)}
    src = np.array([pos[l.src] for l in model.lines], dtype=int)
    dst = np.array([pos[l.dst] for l in model.lines], dtype=int)
    b_sus = np.array([l.susceptance for l in model.lines])
    p_nom = np.array([l.nominal_flow for l in model.lines])

    def residual(theta: np.ndarray) -> np.ndarray:
        eta = theta[src] - theta[dst]
        flows = b_sus * np.sin(eta) - p_nom
        net_out = (np.bincount(src, weights=flows, minlength=n)
                   - np.bincount(dst, weights=flows, minlength=n))
        return injections - net_out

    def newton(theta: np.ndarray, target_scale: float) -> np.ndarray | None:
        for _ in range(max_iter):
            eta = theta[src] - theta[dst]
            flows = b_sus * np.sin(eta) - p_nom
            net_out = (np.bincount(src, weights=flows, minlength=n)
                       - np.bincount(dst, weights=flows, minlength=n))
            r = target_scale * injections - net_out
            err = float(np.max(np.abs(r[1:]))) if n > 1 else 0.0
            if err < tol:
                return theta
            weights = b_sus * np.cos(eta)
            lap = np.zeros((n, n))
            for k in range(len(model.lines)):
                s, d, w = src[k], dst[k], weights[k]
                lap[s, s] += w
                lap[d, d] += w
                lap[s, d] -= w
                lap[d, s] -= w
            try:
                step = np.linalg.solve(lap[1:, 1:], r[1:])
            except np.linalg.LinAlgError:
                return None
            lam = 1.0
            for _ in range(40):
                trial = theta.copy()
                trial[1:] += lam * step
                trial_flows = b_sus * np.sin(trial[src] - trial[dst]) - p_nom
                r_new = target_scale * injections - (
                    np.bincount(src, weights=trial_flows, minlength=n)
                    - np.bincount(dst, weights=trial_flows, minlength=n))
                err_new = float(np.max(np.abs(r_new[1:]))) if n > 1 else 0.0
                if err_new <= (1 - 0.25 * lam) * err:
                    theta = trial
                    break
                lam *= 0.5
            else:
                return None
        return None

    theta = newton(np.zeros(n), 1.0)
    if theta is None:
        # homotopy in load level: walk the injections up from zero
        theta = np.zeros(n)
        for frac in np.linspace(0.1, 1.0, 10):
            theta = newton(theta, float(frac))
            if theta is None:
                raise AngleSolveFailed(
                    "phase-angle Newton failed even along the load homotopy")
    final_err = float(np.max(np.abs(residual(theta)[1:]))) if n > 1 else 0.0
    if final_err > 10 * tol:
        raise AngleSolveFailed("phase-angle solve did not reach tolerance")
    return theta


@dataclass(frozen=True)
class EquilibriumSolution:
    """Common frequency deviation, angles, flows, setpoints, and block states."""

    omega_star: float
    theta: np.ndarray
    eta_star: np.ndarray
    flows_star: np.ndarray
    supply: np.ndarray
    pm_star: np.ndarray
    dc_star: np.ndarray
    du_star: np.ndarray
    block_states: tuple[np.ndarray, ...]
    block_outputs: tuple[float, ...]
    residuals: dict[str, float]
    bus_ids: tuple[int, ...]
    line_keys: tuple[tuple[int, int], ...]
    is_tree: bool

    @property
    def max_residual(self) -> float:
        return max(self.residuals.values()) if self.residuals else 0.0


def find_equilibrium(model: NetworkModel, blocks, load_steps=None,
                     residual_tol: float = 1e-10) -> EquilibriumSolution:
    """Solve the full equilibrium conditions and re-verify them independently.

    Raises BalanceInfeasible / AngleSolveFailed on solver failures,
    SecurityViolated when some equilibrium angle difference reaches pi/2, and
    ToleranceNotMet if the re-checked residuals are not tiny.
    """
    validate_topology(model)
    loads = _load_vector(model, load_steps)
    omega_star = equilibrium_frequency(model, blocks, load_steps)

    pos = {b.id: i for i, b in enumerate(model.buses)}
    n = len(model.buses)
    supply = np.zeros(n)
    pm = np.zeros(n)
    dc = np.zeros(n)
    du = np.zeros(n)
    states = []
    outputs = []
    for bus_id, _, block in iter_block_assignments(blocks):
        y = block.static_output(-omega_star)
        states.append(np.asarray(block.equilibrium_state(-omega_star), dtype=float))
        outputs.append(float(y))
        i = pos[bus_id]
        supply[i] += block.supply_sign * y
        if block.role is Role.GENERATION:
            pm[i] += y
        elif block.role is Role.CONTROLLABLE_DEMAND:
            dc[i] += y
        else:
            du[i] += y

    injections = supply - loads
    theta = _solve_angles(model, injections)
    src = np.array([pos[l.src] for l in model.lines], dtype=int)
    dst = np.array([pos[l.dst] for l in model.lines], dtype=int)
    eta = theta[src] - theta[dst]
    flows = np.array([l.susceptance for l in model.lines]) * np.sin(eta) \
        - np.array([l.nominal_flow for l in model.lines])

    for k, line in enumerate(model.lines):
        if abs(eta[k]) >= _SECURITY_MARGIN:
            raise SecurityViolated(
                f"line ({line.src},{line.dst}): equilibrium angle {eta[k]:.6f} rad "
                "reaches the pi/2 security limit")

    # independent re-check of every equilibrium condition
    residuals: dict[str, float] = {}
    flow_list = flows.tolist()
    for i, bus in enumerate(model.buses):
        mismatch = bus_mismatch(model, bus.id, float(supply[i]), flow_list) \
            + (bus.load_step - loads[i])  # honor overrides
        residuals[f"balance_bus_{bus.id}"] = abs(mismatch)
    for k, line in enumerate(model.lines):
        residuals[f"flow_law_{line.src}_{line.dst}"] = abs(
            flows[k] - (line.susceptance * math.sin(eta[k]) - line.nominal_flow))
    for idx, (bus_id, _, block) in enumerate(iter_block_assignments(blocks)):
        residuals[f"static_map_{bus_id}_{idx}"] = abs(
            outputs[idx] - block.output(states[idx], -omega_star))
        drift = block.drift(states[idx], -omega_star)
        residuals[f"state_fixed_point_{bus_id}_{idx}"] = (
            float(np.max(np.abs(drift))) if drift.size else 0.0)

    worst = max(residuals.values()) if residuals else 0.0
    if worst > residual_tol:
        raise ToleranceNotMet(
            f"equilibrium residual {worst} exceeds {residual_tol}")

    return EquilibriumSolution(
        omega_star=float(omega_star),
        theta=theta,
        eta_star=eta,
        flows_star=flows,
        supply=supply,
        pm_star=pm,
        dc_star=dc,
        du_star=du,
        block_states=tuple(states),
        block_outputs=tuple(outputs),
        residuals=residuals,
        bus_ids=model.bus_ids,
        line_keys=tuple(l.key for l in model.lines),
        is_tree=model.is_tree,
    )


def lyapunov_value(model: NetworkModel, blocks, state,
                   equilibrium) -> LyapunovBreakdown:
    """Energy function at a state, broken into kinetic/potential/storage parts.

    Raises NoStorageAvailable if some block lacks a certified storage function.
    """
    evaluator = StorageEvaluator(model, blocks, equilibrium)
    return evaluator.value(state.eta, state.omega_g, state.block_states)


@dataclass(frozen=True)
class MonotoneReport:
    max_increase: float
    first_violation_time: float | None
    total_decay: float
    allowed_uptick: float
    n_samples: int

    @property
    def passed(self) -> bool:
        return self.first_violation_time is None


def check_monotone(trajectory, allowed_uptick: float = 1e-7) -> MonotoneReport:
    """Verify the sampled energy function never increases beyond integrator noise."""
    v = trajectory.lyapunov
    if v is None:
        raise NoStorageAvailable(
            trajectory.lyapunov_note or "trajectory carries no energy samples")
    diffs = np.diff(v)
    max_increase = float(diffs.max()) if diffs.size else 0.0
    first_violation = None
    bad = np.nonzero(diffs > allowed_uptick)[0]
    if bad.size:
        first_violation = float(trajectory.times[bad[0] + 1])
    return MonotoneReport(
        max_increase=max_increase,
        first_violation_time=first_violation,
        total_decay=float(v[0] - v[-1]),
        allowed_uptick=allowed_uptick,
        n_samples=int(v.size),
    )


def steady_state_comparison(model: NetworkModel, blocks,
                            load_steps=None) -> tuple[float, float]:
    """Steady frequency deviation with all controllable demand vs. none.

    The deviation can only shrink when controllable demand participates; the
    drop is strict whenever the load step is nonzero.
    """
    has_controllable = any(
        block.role is Role.CONTROLLABLE_DEMAND
        for _, _, block in iter_block_assignments(blocks))
    if not has_controllable:
        raise ValueError("model has no controllable-demand blocks to compare")
    stripped = {
        bus_id: tuple(b for b in bus_blocks if b.role is not Role.CONTROLLABLE_DEMAND)
        for bus_id, bus_blocks in blocks.items()
    }
    omega_with = equilibrium_frequency(model, blocks, load_steps)
    omega_without = equilibrium_frequency(model, stripped, load_steps)
    return omega_with, omega_without
