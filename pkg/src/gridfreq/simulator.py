"""Fixed-step integration of the network differential-algebraic dynamics.

States are the line angle differences, the generator frequency deviations and
the controller-block states; load-bus frequencies are never stored, they are
re-solved algebraically (one scalar root per load bus) at every integrator
stage.  Classical 4th-order stepping keeps trajectories reproducible for
golden tests.  Measurement delay is a ring buffer of past inputs with linear
interpolation, and a zero-order hold can be applied to controllable-demand
inputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .controllers import ControllerBlock, Role, check_load_solvability
from .energy import StorageEvaluator, iter_block_assignments
from .errors import (
    AlgebraicSolveFailed,
    AssumptionViolated,
    NoStorageAvailable,
    NonFiniteState,
    UnknownBus,
)
from .network import BusKind, NetworkModel, validate_topology

_EMPTY = np.zeros(0)


@dataclass(frozen=True)
class SimConfig:
    """Integration settings.

    ``control_hold`` applies a zero-order hold to controllable-demand inputs
    (0 disables it); ``input_delay`` delays every controllable-demand input by
    the same amount (per-block delays come from ``with_delay``).  Holds and
    delays must be 0 or at least one step long.  ``load_inertia_regularization``
    replaces the algebraic load-bus solve with a tiny fictitious inertia, for
    debugging failed solves only.
    """

    dt: float = 0.001
    t_end: float = 60.0
    control_hold: float = 0.01
    input_delay: float = 0.0
    algebraic_tol: float = 1e-9
    algebraic_max_iter: int = 60
    nonfinite_guard: float = 1e6
    load_inertia_regularization: float = 0.0

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.t_end < self.dt:
            raise ValueError(f"t_end must be at least dt, got {self.t_end} < {self.dt}")
        if not self.algebraic_tol > 0:
            raise ValueError("algebraic_tol must be positive")
        if self.algebraic_max_iter < 1:
            raise ValueError("algebraic_max_iter must be at least 1")
        if not self.nonfinite_guard > 0:
            raise ValueError("nonfinite_guard must be positive")
        if self.control_hold != 0 and self.control_hold < self.dt:
            raise ValueError("control_hold must be 0 or at least dt")
        if self.input_delay != 0 and self.input_delay < self.dt:
            raise ValueError("input_delay must be 0 or at least dt")
        if self.load_inertia_regularization < 0:
            raise ValueError("load_inertia_regularization must be nonnegative")


@dataclass
class SimState:
    """Differential states only; load-bus frequencies are recomputed on demand."""

    eta: np.ndarray
    omega_g: np.ndarray
    block_states: list[np.ndarray]
    t: float = 0.0

    def copy(self) -> "SimState":
        return SimState(
            eta=self.eta.copy(),
            omega_g=self.omega_g.copy(),
            block_states=[x.copy() for x in self.block_states],
            t=self.t,
        )


@dataclass
class Trajectory:
    """Sampled run: one row per committed step, all quantities finite."""

    times: np.ndarray
    omega: np.ndarray
    eta: np.ndarray
    flows: np.ndarray
    generation: np.ndarray
    controllable_demand: np.ndarray
    uncontrollable_demand: np.ndarray
    bus_ids: tuple[int, ...]
    line_keys: tuple[tuple[int, int], ...]
    generator_ids: tuple[int, ...]
    final_state: SimState
    lyapunov: np.ndarray | None = None
    lyapunov_note: str | None = None


class DelayedBlock(ControllerBlock):
    """Wraps a block so its input at time t is the recorded input at t - delay.

    Inside ``simulate`` the wrapper only tags the delay; the engine owns the
    ring buffer.  ``step`` supports standalone stepping with an internal
    buffer (zero before the first recorded sample).
    """

    def __init__(self, inner: ControllerBlock, delay: float):
        if delay < 0:
            raise ValueError(f"delay must be nonnegative, got {delay}")
        self.inner = inner
        self.delay = float(delay)
        self.role = inner.role
        self._times: list[float] = []
        self._inputs: list[float] = []
        self._clock = 0.0

    @property
    def state(self) -> np.ndarray:
        return self.inner.state

    @state.setter
    def state(self, value):
        self.inner.state = value

    def clone(self) -> "DelayedBlock":
        new = DelayedBlock(self.inner.clone(), self.delay)
        new._times = list(self._times)
        new._inputs = list(self._inputs)
        new._clock = self._clock
        return new

    # delegation: the wrapped physics is unchanged, only the input is shifted
    def drift(self, x, u):
        return self.inner.drift(x, u)

    def output(self, x, u):
        return self.inner.output(x, u)

    def equilibrium_state(self, u_bar):
        return self.inner.equilibrium_state(u_bar)

    def static_output(self, u_bar):
        return self.inner.static_output(u_bar)

    def feedthrough_slope_limits(self, u):
        return self.inner.feedthrough_slope_limits(u)

    def static_slope_limits(self, u_bar):
        return self.inner.static_slope_limits(u_bar)

    def drift_state_jacobian(self, x, u):
        return self.inner.drift_state_jacobian(x, u)

    def drift_input_jacobian(self, x, u):
        return self.inner.drift_input_jacobian(x, u)

    def output_state_jacobian(self, x, u):
        return self.inner.output_state_jacobian(x, u)

    def state_coupling_frequency_slope(self, u_bar):
        return self.inner.state_coupling_frequency_slope(u_bar)

    def delayed_input(self, t: float) -> float:
        """Recorded input at t - delay, linearly interpolated, 0 before history starts."""
        tq = t - self.delay
        if not self._times or tq < self._times[0]:
            return 0.0
        if tq >= self._times[-1]:
            return self._inputs[-1]
        import bisect
        k = bisect.bisect_right(self._times, tq) - 1
        t0, t1 = self._times[k], self._times[k + 1]
        u0, u1 = self._inputs[k], self._inputs[k + 1]
        frac = (tq - t0) / (t1 - t0)
        return (1 - frac) * u0 + frac * u1

    def step(self, u: float, dt: float) -> float:
        """Standalone stepping: record u now, advance the inner block on the delayed input."""
        from .controllers import step_block

        self._times.append(self._clock)
        self._inputs.append(float(u))
        u_eff = self.delayed_input(self._clock)
        self.inner, y = step_block(self.inner, u_eff, dt)
        self._clock += dt
        return y


def with_delay(block: ControllerBlock, delay: float) -> ControllerBlock:
    """Wrap a block with a pure input delay; delay 0 returns the block unchanged."""
    if delay == 0:
        return block
    return DelayedBlock(block, delay)


class _InputPipe:
    """Committed-sample history serving delayed and/or held input values."""

    def __init__(self, delay: float, hold: float, dt: float):
        self.delay = delay
        self.hold = hold
        self.dt = dt
        self.samples: list[float] = []
        self.t0: float | None = None
        self.latched = 0.0
        self.next_hold: float | None = None

    def on_commit(self, t: float, u_raw: float) -> None:
        if self.t0 is None:
            self.t0 = t
            self.next_hold = t
        self.samples.append(u_raw)
        if self.hold > 0 and t >= self.next_hold - 0.25 * self.dt:
            self.latched = self._delayed(t)
            while self.next_hold <= t + 0.25 * self.dt:
                self.next_hold += self.hold

    def _delayed(self, t: float) -> float:
        tq = t - self.delay
        if self.t0 is None or tq < self.t0 - 1e-12:
            return 0.0
        pos = (tq - self.t0) / self.dt
        k = int(math.floor(pos))
        if k < 0:
            return 0.0
        if k >= len(self.samples) - 1:
            return self.samples[-1]
        frac = pos - k
        return (1 - frac) * self.samples[k] + frac * self.samples[k + 1]

    def value(self, t: float) -> float:
        if self.hold > 0:
            return self.latched
        return self._delayed(t)


@dataclass
class _BlockEntry:
    bus_pos: int
    block: ControllerBlock      # unwrapped physics
    sign: int                   # +1 supply, -1 demand
    role: Role
    slot: int                   # index into the block-state list
    pipe: _InputPipe | None


class _Engine:
    """Compiled model: array views of the network plus an ordered block table."""

    def __init__(self, model: NetworkModel, blocks, config: SimConfig):
        validate_topology(model)
        self.model = model
        self.config = config
        self.bus_pos = {b.id: i for i, b in enumerate(model.buses)}
        self.n_bus = len(model.buses)
        self.load_step = np.array([b.load_step for b in model.buses])
        self.src = np.array([self.bus_pos[l.src] for l in model.lines], dtype=int)
        self.dst = np.array([self.bus_pos[l.dst] for l in model.lines], dtype=int)
        self.b_sus = np.array([l.susceptance for l in model.lines])
        self.p_nom = np.array([l.nominal_flow for l in model.lines])

        self.gen_pos = np.array(
            [i for i, b in enumerate(model.buses) if b.kind is BusKind.GENERATOR],
            dtype=int)
        self.load_pos = [i for i, b in enumerate(model.buses) if b.kind is BusKind.LOAD]
        self.regularized = config.load_inertia_regularization > 0
        if self.regularized:
            self.dyn_pos = np.arange(self.n_bus)
            eps = config.load_inertia_regularization
            self.inertia = np.array([
                b.inertia if b.kind is BusKind.GENERATOR else eps for b in model.buses])
        else:
            self.dyn_pos = self.gen_pos
            self.inertia = np.array([model.buses[i].inertia for i in self.gen_pos])

        for bus_id in blocks:
            if bus_id not in self.bus_pos:
                raise UnknownBus(f"blocks assigned to unknown bus {bus_id}")

        self.entries: list[_BlockEntry] = []
        for slot, (bus_id, _, block) in enumerate(iter_block_assignments(blocks)):
            bus = model.bus(bus_id)
            inner = getattr(block, "inner", block)
            per_block_delay = float(getattr(block, "delay", 0.0))
            if block.role is Role.GENERATION and bus.kind is not BusKind.GENERATOR:
                raise AssumptionViolated(
                    f"generation block assigned to load bus {bus_id}")
            delay = per_block_delay
            hold = 0.0
            if block.role is Role.CONTROLLABLE_DEMAND:
                delay = delay or config.input_delay
                hold = config.control_hold
            if delay != 0 and delay < config.dt:
                raise ValueError(
                    f"bus {bus_id}: delay {delay} shorter than one step {config.dt}")
            pipe = _InputPipe(delay, hold, config.dt) if (delay or hold) else None
            self.entries.append(_BlockEntry(
                bus_pos=self.bus_pos[bus_id], block=inner,
                sign=block.supply_sign, role=block.role, slot=slot, pipe=pipe))

        # per-load-bus tables for the scalar algebraic solves
        self.load_entries: dict[int, list[_BlockEntry]] = {p: [] for p in self.load_pos}
        for e in self.entries:
            if e.bus_pos in self.load_entries:
                self.load_entries[e.bus_pos].append(e)

        if not self.regularized:
            self._check_load_buses(blocks)

    def _check_load_buses(self, blocks) -> None:
        for pos, entries in self.load_entries.items():
            bus_id = self.model.buses[pos].id
            bus_blocks = [e.block for e in entries]
            if not check_load_solvability(bus_blocks):
                raise AssumptionViolated(
                    f"load bus {bus_id}: demand is locally insensitive to frequency; "
                    "its balance equation has no well-defined solution")
            direct = 0.0
            for e in entries:
                if e.pipe is None:
                    lo, hi = e.block.frequency_slope_limits(0.0)
                    direct += min(lo, hi)
            if direct <= 0.0:
                raise AssumptionViolated(
                    f"load bus {bus_id}: no direct frequency feedthrough remains after "
                    "delays/holds; the per-stage scalar solve needs a responsive term "
                    "(e.g. frequency-dependent damping at the bus)")

    # --- algebraic stage -------------------------------------------------------

    def _solve_load_bus(self, entries: list[_BlockEntry], fixed: float,
                        guess: float, xs, t_s: float) -> float:
        tol = self.config.algebraic_tol
        direct: list[tuple[ControllerBlock, np.ndarray]] = []
        for e in entries:
            x = xs[e.slot]
            if e.pipe is not None:
                fixed -= e.block.output(x, e.pipe.value(t_s))
            else:
                direct.append((e.block, x))

        def residual(w: float) -> float:
            v = fixed
            for block, x in direct:
                v -= block.output(x, -w)
            return v

        def slope(w: float) -> float:
            s = 0.0
            for block, _ in direct:
                lo, hi = block.frequency_slope_limits(-w)
                s += 0.5 * (lo + hi)
            return -s

        w = guess
        for _ in range(self.config.algebraic_max_iter):
            f = residual(w)
            if abs(f) < tol:
                return w
            fp = slope(w)
            if fp >= -1e-15 or not math.isfinite(fp):
                break
            w_new = w - f / fp
            if not math.isfinite(w_new) or abs(w_new) > 1e12:
                break
            w = w_new

        # bisection fallback on a geometrically grown bracket
        radius = max(1e-6, 0.5 * abs(w))
        lo_w, hi_w = w - radius, w + radius
        for _ in range(80):
            if residual(lo_w) >= 0 >= residual(hi_w):
                break
            radius *= 4.0
            lo_w, hi_w = w - radius, w + radius
        else:
            raise AlgebraicSolveFailed(
                "no sign change found for a load-bus balance; the state left the "
                "region where the load frequency is resolvable")
        for _ in range(200):
            mid = 0.5 * (lo_w + hi_w)
            f = residual(mid)
            if abs(f) < tol:
                return mid
            if f > 0:
                lo_w = mid
            else:
                hi_w = mid
        raise AlgebraicSolveFailed(
            f"load-bus solve did not reach tolerance {tol}; residual {f}")

    def _net_inflow(self, eta: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        flows = self.b_sus * np.sin(eta) - self.p_nom
        net = (np.bincount(self.dst, weights=flows, minlength=self.n_bus)
               - np.bincount(self.src, weights=flows, minlength=self.n_bus))
        return flows, net

    def resolve_omega(self, t_s: float, eta: np.ndarray, omega_dyn: np.ndarray,
                      xs, guess: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Full bus frequency vector at a stage, plus flows and net inflows."""
        flows, net = self._net_inflow(eta)
        omega = np.zeros(self.n_bus)
        omega[self.dyn_pos] = omega_dyn
        if not self.regularized:
            for pos in self.load_pos:
                fixed = -self.load_step[pos] + net[pos]
                omega[pos] = self._solve_load_bus(
                    self.load_entries[pos], fixed, guess[pos], xs, t_s)
        return omega, flows, net

    def block_outputs(self, t_s: float, omega: np.ndarray, xs) -> list[float]:
        outs = []
        for e in self.entries:
            u = e.pipe.value(t_s) if e.pipe is not None else -omega[e.bus_pos]
            outs.append(e.block.output(xs[e.slot], u))
        return outs

    def stage(self, t_s: float, eta: np.ndarray, omega_dyn: np.ndarray, xs,
              guess: np.ndarray):
        """Derivatives of (eta, omega_dyn, block states) plus the resolved omega."""
        omega, flows, net = self.resolve_omega(t_s, eta, omega_dyn, xs, guess)
        supply = np.zeros(self.n_bus)
        dxs = []
        for e in self.entries:
            u = e.pipe.value(t_s) if e.pipe is not None else -omega[e.bus_pos]
            supply[e.bus_pos] += e.sign * e.block.output(xs[e.slot], u)
            dxs.append(e.block.drift(xs[e.slot], u))
        mismatch = -self.load_step[self.dyn_pos] + supply[self.dyn_pos] + net[self.dyn_pos]
        domega = mismatch / self.inertia
        deta = omega[self.src] - omega[self.dst]
        return deta, domega, dxs, omega


def _zeros_state(model: NetworkModel, blocks, regularized: bool = False) -> SimState:
    n_dyn = len(model.buses) if regularized else len(model.generator_ids)
    states = [b.equilibrium_state(0.0) for _, _, b in iter_block_assignments(blocks)]
    return SimState(
        eta=np.zeros(len(model.lines)),
        omega_g=np.zeros(n_dyn),
        block_states=[np.asarray(x, dtype=float).copy() for x in states],
        t=0.0,
    )


def initial_state(model: NetworkModel, blocks) -> SimState:
    """Pre-step nominal state: zero deviations, blocks at their zero-input equilibria."""
    return _zeros_state(model, blocks)


def state_from_equilibrium(model: NetworkModel, blocks, equilibrium) -> SimState:
    """SimState positioned exactly at an equilibrium solution."""
    n_gen = len(model.generator_ids)
    return SimState(
        eta=np.asarray(equilibrium.eta_star, dtype=float).copy(),
        omega_g=np.full(n_gen, float(equilibrium.omega_star)),
        block_states=[np.asarray(x, dtype=float).copy()
                      for x in equilibrium.block_states],
        t=0.0,
    )


def solve_load_frequencies(model: NetworkModel, state: SimState, blocks,
                           tol: float = 1e-9, max_iter: int = 60) -> dict[int, float]:
    """Load-bus frequencies solving each scalar balance at the given state.

    Flows are functions of the angles only, so they are fixed within the
    solve; the demand at each load bus is strictly increasing in its local
    frequency under the solvability check, making each root unique.
    """
    config = SimConfig(dt=1e-3, t_end=1e-3, control_hold=0.0, input_delay=0.0,
                       algebraic_tol=tol, algebraic_max_iter=max_iter)
    engine = _Engine(model, blocks, config)
    guess = np.zeros(engine.n_bus)
    omega, _, _ = engine.resolve_omega(state.t, state.eta, state.omega_g,
                                       state.block_states, guess)
    return {model.buses[pos].id: float(omega[pos]) for pos in engine.load_pos}


def rhs(model: NetworkModel, state: SimState, blocks,
        tol: float = 1e-9) -> SimState:
    """Time derivative of the differential states at ``state``."""
    config = SimConfig(dt=1e-3, t_end=1e-3, control_hold=0.0, input_delay=0.0,
                       algebraic_tol=tol)
    engine = _Engine(model, blocks, config)
    guess = np.zeros(engine.n_bus)
    deta, domega, dxs, _ = engine.stage(state.t, state.eta, state.omega_g,
                                        state.block_states, guess)
    return SimState(eta=deta, omega_g=domega,
                    block_states=[np.asarray(d, dtype=float) for d in dxs],
                    t=state.t)


def simulate(model: NetworkModel, blocks, config: SimConfig,
             initial: SimState | None = None, equilibrium=None) -> Trajectory:
    """Integrate the closed loop and sample every step.

    When an equilibrium is attached, the energy function is evaluated at every
    sample; if some block has no certified storage, monitoring is disabled for
    the run and the reason recorded on the trajectory.
    """
    engine = _Engine(model, blocks, config)
    if initial is None:
        state = _zeros_state(model, blocks, engine.regularized)
    else:
        state = initial.copy()
    if state.omega_g.size != engine.dyn_pos.size:
        raise ValueError(
            f"initial state has {state.omega_g.size} dynamic frequencies, "
            f"expected {engine.dyn_pos.size}")
    if state.eta.size != len(model.lines):
        raise ValueError("initial state angle count does not match the line count")
    if len(state.block_states) != len(engine.entries):
        raise ValueError("initial state block-state count does not match the block table")

    evaluator = None
    lyapunov_note = None
    if equilibrium is not None:
        try:
            evaluator = StorageEvaluator(model, blocks, equilibrium)
        except NoStorageAvailable as exc:
            lyapunov_note = f"monitoring disabled: {exc}"

    dt = config.dt
    n_steps = max(1, int(round(config.t_end / dt)))
    guard = config.nonfinite_guard

    eta = state.eta.copy()
    omega_dyn = state.omega_g.copy()
    xs = [x.copy() for x in state.block_states]
    t0 = state.t
    guess = np.zeros(engine.n_bus)

    n_samples = n_steps + 1
    times = np.empty(n_samples)
    omega_out = np.empty((n_samples, engine.n_bus))
    eta_out = np.empty((n_samples, len(model.lines)))
    flow_out = np.empty((n_samples, len(model.lines)))
    gen_out = np.zeros((n_samples, engine.n_bus))
    dc_out = np.zeros((n_samples, engine.n_bus))
    du_out = np.zeros((n_samples, engine.n_bus))
    v_out = np.empty(n_samples) if evaluator is not None else None

    gen_slots = None
    if engine.regularized:
        gen_index = {int(p): k for k, p in enumerate(engine.dyn_pos)}
        gen_slots = [gen_index[int(p)] for p in engine.gen_pos]

    for k in range(n_samples):
        t = t0 + k * dt
        omega, flows, _ = engine.resolve_omega(t, eta, omega_dyn, xs, guess)
        guess = omega

        # record the raw inputs before any stage of this step consumes them
        for e in engine.entries:
            if e.pipe is not None:
                e.pipe.on_commit(t, -omega[e.bus_pos])

        outs = engine.block_outputs(t, omega, xs)
        for e, y in zip(engine.entries, outs):
            if e.role is Role.GENERATION:
                gen_out[k, e.bus_pos] += y
            elif e.role is Role.CONTROLLABLE_DEMAND:
                dc_out[k, e.bus_pos] += y
            else:
                du_out[k, e.bus_pos] += y

        times[k] = t
        omega_out[k] = omega
        eta_out[k] = eta
        flow_out[k] = flows
        if evaluator is not None:
            og = omega_dyn[gen_slots] if gen_slots is not None else omega_dyn
            v_out[k] = evaluator.value(eta, og, xs).total

        finite = (np.all(np.isfinite(omega)) and np.all(np.isfinite(eta))
                  and np.max(np.abs(omega)) <= guard
                  and (eta.size == 0 or np.max(np.abs(eta)) <= guard)
                  and all(np.all(np.isfinite(x)) and
                          (x.size == 0 or np.max(np.abs(x)) <= guard) for x in xs))
        if not finite:
            raise NonFiniteState(
                f"state left the finite domain at t={t:.6g}", time=t)

        if k == n_steps:
            break

        # classical 4th-order step with the algebraic solve at every stage
        d1 = engine.stage(t, eta, omega_dyn, xs, guess)
        e2 = eta + 0.5 * dt * d1[0]
        w2 = omega_dyn + 0.5 * dt * d1[1]
        x2 = [x + 0.5 * dt * dx for x, dx in zip(xs, d1[2])]
        d2 = engine.stage(t + 0.5 * dt, e2, w2, x2, d1[3])
        e3 = eta + 0.5 * dt * d2[0]
        w3 = omega_dyn + 0.5 * dt * d2[1]
        x3 = [x + 0.5 * dt * dx for x, dx in zip(xs, d2[2])]
        d3 = engine.stage(t + 0.5 * dt, e3, w3, x3, d2[3])
        e4 = eta + dt * d3[0]
        w4 = omega_dyn + dt * d3[1]
        x4 = [x + dt * dx for x, dx in zip(xs, d3[2])]
        d4 = engine.stage(t + dt, e4, w4, x4, d3[3])

        eta = eta + (dt / 6.0) * (d1[0] + 2 * d2[0] + 2 * d3[0] + d4[0])
        omega_dyn = omega_dyn + (dt / 6.0) * (d1[1] + 2 * d2[1] + 2 * d3[1] + d4[1])
        xs = [x + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
              for x, k1, k2, k3, k4 in zip(xs, d1[2], d2[2], d3[2], d4[2])]
        guess = d4[3]

    final = SimState(eta=eta, omega_g=omega_dyn, block_states=xs, t=times[-1])
    return Trajectory(
        times=times,
        omega=omega_out,
        eta=eta_out,
        flows=flow_out,
        generation=gen_out,
        controllable_demand=dc_out,
        uncontrollable_demand=du_out,
        bus_ids=model.bus_ids,
        line_keys=tuple(l.key for l in model.lines),
        generator_ids=model.generator_ids,
        final_state=final,
        lyapunov=v_out,
        lyapunov_note=lyapunov_note,
    )


def trajectory_csv(traj: Trajectory) -> str:
    """Render a trajectory as CSV with 12 significant digits (deterministic)."""
    cols = ["t"]
    cols += [f"omega_{b}" for b in traj.bus_ids]
    cols += [f"eta_{s}_{d}" for s, d in traj.line_keys]
    cols += [f"pM_{b}" for b in traj.generator_ids]
    cols += [f"dc_{b}" for b in traj.bus_ids]
    cols += [f"du_{b}" for b in traj.bus_ids]
    cols += ["V"]
    lines = [",".join(cols)]
    bus_index = {b: i for i, b in enumerate(traj.bus_ids)}
    gen_cols = [bus_index[b] for b in traj.generator_ids]
    n = traj.times.size
    for k in range(n):
        row = [f"{traj.times[k]:.12g}"]
        row += [f"{v:.12g}" for v in traj.omega[k]]
        row += [f"{v:.12g}" for v in traj.eta[k]]
        row += [f"{traj.generation[k, i]:.12g}" for i in gen_cols]
        row += [f"{v:.12g}" for v in traj.controllable_demand[k]]
        row += [f"{v:.12g}" for v in traj.uncontrollable_demand[k]]
        row.append(f"{traj.lyapunov[k]:.12g}" if traj.lyapunov is not None else "nan")
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"


def write_trajectory_csv(traj: Trajectory, path) -> None:
    text = trajectory_csv(traj)
    with open(path, "w") as fh:
        fh.write(text)
