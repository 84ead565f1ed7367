"""Controller blocks: causal SISO systems from negative frequency deviation to power.

Every block consumes the local input u = -omega (per-unit frequency deviation,
negated) and produces a power deviation.  Generation blocks add to the bus
supply, demand blocks subtract.  Each constructor documents its equilibrium
state map in closed form, so static characteristics never need numerical
settling (a settling fallback is provided anyway).

Blocks are value types: a simulation owns its copies and ``clone()`` snapshots
the state.
"""

from __future__ import annotations

import copy
import enum
import math
from collections.abc import Iterable

import numpy as np

from .costs import (
    ClippedInverseMarginal,
    ConvexCost,
    QuadraticCost,
    deadband_cost,
    one_sided_slope_limits,
)
from .errors import (
    InvalidCost,
    InvalidDamping,
    InvalidDeadband,
    InvalidTimeConstant,
    LinearizationUnavailable,
    NoConvergence,
    NonFiniteState,
)

_INF = math.inf


class Role(enum.Enum):
    GENERATION = "generation"
    CONTROLLABLE_DEMAND = "controllable_demand"
    UNCONTROLLABLE_DEMAND = "uncontrollable_demand"


def _clip(x: float, lo: float, hi: float) -> float:
    return lo if x < lo else hi if x > hi else x


class ControllerBlock:
    """Base class; concrete constructors are the only way to build blocks."""

    role: Role
    state: np.ndarray

    @property
    def state_dim(self) -> int:
        return self.state.size

    @property
    def supply_sign(self) -> int:
        """+1 if the output adds to bus supply, -1 if it is a demand."""
        return +1 if self.role is Role.GENERATION else -1

    def clone(self) -> "ControllerBlock":
        new = copy.copy(self)
        new.state = self.state.copy()
        return new

    # -- dynamics ------------------------------------------------------------
    def drift(self, x: np.ndarray, u: float) -> np.ndarray:
        raise NotImplementedError

    def output(self, x: np.ndarray, u: float) -> float:
        raise NotImplementedError

    def equilibrium_state(self, u_bar: float) -> np.ndarray:
        """Closed-form unique equilibrium state under constant input u_bar."""
        raise NotImplementedError

    def static_output(self, u_bar: float) -> float:
        return self.output(self.equilibrium_state(u_bar), u_bar)

    def static_slope_limits(self, u_bar: float) -> tuple[float, float]:
        """One-sided slopes of the static input-output characteristic at u_bar."""
        raise NotImplementedError

    # -- analytic derivatives --------------------------------------------------
    def feedthrough_slope_limits(self, u: float) -> tuple[float, float]:
        """One-sided limits of d(output)/du holding the state fixed."""
        raise NotImplementedError

    def frequency_slope_limits(self, u: float) -> tuple[float, float]:
        """One-sided limits of d(output)/d(omega) holding the state fixed (omega = -u)."""
        lo, hi = self.feedthrough_slope_limits(u)
        return (-hi, -lo)

    def drift_state_jacobian(self, x: np.ndarray, u: float) -> np.ndarray:
        raise NotImplementedError

    def drift_input_jacobian(self, x: np.ndarray, u: float) -> np.ndarray:
        raise NotImplementedError

    def output_state_jacobian(self, x: np.ndarray, u: float) -> np.ndarray:
        raise NotImplementedError

    def state_coupling_frequency_slope(self, u_bar: float) -> float:
        """Sum of d(output)/dx_i * d(drift_i)/d(omega) at the equilibrium for u_bar."""
        if self.state_dim == 0:
            return 0.0
        x = self.equilibrium_state(u_bar)
        dg_dx = self.output_state_jacobian(x, u_bar)
        df_domega = -self.drift_input_jacobian(x, u_bar)
        return float(np.dot(dg_dx, df_domega))


class MemorylessBlock(ControllerBlock):
    """Static nonlinearity; the output depends on the instantaneous input only."""

    def __init__(self, role: Role):
        self.role = role
        self.state = np.zeros(0)

    def characteristic(self, u: float) -> float:
        raise NotImplementedError

    def characteristic_slope_limits(self, u: float) -> tuple[float, float]:
        raise NotImplementedError

    def drift(self, x, u):
        return np.zeros(0)

    def output(self, x, u):
        return self.characteristic(u)

    def equilibrium_state(self, u_bar):
        return np.zeros(0)

    def static_output(self, u_bar):
        return self.characteristic(u_bar)

    def feedthrough_slope_limits(self, u):
        return self.characteristic_slope_limits(u)

    def static_slope_limits(self, u_bar):
        return self.characteristic_slope_limits(u_bar)

    def drift_state_jacobian(self, x, u):
        return np.zeros((0, 0))

    def drift_input_jacobian(self, x, u):
        return np.zeros(0)

    def output_state_jacobian(self, x, u):
        return np.zeros(0)


class MarginalStatic(MemorylessBlock):
    """Memoryless marginal-cost tracking law, clipped to the cost bounds.

    Generation outputs clip(inverse_marginal(u)); controllable demand outputs
    clip(inverse_marginal(-u)), i.e. demand follows the frequency deviation.
    """

    def __init__(self, cost: ConvexCost, role: Role = Role.CONTROLLABLE_DEMAND):
        if role is Role.UNCONTROLLABLE_DEMAND:
            raise InvalidCost("marginal-cost laws model controllable quantities")
        super().__init__(role)
        self.cost = cost
        self._inv = ClippedInverseMarginal(cost)
        self._sigma = +1 if role is Role.GENERATION else -1

    def characteristic(self, u: float) -> float:
        return self._inv.value(self._sigma * u)

    def characteristic_slope_limits(self, u: float) -> tuple[float, float]:
        lo, hi = self._inv.slope_limits(self._sigma * u)
        if self._sigma == +1:
            return (lo, hi)
        return (-hi, -lo)

    @property
    def sector_bound(self) -> float:
        return 1.0 / self.cost.curvature

    @property
    def implied_cost(self) -> ConvexCost:
        return self.cost


class MarginalGradient(ControllerBlock):
    """One-state gradient law driving the marginal cost to the frequency signal.

    The state integrates -(C'(x) - target) with target = u for generation and
    target = -u (= omega) for demand; the output clips the state to the cost
    bounds, so the equilibrium map coincides with the clipped static law while
    the state keeps a unique equilibrium under any constant input.
    """

    def __init__(self, cost: ConvexCost, role: Role = Role.CONTROLLABLE_DEMAND):
        if role is Role.UNCONTROLLABLE_DEMAND:
            raise InvalidCost("marginal-cost laws model controllable quantities")
        if not cost.smooth:
            raise InvalidCost("the gradient law needs a continuously differentiable cost")
        self.role = role
        self.cost = cost
        self._inv = ClippedInverseMarginal(cost)
        self._sigma = +1 if role is Role.GENERATION else -1
        self.state = np.zeros(1)

    def drift(self, x, u):
        return np.array([-(self.cost.derivative(x[0]) - self._sigma * u)])

    def output(self, x, u):
        return _clip(float(x[0]), *self.cost.bounds)

    def equilibrium_state(self, u_bar):
        return np.array([self.cost.inverse_derivative(self._sigma * u_bar)])

    def feedthrough_slope_limits(self, u):
        return (0.0, 0.0)

    def static_slope_limits(self, u_bar):
        lo, hi = self._inv.slope_limits(self._sigma * u_bar)
        if self._sigma == +1:
            return (lo, hi)
        return (-hi, -lo)

    def drift_state_jacobian(self, x, u):
        return np.array([[-self.cost.curvature]])

    def drift_input_jacobian(self, x, u):
        return np.array([float(self._sigma)])

    def output_state_jacobian(self, x, u):
        lo, hi = self.cost.bounds
        return np.array([1.0 if lo < x[0] < hi else 0.0])

    @property
    def sector_bound(self) -> float:
        return 1.0 / self.cost.curvature

    @property
    def implied_cost(self) -> ConvexCost:
        return self.cost


class DeadbandStatic(MemorylessBlock):
    """Odd deadband-with-saturation characteristic.

    Zero inside |z| <= lower, affine with the given slope up to upper, then
    saturated at slope*(upper - lower).  Generation blocks evaluate it on u,
    demand blocks on omega = -u; the characteristic is odd so both are
    monotone contributions to net bus supply.
    """

    def __init__(self, lower: float, upper: float, slope: float,
                 role: Role = Role.GENERATION):
        if not (0 < lower < upper):
            raise InvalidDeadband(f"need 0 < lower < upper, got ({lower}, {upper})")
        if not slope > 0:
            raise InvalidDeadband(f"slope must be positive, got {slope}")
        if role is Role.UNCONTROLLABLE_DEMAND:
            raise InvalidDeadband("deadband laws model controllable responses")
        super().__init__(role)
        self.lower = lower
        self.upper = upper
        self.slope = slope
        self.saturation = slope * (upper - lower)
        self._sigma = +1 if role is Role.GENERATION else -1

    def _odd(self, z: float) -> float:
        a = abs(z)
        if a <= self.lower:
            return 0.0
        return math.copysign(min(self.slope * (a - self.lower), self.saturation), z)

    def _odd_slope(self, z: float) -> float:
        a = abs(z)
        return self.slope if self.lower < a < self.upper else 0.0

    def characteristic(self, u: float) -> float:
        return self._odd(self._sigma * u)

    def characteristic_slope_limits(self, u: float) -> tuple[float, float]:
        z = self._sigma * u
        breaks = (-self.upper, -self.lower, self.lower, self.upper)
        lo, hi = one_sided_slope_limits(breaks, self._odd_slope, z)
        if self._sigma == +1:
            return (lo, hi)
        return (-hi, -lo)  # sides swap under u -> -u and the sign flips

    @property
    def sector_bound(self) -> float:
        return self.slope

    @property
    def implied_cost(self) -> ConvexCost:
        return deadband_cost(self.lower, self.slope, self.saturation)


class DampingLoad(MemorylessBlock):
    """Uncontrollable frequency-dependent demand, linear in omega."""

    def __init__(self, coefficient: float):
        if not coefficient > 0:
            raise InvalidDamping(f"damping coefficient must be positive, got {coefficient}")
        super().__init__(Role.UNCONTROLLABLE_DEMAND)
        self.coefficient = coefficient

    def characteristic(self, u: float) -> float:
        return -self.coefficient * u  # demand = coefficient * omega

    def characteristic_slope_limits(self, u: float) -> tuple[float, float]:
        return (-self.coefficient, -self.coefficient)

    def frequency_response(self, omega: float) -> float:
        """Demand at a steady frequency deviation (the induced monotone map)."""
        return self.coefficient * omega

    @property
    def implied_damping(self) -> float:
        return self.coefficient


class TurbineGovernor(ControllerBlock):
    """Two-state governor/turbine cascade driven by a static droop command.

    States are the valve position and the mechanical power; both lags are
    first order with unit DC gain, so the equilibrium output equals the droop
    command exactly.
    """

    def __init__(self, tau_g: float, tau_b: float, droop: MemorylessBlock):
        if not (tau_g > 0 and tau_b > 0):
            raise InvalidTimeConstant(f"time constants must be positive, got ({tau_g}, {tau_b})")
        if droop.state_dim != 0:
            raise InvalidTimeConstant("the droop command must be a memoryless block")
        if droop.characteristic(0.0) != 0.0:
            raise InvalidTimeConstant("the droop command must vanish at zero input")
        self.role = Role.GENERATION
        self.tau_g = tau_g
        self.tau_b = tau_b
        self.droop = droop
        self.state = np.zeros(2)  # (valve, power)

    def drift(self, x, u):
        command = self.droop.characteristic(u)
        return np.array([
            (command - x[0]) / self.tau_g,
            (x[0] - x[1]) / self.tau_b,
        ])

    def output(self, x, u):
        return float(x[1])

    def equilibrium_state(self, u_bar):
        command = self.droop.characteristic(u_bar)
        return np.array([command, command])

    def feedthrough_slope_limits(self, u):
        return (0.0, 0.0)

    def static_slope_limits(self, u_bar):
        return self.droop.characteristic_slope_limits(u_bar)

    def drift_state_jacobian(self, x, u):
        return np.array([
            [-1.0 / self.tau_g, 0.0],
            [1.0 / self.tau_b, -1.0 / self.tau_b],
        ])

    def drift_input_jacobian(self, x, u):
        lo, hi = self.droop.characteristic_slope_limits(u)
        if lo != hi:
            raise LinearizationUnavailable(
                f"droop command has a corner at input {u}; one-sided slopes {lo} != {hi}")
        return np.array([lo / self.tau_g, 0.0])

    def output_state_jacobian(self, x, u):
        return np.array([0.0, 1.0])

    @property
    def sector_bound(self) -> float:
        return self.droop.sector_bound

    @property
    def implied_cost(self) -> ConvexCost | None:
        return getattr(self.droop, "implied_cost", None)


# --- constructors -------------------------------------------------------------

def static_marginal(cost: ConvexCost, role: Role = Role.CONTROLLABLE_DEMAND) -> MarginalStatic:
    """Memoryless marginal-cost law (demand follows omega, generation follows -omega)."""
    return MarginalStatic(cost, role)


def dynamic_marginal(cost: ConvexCost, role: Role = Role.CONTROLLABLE_DEMAND) -> MarginalGradient:
    """One-state gradient law with the same equilibrium map as ``static_marginal``."""
    return MarginalGradient(cost, role)


def linear_droop(gain: float, limit: float | None = None) -> MarginalStatic:
    """Proportional generation response with optional symmetric saturation."""
    if not gain > 0:
        raise InvalidCost(f"droop gain must be positive, got {gain}")
    bounds = (-limit, limit) if limit is not None else (-_INF, _INF)
    return MarginalStatic(QuadraticCost(1.0 / gain, bounds=bounds), Role.GENERATION)


def deadband_droop(lower: float, upper: float, slope: float,
                   role: Role = Role.GENERATION) -> DeadbandStatic:
    """Deadband-with-saturation response (droop command or controllable load)."""
    return DeadbandStatic(lower, upper, slope, role)


def damping_load(coefficient: float) -> DampingLoad:
    """Uncontrollable frequency-dependent load d = coefficient * omega."""
    return DampingLoad(coefficient)


def turbine_governor(tau_g: float, tau_b: float, droop: MemorylessBlock) -> TurbineGovernor:
    """Governor/turbine cascade; ``droop`` maps u = -omega to the power command."""
    return TurbineGovernor(tau_g, tau_b, droop)


# --- operations ---------------------------------------------------------------

def step_block(block: ControllerBlock, u: float, dt: float) -> tuple[ControllerBlock, float]:
    """Advance a block one classical 4th-order substep under constant input.

    Returns the updated copy and its output at the new state.
    """
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    new = block.clone()
    if block.state_dim:
        x = block.state
        k1 = block.drift(x, u)
        k2 = block.drift(x + 0.5 * dt * k1, u)
        k3 = block.drift(x + 0.5 * dt * k2, u)
        k4 = block.drift(x + dt * k3, u)
        new.state = x + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(new.state)):
            raise NonFiniteState("block state left the finite domain")
    return new, new.output(new.state, u)


def static_characteristic(block: ControllerBlock, u_bar: float, *,
                          settle: bool = False, tol: float = 1e-10,
                          max_steps: int = 2_000_000) -> float:
    """Steady output under constant input u_bar.

    Uses the constructor's closed-form equilibrium state unless ``settle`` is
    requested, in which case the block is integrated until the drift norm
    falls below ``tol`` (NoConvergence if the step cap is exhausted).
    """
    if not settle or block.state_dim == 0:
        return block.static_output(u_bar)
    work = block.clone()
    dt = 1e-3
    for _ in range(max_steps):
        if float(np.linalg.norm(work.drift(work.state, u_bar))) < tol:
            return work.output(work.state, u_bar)
        work, _ = step_block(work, u_bar, dt)
    raise NoConvergence(f"block did not settle under constant input {u_bar}")


def check_load_solvability(blocks: Iterable[ControllerBlock], u_bar: float = 0.0) -> bool:
    """Decentralized solvability check for the demand blocks at a load bus.

    True when either the summed direct frequency feedthrough of the outputs is
    bounded away from zero, or (all outputs being feedthrough-free) the summed
    state-coupling sensitivity is strictly positive.
    """
    blocks = list(blocks)
    lo_total = 0.0
    hi_total = 0.0
    all_feedthrough_free = True
    for b in blocks:
        lo, hi = b.frequency_slope_limits(u_bar)
        lo_total += min(lo, hi)
        hi_total += max(lo, hi)
        if lo != 0.0 or hi != 0.0:
            all_feedthrough_free = False
    if lo_total > 0.0 or hi_total < 0.0:
        return True
    if all_feedthrough_free:
        coupling = sum(b.state_coupling_frequency_slope(u_bar) for b in blocks)
        return coupling > 0.0
    return False
