"""Frequency-domain passivity certificates for linearized controller blocks.

A stable block whose transfer function (from negative frequency deviation to
net supply) has strictly positive real part at every frequency is input
strictly passive around the linearization point.  This module scans margins
on a log grid with golden-section refinement, evaluates the closed forms for
the governor/turbine cascade, and runs the delayed-Nyquist check that
separates the static and dynamic demand laws under measurement delay.
Delays are handled exactly as frequency-domain phase rotation, never by
rational approximation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import signal

from .controllers import ControllerBlock
from .errors import (
    InvalidTimeConstant,
    LinearizationUnavailable,
    UnstableTransferFunction,
)

_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class TransferFunction:
    """Proper rational function, optional pure input delay, constant feedthrough addend.

    The response is num(jw)/den(jw) * exp(-jw*delay) + feedthrough; the
    feedthrough models instantaneous damping added in parallel and is not
    rotated by the delay.
    """

    num: tuple[float, ...]
    den: tuple[float, ...]
    input_delay: float = 0.0
    feedthrough: float = 0.0

    def __post_init__(self):
        num = tuple(float(c) for c in self.num)
        den = tuple(float(c) for c in self.den)
        if not den or all(c == 0.0 for c in den):
            raise ValueError("denominator must be nonzero")
        # strip leading zeros so degrees are meaningful
        while len(num) > 1 and num[0] == 0.0:
            num = num[1:]
        while len(den) > 1 and den[0] == 0.0:
            den = den[1:]
        if len(num) > len(den):
            raise ValueError("transfer function must be proper (deg num <= deg den)")
        if not all(math.isfinite(c) for c in num + den):
            raise ValueError("coefficients must be finite")
        if self.input_delay < 0:
            raise ValueError("input delay must be nonnegative")
        object.__setattr__(self, "num", num)
        object.__setattr__(self, "den", den)

    def response(self, w):
        """Frequency response at angular frequency w (scalar or array)."""
        jw = 1j * np.asarray(w, dtype=float)
        value = np.polyval(self.num, jw) / np.polyval(self.den, jw)
        if self.input_delay > 0:
            value = value * np.exp(-jw * self.input_delay)
        return value + self.feedthrough

    def poles(self) -> np.ndarray:
        if len(self.den) == 1:
            return np.zeros(0)
        return np.roots(self.den)

    def is_hurwitz(self) -> bool:
        poles = self.poles()
        return bool(np.all(poles.real < 0)) if poles.size else True

    def scaled(self, gain: float) -> "TransferFunction":
        return TransferFunction(
            num=tuple(gain * c for c in self.num),
            den=self.den,
            input_delay=self.input_delay,
            feedthrough=gain * self.feedthrough,
        )

    def delayed(self, delay: float) -> "TransferFunction":
        return TransferFunction(self.num, self.den, self.input_delay + delay,
                                self.feedthrough)

    @property
    def biproper(self) -> bool:
        return len(self.num) == len(self.den)


@dataclass(frozen=True)
class PassivityReport:
    """Result of a real-part margin scan."""

    margin: float            # infimum of Re over the scanned frequencies
    worst_frequency: float   # rad/s; inf marks the asymptotic tail
    stable: bool
    threshold: float = 0.0   # certificate requires margin > threshold
    w_min: float = 1e-3
    w_max: float = 1e4
    n_points: int = 2048

    @property
    def passed(self) -> bool:
        return self.stable and self.margin > self.threshold


def _golden_minimize(f, a: float, b: float, iterations: int = 80) -> tuple[float, float]:
    x1 = b - _GOLDEN * (b - a)
    x2 = a + _GOLDEN * (b - a)
    f1, f2 = f(x1), f(x2)
    for _ in range(iterations):
        if f1 <= f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - _GOLDEN * (b - a)
            f1 = f(x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + _GOLDEN * (b - a)
            f2 = f(x2)
    x = 0.5 * (a + b)
    return x, f(x)


def scan_response(response_fn, w_min: float = 1e-3, w_max: float = 1e4,
                  n_points: int = 2048) -> tuple[float, float]:
    """(min Re, argmin frequency) of an arbitrary frequency response over a log grid.

    The grid minimum is refined by golden-section search around the three
    smallest grid values, so narrow delay-induced dips are not missed.
    """
    grid = np.logspace(math.log10(w_min), math.log10(w_max), n_points)
    real = np.real(response_fn(grid))
    order = np.argsort(real)[:3]

    def re_at(w):
        return float(np.real(response_fn(w)))

    best_val = float(real[order[0]])
    best_w = float(grid[order[0]])
    for idx in order:
        lo = grid[max(idx - 1, 0)]
        hi = grid[min(idx + 1, n_points - 1)]
        w_star, v_star = _golden_minimize(re_at, float(lo), float(hi))
        if v_star < best_val:
            best_val, best_w = v_star, w_star
    return best_val, best_w


def _scan_min_real(tf: TransferFunction, w_min: float, w_max: float,
                   n_points: int) -> tuple[float, float]:
    """(min Re, argmin frequency) over the grid, refined around the smallest values."""
    if tf.input_delay > 0:
        # make sure the grid covers several full phase rotations of the delay
        w_max = max(w_max, 20.0 * math.pi / tf.input_delay)
    best_val, best_w = scan_response(tf.response, w_min, w_max, n_points)

    # asymptotic tail: the rational part vanishes (strictly proper) or tends to
    # its leading ratio; without delay this is an exact candidate
    if tf.input_delay == 0:
        tail = tf.feedthrough
        if tf.biproper:
            tail += tf.num[0] / tf.den[0]
        if tail < best_val:
            best_val, best_w = tail, math.inf
    return best_val, best_w


def isp_margin(tf: TransferFunction, w_max: float = 1e4, n_points: int = 2048,
               w_min: float = 1e-3) -> PassivityReport:
    """Input-strict-passivity margin: the infimum of Re over frequency.

    A positive margin certifies the linearized block; a nonpositive margin
    reports the counterexample frequency.  Raises UnstableTransferFunction
    when the denominator is not Hurwitz (the scan would be meaningless).
    """
    if not tf.is_hurwitz():
        raise UnstableTransferFunction(
            f"denominator roots {tf.poles()} are not strictly stable")
    margin, w_star = _scan_min_real(tf, w_min, w_max, n_points)
    return PassivityReport(margin=margin, worst_frequency=w_star, stable=True,
                           threshold=0.0, w_min=w_min, w_max=w_max, n_points=n_points)


# --- governor/turbine closed forms ---------------------------------------------

@dataclass(frozen=True)
class TgMinimum:
    value: float       # minimum of Re T(jw), always in [-1/8, 0)
    frequency: float   # rad/s where the minimum is attained


def turbine_governor_tf(tau_g: float, tau_b: float, gain: float = 1.0,
                        damping: float = 0.0, delay: float = 0.0) -> TransferFunction:
    """gain / ((tau_g s + 1)(tau_b s + 1)) plus parallel damping feedthrough."""
    if not (tau_g > 0 and tau_b > 0):
        raise InvalidTimeConstant(f"time constants must be positive, got ({tau_g}, {tau_b})")
    return TransferFunction(
        num=(gain,),
        den=(tau_g * tau_b, tau_g + tau_b, 1.0),
        input_delay=delay,
        feedthrough=damping,
    )


def tg_min_real(tau_g: float, tau_b: float) -> TgMinimum:
    """Closed-form minimum real part of the unit-gain governor/turbine response."""
    if not (tau_g > 0 and tau_b > 0):
        raise InvalidTimeConstant(f"time constants must be positive, got ({tau_g}, {tau_b})")
    prod = tau_g * tau_b
    tot = tau_g + tau_b
    value = -prod / (tot * tot + 2.0 * tot * math.sqrt(prod))
    frequency = math.sqrt((tot + math.sqrt(prod)) / prod ** 1.5)
    return TgMinimum(value=value, frequency=frequency)


def max_gain_ratio(a: float) -> float:
    """Largest droop-gain-to-damping ratio preserving the passivity margin.

    ``a`` is the ratio of the two lag time constants; the bound is scale
    invariant in their absolute size, equals 8 at a = 1 and grows without
    bound as a -> 0 (the cascade degenerates to first order).
    """
    if not a > 0:
        raise InvalidTimeConstant(f"time-constant ratio must be positive, got {a}")
    return -1.0 / tg_min_real(1.0, a).value


# --- small-gain certificate ------------------------------------------------------

@dataclass(frozen=True)
class GainCertificate:
    """Energy-gain certificate for droop-driven generation against local damping.

    True when the droop sector bound is strictly below the damping coefficient;
    the quadratic storage coefficients (beta for the power state, gamma for the
    valve state) are emitted when the time constants are supplied.
    """

    passes: bool
    gain: float
    damping: float
    beta: float | None = None
    gamma: float | None = None
    phi_coefficient: float | None = None

    def __bool__(self) -> bool:
        return self.passes


def _dissipation_matrix(beta, gamma, tau_g, tau_b, gain, damping, c):
    # quadratic form in (|power dev|, |valve dev|, |input dev|) that must be PSD
    # for the pointwise dissipation inequality with input penalty c*u^2
    return np.array([
        [beta / tau_b, -beta / (2 * tau_b), -0.5],
        [-beta / (2 * tau_b), gamma / tau_g, -gamma * gain / (2 * tau_g)],
        [-0.5, -gamma * gain / (2 * tau_g), damping - c],
    ])


def l2_small_gain_certificate(gain: float, damping: float,
                              tau_g: float | None = None,
                              tau_b: float | None = None) -> GainCertificate:
    """Certify gain < damping and emit midpoint storage coefficients.

    The coefficients satisfy 0 < beta < gamma * tau_b / tau_g and
    gamma < 2 (damping - gain) / gain^2 * tau_g (strict midpoint choices), and
    the reported input-penalty coefficient keeps the pointwise dissipation
    quadratic form positive semidefinite.
    """
    if gain < 0 or damping < 0:
        raise ValueError("gain and damping must be nonnegative")
    passes = gain < damping
    if not passes or tau_g is None or tau_b is None:
        return GainCertificate(passes=passes, gain=gain, damping=damping)
    if not (tau_g > 0 and tau_b > 0):
        raise InvalidTimeConstant(f"time constants must be positive, got ({tau_g}, {tau_b})")
    if gain == 0.0:
        # no droop: any small quadratic storage works, pick unit-scale values
        gamma = tau_g
        beta = 0.5 * gamma * tau_b / tau_g
        return GainCertificate(True, gain, damping, beta=beta, gamma=gamma,
                               phi_coefficient=0.5 * damping)
    gamma = (damping - gain) / gain ** 2 * tau_g          # half the strict bound
    beta = 0.5 * gamma * tau_b / tau_g
    phi = None
    candidate = 0.5 * (damping - gain)
    for _ in range(12):
        m = _dissipation_matrix(beta, gamma, tau_g, tau_b, gain, damping, candidate)
        if np.linalg.eigvalsh(m)[0] >= -1e-12:
            phi = candidate
            break
        candidate *= 0.5
    return GainCertificate(True, gain, damping, beta=beta, gamma=gamma,
                           phi_coefficient=phi)


def storage_coefficients(gain: float, damping: float, tau_g: float,
                         tau_b: float) -> tuple[float, float]:
    """(beta, gamma) for the governor/turbine quadratic storage; gain < damping required."""
    cert = l2_small_gain_certificate(gain, damping, tau_g, tau_b)
    if not cert.passes:
        raise ValueError(
            f"no quadratic storage: droop sector bound {gain} must be below damping {damping}")
    return cert.beta, cert.gamma


# --- block linearization -----------------------------------------------------------

def linearize(block: ControllerBlock, u_eq: float) -> TransferFunction:
    """Linearize a block at its equilibrium for input u_eq, in supply sign convention.

    The returned map takes the input deviation (of -omega) to the block's
    contribution to net bus supply, so demand blocks come out with positive
    DC gain.  Refused at characteristic corners: one-sided slopes differ there
    and no single linear model is faithful.
    """
    delay = float(getattr(block, "delay", 0.0))
    inner = getattr(block, "inner", block)
    sign = inner.supply_sign
    if inner.state_dim == 0:
        lo, hi = inner.characteristic_slope_limits(u_eq)
        if lo != hi:
            raise LinearizationUnavailable(
                f"characteristic corner at input {u_eq}: one-sided slopes {lo} != {hi}")
        return TransferFunction(num=(sign * lo,), den=(1.0,), input_delay=delay)
    x = inner.equilibrium_state(u_eq)
    a = np.atleast_2d(inner.drift_state_jacobian(x, u_eq))
    b = np.asarray(inner.drift_input_jacobian(x, u_eq), dtype=float).reshape(-1, 1)
    c = np.asarray(inner.output_state_jacobian(x, u_eq), dtype=float).reshape(1, -1)
    d_lo, d_hi = inner.feedthrough_slope_limits(u_eq)
    if d_lo != d_hi:
        raise LinearizationUnavailable(
            f"feedthrough corner at input {u_eq}: one-sided slopes {d_lo} != {d_hi}")
    num, den = signal.ss2tf(a, b, c, np.array([[d_lo]]))
    return TransferFunction(num=tuple(sign * num[0]), den=tuple(den), input_delay=delay)


def delay_passivity_check(block: ControllerBlock, u_eq: float, delay: float,
                          damping: float, gain: float = 1.0,
                          w_max: float = 1e4, n_points: int = 2048,
                          w_min: float = 1e-3) -> PassivityReport:
    """Delayed-response check: does the gained block response stay right of -damping?

    Linearizes the block at u_eq, scales by ``gain``, rotates by the exact
    delay phase, and scans the real part.  Passing (margin > -damping) means
    local damping retains the bus passivity despite the measurement delay.
    """
    tf = linearize(block, u_eq).scaled(gain).delayed(delay)
    if not tf.is_hurwitz():
        raise UnstableTransferFunction(
            f"block linearization has unstable poles {tf.poles()}")
    margin, w_star = _scan_min_real(tf, w_min, w_max, n_points)
    return PassivityReport(margin=margin, worst_frequency=w_star, stable=True,
                           threshold=-damping, w_min=w_min, w_max=w_max,
                           n_points=n_points)
