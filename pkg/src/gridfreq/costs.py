"""Strictly convex cost functions for generation and demand deviations.

Two families are provided: smooth quadratics, and quadratics with a single
marginal-cost jump (a kink in the derivative).  Both expose the derivative,
its one-sided limits, and the monotone generalized inverse of the derivative,
which stays constant across the jump interval of a kink.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .errors import InvalidCost

_INF = math.inf


def _check_bounds(bounds: tuple[float, float]) -> None:
    lo, hi = bounds
    if not lo < hi:
        raise InvalidCost(f"bounds must satisfy lo < hi, got {bounds}")
    if math.isnan(lo) or math.isnan(hi):
        raise InvalidCost("bounds must not be NaN")


@dataclass(frozen=True)
class QuadraticCost:
    """C(x) = 0.5 * curvature * x**2 + tilt * x, strictly convex for curvature > 0."""

    curvature: float
    bounds: tuple[float, float] = (-_INF, _INF)
    tilt: float = 0.0

    def __post_init__(self):
        if not self.curvature > 0:
            raise InvalidCost(f"curvature must be positive, got {self.curvature}")
        _check_bounds(self.bounds)

    kinks: tuple[float, ...] = field(default=(), init=False, repr=False)

    def value(self, x: float) -> float:
        return 0.5 * self.curvature * x * x + self.tilt * x

    def derivative(self, x: float) -> float:
        return self.curvature * x + self.tilt

    def derivative_limits(self, x: float) -> tuple[float, float]:
        d = self.derivative(x)
        return (d, d)

    def inverse_derivative(self, y: float) -> float:
        return (y - self.tilt) / self.curvature

    def inverse_derivative_slope(self, y: float) -> float:
        return 1.0 / self.curvature

    @property
    def smooth(self) -> bool:
        return True


@dataclass(frozen=True)
class KinkedQuadraticCost:
    """Quadratic plus a weighted absolute value: C(x) = jump*|x-kink| + 0.5*curvature*(x-kink)**2 + tilt*(x-kink).

    The derivative jumps from tilt-jump to tilt+jump at the kink, so the
    generalized inverse is constant (equal to the kink abscissa) on that
    interval.  jump == 0 degenerates to a shifted quadratic.
    """

    jump: float
    curvature: float
    kink: float = 0.0
    tilt: float = 0.0
    bounds: tuple[float, float] = (-_INF, _INF)

    def __post_init__(self):
        if not self.curvature > 0:
            raise InvalidCost(f"curvature must be positive, got {self.curvature}")
        if self.jump < 0:
            raise InvalidCost(f"jump must be nonnegative, got {self.jump}")
        _check_bounds(self.bounds)

    @property
    def kinks(self) -> tuple[float, ...]:
        return (self.kink,) if self.jump > 0 else ()

    @property
    def smooth(self) -> bool:
        return self.jump == 0

    def value(self, x: float) -> float:
        z = x - self.kink
        return self.jump * abs(z) + 0.5 * self.curvature * z * z + self.tilt * z

    def derivative(self, x: float) -> float:
        z = x - self.kink
        if z == 0 and self.jump > 0:
            raise InvalidCost(f"derivative undefined at kink x={self.kink}")
        return self.jump * math.copysign(1.0, z) + self.curvature * z + self.tilt

    def derivative_limits(self, x: float) -> tuple[float, float]:
        z = x - self.kink
        if z == 0:
            return (self.tilt - self.jump, self.tilt + self.jump)
        d = self.jump * math.copysign(1.0, z) + self.curvature * z + self.tilt
        return (d, d)

    def inverse_derivative(self, y: float) -> float:
        lo, hi = self.tilt - self.jump, self.tilt + self.jump
        if y >= hi:
            return self.kink + (y - hi) / self.curvature
        if y <= lo:
            return self.kink + (y - lo) / self.curvature
        return self.kink

    def inverse_derivative_slope(self, y: float) -> float:
        lo, hi = self.tilt - self.jump, self.tilt + self.jump
        if lo < y < hi:
            return 0.0
        return 1.0 / self.curvature


ConvexCost = QuadraticCost | KinkedQuadraticCost


def subdifferential(cost: ConvexCost, x: float) -> tuple[float, float]:
    """Subdifferential of the cost at x as a closed interval [lo, hi]."""
    return cost.derivative_limits(x)


def one_sided_slope_limits(breaks, slope_at, y: float) -> tuple[float, float]:
    """One-sided limits at y of a slope function that is constant between breakpoints.

    ``slope_at`` must be exact on the open intervals between ``breaks``; limits
    at a breakpoint are read from representative interior points.
    """
    if y not in breaks:  # fast path: interior of a piece
        s = slope_at(y)
        return (s, s)
    finite = sorted(b for b in breaks if math.isfinite(b))
    below = [b for b in finite if b < y]
    above = [b for b in finite if b > y]
    rep_lo = (below[-1] + y) / 2 if below else y - 1.0
    rep_hi = (above[0] + y) / 2 if above else y + 1.0
    return (slope_at(rep_lo), slope_at(rep_hi))


class ClippedInverseMarginal:
    """Monotone map y -> clip(inverse_derivative(y), bounds) with exact slope limits.

    Flat exactly on the derivative's jump interval at each kink and beyond the
    clip thresholds; strictly increasing elsewhere.
    """

    def __init__(self, cost: "ConvexCost"):
        self.cost = cost
        lo, hi = cost.bounds
        self.clip_lo_threshold = cost.derivative_limits(lo)[1] if math.isfinite(lo) else -_INF
        self.clip_hi_threshold = cost.derivative_limits(hi)[0] if math.isfinite(hi) else _INF
        self._breaks = [self.clip_lo_threshold, self.clip_hi_threshold]
        for kink in cost.kinks:
            jlo, jhi = cost.derivative_limits(kink)
            self._breaks.extend((jlo, jhi))

    def value(self, y: float) -> float:
        lo, hi = self.cost.bounds
        v = self.cost.inverse_derivative(y)
        return lo if v < lo else hi if v > hi else v

    def _slope_interior(self, y: float) -> float:
        if y <= self.clip_lo_threshold or y >= self.clip_hi_threshold:
            return 0.0
        return self.cost.inverse_derivative_slope(y)

    def slope_limits(self, y: float) -> tuple[float, float]:
        return one_sided_slope_limits(self._breaks, self._slope_interior, y)

    def slope(self, y: float) -> float:
        """Average of the one-sided slopes (a usable Newton derivative everywhere)."""
        lo, hi = self.slope_limits(y)
        return 0.5 * (lo + hi)


def deadband_cost(width: float, saturation_slope: float,
                  saturation_level: float) -> KinkedQuadraticCost:
    """Cost whose clipped inverse marginal is a deadband-with-saturation characteristic.

    A response that stays zero until the price exceeds ``width``, then rises
    with slope ``saturation_slope`` up to ``saturation_level``, corresponds to
    this kinked cost with box bounds at the saturation level.
    """
    if saturation_slope <= 0 or saturation_level <= 0:
        raise InvalidCost("saturation slope and level must be positive")
    return KinkedQuadraticCost(
        jump=width,
        curvature=1.0 / saturation_slope,
        bounds=(-saturation_level, saturation_level),
    )
