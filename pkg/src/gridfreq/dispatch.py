"""Optimal allocation of generation and demand deviations under one balance constraint.

The problem minimizes separable strictly convex costs for generation and
controllable demand plus the integral disutility of frequency-dependent load,
subject to box constraints and total power balance.  The balance multiplier is
found by bisection on a monotone scalar map and coincides with the network's
steady-state frequency deviation; multipliers for the box constraints are
recovered in closed form and every candidate can be re-checked against the
full first-order conditions (subdifferential form at marginal-cost kinks).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .costs import ClippedInverseMarginal, ConvexCost
from .errors import Infeasible, InvalidCost, InvalidDamping, ToleranceNotMet
from .rootfind import bisect_decreasing, bracket_decreasing, polish_decreasing

_INF = math.inf


@dataclass(frozen=True)
class GeneralizedInverse:
    """Monotone inverse of a cost's derivative, constant across kink jump intervals."""

    cost: ConvexCost

    def __call__(self, x: float) -> float:
        return self.cost.inverse_derivative(x)

    def slope(self, x: float) -> float:
        return self.cost.inverse_derivative_slope(x)

    def flat_interval(self, kink: float) -> tuple[float, float]:
        """The [left, right] derivative limits at a kink; the map equals kink there."""
        return self.cost.derivative_limits(kink)


def generalized_inverse(cost: ConvexCost) -> GeneralizedInverse:
    """Build the generalized inverse of the cost's derivative."""
    if not cost.curvature > 0:
        raise InvalidCost("cost must be strictly convex")
    return GeneralizedInverse(cost)


@dataclass(frozen=True)
class GeneratorTerm:
    bus: int
    cost: ConvexCost


@dataclass(frozen=True)
class DemandTerm:
    bus: int
    cost: ConvexCost


@dataclass(frozen=True)
class DampingTerm:
    """Frequency-dependent uncontrollable load, linear with positive coefficient."""

    bus: int
    coefficient: float

    def __post_init__(self):
        if not self.coefficient > 0:
            raise InvalidDamping(f"damping coefficient must be positive, got {self.coefficient}")


@dataclass(frozen=True)
class DispatchProblem:
    generators: tuple[GeneratorTerm, ...] = ()
    demands: tuple[DemandTerm, ...] = ()
    dampings: tuple[DampingTerm, ...] = ()
    load_steps: tuple[tuple[int, float], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "generators", tuple(self.generators))
        object.__setattr__(self, "demands", tuple(self.demands))
        object.__setattr__(self, "dampings", tuple(self.dampings))
        object.__setattr__(self, "load_steps", tuple(tuple(p) for p in self.load_steps))

    @property
    def total_load(self) -> float:
        return sum(step for _, step in self.load_steps)

    @property
    def total_damping(self) -> float:
        return sum(d.coefficient for d in self.dampings)


@dataclass(frozen=True)
class DispatchSolution:
    nu: float                                   # balance multiplier = steady frequency deviation
    generation: tuple[float, ...]
    demand: tuple[float, ...]
    damping_response: tuple[float, ...]
    lambda_plus: tuple[float, ...]
    lambda_minus: tuple[float, ...]
    mu_plus: tuple[float, ...]
    mu_minus: tuple[float, ...]
    degenerate_multiplier: bool = False


def balance_residual(problem: DispatchProblem, nu: float) -> float:
    """Total supply minus total demand at candidate multiplier nu (decreasing in nu)."""
    total = -problem.total_load
    for g in problem.generators:
        total += ClippedInverseMarginal(g.cost).value(-nu)
    for d in problem.demands:
        total -= ClippedInverseMarginal(d.cost).value(nu)
    for h in problem.dampings:
        total -= h.coefficient * nu
    return total


def _residual_slope(problem: DispatchProblem, nu: float) -> float:
    slope = 0.0
    for g in problem.generators:
        slope -= ClippedInverseMarginal(g.cost).slope(-nu)
    for d in problem.demands:
        slope -= ClippedInverseMarginal(d.cost).slope(nu)
    slope -= problem.total_damping
    return slope


def _check_feasible(problem: DispatchProblem) -> None:
    if problem.total_damping > 0:
        return  # the damping term makes the balance map surjective
    hi = sum(g.cost.bounds[1] for g in problem.generators) \
        - sum(d.cost.bounds[0] for d in problem.demands)
    lo = sum(g.cost.bounds[0] for g in problem.generators) \
        - sum(d.cost.bounds[1] for d in problem.demands)
    target = problem.total_load
    if not (lo <= target <= hi) and not math.isnan(target):
        raise Infeasible(
            f"total load step {target} outside attainable range [{lo}, {hi}]")


def _bracket(problem: DispatchProblem) -> tuple[float, float]:
    try:
        return bracket_decreasing(lambda nu: balance_residual(problem, nu))
    except ValueError as exc:
        raise Infeasible(f"balance map cannot be bracketed: {exc}") from exc


def _plateau_midpoint(problem: DispatchProblem, nu: float,
                      a: float, b: float) -> float:
    """Midpoint of the flat zero segment of the balance map around nu."""
    # expand until the residual is nonzero on both sides (or the ends give up)
    lo, hi = a, b
    for _ in range(200):
        if balance_residual(problem, lo) > 0 or not math.isfinite(lo):
            break
        lo = lo * 2 if lo < 0 else -1.0
    for _ in range(200):
        if balance_residual(problem, hi) < 0 or not math.isfinite(hi):
            break
        hi = hi * 2 if hi > 0 else 1.0
    if not (math.isfinite(lo) and math.isfinite(hi)):
        return nu

    def edge(p_lo, p_hi, want_positive):
        for _ in range(200):
            mid = 0.5 * (p_lo + p_hi)
            r = balance_residual(problem, mid)
            on_plateau = (r == 0.0)
            if want_positive:
                if on_plateau:
                    p_hi = mid
                else:
                    p_lo = mid
            else:
                if on_plateau:
                    p_lo = mid
                else:
                    p_hi = mid
        return 0.5 * (p_lo + p_hi)

    left = edge(lo, nu, want_positive=True)
    right = edge(nu, hi, want_positive=False)
    return 0.5 * (left + right)


def _threshold_frequencies(problem: DispatchProblem):
    """Frequency thresholds at which each box constraint becomes active."""
    gen_thresholds = []
    for g in problem.generators:
        p_lo, p_hi = g.cost.bounds
        w_max = -g.cost.derivative_limits(p_hi)[0] if math.isfinite(p_hi) else -_INF
        w_min = -g.cost.derivative_limits(p_lo)[1] if math.isfinite(p_lo) else _INF
        gen_thresholds.append((w_max, w_min))
    dem_thresholds = []
    for d in problem.demands:
        d_lo, d_hi = d.cost.bounds
        w_cmax = d.cost.derivative_limits(d_hi)[0] if math.isfinite(d_hi) else _INF
        w_cmin = d.cost.derivative_limits(d_lo)[1] if math.isfinite(d_lo) else -_INF
        dem_thresholds.append((w_cmax, w_cmin))
    return gen_thresholds, dem_thresholds


def solve(problem: DispatchProblem, tol: float = 1e-12,
          max_iter: int = 200) -> DispatchSolution:
    """Solve the allocation problem exactly up to the multiplier tolerance.

    Bisection on the monotone balance map (unconditionally convergent across
    saturation and kink thresholds), followed by guarded Newton polish on the
    locally affine piece.  If the root lies on a flat zero plateau of the map
    (possible only without damping), the plateau midpoint is returned and the
    solution is flagged ``degenerate_multiplier``.
    """
    _check_feasible(problem)
    a, b = _bracket(problem)
    def res_fn(x):
        return balance_residual(problem, x)

    def slope_fn(x):
        return _residual_slope(problem, x)

    nu, a, b = bisect_decreasing(res_fn, a, b, tol=tol, max_iter=max_iter)
    nu = polish_decreasing(res_fn, slope_fn, nu, a, b, tol=tol)

    degenerate = False
    if balance_residual(problem, nu) == 0.0 and _residual_slope(problem, nu) == 0.0:
        plateau_nu = _plateau_midpoint(problem, nu, a, b)
        if plateau_nu != nu:
            degenerate = True
            nu = plateau_nu
        elif problem.total_damping == 0.0:
            degenerate = True

    residual = balance_residual(problem, nu)
    if abs(residual) > 1e-7 * (1.0 + abs(problem.total_load)):
        raise ToleranceNotMet(
            f"balance residual {residual} at nu={nu} exceeds tolerance")

    generation = tuple(ClippedInverseMarginal(g.cost).value(-nu) for g in problem.generators)
    demand = tuple(ClippedInverseMarginal(d.cost).value(nu) for d in problem.demands)
    damping_response = tuple(h.coefficient * nu for h in problem.dampings)

    gen_thr, dem_thr = _threshold_frequencies(problem)
    lambda_plus, lambda_minus, mu_plus, mu_minus = [], [], [], []
    for w_max, w_min in gen_thr:
        lambda_plus.append(w_max - nu if nu <= w_max else 0.0)
        lambda_minus.append(nu - w_min if nu >= w_min else 0.0)
    for w_cmax, w_cmin in dem_thr:
        mu_plus.append(nu - w_cmax if nu >= w_cmax else 0.0)
        mu_minus.append(w_cmin - nu if nu <= w_cmin else 0.0)

    return DispatchSolution(
        nu=nu,
        generation=generation,
        demand=demand,
        damping_response=damping_response,
        lambda_plus=tuple(lambda_plus),
        lambda_minus=tuple(lambda_minus),
        mu_plus=tuple(mu_plus),
        mu_minus=tuple(mu_minus),
        degenerate_multiplier=degenerate,
    )


def predicted_frequency(problem: DispatchProblem) -> float:
    """Steady-state network frequency deviation implied by the allocation optimum."""
    return solve(problem).nu


def objective_value(problem: DispatchProblem, generation, demand, damping_response) -> float:
    """Total cost of an allocation (for reports; feasibility is not checked here)."""
    total = 0.0
    for g, p in zip(problem.generators, generation):
        total += g.cost.value(p)
    for d, x in zip(problem.demands, demand):
        total += d.cost.value(x)
    for h, du in zip(problem.dampings, damping_response):
        total += du * du / (2.0 * h.coefficient)
    return total


# --- first-order condition verification ---------------------------------------

def _interval_distance(v: float, lo: float, hi: float) -> float:
    if lo <= v <= hi:
        return 0.0
    return lo - v if v < lo else v - hi


@dataclass
class KktReport:
    """Per-condition residuals of the first-order optimality system."""

    residuals: dict[str, float] = field(default_factory=dict)
    tolerance: float = 1e-10

    def record(self, name: str, value: float) -> None:
        self.residuals[name] = abs(value)

    @property
    def max_residual(self) -> float:
        return max(self.residuals.values()) if self.residuals else 0.0

    @property
    def failures(self) -> list[str]:
        return [k for k, v in self.residuals.items() if v > self.tolerance]

    @property
    def passed(self) -> bool:
        return not self.failures


def verify_kkt(problem: DispatchProblem, solution: DispatchSolution,
               tol: float = 1e-10) -> KktReport:
    """Check every first-order condition of a candidate solution.

    Stationarity uses subdifferential membership, so optima whose allocation
    sits exactly at a marginal-cost kink verify cleanly even though the plain
    derivative is undefined there.
    """
    report = KktReport(tolerance=tol)
    nu = solution.nu

    balance = -problem.total_load
    for k, (g, p) in enumerate(zip(problem.generators, solution.generation)):
        lo, hi = g.cost.bounds
        lam_p, lam_m = solution.lambda_plus[k], solution.lambda_minus[k]
        target = -nu - lam_p + lam_m
        sub_lo, sub_hi = g.cost.derivative_limits(p)
        report.record(f"stationarity_gen[{g.bus}]", _interval_distance(target, sub_lo, sub_hi))
        report.record(f"bounds_gen[{g.bus}]", max(0.0, lo - p, p - hi))
        report.record(f"dual_sign_gen[{g.bus}]", max(0.0, -lam_p, -lam_m))
        report.record(f"slack_gen_hi[{g.bus}]",
                      abs(lam_p) if math.isinf(hi) else lam_p * (hi - p))
        report.record(f"slack_gen_lo[{g.bus}]",
                      abs(lam_m) if math.isinf(lo) else lam_m * (p - lo))
        balance += p

    for k, (d, x) in enumerate(zip(problem.demands, solution.demand)):
        lo, hi = d.cost.bounds
        mu_p, mu_m = solution.mu_plus[k], solution.mu_minus[k]
        target = nu - mu_p + mu_m
        sub_lo, sub_hi = d.cost.derivative_limits(x)
        report.record(f"stationarity_dem[{d.bus}]", _interval_distance(target, sub_lo, sub_hi))
        report.record(f"bounds_dem[{d.bus}]", max(0.0, lo - x, x - hi))
        report.record(f"dual_sign_dem[{d.bus}]", max(0.0, -mu_p, -mu_m))
        report.record(f"slack_dem_hi[{d.bus}]",
                      abs(mu_p) if math.isinf(hi) else mu_p * (hi - x))
        report.record(f"slack_dem_lo[{d.bus}]",
                      abs(mu_m) if math.isinf(lo) else mu_m * (x - lo))
        balance -= x

    for k, (h, du) in enumerate(zip(problem.dampings, solution.damping_response)):
        report.record(f"stationarity_damping[{h.bus}]", du / h.coefficient - nu)
        balance -= du

    report.record("balance", balance)
    return report
