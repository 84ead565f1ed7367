"""Allocation solver: balance multiplier, optimality conditions, oracle checks."""

import math

import numpy as np
import pytest

from gridfreq import dispatch
from gridfreq.costs import KinkedQuadraticCost, QuadraticCost
from gridfreq.dispatch import (
    DampingTerm,
    DemandTerm,
    DispatchProblem,
    GeneratorTerm,
    balance_residual,
    generalized_inverse,
    predicted_frequency,
    solve,
    verify_kkt,
)
from gridfreq.errors import Infeasible

from oracle import dispatch_objective, grid_search_dispatch

WIDE = (-1e6, 1e6)


def reference_problem():
    """One unit-cost generator, one unit-cost demand, unit damping, unit step."""
    return DispatchProblem(
        generators=(GeneratorTerm(1, QuadraticCost(1.0, bounds=WIDE)),),
        demands=(DemandTerm(2, QuadraticCost(1.0, bounds=WIDE)),),
        dampings=(DampingTerm(3, 1.0),),
        load_steps=((3, 1.0),),
    )


class TestGeneralizedInverse:
    def test_quadratic_is_plain_inverse(self):
        inv = generalized_inverse(QuadraticCost(2.0))
        for x in np.linspace(-3, 3, 13):
            assert inv(x) == pytest.approx(x / 2.0)

    def test_flat_across_jump_interval(self):
        inv = generalized_inverse(KinkedQuadraticCost(jump=0.4, curvature=1.0))
        assert inv.flat_interval(0.0) == (-0.4, 0.4)
        for x in np.linspace(-0.4, 0.4, 9):
            assert inv(x) == 0.0

    def test_left_inverse_off_kinks(self):
        cost = KinkedQuadraticCost(jump=0.4, curvature=1.0)
        inv = generalized_inverse(cost)
        for d in (-1.5, -0.2, 0.1, 2.0):
            assert inv(cost.derivative(d)) == pytest.approx(d)


class TestSolve:
    def test_reference_values(self):
        sol = solve(reference_problem())
        assert sol.nu == pytest.approx(-1 / 3, abs=1e-12)
        assert sol.generation[0] == pytest.approx(1 / 3, abs=1e-12)
        assert sol.demand[0] == pytest.approx(-1 / 3, abs=1e-12)
        assert sol.damping_response[0] == pytest.approx(-1 / 3, abs=1e-12)

    def test_zero_load_gives_zero_solution(self):
        prob = DispatchProblem(
            generators=(GeneratorTerm(1, QuadraticCost(2.0, bounds=WIDE)),),
            demands=(DemandTerm(2, QuadraticCost(3.0, bounds=WIDE)),),
            dampings=(DampingTerm(1, 0.5),),
        )
        sol = solve(prob)
        assert sol.nu == 0.0
        assert sol.generation[0] == 0.0
        assert sol.demand[0] == 0.0

    def test_allocations_split_by_marginal_cost(self):
        # cost coefficients 5 and 10 share one multiplier: allocations are 2:1
        prob = DispatchProblem(
            demands=(DemandTerm(1, QuadraticCost(5.0, bounds=WIDE)),
                     DemandTerm(2, QuadraticCost(10.0, bounds=WIDE))),
            dampings=(DampingTerm(3, 1.0),),
            load_steps=((3, 0.6),),
        )
        sol = solve(prob)
        assert sol.demand[0] / sol.demand[1] == pytest.approx(2.0, abs=1e-12)

    def test_predicted_frequency_drops_with_demand_control(self):
        prob = reference_problem()
        assert predicted_frequency(prob) == pytest.approx(-1 / 3, abs=1e-12)
        without = DispatchProblem(generators=prob.generators, demands=(),
                                  dampings=prob.dampings, load_steps=prob.load_steps)
        assert predicted_frequency(without) == pytest.approx(-1 / 2, abs=1e-12)

    def test_infeasible_without_damping(self):
        prob = DispatchProblem(
            generators=(GeneratorTerm(1, QuadraticCost(1.0, bounds=(-0.1, 0.1))),),
            demands=(DemandTerm(2, QuadraticCost(1.0, bounds=(-0.1, 0.1))),),
            load_steps=((2, 1.0),),
        )
        with pytest.raises(Infeasible):
            solve(prob)

    def test_saturated_generator(self):
        prob = DispatchProblem(
            generators=(GeneratorTerm(1, QuadraticCost(1.0, bounds=(-0.2, 0.2))),),
            dampings=(DampingTerm(2, 1.0),),
            load_steps=((2, 1.0),),
        )
        sol = solve(prob)
        assert sol.generation[0] == pytest.approx(0.2)
        # remaining 0.8 comes from the frequency-dependent response
        assert sol.damping_response[0] == pytest.approx(-0.8, abs=1e-11)
        assert sol.nu == pytest.approx(-0.8, abs=1e-11)
        assert sol.lambda_plus[0] > 0.0

    def test_degenerate_plateau_flagged(self):
        # no damping and a marginal-cost jump straddling the root: the
        # multiplier is a whole interval; the midpoint is reported and flagged
        prob = DispatchProblem(
            demands=(DemandTerm(2, KinkedQuadraticCost(jump=0.4, curvature=1.0,
                                                       bounds=(-1.0, 1.0))),),
            load_steps=(),
        )
        sol = solve(prob)
        assert sol.degenerate_multiplier
        assert sol.nu == pytest.approx(0.0, abs=1e-9)
        assert sol.demand[0] == 0.0

    def test_edge_of_unbounded_plateau_is_canonical(self):
        # everything saturates exactly: the multiplier set is a ray; the
        # solver returns its extreme point, which satisfies every condition
        prob = DispatchProblem(
            generators=(GeneratorTerm(1, QuadraticCost(1.0, bounds=(-0.5, 0.5))),),
            demands=(DemandTerm(2, QuadraticCost(1.0, bounds=(-0.5, 0.5))),),
            load_steps=((2, 1.0),),
        )
        sol = solve(prob)
        assert sol.nu == pytest.approx(-0.5, abs=1e-12)
        assert sol.generation[0] == pytest.approx(0.5)
        assert sol.demand[0] == pytest.approx(-0.5)
        assert verify_kkt(prob, sol).passed


class TestBalanceMap:
    def test_monotone_nonincreasing(self):
        rng = np.random.default_rng(2)
        for _ in range(20):
            prob = _random_problem(rng)
            grid = np.linspace(-3, 3, 101)
            values = [balance_residual(prob, float(nu)) for nu in grid]
            assert all(b <= a + 1e-12 for a, b in zip(values, values[1:]))

    def test_strictly_decreasing_off_plateaus(self):
        prob = reference_problem()
        values = [balance_residual(prob, nu) for nu in np.linspace(-1, 1, 21)]
        assert all(b < a for a, b in zip(values, values[1:]))


class TestVerifyKkt:
    def test_solver_output_verifies(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            prob = _random_problem(rng)
            report = verify_kkt(prob, solve(prob))
            assert report.passed, report.failures

    def test_perturbed_stationarity_flagged(self):
        prob = reference_problem()
        sol = solve(prob)
        bad = dispatch.DispatchSolution(
            nu=sol.nu,
            generation=(sol.generation[0] + 0.01,),
            demand=sol.demand,
            damping_response=sol.damping_response,
            lambda_plus=sol.lambda_plus, lambda_minus=sol.lambda_minus,
            mu_plus=sol.mu_plus, mu_minus=sol.mu_minus)
        report = verify_kkt(prob, bad)
        assert any(name.startswith("stationarity_gen") for name in report.failures)

    def test_kink_optimum_needs_subdifferential(self):
        # the optimum parks demand exactly on the marginal-cost jump: the
        # membership check passes while plain derivative equality cannot hold
        kinked = KinkedQuadraticCost(jump=0.4, curvature=1.0, bounds=WIDE)
        prob = DispatchProblem(
            generators=(GeneratorTerm(1, QuadraticCost(1.0, bounds=WIDE)),),
            demands=(DemandTerm(2, kinked),),
            dampings=(DampingTerm(2, 1.0),),
            load_steps=((2, 0.5),),
        )
        sol = solve(prob)
        assert sol.demand[0] == 0.0
        lo, hi = kinked.derivative_limits(0.0)
        assert lo < sol.nu < hi  # strictly inside the jump interval
        report = verify_kkt(prob, sol)
        assert report.passed, report.failures
        one_sided_gap = min(abs(sol.nu - lo), abs(sol.nu - hi))
        assert one_sided_gap > 0.05  # derivative equality would fail by this much


def _random_problem(rng, max_side=3, allow_kinks=True):
    def random_cost():
        curvature = float(rng.uniform(0.5, 8.0))
        hi = float(rng.uniform(0.2, 1.5))
        lo = -float(rng.uniform(0.2, 1.5))
        if allow_kinks and rng.random() < 0.3:
            return KinkedQuadraticCost(jump=float(rng.uniform(0.05, 0.5)),
                                       curvature=curvature, bounds=(lo, hi))
        return QuadraticCost(curvature, bounds=(lo, hi))

    n_gen = int(rng.integers(1, max_side + 1))
    n_dem = int(rng.integers(1, max_side + 1))
    gens = tuple(GeneratorTerm(i + 1, random_cost()) for i in range(n_gen))
    dems = tuple(DemandTerm(100 + i, random_cost()) for i in range(n_dem))
    damps = tuple(DampingTerm(200 + i, float(rng.uniform(0.2, 2.0)))
                  for i in range(int(rng.integers(1, 3))))
    load = ((300, float(rng.uniform(-1.5, 1.5))),)
    return DispatchProblem(generators=gens, demands=dems, dampings=damps,
                           load_steps=load)


class TestProperties:
    def test_adding_demand_control_never_raises_deviation(self):
        # strictness needs characteristics that are strictly increasing
        # through zero, so the added demands carry smooth costs here; kinked
        # demands (flat across the jump) still satisfy the weak inequality
        rng = np.random.default_rng(17)
        for _ in range(40):
            prob = _random_problem(rng, allow_kinks=False)
            base = DispatchProblem(generators=prob.generators, demands=(),
                                   dampings=prob.dampings, load_steps=prob.load_steps)
            nu_without = solve(base).nu
            nu_with = solve(prob).nu
            assert abs(nu_with) <= abs(nu_without) + 1e-12
            if nu_without != 0.0:
                assert abs(nu_with) < abs(nu_without)
                assert math.copysign(1, nu_with) == math.copysign(1, nu_without)

    def test_kinked_demand_weak_inequality(self):
        rng = np.random.default_rng(18)
        for _ in range(20):
            prob = _random_problem(rng, allow_kinks=True)
            base = DispatchProblem(generators=prob.generators, demands=(),
                                   dampings=prob.dampings, load_steps=prob.load_steps)
            assert abs(solve(prob).nu) <= abs(solve(base).nu) + 1e-12

    def test_scaling_load_scales_deviation_monotonically(self):
        rng = np.random.default_rng(19)
        for _ in range(10):
            prob = _random_problem(rng)
            base_load = prob.load_steps[0][1]
            if base_load == 0.0:
                continue
            nus = []
            for s in (0.25, 0.5, 0.75, 1.0):
                scaled = DispatchProblem(
                    generators=prob.generators, demands=prob.demands,
                    dampings=prob.dampings, load_steps=((300, base_load * s),))
                nus.append(solve(scaled).nu)
            signs = {math.copysign(1, nu) for nu in nus if nu != 0.0}
            assert len(signs) <= 1
            magnitudes = [abs(nu) for nu in nus]
            assert all(b >= a - 1e-12 for a, b in zip(magnitudes, magnitudes[1:]))

    def test_damping_disutility_integral(self):
        # the frequency-response term integrates the inverse map: d^2/(2D)
        from scipy.integrate import quad

        coefficient, du = 2.0, 1.0
        prob = DispatchProblem(dampings=(DampingTerm(1, coefficient),))
        term = dispatch.objective_value(prob, (), (), (du,))
        assert term == pytest.approx(0.25)
        quadrature, _ = quad(lambda z: z / coefficient, 0.0, du)
        assert term == pytest.approx(quadrature, abs=1e-12)

    def test_subdifferential_inverse_composition(self):
        # membership of the derivative in the generalized inverse's preimage
        cost = KinkedQuadraticCost(jump=0.3, curvature=2.0)
        inv = generalized_inverse(cost)
        for x in np.linspace(-1, 1, 21):
            if x == 0.0:
                lo, hi = inv.flat_interval(0.0)
                for y in np.linspace(lo, hi, 5):
                    assert inv(y) == 0.0
            else:
                lo, hi = cost.derivative_limits(x)
                assert lo == hi
                assert inv(lo) == pytest.approx(x, abs=1e-12)


class TestOracleEquivalence:
    def test_matches_dense_grid_search(self):
        rng = np.random.default_rng(29)
        pitch = 1e-3
        for _ in range(8):
            prob = _random_problem(rng, max_side=2)
            sol = solve(prob)
            gen_o, dem_o, du_o, obj_o = grid_search_dispatch(prob, pitch=pitch)
            for a, b in zip(sol.generation, gen_o):
                assert abs(a - b) <= 2 * pitch
            for a, b in zip(sol.demand, dem_o):
                assert abs(a - b) <= 2 * pitch
            obj_solver = dispatch_objective(prob, sol.generation, sol.demand)
            assert obj_solver <= obj_o + 1e-9
