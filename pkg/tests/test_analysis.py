"""Equilibrium solving, security checking, and energy-function monitoring."""

import math

import numpy as np
import pytest

from gridfreq import controllers as ctl, dispatch, simulator
from gridfreq.analysis import (
    check_monotone,
    equilibrium_frequency,
    find_equilibrium,
    lyapunov_value,
    steady_state_comparison,
)
from gridfreq.costs import QuadraticCost
from gridfreq.errors import NoStorageAvailable, SecurityViolated
from gridfreq.network import Bus, BusKind, Line, NetworkModel
from gridfreq.scenario import induced_dispatch_problem
from gridfreq.simulator import SimConfig

from conftest import make_ref3bus

G, L = BusKind.GENERATOR, BusKind.LOAD


class TestFindEquilibrium:
    def test_zero_load_gives_nominal_point(self):
        model, blocks = make_ref3bus()
        eq = find_equilibrium(model, blocks, load_steps={3: 0.0})
        assert eq.omega_star == 0.0
        assert np.max(np.abs(eq.eta_star)) == pytest.approx(0.0, abs=1e-13)
        assert all(np.max(np.abs(x)) == 0.0 for x in eq.block_states if x.size)

    def test_two_bus_angle_is_arcsin(self):
        # exact transfer 0.5 over a unit-susceptance line: eta = pi/6
        model = NetworkModel(
            buses=(Bus(1, G, inertia=0.3), Bus(2, L, load_step=0.6)),
            lines=(Line(1, 2, 1.0),))
        blocks = {
            1: (ctl.static_marginal(QuadraticCost(1.0), ctl.Role.GENERATION),),
            2: (ctl.damping_load(0.2),),
        }
        eq = find_equilibrium(model, blocks)
        assert eq.omega_star == pytest.approx(-0.5, abs=1e-12)
        assert eq.eta_star[0] == pytest.approx(math.pi / 6, abs=1e-10)

    def test_reference_case_matches_allocation_multiplier(self):
        model, blocks = make_ref3bus()
        eq = find_equilibrium(model, blocks)
        problem = induced_dispatch_problem(model, blocks)
        assert eq.omega_star == pytest.approx(-1 / 3, abs=1e-11)
        assert abs(eq.omega_star - dispatch.predicted_frequency(problem)) < 1e-10

    def test_all_conditions_rechecked(self):
        model, blocks = make_ref3bus()
        eq = find_equilibrium(model, blocks)
        assert eq.max_residual < 1e-10
        assert any(k.startswith("balance_bus") for k in eq.residuals)
        assert any(k.startswith("flow_law") for k in eq.residuals)
        assert any(k.startswith("static_map") for k in eq.residuals)

    def test_security_violation_reported_with_line(self):
        # a weak chord closing a strong corridor is forced past pi/2
        model = NetworkModel(
            buses=(Bus(1, G, inertia=0.2, load_step=-9.5), Bus(2, L),
                   Bus(3, L, load_step=9.5)),
            lines=(Line(1, 2, 10.0), Line(2, 3, 10.0), Line(1, 3, 0.2)))
        blocks = {
            1: (ctl.static_marginal(QuadraticCost(1.0), ctl.Role.GENERATION),),
            2: (ctl.damping_load(1.0),),
            3: (ctl.damping_load(1.0),),
        }
        with pytest.raises(SecurityViolated) as err:
            find_equilibrium(model, blocks)
        assert "(1,3)" in str(err.value)

    def test_meshed_network_flagged_as_non_tree(self):
        model = NetworkModel(
            buses=(Bus(1, G, inertia=0.2, load_step=-0.4), Bus(2, L),
                   Bus(3, L, load_step=0.4)),
            lines=(Line(1, 2, 5.0), Line(2, 3, 5.0), Line(1, 3, 5.0)))
        blocks = {
            1: (ctl.static_marginal(QuadraticCost(1.0), ctl.Role.GENERATION),),
            2: (ctl.damping_load(1.0),),
            3: (ctl.damping_load(1.0),),
        }
        eq = find_equilibrium(model, blocks)
        assert not eq.is_tree
        assert eq.max_residual < 1e-10


class TestLyapunovValue:
    def test_zero_at_equilibrium(self):
        model, blocks = make_ref3bus()
        eq = find_equilibrium(model, blocks)
        state = simulator.state_from_equilibrium(model, blocks, eq)
        v = lyapunov_value(model, blocks, state, eq)
        assert v.total == pytest.approx(0.0, abs=1e-15)

    def test_kinetic_term_alone(self):
        model, blocks = make_ref3bus()
        eq = find_equilibrium(model, blocks)
        state = simulator.state_from_equilibrium(model, blocks, eq)
        delta = 0.05
        state.omega_g[0] += delta
        v = lyapunov_value(model, blocks, state, eq)
        assert v.kinetic == pytest.approx(0.5 * 0.2 * delta ** 2)
        assert v.potential == pytest.approx(0.0, abs=1e-15)

    def test_potential_term_closed_form(self):
        model, blocks = make_ref3bus()
        eq = find_equilibrium(model, blocks)
        state = simulator.state_from_equilibrium(model, blocks, eq)
        delta = 0.1
        eta_star = eq.eta_star[0]
        state.eta[0] += delta
        v = lyapunov_value(model, blocks, state, eq)
        expected = 5.0 * (math.cos(eta_star) - math.cos(eta_star + delta)
                          - delta * math.sin(eta_star))
        assert v.potential == pytest.approx(expected, abs=1e-12)
        assert v.potential > 0

    def test_strict_local_minimum_on_shell(self):
        model, blocks = make_ref3bus()
        eq = find_equilibrium(model, blocks)
        base = simulator.state_from_equilibrium(model, blocks, eq)
        rng = np.random.default_rng(13)
        radius = 1e-3
        for _ in range(200):
            state = base.copy()
            direction = rng.normal(size=1 + len(state.eta))
            direction /= np.linalg.norm(direction)
            state.omega_g[0] += radius * direction[0]
            state.eta += radius * direction[1:]
            v = lyapunov_value(model, blocks, state, eq)
            assert v.total > 0

    def test_no_storage_for_hot_governor(self):
        # droop gain above the local damping: no certified quadratic storage
        model = NetworkModel(
            buses=(Bus(1, G, inertia=0.3, load_step=0.1),), lines=())
        blocks = {1: (ctl.turbine_governor(0.3, 0.3, ctl.linear_droop(2.0)),
                      ctl.damping_load(1.0))}
        eq = find_equilibrium(model, blocks)
        state = simulator.state_from_equilibrium(model, blocks, eq)
        with pytest.raises(NoStorageAvailable):
            lyapunov_value(model, blocks, state, eq)

    def test_simulate_flags_disabled_monitoring(self):
        model = NetworkModel(
            buses=(Bus(1, G, inertia=0.3, load_step=0.1),), lines=())
        blocks = {1: (ctl.turbine_governor(0.3, 0.3, ctl.linear_droop(2.0)),
                      ctl.damping_load(1.0))}
        eq = find_equilibrium(model, blocks)
        traj = simulator.simulate(model, blocks,
                                  SimConfig(dt=0.01, t_end=1.0, control_hold=0.0),
                                  equilibrium=eq)
        assert traj.lyapunov is None
        assert "storage" in traj.lyapunov_note


class TestCheckMonotone:
    def test_flat_at_equilibrium(self):
        model, blocks = make_ref3bus()
        eq = find_equilibrium(model, blocks)
        state = simulator.state_from_equilibrium(model, blocks, eq)
        traj = simulator.simulate(model, blocks,
                                  SimConfig(dt=0.01, t_end=2.0, control_hold=0.0,
                                            algebraic_tol=1e-12),
                                  initial=state, equilibrium=eq)
        report = check_monotone(traj)
        assert report.passed
        assert abs(report.total_decay) < 1e-12

    def test_step_response_decays(self):
        model, blocks = make_ref3bus()
        eq = find_equilibrium(model, blocks)
        traj = simulator.simulate(model, blocks,
                                  SimConfig(dt=0.005, t_end=10.0, control_hold=0.0,
                                            algebraic_tol=1e-11),
                                  equilibrium=eq)
        report = check_monotone(traj)
        assert report.passed
        assert report.total_decay > 0

    def test_detector_catches_corruption(self):
        model, blocks = make_ref3bus()
        eq = find_equilibrium(model, blocks)
        traj = simulator.simulate(model, blocks,
                                  SimConfig(dt=0.01, t_end=2.0, control_hold=0.0),
                                  equilibrium=eq)
        k = traj.lyapunov.size // 2
        traj.lyapunov[k] += 1.0
        report = check_monotone(traj)
        assert not report.passed
        assert report.first_violation_time == pytest.approx(traj.times[k])

    def test_requires_samples(self):
        model, blocks = make_ref3bus()
        traj = simulator.simulate(model, blocks,
                                  SimConfig(dt=0.01, t_end=1.0, control_hold=0.0))
        with pytest.raises(NoStorageAvailable):
            check_monotone(traj)


class TestSteadyStateComparison:
    def test_reference_values(self):
        model, blocks = make_ref3bus()
        with_ctl, without_ctl = steady_state_comparison(model, blocks)
        assert with_ctl == pytest.approx(-1 / 3, abs=1e-11)
        assert without_ctl == pytest.approx(-1 / 2, abs=1e-11)
        assert abs(with_ctl) < abs(without_ctl)

    def test_zero_step_means_no_drop(self):
        model, blocks = make_ref3bus()
        pair = steady_state_comparison(model, blocks, load_steps={3: 0.0})
        assert pair == (0.0, 0.0)

    def test_stronger_demand_response_shrinks_deviation(self):
        model, blocks = make_ref3bus()
        baseline = abs(steady_state_comparison(model, blocks)[0])
        stronger = dict(blocks)
        stronger[2] = (ctl.static_marginal(QuadraticCost(0.5, bounds=(-1e6, 1e6))),
                       ctl.damping_load(0.5))
        assert abs(steady_state_comparison(model, stronger)[0]) < baseline

    def test_requires_controllable_demand(self):
        model, blocks = make_ref3bus()
        stripped = {bus: tuple(b for b in bl if b.role is not ctl.Role.CONTROLLABLE_DEMAND)
                    for bus, bl in blocks.items()}
        with pytest.raises(ValueError):
            steady_state_comparison(model, stripped)


def test_equilibrium_frequency_signs_follow_load():
    model, blocks = make_ref3bus()
    assert equilibrium_frequency(model, blocks, load_steps={3: -1.0}) == pytest.approx(
        1 / 3, abs=1e-11)
