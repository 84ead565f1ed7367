"""Shared fixtures: reference models and shipped-scenario access."""

from __future__ import annotations

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))  # for the local oracle module

from gridfreq import controllers as ctl
from gridfreq import scenario as scenario_mod
from gridfreq.costs import QuadraticCost
from gridfreq.network import Bus, BusKind, Line, NetworkModel


def make_ref3bus():
    """Three-bus reference model and blocks (generator, priced load, passive load)."""
    model = NetworkModel(
        buses=(
            Bus(1, BusKind.GENERATOR, inertia=0.2),
            Bus(2, BusKind.LOAD),
            Bus(3, BusKind.LOAD, load_step=1.0),
        ),
        lines=(Line(1, 2, 5.0), Line(2, 3, 5.0)),
    )
    blocks = {
        1: (ctl.static_marginal(QuadraticCost(1.0, bounds=(-1e6, 1e6)),
                                ctl.Role.GENERATION),),
        2: (ctl.static_marginal(QuadraticCost(1.0, bounds=(-1e6, 1e6))),
            ctl.damping_load(0.5)),
        3: (ctl.damping_load(0.5),),
    }
    return model, blocks


@pytest.fixture
def ref3bus():
    return make_ref3bus()


@pytest.fixture(scope="session")
def shipped():
    """name -> loaded Scenario for every shipped scenario file."""
    return {name: scenario_mod.load(scenario_mod.shipped_path(name))
            for name in scenario_mod.shipped_names()}
