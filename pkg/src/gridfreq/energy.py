"""Network energy function: kinetic + potential terms plus per-block storages.

The candidate Lyapunov function for a run is the generators' kinetic energy in
the frequency deviations, the line potential accumulated by the sine flow law
between the current and equilibrium angles, and one registered quadratic
storage per stateful controller block.  Storages are registered per
constructor, never inferred; a block without one disables monitoring for the
whole run (the caller decides how to flag that).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .controllers import ControllerBlock, MarginalGradient, TurbineGovernor
from .errors import NoStorageAvailable
from .network import BusKind, NetworkModel
from .passivity import storage_coefficients


def iter_block_assignments(blocks):
    """Canonical (bus_id, position, block) enumeration: sorted bus id, then list order."""
    for bus_id in sorted(blocks):
        for pos, block in enumerate(blocks[bus_id]):
            yield bus_id, pos, block


@dataclass(frozen=True)
class LyapunovBreakdown:
    """Components of the energy function at one state."""

    kinetic: float
    potential: float
    block_storage: tuple[float, ...]

    @property
    def total(self) -> float:
        return self.kinetic + self.potential + sum(self.block_storage)


def _storage_matrix(bus_id: int, block: ControllerBlock, bus_damping: float):
    """Quadratic storage form for a block, or None for (valid) zero storage."""
    if getattr(block, "inner", None) is not None:
        raise NoStorageAvailable(
            f"bus {bus_id}: delayed block has no certified storage function")
    if block.state_dim == 0:
        return None  # memoryless monotone blocks carry zero storage
    if isinstance(block, MarginalGradient):
        return np.array([[1.0]])
    if isinstance(block, TurbineGovernor):
        gain = block.sector_bound
        if not math.isfinite(gain) or gain >= bus_damping:
            raise NoStorageAvailable(
                f"bus {bus_id}: governor droop sector bound {gain} is not below "
                f"the local damping {bus_damping}; no quadratic storage is certified")
        beta, gamma = storage_coefficients(gain, bus_damping, block.tau_g, block.tau_b)
        return np.diag([gamma, beta])  # states are (valve, power)
    raise NoStorageAvailable(
        f"bus {bus_id}: no storage function registered for {type(block).__name__}")


class StorageEvaluator:
    """Evaluates the energy function along a run against a fixed equilibrium.

    ``equilibrium`` must expose omega_star (scalar), eta_star (per line) and
    block_states (aligned with iter_block_assignments).
    """

    def __init__(self, model: NetworkModel, blocks, equilibrium):
        self.omega_star = float(equilibrium.omega_star)
        self.eta_star = np.asarray(equilibrium.eta_star, dtype=float)
        self.sin_star = np.sin(self.eta_star)
        self.cos_star = np.cos(self.eta_star)
        self.b_sus = np.array([line.susceptance for line in model.lines])

        gen = [(i, b.inertia) for i, b in enumerate(model.buses)
               if b.kind is BusKind.GENERATOR]
        self.gen_positions = np.array([i for i, _ in gen], dtype=int)
        self.inertia = np.array([m for _, m in gen])

        damping_at: dict[int, float] = {}
        for bus_id, _, block in iter_block_assignments(blocks):
            coeff = getattr(getattr(block, "inner", block), "implied_damping", None)
            if coeff is not None:
                damping_at[bus_id] = damping_at.get(bus_id, 0.0) + coeff

        self.forms: list[tuple[int, np.ndarray, np.ndarray] | None] = []
        for k, (bus_id, _, block) in enumerate(iter_block_assignments(blocks)):
            matrix = _storage_matrix(bus_id, block, damping_at.get(bus_id, 0.0))
            if matrix is None:
                self.forms.append(None)
            else:
                x_star = np.asarray(equilibrium.block_states[k], dtype=float)
                self.forms.append((k, matrix, x_star))

    def value(self, eta: np.ndarray, omega_g: np.ndarray,
              block_states) -> LyapunovBreakdown:
        omega_g = np.asarray(omega_g, dtype=float)
        if omega_g.size != self.inertia.size:
            raise ValueError("omega_g must hold one entry per generator bus")
        dev = omega_g - self.omega_star
        kinetic = 0.5 * float(np.dot(self.inertia, dev * dev))
        potential = float(np.dot(
            self.b_sus,
            self.cos_star - np.cos(eta) - (eta - self.eta_star) * self.sin_star,
        ))
        storages = []
        for form in self.forms:
            if form is None:
                storages.append(0.0)
                continue
            k, matrix, x_star = form
            d = np.asarray(block_states[k], dtype=float) - x_star
            storages.append(0.5 * float(d @ matrix @ d))
        return LyapunovBreakdown(kinetic=kinetic, potential=potential,
                                 block_storage=tuple(storages))
