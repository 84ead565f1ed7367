"""Network model: buses, directed lossless lines, and per-bus power balance.

All powers are deviations from a nominal operating point, in per-unit on a
common base.  Line direction is an arbitrary bookkeeping choice; every result
is invariant under flipping a line provided its angle and nominal flow are
negated with it.
"""

from __future__ import annotations

import enum
import math
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field

from .errors import DanglingEndpoint, DisconnectedGraph, DuplicateEdge, UnknownBus


class BusKind(enum.Enum):
    GENERATOR = "generator"
    LOAD = "load"


@dataclass(frozen=True)
class Bus:
    """A network node.

    Generator buses carry rotating inertia (p.u.*s^2) and obey a swing
    equation; load buses are inertialess and enforce instantaneous power
    balance.  ``load_step`` is the constant uncontrollable demand step the
    scenario applies at t=0 (may be negative).
    """

    id: int
    kind: BusKind
    inertia: float = 0.0
    load_step: float = 0.0

    def __post_init__(self):
        if self.kind is BusKind.GENERATOR and not self.inertia > 0:
            raise ValueError(f"generator bus {self.id} needs inertia > 0, got {self.inertia}")
        if self.kind is BusKind.LOAD and self.inertia != 0.0:
            raise ValueError(f"load bus {self.id} must not carry inertia")


@dataclass(frozen=True)
class Line:
    """Directed lossless line with susceptance > 0 and a nominal (pre-step) flow."""

    src: int
    dst: int
    susceptance: float
    nominal_flow: float = 0.0

    def __post_init__(self):
        if not self.susceptance > 0:
            raise ValueError(f"line ({self.src},{self.dst}) needs susceptance > 0")
        if self.src == self.dst:
            raise ValueError(f"self-loop at bus {self.src}")

    @property
    def key(self) -> tuple[int, int]:
        return (self.src, self.dst)


@dataclass(frozen=True)
class NetworkModel:
    """Immutable graph of buses and lines; safe to share once validated."""

    buses: tuple[Bus, ...]
    lines: tuple[Line, ...]
    base_mva: float = 100.0  # metadata only; everything is per-unit

    _index: Mapping[int, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "buses", tuple(self.buses))
        object.__setattr__(self, "lines", tuple(self.lines))
        object.__setattr__(self, "_index", {b.id: i for i, b in enumerate(self.buses)})

    def bus(self, bus_id: int) -> Bus:
        try:
            return self.buses[self._index[bus_id]]
        except KeyError:
            raise UnknownBus(f"no bus with id {bus_id}") from None

    def has_bus(self, bus_id: int) -> bool:
        return bus_id in self._index

    @property
    def bus_ids(self) -> tuple[int, ...]:
        return tuple(b.id for b in self.buses)

    @property
    def generator_ids(self) -> tuple[int, ...]:
        return tuple(b.id for b in self.buses if b.kind is BusKind.GENERATOR)

    @property
    def load_ids(self) -> tuple[int, ...]:
        return tuple(b.id for b in self.buses if b.kind is BusKind.LOAD)

    @property
    def is_tree(self) -> bool:
        return len(self.lines) == len(self.buses) - 1

    def incident_lines(self, bus_id: int) -> tuple[tuple[int, int], ...]:
        """(line index, sign) pairs: +1 when the line leaves the bus, -1 when it enters."""
        out = []
        for k, line in enumerate(self.lines):
            if line.src == bus_id:
                out.append((k, +1))
            elif line.dst == bus_id:
                out.append((k, -1))
        return tuple(out)


def validate_topology(model: NetworkModel) -> None:
    """Check uniqueness, endpoint existence, antiparallel-edge and connectivity invariants.

    Raises the specific error naming the offending element; returns None when
    the model is structurally sound.
    """
    seen_ids: set[int] = set()
    for bus in model.buses:
        if bus.id in seen_ids:
            raise DuplicateEdge(f"duplicate bus id {bus.id}")
        seen_ids.add(bus.id)

    seen_pairs: set[frozenset[int]] = set()
    for line in model.lines:
        for endpoint in (line.src, line.dst):
            if endpoint not in seen_ids:
                raise DanglingEndpoint(
                    f"line ({line.src},{line.dst}) references missing bus {endpoint}")
        pair = frozenset((line.src, line.dst))
        if pair in seen_pairs:
            raise DuplicateEdge(
                f"more than one line between buses {line.src} and {line.dst} "
                "(antiparallel or repeated edges are not allowed)")
        seen_pairs.add(pair)

    if not model.buses:
        raise DisconnectedGraph("empty network")

    # breadth-first search from the first bus
    adjacency: dict[int, list[int]] = {b.id: [] for b in model.buses}
    for line in model.lines:
        adjacency[line.src].append(line.dst)
        adjacency[line.dst].append(line.src)
    reached = {model.buses[0].id}
    frontier = [model.buses[0].id]
    while frontier:
        nxt = []
        for u in frontier:
            for v in adjacency[u]:
                if v not in reached:
                    reached.add(v)
                    nxt.append(v)
        frontier = nxt
    missing = sorted(set(adjacency) - reached)
    if missing:
        raise DisconnectedGraph(f"buses unreachable from bus {model.buses[0].id}: {missing}")


def line_flow(line: Line, eta: float) -> float:
    """Power-flow deviation through a line at phase difference eta (radians)."""
    return line.susceptance * math.sin(eta) - line.nominal_flow


def bus_mismatch(model: NetworkModel, bus_id: int, supply: float,
                 flows: Sequence[float]) -> float:
    """Signed power balance at a bus: -load_step + supply - outflows + inflows.

    ``flows`` is aligned with ``model.lines``.  For a generator bus the result
    equals inertia times the frequency derivative; for a load bus it must be
    driven to zero by the algebraic frequency solve.
    """
    bus = model.bus(bus_id)
    total = -bus.load_step + supply
    for k, sign in model.incident_lines(bus_id):
        total -= sign * flows[k]
    return total


def flip_all_lines(model: NetworkModel) -> NetworkModel:
    """Reverse every line direction, negating nominal flows accordingly."""
    flipped = tuple(
        Line(src=l.dst, dst=l.src, susceptance=l.susceptance, nominal_flow=-l.nominal_flow)
        for l in model.lines
    )
    return NetworkModel(buses=model.buses, lines=flipped, base_mva=model.base_mva)
