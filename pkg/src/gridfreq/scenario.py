"""Versioned JSON scenario files: network, controller blocks, and run settings.

Scenario files are the fixtures the command-line tools and the golden tests
run against, so parsing is strict: unknown fields are rejected, every value is
type-checked, and constructor invariant violations surface as schema errors
naming the offending entry.  A free-form "notes" string is allowed at any
level for labeling artifact-chosen defaults.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .controllers import (
    ControllerBlock,
    Role,
    damping_load,
    deadband_droop,
    dynamic_marginal,
    linear_droop,
    static_marginal,
    turbine_governor,
)
from .costs import ConvexCost, KinkedQuadraticCost, QuadraticCost
from .dispatch import DampingTerm, DemandTerm, DispatchProblem, GeneratorTerm
from .energy import iter_block_assignments
from .errors import GridFreqError, SchemaError
from .network import Bus, BusKind, Line, NetworkModel, validate_topology
from .simulator import SimConfig, with_delay

SCHEMA_VERSION = 1

_ROLES = {"generation": Role.GENERATION, "demand": Role.CONTROLLABLE_DEMAND}


def _check_keys(obj: dict, context: str, required: dict, optional: dict) -> None:
    if not isinstance(obj, dict):
        raise SchemaError(f"{context}: expected an object, got {type(obj).__name__}")
    allowed = set(required) | set(optional) | {"notes"}
    unknown = sorted(set(obj) - allowed)
    if unknown:
        raise SchemaError(f"{context}: unknown fields {unknown}")
    missing = sorted(set(required) - set(obj))
    if missing:
        raise SchemaError(f"{context}: missing required fields {missing}")
    for key, kinds in {**required, **optional}.items():
        if key in obj and not isinstance(obj[key], kinds):
            raise SchemaError(
                f"{context}.{key}: expected {kinds}, got {type(obj[key]).__name__}")
    if "notes" in obj and not isinstance(obj["notes"], str):
        raise SchemaError(f"{context}.notes: must be a string")


_NUM = (int, float)


def _parse_cost(spec: dict, context: str) -> ConvexCost:
    _check_keys(spec, context, required={"kind": str},
                optional={"curvature": _NUM, "bounds": list, "tilt": _NUM,
                          "jump": _NUM, "kink": _NUM})
    bounds = spec.get("bounds")
    if bounds is not None:
        if len(bounds) != 2 or not all(isinstance(v, _NUM) for v in bounds):
            raise SchemaError(f"{context}.bounds: expected [lo, hi]")
        bounds = (float(bounds[0]), float(bounds[1]))
    else:
        bounds = (float("-inf"), float("inf"))
    try:
        if spec["kind"] == "quadratic":
            return QuadraticCost(curvature=float(spec.get("curvature", 1.0)),
                                 bounds=bounds, tilt=float(spec.get("tilt", 0.0)))
        if spec["kind"] == "kinked":
            return KinkedQuadraticCost(
                jump=float(spec.get("jump", 0.0)),
                curvature=float(spec.get("curvature", 1.0)),
                kink=float(spec.get("kink", 0.0)),
                tilt=float(spec.get("tilt", 0.0)),
                bounds=bounds)
    except GridFreqError as exc:
        raise SchemaError(f"{context}: {exc}") from exc
    raise SchemaError(f"{context}.kind: unknown cost kind {spec['kind']!r}")


def _parse_droop(spec: dict, context: str):
    _check_keys(spec, context, required={"type": str},
                optional={"gain": _NUM, "limit": _NUM,
                          "lower": _NUM, "upper": _NUM, "slope": _NUM})
    try:
        if spec["type"] == "linear":
            return linear_droop(float(spec["gain"]),
                                float(spec["limit"]) if "limit" in spec else None)
        if spec["type"] == "deadband":
            return deadband_droop(float(spec["lower"]), float(spec["upper"]),
                                  float(spec["slope"]))
    except (GridFreqError, KeyError) as exc:
        raise SchemaError(f"{context}: {exc}") from exc
    raise SchemaError(f"{context}.type: unknown droop type {spec['type']!r}")


def _build_block(spec: dict, context: str, law_override: str | None) -> ControllerBlock:
    _check_keys(spec, context,
                required={"bus": int, "type": str},
                optional={"role": str, "cost": dict, "coefficient": _NUM,
                          "lower": _NUM, "upper": _NUM, "slope": _NUM,
                          "tau_g": _NUM, "tau_b": _NUM, "droop": dict,
                          "delay": _NUM})
    kind = spec["type"]
    role_name = spec.get("role", "demand")
    if role_name not in _ROLES:
        raise SchemaError(f"{context}.role: expected one of {sorted(_ROLES)}")
    role = _ROLES[role_name]
    try:
        if kind in ("static_marginal", "dynamic_marginal"):
            cost = _parse_cost(spec["cost"], f"{context}.cost")
            law = kind
            if law_override is not None and role is Role.CONTROLLABLE_DEMAND:
                law = f"{law_override}_marginal"
            block = (static_marginal(cost, role) if law == "static_marginal"
                     else dynamic_marginal(cost, role))
        elif kind == "deadband":
            block = deadband_droop(float(spec["lower"]), float(spec["upper"]),
                                   float(spec["slope"]), role)
        elif kind == "damping":
            block = damping_load(float(spec["coefficient"]))
        elif kind == "turbine_governor":
            block = turbine_governor(float(spec["tau_g"]), float(spec["tau_b"]),
                                     _parse_droop(spec["droop"], f"{context}.droop"))
        else:
            raise SchemaError(f"{context}.type: unknown block type {kind!r}")
    except SchemaError:
        raise
    except (GridFreqError, KeyError, ValueError) as exc:
        raise SchemaError(f"{context}: {exc}") from exc
    delay = float(spec.get("delay", 0.0))
    if delay:
        block = with_delay(block, delay)
    return block


@dataclass
class Scenario:
    """A loaded scenario: validated model plus block specs and run settings."""

    name: str
    model: NetworkModel
    block_specs: list[dict]
    config: SimConfig
    lyapunov: bool
    comparison: bool
    check_gain: float
    sweep_delays: tuple[float, ...]
    raw: dict

    def build_blocks(self, law_override: str | None = None) -> dict[int, tuple[ControllerBlock, ...]]:
        """Fresh block instances; ``law_override`` swaps controllable-demand marginal laws."""
        if law_override not in (None, "static", "dynamic"):
            raise ValueError(f"unknown law override {law_override!r}")
        table: dict[int, list[ControllerBlock]] = {}
        for i, spec in enumerate(self.block_specs):
            block = _build_block(spec, f"blocks[{i}]", law_override)
            table.setdefault(spec["bus"], []).append(block)
        return {bus: tuple(blocks) for bus, blocks in table.items()}


def from_dict(data: dict, name_hint: str = "<memory>") -> Scenario:
    _check_keys(data, "scenario",
                required={"schema_version": int, "name": str, "network": dict,
                          "blocks": list, "sim": dict},
                optional={"analysis": dict, "delay_check": dict})
    if data["schema_version"] != SCHEMA_VERSION:
        raise SchemaError(
            f"scenario.schema_version: expected {SCHEMA_VERSION}, got {data['schema_version']}")

    net = data["network"]
    _check_keys(net, "network", required={"buses": list, "lines": list}, optional={})
    buses = []
    for i, b in enumerate(net["buses"]):
        _check_keys(b, f"network.buses[{i}]",
                    required={"id": int, "kind": str},
                    optional={"inertia": _NUM, "load_step": _NUM})
        if b["kind"] not in ("generator", "load"):
            raise SchemaError(f"network.buses[{i}].kind: expected generator or load")
        try:
            buses.append(Bus(id=b["id"], kind=BusKind(b["kind"]),
                             inertia=float(b.get("inertia", 0.0)),
                             load_step=float(b.get("load_step", 0.0))))
        except ValueError as exc:
            raise SchemaError(f"network.buses[{i}]: {exc}") from exc
    lines = []
    for i, l in enumerate(net["lines"]):
        _check_keys(l, f"network.lines[{i}]",
                    required={"from": int, "to": int, "susceptance": _NUM},
                    optional={"nominal_flow": _NUM})
        try:
            lines.append(Line(src=l["from"], dst=l["to"],
                              susceptance=float(l["susceptance"]),
                              nominal_flow=float(l.get("nominal_flow", 0.0))))
        except ValueError as exc:
            raise SchemaError(f"network.lines[{i}]: {exc}") from exc
    model = NetworkModel(buses=tuple(buses), lines=tuple(lines))
    try:
        validate_topology(model)
    except GridFreqError as exc:
        raise SchemaError(f"network: {exc}") from exc

    sim = data["sim"]
    _check_keys(sim, "sim",
                required={"dt": _NUM, "t_end": _NUM},
                optional={"control_hold": _NUM, "input_delay": _NUM,
                          "algebraic_tol": _NUM, "algebraic_max_iter": int,
                          "nonfinite_guard": _NUM,
                          "load_inertia_regularization": _NUM})
    try:
        config = SimConfig(
            dt=float(sim["dt"]),
            t_end=float(sim["t_end"]),
            control_hold=float(sim.get("control_hold", 0.0)),
            input_delay=float(sim.get("input_delay", 0.0)),
            algebraic_tol=float(sim.get("algebraic_tol", 1e-9)),
            algebraic_max_iter=int(sim.get("algebraic_max_iter", 60)),
            nonfinite_guard=float(sim.get("nonfinite_guard", 1e6)),
            load_inertia_regularization=float(sim.get("load_inertia_regularization", 0.0)),
        )
    except ValueError as exc:
        raise SchemaError(f"sim: {exc}") from exc

    analysis_cfg = data.get("analysis", {})
    _check_keys(analysis_cfg, "analysis", required={},
                optional={"lyapunov": bool, "comparison": bool})
    delay_cfg = data.get("delay_check", {})
    _check_keys(delay_cfg, "delay_check", required={},
                optional={"gain": _NUM, "delays": list})
    sweep = delay_cfg.get("delays", [0.0, 0.05])
    if not all(isinstance(v, _NUM) for v in sweep):
        raise SchemaError("delay_check.delays: expected a list of numbers")

    if not isinstance(data["blocks"], list) or not data["blocks"]:
        raise SchemaError("blocks: expected a non-empty list")
    scenario = Scenario(
        name=data["name"],
        model=model,
        block_specs=list(data["blocks"]),
        config=config,
        lyapunov=bool(analysis_cfg.get("lyapunov", True)),
        comparison=bool(analysis_cfg.get("comparison", False)),
        check_gain=float(delay_cfg.get("gain", 1.0)),
        sweep_delays=tuple(float(v) for v in sweep),
        raw=data,
    )
    # building once validates every block spec against its constructor invariants
    blocks = scenario.build_blocks()
    for bus_id in blocks:
        if not model.has_bus(bus_id):
            raise SchemaError(f"blocks: bus {bus_id} does not exist in the network")
    return scenario


def load(path) -> Scenario:
    """Load and validate a scenario file."""
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: invalid JSON: {exc}") from exc
    return from_dict(data, name_hint=str(path))


def induced_dispatch_problem(model: NetworkModel, blocks) -> DispatchProblem:
    """Allocation problem implied by the blocks' static characteristics."""
    generators = []
    demands = []
    dampings = []
    for bus_id, _, block in iter_block_assignments(blocks):
        inner = getattr(block, "inner", block)
        if inner.role is Role.GENERATION:
            cost = inner.implied_cost
            if cost is None:
                raise ValueError(
                    f"bus {bus_id}: generation block has no implied cost")
            generators.append(GeneratorTerm(bus_id, cost))
        elif inner.role is Role.CONTROLLABLE_DEMAND:
            demands.append(DemandTerm(bus_id, inner.implied_cost))
        else:
            dampings.append(DampingTerm(bus_id, inner.implied_damping))
    load_steps = tuple((b.id, b.load_step) for b in model.buses if b.load_step != 0.0)
    return DispatchProblem(generators=tuple(generators), demands=tuple(demands),
                           dampings=tuple(dampings), load_steps=load_steps)


def shipped_path(name: str) -> Path:
    """Filesystem path of a scenario shipped with the package."""
    candidate = resources.files("gridfreq").joinpath("scenarios", f"{name}.json")
    with resources.as_file(candidate) as p:
        if not p.exists():
            raise SchemaError(f"no shipped scenario named {name!r}")
        return Path(p)


def shipped_names() -> tuple[str, ...]:
    folder = resources.files("gridfreq").joinpath("scenarios")
    return tuple(sorted(p.name[:-5] for p in folder.iterdir() if p.name.endswith(".json")))
