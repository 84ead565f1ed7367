"""Scenario-driven command line: simulate, solve, certify, and emit CSV/text reports.

All artifacts are rendered in memory and written only after a subcommand
finishes, so failed runs leave no partial files.  Numbers carry 12 significant
digits, making identical inputs produce byte-identical outputs.

Exit codes: 0 success, 2 schema error, 3 numeric failure,
4 certified-assumption violation (e.g. an equilibrium outside the security
region), 1 anything else (I/O).
"""

from __future__ import annotations

import argparse
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import analysis, dispatch, passivity, simulator
from . import scenario as scenario_mod
from .controllers import Role
from .energy import iter_block_assignments
from .errors import (
    AssumptionViolated,
    GridFreqError,
    NonFiniteState,
    SchemaError,
    SecurityViolated,
)

EXIT_OK = 0
EXIT_SCHEMA = 2
EXIT_NUMERIC = 3
EXIT_ASSUMPTION = 4


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.12g}"
    return str(x)


def _kv(pairs) -> str:
    return "".join(f"{k},{_fmt(v)}\n" for k, v in pairs)


def _load_scenario(args) -> scenario_mod.Scenario:
    if args.scenario is None:
        raise SchemaError("--scenario is required for this subcommand")
    return scenario_mod.load(args.scenario)


def _bus_damping(blocks, bus_id: int) -> float:
    total = 0.0
    for b_id, _, block in iter_block_assignments(blocks):
        if b_id != bus_id:
            continue
        inner = getattr(block, "inner", block)
        coeff = getattr(inner, "implied_damping", None)
        if coeff is not None:
            total += coeff
    return total


# --- subcommands -----------------------------------------------------------------

def _cmd_simulate(args):
    sc = _load_scenario(args)
    blocks = sc.build_blocks()
    equilibrium = analysis.find_equilibrium(sc.model, blocks) if sc.lyapunov else None
    traj = simulator.simulate(sc.model, blocks, sc.config, equilibrium=equilibrium)
    pairs = [("scenario", sc.name), ("t_end", traj.times[-1]), ("samples", traj.times.size)]
    for i, bus in enumerate(traj.bus_ids):
        pairs.append((f"omega_final_{bus}", traj.omega[-1, i]))
    if equilibrium is not None:
        pairs.append(("omega_star", equilibrium.omega_star))
        pairs.append(("max_final_deviation",
                      float(np.max(np.abs(traj.omega[-1] - equilibrium.omega_star)))))
    if traj.lyapunov is not None:
        rep = analysis.check_monotone(traj)
        pairs += [("lyapunov_max_increase", rep.max_increase),
                  ("lyapunov_total_decay", rep.total_decay),
                  ("lyapunov_monotone", rep.passed)]
    elif traj.lyapunov_note:
        pairs.append(("lyapunov_note", traj.lyapunov_note))
    return {
        f"{sc.name}_simulate.csv": simulator.trajectory_csv(traj),
        f"{sc.name}_simulate.txt": _kv(pairs),
    }


def _cmd_equilibrium(args):
    sc = _load_scenario(args)
    blocks = sc.build_blocks()
    eq = analysis.find_equilibrium(sc.model, blocks)
    pairs = [
        ("scenario", sc.name),
        ("omega_star", eq.omega_star),
        ("max_residual", eq.max_residual),
        ("max_abs_eta", float(np.max(np.abs(eq.eta_star))) if eq.eta_star.size else 0.0),
        ("security_margin", math.pi / 2 - (float(np.max(np.abs(eq.eta_star)))
                                           if eq.eta_star.size else 0.0)),
        ("tree_topology", eq.is_tree),
    ]
    if not eq.is_tree:
        pairs.append(("flow_note", "meshed network: reported flows are the canonical "
                                   "zero-seeded solution; they need not be unique"))
    bus_rows = ["bus,theta,supply,pM,dc,du"]
    pos = {b: i for i, b in enumerate(eq.bus_ids)}
    for b in eq.bus_ids:
        i = pos[b]
        bus_rows.append(",".join([
            str(b), _fmt(eq.theta[i]), _fmt(eq.supply[i]),
            _fmt(eq.pm_star[i]), _fmt(eq.dc_star[i]), _fmt(eq.du_star[i])]))
    line_rows = ["from,to,eta,flow"]
    for k, (s, d) in enumerate(eq.line_keys):
        line_rows.append(",".join([str(s), str(d), _fmt(eq.eta_star[k]),
                                   _fmt(eq.flows_star[k])]))
    return {
        f"{sc.name}_equilibrium.txt": _kv(pairs),
        f"{sc.name}_equilibrium.csv": "\n".join(bus_rows) + "\n",
        f"{sc.name}_equilibrium_lines.csv": "\n".join(line_rows) + "\n",
    }


def _cmd_oslc(args):
    sc = _load_scenario(args)
    blocks = sc.build_blocks()
    problem = scenario_mod.induced_dispatch_problem(sc.model, blocks)
    solution = dispatch.solve(problem)
    report = dispatch.verify_kkt(problem, solution)
    objective = dispatch.objective_value(problem, solution.generation,
                                         solution.demand, solution.damping_response)
    pairs = [
        ("scenario", sc.name),
        ("nu", solution.nu),
        ("objective", objective),
        ("degenerate_multiplier", solution.degenerate_multiplier),
        ("kkt_max_residual", report.max_residual),
        ("kkt_passed", report.passed),
    ]
    rows = ["kind,bus,value,multiplier_plus,multiplier_minus"]
    for k, term in enumerate(problem.generators):
        rows.append(",".join(["generation", str(term.bus),
                              _fmt(solution.generation[k]),
                              _fmt(solution.lambda_plus[k]),
                              _fmt(solution.lambda_minus[k])]))
    for k, term in enumerate(problem.demands):
        rows.append(",".join(["demand", str(term.bus),
                              _fmt(solution.demand[k]),
                              _fmt(solution.mu_plus[k]),
                              _fmt(solution.mu_minus[k])]))
    for k, term in enumerate(problem.dampings):
        rows.append(",".join(["damping_response", str(term.bus),
                              _fmt(solution.damping_response[k]), "0", "0"]))
    return {
        f"{sc.name}_oslc.txt": _kv(pairs),
        f"{sc.name}_oslc.csv": "\n".join(rows) + "\n",
    }


def _cmd_passivity(args):
    sc = _load_scenario(args)
    blocks = sc.build_blocks()
    omega_star = analysis.equilibrium_frequency(sc.model, blocks)
    u_eq = -omega_star
    pairs = [("scenario", sc.name), ("omega_star", omega_star)]
    rows = ["scope,margin,worst_frequency,passed,note"]
    for bus_id in sorted(blocks):
        tfs = []
        note = ""
        stateful = 0
        for _, _, block in iter_block_assignments({bus_id: blocks[bus_id]}):
            tfs.append(passivity.linearize(block, u_eq))
            inner = getattr(block, "inner", block)
            if inner.state_dim:
                stateful += 1
        if stateful > 1:
            note = "multiple dynamic blocks share this bus; only their sum is certified"

        def bus_response(w, _tfs=tuple(tfs)):
            total = np.zeros_like(np.asarray(w, dtype=float), dtype=complex)
            for tf in _tfs:
                total = total + tf.response(w)
            return total

        margin, w_star = passivity.scan_response(bus_response)
        rows.append(",".join([
            f"bus_{bus_id}", _fmt(margin), _fmt(w_star), _fmt(margin > 0.0), note]))
        pairs.append((f"bus_{bus_id}_margin", margin))
    for bus_id, _, block in iter_block_assignments(blocks):
        inner = getattr(block, "inner", block)
        if hasattr(inner, "tau_g"):
            tg = passivity.tg_min_real(inner.tau_g, inner.tau_b)
            ratio = passivity.max_gain_ratio(inner.tau_b / inner.tau_g)
            pairs += [
                (f"bus_{bus_id}_tg_min_real", tg.value),
                (f"bus_{bus_id}_tg_min_real_frequency", tg.frequency),
                (f"bus_{bus_id}_tg_max_gain_ratio", ratio),
            ]
    return {
        f"{sc.name}_passivity.txt": _kv(pairs),
        f"{sc.name}_passivity.csv": "\n".join(rows) + "\n",
    }


def _cmd_compare_demand(args):
    sc = _load_scenario(args)
    blocks = sc.build_blocks()
    omega_with, omega_without = analysis.steady_state_comparison(sc.model, blocks)
    drop = 0.0
    if omega_without != 0.0:
        drop = (abs(omega_without) - abs(omega_with)) / abs(omega_without) * 100.0
    table = _kv([("with", omega_with), ("without", omega_without),
                 ("drop_percent", drop)])
    return {
        f"{sc.name}_compare-demand.csv": table,
        f"{sc.name}_compare-demand.txt": _kv([
            ("scenario", sc.name),
            ("omega_star_with_demand_control", omega_with),
            ("omega_star_without_demand_control", omega_without),
            ("deviation_drop_percent", drop),
        ]),
    }


def _sweep_cell(sc, law: str, delay: float):
    blocks = sc.build_blocks(law_override=law)
    try:
        config = replace(sc.config, input_delay=delay)
    except ValueError as exc:
        raise SchemaError(f"delay {delay}: {exc}") from exc
    omega_star = analysis.equilibrium_frequency(sc.model, blocks)
    outcome, fail_time, final_err = "converged", "", ""
    try:
        traj = simulator.simulate(sc.model, blocks, config)
        err = float(np.max(np.abs(traj.omega[-1] - omega_star)))
        final_err = err
        if err > 1e-3:
            outcome = "not_settled"
    except NonFiniteState as exc:
        outcome = "diverged"
        fail_time = exc.time if exc.time is not None else ""

    verdicts = []
    for bus_id, _, block in iter_block_assignments(blocks):
        if block.role is not Role.CONTROLLABLE_DEMAND:
            continue
        damping = _bus_damping(blocks, bus_id)
        rep = passivity.delay_passivity_check(
            getattr(block, "inner", block), -omega_star, delay, damping,
            gain=sc.check_gain)
        verdicts.append(rep)
    margin = min((v.margin for v in verdicts), default=float("nan"))
    passed = all(v.passed for v in verdicts) if verdicts else True
    agrees = passed == (outcome == "converged")
    return [law, _fmt(delay), outcome, _fmt(fail_time) if fail_time != "" else "",
            _fmt(final_err) if final_err != "" else "", _fmt(margin),
            _fmt(passed), _fmt(agrees)]


def _cmd_delay_sweep(args):
    sc = _load_scenario(args)
    delays = sc.sweep_delays
    if args.delays:
        delays = tuple(float(v) for v in args.delays.split(","))
    cells = [(law, delay) for law in ("static", "dynamic") for delay in delays]
    workers = max(1, args.threads)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda c: _sweep_cell(sc, *c), cells))
    else:
        results = [_sweep_cell(sc, *cell) for cell in cells]
    rows = ["law,delay,outcome,fail_time,final_error,check_margin,check_passed,agrees"]
    rows += [",".join(r) for r in results]
    summary = [("scenario", sc.name), ("cells", len(cells)),
               ("all_verdicts_agree", all(r[-1] == "true" for r in results))]
    return {
        f"{sc.name}_delay-sweep.csv": "\n".join(rows) + "\n",
        f"{sc.name}_delay-sweep.txt": _kv(summary),
    }


def _parse_floats(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in text.split(","))
    except ValueError as exc:
        raise SchemaError(f"expected comma-separated numbers, got {text!r}") from exc


def _cmd_passivity_check(args):
    if args.num is None or args.den is None:
        raise SchemaError("--num and --den are required for passivity-check")
    tf = passivity.TransferFunction(
        num=_parse_floats(args.num),
        den=_parse_floats(args.den),
        input_delay=args.delay,
        feedthrough=args.feedthrough,
    )
    if args.gain != 1.0:
        tf = tf.scaled(args.gain)
    report = passivity.isp_margin(tf, w_max=args.w_max, n_points=args.n_points,
                                  w_min=args.w_min)
    sys.stdout.write(_kv([
        ("margin", report.margin),
        ("worst_frequency", report.worst_frequency),
        ("stable", report.stable),
        ("passed", report.passed),
    ]))
    artifacts = {}
    if args.samples:
        grid = np.logspace(math.log10(args.w_min), math.log10(args.w_max), args.samples)
        vals = tf.response(grid)
        rows = ["frequency,real,imag"]
        rows += [f"{_fmt(w)},{_fmt(v.real)},{_fmt(v.imag)}" for w, v in zip(grid, vals)]
        artifacts["passivity-check.csv"] = "\n".join(rows) + "\n"
    return artifacts


_HANDLERS = {
    "simulate": _cmd_simulate,
    "equilibrium": _cmd_equilibrium,
    "oslc": _cmd_oslc,
    "passivity": _cmd_passivity,
    "compare-demand": _cmd_compare_demand,
    "delay-sweep": _cmd_delay_sweep,
    "passivity-check": _cmd_passivity_check,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gridfreq",
        description="Primary frequency control: simulation, allocation, and certificates.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--scenario", help="path to a scenario JSON file")
        p.add_argument("--out", default=".", help="output directory for artifacts")
        p.add_argument("--seed", type=int, default=0,
                       help="seed for randomized property suites (unused by "
                            "deterministic subcommands)")
        p.add_argument("--threads", type=int, default=1,
                       help="worker threads for sweeps")

    for name, help_text in [
        ("simulate", "integrate the scenario and emit the trajectory"),
        ("equilibrium", "solve and verify the steady state"),
        ("oslc", "solve the induced optimal supply/load allocation"),
        ("passivity", "frequency-domain margins of every bus response"),
        ("compare-demand", "steady-state deviation with vs. without demand control"),
        ("delay-sweep", "delay grid x {static, dynamic} demand law contrast"),
    ]:
        p = sub.add_parser(name, help=help_text)
        common(p)
        if name == "delay-sweep":
            p.add_argument("--delays", help="comma-separated delays in seconds "
                                            "(default: scenario's delay_check.delays)")

    p = sub.add_parser("passivity-check",
                       help="real-part margin of an explicit transfer function")
    common(p)
    p.add_argument("--num", help="numerator coefficients, highest order first")
    p.add_argument("--den", help="denominator coefficients, highest order first")
    p.add_argument("--delay", type=float, default=0.0)
    p.add_argument("--feedthrough", type=float, default=0.0)
    p.add_argument("--gain", type=float, default=1.0)
    p.add_argument("--w-min", type=float, default=1e-3)
    p.add_argument("--w-max", type=float, default=1e4)
    p.add_argument("--n-points", type=int, default=2048)
    p.add_argument("--samples", type=int, default=0,
                   help="emit this many response samples as CSV")
    return parser


def _report_error(code: int, exc: Exception) -> None:
    sys.stderr.write(f"gridfreq: error code={code} type={type(exc).__name__} "
                     f"msg={exc}\n")


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handler = _HANDLERS[args.command]
    try:
        artifacts = handler(args)
    except SchemaError as exc:
        _report_error(EXIT_SCHEMA, exc)
        return EXIT_SCHEMA
    except (SecurityViolated, AssumptionViolated) as exc:
        _report_error(EXIT_ASSUMPTION, exc)
        return EXIT_ASSUMPTION
    except GridFreqError as exc:
        _report_error(EXIT_NUMERIC, exc)
        return EXIT_NUMERIC
    except OSError as exc:
        _report_error(1, exc)
        return 1
    try:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        for name, text in artifacts.items():
            (out / name).write_text(text)
    except OSError as exc:
        _report_error(1, exc)
        return 1
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
