"""Command-line workflow: simulate / equilibrium / stability / limits / sweep-delay.

Exit codes: 0 success; 2 invalid input (config, ranges, units); 3 numerical
failure; 4 divergence detected in a run whose delay-free stability analysis
asserted stability.
"""

from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import config as cfg
from .errors import MtdcError, NumericalError, SearchRangeError, ValidationError
from .reporting import (
    ResultBundle,
    emit_plot_script,
    format_report,
    render_figures,
    write_report,
    write_trajectory_csv,
)
from .simulator import run_scenario
from .stability import (
    classify_diverged,
    critical_delay_search,
    distributed_equilibrium,
    droop_equilibrium,
    droop_limits,
    hurwitz_check,
    stability_report,
    voltage_bound,
)

__all__ = ["cli_main", "main"]

DEFAULT_SWEEP_TAUS = (0.0, 0.1, 0.22)
DEFAULT_LIMIT_SCALES = (1e-6, 1e-4, 1e-2, 1.0, 1e2, 1e4, 1e6)


def _add_model_args(parser: argparse.ArgumentParser) -> None:
    group = parser.add_mutually_exclusive_group(required=True)
    group.add_argument("--preset", help="bundled configuration name (see 'preset')")
    group.add_argument("--config", help="path to a YAML configuration file")
    parser.add_argument(
        "--controller",
        choices=("droop", "distributed"),
        help="override the controller kind from the config",
    )


def _load_document(args) -> cfg.ConfigDocument:
    doc = cfg.preset(args.preset) if args.preset else cfg.parse_config(args.config)
    return doc.with_overrides(kind=args.controller, tau=getattr(args, "tau", None))


def _settle_time(times, deviation, tol):
    """First sample time after which the deviation stays within tol."""
    above = deviation > tol
    if not above.any():
        return float(times[0])
    last = np.where(above)[0][-1]
    if last + 1 >= len(times):
        return None
    return float(times[last + 1])


def _equilibrium_for(doc: cfg.ConfigDocument, injections):
    builder = doc.system_builder()
    system = builder(np.asarray(injections, dtype=float))
    if system.layout == "droop":
        return system, droop_equilibrium(system)
    return system, distributed_equilibrium(system)


def _emit(lines, machine, report):
    if machine:
        sys.stdout.write(format_report(report))
    else:
        for line in lines:
            print(line)


def _vector(values):
    return "[" + ", ".join(f"{v:.6g}" for v in values) + "]"


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def _cmd_simulate(args) -> int:
    doc = _load_document(args)
    scenario = doc.build_scenario(tau=args.tau, horizon=args.horizon)
    builder = doc.system_builder()
    controller = doc.build_controller()
    if controller.kind == "distributed":
        controller = doc.with_overrides(tau=scenario.delay).build_controller()

    system_pre, eq_pre = _equilibrium_for(doc, scenario.pre_step_injections)
    system_post, eq_post = _equilibrium_for(doc, scenario.post_step_injections)
    abscissa, hurwitz = hurwitz_check(system_post.state_matrix)

    trajectory = run_scenario(builder, controller, scenario)
    diverged = classify_diverged(trajectory, eq_post.V_eq, scenario.step_time)

    mask = trajectory.times >= scenario.step_time - 1e-12
    t_post = trajectory.times[mask]
    dev_v = np.abs(trajectory.V[mask] - eq_post.V_eq).max(axis=1)
    dev_u = np.abs(trajectory.u[mask] - eq_post.u_eq).max(axis=1)
    peak_v = float(dev_v.max()) if dev_v.size else 0.0
    u_step = float(np.abs(eq_post.u_eq - eq_pre.u_eq).max())
    v_settle = _settle_time(t_post, dev_v, 0.10 * peak_v) if peak_v > 0 else float(t_post[0])
    u_settle = _settle_time(t_post, dev_u, max(0.01 * u_step, 1e-12))

    os.makedirs(args.out_dir, exist_ok=True)
    csv_path = os.path.join(args.out_dir, "trajectory.csv")
    write_trajectory_csv(trajectory, csv_path)

    label = f"{doc.controller.kind}, tau={scenario.delay:g} s"
    report = {
        "controller.kind": doc.controller.kind,
        "scenario.tau_s": scenario.delay,
        "scenario.horizon_s": scenario.horizon,
        "stability.spectral_abscissa": abscissa,
        "stability.hurwitz": hurwitz,
        "run.diverged": diverged,
        "run.peak_voltage_deviation_V": peak_v,
        "run.voltage_settle_time_s": -1.0 if v_settle is None else v_settle,
        "run.current_settle_time_s": -1.0 if u_settle is None else u_settle,
        "files.trajectory_csv": csv_path,
    }
    for i, v in enumerate(eq_post.V_eq, start=1):
        report[f"equilibrium.V_eq_{i}_V"] = v
    for i, u in enumerate(eq_post.u_eq, start=1):
        report[f"equilibrium.u_eq_{i}_A"] = u

    bundle = ResultBundle(
        vnom=doc.controller.vnom, entries=((label, csv_path),), report=report
    )
    script_path = os.path.join(args.out_dir, "plot_results.py")
    figure_path = os.path.join(args.out_dir, "step_response.png")
    emit_plot_script(bundle, script_path)
    render_figures(bundle, figure_path)
    write_report(report, os.path.join(args.out_dir, "report.kv"))

    settled_v = "never" if v_settle is None else f"{v_settle:.1f} s"
    settled_u = "never" if u_settle is None else f"{u_settle:.1f} s"
    lines = [
        f"run: {label}, horizon {scenario.horizon:g} s",
        f"spectral abscissa {abscissa:.6g} 1/s (Hurwitz: {hurwitz})",
        f"diverged: {diverged}",
        f"settled: voltages {settled_v} (within 10% of peak deviation), "
        f"currents {settled_u} (within 1% of the current step)",
        f"equilibrium V_eq (V): {_vector(eq_post.V_eq)}",
        f"equilibrium u_eq (A): {_vector(eq_post.u_eq)}",
        f"wrote {csv_path}, {script_path}, {figure_path}",
    ]
    _emit(lines, args.machine_readable, report)

    if diverged and scenario.delay == 0.0 and hurwitz:
        print("error: delay-free run diverged although the loop is Hurwitz", file=sys.stderr)
        return 4
    return 0


def _cmd_equilibrium(args) -> int:
    doc = _load_document(args)
    injections = (
        doc.scenario.pre_step_injections if args.pre_step else doc.scenario.post_step_injections
    )
    system, eq = _equilibrium_for(doc, injections)

    report = {"controller.kind": doc.controller.kind}
    for i, v in enumerate(eq.V_eq, start=1):
        report[f"equilibrium.V_eq_{i}_V"] = v
    for i, u in enumerate(eq.u_eq, start=1):
        report[f"equilibrium.u_eq_{i}_A"] = u
    for i, v in enumerate(eq.I_tot, start=1):
        report[f"equilibrium.I_tot_{i}_A"] = v
    lines = [
        f"{doc.controller.kind} equilibrium for injections {_vector(injections)} A",
        f"V_eq (V): {_vector(eq.V_eq)}",
        f"u_eq (A): {_vector(eq.u_eq)}",
        f"I_tot (A): {_vector(eq.I_tot)}",
    ]
    if eq.k is not None:
        report["equilibrium.k_V"] = eq.k
        lines.append(f"shared-current scalar k: {eq.k:.6g} V")
    if system.layout == "distributed":
        lhs, rhs, holds = voltage_bound(system, eq)
        report["bound.lhs_V"] = lhs
        report["bound.rhs_V"] = rhs
        report["bound.holds"] = holds
        lines.append(f"voltage bound: lhs {lhs:.6g} V <= rhs {rhs:.6g} V ({holds})")
    _emit(lines, args.machine_readable, report)
    return 0


def _cmd_stability(args) -> int:
    doc = _load_document(args)
    builder = doc.system_builder()
    system = builder(np.asarray(doc.scenario.post_step_injections, dtype=float))

    if system.layout == "droop":
        abscissa, hurwitz = hurwitz_check(system.state_matrix)
        report = {
            "stability.spectral_abscissa": abscissa,
            "stability.hurwitz": hurwitz,
        }
        lines = [
            f"droop loop: spectral abscissa {abscissa:.6g} 1/s, Hurwitz: {hurwitz}",
        ]
    else:
        rep = stability_report(system)
        eq = distributed_equilibrium(system)
        lhs, rhs, holds = voltage_bound(system, eq)
        report = {
            "stability.condition8_value": rep.condition8_value,
            "stability.condition8_holds": rep.condition8_holds,
            "stability.condition9_value": rep.condition9_value,
            "stability.condition9_holds": rep.condition9_holds,
            "stability.spectral_abscissa": rep.spectral_abscissa,
            "stability.hurwitz": rep.hurwitz,
            "bound.lhs_V": lhs,
            "bound.rhs_V": rhs,
            "bound.holds": holds,
        }
        lines = [
            f"condition 8: value {rep.condition8_value:.6g} (holds: {rep.condition8_holds})",
            f"condition 9: value {rep.condition9_value:.6g} (holds: {rep.condition9_holds})",
            f"spectral abscissa {rep.spectral_abscissa:.6g} 1/s (Hurwitz: {rep.hurwitz})",
            f"voltage bound: lhs {lhs:.6g} V <= rhs {rhs:.6g} V ({holds})",
        ]
    _emit(lines, args.machine_readable, report)
    return 0


def _cmd_limits(args) -> int:
    doc = _load_document(args)
    scales = tuple(float(s) for s in args.scales.split(","))
    injections = np.asarray(doc.scenario.post_step_injections, dtype=float)
    rows = droop_limits(doc.line_topology(), doc.converter_params(), injections, scales)

    report = {}
    lines = [
        "gain-scale sweep of the droop equilibrium "
        "(voltage error vs power sharing trade-off):",
        f"{'scale':>10} {'max|V-Vnom| (V)':>18} {'max|u+Iinj| (A)':>18} "
        f"{'spread (V)':>14} {'shared-u error (A)':>20}",
    ]
    for row in rows:
        lines.append(
            f"{row.scale:>10.1e} {row.max_voltage_error:>18.6g} "
            f"{row.max_current_mismatch:>18.6g} {row.spread:>14.6g} "
            f"{row.small_gain_error:>20.6g}"
        )
        tag = f"limits.scale_{row.scale:.0e}"
        report[f"{tag}.max_voltage_error_V"] = row.max_voltage_error
        report[f"{tag}.max_current_mismatch_A"] = row.max_current_mismatch
        report[f"{tag}.spread_V"] = row.spread
        report[f"{tag}.shared_current_error_A"] = row.small_gain_error

    ordered = sorted(rows, key=lambda r: r.scale)
    voltage_trend = all(
        a.max_voltage_error >= b.max_voltage_error for a, b in zip(ordered, ordered[1:])
    )
    sharing_trend = all(
        a.small_gain_error <= b.small_gain_error for a, b in zip(ordered, ordered[1:])
    )
    spread_trend = all(a.spread >= b.spread for a, b in zip(ordered, ordered[1:]))
    report["limits.voltage_error_shrinks_with_gain"] = voltage_trend
    report["limits.sharing_error_grows_with_gain"] = sharing_trend
    report["limits.spread_grows_as_gain_shrinks"] = spread_trend
    lines.append(
        f"trends: voltage error shrinks with gain: {voltage_trend}; "
        f"power sharing degrades with gain: {sharing_trend}; "
        f"voltage spread grows as gain shrinks: {spread_trend}"
    )
    _emit(lines, args.machine_readable, report)
    return 0


def _cmd_sweep_delay(args) -> int:
    doc = _load_document(args)
    if doc.controller.kind != "distributed":
        raise ValidationError("sweep-delay requires the distributed controller")
    taus = tuple(float(t) for t in args.tau_list.split(","))
    if any(t < 0 for t in taus):
        raise ValidationError("delays must be >= 0")
    builder = doc.system_builder()
    _, eq_post = _equilibrium_for(doc, doc.scenario.post_step_injections)

    def one(tau: float):
        controller = doc.with_overrides(tau=tau).build_controller()
        scenario = doc.build_scenario(tau=tau, horizon=args.horizon)
        traj = run_scenario(builder, controller, scenario)
        return traj, classify_diverged(traj, eq_post.V_eq, scenario.step_time)

    # fan out, then join in the deterministic submission order
    with ThreadPoolExecutor(max_workers=min(4, len(taus))) as pool:
        results = list(pool.map(one, taus))

    os.makedirs(args.out_dir, exist_ok=True)
    report = {}
    entries = []
    lines = [f"delay sweep ({doc.controller.kind}), horizon {args.horizon or doc.scenario.horizon:g} s"]
    for tau, (traj, diverged) in zip(taus, results):
        csv_path = os.path.join(args.out_dir, f"trajectory_tau{tau:g}.csv")
        write_trajectory_csv(traj, csv_path)
        entries.append((f"tau = {tau:g} s", csv_path))
        verdict = "diverged" if diverged else "stable"
        lines.append(f"  tau = {tau:g} s: {verdict} ({csv_path})")
        report[f"sweep.tau_{tau:g}.diverged"] = diverged

    bundle = ResultBundle(vnom=doc.controller.vnom, entries=tuple(entries), report=report)
    script_path = os.path.join(args.out_dir, "plot_results.py")
    figure_path = os.path.join(args.out_dir, "step_response.png")
    emit_plot_script(bundle, script_path)
    render_figures(bundle, figure_path)

    if args.search:
        scenario = doc.build_scenario(horizon=args.horizon)
        controller = doc.build_controller()
        result = critical_delay_search(
            builder,
            controller,
            scenario,
            tau_lo=args.tau_min,
            tau_hi=args.tau_max,
            bracket_width=args.bracket,
        )
        report["search.tau_star_s"] = result.tau_star
        report["search.stable_tau_s"] = result.stable_tau
        report["search.unstable_tau_s"] = result.unstable_tau
        report["search.bracket_width_s"] = result.bracket_width
        lines.append(
            f"critical delay: tau* = {result.tau_star:.4f} s "
            f"(bracket [{result.stable_tau:.4f}, {result.unstable_tau:.4f}] s, "
            f"width {result.bracket_width:.2e} s)"
        )

    write_report(report, os.path.join(args.out_dir, "report.kv"))
    lines.append(f"wrote {script_path}, {figure_path}")
    _emit(lines, args.machine_readable, report)
    return 0


def _cmd_preset(args) -> int:
    if args.name is None:
        for name in cfg.preset_names():
            print(name)
        return 0
    doc = cfg.preset(args.name)
    text = cfg.config_to_text(doc)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
        print(f"wrote {args.out}")
    else:
        sys.stdout.write(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mtdcgrid",
        description="Simulation and stability analysis of multi-terminal HVDC voltage control",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run the injection-step scenario and write results")
    _add_model_args(p)
    p.add_argument("--tau", type=float, help="communication delay in seconds")
    p.add_argument("--horizon", type=float, help="simulation horizon in seconds")
    p.add_argument("--out-dir", default="mtdc-results")
    p.add_argument("--machine-readable", action="store_true")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("equilibrium", help="closed-form stationary voltages and currents")
    _add_model_args(p)
    group = p.add_mutually_exclusive_group()
    group.add_argument("--post-step", dest="pre_step", action="store_false", default=False)
    group.add_argument("--pre-step", dest="pre_step", action="store_true")
    p.add_argument("--machine-readable", action="store_true")
    p.set_defaults(func=_cmd_equilibrium)

    p = sub.add_parser("stability", help="spectral conditions and Hurwitz margin")
    _add_model_args(p)
    p.add_argument("--machine-readable", action="store_true")
    p.set_defaults(func=_cmd_stability)

    p = sub.add_parser("limits", help="droop gain-scale sweep (high/low gain behaviour)")
    _add_model_args(p)
    p.add_argument(
        "--scales",
        default=",".join(f"{s:g}" for s in DEFAULT_LIMIT_SCALES),
        help="comma-separated multiplicative gain scales",
    )
    p.add_argument("--machine-readable", action="store_true")
    p.set_defaults(func=_cmd_limits)

    p = sub.add_parser("sweep-delay", help="simulate a list of delays; optional tau* search")
    _add_model_args(p)
    p.add_argument("--tau-list", default=",".join(f"{t:g}" for t in DEFAULT_SWEEP_TAUS))
    p.add_argument("--horizon", type=float, default=20.0)
    p.add_argument("--out-dir", default="mtdc-results")
    p.add_argument("--search", action="store_true", help="bisect the critical delay")
    p.add_argument("--tau-min", type=float, default=0.1)
    p.add_argument("--tau-max", type=float, default=1.0)
    p.add_argument("--bracket", type=float, default=1e-3)
    p.add_argument("--machine-readable", action="store_true")
    p.set_defaults(func=_cmd_sweep_delay)

    p = sub.add_parser("preset", help="list bundled presets or print one as YAML")
    p.add_argument("name", nargs="?")
    p.add_argument("--out", help="write the preset to a file instead of stdout")
    p.set_defaults(func=_cmd_preset)

    return parser


def cli_main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValidationError, SearchRangeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return 3
    except MtdcError as exc:  # pragma: no cover - defensive
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    raise SystemExit(cli_main())
