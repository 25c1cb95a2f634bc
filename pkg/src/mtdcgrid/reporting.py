"""Result serialization: trajectory CSVs, plot scripts, rendered figures.

CSV columns are t,V_1..V_n,u_1..u_n and, for the distributed controller,
Vhat_1..Vhat_n, written with 17 significant digits so values round-trip
bit-exactly. The plot script is a standalone matplotlib program referencing
the CSVs by relative path; the report path can also render the same layout
straight to PNG files.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .simulator import Trajectory

__all__ = [
    "ResultBundle",
    "write_trajectory_csv",
    "read_trajectory_csv",
    "emit_plot_script",
    "render_figures",
    "format_report",
    "write_report",
]

_FMT = "%.17g"


def _header(n: int, with_vhat: bool) -> list[str]:
    cols = ["t"]
    cols += [f"V_{k}" for k in range(1, n + 1)]
    cols += [f"u_{k}" for k in range(1, n + 1)]
    if with_vhat:
        cols += [f"Vhat_{k}" for k in range(1, n + 1)]
    return cols


def write_trajectory_csv(trajectory: Trajectory, path) -> None:
    """Write a trajectory as delimited text, full float64 precision."""
    n = trajectory.n
    with_vhat = trajectory.Vhat is not None
    columns = [trajectory.times[:, None], trajectory.V, trajectory.u]
    if with_vhat:
        columns.append(trajectory.Vhat)
    data = np.hstack(columns) if trajectory.n_samples else np.empty((0, 0))
    try:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(",".join(_header(n, with_vhat)) + "\n")
            for row in data:
                fh.write(",".join(_FMT % v for v in row) + "\n")
    except OSError as exc:
        raise ValidationError(f"cannot write trajectory to {path}: {exc}") from exc


def read_trajectory_csv(path) -> Trajectory:
    """Read a trajectory CSV produced by write_trajectory_csv."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            header = fh.readline().strip()
            rows = [line.strip() for line in fh if line.strip()]
    except OSError as exc:
        raise ValidationError(f"cannot read trajectory from {path}: {exc}") from exc
    cols = header.split(",")
    if not cols or cols[0] != "t":
        raise ValidationError(f"{path}: not a trajectory CSV (header {header!r})")
    n_v = sum(c.startswith("V_") for c in cols)
    with_vhat = any(c.startswith("Vhat_") for c in cols)
    expected = 1 + (3 if with_vhat else 2) * n_v
    if len(cols) != expected or n_v == 0:
        raise ValidationError(f"{path}: inconsistent column layout {cols}")
    if rows:
        data = np.array([[float(v) for v in row.split(",")] for row in rows])
    else:
        data = np.empty((0, expected))
    times = data[:, 0]
    V = data[:, 1 : 1 + n_v]
    u = data[:, 1 + n_v : 1 + 2 * n_v]
    Vhat = data[:, 1 + 2 * n_v :] if with_vhat else None
    return Trajectory(times=times, V=V, u=u, Vhat=Vhat)


@dataclass(frozen=True)
class ResultBundle:
    """Artifacts of one CLI run: labelled CSVs plus report values.

    entries are (label, csv_path) pairs in deterministic order; for delay
    sweeps the label carries the delay value. The report maps flat keys to
    numbers/strings/booleans and is rendered byte-identically by
    format_report given identical inputs.
    """

    vnom: float
    entries: tuple = ()
    report: dict = field(default_factory=dict)
    plot_script: str | None = None


def _script_body(vnom: float, items: list[tuple[str, str]]) -> str:
    rows = len(items)
    lines = [
        "#!/usr/bin/env python3",
        '"""Render step-response panels from trajectory CSVs (auto-generated)."""',
        "import csv",
        "import os",
        "",
        "import matplotlib",
        "matplotlib.use('Agg')",
        "import matplotlib.pyplot as plt",
        "",
        f"VNOM = {_FMT % vnom}",
        f"RUNS = {items!r}",
        "",
        "here = os.path.dirname(os.path.abspath(__file__))",
        "",
        "",
        "def load(path):",
        "    with open(os.path.join(here, path), newline='') as fh:",
        "        reader = csv.reader(fh)",
        "        header = next(reader)",
        "        data = [[float(v) for v in row] for row in reader]",
        "    cols = list(zip(*data)) if data else [[] for _ in header]",
        "    n = sum(1 for c in header if c.startswith('V_'))",
        "    t = cols[0]",
        "    V = cols[1:1 + n]",
        "    u = cols[1 + n:1 + 2 * n]",
        "    return t, V, u",
        "",
        "",
        f"fig, axes = plt.subplots({rows}, 2, figsize=(10, {2.6 * rows:.1f}), squeeze=False)",
        "for row, (label, path) in enumerate(RUNS):",
        "    t, V, u = load(path)",
        "    ax_v, ax_u = axes[row]",
        "    for k, series in enumerate(V, start=1):",
        "        ax_v.plot(t, [v - VNOM for v in series], label=f'node {k}')",
        "    for k, series in enumerate(u, start=1):",
        "        ax_u.plot(t, series, label=f'node {k}')",
        "    ax_v.set_ylabel(f'{label}\\nV - Vnom (V)')",
        "    ax_u.set_ylabel('u (A)')",
        "    if row == 0:",
        "        ax_v.legend(fontsize=8, ncol=2)",
        "    for ax in (ax_v, ax_u):",
        "        ax.grid(True, alpha=0.4)",
        "axes[-1][0].set_xlabel('time (s)')",
        "axes[-1][1].set_xlabel('time (s)')",
        "fig.tight_layout()",
        "out = os.path.join(here, 'step_response.png')",
        "fig.savefig(out, dpi=150)",
        "print(f'wrote {out}')",
        "",
    ]
    return "\n".join(lines)


def emit_plot_script(bundle: ResultBundle, path) -> None:
    """Write a standalone matplotlib script plotting every run in the bundle.

    Panels mirror the step-response figures: per run one row with V - Vnom on
    the left and the controlled currents on the right. CSV paths are stored
    relative to the script location. Refuses to emit when the bundle holds no
    trajectories.
    """
    if not bundle.entries:
        raise ValidationError("bundle contains no trajectory CSVs; run a simulation first")
    directory = os.path.dirname(os.path.abspath(path))
    items = []
    for label, csv_path in bundle.entries:
        if not os.path.exists(csv_path):
            raise ValidationError(f"trajectory CSV {csv_path} does not exist")
        items.append((label, os.path.relpath(os.path.abspath(csv_path), directory)))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(_script_body(bundle.vnom, items))


def render_figures(bundle: ResultBundle, path) -> None:
    """Render the same panel layout directly to an image file."""
    if not bundle.entries:
        raise ValidationError("bundle contains no trajectory CSVs; run a simulation first")
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    rows = len(bundle.entries)
    fig, axes = plt.subplots(rows, 2, figsize=(10, 2.6 * rows), squeeze=False)
    for row, (label, csv_path) in enumerate(bundle.entries):
        traj = read_trajectory_csv(csv_path)
        ax_v, ax_u = axes[row]
        for k in range(traj.n):
            ax_v.plot(traj.times, traj.V[:, k] - bundle.vnom, label=f"node {k + 1}")
            ax_u.plot(traj.times, traj.u[:, k])
        ax_v.set_ylabel(f"{label}\nV - Vnom (V)")
        ax_u.set_ylabel("u (A)")
        if row == 0:
            ax_v.legend(fontsize=8, ncol=2)
        for ax in (ax_v, ax_u):
            ax.grid(True, alpha=0.4)
    axes[-1][0].set_xlabel("time (s)")
    axes[-1][1].set_xlabel("time (s)")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def _format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return _FMT % float(value)
    return str(value)


def format_report(report: dict) -> str:
    """Flat key=value text, one entry per line, insertion-ordered."""
    return "".join(f"{key}={_format_value(value)}\n" for key, value in report.items())


def write_report(report: dict, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(format_report(report))
