"""Run artifacts: CSV time series, JSON reports, dataset dumps and SVG plots.

Floats in CSV files use 17 significant digits, ``.`` as decimal separator
and ``\\n`` line endings. JSON files use sorted keys and two-space indents.
Column names are 1-based: ``q_1_x`` is the x coordinate of agent 0.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from . import gp
from . import metrics as mx
from . import network as nw
from . import svg
from .config import serialize
from .sim import RunResult, TrajectoryRecord

AXES = "xyz"


def _agent_cols(prefix: str, n: int, d: int) -> list[str]:
    return [f"{prefix}_{i + 1}_{AXES[a]}" for i in range(n) for a in range(d)]


def trajectory_header(fw: nw.Framework) -> list[str]:
    """``t``, positions, velocities, controls, edge errors, ``V``, ``delta_norm``, ``bound``."""
    n, d = fw.n, fw.d
    return (["t"] + _agent_cols("q", n, d) + _agent_cols("v", n, d) + _agent_cols("u", n, d)
            + [f"e_{k + 1}" for k in range(fw.num_edges)] + ["V", "delta_norm", "bound"])


def trajectory_table(rec: TrajectoryRecord) -> np.ndarray:
    delta_norm = np.linalg.norm(rec.delta, axis=1)
    return np.column_stack([rec.t, rec.q, rec.v, rec.u, rec.e, rec.V, delta_norm, rec.delta_bar])


def forces_header(fw: nw.Framework) -> list[str]:
    return ["t"] + _agent_cols("f", fw.n, fw.d) + _agent_cols("mu", fw.n, fw.d)


def metrics_header(fw: nw.Framework) -> list[str]:
    return ["t"] + [f"vbar_{AXES[a]}" for a in range(fw.d)] + ["avg_distance", "error_norm"]


def metrics_table(rec: TrajectoryRecord) -> np.ndarray:
    fw = rec.framework
    return np.column_stack([
        rec.t,
        mx.average_velocity_trace(rec.v, fw.d),
        mx.average_neighbor_distance_trace(fw, rec.q),
        rec.error_norm,
    ])


def write_csv(path, header: list[str], table: np.ndarray) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        np.savetxt(fh, table, fmt="%.17g", delimiter=",", newline="\n")


def read_csv(path) -> tuple[list[str], np.ndarray]:
    with open(path) as fh:
        header = fh.readline().rstrip("\n").split(",")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return header, data


def dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"


def write_json(path, obj) -> None:
    Path(path).write_text(dumps(obj))


def write_run(result: RunResult, out_dir, make_svg: bool = False) -> list[Path]:
    """Write every artifact of ``result`` into ``out_dir``; returns the written paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rec = result.record
    fw = rec.framework
    written = []

    def emit(name):
        p = out / name
        written.append(p)
        return p

    write_csv(emit("trajectory.csv"), trajectory_header(fw), trajectory_table(rec))
    write_csv(emit("forces.csv"), forces_header(fw), np.column_stack([rec.t, rec.f_true, rec.f_pred]))
    write_csv(emit("metrics.csv"), metrics_header(fw), metrics_table(rec))
    write_json(emit("bound.json"), result.bound)
    write_json(emit("summary.json"), result.summary)
    emit("config.json").write_text(serialize(result.config))
    for i, mdl in enumerate(result.models):
        gp.write_dataset_csv(emit(f"dataset_agent_{i + 1}.csv"), mdl.dataset)
    if make_svg:
        for name, text in plots(result).items():
            emit(name).write_text(text)
    return written


def plots(result: RunResult) -> dict[str, str]:
    rec = result.record
    fw = rec.framework
    n, d = fw.n, fw.d
    t = rec.t
    Q = rec.q.reshape(len(t), n, d)
    traj = [svg.Series(f"agent {i + 1}", Q[:, i, 0], Q[:, i, 1]) for i in range(n)]
    out = {
        "trajectories.svg": svg.render([svg.Panel("Agent trajectories (x-y plane)", traj, "x", "y",
                                                  equal_aspect=True)], panel_height=480),
    }

    F = rec.f_true.reshape(len(t), n, d)
    M = rec.f_pred.reshape(len(t), n, d)
    panels = []
    for i in range(n):
        if not np.any(F[:, i]) and not np.any(M[:, i]):
            continue
        series = []
        for a in range(d):
            series.append(svg.Series(f"f_{AXES[a]} real", t, F[:, i, a]))
            series.append(svg.Series(f"f_{AXES[a]} predicted", t, M[:, i, a], dashed=True))
        panels.append(svg.Panel(f"Agent {i + 1}: real and predicted force", series, "t", "force"))
    if panels:
        out["forces.svg"] = svg.render(panels, panel_height=260)

    vbar = mx.average_velocity_trace(rec.v, d)
    dist = mx.average_neighbor_distance_trace(fw, rec.q)
    target = np.full_like(t, float(np.mean(fw.lengths)))
    out["metrics.svg"] = svg.render([
        svg.Panel("Average velocity", [svg.Series(f"vbar_{AXES[a]}", t, vbar[:, a]) for a in range(d)], "t", "velocity"),
        svg.Panel("Average neighbor distance", [svg.Series("measured", t, dist),
                                                svg.Series("desired mean", t, target, dashed=True)], "t", "distance"),
    ])
    out["lyapunov.svg"] = lyapunov_plot({rec.mode: rec})
    return out


def lyapunov_plot(records: dict[str, TrajectoryRecord]) -> str:
    """Normalized ``V(t) / V(0)`` on a log axis, one line per labelled run."""
    series = []
    for label, rec in records.items():
        v0 = rec.V[0] if rec.V[0] > 0 else 1.0
        series.append(svg.Series(label, rec.t, rec.V / v0))
    return svg.line_chart(series, "Normalized Lyapunov function", "t", "V / V(0)", log_y=True)
