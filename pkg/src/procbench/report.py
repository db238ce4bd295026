"""File outputs: trajectory and return CSVs, the JSON report, and figures.

Floats in CSVs are written with repr so a reparse recovers the exact bits
and reruns are byte-identical. Figures are rendered to files next to the
delimited output.
"""

from __future__ import annotations

import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .eval import EvaluationReport, Trajectory  # noqa: E402
from .scenario import Scenario  # noqa: E402


def _fmt(v: float) -> str:
    return repr(float(v))


def write_trajectory_csv(path: str | Path, traj: Trajectory) -> None:
    lines = [",".join(traj.header)]
    for row in traj.rows:
        lines.append(",".join(_fmt(v) for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


def read_trajectory_csv(path: str | Path) -> tuple[list[str], np.ndarray]:
    lines = Path(path).read_text().strip().splitlines()
    header = lines[0].split(",")
    rows = np.array([[float(v) for v in line.split(",")] for line in lines[1:]])
    return header, rows


def write_returns_csv(path: str | Path, reports: list[EvaluationReport]) -> None:
    lines = ["policy,episode,return,per_step_return,violated"]
    for rep in reports:
        for i, (ret, per_step, flag) in enumerate(
                zip(rep.returns, rep.per_step_returns, rep.violation_flags)):
            lines.append(f"{rep.policy_label},{i},{_fmt(ret)},{_fmt(per_step)},"
                         f"{int(flag)}")
    Path(path).write_text("\n".join(lines) + "\n")


def histogram_bins(returns: np.ndarray, bins: int = 20) -> dict:
    counts, edges = np.histogram(np.asarray(returns, dtype=float), bins=bins)
    return {"counts": counts.tolist(), "edges": edges.tolist()}


def write_report_json(path: str | Path, scenario_name: str,
                      reports: list[EvaluationReport]) -> None:
    doc = {
        "scenario": scenario_name,
        "policies": [rep.to_dict() for rep in reports],
        "histograms": {rep.policy_label: histogram_bins(rep.returns)
                       for rep in reports},
    }
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# Figures
# ---------------------------------------------------------------------------

def render_trajectory_figure(path: str | Path, traj: Trajectory, sc: Scenario,
                             state_names: list[str], input_names: list[str]) -> None:
    """Controlled states against their setpoints, plus the applied inputs."""
    rows = np.asarray(traj.rows, dtype=float)
    t = rows[:, 0] + 1.0
    controlled = list(sc.setpoints)
    n_panels = len(controlled) + 1
    fig, axes = plt.subplots(n_panels, 1, figsize=(7.0, 2.2 * n_panels),
                             sharex=True)
    axes = np.atleast_1d(axes)
    for ax, name in zip(axes[:-1], controlled):
        col = 1 + state_names.index(name)
        ax.plot(t, rows[:, col], lw=1.4, label=name)
        ax.step(np.arange(sc.T) + 1.0, sc.setpoints[name], where="post",
                ls="--", color="k", lw=1.0, label=f"{name} setpoint")
        for c in sc.constraints:
            if c.state == name:
                ax.axhline(c.bound, color="crimson", ls=":", lw=1.0)
        ax.set_ylabel(name)
        ax.legend(loc="best", fontsize=8)
    ax = axes[-1]
    u_cols = [traj.header.index(name) for name in input_names]
    for name, col in zip(input_names, u_cols):
        ax.step(t, rows[:, col], where="post", lw=1.2, label=name)
    ax.set_ylabel("inputs")
    ax.set_xlabel("step")
    ax.legend(loc="best", fontsize=8)
    fig.suptitle(f"{sc.name}: episode {traj.episode}", fontsize=10)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def render_return_histogram(path: str | Path, reports: list[EvaluationReport],
                            scenario_name: str) -> None:
    fig, ax = plt.subplots(figsize=(6.0, 3.4))
    all_returns = np.concatenate([rep.returns for rep in reports])
    lo, hi = float(all_returns.min()), float(all_returns.max())
    if hi <= lo:
        hi = lo + max(abs(lo) * 1e-6, 1e-9)
    edges = np.linspace(lo, hi, 24)
    for rep in reports:
        ax.hist(rep.returns, bins=edges, alpha=0.6, label=rep.policy_label)
    ax.set_xlabel("episode return")
    ax.set_ylabel("episodes")
    ax.set_title(f"{scenario_name}: return distribution", fontsize=10)
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
