"""Telemetry CSV, metrics JSON and static SVG plots for one run."""

import csv
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

# fixed ids and no timestamp so SVGs are reproducible
matplotlib.rcParams["svg.hashsalt"] = "identiquad"

CSV_NAME = "telemetry.csv"
METRICS_NAME = "metrics.json"


def _fmt(x):
    return format(float(x), ".10g")


def write_csv(result, path):
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(result.columns)
        for row in result.rows:
            w.writerow(_fmt(x) for x in row)
    return path


def read_csv(path):
    with Path(path).open(newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        rows = np.array([[float(x) for x in line] for line in r])
    return header, rows


def write_metrics(result, path):
    path = Path(path)
    path.write_text(json.dumps(result.metrics, indent=2, sort_keys=True) + "\n")
    return path


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path


def plot_position(result, path):
    t = result.column("t")
    fig, axes = plt.subplots(3, 1, sharex=True, figsize=(7, 6))
    for ax, c in zip(axes, "xyz"):
        ax.plot(t, result.column(f"p_{c}"), label=f"p_{c}")
        ax.plot(t, result.column(f"pd_{c}"), "--", label=f"pd_{c}")
        ax.set_ylabel(f"{c} [m]")
        ax.legend(loc="upper right", fontsize=8)
    axes[-1].set_xlabel("t [s]")
    return _save(fig, path)


def plot_angles(result, path):
    t = result.column("t")
    fig, axes = plt.subplots(3, 1, sharex=True, figsize=(7, 6))
    for ax, name in zip(axes, ("roll", "pitch", "yaw")):
        ax.plot(t, np.degrees(result.column(name)), label=name)
        ref = np.degrees(np.angle(np.exp(1j * result.column(f"{name}_d"))))
        ax.plot(t, ref, "--", label=f"{name}_d")
        ax.set_ylabel(f"{name} [deg]")
        ax.legend(loc="upper right", fontsize=8)
    axes[-1].set_xlabel("t [s]")
    return _save(fig, path)


def plot_rotors(result, path, u_max):
    t = result.column("t")
    n = result.n
    fig, axes = plt.subplots(n, 1, sharex=True, figsize=(7, 1.6 * n + 1), squeeze=False)
    for i in range(1, n + 1):
        ax = axes[i - 1, 0]
        for j in range(1, 5):
            ax.plot(t, result.column(f"u_{i}{j}") / u_max, lw=0.8, label=f"u_{i}{j}")
        ax.set_ylim(-0.05, 1.05)
        ax.set_ylabel(f"module {i}")
        ax.legend(loc="upper right", fontsize=6, ncol=4)
    axes[-1, 0].set_xlabel("t [s]  (u / u_max)")
    return _save(fig, path)


def plot_voltages(result, path):
    t = result.column("t")
    fig, ax = plt.subplots(figsize=(7, 3.5))
    for i in range(1, result.n + 1):
        ax.plot(t, result.column(f"V_{i}"), label=f"V_{i}")
    ax.set_xlabel("t [s]")
    ax.set_ylabel("voltage [fraction]")
    ax.legend(loc="upper right", fontsize=8)
    return _save(fig, path)


def plot_dof(result, path):
    t = result.column("t")
    fig, ax = plt.subplots(figsize=(7, 2.5))
    ax.step(t, result.column("dof_mode"), where="post")
    ax.set_yticks([4, 5, 6])
    ax.set_ylim(3.5, 6.5)
    ax.set_xlabel("t [s]")
    ax.set_ylabel("tracked DOF")
    return _save(fig, path)


def write_plots(result, out_dir, u_max):
    out_dir = Path(out_dir)
    return [
        plot_position(result, out_dir / "position.svg"),
        plot_angles(result, out_dir / "angles.svg"),
        plot_rotors(result, out_dir / "rotors.svg", u_max),
        plot_voltages(result, out_dir / "voltages.svg"),
        plot_dof(result, out_dir / "dof_mode.svg"),
    ]


def write_outputs(result, scenario, out_dir):
    """Write CSV, metrics and (unless disabled in the scenario) plots into ``out_dir``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    files = []
    if scenario.output.get("csv", True):
        files.append(write_csv(result, out_dir / CSV_NAME))
    files.append(write_metrics(result, out_dir / METRICS_NAME))
    if scenario.output.get("plots", True) and len(result.rows):
        files += write_plots(result, out_dir, scenario.params.u_max)
    return files
