#!/usr/bin/env python3
"""Plots from dcl output directories.

    plot.py series out/comm_sweep            # NEES / RMSE over time per estimator
    plot.py trajectory out/utias/subset9 3   # truth vs estimates for one robot
"""
import argparse
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import pandas as pd


def plot_series(out: Path) -> None:
    df = pd.read_csv(out / "series.csv")
    fig, axes = plt.subplots(2, 2, figsize=(11, 7), sharex=True)
    cols = ["nees_orientation", "nees_position", "rmse_orientation", "rmse_position"]
    for ax, col in zip(axes.flat, cols):
        for (est, cfg), g in df.groupby(["estimator", "config_id"]):
            label = est if cfg in ("base", "") else f"{est} [{cfg}]"
            ax.plot(g["time"], g[col], label=label, lw=1)
        ax.set_title(col)
        ax.grid(alpha=0.3)
    axes[0, 0].legend(fontsize=7)
    for ax in axes[1]:
        ax.set_xlabel("time [s]")
    fig.tight_layout()
    fig.savefig(out / "series.png", dpi=120)
    print(out / "series.png")


def plot_trajectory(out: Path, robot: int, seconds: float, dt: float) -> None:
    truth = pd.read_csv(out / "truth.csv")
    last = int(round(seconds / dt))
    fig, ax = plt.subplots(figsize=(7, 7))
    t = truth[(truth.robot == robot - 1) & (truth.step <= last)]
    ax.plot(t.x, t.y, "k-", lw=1.5, label="ground truth")
    for path in sorted(out.glob("estimates_*.csv")):
        est = pd.read_csv(path)
        e = est[(est.robot == robot - 1) & (est.step <= last)]
        ax.plot(e.x, e.y, lw=0.8, label=path.stem.removeprefix("estimates_"))
    ax.set_aspect("equal")
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")
    ax.legend(fontsize=8)
    ax.grid(alpha=0.3)
    target = out / f"trajectory_robot{robot}.png"
    fig.savefig(target, dpi=120)
    print(target)


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = p.add_subparsers(dest="cmd", required=True)
    s = sub.add_parser("series")
    s.add_argument("out", type=Path)
    t = sub.add_parser("trajectory")
    t.add_argument("out", type=Path)
    t.add_argument("robot", type=int, help="1-based robot number")
    t.add_argument("--seconds", type=float, default=300.0)
    t.add_argument("--dt", type=float, default=0.1, help="step length of the run")
    a = p.parse_args()
    if a.cmd == "series":
        plot_series(a.out)
    else:
        plot_trajectory(a.out, a.robot, a.seconds, a.dt)


if __name__ == "__main__":
    main()
