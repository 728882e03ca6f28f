"""Trajectory reports: delimited output plus rendered figures.

The replay CLI writes the fused trajectory as CSV or JSONL and, unless
told otherwise, renders two PNG figures alongside it: the three PAD
channels over time, and the path through the pleasure/arousal plane
with dominance as color.
"""

import csv
import json
from pathlib import Path
from typing import List, Sequence, Tuple

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from .wire import FusionMessage

TrajectoryRow = Tuple[float, FusionMessage]


def write_csv(path: Path, rows: Sequence[TrajectoryRow]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "p", "a", "d", "label"])
        for offset, msg in rows:
            writer.writerow([repr(offset), repr(msg.p), repr(msg.a), repr(msg.d), msg.label])


def write_jsonl(path: Path, rows: Sequence[TrajectoryRow]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for offset, msg in rows:
            fh.write(
                json.dumps(
                    {"t": offset, "p": msg.p, "a": msg.a, "d": msg.d, "label": msg.label},
                    separators=(",", ":"),
                )
                + "\n"
            )


def render_figures(base: Path, rows: Sequence[TrajectoryRow]) -> List[Path]:
    """Render the trajectory figures next to `base`; returns their paths."""
    ts = [offset for offset, _ in rows]
    ps = [msg.p for _, msg in rows]
    as_ = [msg.a for _, msg in rows]
    ds = [msg.d for _, msg in rows]
    written: List[Path] = []

    fig, ax = plt.subplots(figsize=(9, 4))
    ax.plot(ts, ps, label="pleasure", lw=1.2)
    ax.plot(ts, as_, label="arousal", lw=1.2)
    ax.plot(ts, ds, label="dominance", lw=1.2)
    ax.set_xlabel("time [s]")
    ax.set_ylabel("score")
    ax.set_ylim(-1.05, 1.05)
    ax.axhline(0.0, color="gray", lw=0.5)
    ax.legend(loc="upper right", fontsize=8)
    ax.set_title("fused affect trajectory")
    fig.tight_layout()
    channels_path = base.with_suffix(base.suffix + ".channels.png")
    fig.savefig(channels_path, dpi=120)
    plt.close(fig)
    written.append(channels_path)

    fig, ax = plt.subplots(figsize=(5, 5))
    sc = ax.scatter(ps, as_, c=ds, cmap="coolwarm", vmin=-1, vmax=1, s=8)
    ax.plot(ps, as_, color="gray", lw=0.4, alpha=0.6)
    if rows:
        ax.plot(ps[-1], as_[-1], "k*", markersize=12, label="latest")
        ax.legend(loc="upper right", fontsize=8)
    ax.set_xlim(-1.05, 1.05)
    ax.set_ylim(-1.05, 1.05)
    ax.axhline(0.0, color="gray", lw=0.5)
    ax.axvline(0.0, color="gray", lw=0.5)
    ax.set_xlabel("pleasure")
    ax.set_ylabel("arousal")
    fig.colorbar(sc, label="dominance")
    ax.set_title("pleasure/arousal plane")
    fig.tight_layout()
    plane_path = base.with_suffix(base.suffix + ".plane.png")
    fig.savefig(plane_path, dpi=120)
    plt.close(fig)
    written.append(plane_path)
    return written
