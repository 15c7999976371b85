"""Figure rendering for run reports.

Figures are written next to the report file; they visualize the attack
matrix and the per-flaw coverage so a suite run can be read at a glance.
"""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .attacks import STRATEGY_IDS, STRATEGY_NAMES, SuiteResult


def render_attack_matrix(suite: SuiteResult, path: Path) -> None:
    seeds = sorted({c.seed for c in suite.cells})
    grid = np.zeros((len(STRATEGY_IDS), len(seeds)))
    for cell in suite.cells:
        grid[STRATEGY_IDS.index(cell.strategy_id), seeds.index(cell.seed)] = \
            1.0 if cell.success else 0.0
    fig, ax = plt.subplots(figsize=(max(6, 0.4 * len(seeds)), 4))
    ax.imshow(grid, cmap="Reds", vmin=0, vmax=1, aspect="auto")
    ax.set_yticks(range(len(STRATEGY_IDS)))
    ax.set_yticklabels([f"{sid} {STRATEGY_NAMES[sid]}" for sid in STRATEGY_IDS])
    ax.set_xticks(range(len(seeds)))
    ax.set_xticklabels([str(s) for s in seeds], fontsize=7)
    ax.set_xlabel("seed")
    ax.set_title("Attack matrix (red = success)")
    for i in range(len(STRATEGY_IDS)):
        for j in range(len(seeds)):
            if grid[i, j]:
                ax.text(j, i, "x", ha="center", va="center", color="white")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_flaw_coverage(suite: SuiteResult, path: Path) -> None:
    flaws = sorted(suite.coverage)
    if not flaws:
        return
    counts = [len(suite.coverage[f]) for f in flaws]
    fig, ax = plt.subplots(figsize=(6, 3.5))
    bars = ax.bar(flaws, counts, color="#b23b3b")
    for bar, flaw in zip(bars, flaws):
        names = ", ".join(suite.coverage[flaw]) or "-"
        ax.text(bar.get_x() + bar.get_width() / 2, bar.get_height() + 0.05,
                names, ha="center", va="bottom", fontsize=7)
    ax.set_ylabel("defeating strategies")
    ax.set_title("Strategies defeating each flaw enabled alone")
    ax.set_ylim(0, max(counts) + 1)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
