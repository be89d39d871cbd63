"""Matplotlib rendering of proof graphs to image files.

Nodes are laid out in columns by their distance from the instantiated policy
atoms; goals on a path to ⊤ are highlighted, since exactly those goals make
up the obstruction.
"""
from __future__ import annotations

from typing import Optional

from .sld import TOP_GOAL, Goal, ProofGraph


def _layers(graph: ProofGraph) -> dict[Goal, int]:
    depth: dict[Goal, int] = {}
    frontier = list(graph.sources)
    for g in frontier:
        depth[g] = 0
    level = 0
    while frontier:
        level += 1
        nxt = []
        for g in frontier:
            for s in graph.successors(g):
                if s not in depth:
                    depth[s] = level
                    nxt.append(s)
        frontier = nxt
    for g in graph.nodes | {TOP_GOAL}:
        depth.setdefault(g, level + 1)
    return depth


def render_proof_graph(graph: ProofGraph, path: str, title: Optional[str] = None) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    depth = _layers(graph)
    on_paths = graph.nodes_on_paths()
    columns: dict[int, list[Goal]] = {}
    for g, d in depth.items():
        columns.setdefault(d, []).append(g)
    positions: dict[Goal, tuple[float, float]] = {}
    for d in sorted(columns):
        goals = sorted(columns[d], key=repr)
        for i, g in enumerate(goals):
            positions[g] = (float(d), -float(i))

    fig, ax = plt.subplots(figsize=(2.2 + 2.4 * (max(columns) + 1), 1.6 + 0.9 * max(len(c) for c in columns.values())))
    for g, edges in graph.edges.items():
        for e in edges:
            x0, y0 = positions[g]
            x1, y1 = positions[e.target]
            ax.annotate(
                "",
                xy=(x1, y1),
                xytext=(x0, y0),
                arrowprops=dict(arrowstyle="-|>", color="0.45", shrinkA=24, shrinkB=24, lw=1.0),
            )
    for g, (x, y) in positions.items():
        emphasized = g in on_paths or g is TOP_GOAL
        ax.text(
            x,
            y,
            repr(g),
            ha="center",
            va="center",
            fontsize=9,
            bbox=dict(
                boxstyle="round,pad=0.35",
                facecolor="#ffe8a3" if emphasized else "white",
                edgecolor="#b8860b" if emphasized else "0.4",
            ),
        )
    ax.set_xlim(-0.6, max(columns) + 0.6)
    low = min(y for _, y in positions.values())
    ax.set_ylim(low - 0.6, 0.6)
    ax.axis("off")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
