"""PageRank over message graphs and the min/median/max summary used as
window features."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graphing import MessageGraph


@dataclass(frozen=True)
class PageRankOptions:
    # d=1.0 is the undamped recurrence; periodic graphs then never settle
    damping: float = 0.85
    tolerance: float = 1e-10
    max_iterations: int = 200
    weighted: bool = False

    def __post_init__(self):
        if not 0 < self.damping <= 1:
            raise ValueError("damping must lie in (0, 1]")
        if self.tolerance <= 0:
            raise ValueError("tolerance must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")


@dataclass
class PageRankResult:
    scores: dict
    iterations: int
    converged: bool

    def values(self) -> np.ndarray:
        return np.fromiter(self.scores.values(), dtype=float, count=len(self.scores))


def pagerank(graph: MessageGraph, options: PageRankOptions = PageRankOptions()) -> PageRankResult:
    """Power iteration from the uniform distribution.

    Each step a vertex splits its score evenly over its distinct out-edges
    (by transition count when ``options.weighted``); dangling vertices spread
    theirs over all vertices. Stops once no score moves by ``tolerance`` or
    more, returning the last iterate either way.
    """
    n = graph.n_vertices
    if n == 0:
        raise ValueError("pagerank of an empty graph")
    index = {v: i for i, v in enumerate(graph.vertices)}
    # column j holds the share vertex j passes to each vertex per step
    step = np.zeros((n, n))
    for (u, v), c in graph.edge_counts.items():
        step[index[v], index[u]] += c if options.weighted else 1.0
    out = step.sum(axis=0)
    dangling = out == 0
    step[:, ~dangling] /= out[~dangling]
    step[:, dangling] = 1.0 / n
    d = options.damping
    step = d * step + (1.0 - d) / n  # columns still sum to 1

    x = np.full(n, 1.0 / n)
    converged = False
    it = 0
    for it in range(1, options.max_iterations + 1):
        nxt = step @ x
        delta = np.abs(nxt - x).max()
        x = nxt
        if delta < options.tolerance:
            converged = True
            break
    return PageRankResult(dict(zip(graph.vertices, x.tolist())), it, converged)


def pr_summary(graph: MessageGraph, options: PageRankOptions = PageRankOptions()):
    """``(min, median, max)`` of the per-vertex scores."""
    scores = pagerank(graph, options).values()
    return float(scores.min()), float(np.median(scores)), float(scores.max())
