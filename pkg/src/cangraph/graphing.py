"""Tumbling windows over a frame log and the directed message-ID graph of
each window.

A window's graph has one vertex per arbitration ID and a directed edge
``(a, b)`` whenever a frame with ID ``a`` is immediately followed by one with
ID ``b``. Edges are kept as a distinct set with their transition counts.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterator, Optional

import numpy as np

from .can_log import AttackKind, FrameLog

ATTACK_FREE = 0
ATTACKED = 1

# any injected frame (or any suspension overlap) marks a window attacked
ANY = 1e-12


class WindowMode(str, enum.Enum):
    TIME_MS = "TimeMs"
    FRAME_COUNT = "FrameCount"


@dataclass(frozen=True)
class WindowSpec:
    mode: WindowMode = WindowMode.TIME_MS
    size: float = 23.0
    label_threshold: float = ANY
    min_frames: int = 2

    def __post_init__(self):
        object.__setattr__(self, "mode", WindowMode(self.mode))
        if self.size <= 0:
            raise ValueError("window size must be positive")
        if self.mode is WindowMode.FRAME_COUNT and int(self.size) != self.size:
            raise ValueError("frame-count windows need an integral size")
        if not 0 < self.label_threshold <= 1:
            raise ValueError("label_threshold must lie in (0, 1]")

    @classmethod
    def time_ms(cls, size: float = 23.0, **kw) -> "WindowSpec":
        return cls(WindowMode.TIME_MS, size, **kw)

    @classmethod
    def frames(cls, size: int, **kw) -> "WindowSpec":
        return cls(WindowMode.FRAME_COUNT, size, **kw)


@dataclass
class Window:
    index: int
    start: float
    end: float
    frames: list
    label: int = ATTACK_FREE
    attack_kinds: frozenset = frozenset()

    @property
    def ids(self) -> list:
        return [f.can_id for f in self.frames]

    @property
    def attacked(self) -> bool:
        return self.label == ATTACKED


def _label(frames, start: float, end: float, log: FrameLog, threshold: float):
    kinds = {f.attack_kind for f in frames if f.injected and f.attack_kind is not None}
    injected = sum(1 for f in frames if f.injected)
    attacked = injected > 0 and injected / len(frames) >= threshold
    span = end - start
    for s in log.suspensions:
        if span > 0:
            cover = s.overlap(start, end) / span
        else:
            cover = 1.0 if s.start <= start <= s.end else 0.0
        if cover > 0 and cover >= threshold:
            attacked = True
            kinds.add(AttackKind.SUSPENSION)
    return (ATTACKED if attacked else ATTACK_FREE), frozenset(kinds)


def window_stream(log: FrameLog, spec: Optional[WindowSpec] = None,
                  origin: Optional[float] = None) -> Iterator[Window]:
    """Yield non-overlapping windows in time order.

    Time windows are ``[origin + k*size, origin + (k+1)*size)`` with ``origin``
    defaulting to the first timestamp; ``index`` is ``k``. Windows holding
    fewer than ``spec.min_frames`` frames are skipped.
    """
    spec = spec or WindowSpec()
    frames = log.frames
    if not frames:
        return
    if spec.mode is WindowMode.FRAME_COUNT:
        size = int(spec.size)
        for k, lo in enumerate(range(0, len(frames), size)):
            chunk = frames[lo:lo + size]
            if len(chunk) < min(spec.min_frames, size):
                continue
            start = chunk[0].timestamp
            end = frames[lo + size].timestamp if lo + size < len(frames) else chunk[-1].timestamp
            label, kinds = _label(chunk, start, end, log, spec.label_threshold)
            yield Window(k, start, end, chunk, label, kinds)
        return

    width = spec.size / 1000.0
    t0 = frames[0].timestamp if origin is None else origin
    times = np.fromiter((f.timestamp for f in frames), dtype=float, count=len(frames))
    slot = np.floor((times - t0) / width + 1e-9).astype(np.int64)
    bounds = np.flatnonzero(np.diff(slot)) + 1
    starts = np.concatenate(([0], bounds))
    stops = np.concatenate((bounds, [len(frames)]))
    for lo, hi in zip(starts.tolist(), stops.tolist()):
        if hi - lo < spec.min_frames:
            continue
        k = int(slot[lo])
        start = t0 + k * width
        end = start + width
        chunk = frames[lo:hi]
        label, kinds = _label(chunk, start, end, log, spec.label_threshold)
        yield Window(k, start, end, chunk, label, kinds)


@dataclass
class MessageGraph:
    vertices: tuple
    edge_counts: dict = field(default_factory=dict)

    @property
    def edges(self) -> list:
        return list(self.edge_counts)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_edges(self) -> int:
        return len(self.edge_counts)

    def in_degree(self, weighted: bool = False) -> dict:
        deg = dict.fromkeys(self.vertices, 0)
        for (_, v), c in self.edge_counts.items():
            deg[v] += c if weighted else 1
        return deg

    def out_degree(self, weighted: bool = False) -> dict:
        deg = dict.fromkeys(self.vertices, 0)
        for (u, _), c in self.edge_counts.items():
            deg[u] += c if weighted else 1
        return deg

    def relabel(self, mapping: dict) -> "MessageGraph":
        return MessageGraph(
            tuple(sorted(mapping[v] for v in self.vertices)),
            {(mapping[u], mapping[v]): c for (u, v), c in self.edge_counts.items()},
        )


def graph_from_ids(ids) -> MessageGraph:
    ids = list(ids)
    if not ids:
        raise ValueError("empty window")
    counts: dict = {}
    for pair in zip(ids, ids[1:]):
        counts[pair] = counts.get(pair, 0) + 1
    return MessageGraph(tuple(sorted(set(ids))), counts)


def build_graph(window) -> MessageGraph:
    """Message-ID graph of a :class:`Window` (or any frame sequence)."""
    frames = window.frames if isinstance(window, Window) else window
    return graph_from_ids(f.can_id for f in frames)
