"""Undirected graphs, incidence/Laplacian algebra and switching schedules.

Nodes are 1-based. An edge ``(i, j)`` is always stored with ``i < j`` and its
incidence column carries ``+1`` at ``i`` and ``-1`` at ``j``, so the relative
state on that edge is ``x_i - x_j``. Edge columns are ordered lexicographically
by pair, which keeps an edge's identity stable across graphs that share it.
"""

from __future__ import annotations

import math
from bisect import bisect_right
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import DomainError, StructuralError

Pair = tuple[int, int]

# relative slack used when snapping a time onto a switching instant
_SNAP = 1e-12


def _normalize_edges(n_nodes: int, edges: Iterable[Sequence[int]]) -> tuple[Pair, ...]:
    seen: set[Pair] = set()
    for edge in edges:
        if len(edge) != 2:
            raise StructuralError(f"edge {tuple(edge)!r} is not a node pair")
        i, j = (int(k) for k in edge)
        if i == j:
            raise StructuralError(f"edge ({i}, {j}) is a self-loop")
        for k in (i, j):
            if not 1 <= k <= n_nodes:
                raise StructuralError(
                    f"edge ({i}, {j}) references node {k} outside 1..{n_nodes}"
                )
        seen.add((min(i, j), max(i, j)))
    return tuple(sorted(seen))


@dataclass(frozen=True)
class Graph:
    """Undirected, unweighted graph on nodes ``1..n_nodes``.

    Edges may be given in either orientation and with repeats; they are stored
    deduplicated, oriented low-to-high and sorted.
    """

    n_nodes: int
    edges: tuple[Pair, ...] = ()

    def __post_init__(self):
        if int(self.n_nodes) != self.n_nodes or self.n_nodes < 1:
            raise StructuralError(f"n_nodes must be a positive integer, got {self.n_nodes!r}")
        object.__setattr__(self, "n_nodes", int(self.n_nodes))
        object.__setattr__(self, "edges", _normalize_edges(self.n_nodes, self.edges))

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def adjacency(self) -> np.ndarray:
        A = np.zeros((self.n_nodes, self.n_nodes), dtype=np.int64)
        for i, j in self.edges:
            A[i - 1, j - 1] = A[j - 1, i - 1] = 1
        return A


@dataclass(frozen=True)
class IncidenceMatrix:
    entries: np.ndarray
    edge_order: tuple[Pair, ...]

    def __post_init__(self):
        entries = np.array(self.entries, dtype=np.int64)
        entries.setflags(write=False)
        object.__setattr__(self, "entries", entries)

    @property
    def n_nodes(self) -> int:
        return self.entries.shape[0]

    @property
    def n_edges(self) -> int:
        return self.entries.shape[1]


def build_incidence(graph: Graph) -> IncidenceMatrix:
    B = np.zeros((graph.n_nodes, graph.n_edges), dtype=np.int64)
    for col, (i, j) in enumerate(graph.edges):
        B[i - 1, col] = 1
        B[j - 1, col] = -1
    return IncidenceMatrix(B, graph.edges)


def edge_laplacian(B: IncidenceMatrix) -> np.ndarray:
    """Return ``B^T B``; positive definite exactly when the graph is a forest."""
    return B.entries.T @ B.entries


def graph_laplacian(graph: Graph) -> np.ndarray:
    """Degree matrix minus adjacency matrix, with unit weights."""
    A = graph.adjacency()
    return np.diag(A.sum(axis=1)) - A


def is_connected(graph: Graph) -> bool:
    neighbors: dict[int, list[int]] = {k: [] for k in range(1, graph.n_nodes + 1)}
    for i, j in graph.edges:
        neighbors[i].append(j)
        neighbors[j].append(i)
    seen = {1}
    queue = deque([1])
    while queue:
        node = queue.popleft()
        for nxt in neighbors[node]:
            if nxt not in seen:
                seen.add(nxt)
                queue.append(nxt)
    return len(seen) == graph.n_nodes


def union_graph(graphs: Sequence[Graph]) -> Graph:
    if not graphs:
        raise StructuralError("union of an empty list of graphs is undefined")
    n = graphs[0].n_nodes
    for g in graphs[1:]:
        if g.n_nodes != n:
            raise StructuralError(
                f"cannot unite graphs with {n} and {g.n_nodes} nodes"
            )
    return Graph(n, tuple(e for g in graphs for e in g.edges))


@dataclass(frozen=True)
class SwitchingSchedule:
    """Piecewise-constant topology signal.

    ``segments`` lists ``(graph_id, duration)`` in activation order. A cyclic
    schedule repeats forever; a non-cyclic one ends after the last segment.
    ``dwell_min`` is the minimum dwell time and ``window_max`` the longest
    admissible window over which the union of active graphs must be connected.
    """

    segments: tuple[tuple[str, float], ...]
    graphs: Mapping[str, Graph]
    cyclic: bool = True
    dwell_min: float | None = None
    window_max: float | None = None
    _bounds: tuple[float, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        segments = tuple((str(gid), float(d)) for gid, d in self.segments)
        if not segments:
            raise StructuralError("schedule has no segments")
        for gid, _ in segments:
            if gid not in self.graphs:
                raise StructuralError(f"segment references unknown graph {gid!r}")
        sizes = {g.n_nodes for g in self.graphs.values()}
        if len(sizes) != 1:
            raise StructuralError(f"graphs in one schedule disagree on node count: {sorted(sizes)}")
        durations = [d for _, d in segments]
        dwell = min(durations) if self.dwell_min is None else float(self.dwell_min)
        if not dwell > 0:
            raise StructuralError(f"dwell_min must be positive, got {dwell}")
        for gid, d in segments:
            if not math.isfinite(d) or d < dwell:
                raise StructuralError(
                    f"segment {gid!r} lasts {d} s, shorter than dwell_min {dwell} s"
                )
        total = math.fsum(durations)
        window = total if self.window_max is None else float(self.window_max)
        if not window > 0:
            raise StructuralError(f"window_max must be positive, got {window}")
        if self.cyclic and total > window * (1 + _SNAP):
            raise StructuralError(
                f"cycle length {total} s exceeds window_max {window} s"
            )
        object.__setattr__(self, "segments", segments)
        object.__setattr__(self, "graphs", dict(self.graphs))
        object.__setattr__(self, "dwell_min", dwell)
        object.__setattr__(self, "window_max", window)
        bounds = [0.0]
        for d in durations:
            bounds.append(bounds[-1] + d)
        object.__setattr__(self, "_bounds", tuple(bounds))

    @property
    def n_nodes(self) -> int:
        return next(iter(self.graphs.values())).n_nodes

    @property
    def period(self) -> float:
        """Length of one pass through all segments."""
        return self._bounds[-1]

    def segment_bounds(self) -> tuple[float, ...]:
        """Cumulative switching instants of one pass, starting at 0."""
        return self._bounds

    def edge_catalog(self) -> tuple[Pair, ...]:
        """Every edge that appears in any scheduled graph, sorted."""
        used = [self.graphs[gid] for gid in dict.fromkeys(g for g, _ in self.segments)]
        return union_graph(used).edges


def active_graph(schedule: SwitchingSchedule, t: float) -> tuple[str, float, float]:
    """Return ``(graph_id, segment_start, segment_end)`` active at time ``t``.

    The signal is right-continuous: at a switching instant the new graph is
    already active. Times within a relative 1e-12 of a switching instant are
    treated as that instant.
    """
    if t < 0:
        raise DomainError(f"t must be nonnegative, got {t}")
    bounds = schedule.segment_bounds()
    period = bounds[-1]
    tol = _SNAP * max(1.0, abs(t))
    offset = 0.0
    local = t
    if schedule.cyclic:
        cycles = math.floor(t / period)
        local = t - cycles * period
        if local >= period - tol:
            cycles += 1
            local = 0.0
        elif local < 0:
            local = 0.0
        offset = cycles * period
    elif t >= period - tol:
        raise DomainError(
            f"t = {t} is beyond the schedule horizon [0, {period})"
        )
    idx = bisect_right(bounds, local + tol) - 1
    idx = min(idx, len(schedule.segments) - 1)
    gid = schedule.segments[idx][0]
    return gid, offset + bounds[idx], offset + bounds[idx + 1]


def connectivity_windows(schedule: SwitchingSchedule) -> list[tuple[int, int]] | None:
    """Split the segment list into windows whose union graph is connected.

    Windows are closed greedily as soon as their union connects, which never
    does worse than any other split. Returns half-open segment index ranges,
    or None when some window would exceed ``window_max`` before connecting.
    """
    windows = []
    start = 0
    n = len(schedule.segments)
    while start < n:
        edges: list[Pair] = []
        elapsed = 0.0
        stop = None
        for k in range(start, n):
            gid, d = schedule.segments[k]
            elapsed += d
            if elapsed > schedule.window_max * (1 + _SNAP):
                return None
            edges.extend(schedule.graphs[gid].edges)
            if is_connected(Graph(schedule.n_nodes, tuple(edges))):
                stop = k + 1
                break
        if stop is None:
            return None
        windows.append((start, stop))
        start = stop
    return windows


def is_jointly_connected(schedule: SwitchingSchedule) -> bool:
    """Check that the graphs are connected jointly over bounded windows.

    A cyclic schedule qualifies when the union over one cycle is connected
    (the cycle is already known to fit in ``window_max``). A finite schedule
    must split into consecutive windows, each no longer than ``window_max``,
    whose unions are connected; a trailing stretch that never connects fails.
    """
    if schedule.cyclic:
        used = [schedule.graphs[gid] for gid, _ in schedule.segments]
        return is_connected(union_graph(used))
    return connectivity_windows(schedule) is not None
