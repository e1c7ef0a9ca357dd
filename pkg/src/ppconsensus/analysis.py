"""Post-hoc certificates for a recorded trajectory.

Funnel compliance and convergence are the verdicts that matter. The
Lyapunov-type value ``V`` is recorded as a diagnostic only; nothing gates on it.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from os import PathLike
from typing import IO

import numpy as np

from .performance import rho
from .simulator import Scenario, SystemState, Trajectory
from .topology import Graph, Pair, build_incidence
from .transform import transform_edges


@dataclass(frozen=True)
class ChannelCompliance:
    min_margin: float  # min over samples and edges of rho(t) - |s(t)|
    t: float | None
    edge: Pair | None

    @property
    def violated(self) -> bool:
        return self.min_margin <= 0


@dataclass(frozen=True)
class ComplianceReport:
    position: ChannelCompliance
    velocity: ChannelCompliance

    @property
    def violated(self) -> bool:
        return self.position.violated or self.velocity.violated


def _channel(traj: Trajectory, scenario: Scenario, attr: str, channel: str) -> ChannelCompliance:
    best = (math.inf, None, None)
    for sample in traj.samples:
        values = getattr(sample, attr)
        for pair, s in zip(sample.edges, values):
            margin = float(rho(scenario.funnel(pair, channel), sample.t)) - abs(float(s))
            # ties go to the earliest time, then the smallest pair
            if margin < best[0]:
                best = (margin, sample.t, pair)
    return ChannelCompliance(*best)


def compliance(traj: Trajectory, scenario: Scenario) -> ComplianceReport:
    """Smallest distance to the funnel wall over every recorded sample and edge.

    An empty edge set at a sample contributes nothing; a run that never has an
    active edge reports an infinite margin.
    """
    return ComplianceReport(
        position=_channel(traj, scenario, "y", "position"),
        velocity=_channel(traj, scenario, "z", "velocity"),
    )


def lyapunov(state: SystemState, graph: Graph, scenario: Scenario) -> float:
    """Potential ``V = xi^T Q xi / 2 + h5 |eps_y|^2 / 2 + h6 |eps_z|^2 / 2``.

    ``xi = [x; v]`` in absolute coordinates and ``Q = [[h1 I, -h2 I], [h3 I, h4 I]]``,
    so the quadratic part is ``(h1 |x|^2 + (h3 - h2) x.v + h4 |v|^2) / 2``.
    """
    g = scenario.gains
    x = np.asarray(state.x, dtype=float)
    v = np.asarray(state.v, dtype=float)
    B = build_incidence(graph)
    by = transform_edges(B.entries.T @ x, scenario.funnels(graph, "position"), state.t,
                         pairs=graph.edges, channel="position")
    bz = transform_edges(B.entries.T @ v, scenario.funnels(graph, "velocity"), state.t,
                         pairs=graph.edges, channel="velocity")
    quad = g.h1 * (x @ x) + (g.h3 - g.h2) * (x @ v) + g.h4 * (v @ v)
    return float(0.5 * quad + 0.5 * g.h5 * (by.eps @ by.eps) + 0.5 * g.h6 * (bz.eps @ bz.eps))


@dataclass(frozen=True)
class ConsensusMetrics:
    terminal_max_y: float
    terminal_max_z: float
    threshold: float
    settle_time: float | None  # None when not settled by the last sample
    mean_velocity_drift: float
    mean_position_drift: float

    @property
    def settled(self) -> bool:
        return self.settle_time is not None


def _catalog_spread(traj: Trajectory, values: np.ndarray) -> np.ndarray:
    """Max |value_i - value_j| over catalog edges, one entry per sample."""
    if not traj.edge_catalog:
        return np.zeros(len(values))
    i = np.array([p[0] - 1 for p in traj.edge_catalog])
    j = np.array([p[1] - 1 for p in traj.edge_catalog])
    return np.abs(values[:, i] - values[:, j]).max(axis=1)


def consensus_metrics(traj: Trajectory, threshold: float | None = None) -> ConsensusMetrics:
    """Terminal disagreement, settle time and conservation drift.

    Edge errors are measured over every edge the schedule ever uses, not just
    the edges active at a given sample, so switching cannot hide disagreement.
    ``threshold`` defaults to the asymptotic width of the position funnel.
    """
    if not traj.samples:
        raise ValueError("trajectory has no samples")
    if threshold is None:
        threshold = traj.funnel_y.rho_inf
    t = traj.times
    X = traj.positions
    Vv = traj.velocities
    ys = _catalog_spread(traj, X)
    zs = _catalog_spread(traj, Vv)
    above = np.flatnonzero(~(ys < threshold))
    if len(above) == 0:
        settle = float(t[0])
    elif above[-1] == len(t) - 1:
        settle = None
    else:
        settle = float(t[above[-1] + 1])
    mv = Vv.mean(axis=1)
    mx = X.mean(axis=1)
    return ConsensusMetrics(
        terminal_max_y=float(ys[-1]),
        terminal_max_z=float(zs[-1]),
        threshold=float(threshold),
        settle_time=settle,
        mean_velocity_drift=float(np.max(np.abs(mv - mv[0]))),
        mean_position_drift=float(np.max(np.abs(mx - (mx[0] + mv[0] * (t - t[0]))))),
    )


def _fmt(value: float) -> str:
    return f"{value:.17g}"


def csv_header(traj: Trajectory) -> list[str]:
    n = traj.n_agents
    header = ["t"] + [f"x_{k}" for k in range(1, n + 1)] + [f"v_{k}" for k in range(1, n + 1)]
    header.append("graph_id")
    for i, j in traj.edge_catalog:
        header += [f"y_{i}-{j}", f"z_{i}-{j}"]
    return header + ["rho_y", "rho_z", "V"]


def write_csv(traj: Trajectory, stream: IO[str]) -> int:
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(csv_header(traj))
    for s in traj.samples:
        active = {pair: (y, z) for pair, y, z in zip(s.edges, s.y, s.z)}
        row = [_fmt(s.t)] + [_fmt(a) for a in s.x] + [_fmt(a) for a in s.v] + [s.graph_id]
        for pair in traj.edge_catalog:
            if pair in active:
                row += [_fmt(active[pair][0]), _fmt(active[pair][1])]
            else:
                row += ["", ""]
        row += [_fmt(s.rho_y), _fmt(s.rho_z), _fmt(s.V)]
        writer.writerow(row)
    return len(traj.samples)


def export_csv(traj: Trajectory, destination: str | PathLike) -> int:
    """Write the trajectory as CSV and return the number of data rows."""
    with open(destination, "w", encoding="utf-8", newline="") as fh:
        return write_csv(traj, fh)


def export_funnels_csv(traj: Trajectory, destination: str | PathLike) -> int:
    """Write ``t, rho_y, rho_z`` per sample, enough to redraw the funnel walls."""
    with open(destination, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["t", "rho_y", "rho_z"])
        for s in traj.samples:
            writer.writerow([_fmt(s.t), _fmt(s.rho_y), _fmt(s.rho_z)])
    return len(traj.samples)


def read_csv(source: str | PathLike) -> tuple[list[str], list[dict[str, float | str | None]]]:
    """Parse a trajectory CSV back into typed rows (blank cells become None)."""
    rows = []
    with open(source, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        for raw in reader:
            row: dict[str, float | str | None] = {}
            for key, cell in zip(header, raw):
                if key == "graph_id":
                    row[key] = cell
                elif cell == "":
                    row[key] = None
                else:
                    row[key] = float(cell)
            rows.append(row)
    return header, rows
