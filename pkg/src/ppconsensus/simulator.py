"""Fixed-step RK4 integration of the closed loop over a switching schedule.

Time is tracked by integer step index so switching instants always fall on
step boundaries; the active graph is held fixed across a step's four stages.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Mapping

import numpy as np

from .controller import GainSet, control_terms, validate_gains
from .errors import (
    FunnelViolation,
    InfeasibleActivation,
    IntegrationBlowup,
    ScenarioError,
    SimulationHalted,
)
from .performance import PerformanceFunction, alpha_bar, rho
from .topology import Graph, IncidenceMatrix, Pair, SwitchingSchedule, build_incidence, is_jointly_connected
from .transform import transform_edges

log = logging.getLogger(__name__)

CHANNELS = ("position", "velocity")


@dataclass(frozen=True)
class SystemState:
    t: float
    x: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        x = np.array(self.x, dtype=float)
        v = np.array(self.v, dtype=float)
        if x.ndim != 1 or x.shape != v.shape:
            raise ValueError(f"x and v must be equal-length vectors, got {x.shape} and {v.shape}")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(v))):
            raise ValueError("state has non-finite entries")
        x.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "t", float(self.t))
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "v", v)


def steps_in(duration: float, dt: float) -> int | None:
    """Number of ``dt`` steps in ``duration``, or None if ``dt`` does not divide it."""
    n = round(duration / dt)
    if n < 1 or abs(n * dt - duration) > 1e-12 * max(1.0, duration):
        return None
    return n


@dataclass(frozen=True)
class Scenario:
    n_agents: int
    initial: SystemState
    schedule: SwitchingSchedule
    funnel_y: PerformanceFunction
    funnel_z: PerformanceFunction
    gains: GainSet
    t_end: float
    dt: float = 1e-3
    sample_stride: int = 10
    guard: float = 1e-9
    overrides_y: Mapping[Pair, PerformanceFunction] = field(default_factory=dict)
    overrides_z: Mapping[Pair, PerformanceFunction] = field(default_factory=dict)

    def __post_init__(self):
        if len(self.initial.x) != self.n_agents:
            raise ScenarioError(
                f"initial state has {len(self.initial.x)} agents, expected {self.n_agents}"
            )
        if self.schedule.n_nodes != self.n_agents:
            raise ScenarioError(
                f"schedule graphs have {self.schedule.n_nodes} nodes, expected {self.n_agents}"
            )
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise ScenarioError(f"dt must be positive, got {self.dt}")
        if not (self.t_end > 0 and math.isfinite(self.t_end)):
            raise ScenarioError(f"t_end must be positive, got {self.t_end}")
        for gid, d in self.schedule.segments:
            if steps_in(d, self.dt) is None:
                raise ScenarioError(
                    f"dt = {self.dt} does not divide the {d} s segment of graph {gid!r}"
                )
        if steps_in(self.t_end, self.dt) is None:
            raise ScenarioError(f"dt = {self.dt} does not divide t_end = {self.t_end}")
        if not self.schedule.cyclic and self.t_end > self.schedule.period * (1 + 1e-12):
            raise ScenarioError(
                f"t_end = {self.t_end} exceeds the non-cyclic schedule horizon {self.schedule.period}"
            )
        if int(self.sample_stride) != self.sample_stride or self.sample_stride < 1:
            raise ScenarioError(f"sample_stride must be a positive integer, got {self.sample_stride}")
        if not 0 < self.guard < 1:
            raise ScenarioError(f"guard must lie in (0, 1), got {self.guard}")
        catalog = set(self.schedule.edge_catalog())
        for table in (self.overrides_y, self.overrides_z):
            for pair in table:
                if tuple(pair) not in catalog:
                    raise ScenarioError(f"funnel override for edge {pair} which no graph contains")
        object.__setattr__(self, "overrides_y", dict(self.overrides_y))
        object.__setattr__(self, "overrides_z", dict(self.overrides_z))

    @property
    def n_steps(self) -> int:
        return steps_in(self.t_end, self.dt)

    def funnel(self, pair: Pair, channel: str) -> PerformanceFunction:
        if channel == "position":
            return self.overrides_y.get(pair, self.funnel_y)
        if channel == "velocity":
            return self.overrides_z.get(pair, self.funnel_z)
        raise ValueError(f"unknown channel {channel!r}")

    def funnels(self, graph: Graph, channel: str) -> list[PerformanceFunction]:
        return [self.funnel(pair, channel) for pair in graph.edges]

    def alpha_bars(self) -> tuple[float, float]:
        """Exact suprema of the contraction rates, maximized over all funnels."""
        ay = max(alpha_bar(pf) for pf in [self.funnel_y, *self.overrides_y.values()])
        az = max(alpha_bar(pf) for pf in [self.funnel_z, *self.overrides_z.values()])
        return ay, az

    def with_dt(self, dt: float) -> "Scenario":
        return replace(self, dt=dt)


@dataclass(frozen=True)
class Sample:
    t: float
    x: np.ndarray
    v: np.ndarray
    graph_id: str
    edges: tuple[Pair, ...]
    y: np.ndarray
    z: np.ndarray
    rho_y: float  # base position funnel at t
    rho_z: float
    u: np.ndarray
    V: float


@dataclass(frozen=True)
class Event:
    t: float
    kind: str  # "switch" or "guard"
    detail: str


@dataclass
class Trajectory:
    n_agents: int
    edge_catalog: tuple[Pair, ...]
    funnel_y: PerformanceFunction
    funnel_z: PerformanceFunction
    samples: list[Sample] = field(default_factory=list)
    events: list[Event] = field(default_factory=list)
    gains_feasible: bool | None = None
    jointly_connected: bool | None = None
    completed: bool = False

    def __len__(self):
        return len(self.samples)

    @property
    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.samples])

    @property
    def positions(self) -> np.ndarray:
        return np.array([s.x for s in self.samples]).reshape(len(self.samples), self.n_agents)

    @property
    def velocities(self) -> np.ndarray:
        return np.array([s.v for s in self.samples]).reshape(len(self.samples), self.n_agents)


class _Topology:
    """Per-graph data reused across every step spent on that graph."""

    def __init__(self, gid: str, graph: Graph, scenario: Scenario):
        self.gid = gid
        self.graph = graph
        self.B: IncidenceMatrix = build_incidence(graph)
        self.funnels_y = scenario.funnels(graph, "position")
        self.funnels_z = scenario.funnels(graph, "velocity")


def _topology(graph: Graph, scenario: Scenario, cache: dict | None = None, gid: str = "") -> _Topology:
    if cache is None:
        return _Topology(gid, graph, scenario)
    if gid not in cache:
        cache[gid] = _Topology(gid, graph, scenario)
    return cache[gid]


def check_feasibility(scenario: Scenario, state: SystemState, graph: Graph) -> dict[Pair, float]:
    """Verify every edge of ``graph`` starts strictly inside both funnels.

    Returns the per-edge margin ``min(1 - |y_hat|, 1 - |z_hat|)``; raises
    InfeasibleActivation on the first edge that is not inside.
    """
    margins: dict[Pair, float] = {}
    for pair in graph.edges:
        i, j = pair
        worst = math.inf
        for channel, values in zip(CHANNELS, (state.x, state.v)):
            s = float(values[i - 1] - values[j - 1])
            bound = float(rho(scenario.funnel(pair, channel), state.t))
            s_hat = s / bound
            if not abs(s_hat) < 1:
                raise InfeasibleActivation(
                    s_hat, bound=bound, state_value=s, pair=pair, channel=channel, t=state.t
                )
            worst = min(worst, 1 - abs(s_hat))
        margins[pair] = worst
    return margins


def _rhs(t, x, v, topo: _Topology, phi: float, guard: float | None):
    u, by, bz = control_terms(topo.B, x, v, topo.funnels_y, topo.funnels_z, t, phi, guard=guard)
    return u, by.clamped + bz.clamped


def derivative(state: SystemState, graph: Graph, scenario: Scenario) -> tuple[np.ndarray, np.ndarray]:
    """Closed-loop vector field ``(x_dot, v_dot) = (v, u)`` at an observed state."""
    topo = _topology(graph, scenario)
    u, _ = _rhs(state.t, state.x, state.v, topo, scenario.gains.phi, None)
    return state.v.copy(), u


def step_rk4(
    state: SystemState,
    dt: float,
    graph: Graph,
    scenario: Scenario,
    events: list[Event] | None = None,
    *,
    _topo: _Topology | None = None,
    t_next: float | None = None,
) -> SystemState:
    """Advance one classical RK4 step on a fixed graph.

    Stage probes use guarded transforms: a stage with ``|s_hat| >= 1 - guard``
    is evaluated at the clamped value and reported as a ``guard`` event. A
    non-finite stage derivative raises IntegrationBlowup.
    """
    topo = _topo or _topology(graph, scenario)
    phi = scenario.gains.phi
    guard = scenario.guard
    t, x, v = state.t, state.x, state.v
    h = dt
    stage_times = (t, t + h / 2, t + h / 2, t + h)
    # overflow in a stage probe is caught by the finiteness checks below
    with np.errstate(over="ignore", invalid="ignore"):
        kx = []
        kv = []
        xs, vs = x, v
        for stage, ts in enumerate(stage_times, start=1):
            if stage > 1:
                c = h if stage == 4 else h / 2
                xs = x + c * kx[-1]
                vs = v + c * kv[-1]
            u, clamped = _rhs(ts, xs, vs, topo, phi, guard)
            if not (np.isfinite(u).all() and np.isfinite(vs).all()):
                raise IntegrationBlowup("non-finite stage derivative", t=ts, stage=stage)
            if clamped and events is not None:
                events.append(Event(ts, "guard", f"stage {stage} clamped edges {sorted(set(clamped))} on {topo.gid or 'graph'}"))
            kx.append(vs)
            kv.append(u)
        x_new = x + (h / 6) * (kx[0] + 2 * kx[1] + 2 * kx[2] + kx[3])
        v_new = v + (h / 6) * (kv[0] + 2 * kv[1] + 2 * kv[2] + kv[3])
        if not (np.isfinite(x_new).all() and np.isfinite(v_new).all()):
            raise IntegrationBlowup("non-finite state after step", t=t + h, stage=4)
    return SystemState(t + h if t_next is None else t_next, x_new, v_new)


def _segment_plan(scenario: Scenario) -> list[tuple[str, int]]:
    return [(gid, steps_in(d, scenario.dt)) for gid, d in scenario.schedule.segments]


def _graph_at_step(plan: list[tuple[str, int]], cyclic: bool, k: int) -> tuple[int, bool]:
    """Segment index active at step ``k`` and whether ``k`` starts that segment."""
    period = sum(n for _, n in plan)
    local = k % period if cyclic else k
    acc = 0
    for idx, (_, n) in enumerate(plan):
        if local < acc + n:
            return idx, local == acc
        acc += n
    return len(plan) - 1, False


def _record(traj: Trajectory, state: SystemState, topo: _Topology, scenario: Scenario, V_fn) -> None:
    B = topo.B.entries
    u, _, _ = control_terms(topo.B, state.x, state.v, topo.funnels_y, topo.funnels_z, state.t, scenario.gains.phi)
    traj.samples.append(
        Sample(
            t=state.t,
            x=state.x,
            v=state.v,
            graph_id=topo.gid,
            edges=topo.graph.edges,
            y=B.T @ state.x,
            z=B.T @ state.v,
            rho_y=float(rho(scenario.funnel_y, state.t)),
            rho_z=float(rho(scenario.funnel_z, state.t)),
            u=u,
            V=V_fn(state, topo.graph, scenario),
        )
    )


def simulate(scenario: Scenario) -> Trajectory:
    """Integrate the closed loop from 0 to ``t_end``.

    Gain infeasibility and missing joint connectivity only warn; the verdicts
    are stored on the trajectory. Any funnel breach at an activation instant
    or at an observed step, and any integrator blowup, raises
    SimulationHalted carrying the partial trajectory.
    """
    from .analysis import lyapunov

    schedule = scenario.schedule
    report = validate_gains(scenario.gains, *scenario.alpha_bars())
    joint = is_jointly_connected(schedule)
    if not report.feasible:
        warnings.warn(f"gain conditions not met: margins {report.margins}", stacklevel=2)
    if not joint:
        warnings.warn("schedule is not jointly connected", stacklevel=2)
    traj = Trajectory(
        n_agents=scenario.n_agents,
        edge_catalog=schedule.edge_catalog(),
        funnel_y=scenario.funnel_y,
        funnel_z=scenario.funnel_z,
        gains_feasible=report.feasible,
        jointly_connected=joint,
    )
    plan = _segment_plan(scenario)
    cache: dict[str, _Topology] = {}
    dt = scenario.dt
    stride = scenario.sample_stride
    state = SystemState(0.0, scenario.initial.x, scenario.initial.v)
    try:
        for k in range(scenario.n_steps + 1):
            idx, starts = _graph_at_step(plan, schedule.cyclic, k)
            gid = plan[idx][0]
            topo = _topology(schedule.graphs[gid], scenario, cache, gid)
            if k == 0 or starts:
                check_feasibility(scenario, state, topo.graph)
                traj.events.append(Event(state.t, "switch", f"activate {gid}"))
            if k % stride == 0 or k == scenario.n_steps:
                _record(traj, state, topo, scenario, lyapunov)
            if k == scenario.n_steps:
                break
            state = step_rk4(state, dt, topo.graph, scenario, traj.events, _topo=topo, t_next=(k + 1) * dt)
            # observed states are never clamped: a breach here is a hard error
            transform_edges(topo.B.entries.T @ state.x, topo.funnels_y, state.t, pairs=topo.graph.edges, channel="position")
            transform_edges(topo.B.entries.T @ state.v, topo.funnels_z, state.t, pairs=topo.graph.edges, channel="velocity")
    except (FunnelViolation, IntegrationBlowup) as exc:
        log.error("halting at t=%s: %s", state.t, exc)
        raise SimulationHalted(traj, exc) from exc
    traj.completed = True
    return traj
