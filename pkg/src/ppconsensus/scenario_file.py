"""Strict TOML scenario files.

Layout::

    [agents]            count, x0, v0
    [funnels.position]  rho0, rho_inf, decay   (+ optional [funnels.position.overrides])
    [funnels.velocity]  rho0, rho_inf, decay   (+ optional [funnels.velocity.overrides])
    [gains]             h1..h6, phi, a2, a3, a4
    [schedule]          cyclic, dwell_min?, window_max?, [schedule.graphs], [[schedule.segments]]
    [integration]       t_end, dt, sample_stride?, guard?
    [output]            csv?

Overrides are keyed ``"i-j"``, e.g. ``"1-2" = { rho0 = 4.0, rho_inf = 0.1, decay = 1.0 }``.
Unknown keys are rejected. Every error names the line it refers to when it can.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from importlib import resources
from os import PathLike
from pathlib import Path
from typing import Any

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .controller import GainSet
from .errors import ConsensusError, ScenarioError
from .performance import PerformanceFunction
from .simulator import Scenario, SystemState, check_feasibility
from .topology import Graph, SwitchingSchedule

_HEADER = re.compile(r"^\s*\[\[?\s*([^\]]+?)\s*\]\]?\s*(#.*)?$")
_KEY = re.compile(r"^\s*(\"[^\"]*\"|'[^']*'|[A-Za-z0-9_-]+)\s*=")

_AGENT_KEYS = {"count", "x0", "v0"}
_FUNNEL_KEYS = {"rho0", "rho_inf", "decay"}
_GAIN_KEYS = {"h1", "h2", "h3", "h4", "h5", "h6", "phi", "a2", "a3", "a4"}
_SCHEDULE_KEYS = {"cyclic", "dwell_min", "window_max", "graphs", "segments"}
_INTEGRATION_KEYS = {"t_end", "dt", "sample_stride", "guard"}
_OUTPUT_KEYS = {"csv"}
_TOP_KEYS = {"agents", "funnels", "gains", "schedule", "integration", "output"}


@dataclass(frozen=True)
class ScenarioFile:
    scenario: Scenario
    csv_path: Path | None
    source: str


class _Locator:
    """Maps ``(table, key)`` to the 1-based line where it is written."""

    def __init__(self, text: str):
        self.tables: dict[str, int] = {}
        self.keys: dict[tuple[str, str], int] = {}
        table = ""
        for lineno, line in enumerate(text.splitlines(), start=1):
            m = _HEADER.match(line)
            if m:
                table = m.group(1).replace(" ", "")
                self.tables.setdefault(table, lineno)
                continue
            m = _KEY.match(line)
            if m:
                self.keys.setdefault((table, m.group(1).strip("\"'")), lineno)

    def line(self, table: str, key: str | None = None) -> int | None:
        if key is not None and (table, key) in self.keys:
            return self.keys[(table, key)]
        if key is not None:
            # inline tables or dotted parents, e.g. key "G1" inside schedule.graphs
            for (tab, k), lineno in self.keys.items():
                if k == key and tab.startswith(table):
                    return lineno
        return self.tables.get(table)


class _Reader:
    def __init__(self, data: dict, locator: _Locator):
        self.data = data
        self.loc = locator

    def fail(self, message: str, table: str, key: str | None = None):
        raise ScenarioError(f"[{table}] {message}", self.loc.line(table, key))

    def table(self, path: str, allowed: set[str], required: bool = True) -> dict:
        node: Any = self.data
        for part in path.split("."):
            if not isinstance(node, dict) or part not in node:
                if required:
                    raise ScenarioError(f"missing table [{path}]")
                return {}
            node = node[part]
        if not isinstance(node, dict):
            self.fail("must be a table", path)
        for key in node:
            if key not in allowed:
                self.fail(f"unknown key {key!r}", path, key)
        return node

    def number(self, tab: dict, path: str, key: str, default=None, kind=float):
        if key not in tab:
            if default is None:
                self.fail(f"missing key {key!r}", path)
            return default
        value = tab[key]
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            self.fail(f"{key} must be a number, got {value!r}", path, key)
        if kind is int and not isinstance(value, int):
            self.fail(f"{key} must be an integer, got {value!r}", path, key)
        return kind(value)

    def vector(self, tab: dict, path: str, key: str, n: int) -> list[float]:
        value = tab.get(key)
        if not isinstance(value, list):
            self.fail(f"{key} must be a list of {n} numbers", path, key)
        if len(value) != n or any(isinstance(a, bool) or not isinstance(a, (int, float)) for a in value):
            self.fail(f"{key} must be a list of {n} numbers, got {value!r}", path, key)
        return [float(a) for a in value]

    def funnel(self, tab: dict, path: str, key: str | None = None) -> PerformanceFunction:
        for k in tab:
            if k not in _FUNNEL_KEYS:
                self.fail(f"unknown key {k!r}", path, k)
        args = {k: self.number(tab, path, k) for k in ("rho0", "rho_inf", "decay")}
        try:
            return PerformanceFunction(**args)
        except ConsensusError as exc:
            self.fail(str(exc), path, key)


def _pair(key: str) -> tuple[int, int] | None:
    m = re.fullmatch(r"\s*(\d+)\s*-\s*(\d+)\s*", key)
    if not m:
        return None
    i, j = int(m.group(1)), int(m.group(2))
    return (min(i, j), max(i, j))


def _overrides(r: _Reader, base: dict, path: str) -> dict:
    table = base.get("overrides", {})
    if not isinstance(table, dict):
        r.fail("overrides must be a table", path, "overrides")
    result = {}
    for key, spec in table.items():
        pair = _pair(key)
        if pair is None:
            r.fail(f"override key {key!r} is not an edge like \"1-2\"", f"{path}.overrides", key)
        if not isinstance(spec, dict):
            r.fail(f"override {key!r} must be a table", f"{path}.overrides", key)
        result[pair] = r.funnel(spec, f"{path}.overrides", key)
    return result


def loads_scenario(text: str, base_dir: Path | None = None, source: str = "<string>") -> ScenarioFile:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        line = getattr(exc, "lineno", None)
        if line is None:
            m = re.search(r"line (\d+)", str(exc))
            line = int(m.group(1)) if m else None
        raise ScenarioError(f"syntax error: {getattr(exc, 'msg', exc)}", line) from None
    loc = _Locator(text)
    r = _Reader(data, loc)
    for key in data:
        if key not in _TOP_KEYS:
            raise ScenarioError(f"unknown table [{key}]", loc.line(key))

    agents = r.table("agents", _AGENT_KEYS)
    n = r.number(agents, "agents", "count", kind=int)
    if n < 1:
        r.fail("count must be positive", "agents", "count")
    x0 = r.vector(agents, "agents", "x0", n)
    v0 = r.vector(agents, "agents", "v0", n)

    r.table("funnels", {"position", "velocity"})
    pos = r.table("funnels.position", _FUNNEL_KEYS | {"overrides"})
    vel = r.table("funnels.velocity", _FUNNEL_KEYS | {"overrides"})
    funnel_y = r.funnel({k: v for k, v in pos.items() if k != "overrides"}, "funnels.position")
    funnel_z = r.funnel({k: v for k, v in vel.items() if k != "overrides"}, "funnels.velocity")
    overrides_y = _overrides(r, pos, "funnels.position")
    overrides_z = _overrides(r, vel, "funnels.velocity")

    gtab = r.table("gains", _GAIN_KEYS)
    try:
        gains = GainSet(**{k: r.number(gtab, "gains", k) for k in sorted(_GAIN_KEYS)})
    except ConsensusError as exc:
        field_name = next((k for k in _GAIN_KEYS if f"gain {k} " in str(exc)), None)
        r.fail(str(exc), "gains", field_name)

    stab = r.table("schedule", _SCHEDULE_KEYS)
    cyclic = stab.get("cyclic", True)
    if not isinstance(cyclic, bool):
        r.fail("cyclic must be true or false", "schedule", "cyclic")
    graphs_tab = r.table("schedule.graphs", set(stab.get("graphs", {})))
    graphs = {}
    for gid, edges in graphs_tab.items():
        if not isinstance(edges, list) or not all(isinstance(e, list) for e in edges):
            r.fail(f"graph {gid!r} must be a list of [i, j] pairs", "schedule.graphs", gid)
        try:
            graphs[gid] = Graph(n, tuple(tuple(e) for e in edges))
        except (ConsensusError, TypeError) as exc:
            r.fail(f"graph {gid!r}: {exc}", "schedule.graphs", gid)
    segs = stab.get("segments")
    if not isinstance(segs, list) or not segs:
        r.fail("segments must be a non-empty array of tables", "schedule", "segments")
    segments = []
    for k, seg in enumerate(segs):
        if not isinstance(seg, dict) or set(seg) != {"graph", "duration"}:
            r.fail(f"segment {k + 1} must have exactly the keys 'graph' and 'duration'", "schedule.segments")
        segments.append((seg["graph"], r.number(seg, "schedule.segments", "duration")))
    try:
        schedule = SwitchingSchedule(
            tuple(segments),
            graphs,
            cyclic=cyclic,
            dwell_min=stab.get("dwell_min"),
            window_max=stab.get("window_max"),
        )
    except ConsensusError as exc:
        r.fail(str(exc), "schedule")

    itab = r.table("integration", _INTEGRATION_KEYS)
    t_end = r.number(itab, "integration", "t_end")
    dt = r.number(itab, "integration", "dt")
    stride = r.number(itab, "integration", "sample_stride", default=10, kind=int)
    guard = r.number(itab, "integration", "guard", default=1e-9)

    otab = r.table("output", _OUTPUT_KEYS, required=False)
    csv_path = None
    if "csv" in otab:
        if not isinstance(otab["csv"], str):
            r.fail("csv must be a path string", "output", "csv")
        csv_path = Path(otab["csv"])
        if base_dir is not None and not csv_path.is_absolute():
            csv_path = base_dir / csv_path

    try:
        scenario = Scenario(
            n_agents=n,
            initial=SystemState(0.0, x0, v0),
            schedule=schedule,
            funnel_y=funnel_y,
            funnel_z=funnel_z,
            gains=gains,
            t_end=t_end,
            dt=dt,
            sample_stride=stride,
            guard=guard,
            overrides_y=overrides_y,
            overrides_z=overrides_z,
        )
    except ScenarioError as exc:
        msg = str(exc)
        key = next((k for k in ("dt", "t_end", "sample_stride", "guard") if msg.startswith(k)), "dt")
        r.fail(msg, "integration", key)
    # raises InfeasibleActivation (a halt, not an input error) when the first
    # graph's edges start outside their funnels
    check_start(scenario)
    return ScenarioFile(scenario, csv_path, source)


def check_start(scenario: Scenario) -> dict:
    """Assumption check for the first segment's graph at t = 0."""
    gid = scenario.schedule.segments[0][0]
    return check_feasibility(scenario, scenario.initial, scenario.schedule.graphs[gid])


def parse_scenario(path: str | PathLike) -> Scenario:
    return load_scenario_file(path).scenario


def load_scenario_file(path: str | PathLike) -> ScenarioFile:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ScenarioError(f"cannot read {path}: {exc.strerror or exc}") from None
    return loads_scenario(text, base_dir=path.parent, source=str(path))


def paper_scenario_text() -> str:
    return resources.files("ppconsensus").joinpath("scenarios/paper.toml").read_text(encoding="utf-8")


def paper_scenario() -> Scenario:
    """The bundled five-agent reproduction scenario."""
    return loads_scenario(paper_scenario_text(), source="paper.toml").scenario
