"""Deterministic discrete-time simulator for a single consolidated host.

Time advances from event to event (scheduler tick, arrival, phase flip,
batch completion). Slowdowns are piecewise constant in between and come
from a ground-truth composition of the pairwise slowdown matrix.
"""
from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from typing import IO, NamedTuple, Sequence

from .profiles import (PhaseState, Profile, SlowdownMatrix, WorkloadClass,
                       WorkloadKind, ResourceKind)
from .scheduler import (HostModel, InstanceState, PlacementError, Policy,
                        SchedulerParams, schedule_tick, select_pinning,
                        workload_interference)

# Relative slack when deciding that a batch job has completed its work.
_COMPLETION_RTOL = 1e-12
_FLIP_ATOL = 1e-9


class GroundTruth(str, enum.Enum):
    PAIRWISE_PRODUCT = "pairwise_product"
    PAIRWISE_MAX = "pairwise_max"
    ESTIMATOR = "estimator"


@dataclass(frozen=True)
class GroundTruthModel:
    mode: GroundTruth
    S: SlowdownMatrix

    def slowdown(self, i: int, colocated: Sequence[int]) -> float:
        return ground_truth_slowdown(i, colocated, self)


def ground_truth_slowdown(i: int, colocated: Sequence[int], model: GroundTruthModel) -> float:
    """Actual slowdown of class ``i`` next to the active classes ``colocated``."""
    if not colocated:
        return 1.0
    mode = GroundTruth(model.mode)
    vals = sorted(float(model.S.entries[i, j]) for j in colocated)
    if len(vals) == 1:
        return vals[0]
    if mode is GroundTruth.PAIRWISE_PRODUCT:
        return math.prod(vals)
    if mode is GroundTruth.PAIRWISE_MAX:
        return vals[-1]
    return workload_interference(i, list(colocated), model.S)


@dataclass(frozen=True)
class Arrival:
    time: float
    class_id: int
    phase_pattern: tuple[tuple[float, PhaseState], ...] | None = None
    service_demand: float | None = None


@dataclass(frozen=True)
class Scenario:
    """An arrival schedule; services live until ``horizon`` seconds."""

    kind: str
    arrivals: tuple[Arrival, ...]
    horizon: float = 0.0
    seed: int | None = None
    subscription_ratio: float | None = None
    batch_size: int | None = None


@dataclass(frozen=True)
class SimConfig:
    seed: int = 0
    tick_interval: float = 30.0
    inter_arrival: float = 30.0
    host: HostModel = field(default_factory=HostModel)
    params: SchedulerParams = field(default_factory=SchedulerParams)
    ground_truth: GroundTruth = GroundTruth.PAIRWISE_PRODUCT
    # None: use the scenario's horizon.
    horizon: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "ground_truth", GroundTruth(self.ground_truth))
        if not self.tick_interval > 0:
            raise ValueError("tick_interval must be positive")
        if not self.inter_arrival >= 0:
            raise ValueError("inter_arrival must be non-negative")


@dataclass
class WorkloadInstance:
    instance_id: int
    class_id: int
    kind: WorkloadKind
    arrival_time: float
    phase_pattern: tuple[tuple[float, PhaseState], ...]
    service_demand: float | None = None
    state: InstanceState = InstanceState.PENDING
    progress: float = 0.0
    perf_log: list[tuple[float, float, float]] = field(default_factory=list)
    pinned_core: int | None = None
    slowdown: float = 1.0
    running_time: float = 0.0
    finish_time: float | None = None
    # phase cursor
    _phase: int = 0
    _cycle: int = 0
    _window_active: float = 0.0

    @property
    def is_batch(self) -> bool:
        return self.kind is WorkloadKind.BATCH

    @property
    def live(self) -> bool:
        return self.state in (InstanceState.RUNNING, InstanceState.IDLE)

    def _phase_ends(self) -> list[float]:
        ends, acc = [], 0.0
        for d, _ in self.phase_pattern:
            acc += d
            ends.append(acc)
        return ends

    @property
    def next_flip(self) -> float:
        states = {s for _, s in self.phase_pattern}
        if len(states) < 2:
            return math.inf
        ends = self._phase_ends()
        return self.arrival_time + self._cycle * ends[-1] + ends[self._phase]

    def _step_phase(self) -> PhaseState:
        self._phase += 1
        if self._phase == len(self.phase_pattern):
            self._phase = 0
            self._cycle += 1
        return self.phase_pattern[self._phase][1]

    def completion_time(self, now: float) -> float:
        if not self.is_batch or self.state is not InstanceState.RUNNING:
            return math.inf
        return now + (self.service_demand - self.progress) * self.slowdown

    def normalized_performance(self) -> float:
        """Performance relative to isolated execution, from the local log."""
        if self.is_batch:
            if self.running_time <= 0:
                return 1.0
            return self.progress / self.running_time
        span = math.fsum(t1 - t0 for t0, t1, _ in self.perf_log)
        if span <= 0:
            return 1.0
        return math.fsum((t1 - t0) * p for t0, t1, p in self.perf_log) / span


class Event(NamedTuple):
    time: float
    event: str
    instance: int | None
    core: int | None
    slowdown: float | None


TRACE_FIELDS = Event._fields


@dataclass
class RunTrace:
    policy: Policy
    scenario_kind: str
    host: HostModel
    instances: list[WorkloadInstance]
    events: list[Event]
    end_time: float
    class_names: tuple[str, ...] = ()
    complete: bool = True

    def lines(self) -> list[str]:
        return [json.dumps(dict(zip(TRACE_FIELDS, e))) for e in self.events]


def write_trace(trace: RunTrace, fh: IO[str], metrics: dict | None = None) -> None:
    """Newline-delimited records: time, event, instance, core, slowdown.

    A final ``{"event": "metrics", ...}`` record follows when metrics are given.
    """
    for line in trace.lines():
        fh.write(line + "\n")
    if metrics is not None:
        fh.write(json.dumps({"event": "metrics", **metrics}) + "\n")


class SimState:
    def __init__(self, config: SimConfig, profile: Profile):
        self.config = config
        self.profile = profile
        self.model = GroundTruthModel(config.ground_truth, profile.slowdown)
        self.t = 0.0
        self.instances: list[WorkloadInstance] = []
        self.events: list[Event] = []
        self.classified_idle: set[int] = set()
        self.last_tick = 0.0
        self._emitted: dict[int, float] = {}

    def emit(self, kind, inst=None, core=None, slowdown=None):
        self.events.append(Event(self.t, kind,
                                 None if inst is None else inst.instance_id,
                                 core, slowdown))

    @property
    def live(self) -> list[WorkloadInstance]:
        return [i for i in self.instances if i.live]

    def refresh_slowdowns(self) -> None:
        by_core: dict[int, list[WorkloadInstance]] = {}
        for inst in self.instances:
            if inst.state is InstanceState.RUNNING:
                by_core.setdefault(inst.pinned_core, []).append(inst)
        for inst in self.instances:
            if inst.state is not InstanceState.RUNNING:
                self._emitted.pop(inst.instance_id, None)
                continue
            companions = [o.class_id for o in by_core[inst.pinned_core] if o is not inst]
            inst.slowdown = self.model.slowdown(inst.class_id, companions)
            if self._emitted.get(inst.instance_id) != inst.slowdown:
                self._emitted[inst.instance_id] = inst.slowdown
                self.emit("slowdown", inst, inst.pinned_core, inst.slowdown)

    def advance_to(self, t_next: float) -> None:
        dt = t_next - self.t
        if dt < 0:
            raise ValueError("time cannot move backwards")
        if dt > 0:
            for inst in self.instances:
                if inst.state is not InstanceState.RUNNING:
                    continue
                inst.running_time += dt
                inst._window_active += dt
                if inst.is_batch:
                    inst.progress += dt / inst.slowdown
                perf = 1.0 / inst.slowdown
                log = inst.perf_log
                if log and log[-1][1] == self.t and log[-1][2] == perf:
                    log[-1] = (log[-1][0], t_next, perf)
                else:
                    log.append((self.t, t_next, perf))
        self.t = t_next
        for inst in self.instances:
            if (inst.state is InstanceState.RUNNING and inst.is_batch
                    and inst.progress >= inst.service_demand * (1 - _COMPLETION_RTOL)):
                inst.progress = inst.service_demand
                inst.state = InstanceState.FINISHED
                inst.finish_time = self.t
                self.emit("finish", inst, inst.pinned_core)
        for inst in self.instances:
            if not inst.live:
                continue
            while inst.next_flip <= self.t + _FLIP_ATOL:
                new = inst._step_phase()
                target = InstanceState.RUNNING if new is PhaseState.ACTIVE else InstanceState.IDLE
                if target is not inst.state:
                    inst.state = target
                    self.emit("active" if new is PhaseState.ACTIVE else "idle",
                              inst, inst.pinned_core)
        self.refresh_slowdowns()

    def measured_cpu(self, inst: WorkloadInstance) -> float:
        cpu = float(self.profile.utilization[inst.class_id, ResourceKind.CPU])
        observed = self.t - max(self.last_tick, inst.arrival_time)
        if observed <= 0:
            return cpu if inst.state is InstanceState.RUNNING else 0.0
        return cpu * min(1.0, inst._window_active / observed)

    def running_cores(self) -> list[list[int]]:
        cores: list[list[int]] = [[] for _ in range(self.config.host.core_count)]
        for inst in self.live:
            if inst.instance_id not in self.classified_idle:
                cores[inst.pinned_core].append(inst.class_id)
        return cores

    def arrive(self, inst: WorkloadInstance) -> None:
        params = self.config.params
        if params.policy is Policy.RRS:
            core = inst.instance_id % self.config.host.core_count
        else:
            core = select_pinning(inst.class_id, self.running_cores(), params,
                                  self.profile.utilization, self.profile.slowdown,
                                  self.config.host, inst.instance_id)
        first = inst.phase_pattern[0][1]
        inst.state = InstanceState.RUNNING if first is PhaseState.ACTIVE else InstanceState.IDLE
        inst.pinned_core = core
        self.emit("arrive", inst)
        self.emit("pin", inst, core)
        self.emit("active" if first is PhaseState.ACTIVE else "idle", inst, core)

    def tick(self) -> None:
        params = self.config.params
        live = self.live
        usage = {inst.instance_id: self.measured_cpu(inst) for inst in live}
        self.emit("tick")
        placement = schedule_tick(live, usage, params, self.config.host,
                                  self.profile.utilization, self.profile.slowdown)
        for inst in live:
            core = placement[inst.instance_id]
            if core != inst.pinned_core:
                inst.pinned_core = core
                self.emit("pin", inst, core)
            inst._window_active = 0.0
        if params.policy is not Policy.RRS:
            self.classified_idle = {i for i, u in usage.items() if u < params.idle_cpu_cutoff}
        self.last_tick = self.t


def advance(state: SimState, dt: float) -> SimState:
    """Move the simulation forward by ``dt`` seconds with frozen placements."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    state.advance_to(state.t + dt)
    return state


def make_instances(scenario: Scenario, profile: Profile) -> list[WorkloadInstance]:
    order = sorted(range(len(scenario.arrivals)), key=lambda k: scenario.arrivals[k].time)
    out = []
    for idx, k in enumerate(order):
        a = scenario.arrivals[k]
        cls: WorkloadClass = profile.classes[a.class_id]
        pattern = a.phase_pattern or cls.phase_pattern
        demand = a.service_demand if a.service_demand is not None else cls.service_demand
        if cls.is_batch and not any(s is PhaseState.ACTIVE for _, s in pattern):
            raise ValueError(f"batch arrival {k} ({cls.name}) never becomes active")
        out.append(WorkloadInstance(idx, a.class_id, cls.kind, float(a.time),
                                    tuple(pattern), demand))
    return out


def run(config: SimConfig, scenario: Scenario, profile: Profile) -> RunTrace:
    """Simulate ``scenario`` on one host under ``config``."""
    if not scenario.arrivals:
        raise ValueError("scenario has no arrivals")
    state = SimState(config, profile)
    state.instances = make_instances(scenario, profile)
    horizon = config.horizon if config.horizon is not None else scenario.horizon
    pending = list(state.instances)
    tick_k = 1

    def trace(complete=True) -> RunTrace:
        return RunTrace(config.params.policy, scenario.kind, config.host,
                        state.instances, state.events, state.t,
                        tuple(c.name for c in profile.classes), complete)

    try:
        while True:
            while pending and pending[0].arrival_time <= state.t:
                state.arrive(pending.pop(0))
            state.refresh_slowdowns()

            batch_left = any(i.is_batch and i.state is not InstanceState.FINISHED
                             for i in state.instances)
            if not pending and not batch_left and state.t >= horizon:
                break

            next_tick = tick_k * config.tick_interval
            candidates = [next_tick]
            if pending:
                candidates.append(pending[0].arrival_time)
            if state.t < horizon:
                candidates.append(horizon)
            for inst in state.live:
                candidates.append(inst.next_flip)
                candidates.append(inst.completion_time(state.t))
            t_next = min(candidates)

            state.advance_to(t_next)
            if t_next == next_tick:
                state.tick()
                tick_k += 1
    except PlacementError as exc:
        exc.trace = trace(complete=False)
        raise

    state.emit("end")
    return trace()


# ---------------------------------------------------------------------------
# Trace replay


@dataclass
class ReplayTotals:
    core_seconds: float = 0.0
    active_time: dict[int, float] = field(default_factory=dict)
    perf_integral: dict[int, float] = field(default_factory=dict)


def replay(trace: RunTrace) -> ReplayTotals:
    """Integrate busy cores and per-instance performance from the event list."""
    rrs = Policy(trace.policy) is Policy.RRS
    core: dict[int, int] = {}
    active: dict[int, bool] = {}
    slowdown: dict[int, float] = {}
    totals = ReplayTotals()
    core_pieces: list[float] = []
    active_pieces: dict[int, list[float]] = {}
    perf_pieces: dict[int, list[float]] = {}

    t_prev = None
    for ev in trace.events:
        if t_prev is not None and ev.time > t_prev:
            dt = ev.time - t_prev
            busy = set()
            for i, c in core.items():
                if rrs or active[i]:
                    busy.add(c)
                if active[i]:
                    active_pieces.setdefault(i, []).append(dt)
                    perf_pieces.setdefault(i, []).append(dt / slowdown[i])
            core_pieces.append(dt * len(busy))
        t_prev = ev.time
        i = ev.instance
        if ev.event == "arrive":
            active[i] = False
        elif ev.event == "pin":
            core[i] = ev.core
        elif ev.event == "active":
            active[i] = True
        elif ev.event == "idle":
            active[i] = False
        elif ev.event == "slowdown":
            slowdown[i] = ev.slowdown
        elif ev.event == "finish":
            core.pop(i, None)
            active[i] = False

    totals.core_seconds = math.fsum(core_pieces)
    for inst in trace.instances:
        k = inst.instance_id
        totals.active_time[k] = math.fsum(active_pieces.get(k, []))
        totals.perf_integral[k] = math.fsum(perf_pieces.get(k, []))
    return totals


def account_core_hours(trace: RunTrace) -> float:
    """Time integral of busy cores, in core-hours.

    A core is busy while it hosts an active, unfinished workload. Under RRS,
    which cannot see idleness, any unfinished workload keeps its core busy.
    """
    return replay(trace).core_seconds / 3600.0
