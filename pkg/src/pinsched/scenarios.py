"""Scenario generators (random, latency-critical heavy, dynamic) and run metrics."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
import yaml

from .profiles import (PhaseState, SchemaError, WorkloadClass, WorkloadKind,
                       _check_keys, _number, dump_phase_pattern, parse_phase_pattern)
from .sim import Arrival, RunTrace, Scenario, account_core_hours, replay

KIND_ORDER = (WorkloadKind.BATCH, WorkloadKind.LATENCY_CRITICAL, WorkloadKind.STREAMING)

UNIFORM_MIX = {WorkloadKind.BATCH: 1 / 3, WorkloadKind.LATENCY_CRITICAL: 1 / 3,
               WorkloadKind.STREAMING: 1 / 3}
LATENCY_HEAVY_MIX = {WorkloadKind.BATCH: 0.15, WorkloadKind.LATENCY_CRITICAL: 0.70,
                     WorkloadKind.STREAMING: 0.15}

DEFAULT_HORIZON = 1800.0
DEFAULT_WINDOW = 600.0
DYNAMIC_TOTAL = 24
# Offset of the dynamic scenario from the scheduler clock; activations on a
# tick boundary would always go unseen for a whole monitoring window.
DEFAULT_DYNAMIC_START = 15.0


class ScenarioError(ValueError):
    pass


class ScenarioKind(str, enum.Enum):
    RANDOM = "random"
    LATENCY_HEAVY = "latency_heavy"
    DYNAMIC = "dynamic"


def instance_count(sr: float, core_count: int = 12) -> int:
    if not sr > 0:
        raise ScenarioError("subscription ratio must be positive")
    return int(math.floor(sr * core_count + 0.5))


def _draw_classes(n: int, rng: np.random.Generator, classes: Sequence[WorkloadClass],
                  mix: Mapping[WorkloadKind, float]) -> list[int]:
    if not classes:
        raise ScenarioError("no workload classes to draw from")
    pools = {k: [c.class_id for c in classes if c.kind is k] for k in KIND_ORDER}
    kinds = [k for k in KIND_ORDER if pools[k] and mix.get(k, 0.0) > 0]
    if not kinds:
        raise ScenarioError("class mix selects no available workload kind")
    weights = np.array([mix[k] for k in kinds], dtype=float)
    weights /= weights.sum()
    out = []
    for _ in range(n):
        kind = kinds[rng.choice(len(kinds), p=weights)]
        pool = pools[kind]
        out.append(pool[rng.integers(len(pool))])
    return out


def generate_random(sr: float, seed: int, classes: Sequence[WorkloadClass], *,
                    core_count: int = 12, inter_arrival: float = 30.0,
                    horizon: float = DEFAULT_HORIZON,
                    class_mix: Mapping[WorkloadKind, float] | None = None) -> Scenario:
    """round(sr * core_count) arrivals, one every ``inter_arrival`` seconds."""
    n = instance_count(sr, core_count)
    rng = np.random.default_rng(seed)
    ids = _draw_classes(n, rng, classes, class_mix or UNIFORM_MIX)
    arrivals = tuple(Arrival(k * inter_arrival, c) for k, c in enumerate(ids))
    return Scenario(ScenarioKind.RANDOM.value, arrivals, horizon, seed, sr)


def generate_latency_heavy(sr: float, seed: int, classes: Sequence[WorkloadClass], *,
                           core_count: int = 12, inter_arrival: float = 30.0,
                           horizon: float = DEFAULT_HORIZON,
                           class_mix: Mapping[WorkloadKind, float] | None = None) -> Scenario:
    mix = dict(class_mix or LATENCY_HEAVY_MIX)
    if not any(c.kind is WorkloadKind.LATENCY_CRITICAL for c in classes):
        raise ScenarioError("latency-heavy scenario needs at least one latency-critical class")
    if not mix.get(WorkloadKind.LATENCY_CRITICAL, 0.0) > 0:
        raise ScenarioError("latency-heavy mix gives latency-critical classes zero weight")
    n = instance_count(sr, core_count)
    rng = np.random.default_rng(seed)
    ids = _draw_classes(n, rng, classes, mix)
    arrivals = tuple(Arrival(k * inter_arrival, c) for k, c in enumerate(ids))
    return Scenario(ScenarioKind.LATENCY_HEAVY.value, arrivals, horizon, seed, sr)


def activation_pattern(group: int, n_groups: int, window: float):
    phases = []
    if group > 0:
        phases.append((group * window, PhaseState.IDLE))
    phases.append((window, PhaseState.ACTIVE))
    if group < n_groups - 1:
        phases.append(((n_groups - 1 - group) * window, PhaseState.IDLE))
    return tuple(phases)


def generate_dynamic(batch_size: int, seed: int, classes: Sequence[WorkloadClass], *,
                     total: int = DYNAMIC_TOTAL, window: float = DEFAULT_WINDOW,
                     core_count: int = 12, start: float = DEFAULT_DYNAMIC_START,
                     class_mix: Mapping[WorkloadKind, float] | None = None) -> Scenario:
    """All instances placed at ``start``, active in consecutive groups of ``batch_size``.

    Activation cycles with period ``total / batch_size * window``; the
    scenario horizon is one full cycle after ``start``.
    """
    if batch_size not in (6, 12):
        raise ScenarioError(f"batch size must be 6 or 12, got {batch_size}")
    if total % batch_size:
        raise ScenarioError("total instances must be a multiple of the batch size")
    rng = np.random.default_rng(seed)
    ids = _draw_classes(total, rng, classes, class_mix or UNIFORM_MIX)
    order = rng.permutation(total)
    group_of = np.empty(total, dtype=int)
    group_of[order] = np.arange(total) // batch_size
    n_groups = total // batch_size
    arrivals = tuple(Arrival(start, c, activation_pattern(int(g), n_groups, window))
                     for c, g in zip(ids, group_of))
    return Scenario(ScenarioKind.DYNAMIC.value, arrivals, start + n_groups * window, seed,
                    total / core_count, batch_size)


@dataclass(frozen=True)
class ScenarioConfig:
    kind: ScenarioKind
    subscription_ratio: float = 1.0
    seed: int = 0
    class_mix: Mapping[WorkloadKind, float] | None = None
    dynamic_batch_size: int = 12
    core_count: int = 12
    inter_arrival: float = 30.0
    horizon: float = DEFAULT_HORIZON
    window: float = DEFAULT_WINDOW

    def __post_init__(self):
        object.__setattr__(self, "kind", ScenarioKind(self.kind))
        if not self.subscription_ratio > 0:
            raise ScenarioError("subscription ratio must be positive")
        if self.dynamic_batch_size not in (6, 12):
            raise ScenarioError("dynamic batch size must be 6 or 12")

    @property
    def total_instances(self) -> int:
        if self.kind is ScenarioKind.DYNAMIC:
            return DYNAMIC_TOTAL
        return instance_count(self.subscription_ratio, self.core_count)

    def generate(self, classes: Sequence[WorkloadClass]) -> Scenario:
        if self.kind is ScenarioKind.DYNAMIC:
            return generate_dynamic(self.dynamic_batch_size, self.seed, classes,
                                    window=self.window, core_count=self.core_count,
                                    class_mix=self.class_mix)
        gen = generate_random if self.kind is ScenarioKind.RANDOM else generate_latency_heavy
        return gen(self.subscription_ratio, self.seed, classes, core_count=self.core_count,
                   inter_arrival=self.inter_arrival, horizon=self.horizon,
                   class_mix=self.class_mix)


# ---------------------------------------------------------------------------
# Metrics


@dataclass
class RunMetrics:
    mean_normalized_performance: float
    total_core_hours: float
    per_instance: dict[int, float] = field(default_factory=dict)
    per_class: dict[str, float] = field(default_factory=dict)
    per_kind: dict[str, float] = field(default_factory=dict)
    end_time: float = 0.0
    trace: RunTrace | None = field(default=None, repr=False, compare=False)

    def as_dict(self) -> dict:
        return {
            "mean_normalized_performance": self.mean_normalized_performance,
            "total_core_hours": self.total_core_hours,
            "per_kind": dict(self.per_kind),
            "per_class": dict(self.per_class),
            "end_time": self.end_time,
        }


def _mean(values) -> float:
    values = list(values)
    return math.fsum(values) / len(values)


def compute_metrics(trace: RunTrace) -> RunMetrics:
    """Per-instance performance relative to isolation, averaged, plus core-hours."""
    totals = replay(trace)
    per_instance = {}
    for inst in trace.instances:
        k = inst.instance_id
        active = totals.active_time[k]
        if active <= 0:
            perf = 1.0
        elif inst.is_batch:
            perf = inst.service_demand / active
        else:
            perf = totals.perf_integral[k] / active
        per_instance[k] = perf

    by_class: dict[str, list[float]] = {}
    by_kind: dict[str, list[float]] = {}
    for inst in trace.instances:
        name = trace.class_names[inst.class_id] if trace.class_names else str(inst.class_id)
        by_class.setdefault(name, []).append(per_instance[inst.instance_id])
        by_kind.setdefault(inst.kind.value, []).append(per_instance[inst.instance_id])

    return RunMetrics(
        mean_normalized_performance=_mean(per_instance.values()),
        total_core_hours=account_core_hours(trace),
        per_instance=per_instance,
        per_class={k: _mean(v) for k, v in sorted(by_class.items())},
        per_kind={k.value: _mean(by_kind[k.value]) for k in KIND_ORDER if k.value in by_kind},
        end_time=trace.end_time,
        trace=trace,
    )


# ---------------------------------------------------------------------------
# Scenario documents

_SCENARIO_KEYS = {"kind", "seed", "subscription_ratio", "batch_size", "horizon", "arrivals"}
_ARRIVAL_KEYS = {"time", "class", "phase_pattern", "service_demand"}


def scenario_to_dict(scenario: Scenario, classes: Sequence[WorkloadClass]) -> dict:
    arrivals = []
    for a in scenario.arrivals:
        entry = {"time": float(a.time), "class": classes[a.class_id].name}
        if a.phase_pattern is not None:
            entry["phase_pattern"] = dump_phase_pattern(a.phase_pattern)
        if a.service_demand is not None:
            entry["service_demand"] = float(a.service_demand)
        arrivals.append(entry)
    return {
        "kind": scenario.kind,
        "seed": scenario.seed,
        "subscription_ratio": scenario.subscription_ratio,
        "batch_size": scenario.batch_size,
        "horizon": float(scenario.horizon),
        "arrivals": arrivals,
    }


def scenario_from_dict(doc, classes: Sequence[WorkloadClass]) -> Scenario:
    _check_keys(doc, _SCENARIO_KEYS, "<root>", required=("kind", "arrivals"))
    try:
        kind = ScenarioKind(doc["kind"]).value
    except ValueError:
        raise SchemaError(f"unknown scenario kind {doc['kind']!r}", "kind") from None
    names = {c.name: c.class_id for c in classes}
    if not isinstance(doc["arrivals"], list):
        raise SchemaError("must be a list", "arrivals")
    arrivals = []
    for k, a in enumerate(doc["arrivals"]):
        path = f"arrivals[{k}]"
        _check_keys(a, _ARRIVAL_KEYS, path, required=("time", "class"))
        if a["class"] not in names:
            raise SchemaError(f"unknown class {a['class']!r}", f"{path}.class")
        pattern = None
        if "phase_pattern" in a:
            pattern = parse_phase_pattern(a["phase_pattern"], f"{path}.phase_pattern")
        demand = None
        if a.get("service_demand") is not None:
            demand = _number(a["service_demand"], f"{path}.service_demand")
        arrivals.append(Arrival(_number(a["time"], f"{path}.time"), names[a["class"]],
                                pattern, demand))
    horizon = _number(doc.get("horizon", 0.0), "horizon")
    return Scenario(kind, tuple(arrivals), horizon, doc.get("seed"),
                    doc.get("subscription_ratio"), doc.get("batch_size"))


def save_scenario(scenario: Scenario, classes: Sequence[WorkloadClass], path) -> None:
    with open(path, "w") as fh:
        yaml.safe_dump(scenario_to_dict(scenario, classes), fh, sort_keys=False)


def load_scenario(path, classes: Sequence[WorkloadClass]) -> Scenario:
    with open(Path(path)) as fh:
        return scenario_from_dict(yaml.safe_load(fh), classes)
