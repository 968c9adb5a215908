"""Workload classes, the pairwise slowdown matrix and the utilization matrix.

Profiles are loaded from YAML documents with two top-level sections,
``classes`` and ``slowdown``. See ``data/default_profile.yaml`` for the
bundled eight-class fixture.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import yaml

# Constant chosen for the IAS first-fit test; see derive_interference_threshold
# for the data-driven alternative.
DEFAULT_INTERFERENCE_THRESHOLD = 1.5

N_RESOURCES = 4


class ProfileError(ValueError):
    """Base class for profile construction and loading problems."""

    def __init__(self, message: str, path: str = ""):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


class IncompleteProfileError(ProfileError):
    pass


class InvalidSampleError(ProfileError):
    pass


class SchemaError(ProfileError):
    pass


class DimensionMismatchError(ProfileError):
    pass


class InvariantViolationError(ProfileError):
    pass


class ResourceKind(enum.IntEnum):
    CPU = 0
    DISK_IO = 1
    NET_IO = 2
    MEM_BW = 3

    @property
    def scope(self) -> "Scope":
        return _SCOPES[self]

    @property
    def key(self) -> str:
        return self.name.lower()


class Scope(enum.Enum):
    CORE_LOCAL = "core_local"
    SOCKET_LOCAL = "socket_local"
    SERVER_GLOBAL = "server_global"


_SCOPES = {
    ResourceKind.CPU: Scope.CORE_LOCAL,
    ResourceKind.DISK_IO: Scope.SERVER_GLOBAL,
    ResourceKind.NET_IO: Scope.SERVER_GLOBAL,
    ResourceKind.MEM_BW: Scope.SOCKET_LOCAL,
}


class WorkloadKind(str, enum.Enum):
    BATCH = "batch"
    LATENCY_CRITICAL = "latency_critical"
    STREAMING = "streaming"


class MetricOrientation(str, enum.Enum):
    COST = "cost"
    THROUGHPUT = "throughput"


class PhaseState(str, enum.Enum):
    ACTIVE = "active"
    IDLE = "idle"


@dataclass(frozen=True)
class UtilizationVector:
    """Isolated demand for (CPU, DiskIO, NetIO, MemBW)."""

    values: tuple[float, float, float, float]

    def __post_init__(self):
        if len(self.values) != N_RESOURCES:
            raise InvariantViolationError(
                f"expected {N_RESOURCES} utilization values, got {len(self.values)}")
        for kind, v in zip(ResourceKind, self.values):
            if not (0.0 <= v <= 1.0) or math.isnan(v):
                raise InvariantViolationError(
                    f"{kind.key} utilization {v!r} outside [0, 1]")

    def __getitem__(self, kind: int) -> float:
        return self.values[kind]


@dataclass(frozen=True)
class WorkloadClass:
    class_id: int
    name: str
    kind: WorkloadKind
    metric_orientation: MetricOrientation
    utilization: UtilizationVector
    phase_pattern: tuple[tuple[float, PhaseState], ...] = ((1.0, PhaseState.ACTIVE),)
    service_demand: float | None = None

    def __post_init__(self):
        if not self.phase_pattern:
            raise InvariantViolationError(f"class {self.name!r}: empty phase pattern")
        object.__setattr__(self, "kind", WorkloadKind(self.kind))
        object.__setattr__(self, "metric_orientation", MetricOrientation(self.metric_orientation))
        object.__setattr__(self, "phase_pattern",
                           tuple((float(d), PhaseState(s)) for d, s in self.phase_pattern))
        for duration, _ in self.phase_pattern:
            if not duration > 0:
                raise InvariantViolationError(
                    f"class {self.name!r}: phase duration {duration!r} must be positive")
        if self.kind is WorkloadKind.BATCH:
            if self.service_demand is None or not self.service_demand > 0:
                raise InvariantViolationError(
                    f"batch class {self.name!r} needs a positive service_demand")

    @property
    def is_batch(self) -> bool:
        return self.kind is WorkloadKind.BATCH


@dataclass(frozen=True, eq=False)
class SlowdownMatrix:
    """N x N pairwise slowdowns; ``entries[i, j]`` is the slowdown of i next to j."""

    entries: np.ndarray

    def __post_init__(self):
        arr = np.array(self.entries, dtype=float)
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
            raise DimensionMismatchError(f"slowdown matrix must be square, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise InvariantViolationError("slowdown entries must be finite")
        bad = np.argwhere(arr < 1.0)
        if bad.size:
            i, j = bad[0]
            raise InvariantViolationError(
                f"slowdown[{i}][{j}] = {arr[i, j]!r} is below 1.0")
        arr.flags.writeable = False
        object.__setattr__(self, "entries", arr)

    @property
    def n(self) -> int:
        return self.entries.shape[0]

    def __getitem__(self, ij):
        return self.entries[ij]

    def __eq__(self, other):
        if not isinstance(other, SlowdownMatrix):
            return NotImplemented
        return np.array_equal(self.entries, other.entries)

    __hash__ = None


@dataclass(frozen=True)
class PerformanceSample:
    class_id: int
    value: float
    companion_class_id: int | None = None

    def __post_init__(self):
        if not (self.value > 0 and math.isfinite(self.value)):
            raise InvalidSampleError(
                f"sample for class {self.class_id} (companion {self.companion_class_id}) "
                f"has nonpositive value {self.value!r}")


@dataclass(frozen=True)
class Profile:
    """Classes plus their slowdown matrix, with the utilization matrix as an array."""

    classes: tuple[WorkloadClass, ...]
    slowdown: SlowdownMatrix
    utilization: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if len(self.classes) != self.slowdown.n:
            raise DimensionMismatchError(
                f"{len(self.classes)} classes but slowdown matrix is "
                f"{self.slowdown.n}x{self.slowdown.n}", "slowdown")
        u = np.array([c.utilization.values for c in self.classes], dtype=float).reshape(-1, N_RESOURCES)
        u.flags.writeable = False
        object.__setattr__(self, "utilization", u)

    @property
    def n(self) -> int:
        return len(self.classes)

    def by_kind(self, kind: WorkloadKind) -> list[WorkloadClass]:
        return [c for c in self.classes if c.kind is kind]


def _cost(value: float, orientation: MetricOrientation) -> float:
    return value if orientation is MetricOrientation.COST else 1.0 / value


def build_slowdown_matrix(samples: Iterable[PerformanceSample],
                          classes: Sequence[WorkloadClass]) -> SlowdownMatrix:
    """Turn isolated and pairwise measurements into a slowdown matrix.

    Every metric is first mapped to cost orientation (throughput values are
    inverted) so that an entry above 1 always means degradation. Measured
    speedups are clamped to 1.0.
    """
    n = len(classes)
    isolated: dict[int, float] = {}
    paired: dict[tuple[int, int], float] = {}
    for s in samples:
        if s.companion_class_id is None:
            isolated[s.class_id] = s.value
        else:
            paired[(s.class_id, s.companion_class_id)] = s.value

    entries = np.empty((n, n))
    for i, cls in enumerate(classes):
        if i not in isolated:
            raise IncompleteProfileError(f"missing isolated sample for class {i} ({cls.name})")
        base = _cost(isolated[i], cls.metric_orientation)
        for j in range(n):
            if (i, j) not in paired:
                raise IncompleteProfileError(
                    f"missing co-located sample for pair ({i}, {j})")
            entries[i, j] = max(1.0, _cost(paired[(i, j)], cls.metric_orientation) / base)
    return SlowdownMatrix(entries)


def derive_interference_threshold(S: SlowdownMatrix) -> float:
    """Mean of all N^2 slowdown entries, diagonal included."""
    return math.fsum(S.entries.ravel().tolist()) / S.entries.size


# ---------------------------------------------------------------------------
# YAML documents

_CLASS_KEYS = {"name", "kind", "metric_orientation", "utilization",
               "phase_pattern", "service_demand"}
_UTIL_KEYS = [k.key for k in ResourceKind]


def _check_keys(doc, allowed, path, required=()):
    if not isinstance(doc, dict):
        raise SchemaError(f"expected a mapping, got {type(doc).__name__}", path)
    unknown = sorted(set(doc) - set(allowed))
    if unknown:
        raise SchemaError(f"unknown key(s) {unknown}", path)
    for key in required:
        if key not in doc:
            raise SchemaError(f"missing required key {key!r}", path)


def _number(value, path) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise SchemaError(f"expected a number, got {value!r}", path)
    return float(value)


def _enum(cls, value, path):
    try:
        return cls(value)
    except ValueError:
        choices = ", ".join(m.value for m in cls)
        raise SchemaError(f"{value!r} is not one of: {choices}", path) from None


def parse_phase_pattern(doc, path: str) -> tuple[tuple[float, PhaseState], ...]:
    if not isinstance(doc, list):
        raise SchemaError("phase_pattern must be a list", path)
    phases = []
    for k, phase in enumerate(doc):
        p = f"{path}[{k}]"
        _check_keys(phase, {"duration", "state"}, p, required=("duration", "state"))
        duration = _number(phase["duration"], f"{p}.duration")
        if not duration > 0:
            raise InvariantViolationError(f"duration {duration!r} must be positive", f"{p}.duration")
        phases.append((duration, _enum(PhaseState, phase["state"], f"{p}.state")))
    if not phases:
        raise InvariantViolationError("phase_pattern is empty", path)
    return tuple(phases)


def dump_phase_pattern(pattern) -> list[dict]:
    return [{"duration": float(d), "state": s.value} for d, s in pattern]


def _parse_class(doc, class_id: int, path: str) -> WorkloadClass:
    _check_keys(doc, _CLASS_KEYS, path, required=("name", "kind", "metric_orientation", "utilization"))
    util_doc = doc["utilization"]
    _check_keys(util_doc, _UTIL_KEYS, f"{path}.utilization", required=_UTIL_KEYS)
    values = []
    for key in _UTIL_KEYS:
        v = _number(util_doc[key], f"{path}.utilization.{key}")
        if not 0.0 <= v <= 1.0:
            raise InvariantViolationError(f"utilization {v!r} outside [0, 1]",
                                          f"{path}.utilization.{key}")
        values.append(v)
    kind = _enum(WorkloadKind, doc["kind"], f"{path}.kind")
    pattern = ((1.0, PhaseState.ACTIVE),)
    if "phase_pattern" in doc:
        pattern = parse_phase_pattern(doc["phase_pattern"], f"{path}.phase_pattern")
    demand = None
    if doc.get("service_demand") is not None:
        demand = _number(doc["service_demand"], f"{path}.service_demand")
    try:
        return WorkloadClass(
            class_id=class_id,
            name=str(doc["name"]),
            kind=kind,
            metric_orientation=_enum(MetricOrientation, doc["metric_orientation"],
                                     f"{path}.metric_orientation"),
            utilization=UtilizationVector(tuple(values)),
            phase_pattern=pattern,
            service_demand=demand,
        )
    except InvariantViolationError as exc:
        raise InvariantViolationError(str(exc), path) from None


def profile_from_dict(doc) -> Profile:
    _check_keys(doc, {"classes", "slowdown"}, "<root>", required=("classes", "slowdown"))
    if not isinstance(doc["classes"], list) or not doc["classes"]:
        raise SchemaError("must be a non-empty list", "classes")
    classes = tuple(_parse_class(c, i, f"classes[{i}]") for i, c in enumerate(doc["classes"]))
    rows = doc["slowdown"]
    if not isinstance(rows, list):
        raise SchemaError("must be a list of rows", "slowdown")
    n = len(classes)
    if len(rows) != n:
        raise DimensionMismatchError(f"{len(rows)} rows for {n} classes", "slowdown")
    matrix = []
    for i, row in enumerate(rows):
        if not isinstance(row, list):
            raise SchemaError("row must be a list", f"slowdown[{i}]")
        if len(row) != n:
            raise DimensionMismatchError(f"{len(row)} columns for {n} classes", f"slowdown[{i}]")
        vals = []
        for j, v in enumerate(row):
            v = _number(v, f"slowdown[{i}][{j}]")
            if not (v >= 1.0 and math.isfinite(v)):
                raise InvariantViolationError(f"entry {v!r} must be finite and >= 1",
                                              f"slowdown[{i}][{j}]")
            vals.append(v)
        matrix.append(vals)
    return Profile(classes, SlowdownMatrix(np.array(matrix)))


def profile_to_dict(profile: Profile) -> dict:
    classes = []
    for c in profile.classes:
        entry = {
            "name": c.name,
            "kind": c.kind.value,
            "metric_orientation": c.metric_orientation.value,
            "utilization": {k.key: float(c.utilization[k]) for k in ResourceKind},
            "phase_pattern": dump_phase_pattern(c.phase_pattern),
        }
        if c.service_demand is not None:
            entry["service_demand"] = float(c.service_demand)
        classes.append(entry)
    return {"classes": classes,
            "slowdown": [[float(v) for v in row] for row in profile.slowdown.entries]}


def load_profile_fixture(source=None) -> tuple[list[WorkloadClass], SlowdownMatrix]:
    """Load and validate a profile document.

    ``source`` may be a path, a YAML string with a newline, an already parsed
    mapping, or None for the bundled default fixture.
    """
    profile = load_profile(source)
    return list(profile.classes), profile.slowdown


def load_profile(source=None) -> Profile:
    if source is None:
        text = resources.files("pinsched").joinpath("data/default_profile.yaml").read_text()
        doc = yaml.safe_load(text)
    elif isinstance(source, dict):
        doc = source
    elif isinstance(source, str) and "\n" in source:
        doc = yaml.safe_load(source)
    else:
        with open(Path(source)) as fh:
            doc = yaml.safe_load(fh)
    return profile_from_dict(doc)


def save_profile(profile: Profile, path) -> None:
    with open(path, "w") as fh:
        yaml.safe_dump(profile_to_dict(profile), fh, sort_keys=False)
