"""Core overload and interference estimates, pinning policies and the per-tick loop.

Cores are handed to the policies as plain sequences of class ids, one
sequence per core in core-index order. Only running workloads belong in
them: idle workloads consume nothing and interfere with nothing.
"""
from __future__ import annotations

import enum
import math
from collections import Counter
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

import numpy as np

from .profiles import N_RESOURCES, ResourceKind, Scope, SlowdownMatrix

ALL_RESOURCES = tuple(ResourceKind)
CPU_ONLY = (ResourceKind.CPU,)


class PlacementError(RuntimeError):
    """No core could be selected for a workload."""

    def __init__(self, message: str, trace=None):
        super().__init__(message)
        self.trace = trace


class Policy(str, enum.Enum):
    RRS = "RRS"
    CAS = "CAS"
    RAS = "RAS"
    IAS = "IAS"


class InstanceState(str, enum.Enum):
    PENDING = "pending"
    RUNNING = "running"
    IDLE = "idle"
    FINISHED = "finished"


@dataclass(frozen=True)
class HostModel:
    core_count: int = 12
    sockets: tuple[tuple[int, ...], ...] | None = None
    idle_core: int = 0

    def __post_init__(self):
        if self.core_count < 1:
            raise ValueError("core_count must be at least 1")
        sockets = self.sockets
        if sockets is None:
            half = self.core_count // 2
            if self.core_count % 2 == 0 and half > 0:
                sockets = (tuple(range(half)), tuple(range(half, self.core_count)))
            else:
                sockets = (tuple(range(self.core_count)),)
        sockets = tuple(tuple(int(c) for c in s) for s in sockets)
        flat = sorted(c for s in sockets for c in s)
        if flat != list(range(self.core_count)):
            raise ValueError(f"sockets {sockets} do not partition cores 0..{self.core_count - 1}")
        if not 0 <= self.idle_core < self.core_count:
            raise ValueError(f"idle_core {self.idle_core} is not a valid core")
        object.__setattr__(self, "sockets", sockets)
        object.__setattr__(self, "_socket_of",
                           {c: k for k, s in enumerate(sockets) for c in s})

    def socket_of(self, core: int) -> int:
        return self._socket_of[core]

    def socket_cores(self, core: int) -> tuple[int, ...]:
        return self.sockets[self.socket_of(core)]


@dataclass(frozen=True)
class SchedulerParams:
    policy: Policy = Policy.IAS
    thr: float = 1.2
    interference_threshold: float = 1.5
    idle_cpu_cutoff: float = 0.025
    # Fold socket/server-scoped demand into the RAS/CAS overload test.
    scoped_overload: bool = False

    def __post_init__(self):
        object.__setattr__(self, "policy", Policy(self.policy))
        if not self.thr > 0:
            raise ValueError("thr must be positive")
        if not self.interference_threshold >= 1:
            raise ValueError("interference_threshold must be >= 1")
        if not 0 < self.idle_cpu_cutoff < 1:
            raise ValueError("idle_cpu_cutoff must lie in (0, 1)")


# ---------------------------------------------------------------------------
# Resource-aware estimates


def _resources(resources) -> tuple[ResourceKind, ...]:
    return ALL_RESOURCES if resources is None else tuple(resources)


def core_overload(A_c: Sequence[int], U, thr: float, resources=None) -> float:
    """Sum over resources of the column-sum excess above ``thr``."""
    U = np.asarray(U)
    total = 0.0
    for r in _resources(resources):
        excess = math.fsum(U[a, r] for a in A_c) - thr
        if excess > 0:
            total += excess
    return total


def _column_values(cores, U, resources, host):
    """Per core, per resource: the demand values already counted there."""
    if host is None:
        return [[[float(U[a, r]) for a in A] for r in resources] for A in cores]
    vals = []
    for c in range(len(cores)):
        per_r = []
        for r in resources:
            scope = ResourceKind(r).scope
            if scope is Scope.CORE_LOCAL:
                scope_cores = (c,)
            elif scope is Scope.SOCKET_LOCAL:
                scope_cores = host.socket_cores(c)
            else:
                scope_cores = range(len(cores))
            per_r.append([float(U[a, r]) for k in scope_cores for a in cores[k]])
        vals.append(per_r)
    return vals


def _overload_select(wload, cores, U, thr, resources, host=None) -> int:
    if not cores:
        raise PlacementError("no schedulable cores")
    U = np.asarray(U)
    resources = _resources(resources)
    # Exact rational sums: tiny utilizations must still break ties the way
    # they would on paper, so decisions never depend on rounding.
    w = [Fraction(float(U[wload, r])) for r in resources]
    limit = Fraction(thr)
    totals = [[sum(map(Fraction, col), Fraction(0)) for col in cols]
              for cols in _column_values(cores, U, resources, host)]

    for i, before in enumerate(totals):
        if all(b + x <= limit for b, x in zip(before, w)):
            return i

    best_i, best = 0, None
    for i, before in enumerate(totals):
        delta = Fraction(0)
        for b, x in zip(before, w):
            if b >= limit:
                delta += x
            elif b + x > limit:
                delta += b + x - limit
        if best is None or delta < best:
            best_i, best = i, delta
    return best_i


def ras_select_pinning(wload: int, cores: Sequence[Sequence[int]], U, thr: float,
                       host: HostModel | None = None) -> int:
    """First core left without overload, else the smallest overload increase.

    Passing ``host`` switches to socket/server-scoped demand totals.
    """
    return _overload_select(wload, cores, U, thr, ALL_RESOURCES, host)


def cas_select_pinning(wload: int, cores: Sequence[Sequence[int]], U, thr: float,
                       host: HostModel | None = None) -> int:
    """RAS restricted to the CPU column."""
    return _overload_select(wload, cores, U, thr, CPU_ONLY, host)


# ---------------------------------------------------------------------------
# Interference-aware estimates


def workload_interference(i: int, companions: Sequence[int], S) -> float:
    """Mean of the sum and the product of i's pairwise slowdowns.

    A workload alone on its core has interference 1.0.
    """
    if not companions:
        return 1.0
    entries = S.entries if isinstance(S, SlowdownMatrix) else np.asarray(S)
    vals = sorted(float(entries[i, j]) for j in companions)
    return (math.fsum(vals) + math.prod(vals)) / 2


def core_interference(A_c: Sequence[int], S) -> float:
    """Worst workload interference on the core; 0.0 when the core is empty."""
    worst = 0.0
    for k, a in enumerate(A_c):
        wi = workload_interference(a, [b for m, b in enumerate(A_c) if m != k], S)
        if wi > worst:
            worst = wi
    return worst


def ias_select_pinning(wload: int, cores: Sequence[Sequence[int]], S,
                       interference_threshold: float) -> int:
    if not cores:
        raise PlacementError("no schedulable cores")
    after = [core_interference(list(A) + [wload], S) for A in cores]
    for i, value in enumerate(after):
        if value < interference_threshold:
            return i
    best_i = 0
    for i in range(1, len(after)):
        if after[i] < after[best_i]:
            best_i = i
    return best_i


def rrs_select_pinning(arrival_index: int, cores) -> int:
    n = cores if isinstance(cores, int) else len(cores)
    if n < 1:
        raise PlacementError("no schedulable cores")
    return arrival_index % n


def select_pinning(wload: int, cores: Sequence[Sequence[int]], params: SchedulerParams,
                   U, S, host: HostModel | None = None, arrival_index: int = 0) -> int:
    scoped = host if params.scoped_overload else None
    if params.policy is Policy.RAS:
        return ras_select_pinning(wload, cores, U, params.thr, scoped)
    if params.policy is Policy.CAS:
        return cas_select_pinning(wload, cores, U, params.thr, scoped)
    if params.policy is Policy.IAS:
        return ias_select_pinning(wload, cores, S, params.interference_threshold)
    return rrs_select_pinning(arrival_index, cores)


# ---------------------------------------------------------------------------
# General scheduler


def schedule_tick(instances: Iterable, usage: Mapping[int, float], params: SchedulerParams,
                  host: HostModel, U, S) -> dict[int, int]:
    """One pass of the general scheduler.

    ``instances`` must be in arrival order and expose ``instance_id`` (equal
    to the arrival index), ``class_id``, ``state`` and ``pinned_core``.
    ``usage`` maps instance ids to CPU usage over the last window. Returns
    the new pinning for every live instance.
    """
    live = [inst for inst in instances
            if InstanceState(inst.state) not in (InstanceState.PENDING, InstanceState.FINISHED)]

    if params.policy is Policy.RRS:
        # Static placement; idleness is invisible to RRS.
        return {inst.instance_id: (inst.pinned_core if inst.pinned_core is not None
                                   else rrs_select_pinning(inst.instance_id, host.core_count))
                for inst in live}

    placement: dict[int, int] = {}
    running = []
    for inst in live:
        if usage[inst.instance_id] < params.idle_cpu_cutoff:
            placement[inst.instance_id] = host.idle_core
        else:
            running.append(inst)

    cores: list[list[int]] = [[] for _ in range(host.core_count)]
    for inst in running:
        target = select_pinning(inst.class_id, cores, params, U, S, host, inst.instance_id)
        cores[target].append(inst.class_id)
        placement[inst.instance_id] = target
    return placement


# ---------------------------------------------------------------------------
# Scoped resource bookkeeping


class ResourceMap:
    """Demanded utilization per core, accumulated with each resource's scope.

    CPU counts on the pinned core, MemBW on every core of that socket, and
    DiskIO/NetIO on every core of the server. Totals are recomputed from the
    current multiset of (class, core) contributions, so incremental edits and
    a full rebuild always agree exactly.
    """

    def __init__(self, host: HostModel, U):
        self.host = host
        self.U = np.asarray(U, dtype=float)
        self._placed: Counter = Counter()

    def add(self, class_id: int, core: int) -> None:
        if not 0 <= core < self.host.core_count:
            raise ValueError(f"core {core} out of range")
        self._placed[(class_id, core)] += 1

    def remove(self, class_id: int, core: int) -> None:
        key = (class_id, core)
        if self._placed[key] == 0:
            raise KeyError(f"class {class_id} is not placed on core {core}")
        self._placed[key] -= 1
        if not self._placed[key]:
            del self._placed[key]

    @property
    def placements(self) -> list[tuple[int, int]]:
        return sorted(self._placed.elements())

    def totals(self) -> np.ndarray:
        n = self.host.core_count
        out = np.zeros((n, N_RESOURCES))
        items = self.placements
        for c in range(n):
            socket = set(self.host.socket_cores(c))
            for r in ResourceKind:
                scope = r.scope
                if scope is Scope.CORE_LOCAL:
                    vals = [self.U[k, r] for k, core in items if core == c]
                elif scope is Scope.SOCKET_LOCAL:
                    vals = [self.U[k, r] for k, core in items if core in socket]
                else:
                    vals = [self.U[k, r] for k, _ in items]
                out[c, r] = math.fsum(vals)
        return out

    @classmethod
    def from_placement(cls, placement: Iterable[tuple[int, int]], U, host: HostModel) -> "ResourceMap":
        rmap = cls(host, U)
        for class_id, core in placement:
            rmap.add(class_id, core)
        return rmap


def update_resource_map(rmap: ResourceMap | None, placement: Iterable[tuple[int, int]],
                        U, host: HostModel) -> ResourceMap:
    """Rebuild the map for a placement given as (class_id, core) pairs."""
    return ResourceMap.from_placement(placement, U, host)
