"""Small hand-built profiles for simulator tests."""
import numpy as np

from pinsched.profiles import (MetricOrientation, PhaseState, Profile, SlowdownMatrix,
                               UtilizationVector, WorkloadClass, WorkloadKind)

ACTIVE, IDLE = PhaseState.ACTIVE, PhaseState.IDLE


def batch(name, cpu=0.9, demand=300.0, util=None):
    return dict(name=name, kind=WorkloadKind.BATCH, orient=MetricOrientation.COST,
                util=util or (cpu, 0.0, 0.0, 0.0), pattern=((1.0, ACTIVE),), demand=demand)


def service(name, cpu=0.5, pattern=((1.0, ACTIVE),), kind=WorkloadKind.LATENCY_CRITICAL,
            util=None):
    return dict(name=name, kind=kind, orient=MetricOrientation.THROUGHPUT,
                util=util or (cpu, 0.0, 0.0, 0.0), pattern=tuple(pattern), demand=None)


def make_profile(specs, S=None) -> Profile:
    classes = tuple(
        WorkloadClass(k, s["name"], s["kind"], s["orient"], UtilizationVector(tuple(s["util"])),
                      s["pattern"], s["demand"])
        for k, s in enumerate(specs))
    n = len(classes)
    S = np.ones((n, n)) if S is None else np.asarray(S, dtype=float)
    return Profile(classes, SlowdownMatrix(S))
