"""Consolidation schedulers for pinning VM workloads onto physical cores.

Four placement policies (round robin, CPU-aware, resource-aware and
interference-aware) run inside a deterministic host simulator that reports
normalized workload performance and core-hours.
"""
from .profiles import (DEFAULT_INTERFERENCE_THRESHOLD, Profile, ProfileError, ResourceKind,
                       SlowdownMatrix, UtilizationVector, WorkloadClass, WorkloadKind,
                       build_slowdown_matrix, derive_interference_threshold,
                       load_profile, load_profile_fixture, save_profile)
from .scheduler import (HostModel, PlacementError, Policy, ResourceMap, SchedulerParams,
                        cas_select_pinning, core_interference, core_overload,
                        ias_select_pinning, ras_select_pinning, rrs_select_pinning,
                        schedule_tick, select_pinning, update_resource_map,
                        workload_interference)
from .sim import (GroundTruth, GroundTruthModel, RunTrace, Scenario, SimConfig,
                  account_core_hours, ground_truth_slowdown, run, write_trace)
from .scenarios import (RunMetrics, ScenarioConfig, ScenarioKind, compute_metrics,
                        generate_dynamic, generate_latency_heavy, generate_random)

__all__ = [
    "DEFAULT_INTERFERENCE_THRESHOLD", "Profile", "ProfileError", "ResourceKind",
    "SlowdownMatrix", "UtilizationVector", "WorkloadClass", "WorkloadKind",
    "build_slowdown_matrix", "derive_interference_threshold", "load_profile",
    "load_profile_fixture", "save_profile",
    "HostModel", "PlacementError", "Policy", "ResourceMap", "SchedulerParams",
    "cas_select_pinning", "core_interference", "core_overload", "ias_select_pinning",
    "ras_select_pinning", "rrs_select_pinning", "schedule_tick", "select_pinning",
    "update_resource_map", "workload_interference",
    "GroundTruth", "GroundTruthModel", "RunTrace", "Scenario", "SimConfig",
    "account_core_hours", "ground_truth_slowdown", "run", "write_trace",
    "RunMetrics", "ScenarioConfig", "ScenarioKind", "compute_metrics",
    "generate_dynamic", "generate_latency_heavy", "generate_random",
]
