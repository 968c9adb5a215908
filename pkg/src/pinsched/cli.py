"""Command-line front end: run one experiment cell or a sweep and write a metrics table.

Exit status is 0 on success, 1 for configuration or profile errors and 2
when a simulation fails. Rows are ordered by (policy, scenario, SR, seed)
regardless of how many worker processes ran the cells.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from .profiles import Profile, ProfileError, load_profile
from .scenarios import DYNAMIC_TOTAL, KIND_ORDER, ScenarioConfig, ScenarioError, ScenarioKind, compute_metrics
from .scheduler import HostModel, PlacementError, Policy, SchedulerParams
from .sim import GroundTruth, SimConfig, run, write_trace

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2

SCENARIO_CHOICES = {
    "random": ScenarioKind.RANDOM,
    "latency": ScenarioKind.LATENCY_HEAVY,
    "dynamic": ScenarioKind.DYNAMIC,
}
GROUND_TRUTH_CHOICES = {
    "product": GroundTruth.PAIRWISE_PRODUCT,
    "max": GroundTruth.PAIRWISE_MAX,
    "estimator": GroundTruth.ESTIMATOR,
}
POLICY_ORDER = (Policy.RRS, Policy.CAS, Policy.RAS, Policy.IAS)

COLUMNS = (
    "policy", "scenario", "sr", "seed", "batch_size",
    "mean_normalized_performance", "total_core_hours",
    *(f"perf_{k.value}" for k in KIND_ORDER),
    "perf_vs_rrs", "core_hours_vs_rrs",
)


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentSpec:
    profile: str | None
    scenario: str
    srs: tuple[float, ...]
    seeds: tuple[int, ...]
    policies: tuple[Policy, ...]
    out: Path
    fmt: str = "csv"
    batch_size: int = 12
    ground_truth: str = "product"
    trace: bool = False
    jobs: int = 1
    core_count: int = 12
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("srs", "seeds", "policies"):
            if not getattr(self, name):
                raise ConfigError(f"{name} must not be empty")
        if self.profile is not None and not Path(self.profile).is_file():
            raise ConfigError(f"profile file not found: {self.profile}")
        if self.scenario not in SCENARIO_CHOICES:
            raise ConfigError(f"unknown scenario {self.scenario!r}")
        if self.fmt not in ("csv", "json"):
            raise ConfigError(f"unknown format {self.fmt!r}")
        if self.ground_truth not in GROUND_TRUTH_CHOICES:
            raise ConfigError(f"unknown ground truth {self.ground_truth!r}")
        if any(not sr > 0 for sr in self.srs):
            raise ConfigError("subscription ratios must be positive")

    def cells(self) -> list[tuple[Policy, float, int]]:
        # The dynamic scenario has a fixed population, so the SR list collapses.
        srs = (DYNAMIC_TOTAL / self.core_count,) if self.scenario == "dynamic" else self.srs
        order = {p: k for k, p in enumerate(POLICY_ORDER)}
        policies = sorted(set(self.policies), key=order.__getitem__)
        return [(p, sr, seed) for p in policies for sr in sorted(set(srs))
                for seed in sorted(set(self.seeds))]


@dataclass
class CellResult:
    policy: Policy
    sr: float
    seed: int
    metrics: dict | None = None
    trace_text: str | None = None
    error: str | None = None


def _run_cell(spec: ExperimentSpec, profile: Profile, cell) -> CellResult:
    policy, sr, seed = cell
    kind = SCENARIO_CHOICES[spec.scenario]
    scenario = ScenarioConfig(kind, sr, seed, dynamic_batch_size=spec.batch_size,
                              core_count=spec.core_count).generate(profile.classes)
    config = SimConfig(seed=seed, host=HostModel(spec.core_count),
                       params=SchedulerParams(policy=policy, **spec.params),
                       ground_truth=GROUND_TRUTH_CHOICES[spec.ground_truth])
    result = CellResult(policy, sr, seed)
    try:
        trace = run(config, scenario, profile)
    except PlacementError as exc:
        result.error = str(exc)
        if spec.trace and exc.trace is not None:
            result.trace_text = _trace_text(exc.trace, None)
        return result
    m = compute_metrics(trace)
    result.metrics = {
        "mean_normalized_performance": m.mean_normalized_performance,
        "total_core_hours": m.total_core_hours,
        **{f"perf_{k.value}": m.per_kind.get(k.value) for k in KIND_ORDER},
    }
    if spec.trace:
        result.trace_text = _trace_text(trace, m.as_dict())
    return result


def _trace_text(trace, metrics) -> str:
    buf = io.StringIO()
    write_trace(trace, buf, metrics)
    return buf.getvalue()


def _ratio(a, b):
    if a is None or b is None or b == 0:
        return None
    return a / b


def build_rows(spec: ExperimentSpec, results: list[CellResult]) -> list[dict]:
    done = [r for r in results if r.metrics is not None]
    rrs = {(r.sr, r.seed): r.metrics for r in done if r.policy is Policy.RRS}
    rows = []
    for r in done:
        row = {
            "policy": r.policy.value,
            "scenario": spec.scenario,
            "sr": float(r.sr),
            "seed": r.seed,
            "batch_size": spec.batch_size if spec.scenario == "dynamic" else None,
            **r.metrics,
            "perf_vs_rrs": None,
            "core_hours_vs_rrs": None,
        }
        base = rrs.get((r.sr, r.seed))
        if base is not None:
            row["perf_vs_rrs"] = _ratio(r.metrics["mean_normalized_performance"],
                                        base["mean_normalized_performance"])
            row["core_hours_vs_rrs"] = _ratio(r.metrics["total_core_hours"],
                                              base["total_core_hours"])
        rows.append(row)
    return rows


def _csv_value(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def render(rows: list[dict], fmt: str) -> str:
    if fmt == "json":
        return json.dumps(rows, indent=2) + "\n"
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(COLUMNS)
    for row in rows:
        writer.writerow([_csv_value(row[c]) for c in COLUMNS])
    return buf.getvalue()


def read_rows(path) -> list[dict]:
    """Load a results file written by ``render`` back into row dicts."""
    path = Path(path)
    text = path.read_text()
    if path.suffix == ".json":
        return json.loads(text)
    rows = []
    for raw in csv.DictReader(io.StringIO(text)):
        row = {}
        for key, value in raw.items():
            if value == "":
                row[key] = None
            elif key in ("policy", "scenario"):
                row[key] = value
            elif key in ("seed", "batch_size"):
                row[key] = int(value)
            else:
                row[key] = float(value)
        rows.append(row)
    return rows


def trace_name(spec: ExperimentSpec, r: CellResult) -> str:
    return f"{r.policy.value}_{spec.scenario}_sr{r.sr!r}_seed{r.seed}.ndjson"


def run_experiment(spec: ExperimentSpec, profile: Profile | None = None,
                   log=None) -> int:
    """Run every cell of ``spec`` and write results under ``spec.out``."""
    log = log or sys.stderr
    if profile is None:
        profile = load_profile(spec.profile)
    cells = spec.cells()
    if spec.jobs > 1:
        with ProcessPoolExecutor(max_workers=spec.jobs) as pool:
            results = list(pool.map(_run_cell, [spec] * len(cells), [profile] * len(cells), cells))
    else:
        results = [_run_cell(spec, profile, c) for c in cells]

    spec.out.mkdir(parents=True, exist_ok=True)
    rows = build_rows(spec, results)
    out_file = spec.out / f"results.{spec.fmt}"
    out_file.write_text(render(rows, spec.fmt))
    if spec.trace:
        trace_dir = spec.out / "traces"
        trace_dir.mkdir(exist_ok=True)
        for r in results:
            if r.trace_text is not None:
                (trace_dir / trace_name(spec, r)).write_text(r.trace_text)

    failed = [r for r in results if r.error is not None]
    for r in failed:
        print(f"pinsched: placement failed for {r.policy.value} sr={r.sr!r} seed={r.seed}: "
              f"{r.error}", file=log)
    print(f"pinsched: wrote {len(rows)} rows to {out_file}", file=log)
    return EXIT_RUNTIME if failed else EXIT_OK


# ---------------------------------------------------------------------------
# Argument parsing


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _split(text: str) -> list[str]:
    return [t for t in text.replace(",", " ").split() if t]


def _float_list(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(t) for t in _split(text))
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a list of numbers: {text!r}") from None


def _seed_list(text: str) -> tuple[int, ...]:
    """Comma-separated seeds; ``a-b`` expands to an inclusive range."""
    seeds = []
    try:
        for tok in _split(text):
            if "-" in tok.lstrip("-"):
                lo, hi = tok.split("-", 1)
                seeds.extend(range(int(lo), int(hi) + 1))
            else:
                seeds.append(int(tok))
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a seed list: {text!r}") from None
    return tuple(seeds)


def _policy_list(text: str) -> tuple[Policy, ...]:
    try:
        return tuple(Policy(t.upper()) for t in _split(text))
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"policies must be drawn from {', '.join(p.value for p in Policy)}: {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="pinsched", description="Simulate VM-to-core consolidation policies.")
    p.add_argument("--profile", help="profile YAML (default: bundled fixture)")
    p.add_argument("--scenario", choices=sorted(SCENARIO_CHOICES), default="random")
    p.add_argument("--sr", type=_float_list, default=(1.0,),
                   help="subscription ratios, e.g. 0.5,1,1.5,2 (ignored for dynamic)")
    p.add_argument("--batch-size", type=int, choices=(6, 12), default=12,
                   help="dynamic scenario activation batch size")
    p.add_argument("--policy", type=_policy_list, default=POLICY_ORDER,
                   help="policies, e.g. RRS,RAS (default: all four)")
    p.add_argument("--seeds", type=_seed_list, default=(0,), help="e.g. 0,1,2 or 0-9")
    p.add_argument("--ground-truth", choices=sorted(GROUND_TRUTH_CHOICES), default="product")
    p.add_argument("--out", default="results", help="output directory")
    p.add_argument("--format", dest="fmt", choices=("csv", "json"), default="csv")
    p.add_argument("--trace", action="store_true", help="write one NDJSON trace per run")
    p.add_argument("--jobs", type=int, default=1, help="worker processes for the sweep")
    p.add_argument("--cores", type=int, default=12, help="cores on the simulated host")
    p.add_argument("--thr", type=float, default=None, help="per-resource overload threshold")
    p.add_argument("--interference-threshold", type=float, default=None)
    return p


def spec_from_args(args) -> ExperimentSpec:
    params = {}
    if args.thr is not None:
        params["thr"] = args.thr
    if args.interference_threshold is not None:
        params["interference_threshold"] = args.interference_threshold
    try:
        SchedulerParams(**params)
        HostModel(args.cores)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if args.jobs < 1:
        raise ConfigError("--jobs must be at least 1")
    return ExperimentSpec(
        profile=args.profile, scenario=args.scenario, srs=args.sr, seeds=args.seeds,
        policies=args.policy, out=Path(args.out), fmt=args.fmt, batch_size=args.batch_size,
        ground_truth=args.ground_truth, trace=args.trace, jobs=args.jobs,
        core_count=args.cores, params=params,
    )


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        spec = spec_from_args(args)
        profile = load_profile(spec.profile)
    except (ConfigError, ProfileError, ScenarioError, OSError) as exc:
        print(f"pinsched: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return run_experiment(spec, profile)
    except ScenarioError as exc:
        print(f"pinsched: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - any simulation failure maps to exit 2
        print(f"pinsched: run failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
