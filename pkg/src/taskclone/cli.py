"""Command-line experiment driver.

Subcommands: simulate, sweep, compare, verify-bounds, gen-workload.  Values
come from built-in defaults, then an optional YAML ``--config`` file, then
flags.  Exit codes: 0 ok, 1 runtime failure, 2 usage or config error.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import platform
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace
from importlib import resources
from pathlib import Path

import yaml

from . import __version__
from .core import ContractViolation
from .engine import SimulationConfig, TruncatedSimulation, run
from .metrics import SummaryMetrics, average_metrics, cdf_from_flowtimes, export, summarize
from .policies import POLICIES, PolicyParams, make_scheduler
from .verify import check_theorem1
from .workload import SyntheticConfig, WorkloadFormatError, dump_job_summaries, gen_synthetic, load_job_summaries

log = logging.getLogger("taskclone")

SHIPPED_WORKLOAD = "synthetic_500.csv"
SWEEP_PARAMS = ("epsilon", "risk", "machines")
FULL_SCALE = {"machines": 12000, "synthetic": {"job_count": 6064, "machine_count": 12000}}


class ConfigError(Exception):
    """Bad flags, config file or workload; maps to exit code 2."""


def shipped_workload_path() -> Path:
    return Path(str(resources.files("taskclone") / "data" / SHIPPED_WORKLOAD))


@dataclass
class ExperimentConfig:
    workload: str | None = None
    synthetic: dict | None = None
    policy: str = "srptms+c"
    epsilon: float = 0.6
    risk: float = 3.0
    machines: int = 200
    speed: float = 1.0
    seed: int = 0
    replications: int | None = None
    max_slots: int = 100_000_000
    out: str = "results"
    sweep: dict = field(default_factory=dict)
    policies: list = field(default_factory=lambda: ["srptms+c", "mantri", "sca-lite"])
    cdf: list = field(default_factory=lambda: [0.0, 4000.0, 10.0])
    workers: int = 1

    def __post_init__(self) -> None:
        if self.workload is not None and self.synthetic is not None:
            raise ConfigError("give exactly one workload source: 'workload' (csv path) or 'synthetic'")
        for name in [self.policy, *self.policies]:
            if name not in POLICIES:
                raise ConfigError(f"unknown policy {name!r}; choose from {', '.join(POLICIES)}")
        if self.replications is not None and self.replications < 1:
            raise ConfigError("replications must be >= 1")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        for key, values in self.sweep.items():
            if key not in SWEEP_PARAMS:
                raise ConfigError(f"cannot sweep {key!r}; choose from {', '.join(SWEEP_PARAMS)}")
            if not isinstance(values, list) or not values:
                raise ConfigError(f"sweep grid for {key!r} must be a nonempty list")
        if len(self.cdf) != 3:
            raise ConfigError("cdf must be [lo, hi, step]")
        try:
            self.params()
            self.sim_config()
        except ContractViolation as exc:
            raise ConfigError(str(exc)) from exc

    def params(self, **override) -> PolicyParams:
        return PolicyParams(
            epsilon=float(override.get("epsilon", self.epsilon)),
            risk_factor=float(override.get("risk", self.risk)),
        )

    def sim_config(self, rep: int = 0, **override) -> SimulationConfig:
        return SimulationConfig(
            machine_count=int(override.get("machines", self.machines)),
            speed=float(self.speed),
            max_slots=int(self.max_slots),
            seed=int(self.seed) + rep,
        )


def read_config_file(path: str | os.PathLike) -> dict:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    try:
        data = yaml.safe_load(p.read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse config {p}: {exc}") from exc
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(f"config {p} must be a mapping at top level")
    known = {f.name for f in fields(ExperimentConfig)} | {"preset"}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"unknown config key(s) in {p}: {', '.join(unknown)}")
    return data


_FLAG_KEYS = ("workload", "policy", "epsilon", "risk", "machines", "speed", "seed", "replications", "out", "workers")


def build_config(args: argparse.Namespace) -> ExperimentConfig:
    merged: dict = {}
    if args.config:
        merged.update(read_config_file(args.config))
    preset = getattr(args, "preset", None) or merged.pop("preset", None)
    if preset == "full":
        merged = {**FULL_SCALE, **merged}
    elif preset not in (None, "desk"):
        raise ConfigError(f"unknown preset {preset!r}; use desk or full")
    for key in _FLAG_KEYS:
        val = getattr(args, key, None)
        if val is not None:
            merged[key] = val
    if getattr(args, "workload", None) is not None:
        # a workload flag replaces a synthetic source from the file or preset
        merged.pop("synthetic", None)
    if getattr(args, "policies", None):
        merged["policies"] = args.policies
    if getattr(args, "cdf", None):
        merged["cdf"] = list(args.cdf)
    if getattr(args, "param", None):
        merged["sweep"] = {args.param: args.values}
    try:
        return ExperimentConfig(**merged)
    except TypeError as exc:
        raise ConfigError(f"bad config: {exc}") from exc


def load_workload(cfg: ExperimentConfig):
    if cfg.synthetic is not None:
        try:
            return gen_synthetic(SyntheticConfig(**cfg.synthetic))
        except (TypeError, ContractViolation) as exc:
            raise ConfigError(f"bad synthetic config: {exc}") from exc
    path = Path(cfg.workload) if cfg.workload else shipped_workload_path()
    if not path.is_file():
        raise ConfigError(f"workload file not found: {path}")
    try:
        return load_job_summaries(path)
    except (WorkloadFormatError, ContractViolation) as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def _one_replication(task):
    jobs, policy, params, sim = task
    res = run(jobs, make_scheduler(policy, params), sim)
    return summarize(res), sorted(res.flowtimes().values()), len(res.weights)


def replicate(jobs, policy: str, params: PolicyParams, sims: list[SimulationConfig], workers: int = 1):
    tasks = [(jobs, policy, params, s) for s in sims]
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_one_replication, tasks))
    return [_one_replication(t) for t in tasks]


def _mean_cdf(outcomes, lo: float, hi: float, step: float):
    series = [cdf_from_flowtimes(flows, lo, hi, step, total=n) for _, flows, n in outcomes]
    fractions = tuple(math.fsum(s.fraction[i] for s in series) / len(series) for i in range(len(series[0].fraction)))
    return replace(series[0], fraction=fractions)


def _fmt_value(v) -> str:
    return f"{v:g}" if isinstance(v, float) else str(v)


def _write_table(path: Path, header: list[str], rows: list[list]) -> None:
    class _Table:
        def csv_rows(self):
            return header, rows

    export(_Table(), "csv", path)


def _summary_row(m: SummaryMetrics) -> list:
    return [m.weighted_avg_flowtime_s, m.unweighted_avg_flowtime_s, m.job_count, m.total_clone_copies]


def _write_sidecar(out: Path, name: str, argv: list[str], started: float) -> None:
    meta = {
        "subcommand": name,
        "argv": argv,
        "version": __version__,
        "python": platform.python_version(),
        "started_unix": started,
        "wall_time_s": time.time() - started,
    }
    (out / f"{name}_meta.json").write_text(json.dumps(meta, indent=2) + "\n", encoding="utf-8")


def cmd_simulate(cfg: ExperimentConfig) -> list[Path]:
    jobs = load_workload(cfg)
    n = cfg.replications or 10
    out = Path(cfg.out)
    outcomes = replicate(jobs, cfg.policy, cfg.params(), [cfg.sim_config(i) for i in range(n)], cfg.workers)
    written = []
    for i, (summary, _, _) in enumerate(outcomes):
        written.append(out / f"simulate_rep={i}.csv")
        export(summary, "csv", written[-1])
    avg = average_metrics([o[0] for o in outcomes])
    written.append(out / "simulate_avg.csv")
    export(avg, "csv", written[-1])
    written.append(out / "simulate_cdf.csv")
    export(_mean_cdf(outcomes, *cfg.cdf), "csv", written[-1])
    log.info("simulate %s: weighted %.1f s, unweighted %.1f s", cfg.policy, avg.weighted_avg_flowtime_s, avg.unweighted_avg_flowtime_s)
    return written


def cmd_sweep(cfg: ExperimentConfig) -> list[Path]:
    if not cfg.sweep:
        raise ConfigError("sweep needs --param and --values (or a 'sweep' mapping in the config)")
    jobs = load_workload(cfg)
    n = cfg.replications or 10
    out = Path(cfg.out)
    written = []
    for param, values in cfg.sweep.items():
        rows = []
        for v in values:
            try:
                params = cfg.params(**{param: v})
                sims = [cfg.sim_config(i, **{param: v}) for i in range(n)]
            except ContractViolation as exc:
                raise ConfigError(f"sweep {param}={v}: {exc}") from exc
            outcomes = replicate(jobs, cfg.policy, params, sims, cfg.workers)
            avg = average_metrics([o[0] for o in outcomes])
            written.append(out / f"sweep_{param}={_fmt_value(v)}.csv")
            export(avg, "csv", written[-1])
            rows.append([v, *_summary_row(avg)])
            log.info("sweep %s=%s: weighted %.1f s", param, v, avg.weighted_avg_flowtime_s)
        written.append(out / f"sweep_{param}.csv")
        _write_table(written[-1], [param, "weighted_avg_s", "unweighted_avg_s", "jobs", "clones"], rows)
    return written


def cmd_compare(cfg: ExperimentConfig) -> list[Path]:
    jobs = load_workload(cfg)
    n = cfg.replications or 10
    out = Path(cfg.out)
    sims = [cfg.sim_config(i) for i in range(n)]
    written, rows = [], []
    for policy in cfg.policies:
        outcomes = replicate(jobs, policy, cfg.params(), sims, cfg.workers)
        avg = average_metrics([o[0] for o in outcomes])
        written.append(out / f"compare_policy={policy}.csv")
        export(avg, "csv", written[-1])
        written.append(out / f"compare_cdf_policy={policy}.csv")
        export(_mean_cdf(outcomes, *cfg.cdf), "csv", written[-1])
        rows.append([policy, *_summary_row(avg)])
        log.info("compare %s: weighted %.1f s, unweighted %.1f s", policy, avg.weighted_avg_flowtime_s, avg.unweighted_avg_flowtime_s)
    written.append(out / "compare.csv")
    _write_table(written[-1], ["policy", "weighted_avg_s", "unweighted_avg_s", "jobs", "clones"], rows)
    return written


def cmd_verify_bounds(cfg: ExperimentConfig) -> list[Path]:
    if cfg.workload is None and cfg.synthetic is None:
        cfg = replace(cfg, synthetic={"job_count": 30, "arrival": "bulk", "machine_count": cfg.machines})
    jobs = load_workload(cfg)
    try:
        report = check_theorem1(jobs, cfg.machines, cfg.risk, cfg.replications or 1000, seed=cfg.seed)
    except ContractViolation as exc:
        raise ConfigError(str(exc)) from exc
    out = Path(cfg.out)
    stem = f"verify-bounds_risk={_fmt_value(float(cfg.risk))}"
    export(report, "json", out / f"{stem}.json")
    export(report, "csv", out / f"{stem}.csv")
    print(f"bound check {'passed' if report.ok else 'FAILED'}: {len(report.jobs) - len(report.failures)}/{len(report.jobs)} jobs within margin")
    return [out / f"{stem}.json", out / f"{stem}.csv"]


def cmd_gen_workload(cfg: ExperimentConfig, args: argparse.Namespace) -> list[Path]:
    synth = dict(cfg.synthetic or {})
    for key, flag in (("job_count", "job_count"), ("arrival", "arrival"), ("family", "family"), ("pareto_alpha", "alpha")):
        val = getattr(args, flag, None)
        if val is not None:
            synth[key] = val
    synth.setdefault("seed", cfg.seed)
    synth.setdefault("machine_count", cfg.machines)
    try:
        jobs = gen_synthetic(SyntheticConfig(**synth))
    except (TypeError, ContractViolation) as exc:
        raise ConfigError(f"bad synthetic config: {exc}") from exc
    out = Path(cfg.out)
    path = out if out.suffix == ".csv" else out / f"gen-workload_seed={synth['seed']}.csv"
    dump_job_summaries(jobs, path)
    return [path]


def _common_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="YAML config file; flags override its values")
    p.add_argument("--preset", choices=("desk", "full"), help="full = 12000 machines and 6064 synthetic jobs")
    p.add_argument("--workload", help="job-summary CSV (default: shipped synthetic workload)")
    p.add_argument("--policy", choices=POLICIES)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--risk", type=float)
    p.add_argument("--machines", type=int)
    p.add_argument("--speed", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--replications", type=int)
    p.add_argument("--out", help="output directory")
    p.add_argument("--workers", type=int, help="parallel replication processes")
    p.add_argument("--cdf", type=float, nargs=3, metavar=("LO", "HI", "STEP"), help="CDF grid in seconds")
    p.add_argument("-v", "--verbose", action="store_true")


def _csv_list(cast):
    def parse(text: str):
        try:
            return [cast(x) for x in text.split(",") if x.strip()]
        except ValueError as exc:
            raise argparse.ArgumentTypeError(str(exc)) from exc

    return parse


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="taskclone", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run replications of one policy")
    _common_flags(p)

    p = sub.add_parser("sweep", help="average metrics over a parameter grid")
    _common_flags(p)
    p.add_argument("--param", choices=SWEEP_PARAMS)
    p.add_argument("--values", type=_csv_list(float), help="comma-separated grid, e.g. 0.2,0.4,0.6")

    p = sub.add_parser("compare", help="compare policies under common random numbers")
    _common_flags(p)
    p.add_argument("--policies", type=_csv_list(str), help="comma-separated policy names")

    p = sub.add_parser("verify-bounds", help="empirical check of the offline per-job flowtime bound")
    _common_flags(p)

    p = sub.add_parser("gen-workload", help="write a synthetic job-summary CSV")
    _common_flags(p)
    p.add_argument("--job-count", type=int)
    p.add_argument("--arrival", choices=("poisson", "bulk"))
    p.add_argument("--family", choices=("pareto", "lognormal", "deterministic"))
    p.add_argument("--alpha", type=float)
    return parser


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    if args.command == "sweep" and (args.param is None) != (args.values is None):
        print("error: --param and --values go together", file=sys.stderr)
        return 2
    if args.command == "sweep" and args.param == "machines" and args.values:
        if any(v != int(v) for v in args.values):
            print("error: machine counts must be integers", file=sys.stderr)
            return 2
        args.values = [int(v) for v in args.values]
    started = time.time()
    try:
        cfg = build_config(args)
        out = Path(cfg.out)
        if out.suffix != ".csv":
            out.mkdir(parents=True, exist_ok=True)
        else:
            out.parent.mkdir(parents=True, exist_ok=True)
        handlers = {
            "simulate": cmd_simulate,
            "sweep": cmd_sweep,
            "compare": cmd_compare,
            "verify-bounds": cmd_verify_bounds,
        }
        if args.command == "gen-workload":
            written = cmd_gen_workload(cfg, args)
        else:
            written = handlers[args.command](cfg)
        if out.suffix != ".csv":
            _write_sidecar(out, args.command, argv, started)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except TruncatedSimulation as exc:
        print(f"error: simulation hit the slot horizon with {len(exc.result.unfinished)} job(s) unfinished", file=sys.stderr)
        return 1
    except (OSError, RuntimeError, ContractViolation) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    for path in written:
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
