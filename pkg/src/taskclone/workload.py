"""Job-summary CSV ingestion and synthetic heavy-tailed workloads.

CSV columns (header required, ``#`` starts a comment line)::

    job_id,arrival_s,priority,map_count,reduce_count,
    map_mean_s,map_sd_s,reduce_mean_s,reduce_sd_s,dist_family

``priority`` is the trace priority 0..11; the job weight is priority + 1.
"""

from __future__ import annotations

import csv
import math
import os
import statistics
from dataclasses import dataclass
from typing import Iterable, Sequence, TextIO

import numpy as np

from .core import ContractViolation, JobSpec
from .stochastic import Deterministic, LogNormal, Pareto

FIELDS = (
    "job_id",
    "arrival_s",
    "priority",
    "map_count",
    "reduce_count",
    "map_mean_s",
    "map_sd_s",
    "reduce_mean_s",
    "reduce_sd_s",
    "dist_family",
)
FAMILIES = ("pareto", "deterministic", "lognormal")
MAX_PRIORITY = 11

# production-cluster trace aggregates the synthetic defaults are calibrated against
TRACE_JOBS = 6064
TRACE_DURATION_S = 35032
TRACE_MACHINES = 12_000
TRACE_MEAN_TASKS = 26.31
TRACE_MIN_TASK_S = 12.8
TRACE_MAX_TASK_S = 22919.3
TRACE_MEAN_TASK_S = 1179.7


class WorkloadFormatError(ValueError):
    def __init__(self, message: str, line: int | None = None) -> None:
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


@dataclass(frozen=True)
class JobSummaryRecord:
    job_id: str
    arrival_s: int
    priority: int
    map_count: int
    reduce_count: int
    map_mean_s: float
    map_sd_s: float
    reduce_mean_s: float
    reduce_sd_s: float
    dist_family: str

    def __post_init__(self) -> None:
        if self.dist_family not in FAMILIES:
            raise ContractViolation(f"unknown dist_family {self.dist_family!r}; expected one of {FAMILIES}")
        if self.map_count < 1 or self.reduce_count < 0:
            raise ContractViolation("need map_count >= 1 and reduce_count >= 0")
        if not 0 <= self.priority <= MAX_PRIORITY:
            raise ContractViolation(f"priority must be in 0..{MAX_PRIORITY}, got {self.priority}")
        if self.arrival_s < 0:
            raise ContractViolation("arrival_s must be >= 0")
        if not (self.map_mean_s > 0 and self.reduce_mean_s > 0):
            raise ContractViolation("phase means must be > 0")
        if self.map_sd_s < 0 or self.reduce_sd_s < 0:
            raise ContractViolation("phase sds must be >= 0")

    def to_job(self) -> JobSpec:
        return JobSpec(
            job_id=_parse_id(self.job_id),
            arrival_slot=self.arrival_s,
            weight=priority_to_weight(self.priority),
            map_count=self.map_count,
            reduce_count=self.reduce_count,
            map_dist=dist_from_moments(self.dist_family, self.map_mean_s, self.map_sd_s),
            reduce_dist=dist_from_moments(self.dist_family, self.reduce_mean_s, self.reduce_sd_s),
        )


def priority_to_weight(priority: int) -> float:
    # shifted by one so priority 0 still has a positive weight
    return float(priority + 1)


def weight_to_priority(weight: float) -> int:
    p = weight - 1
    if p != int(p) or not 0 <= p <= MAX_PRIORITY:
        raise ContractViolation(f"weight {weight} does not map to a trace priority 0..{MAX_PRIORITY}")
    return int(p)


def _parse_id(raw: str):
    return int(raw) if raw.isdigit() else raw


def pareto_from_moments(mean: float, sd: float) -> Pareto:
    """Invert mean = a*mu/(a-1), cv^2 = 1/(a(a-2)) for (alpha, mu)."""
    alpha = 1 + math.sqrt(1 + (mean / sd) ** 2)
    if not alpha > 2 + 1e-9:
        raise ContractViolation(
            f"mean={mean}, sd={sd} implies Pareto alpha={alpha:.12g} <= 2 (infinite variance)"
        )
    return Pareto(alpha, mean * (alpha - 1) / alpha)


def dist_from_moments(family: str, mean: float, sd: float):
    if sd == 0:
        return Deterministic(mean)
    if family == "deterministic":
        raise ContractViolation(f"deterministic family with sd={sd} > 0")
    if family == "pareto":
        return pareto_from_moments(mean, sd)
    if family == "lognormal":
        return LogNormal.from_moments(mean, sd)
    raise ContractViolation(f"unknown dist_family {family!r}")


def _family_of(job: JobSpec) -> str:
    families = {type(d).__name__ for d in (job.map_dist, job.reduce_dist)} - {"Deterministic"}
    if not families:
        return "deterministic"
    if len(families) > 1:
        raise ContractViolation(f"job {job.job_id!r} mixes {sorted(families)} across phases")
    return families.pop().lower()


def job_to_record(job: JobSpec) -> JobSummaryRecord:
    return JobSummaryRecord(
        job_id=str(job.job_id),
        arrival_s=int(job.arrival_slot),
        priority=weight_to_priority(job.weight),
        map_count=job.map_count,
        reduce_count=job.reduce_count,
        map_mean_s=job.map_dist.mean(),
        map_sd_s=job.map_dist.sd(),
        reduce_mean_s=job.reduce_dist.mean(),
        reduce_sd_s=job.reduce_dist.sd(),
        dist_family=_family_of(job),
    )


def _rows(source: TextIO) -> list[tuple[int, JobSummaryRecord]]:
    numbered = [(n, line) for n, line in enumerate(source, start=1) if line.strip() and not line.lstrip().startswith("#")]
    if not numbered:
        raise WorkloadFormatError("empty workload: no header and no rows")
    reader = csv.reader(line for _, line in numbered)
    header = [h.strip() for h in next(reader)]
    missing = [f for f in FIELDS if f not in header]
    if missing:
        raise WorkloadFormatError(f"header lacks columns {missing}", numbered[0][0])
    out = []
    seen = set()
    for (lineno, _), row in zip(numbered[1:], reader):
        if len(row) != len(header):
            raise WorkloadFormatError(f"expected {len(header)} fields, got {len(row)}", lineno)
        raw = dict(zip(header, (c.strip() for c in row)))
        try:
            rec = JobSummaryRecord(
                job_id=raw["job_id"],
                arrival_s=int(raw["arrival_s"]),
                priority=int(raw["priority"]),
                map_count=int(raw["map_count"]),
                reduce_count=int(raw["reduce_count"]),
                map_mean_s=float(raw["map_mean_s"]),
                map_sd_s=float(raw["map_sd_s"]),
                reduce_mean_s=float(raw["reduce_mean_s"]),
                reduce_sd_s=float(raw["reduce_sd_s"]),
                dist_family=raw["dist_family"].lower(),
            )
        except (ValueError, ContractViolation) as exc:
            raise WorkloadFormatError(str(exc), lineno) from exc
        if rec.job_id in seen:
            raise WorkloadFormatError(f"duplicate job_id {rec.job_id!r}", lineno)
        seen.add(rec.job_id)
        out.append((lineno, rec))
    if not out:
        raise WorkloadFormatError("empty workload: header but no rows")
    return out


def read_job_summaries(source: str | os.PathLike | TextIO) -> list[JobSummaryRecord]:
    if isinstance(source, (str, os.PathLike)):
        with open(source, newline="", encoding="utf-8") as fh:
            return read_job_summaries(fh)
    return [rec for _, rec in _rows(source)]


def load_job_summaries(source: str | os.PathLike | TextIO) -> list[JobSpec]:
    """Parse a job-summary CSV into validated JobSpecs."""
    if isinstance(source, (str, os.PathLike)):
        with open(source, newline="", encoding="utf-8") as fh:
            return load_job_summaries(fh)
    jobs = []
    for lineno, rec in _rows(source):
        try:
            jobs.append(rec.to_job())
        except ContractViolation as exc:
            raise WorkloadFormatError(str(exc), lineno) from exc
    return jobs


def _fmt(x: float) -> str:
    return repr(float(x))


def dump_job_summaries(jobs: Iterable[JobSpec], dest: str | os.PathLike | TextIO) -> None:
    if isinstance(dest, (str, os.PathLike)):
        with open(dest, "w", newline="", encoding="utf-8") as fh:
            dump_job_summaries(jobs, fh)
        return
    w = csv.writer(dest, lineterminator="\n")
    w.writerow(FIELDS)
    for job in jobs:
        r = job_to_record(job)
        w.writerow(
            [
                r.job_id,
                r.arrival_s,
                r.priority,
                r.map_count,
                r.reduce_count,
                _fmt(r.map_mean_s),
                _fmt(r.map_sd_s),
                _fmt(r.reduce_mean_s),
                _fmt(r.reduce_sd_s),
                r.dist_family,
            ]
        )


def estimate_phase_stats(durations: Sequence[float]) -> tuple[float, float]:
    """Sample mean and (n-1) standard deviation; sd is 0 for a single sample."""
    if len(durations) == 0:
        raise ValueError("need at least one duration")
    mean = statistics.fmean(durations)
    sd = statistics.stdev(durations) if len(durations) > 1 else 0.0
    return mean, sd


@dataclass(frozen=True)
class SyntheticConfig:
    """Knobs of the synthetic generator; defaults follow the trace aggregates.

    ``arrival_rate`` defaults to the trace's job rate scaled down from
    12K machines to ``machine_count`` so offered load stays comparable.
    """

    job_count: int = 500
    arrival: str = "poisson"  # or "bulk"
    arrival_rate: float | None = None
    machine_count: int = 200
    mean_tasks: float = TRACE_MEAN_TASKS
    task_count_log_sd: float = 1.0
    reduce_fraction: float = 0.25
    mean_task_s: float = TRACE_MEAN_TASK_S
    task_mean_log_sd: float = 1.0
    min_task_s: float = TRACE_MIN_TASK_S
    max_task_s: float = TRACE_MAX_TASK_S
    reduce_duration_ratio: float = 1.0
    family: str = "pareto"
    pareto_alpha: float = 2.5
    lognormal_cv: float = 1.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.job_count < 1:
            raise ContractViolation("job_count must be >= 1")
        if self.arrival not in ("poisson", "bulk"):
            raise ContractViolation(f"arrival must be 'poisson' or 'bulk', got {self.arrival!r}")
        if self.arrival_rate is not None and not self.arrival_rate > 0:
            raise ContractViolation("arrival_rate must be > 0")
        if self.family not in FAMILIES:
            raise ContractViolation(f"unknown family {self.family!r}")
        if self.family == "pareto" and not self.pareto_alpha > 2:
            raise ContractViolation("pareto_alpha must exceed 2 for a finite sd")
        if not 0 <= self.reduce_fraction < 1:
            raise ContractViolation("reduce_fraction must be in [0, 1)")
        if self.mean_tasks < 1 or self.mean_task_s <= 0:
            raise ContractViolation("mean_tasks >= 1 and mean_task_s > 0 required")

    @property
    def rate(self) -> float:
        if self.arrival_rate is not None:
            return self.arrival_rate
        return TRACE_JOBS / TRACE_DURATION_S * self.machine_count / TRACE_MACHINES


def _phase_dist(cfg: SyntheticConfig, mean: float):
    if cfg.family == "deterministic":
        return Deterministic(mean)
    if cfg.family == "pareto":
        a = cfg.pareto_alpha
        return Pareto(a, mean * (a - 1) / a)
    return LogNormal.from_moments(mean, mean * cfg.lognormal_cv)


def gen_synthetic(cfg: SyntheticConfig) -> list[JobSpec]:
    """Seeded synthetic workload with lognormal task counts and task means."""
    gen = np.random.default_rng(cfg.seed)
    n = cfg.job_count
    s = cfg.task_count_log_sd
    totals = np.maximum(1, np.rint(gen.lognormal(math.log(cfg.mean_tasks) - s * s / 2, s, n))).astype(int)
    reduces = np.floor(totals * cfg.reduce_fraction).astype(int)
    maps = totals - reduces

    d = cfg.task_mean_log_sd
    means = gen.lognormal(math.log(cfg.mean_task_s) - d * d / 2, d, n)
    # the smallest possible draw of a Pareto phase is its scale mu
    floor = cfg.min_task_s
    if cfg.family == "pareto":
        floor = cfg.min_task_s * cfg.pareto_alpha / (cfg.pareto_alpha - 1)
    means = np.clip(means, floor, cfg.max_task_s)

    priorities = gen.integers(0, MAX_PRIORITY + 1, n)
    if cfg.arrival == "bulk":
        arrivals = np.zeros(n, dtype=int)
    else:
        arrivals = np.floor(np.cumsum(gen.exponential(1 / cfg.rate, n))).astype(int)
        arrivals -= arrivals[0]

    jobs = []
    for i in range(n):
        jobs.append(
            JobSpec(
                job_id=i,
                arrival_slot=int(arrivals[i]),
                weight=priority_to_weight(int(priorities[i])),
                map_count=int(maps[i]),
                reduce_count=int(reduces[i]),
                map_dist=_phase_dist(cfg, float(means[i])),
                reduce_dist=_phase_dist(cfg, float(means[i]) * cfg.reduce_duration_ratio),
            )
        )
    return jobs


def workload_stats(jobs: Sequence[JobSpec]) -> dict:
    """Aggregate statistics comparable to the trace summary table."""
    tasks = np.array([j.map_count + j.reduce_count for j in jobs], dtype=float)
    total = tasks.sum()
    mean_dur = sum(j.map_count * j.map_dist.mean() + j.reduce_count * j.reduce_dist.mean() for j in jobs) / total
    arrivals = [j.arrival_slot for j in jobs]
    return {
        "jobs": len(jobs),
        "span_s": max(arrivals) - min(arrivals),
        "mean_tasks_per_job": float(tasks.mean()),
        "mean_task_s": float(mean_dur),
    }
