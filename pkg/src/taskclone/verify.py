"""Oracles and empirical checks for the offline flowtime guarantees.

* ``brute_force_optimal`` solves tiny deterministic bulk instances exactly.
* ``empirical_competitive_ratio`` compares the offline SRPT-ordered policy
  against that optimum.
* ``check_theorem1`` replays the offline policy many times and counts how
  often each job finishes within its per-job flowtime bound.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Iterable, Sequence

from scipy.stats import binomtest

from .core import ContractViolation, JobSpec, higher_priority_backlog, theorem1_bound
from .engine import SimulationConfig, run
from .policies.offline import OfflineBulkScheduler, offline_priority_order
from .stochastic import Deterministic

log = logging.getLogger(__name__)

MAX_ORACLE_JOBS = 3
MAX_ORACLE_TASKS = 6
MAX_ORACLE_MACHINES = 3
MAX_ORACLE_STATES = 10_000_000


class OracleSizeError(ContractViolation):
    """Instance outside the limits of exhaustive search."""


@dataclass(frozen=True)
class OracleInstance:
    jobs: tuple
    machine_count: int

    def __post_init__(self) -> None:
        jobs = tuple(self.jobs)
        object.__setattr__(self, "jobs", jobs)
        if not jobs:
            raise ContractViolation("oracle instance needs at least one job")
        if len(jobs) > MAX_ORACLE_JOBS:
            raise OracleSizeError(f"{len(jobs)} jobs exceeds the oracle limit of {MAX_ORACLE_JOBS}")
        tasks = sum(j.map_count + j.reduce_count for j in jobs)
        if tasks > MAX_ORACLE_TASKS:
            raise OracleSizeError(f"{tasks} tasks exceeds the oracle limit of {MAX_ORACLE_TASKS}")
        if not 1 <= self.machine_count <= MAX_ORACLE_MACHINES:
            raise OracleSizeError(f"machine_count must be in 1..{MAX_ORACLE_MACHINES}")
        if len({j.job_id for j in jobs}) != len(jobs):
            raise ContractViolation("duplicate job ids")
        for j in jobs:
            if j.arrival_slot != 0:
                raise ContractViolation(f"job {j.job_id!r}: oracle instances are bulk arrivals")
            for d in (j.map_dist, j.reduce_dist):
                if not isinstance(d, Deterministic) or d.value != int(d.value) or d.value < 1:
                    raise ContractViolation(f"job {j.job_id!r}: oracle durations must be deterministic integers >= 1")

    @property
    def task_count(self) -> int:
        return sum(j.map_count + j.reduce_count for j in self.jobs)


def oracle_job(job_id, weight: float, maps: int, map_s: int, reduces: int = 0, reduce_s: int = 1) -> JobSpec:
    return JobSpec(job_id, 0, weight, maps, reduces, Deterministic(float(map_s)), Deterministic(float(reduce_s)))


def brute_force_optimal(instance: OracleInstance, *, max_states: int = MAX_ORACLE_STATES) -> float:
    """Minimum weighted total flowtime over non-preemptive single-copy schedules.

    Tasks of one phase of a job are identical, so a state only tracks per
    job how many tasks of each phase are unstarted and the remaining times of
    the running ones.  Starts happen only at completion instants (starting a
    task later without an intervening event is never better); idling is
    allowed.  Cost to go from a state is memoised.
    """
    jobs = instance.jobs
    M = instance.machine_count
    weights = [j.weight for j in jobs]
    dur = [(int(j.map_dist.value), int(j.reduce_dist.value)) for j in jobs]
    start = tuple((j.map_count, (), j.reduce_count, ()) for j in jobs)

    def done(js) -> bool:
        return js[0] == 0 and not js[1] and js[2] == 0 and not js[3]

    def choices(state, free: int):
        # per job (maps to start, reduces to start), total <= free
        per_job = []
        for js in state:
            mu, mr, ru, rr = js
            opts = [(a, 0) for a in range(min(mu, free) + 1)]
            if mu == 0 and not mr:
                opts = [(0, b) for b in range(min(ru, free) + 1)]
            per_job.append(opts)
        for combo in itertools.product(*per_job):
            if sum(a + b for a, b in combo) <= free:
                yield combo

    seen = 0

    @lru_cache(maxsize=None)
    def cost(state) -> float:
        nonlocal seen
        seen += 1
        if seen > max_states:
            raise OracleSizeError(f"oracle exceeded {max_states} states")
        if all(done(js) for js in state):
            return 0.0
        busy = sum(len(js[1]) + len(js[3]) for js in state)
        best = math.inf
        for combo in choices(state, M - busy):
            nxt = []
            for i, (js, (a, b)) in enumerate(zip(state, combo)):
                mu, mr, ru, rr = js
                nxt.append((mu - a, mr + (dur[i][0],) * a, ru - b, rr + (dur[i][1],) * b))
            running = [t for js in nxt for t in js[1] + js[3]]
            if not running:
                continue
            dt = min(running)
            alive_w = sum(w for w, js in zip(weights, nxt) if not done(js))
            adv = []
            for js in nxt:
                mr = tuple(sorted(t - dt for t in js[1] if t > dt))
                rr = tuple(sorted(t - dt for t in js[3] if t > dt))
                adv.append((js[0], mr, js[2], rr))
            best = min(best, dt * alive_w + cost(tuple(adv)))
        return best

    return cost(start)


def weighted_total_flowtime(result, weights=None) -> float:
    weights = weights or result.weights
    return math.fsum(weights[j] * f for j, f in result.flowtimes().items())


@dataclass(frozen=True)
class RatioRecord:
    instance: OracleInstance
    opt: float
    alg: float

    @property
    def ratio(self) -> float:
        return self.alg / self.opt

    @property
    def allowance(self) -> float:
        """Ratio allowed once one slot of rounding per job is granted."""
        return 2 + len(self.instance.jobs) / self.opt


@dataclass
class CompetitiveReport:
    records: list = field(default_factory=list)

    @property
    def max_ratio(self) -> float:
        return max(r.ratio for r in self.records)

    @property
    def worst(self) -> RatioRecord:
        return max(self.records, key=lambda r: r.ratio)

    @property
    def violations(self) -> list:
        return [r for r in self.records if r.ratio > r.allowance + 1e-12]

    @property
    def ok(self) -> bool:
        return not self.violations


def empirical_competitive_ratio(
    instances: Iterable[OracleInstance],
    policy: Callable[[], object] | None = None,
    *,
    seeds: int = 20,
) -> CompetitiveReport:
    """ALG / OPT per instance, ALG being the worst over ``seeds`` tie-break seeds."""
    policy = policy or (lambda: OfflineBulkScheduler(0.0))
    report = CompetitiveReport()
    for inst in instances:
        opt = brute_force_optimal(inst)
        alg = max(
            weighted_total_flowtime(run(list(inst.jobs), policy(), SimulationConfig(inst.machine_count, seed=s)))
            for s in range(seeds)
        )
        report.records.append(RatioRecord(inst, opt, alg))
    return report


def oracle_family(
    max_jobs: int = 3,
    durations: Sequence[int] = (1, 2),
    machine_counts: Sequence[int] = (1, 2),
    weights: Sequence[float] = (1, 2),
    max_maps: int = 2,
    max_reduces: int = 1,
) -> list[OracleInstance]:
    """Every bulk instance (up to job relabelling) built from the given shapes."""
    shapes = []
    for w in weights:
        for m in range(1, max_maps + 1):
            for md in durations:
                shapes.append((w, m, md, 0, 1))
                for r in range(1, max_reduces + 1):
                    for rd in durations:
                        shapes.append((w, m, md, r, rd))
    out = []
    for n in range(1, max_jobs + 1):
        for combo in itertools.combinations_with_replacement(shapes, n):
            if sum(s[1] + s[3] for s in combo) > MAX_ORACLE_TASKS:
                continue
            jobs = tuple(oracle_job(i, *s) for i, s in enumerate(combo))
            out.extend(OracleInstance(jobs, m) for m in machine_counts)
    return out


@dataclass(frozen=True)
class JobBoundResult:
    job_id: object
    bound_s: float
    claimed_min_probability: float
    satisfied: int
    replications: int
    wilson_low: float
    wilson_high: float

    @property
    def rate(self) -> float:
        return self.satisfied / self.replications

    @property
    def ok(self) -> bool:
        # a shortfall within the 95% sampling margin is not a violation
        return self.claimed_min_probability <= self.wilson_high + 1e-12


@dataclass
class BoundReport:
    risk: float
    machine_count: int
    slack_slots: float
    jobs: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(j.ok for j in self.jobs)

    @property
    def failures(self) -> list:
        return [j for j in self.jobs if not j.ok]

    def to_dict(self) -> dict:
        return {
            "risk": self.risk,
            "machine_count": self.machine_count,
            "slack_slots": self.slack_slots,
            "ok": self.ok,
            "jobs": [
                {
                    "job_id": j.job_id,
                    "bound_s": j.bound_s,
                    "claimed_min_probability": j.claimed_min_probability,
                    "empirical_satisfaction_rate": j.rate,
                    "replications": j.replications,
                    "wilson_low": j.wilson_low,
                    "wilson_high": j.wilson_high,
                    "ok": j.ok,
                }
                for j in self.jobs
            ],
        }

    def csv_rows(self) -> tuple[list[str], list[list]]:
        header = ["job_id", "bound_s", "claimed_min_probability", "rate", "wilson_low", "wilson_high", "ok"]
        rows = [[j.job_id, j.bound_s, j.claimed_min_probability, j.rate, j.wilson_low, j.wilson_high, int(j.ok)] for j in self.jobs]
        return header, rows


def job_bounds(workload: Sequence[JobSpec], machine_count: int, risk: float) -> dict:
    """Per-job flowtime bound of the offline policy (no slack added)."""
    order = offline_priority_order(workload, risk)
    by_id = {j.job_id: j for j in workload}
    pairs = [(by_id[j].weight, by_id[j].effective_workload(risk)) for j in order]
    out = {}
    for idx, jid in enumerate(order):
        job = by_id[jid]
        # a map-only job ends with its last map task
        last = job.reduce_dist if job.reduce_count else job.map_dist
        backlog = higher_priority_backlog(pairs, idx)
        out[jid] = theorem1_bound(last.mean(), last.sd(), backlog, machine_count, risk)
    return out


def check_theorem1(
    workload: Sequence[JobSpec],
    machine_count: int,
    risk: float,
    replications: int,
    *,
    seed: int = 0,
    slack_slots: float = 2.0,
) -> BoundReport:
    """Empirical satisfaction rate of the per-job bound under the offline policy.

    ``slack_slots`` is added to every bound to absorb slot rounding.
    """
    late = [j.job_id for j in workload if j.arrival_slot != 0]
    if late:
        raise ContractViolation(f"bound check needs bulk arrivals; jobs arriving later: {late[:5]}")
    if not risk > 1:
        raise ContractViolation(f"risk factor must exceed 1, got {risk}")
    if replications < 100:
        raise ContractViolation(f"need at least 100 replications, got {replications}")
    bounds = job_bounds(workload, machine_count, risk)
    hits = dict.fromkeys(bounds, 0)
    for i in range(replications):
        res = run(list(workload), OfflineBulkScheduler(risk), SimulationConfig(machine_count, seed=seed + i))
        flows = res.flowtimes()
        for jid, b in bounds.items():
            if jid in flows and flows[jid] <= b.bound + slack_slots:
                hits[jid] += 1
    report = BoundReport(float(risk), machine_count, slack_slots)
    for jid, b in bounds.items():
        ci = binomtest(hits[jid], replications).proportion_ci(0.95, method="wilson")
        report.jobs.append(
            JobBoundResult(jid, b.bound + slack_slots, b.min_probability, hits[jid], replications, float(ci.low), float(ci.high))
        )
    log.info("bound check: %d/%d jobs within margin", sum(j.ok for j in report.jobs), len(report.jobs))
    return report
