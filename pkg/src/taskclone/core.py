"""Domain types and the priority / effective-workload arithmetic.

Everything time-like is measured in slots, and one slot is one second of
work at unit speed.
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Hashable, Sequence

if TYPE_CHECKING:
    from .stochastic import DurationDistribution


class ContractViolation(ValueError):
    """An argument broke an operation's precondition."""


class ZeroWorkloadError(ArithmeticError):
    """Priority was requested for a job with nothing left to do."""


class Phase(enum.Enum):
    MAP = "m"
    REDUCE = "r"

    def __lt__(self, other: "Phase") -> bool:
        return self.value < other.value


@dataclass(frozen=True)
class RiskFactor:
    """Standard-deviation multiplier used in effective workloads."""

    r: float = 0.0

    def __post_init__(self) -> None:
        if not (self.r >= 0 and math.isfinite(self.r)):
            raise ContractViolation(f"risk factor must be finite and >= 0, got {self.r}")

    @property
    def meaningful(self) -> bool:
        # the flowtime-bound probability is only positive above 1
        return self.r > 1

    def __float__(self) -> float:
        return float(self.r)


def _risk_value(risk: float | RiskFactor) -> float:
    if isinstance(risk, RiskFactor):
        return risk.r
    return float(RiskFactor(float(risk)).r)


@dataclass(frozen=True)
class JobSpec:
    job_id: Hashable
    arrival_slot: int
    weight: float
    map_count: int
    reduce_count: int
    map_dist: "DurationDistribution"
    reduce_dist: "DurationDistribution"

    def __post_init__(self) -> None:
        if int(self.arrival_slot) != self.arrival_slot or self.arrival_slot < 0:
            raise ContractViolation(f"job {self.job_id!r}: arrival_slot must be a non-negative integer")
        if not (self.weight > 0 and math.isfinite(self.weight)):
            raise ContractViolation(f"job {self.job_id!r}: weight must be positive")
        if self.map_count < 1:
            raise ContractViolation(f"job {self.job_id!r}: map_count must be >= 1")
        if self.reduce_count < 0:
            raise ContractViolation(f"job {self.job_id!r}: reduce_count must be >= 0")
        for name, dist in (("map", self.map_dist), ("reduce", self.reduce_dist)):
            if not (math.isfinite(dist.mean()) and math.isfinite(dist.sd())):
                raise ContractViolation(
                    f"job {self.job_id!r}: {name} distribution {dist} needs finite mean and sd"
                )

    def task_count(self, phase: Phase) -> int:
        return self.map_count if phase is Phase.MAP else self.reduce_count

    def dist(self, phase: Phase) -> "DurationDistribution":
        return self.map_dist if phase is Phase.MAP else self.reduce_dist

    def effective_workload(
        self, risk: float | RiskFactor, pending_map: int | None = None, pending_reduce: int | None = None
    ) -> float:
        """Effective workload over the given counts (the full job by default)."""
        return effective_workload(
            self.map_dist.mean(),
            self.map_dist.sd(),
            self.map_count if pending_map is None else pending_map,
            self.reduce_dist.mean(),
            self.reduce_dist.sd(),
            self.reduce_count if pending_reduce is None else pending_reduce,
            risk,
        )


@dataclass(frozen=True, order=True)
class TaskRef:
    job_id: Hashable
    phase: Phase
    index: int


@dataclass
class CopyInstance:
    """One running copy of a task.

    Progress is tracked lazily: a copy accrues ``speed`` seconds of work per
    slot from ``progress_start`` on; ``progress_start`` is None while the copy
    is blocked behind its job's map phase.
    """

    copy_id: int
    task: TaskRef
    machine_id: int
    sampled_workload: float
    started_slot: int
    ordinal: int = 0
    progress_start: int | None = None
    finish_slot: int | None = None

    @property
    def blocked(self) -> bool:
        return self.progress_start is None

    def remaining_work(self, slot: int, speed: float = 1.0) -> float:
        """Work left at the start of ``slot``."""
        if self.progress_start is None or slot <= self.progress_start:
            return self.sampled_workload
        return max(0.0, self.sampled_workload - speed * (slot - self.progress_start))

    def elapsed_work(self, slot: int, speed: float = 1.0) -> float:
        return self.sampled_workload - self.remaining_work(slot, speed)


@dataclass
class ClusterState:
    """Mutable cluster bookkeeping owned by the engine.

    Schedulers receive this object and must treat it as read-only.
    """

    machine_count: int
    speed: float = 1.0
    slot: int = 0
    jobs: dict = field(default_factory=dict)
    alive_jobs: dict = field(default_factory=dict)  # ordered set keyed by job_id
    pending_map: dict = field(default_factory=dict)
    pending_reduce: dict = field(default_factory=dict)
    unscheduled: dict = field(default_factory=dict)  # (job_id, Phase) -> set of task indices
    map_complete: set = field(default_factory=set)
    maps_done: dict = field(default_factory=dict)
    reduces_done: dict = field(default_factory=dict)
    running: dict = field(default_factory=dict)  # copy_id -> CopyInstance
    task_copies: dict = field(default_factory=dict)  # TaskRef -> list of copy_ids
    copies_launched: dict = field(default_factory=dict)  # TaskRef -> int
    completed_tasks: set = field(default_factory=set)
    occupancy: dict = field(default_factory=dict)
    completed_flowtimes: dict = field(default_factory=dict)
    streams: object = None

    def free_machines(self) -> int:
        return self.machine_count - len(self.running)

    def job_occupancy(self, job_id: Hashable) -> int:
        return self.occupancy.get(job_id, 0)

    def unscheduled_tasks(self, job_id: Hashable, phase: Phase) -> set:
        return self.unscheduled.get((job_id, phase), set())

    def schedulable_phase(self, job_id: Hashable) -> Phase | None:
        """Phase whose unscheduled tasks may start without blocking."""
        if self.pending_map.get(job_id, 0) > 0:
            return Phase.MAP
        if self.pending_reduce.get(job_id, 0) > 0 and job_id in self.map_complete:
            return Phase.REDUCE
        return None

    def remaining_effective_workload(self, job_id: Hashable, risk: float | RiskFactor) -> float:
        spec = self.jobs[job_id]
        return spec.effective_workload(risk, self.pending_map[job_id], self.pending_reduce[job_id])


def effective_workload(
    mean_map: float,
    sd_map: float,
    pending_map: int,
    mean_reduce: float,
    sd_reduce: float,
    pending_reduce: int,
    risk: float | RiskFactor,
) -> float:
    """Sum over pending tasks of (mean + r * sd), both phases."""
    r = _risk_value(risk)
    for name, v in (
        ("mean_map", mean_map),
        ("sd_map", sd_map),
        ("pending_map", pending_map),
        ("mean_reduce", mean_reduce),
        ("sd_reduce", sd_reduce),
        ("pending_reduce", pending_reduce),
    ):
        if v < 0 or math.isnan(v):
            raise ContractViolation(f"{name} must be >= 0, got {v}")
    return pending_map * (mean_map + r * sd_map) + pending_reduce * (mean_reduce + r * sd_reduce)


def priority(weight: float, workload: float) -> float:
    if workload == 0:
        raise ZeroWorkloadError("job has no remaining effective workload; it should already be complete")
    if workload < 0 or weight <= 0:
        raise ContractViolation(f"need weight > 0 and workload > 0, got ({weight}, {workload})")
    return weight / workload


def priority_key(job_id: Hashable, weight: float, workload: float) -> tuple:
    """Sort key: higher priority first, then ascending job id."""
    return (-priority(weight, workload), _id_key(job_id))


def _id_key(job_id: Hashable) -> tuple:
    # mixed int/str ids must still compare deterministically
    return (0, job_id, "") if isinstance(job_id, (int, float)) else (1, 0, str(job_id))


def order_by_priority(jobs: Sequence[tuple[Hashable, float, float]]) -> list[Hashable]:
    """Job ids from (job_id, weight, workload) triples, highest priority first."""
    return [j for j, _, _ in sorted(jobs, key=lambda t: priority_key(*t))]


def higher_priority_backlog(jobs: Sequence[tuple[float, float]], target_index: int) -> float:
    """Total effective workload of jobs whose priority is at least the target's.

    The comparison is non-strict, so the target and any exact ties count.
    """
    if not 0 <= target_index < len(jobs):
        raise IndexError(f"target_index {target_index} out of range for {len(jobs)} jobs")
    for w, phi in jobs:
        if phi <= 0:
            raise ContractViolation(f"effective workloads must be positive, got {phi}")
    w_t, phi_t = jobs[target_index]
    # cross-multiplied to keep exact ties exact
    return sum(phi for w, phi in jobs if w * phi_t >= w_t * phi)


@dataclass(frozen=True)
class FlowtimeBound:
    bound: float
    min_probability: float
    meaningful: bool


def theorem1_bound(
    mean_reduce: float, sd_reduce: float, backlog: float, machine_count: int, risk: float | RiskFactor
) -> FlowtimeBound:
    """Per-job flowtime bound of the offline policy and its probability floor.

    bound = E_r + r * sd_r + backlog / M, holding with probability at least
    1 + 1/r^4 - 2/r^2 (clamped to [0, 1]; reported as 0 for r <= 1).
    """
    if machine_count < 1:
        raise ContractViolation("machine_count must be >= 1")
    r = _risk_value(risk)
    bound = mean_reduce + r * sd_reduce + backlog / machine_count
    if r <= 1:
        warnings.warn(f"risk factor {r} <= 1 gives no probability guarantee", stacklevel=2)
        return FlowtimeBound(bound, 0.0, False)
    p = 1 + 1 / r**4 - 2 / r**2
    return FlowtimeBound(bound, min(1.0, max(0.0, p)), True)
