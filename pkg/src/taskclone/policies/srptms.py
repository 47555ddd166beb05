"""SRPT-ordered epsilon-fractional machine sharing with opportunistic cloning.

Every slot the jobs that can start a task are ranked by w_i / U_i(l), where
U_i(l) is the effective workload of their unscheduled tasks.  The top jobs
whose cumulative weight makes up an epsilon fraction of the total share all
M machines in proportion to their weights.  A job that already holds more
than its share keeps its machines (no preemption).  Surplus machines for a
job with fewer unscheduled tasks than granted machines become clones.

epsilon = 1 degenerates to the weighted fair scheduler; epsilon -> 0 gives
plain SRPT.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Hashable, Sequence

from ..core import ClusterState, ContractViolation, RiskFactor, priority_key
from ..engine import LaunchDirective
from .common import PolicyParams, TaskOrder, task_cloning_assign


@dataclass
class ShareVector:
    job_ids: list
    weights: list
    workloads: list
    shares: list  # g_i(l), before rounding
    rounded: list
    occupancy: list = field(default_factory=list)

    @property
    def deficits(self) -> list:
        return [g - s for g, s in zip(self.rounded, self.occupancy)]

    def as_dict(self) -> dict:
        return dict(zip(self.job_ids, self.shares))


def largest_remainder(values: Sequence[float], total: int) -> list[int]:
    """Round ``values`` to integers summing to ``total``; ties go to earlier entries."""
    floors = [math.floor(v) for v in values]
    left = total - sum(floors)
    if left > 0:
        by_frac = sorted(range(len(values)), key=lambda i: (-(values[i] - floors[i]), i))
        for i in by_frac[:left]:
            floors[i] += 1
    return floors


def srptms_shares(alive: Sequence[tuple[Hashable, float, float]], epsilon: float, machine_count: int) -> ShareVector:
    """Machine entitlements for (job_id, weight, remaining effective workload) triples.

    The result is ordered by descending priority.
    """
    if not alive:
        raise ContractViolation("no alive jobs to share machines among")
    if not 0 < epsilon <= 1:
        raise ContractViolation(f"epsilon must be in (0, 1], got {epsilon}")
    for jid, w, u in alive:
        if not u > 0:
            raise ContractViolation(f"job {jid!r}: remaining workload must be positive, got {u}")
        if not w > 0:
            raise ContractViolation(f"job {jid!r}: weight must be positive, got {w}")
    ranked = sorted(alive, key=lambda t: priority_key(*t))
    n = len(ranked)
    below = [0.0] * n  # weight of strictly lower-priority jobs
    acc = 0.0
    for i in range(n - 1, -1, -1):
        below[i] = acc
        acc += ranked[i][1]
    total = acc
    frontier = (1 - epsilon) * total
    denom = epsilon * total
    shares = []
    for (jid, w, _), rest in zip(ranked, below):
        if rest >= frontier:
            g = w * machine_count / denom
        elif rest + w < frontier:
            g = 0.0
        else:
            g = (rest + w - frontier) * machine_count / denom
        shares.append(g)
    return ShareVector(
        job_ids=[t[0] for t in ranked],
        weights=[t[1] for t in ranked],
        workloads=[t[2] for t in ranked],
        shares=shares,
        rounded=largest_remainder(shares, machine_count),
    )


def schedulable_jobs(state: ClusterState, risk: float | RiskFactor) -> list[tuple[Hashable, float, float]]:
    """(job_id, weight, U_i) for alive jobs that can start a task right now."""
    out = []
    for jid in state.alive_jobs:
        if state.schedulable_phase(jid) is None:
            continue
        out.append((jid, state.jobs[jid].weight, state.remaining_effective_workload(jid, risk)))
    return out


def srptms_decide(
    slot: int,
    state: ClusterState,
    params: PolicyParams,
    tasks: TaskOrder,
    *,
    clone: bool = True,
) -> list[LaunchDirective]:
    alive = schedulable_jobs(state, params.risk_factor)
    if not alive:
        return []
    sv = srptms_shares(alive, params.epsilon, state.machine_count)
    sv.occupancy = [state.job_occupancy(j) for j in sv.job_ids]
    free = state.free_machines()
    out: list[LaunchDirective] = []
    for jid, deficit in zip(sv.job_ids, sv.deficits):
        if free == 0:
            break
        if deficit <= 0:
            continue
        x = min(deficit, free)
        candidates = tasks.pick(state, jid, state.schedulable_phase(jid))
        rng = None
        if clone and x > len(candidates) and x % len(candidates):
            rng = state.streams.stream("clone", slot, jid)
        directives, used = task_cloning_assign(candidates, x, rng, clone=clone)
        out.extend(directives)
        free -= used
    return out


class SrptmsScheduler:
    event_driven = True

    def __init__(self, params: PolicyParams | None = None, *, clone: bool = True) -> None:
        self.params = params or PolicyParams()
        self.clone = clone
        self.tasks = TaskOrder()

    def reset(self) -> None:
        self.tasks.clear()

    def decide(self, slot: int, state: ClusterState) -> list[LaunchDirective]:
        return srptms_decide(slot, state, self.params, self.tasks, clone=self.clone)


class FairScheduler(SrptmsScheduler):
    """Weighted fair sharing: epsilon = 1 and no proactive clones."""

    def __init__(self, params: PolicyParams | None = None) -> None:
        params = params or PolicyParams()
        super().__init__(
            PolicyParams(1.0, params.risk_factor, params.mantri_delta, params.mantri_backup_multiplier),
            clone=False,
        )
