"""Offline SRPT-ordered scheduling for bulk arrivals (no cloning)."""

from __future__ import annotations

from typing import Hashable

from ..core import ClusterState, ContractViolation, Phase, RiskFactor, order_by_priority
from ..engine import LaunchDirective
from .common import TaskOrder


def offline_priority_order(jobs, risk: float | RiskFactor) -> list[Hashable]:
    """Job ids by descending w_i / phi_i, phi_i taken over the whole job."""
    return order_by_priority([(j.job_id, j.weight, j.effective_workload(risk)) for j in jobs])


def offline_bulk_schedule(
    state: ClusterState, order: list[Hashable], tasks: TaskOrder
) -> list[LaunchDirective]:
    """Fill free machines job by job in the fixed priority order.

    Maps go first; once a job has no unscheduled maps its reduces are placed
    too, even if they must sit blocked until the map phase ends.  One copy per
    task.
    """
    free = state.free_machines()
    out: list[LaunchDirective] = []
    for jid in order:
        if free == 0:
            break
        if jid not in state.alive_jobs:
            continue
        maps = tasks.pick(state, jid, Phase.MAP, free)
        out.extend(LaunchDirective(t, 1) for t in maps)
        free -= len(maps)
        if free and len(maps) == state.pending_map[jid]:
            reduces = tasks.pick(state, jid, Phase.REDUCE, free)
            out.extend(LaunchDirective(t, 1) for t in reduces)
            free -= len(reduces)
    return out


class OfflineBulkScheduler:
    event_driven = True

    def __init__(self, risk: float | RiskFactor = 0.0) -> None:
        self.risk = risk if isinstance(risk, RiskFactor) else RiskFactor(float(risk))
        self.tasks = TaskOrder()
        self.order: list | None = None

    def reset(self) -> None:
        self.tasks.clear()
        self.order = None

    def decide(self, slot: int, state: ClusterState) -> list[LaunchDirective]:
        if self.order is None:
            late = [j.job_id for j in state.jobs.values() if j.arrival_slot > 0]
            if late or slot > 0:
                raise ContractViolation(
                    f"offline bulk scheduling needs every job at slot 0; late jobs: {late[:5]}"
                )
            self.order = offline_priority_order(state.jobs.values(), self.risk)
        elif len(state.jobs) > len(self.order):
            raise ContractViolation(f"slot {slot}: a job arrived after slot 0 under the offline policy")
        return offline_bulk_schedule(state, self.order, self.tasks)
