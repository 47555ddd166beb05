"""Greedy stand-in for smart cloning (SCA).

The original allocates clones by solving a convex program each slot.  Here
the same separable objective, sum over tasks of E / s(k), is minimised
greedily: every task first gets one machine, then each spare machine goes to
the task with the largest marginal gain E/s(k) - E/s(k+1).  Because s is
concave the marginal gains are non-increasing in k, so the greedy choice is
optimal for the relaxation.
"""

from __future__ import annotations

import heapq

from ..core import ClusterState, order_by_priority
from ..engine import LaunchDirective
from ..stochastic import speedup
from .common import PolicyParams, TaskOrder
from .srptms import schedulable_jobs


def marginal_gain(mean: float, fn, k: int) -> float:
    return mean / speedup(fn, k) - mean / speedup(fn, k + 1)


def sca_lite_decide(slot: int, state: ClusterState, params: PolicyParams, tasks: TaskOrder) -> list[LaunchDirective]:
    free = state.free_machines()
    if free == 0:
        return []
    alive = schedulable_jobs(state, params.risk_factor)
    launched = []  # [task, copies, mean, speedup fn]
    for jid in order_by_priority(alive):
        if free == 0:
            break
        job = state.jobs[jid]
        phase = state.schedulable_phase(jid)
        dist = job.dist(phase)
        fn = dist.speedup_function()
        picked = tasks.pick(state, jid, phase, free)
        launched.extend([t, 1, dist.mean(), fn] for t in picked)
        free -= len(picked)
    if free > 0 and launched:
        heap = [(-marginal_gain(m, fn, 1), i) for i, (_, _, m, fn) in enumerate(launched)]
        heapq.heapify(heap)
        while free > 0 and heap:
            neg_gain, i = heapq.heappop(heap)
            if -neg_gain <= 0:
                break
            entry = launched[i]
            entry[1] += 1
            free -= 1
            heapq.heappush(heap, (-marginal_gain(entry[2], entry[3], entry[1]), i))
    return [LaunchDirective(t, k) for t, k, _, _ in launched]


class ScaLiteScheduler:
    event_driven = True

    def __init__(self, params: PolicyParams | None = None) -> None:
        self.params = params or PolicyParams()
        self.tasks = TaskOrder()

    def reset(self) -> None:
        self.tasks.clear()

    def decide(self, slot: int, state: ClusterState) -> list[LaunchDirective]:
        return sca_lite_decide(slot, state, self.params, self.tasks)
