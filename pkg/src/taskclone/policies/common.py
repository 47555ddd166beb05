from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Hashable, Sequence

from ..core import ClusterState, ContractViolation, Phase, TaskRef
from ..engine import LaunchDirective


@dataclass(frozen=True)
class PolicyParams:
    epsilon: float = 0.6
    risk_factor: float = 3.0
    mantri_delta: float = 0.25
    mantri_backup_multiplier: float = 2.0

    def __post_init__(self) -> None:
        if not 0 < self.epsilon <= 1:
            raise ContractViolation(f"epsilon must be in (0, 1], got {self.epsilon}")
        if not (self.risk_factor >= 0 and math.isfinite(self.risk_factor)):
            raise ContractViolation(f"risk_factor must be >= 0, got {self.risk_factor}")
        if not 0 < self.mantri_delta < 1:
            raise ContractViolation(f"mantri_delta must be in (0, 1), got {self.mantri_delta}")
        if not self.mantri_backup_multiplier > 0:
            raise ContractViolation("mantri_backup_multiplier must be positive")


class TaskOrder:
    """Per-(job, phase) random permutations of task indices.

    Picking the first k unscheduled tasks of a fixed uniform permutation is the
    same as choosing k of them uniformly at random, and keeps the choice
    independent of when the scheduler happens to make it.
    """

    def __init__(self) -> None:
        self._perms: dict = {}

    def clear(self) -> None:
        self._perms.clear()

    def pick(self, state: ClusterState, job_id: Hashable, phase: Phase, limit: int | None = None) -> list[TaskRef]:
        pending = state.unscheduled_tasks(job_id, phase)
        if not pending:
            return []
        key = (job_id, phase)
        perm = self._perms.get(key)
        if perm is None:
            perm = list(range(state.jobs[job_id].task_count(phase)))
            state.streams.stream("order", job_id, phase.value).shuffle(perm)
            self._perms[key] = perm
        out = []
        want = len(pending) if limit is None else min(limit, len(pending))
        for i in perm:
            if i in pending:
                out.append(TaskRef(job_id, phase, i))
                if len(out) == want:
                    break
        return out


def task_cloning_assign(
    candidates: Sequence[TaskRef], x: int, rng, *, clone: bool = True
) -> tuple[list[LaunchDirective], int]:
    """Spread ``x`` newly granted machines over a job's unscheduled tasks.

    ``candidates`` lists the unscheduled tasks of the job's active phase in
    random order.  With x <= len(candidates) the first x tasks get one copy
    each.  Otherwise every task gets x // c copies and x % c tasks, picked at
    random without repetition, get one more.  Returns the directives and the
    number of machines consumed.
    """
    if x < 1:
        raise ContractViolation(f"x must be >= 1, got {x}")
    c = len(candidates)
    if c == 0:
        return [], 0
    if x <= c or not clone:
        take = min(x, c)
        return [LaunchDirective(t, 1) for t in candidates[:take]], take
    base, extra = divmod(x, c)
    bonus = set(rng.sample(range(c), extra)) if extra else set()
    return [LaunchDirective(t, base + (i in bonus)) for i, t in enumerate(candidates)], x
