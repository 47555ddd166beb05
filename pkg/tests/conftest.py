import random

import pytest
from hypothesis import settings

from taskclone.core import JobSpec, Phase, TaskRef
from taskclone.engine import LaunchDirective
from taskclone.stochastic import Deterministic, LogNormal, Pareto

settings.register_profile("repo", deadline=None, max_examples=60, derandomize=True)
settings.load_profile("repo")


def det_job(job_id, maps=1, map_s=1.0, reduces=0, reduce_s=1.0, weight=1.0, arrival=0):
    return JobSpec(job_id, arrival, weight, maps, reduces, Deterministic(float(map_s)), Deterministic(float(reduce_s)))


class GreedyScheduler:
    """Fills free machines with unscheduled map tasks, then ready reduces, in id order."""

    def __init__(self, place_blocked_reduces=False, copies=1):
        self.place_blocked_reduces = place_blocked_reduces
        self.copies = copies

    def decide(self, slot, state):
        free = state.free_machines()
        out = []
        for jid in state.alive_jobs:
            for phase in (Phase.MAP, Phase.REDUCE):
                if phase is Phase.REDUCE and jid not in state.map_complete and not self.place_blocked_reduces:
                    continue
                for idx in sorted(state.unscheduled_tasks(jid, phase)):
                    k = min(self.copies, free)
                    if k == 0:
                        return out
                    out.append(LaunchDirective(TaskRef(jid, phase, idx), k))
                    free -= k
        return out


def random_workload(rng: random.Random, n_jobs: int, max_arrival: int = 30, family: str | None = None):
    jobs = []
    for i in range(n_jobs):
        fam = family or rng.choice(["det", "pareto", "lognormal"])
        mean_m = rng.uniform(1, 12)
        mean_r = rng.uniform(1, 12)
        if fam == "det":
            dm, dr = Deterministic(round(mean_m, 2)), Deterministic(round(mean_r, 2))
        elif fam == "pareto":
            a = rng.uniform(2.1, 4.0)
            dm, dr = Pareto(a, mean_m * (a - 1) / a), Pareto(a, mean_r * (a - 1) / a)
        else:
            dm, dr = LogNormal.from_moments(mean_m, mean_m * 0.8), LogNormal.from_moments(mean_r, mean_r * 0.8)
        jobs.append(
            JobSpec(i, rng.randint(0, max_arrival), rng.randint(1, 12), rng.randint(1, 6), rng.randint(0, 3), dm, dr)
        )
    return jobs


@pytest.fixture
def greedy():
    return GreedyScheduler()
