"""Detection-based speculative execution in the style of Mantri.

Fresh tasks are placed by the weighted fair scheduler.  Machines left over
are used for backup copies: a running task gets one backup when
P(t_rem > multiplier * t_new) > delta, where t_rem is the remaining duration
of its copy given the work already done and t_new is a fresh draw.
"""

from __future__ import annotations

import heapq
import math
from functools import lru_cache

import numpy as np
from scipy import integrate

from ..core import ClusterState, Phase
from ..engine import LaunchDirective
from ..stochastic import Deterministic, LogNormal, Pareto
from .common import PolicyParams
from .srptms import FairScheduler

_MC_SAMPLES = 10_000


def backup_probability(dist, elapsed: float, multiplier: float = 2.0, *, samples: int = _MC_SAMPLES) -> float:
    """P(t_rem > multiplier * t_new) for a copy that has done ``elapsed`` work."""
    if isinstance(dist, Deterministic):
        return 1.0 if dist.value - elapsed > multiplier * dist.value else 0.0
    if isinstance(dist, Pareto):
        return _pareto_backup_probability(dist.alpha, dist.mu, float(elapsed), float(multiplier))
    if isinstance(dist, LogNormal):
        return _lognormal_backup_probability(dist, float(elapsed), float(multiplier), samples)
    raise TypeError(f"unsupported distribution {dist!r}")


def _pareto_backup_probability(alpha: float, mu: float, e: float, c: float) -> float:
    # Given survival past e the copy's total work is Pareto(alpha, max(mu, e)).
    # With t_new = mu * u^(-1/alpha), u ~ U(0, 1]:
    #   P = integral_0^1 min(1, (m / (e + c * mu * u^(-1/alpha)))^alpha) du
    m = max(mu, e)

    def integrand(u: float) -> float:
        if u <= 0:
            return 0.0
        return min(1.0, (m / (e + c * mu * u ** (-1.0 / alpha))) ** alpha)

    val, _ = integrate.quad(integrand, 0.0, 1.0, epsabs=1e-11, epsrel=1e-9, limit=200)
    return val


def _lognormal_backup_probability(dist: LogNormal, e: float, c: float, samples: int) -> float:
    gen = np.random.default_rng(20240101)
    lo = dist.cdf(e)
    # conditioned on X > e via inverse cdf on (F(e), 1)
    u = lo + (1 - lo) * gen.random(samples)
    u = np.clip(u, 1e-16, 1 - 1e-16)
    from scipy.stats import norm

    x = np.exp(dist.log_mean + dist.log_sd * norm.ppf(u))
    t_new = dist.sample_many(gen, samples)
    return float(np.mean(x - e > c * t_new))


@lru_cache(maxsize=256)
def _pareto_threshold_ratio(alpha: float, c: float, delta: float) -> float:
    # Past e >= mu the probability depends on e / mu only and rises towards 1.
    probe = Pareto(alpha, 1.0)
    lo, hi = 1.0, 2.0
    while backup_probability(probe, hi, c) <= delta:
        lo, hi = hi, hi * 2
        if hi > 1e15:
            return math.inf
    for _ in range(60):
        mid = (lo + hi) / 2
        if backup_probability(probe, mid, c) > delta:
            hi = mid
        else:
            lo = mid
    return hi


@lru_cache(maxsize=1024)
def backup_threshold(dist, multiplier: float, delta: float) -> float:
    """Smallest elapsed work after which a backup is warranted (inf if never).

    For Pareto the probability falls on [0, mu] and rises on [mu, inf), so a
    fresh copy either qualifies at once or after the returned threshold.
    """
    if isinstance(dist, Deterministic):
        return math.inf
    if isinstance(dist, Pareto):
        # at e = 0, (mu / t_new)^alpha is uniform, giving 1 / (2 c^alpha)
        if 0.5 * multiplier ** (-dist.alpha) > delta:
            return 0.0
        return dist.mu * _pareto_threshold_ratio(dist.alpha, float(multiplier), float(delta))
    if backup_probability(dist, 0.0, multiplier) > delta:
        return 0.0
    grid = dist.mean() * np.geomspace(1e-2, 1e3, 200)
    for e in grid:
        if backup_probability(dist, float(e), multiplier) > delta:
            return float(e)
    return math.inf


def _eligible_slot(copy, threshold: float, speed: float) -> float:
    """First slot at whose start the copy's elapsed work exceeds ``threshold``."""
    if math.isinf(threshold):
        return math.inf
    if threshold == 0.0:
        return copy.progress_start
    return copy.progress_start + math.floor(threshold / speed) + 1


def mantri_decide(slot: int, state: ClusterState, params: PolicyParams, free: int) -> tuple[list[LaunchDirective], float]:
    """Backups for eligible running copies on up to ``free`` machines.

    Longest-running eligible copies go first.  Returns the directives and the
    earliest future slot at which a copy not yet eligible becomes eligible.
    This is a full scan; MantriScheduler keeps the same bookkeeping
    incrementally.
    """
    candidates = []
    wake = math.inf
    for c in state.running.values():
        task = c.task
        if c.blocked or state.copies_launched[task] > 1 or task in state.completed_tasks:
            continue
        dist = state.jobs[task.job_id].dist(task.phase)
        at = _eligible_slot(c, backup_threshold(dist, params.mantri_backup_multiplier, params.mantri_delta), state.speed)
        if at <= slot:
            candidates.append((c.progress_start, c.copy_id, task))
        else:
            wake = min(wake, at)
    if free <= 0 or not candidates:
        return [], wake
    candidates.sort()
    return [LaunchDirective(task, 1) for _, _, task in candidates[:free]], wake


class MantriScheduler:
    event_driven = True

    def __init__(self, params: PolicyParams | None = None) -> None:
        self.params = params or PolicyParams()
        self.base = FairScheduler(self.params)
        self.reset()

    def reset(self) -> None:
        self.base.reset()
        self.next_wakeup: float = math.inf
        self._seen = -1
        self._blocked: list[int] = []
        self._waiting: list[tuple] = []  # (eligible_slot, copy_id)
        self._ready: list[tuple] = []  # (progress_start, copy_id)

    def _track(self, state: ClusterState, cid: int) -> None:
        c = state.running.get(cid)
        if c is None:
            return
        if c.blocked:
            self._blocked.append(cid)
            return
        dist = state.jobs[c.task.job_id].dist(c.task.phase)
        at = _eligible_slot(c, backup_threshold(dist, self.params.mantri_backup_multiplier, self.params.mantri_delta), state.speed)
        if not math.isinf(at):
            heapq.heappush(self._waiting, (at, cid))

    def _usable(self, state: ClusterState, cid: int) -> bool:
        c = state.running.get(cid)
        return c is not None and state.copies_launched[c.task] == 1 and c.task not in state.completed_tasks

    def decide(self, slot: int, state: ClusterState) -> list[LaunchDirective]:
        fresh = self.base.decide(slot, state)
        free = state.free_machines() - sum(d.copies for d in fresh)

        new = []
        for cid in reversed(state.running):
            if cid <= self._seen:
                break
            new.append(cid)
        if new:
            self._seen = new[0]
        blocked, self._blocked = self._blocked, []
        for cid in blocked + new[::-1]:
            self._track(state, cid)
        while self._waiting and self._waiting[0][0] <= slot:
            _, cid = heapq.heappop(self._waiting)
            if self._usable(state, cid):
                heapq.heappush(self._ready, (state.running[cid].progress_start, cid))

        backups = []
        while free > 0 and self._ready:
            _, cid = heapq.heappop(self._ready)
            if self._usable(state, cid):
                backups.append(LaunchDirective(state.running[cid].task, 1))
                free -= 1
        self.next_wakeup = self._waiting[0][0] if self._waiting else math.inf
        return fresh + backups
