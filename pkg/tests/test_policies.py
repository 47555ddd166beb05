import random
from collections import Counter
from fractions import Fraction

import numpy as np
import pytest
from conftest import det_job
from hypothesis import given
from hypothesis import strategies as st

from taskclone.core import ContractViolation, JobSpec, Phase, TaskRef
from taskclone.engine import SimulationConfig, run
from taskclone.policies import (
    FairScheduler,
    MantriScheduler,
    OfflineBulkScheduler,
    PolicyParams,
    ScaLiteScheduler,
    SrptmsScheduler,
    backup_probability,
    backup_threshold,
    largest_remainder,
    make_scheduler,
    mantri_decide,
    srptms_shares,
    task_cloning_assign,
)
from taskclone.stochastic import Deterministic, LogNormal, Pareto


class Recorder:
    """Wraps a scheduler and keeps every slot's directives and pre-decision free count."""

    def __init__(self, inner, hook=None):
        self.inner = inner
        self.hook = hook
        self.log = {}
        self.event_driven = getattr(inner, "event_driven", False)

    def reset(self):
        if hasattr(self.inner, "reset"):
            self.inner.reset()

    @property
    def next_wakeup(self):
        return getattr(self.inner, "next_wakeup", float("inf"))

    def decide(self, slot, state):
        out = self.inner.decide(slot, state)
        self.log[slot] = (state.free_machines(), list(out))
        if self.hook:
            self.hook(slot, state, out)
        return out


def exact_shares(weights, epsilon, m):
    # piecewise share formula evaluated in rationals, jobs already in priority order
    eps = Fraction(epsilon).limit_denominator(10**9)
    w = [Fraction(x) for x in weights]
    total = sum(w)
    out = []
    for i, wi in enumerate(w):
        cum = sum(w[i:])  # weight of this job and every lower-priority one
        if cum - wi >= (1 - eps) * total:
            out.append(wi * m / (eps * total))
        elif cum < (1 - eps) * total:
            out.append(Fraction(0))
        else:
            out.append((cum - (1 - eps) * total) * m / (eps * total))
    return out


class TestShares:
    def test_worked_example(self):
        # the weight-2 job has the lowest priority (largest workload per unit weight)
        sv = srptms_shares([("a", 1, 10), ("b", 1, 20), ("c", 2, 400)], 0.5, 10)
        assert sv.job_ids == ["a", "b", "c"]
        assert sv.shares == [5, 5, 0]
        assert [float(g) for g in exact_shares([1, 1, 2], 0.5, 10)] == [5, 5, 0]
        assert sv.rounded == [5, 5, 0]

    def test_fair_specialisation(self):
        sv = srptms_shares([("a", 3, 5), ("b", 1, 50), ("c", 2, 7)], 1.0, 12)
        assert sv.as_dict() == {"a": 6, "b": 2, "c": 4}

    @pytest.mark.parametrize("eps", [0.01, 0.3, 1.0])
    def test_single_job_gets_everything(self, eps):
        sv = srptms_shares([("x", 4, 9)], eps, 7)
        assert sv.shares == [pytest.approx(7, rel=1e-12)]
        assert sv.rounded == [7]

    def test_srpt_limit(self):
        sv = srptms_shares([("a", 1, 10), ("b", 2, 30), ("c", 3, 100)], 1e-6, 50)
        assert sv.shares[0] == pytest.approx(50)
        assert sv.shares[1:] == [0, 0]

    @pytest.mark.parametrize("bad", [[("a", 1, 0)], [("a", 1, -1)], [("a", 0, 3)], []])
    def test_invalid(self, bad):
        with pytest.raises(ContractViolation):
            srptms_shares(bad, 0.5, 4)

    def test_epsilon_range(self):
        with pytest.raises(ContractViolation):
            srptms_shares([("a", 1, 1)], 0.0, 4)

    @given(
        st.lists(st.tuples(st.integers(1, 12), st.integers(1, 10_000)), min_size=1, max_size=25),
        st.floats(0.01, 1.0),
        st.integers(1, 500),
    )
    def test_conservation_and_exact_match(self, jobs, eps, m):
        alive = [(i, w, u) for i, (w, u) in enumerate(jobs)]
        sv = srptms_shares(alive, eps, m)
        assert sum(sv.shares) == pytest.approx(m, rel=1e-9)
        assert all(g >= 0 for g in sv.shares)
        assert sum(sv.rounded) == m
        assert all(abs(r - g) < 1 for r, g in zip(sv.rounded, sv.shares))
        ref = exact_shares(sv.weights, eps, m)
        assert sv.shares == pytest.approx([float(g) for g in ref], rel=1e-9, abs=1e-9)

    def test_largest_remainder(self):
        assert largest_remainder([2.5, 2.5, 5.0], 10) == [3, 2, 5]
        assert largest_remainder([0.4, 0.4, 0.2], 1) == [1, 0, 0]
        assert largest_remainder([1.0, 2.0], 3) == [1, 2]


class TestTaskCloning:
    refs = [TaskRef("j", Phase.MAP, i) for i in range(10)]

    def test_exact_fit(self):
        out, used = task_cloning_assign(self.refs[:4], 4, None)
        assert used == 4 and [d.copies for d in out] == [1, 1, 1, 1]

    def test_remainder(self):
        out, used = task_cloning_assign(self.refs[:2], 5, random.Random(0))
        assert used == 5
        assert sorted(d.copies for d in out) == [2, 3]

    def test_fewer_machines_than_tasks(self):
        out, used = task_cloning_assign(self.refs, 3, None)
        assert used == 3
        assert len({d.task for d in out}) == 3 and all(d.copies == 1 for d in out)

    def test_no_tasks(self):
        assert task_cloning_assign([], 3, None) == ([], 0)

    def test_clone_disabled(self):
        out, used = task_cloning_assign(self.refs[:2], 5, None, clone=False)
        assert used == 2

    def test_bad_x(self):
        with pytest.raises(ContractViolation):
            task_cloning_assign(self.refs[:2], 0, None)

    @given(st.integers(1, 10), st.integers(1, 200), st.integers(0, 1000))
    def test_balanced_and_conserving(self, c, x, seed):
        out, used = task_cloning_assign(self.refs[:c], x, random.Random(seed))
        copies = [d.copies for d in out]
        assert used == sum(copies) == x
        assert max(copies) - min(copies) <= 1


class TestSrptmsDecide:
    def test_worked_share_launches(self):
        jobs = [det_job("a", 8, 5), det_job("b", 8, 10), det_job("c", 8, 100, weight=2)]
        rec = Recorder(SrptmsScheduler(PolicyParams(epsilon=0.5, risk_factor=0)))
        run(jobs, rec, SimulationConfig(10, max_slots=10_000))
        launches = Counter(d.task.job_id for d in rec.log[0][1])
        assert launches == {"a": 5, "b": 5}
        assert all(d.copies == 1 for d in rec.log[0][1])

    def test_no_preemption_when_over_share(self):
        # "big" grabs 6 machines while alone; once "small" arrives its share drops below 6
        jobs = [det_job("big", 20, 50), det_job("small", 10, 1, arrival=1)]
        seen = {}

        def hook(slot, state, out):
            if slot == 1:
                seen["occ"] = state.job_occupancy("big")
                seen["big_launched"] = [d for d in out if d.task.job_id == "big"]

        run(jobs, Recorder(SrptmsScheduler(PolicyParams(epsilon=0.5, risk_factor=0)), hook), SimulationConfig(6))
        assert seen["occ"] == 6
        assert seen["big_launched"] == []

    def test_clones_when_machines_exceed_tasks(self):
        rec = Recorder(SrptmsScheduler())
        res = run([det_job("a", 2, 3)], rec, SimulationConfig(5, seed=1))
        assert sorted(d.copies for d in rec.log[0][1]) == [2, 3]
        assert res.clone_copies == 3

    def test_fair_has_no_clones(self):
        rec = Recorder(FairScheduler())
        res = run([det_job("a", 2, 3)], rec, SimulationConfig(5, seed=1))
        assert res.clone_copies == 0

    @given(st.integers(0, 500))
    def test_never_cancels_copies(self, seed):
        # non-preemption: occupancy only falls when copies finish or are cancelled by a sibling
        rng = random.Random(seed)
        jobs = [JobSpec(i, rng.randint(0, 5), rng.randint(1, 5), rng.randint(1, 4), rng.randint(0, 2), Pareto(2.5, 3.0), Pareto(2.5, 3.0)) for i in range(4)]
        res = run(jobs, SrptmsScheduler(), SimulationConfig(6, seed=seed, audit=True))
        assert res.violations == []


class TestOffline:
    def test_priority_order(self):
        jobs = [det_job("B", 3, 1, weight=1), det_job("A", 2, 1, weight=1)]
        rec = Recorder(OfflineBulkScheduler(0))
        res = run(jobs, rec, SimulationConfig(1))
        order = [d.task.job_id for _, (_, ds) in sorted(rec.log.items()) for d in ds]
        assert order == ["A", "A", "B", "B", "B"]
        assert res.flowtimes() == {"A": 2, "B": 5}

    def test_blocked_reduce_launched_with_maps(self):
        rec = Recorder(OfflineBulkScheduler(0))
        res = run([det_job("j", 2, 3, 1, 2)], rec, SimulationConfig(3, audit=True))
        phases = Counter(d.task.phase for d in rec.log[0][1])
        assert phases == {Phase.MAP: 2, Phase.REDUCE: 1}
        assert res.flowtimes() == {"j": 5}
        assert res.violations == []

    def test_late_arrival_rejected(self):
        with pytest.raises(ContractViolation):
            run([det_job("a"), det_job("b", arrival=3)], OfflineBulkScheduler(0), SimulationConfig(1))

    def test_zero_free_machines(self):
        rec = Recorder(OfflineBulkScheduler(0))
        run([det_job("a", 1, 3), det_job("b", 1, 1)], rec, SimulationConfig(1))
        assert all(ds == [] for free, ds in rec.log.values() if free == 0)

    @given(st.integers(0, 300))
    def test_work_conserving_in_priority_order(self, seed):
        rng = random.Random(seed)
        jobs = [det_job(i, rng.randint(1, 4), rng.randint(1, 5), rng.randint(0, 2), rng.randint(1, 5), weight=rng.randint(1, 5)) for i in range(4)]
        sched = OfflineBulkScheduler(0)
        problems = []

        def hook(slot, state, out):
            left = state.free_machines() - sum(d.copies for d in out)
            if left <= 0:
                return
            launched = {d.task for d in out}
            for jid in state.alive_jobs:
                if any(TaskRef(jid, p, i) not in launched for p in Phase for i in state.unscheduled_tasks(jid, p)):
                    problems.append((slot, jid))

        run(jobs, Recorder(sched, hook), SimulationConfig(rng.randint(1, 4)))
        assert problems == []


class TestMantri:
    def test_probability_at_zero_elapsed(self):
        for alpha, c in [(2.0, 2.0), (2.5, 2.0), (3.0, 1.5)]:
            got = backup_probability(Pareto(alpha, 10.0), 0.0, c)
            assert got == pytest.approx(1 / (2 * c**alpha), rel=1e-6)

    def test_heavy_tail_example_against_monte_carlo(self):
        d = Pareto(2.0, 10.0)
        gen = np.random.default_rng(5)
        n = 100_000
        # given survival past e the total work is Pareto(alpha, max(mu, e))
        total = 100.0 * (1 + gen.pareto(2.0, n))
        t_new = 10.0 * (1 + gen.pareto(2.0, n))
        mc = np.mean(total - 100.0 > 2 * t_new)
        got = backup_probability(d, 100.0, 2.0)
        assert got == pytest.approx(mc, abs=0.01)
        assert got > 0.25

    def test_deterministic_never_backs_up(self):
        d = Deterministic(10.0)
        assert backup_probability(d, 3.0) == 0.0
        assert backup_threshold(d, 2.0, 0.25) == float("inf")
        res = run([det_job("a", 2, 20)], MantriScheduler(), SimulationConfig(8))
        assert res.clone_copies == 0

    def test_threshold_is_crossing_point(self):
        d = Pareto(2.5, 4.0)
        t = backup_threshold(d, 2.0, 0.25)
        assert backup_probability(d, t * 1.001, 2.0) > 0.25
        assert backup_probability(d, t * 0.999, 2.0) <= 0.25

    def test_lognormal_threshold(self):
        wide = LogNormal.from_moments(10.0, 20.0)
        assert backup_threshold(wide, 2.0, 0.25) == 0.0
        d = LogNormal.from_moments(10.0, 8.0)
        t = backup_threshold(d, 2.0, 0.25)
        assert 0 < t < float("inf")
        assert backup_probability(d, t, 2.0) > 0.25

    def test_no_free_machines_no_backups(self):
        jobs = [JobSpec("a", 0, 1, 3, 0, Pareto(2.0001, 5.0), Deterministic(1.0))]
        res = run(jobs, MantriScheduler(), SimulationConfig(3, seed=4))
        assert res.clone_copies == 0

    def test_backups_launch_for_stragglers(self):
        jobs = [JobSpec("a", 0, 1, 2, 0, Pareto(2.5, 10.0), Deterministic(1.0))]
        backups = []
        for seed in range(20):
            res = run(jobs, MantriScheduler(), SimulationConfig(4, seed=seed, audit=True))
            assert res.violations == []
            assert res.clone_copies <= 2
            backups.append(res.clone_copies)
        assert sum(backups) > 0

    @given(st.integers(0, 400))
    def test_incremental_matches_full_scan(self, seed):
        rng = random.Random(seed)
        jobs = [JobSpec(i, rng.randint(0, 20), rng.randint(1, 5), rng.randint(1, 5), rng.randint(0, 2), Pareto(rng.uniform(2.1, 3), 3.0), LogNormal.from_moments(5, 6)) for i in range(5)]
        sched = MantriScheduler()
        mismatches = []

        def hook(slot, state, out):
            # fresh launches come first; backups are the tail of the list
            backups = [d for d in out if d.task in state.copies_launched]
            free_after_fair = state.free_machines() - (sum(d.copies for d in out) - len(backups))
            ref, _ = mantri_decide(slot, state, sched.params, free_after_fair)
            if sorted(d.task for d in ref) != sorted(d.task for d in backups):
                mismatches.append(slot)

        run(jobs, Recorder(sched, hook), SimulationConfig(rng.randint(2, 8), seed=seed, audit=True))
        assert mismatches == []


class TestScaLite:
    def test_two_task_example(self):
        rec = Recorder(ScaLiteScheduler())
        run([JobSpec("j", 0, 1, 2, 0, Pareto(2.5, 6.0), Deterministic(1.0))], rec, SimulationConfig(4))
        assert sorted(d.copies for d in rec.log[0][1]) == [2, 2]

    def test_marginal_gain_values(self):
        from taskclone.policies.sca import marginal_gain
        from taskclone.stochastic import ParetoClosedForm

        assert marginal_gain(20.0, ParetoClosedForm(2.0), 1) == pytest.approx(20 - 40 / 3)
        assert marginal_gain(20.0, ParetoClosedForm(2.0), 2) == pytest.approx(40 / 3 - 12)

    def test_machines_equal_tasks(self):
        rec = Recorder(ScaLiteScheduler())
        res = run([JobSpec("j", 0, 1, 3, 0, Pareto(2.5, 6.0), Deterministic(1.0))], rec, SimulationConfig(3))
        assert [d.copies for d in rec.log[0][1]] == [1, 1, 1]
        assert res.clone_copies == 0

    def test_deterministic_gets_no_clones(self):
        res = run([det_job("j", 2, 5)], ScaLiteScheduler(), SimulationConfig(6))
        assert res.clone_copies == 0


class TestRegistry:
    @pytest.mark.parametrize("name", ["srptms+c", "mantri", "sca-lite", "fair", "offline"])
    def test_known(self, name):
        assert hasattr(make_scheduler(name), "decide")

    def test_unknown(self):
        with pytest.raises(ValueError, match="unknown policy"):
            make_scheduler("fifo")

    @pytest.mark.parametrize("kw", [{"epsilon": 0}, {"epsilon": 1.5}, {"risk_factor": -1}, {"mantri_delta": 1}])
    def test_params_validated(self, kw):
        with pytest.raises(ContractViolation):
            PolicyParams(**kw)
