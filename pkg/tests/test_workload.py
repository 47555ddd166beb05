import io
import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from taskclone.core import ContractViolation
from taskclone.stochastic import Deterministic, LogNormal, Pareto
from taskclone.workload import (
    TRACE_MEAN_TASK_S,
    TRACE_MEAN_TASKS,
    SyntheticConfig,
    WorkloadFormatError,
    dump_job_summaries,
    estimate_phase_stats,
    gen_synthetic,
    load_job_summaries,
    pareto_from_moments,
    priority_to_weight,
    read_job_summaries,
    weight_to_priority,
    workload_stats,
)

HEADER = "job_id,arrival_s,priority,map_count,reduce_count,map_mean_s,map_sd_s,reduce_mean_s,reduce_sd_s,dist_family\n"


def load(text):
    return load_job_summaries(io.StringIO(text))


class TestLoad:
    def test_deterministic_row(self):
        (job,) = load(HEADER + "j1,0,0,4,2,10,0,20,0,deterministic\n")
        assert job.job_id == "j1" and job.weight == 1
        assert (job.map_count, job.reduce_count) == (4, 2)
        assert job.map_dist == Deterministic(10.0) and job.reduce_dist == Deterministic(20.0)

    def test_comments_and_numeric_ids(self):
        jobs = load("# exported\n" + HEADER + "# note\n7,5,11,1,0,3.5,0,1,0,pareto\n")
        assert jobs[0].job_id == 7 and jobs[0].weight == 12 and jobs[0].arrival_slot == 5

    def test_pareto_inversion_recovers_moments(self):
        (job,) = load(HEADER + "a,0,1,2,1,100,50,40,10,pareto\n")
        assert job.map_dist.mean() == pytest.approx(100, rel=1e-12)
        assert job.map_dist.sd() == pytest.approx(50, rel=1e-12)
        assert job.reduce_dist.sd() == pytest.approx(10, rel=1e-12)

    def test_lognormal_row(self):
        (job,) = load(HEADER + "a,0,1,2,1,100,50,40,0,lognormal\n")
        assert isinstance(job.map_dist, LogNormal) and isinstance(job.reduce_dist, Deterministic)

    def test_implied_alpha_at_most_two_rejected(self):
        # sd so large that no finite-variance Pareto fits
        with pytest.raises(WorkloadFormatError, match=r"line 2: .*alpha"):
            load(HEADER + "a,0,1,1,0,20,1e9,1,0,pareto\n")

    def test_deterministic_with_sd_rejected(self):
        with pytest.raises(WorkloadFormatError, match="line 3"):
            load(HEADER + "a,0,1,1,0,1,0,1,0,deterministic\nb,0,1,1,0,1,2,1,0,deterministic\n")

    @pytest.mark.parametrize(
        "body, line",
        [
            ("a,0,1,1,0,1,0,1\n", 2),
            ("a,0,1,x,0,1,0,1,0,pareto\n", 2),
            ("a,0,1,0,0,1,0,1,0,pareto\n", 2),
            ("a,0,1,1,0,1,0,1,0,weibull\n", 2),
            ("a,0,12,1,0,1,0,1,0,pareto\n", 2),
            ("a,0,1,1,0,1,0,1,0,pareto\na,0,1,1,0,1,0,1,0,pareto\n", 3),
        ],
    )
    def test_malformed_rows_name_line(self, body, line):
        with pytest.raises(WorkloadFormatError) as exc:
            load(HEADER + body)
        assert exc.value.line == line

    @pytest.mark.parametrize("text", ["", HEADER, "# only a comment\n"])
    def test_empty(self, text):
        with pytest.raises(WorkloadFormatError, match="empty"):
            load(text)

    def test_missing_columns(self):
        with pytest.raises(WorkloadFormatError, match="header"):
            load("job_id,arrival_s\na,0\n")

    def test_reads_from_path(self, tmp_path):
        p = tmp_path / "w.csv"
        p.write_text(HEADER + "a,0,1,1,0,1,0,1,0,deterministic\n")
        assert len(load_job_summaries(p)) == 1
        assert read_job_summaries(str(p))[0].dist_family == "deterministic"


class TestPhaseStats:
    def test_single_sample(self):
        assert estimate_phase_stats([12.8]) == (12.8, 0.0)

    def test_constant(self):
        assert estimate_phase_stats([10, 10, 10]) == (10, 0)

    def test_two_samples(self):
        mean, sd = estimate_phase_stats([10, 20])
        assert mean == 15
        assert sd == pytest.approx(math.sqrt(50), abs=1e-12)
        assert round(sd, 4) == 7.0711

    def test_empty(self):
        with pytest.raises(ValueError):
            estimate_phase_stats([])


class TestMoments:
    @given(st.floats(2.05, 50.0), st.floats(0.1, 1e4))
    def test_inversion_round_trip(self, alpha, mu):
        d = Pareto(alpha, mu)
        back = pareto_from_moments(d.mean(), d.sd())
        assert back.alpha == pytest.approx(alpha, rel=1e-9)
        assert back.mu == pytest.approx(mu, rel=1e-9)

    def test_weight_mapping(self):
        assert [priority_to_weight(p) for p in range(12)] == list(range(1, 13))
        assert all(weight_to_priority(priority_to_weight(p)) == p for p in range(12))
        with pytest.raises(ContractViolation):
            weight_to_priority(13)


class TestSynthetic:
    def test_trace_scale_aggregates(self):
        stats = workload_stats(gen_synthetic(SyntheticConfig(job_count=6064, machine_count=12_000)))
        assert stats["mean_tasks_per_job"] == pytest.approx(TRACE_MEAN_TASKS, rel=0.10)
        assert stats["mean_task_s"] == pytest.approx(TRACE_MEAN_TASK_S, rel=0.10)

    def test_single_bulk_job(self):
        (job,) = gen_synthetic(SyntheticConfig(job_count=1, arrival="bulk"))
        assert job.arrival_slot == 0

    def test_deterministic_by_seed(self):
        a = gen_synthetic(SyntheticConfig(job_count=50, seed=4))
        assert a == gen_synthetic(SyntheticConfig(job_count=50, seed=4))
        assert a != gen_synthetic(SyntheticConfig(job_count=50, seed=5))

    def test_poisson_arrivals_start_at_zero_and_increase(self):
        jobs = gen_synthetic(SyntheticConfig(job_count=200))
        arr = [j.arrival_slot for j in jobs]
        assert arr[0] == 0 and arr == sorted(arr)

    @pytest.mark.parametrize(
        "kw", [{"job_count": 0}, {"arrival": "burst"}, {"arrival_rate": 0}, {"family": "weibull"}, {"pareto_alpha": 2.0}]
    )
    def test_invalid_config(self, kw):
        with pytest.raises(ContractViolation):
            SyntheticConfig(**kw)

    @pytest.mark.parametrize("family", ["pareto", "lognormal", "deterministic"])
    def test_dump_load_round_trip(self, family):
        jobs = gen_synthetic(SyntheticConfig(job_count=40, family=family, seed=2))
        buf = io.StringIO()
        dump_job_summaries(jobs, buf)
        back = load_job_summaries(io.StringIO(buf.getvalue()))
        assert [j.job_id for j in back] == [j.job_id for j in jobs]
        for a, b in zip(jobs, back):
            assert (a.arrival_slot, a.weight, a.map_count, a.reduce_count) == (b.arrival_slot, b.weight, b.map_count, b.reduce_count)
            for da, db in ((a.map_dist, b.map_dist), (a.reduce_dist, b.reduce_dist)):
                assert type(da) is type(db)
                assert db.mean() == pytest.approx(da.mean(), rel=1e-9)
                assert db.sd() == pytest.approx(da.sd(), rel=1e-9, abs=1e-12)

    def test_weight_mapping_monotone_in_file(self):
        jobs = load(HEADER + "".join(f"j{p},0,{p},1,0,1,0,1,0,deterministic\n" for p in range(12)))
        weights = [j.weight for j in jobs]
        assert weights == sorted(weights) and len(set(weights)) == 12
