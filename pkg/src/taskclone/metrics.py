"""Flowtime aggregates and CDFs, plus CSV/JSON export."""

from __future__ import annotations

import bisect
import csv
import json
import math
import os
from dataclasses import asdict, dataclass, field, is_dataclass
from pathlib import Path

from .core import ContractViolation
from .engine import SimulationResult


class IncompleteResultError(RuntimeError):
    """Aggregation requested over a truncated simulation without ``force``."""


@dataclass(frozen=True)
class SummaryMetrics:
    weighted_avg_flowtime_s: float
    unweighted_avg_flowtime_s: float
    job_count: int
    total_clone_copies: int
    runtime: dict = field(default_factory=dict, compare=False)


@dataclass(frozen=True)
class CdfSeries:
    flowtime_s: tuple
    fraction: tuple

    def points(self) -> list[tuple[float, float]]:
        return list(zip(self.flowtime_s, self.fraction))


def _completed(result: SimulationResult, force: bool) -> dict:
    if result.truncated or result.unfinished:
        if not force:
            raise IncompleteResultError(
                f"{len(result.unfinished)} job(s) unfinished after {result.slots} slots; pass force=True to aggregate completed jobs only"
            )
    return result.flowtimes()


def weighted_average(flowtimes: dict, weights: dict) -> float:
    den = math.fsum(weights[j] for j in flowtimes)
    return math.fsum(weights[j] * f for j, f in flowtimes.items()) / den


def summarize(result: SimulationResult, weights: dict | None = None, *, force: bool = False) -> SummaryMetrics:
    """Weighted and unweighted average flowtime over the completed jobs.

    ``weights`` defaults to the weights recorded in the result.
    """
    flows = _completed(result, force)
    if not flows:
        raise IncompleteResultError("no completed jobs to aggregate")
    weights = weights if weights is not None else result.weights
    return SummaryMetrics(
        weighted_avg_flowtime_s=weighted_average(flows, weights),
        unweighted_avg_flowtime_s=math.fsum(flows.values()) / len(flows),
        job_count=len(flows),
        total_clone_copies=result.clone_copies,
        runtime={"slots": result.slots, "copies_launched": result.copies_launched},
    )


def average_metrics(items: list[SummaryMetrics]) -> SummaryMetrics:
    """Mean over replications; clone counts are averaged and rounded."""
    if not items:
        raise ContractViolation("nothing to average")
    n = len(items)
    return SummaryMetrics(
        math.fsum(m.weighted_avg_flowtime_s for m in items) / n,
        math.fsum(m.unweighted_avg_flowtime_s for m in items) / n,
        round(sum(m.job_count for m in items) / n),
        round(sum(m.total_clone_copies for m in items) / n),
    )


def cdf_from_flowtimes(flowtimes, lo: float, hi: float, step: float, total: int | None = None) -> CdfSeries:
    if not (lo < hi) or not step > 0 or not all(map(math.isfinite, (lo, hi, step))):
        raise ContractViolation(f"invalid cdf range lo={lo} hi={hi} step={step}")
    values = sorted(flowtimes)
    total = len(values) if total is None else total
    if total == 0:
        raise ContractViolation("no jobs")
    n = int(math.floor((hi - lo) / step + 1e-9))
    grid = [lo + i * step for i in range(n + 1)]
    if grid[-1] < hi - 1e-9 * step:
        grid.append(hi)
    return CdfSeries(tuple(grid), tuple(bisect.bisect_right(values, t) / total for t in grid))


def cdf(result: SimulationResult, lo: float, hi: float, step: float) -> CdfSeries:
    """Fraction of all jobs in the workload with flowtime <= t on a grid.

    Unfinished jobs count in the denominator but never in the numerator.
    """
    return cdf_from_flowtimes(result.flowtimes().values(), lo, hi, step, total=len(result.weights))


def _g(x) -> str:
    if isinstance(x, float):
        return f"{x:.6g}"
    return str(x)


def _jsonable(obj):
    if isinstance(obj, float):
        return float(f"{obj:.6g}") if math.isfinite(obj) else str(obj)
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    return obj


def _csv_rows(obj) -> tuple[list[str], list[list]]:
    if isinstance(obj, SummaryMetrics):
        return (
            ["weighted_avg_s", "unweighted_avg_s", "jobs", "clones"],
            [[obj.weighted_avg_flowtime_s, obj.unweighted_avg_flowtime_s, obj.job_count, obj.total_clone_copies]],
        )
    if isinstance(obj, CdfSeries):
        return ["flowtime_s", "fraction"], [list(p) for p in obj.points()]
    if hasattr(obj, "csv_rows"):
        return obj.csv_rows()
    raise TypeError(f"cannot export {type(obj).__name__} as csv")


def export(obj, fmt: str, path: str | os.PathLike) -> None:
    """Write metrics, a CDF, or a bound report with a stable field order."""
    path = Path(path)
    try:
        if fmt == "csv":
            header, rows = _csv_rows(obj)
            with path.open("w", newline="", encoding="utf-8") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(header)
                w.writerows([_g(v) for v in row] for row in rows)
        elif fmt == "json":
            if isinstance(obj, SummaryMetrics):
                payload = {
                    "weighted_avg_s": obj.weighted_avg_flowtime_s,
                    "unweighted_avg_s": obj.unweighted_avg_flowtime_s,
                    "jobs": obj.job_count,
                    "clones": obj.total_clone_copies,
                }
            elif isinstance(obj, CdfSeries):
                payload = {"flowtime_s": list(obj.flowtime_s), "fraction": list(obj.fraction)}
            elif hasattr(obj, "to_dict"):
                payload = obj.to_dict()
            elif is_dataclass(obj):
                payload = asdict(obj)
            else:
                raise TypeError(f"cannot export {type(obj).__name__} as json")
            path.write_text(json.dumps(_jsonable(payload), indent=2) + "\n", encoding="utf-8")
        else:
            raise ContractViolation(f"unknown export format {fmt!r}; use csv or json")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc


def load_summary(path: str | os.PathLike) -> SummaryMetrics:
    path = Path(path)
    if path.suffix == ".json":
        d = json.loads(path.read_text(encoding="utf-8"))
        return SummaryMetrics(float(d["weighted_avg_s"]), float(d["unweighted_avg_s"]), int(d["jobs"]), int(d["clones"]))
    with path.open(newline="", encoding="utf-8") as fh:
        row = next(csv.DictReader(fh))
    return SummaryMetrics(float(row["weighted_avg_s"]), float(row["unweighted_avg_s"]), int(row["jobs"]), int(row["clones"]))


def load_cdf(path: str | os.PathLike) -> CdfSeries:
    path = Path(path)
    if path.suffix == ".json":
        d = json.loads(path.read_text(encoding="utf-8"))
        return CdfSeries(tuple(d["flowtime_s"]), tuple(d["fraction"]))
    with path.open(newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    return CdfSeries(tuple(float(r["flowtime_s"]) for r in rows), tuple(float(r["fraction"]) for r in rows))
