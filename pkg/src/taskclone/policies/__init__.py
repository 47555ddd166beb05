"""Scheduling policies and a name registry for the CLI."""

from .common import PolicyParams, TaskOrder, task_cloning_assign
from .mantri import MantriScheduler, backup_probability, backup_threshold, mantri_decide
from .offline import OfflineBulkScheduler, offline_bulk_schedule, offline_priority_order
from .sca import ScaLiteScheduler, sca_lite_decide
from .srptms import FairScheduler, ShareVector, SrptmsScheduler, largest_remainder, srptms_decide, srptms_shares

POLICIES = ("srptms+c", "mantri", "sca-lite", "fair", "offline")


def make_scheduler(name: str, params: PolicyParams | None = None):
    params = params or PolicyParams()
    if name == "srptms+c":
        return SrptmsScheduler(params)
    if name == "mantri":
        return MantriScheduler(params)
    if name == "sca-lite":
        return ScaLiteScheduler(params)
    if name == "fair":
        return FairScheduler(params)
    if name == "offline":
        return OfflineBulkScheduler(params.risk_factor)
    raise ValueError(f"unknown policy {name!r}; choose from {', '.join(POLICIES)}")


__all__ = [
    "POLICIES",
    "FairScheduler",
    "MantriScheduler",
    "OfflineBulkScheduler",
    "PolicyParams",
    "ScaLiteScheduler",
    "ShareVector",
    "SrptmsScheduler",
    "TaskOrder",
    "backup_probability",
    "backup_threshold",
    "largest_remainder",
    "make_scheduler",
    "mantri_decide",
    "offline_bulk_schedule",
    "offline_priority_order",
    "sca_lite_decide",
    "srptms_decide",
    "srptms_shares",
    "task_cloning_assign",
]
