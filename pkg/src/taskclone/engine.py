"""Time-slotted cluster simulator.

Each slot runs: admit arrivals, ask the scheduler for launches, start the
launched copies, advance every unblocked copy by ``speed`` seconds of work,
retire finished tasks (first copy wins, siblings are cancelled at slot end),
unblock reduce copies whose job just finished its map phase, and close jobs
whose last reduce finished.

Copy progress is tracked lazily: every unblocked copy has a known finish
slot, kept in a heap, so slots where nothing happens cost almost nothing.
With ``audit=True`` the engine additionally keeps an explicit per-slot
ledger of remaining work and cross-checks capacity, precedence and
first-copy-wins against it.
"""

from __future__ import annotations

import heapq
import logging
import math
from dataclasses import dataclass, field
from typing import Hashable, Iterable, NamedTuple, Protocol, Sequence

import numpy as np

from .core import ClusterState, ContractViolation, CopyInstance, JobSpec, Phase, TaskRef, _id_key
from .stochastic import RngStreams, sample_keyed

logger = logging.getLogger(__name__)

_FINISH_TOL = 1e-9
_AUDIT_TOL = 1e-6


class OversubscriptionError(ContractViolation):
    def __init__(self, slot: int, requested: int, free: int) -> None:
        self.slot = slot
        super().__init__(f"slot {slot}: scheduler asked for {requested} machines but only {free} are free")


class TruncatedSimulation(RuntimeError):
    """The horizon ran out with jobs still alive; ``result`` holds what finished."""

    def __init__(self, result: "SimulationResult") -> None:
        self.result = result
        super().__init__(
            f"horizon of {result.slots} slots exhausted with {len(result.unfinished)} jobs still alive"
        )


class LaunchDirective(NamedTuple):
    task: TaskRef
    copies: int = 1


class Scheduler(Protocol):
    def decide(self, slot: int, state: ClusterState) -> list[LaunchDirective]: ...


@dataclass(frozen=True)
class SimulationConfig:
    machine_count: int
    speed: float = 1.0
    max_slots: int = 100_000_000
    seed: int = 0
    cancel_siblings: bool = True
    audit: bool = False

    def __post_init__(self) -> None:
        if self.machine_count < 1:
            raise ContractViolation("machine_count must be >= 1")
        if not self.speed >= 1:
            raise ContractViolation("speed must be >= 1")
        if self.max_slots < 1:
            raise ContractViolation("max_slots must be >= 1")


@dataclass(frozen=True)
class JobRecord:
    job_id: Hashable
    arrival_slot: int
    completion_slot: int
    weight: float

    @property
    def flowtime(self) -> int:
        return self.completion_slot - self.arrival_slot


@dataclass
class SimulationResult:
    jobs: dict  # job_id -> JobRecord, completed jobs only
    unfinished: list
    weights: dict  # job_id -> weight, every job in the workload
    utilization: list  # change points (slot, map_copies, reduce_copies)
    copies_launched: int
    clone_copies: int
    slots: int
    truncated: bool = False
    violations: list = field(default_factory=list)

    def flowtimes(self) -> dict:
        return {j: rec.flowtime for j, rec in self.jobs.items()}

    def utilization_series(self) -> tuple[np.ndarray, np.ndarray]:
        """Per-slot M(t) and R(t) arrays over [0, slots)."""
        maps = np.zeros(self.slots, dtype=int)
        reduces = np.zeros(self.slots, dtype=int)
        for (s, m, r), nxt in zip(self.utilization, self.utilization[1:] + [(self.slots, 0, 0)]):
            maps[s : nxt[0]] = m
            reduces[s : nxt[0]] = r
        return maps, reduces


def free_machines(state: ClusterState) -> int:
    return state.free_machines()


def job_occupancy(state: ClusterState, job_id: Hashable) -> int:
    return state.job_occupancy(job_id)


def _slots_needed(work: float, speed: float) -> int:
    return max(1, math.ceil(work / speed - _FINISH_TOL))


class _Audit:
    """Independent per-slot ledger used to cross-check the lazy engine."""

    def __init__(self, state: ClusterState, speed: float) -> None:
        self.state = state
        self.speed = speed
        self.remaining: dict[int, float] = {}
        self.maps_finished: dict = {}
        self.violations: list[str] = []

    def launched(self, copy: CopyInstance) -> None:
        self.remaining[copy.copy_id] = copy.sampled_workload

    def check_capacity(self, slot: int) -> None:
        st = self.state
        machines = [c.machine_id for c in st.running.values()]
        if len(machines) > st.machine_count:
            self.violations.append(f"slot {slot}: {len(machines)} copies on {st.machine_count} machines")
        if len(set(machines)) != len(machines):
            self.violations.append(f"slot {slot}: a machine hosts more than one copy")
        if any(not 0 <= m < st.machine_count for m in machines):
            self.violations.append(f"slot {slot}: machine id out of range")

    def advance(self, slot: int) -> None:
        st = self.state
        for cid, c in st.running.items():
            job = st.jobs[c.task.job_id]
            waiting = c.task.phase is Phase.REDUCE and self.maps_finished.get(job.job_id, 0) < job.map_count
            if waiting:
                if not c.blocked or c.remaining_work(slot + 1, self.speed) != c.sampled_workload:
                    self.violations.append(f"slot {slot}: reduce copy {cid} progressed before its map phase ended")
                continue
            if c.blocked:
                self.violations.append(f"slot {slot}: copy {cid} blocked with its map phase complete")
                continue
            self.remaining[cid] -= self.speed

    def finished(self, slot: int, finished: list[CopyInstance], winners: dict) -> None:
        for c in finished:
            rem = self.remaining[c.copy_id]
            if rem > _AUDIT_TOL or rem + self.speed <= -_AUDIT_TOL:
                self.violations.append(
                    f"slot {slot}: copy {c.copy_id} reported finished with {rem:.6g} work left in the ledger"
                )
        for task, winner in winners.items():
            rivals = [c for c in finished if c.task == task and c is not winner]
            if any(c.ordinal < winner.ordinal for c in rivals):
                self.violations.append(f"slot {slot}: task {task} winner is not the first finishing copy")
            if task.phase is Phase.MAP:
                self.maps_finished[task.job_id] = self.maps_finished.get(task.job_id, 0) + 1

    def end_of_slot(self, slot: int, cancel_siblings: bool) -> None:
        st = self.state
        for cid, c in st.running.items():
            if self.remaining[cid] < -_AUDIT_TOL:
                self.violations.append(f"slot {slot}: copy {cid} overran its workload without finishing")
            if cancel_siblings and c.task in st.completed_tasks:
                self.violations.append(f"slot {slot}: sibling copy {cid} of finished task {c.task} still running")


def run(
    workload: Sequence[JobSpec], scheduler: Scheduler, config: SimulationConfig
) -> SimulationResult:
    """Simulate ``workload`` under ``scheduler``.

    Raises TruncatedSimulation if ``config.max_slots`` is reached with jobs
    alive, and OversubscriptionError if the scheduler launches more copies
    than there are free machines.
    """
    if not workload:
        raise ContractViolation("workload is empty")
    ids = [j.job_id for j in workload]
    if len(set(ids)) != len(ids):
        raise ContractViolation("job ids must be unique")
    arrivals = sorted(workload, key=lambda j: (j.arrival_slot, _id_key(j.job_id)))

    speed = config.speed
    state = ClusterState(machine_count=config.machine_count, speed=speed, streams=RngStreams(config.seed))
    reset = getattr(scheduler, "reset", None)
    if reset is not None:
        reset()
    event_driven = bool(getattr(scheduler, "event_driven", False)) and not config.audit
    audit = _Audit(state, speed) if config.audit else None

    free_ids = list(range(config.machine_count))
    heap: list[tuple[int, int]] = []  # (finish_slot, copy_id)
    next_copy_id = 0
    copies_launched = 0
    clone_copies = 0
    running_by_phase = {Phase.MAP: 0, Phase.REDUCE: 0}
    utilization: list[tuple[int, int, int]] = []
    records: dict = {}
    weights = {j.job_id: j.weight for j in workload}

    def remove_copy(c: CopyInstance) -> None:
        del state.running[c.copy_id]
        state.task_copies[c.task].remove(c.copy_id)
        state.occupancy[c.task.job_id] -= 1
        running_by_phase[c.task.phase] -= 1
        heapq.heappush(free_ids, c.machine_id)

    def launch(slot: int, directives: Iterable[LaunchDirective]) -> int:
        nonlocal next_copy_id, copies_launched, clone_copies
        directives = list(directives)
        requested = 0
        for d in directives:
            if int(d.copies) != d.copies or d.copies < 1:
                raise ContractViolation(f"slot {slot}: copy count must be a positive integer, got {d.copies}")
            requested += d.copies
        if requested > state.free_machines():
            raise OversubscriptionError(slot, requested, state.free_machines())
        for d in directives:
            task = d.task
            job = state.jobs.get(task.job_id)
            if job is None or task.job_id not in state.alive_jobs:
                raise ContractViolation(f"slot {slot}: job {task.job_id!r} is not alive")
            if not 0 <= task.index < job.task_count(task.phase):
                raise ContractViolation(f"slot {slot}: no such task {task}")
            if task in state.completed_tasks:
                raise ContractViolation(f"slot {slot}: task {task} already finished")
            pending = state.unscheduled[(task.job_id, task.phase)]
            if task.index in pending:
                pending.discard(task.index)
                counts = state.pending_map if task.phase is Phase.MAP else state.pending_reduce
                counts[task.job_id] -= 1
            dist = job.dist(task.phase)
            blocked = task.phase is Phase.REDUCE and task.job_id not in state.map_complete
            for _ in range(d.copies):
                ordinal = state.copies_launched.get(task, 0)
                state.copies_launched[task] = ordinal + 1
                work = sample_keyed(dist, state.streams, task.job_id, task.phase.value, task.index, ordinal)
                c = CopyInstance(
                    copy_id=next_copy_id,
                    task=task,
                    machine_id=heapq.heappop(free_ids),
                    sampled_workload=work,
                    started_slot=slot,
                    ordinal=ordinal,
                )
                next_copy_id += 1
                copies_launched += 1
                clone_copies += ordinal > 0
                if not blocked:
                    c.progress_start = slot
                    c.finish_slot = slot + _slots_needed(work, speed) - 1
                    heapq.heappush(heap, (c.finish_slot, c.copy_id))
                state.running[c.copy_id] = c
                state.task_copies.setdefault(task, []).append(c.copy_id)
                state.occupancy[task.job_id] = state.occupancy.get(task.job_id, 0) + 1
                running_by_phase[task.phase] += 1
                if audit:
                    audit.launched(c)
        return requested

    def finish_slot(slot: int) -> bool:
        """Retire copies finishing in ``slot``; returns True if anything changed."""
        finished: list[CopyInstance] = []
        while heap and heap[0][0] <= slot:
            fs, cid = heapq.heappop(heap)
            c = state.running.get(cid)
            if c is None or c.finish_slot != fs:
                continue  # cancelled, or rescheduled after unblocking
            finished.append(c)
        if not finished:
            return False
        finished.sort(key=lambda c: (c.task, c.ordinal))
        winners: dict[TaskRef, CopyInstance] = {}
        for c in finished:
            if c.task in state.completed_tasks or c.task in winners:
                continue
            winners[c.task] = c
        if audit:
            audit.finished(slot, finished, winners)
        for c in finished:
            if c.copy_id in state.running:
                remove_copy(c)
        for task in winners:
            state.completed_tasks.add(task)
            if config.cancel_siblings:
                for cid in list(state.task_copies.get(task, ())):
                    remove_copy(state.running[cid])
            jid = task.job_id
            job = state.jobs[jid]
            if task.phase is Phase.MAP:
                state.maps_done[jid] += 1
                if state.maps_done[jid] == job.map_count:
                    state.map_complete.add(jid)
                    for ref_index in range(job.reduce_count):
                        ref = TaskRef(jid, Phase.REDUCE, ref_index)
                        for cid in state.task_copies.get(ref, ()):
                            rc = state.running[cid]
                            rc.progress_start = slot + 1
                            rc.finish_slot = slot + _slots_needed(rc.sampled_workload, speed)
                            heapq.heappush(heap, (rc.finish_slot, cid))
            else:
                state.reduces_done[jid] += 1
            if jid in state.map_complete and state.reduces_done[jid] == job.reduce_count:
                rec = JobRecord(jid, job.arrival_slot, slot + 1, job.weight)
                records[jid] = rec
                state.completed_flowtimes[jid] = rec.flowtime
                del state.alive_jobs[jid]
        return True

    ai = 0
    n = len(arrivals)
    slot = arrivals[0].arrival_slot
    dirty = True
    truncated = False
    while True:
        if slot >= config.max_slots:
            truncated = True
            break
        state.slot = slot
        while ai < n and arrivals[ai].arrival_slot == slot:
            job = arrivals[ai]
            jid = job.job_id
            state.jobs[jid] = job
            state.alive_jobs[jid] = None
            state.pending_map[jid] = job.map_count
            state.pending_reduce[jid] = job.reduce_count
            state.unscheduled[(jid, Phase.MAP)] = set(range(job.map_count))
            state.unscheduled[(jid, Phase.REDUCE)] = set(range(job.reduce_count))
            state.maps_done[jid] = 0
            state.reduces_done[jid] = 0
            state.occupancy[jid] = 0
            ai += 1
            dirty = True

        if dirty or not event_driven:
            dirty = launch(slot, scheduler.decide(slot, state)) > 0

        point = (running_by_phase[Phase.MAP], running_by_phase[Phase.REDUCE])
        if not utilization or utilization[-1][1:] != point:
            utilization.append((slot,) + point)
        if audit:
            audit.check_capacity(slot)
            audit.advance(slot)

        if finish_slot(slot):
            dirty = True
        if audit:
            audit.end_of_slot(slot, config.cancel_siblings)

        if ai == n and not state.alive_jobs:
            slot += 1
            break
        if dirty or not event_driven:
            slot += 1
        else:
            nxt = min(
                arrivals[ai].arrival_slot if ai < n else math.inf,
                heap[0][0] if heap else math.inf,
                getattr(scheduler, "next_wakeup", math.inf),
            )
            slot = max(slot + 1, nxt) if nxt != math.inf else config.max_slots

    result = SimulationResult(
        jobs=records,
        unfinished=[j for j in ids if j not in records],
        weights=weights,
        utilization=utilization,
        copies_launched=copies_launched,
        clone_copies=clone_copies,
        slots=min(slot, config.max_slots),
        truncated=truncated,
        violations=audit.violations if audit else [],
    )
    if truncated:
        raise TruncatedSimulation(result)
    return result
