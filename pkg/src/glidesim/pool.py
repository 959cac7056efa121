"""HTCondor-like pool: partitionable slots, priority matchmaking, backfill.

Negotiation considers queued jobs in (VO priority, user round-robin within a
VO, submit order) and places each on the best-fit slot, i.e. the smallest
adequate free-core block with ties broken by slot id. A placement never
splits a job across slots and never grants partial cores.

The matchmaking scan is greedy-complete: after a cycle, no queued job that
was eligible at cycle start still fits any slot. Worst case that costs a full
queue scan; the loop short-circuits as soon as the pool is full or every
queued job is wider than the widest free block.
"""

from __future__ import annotations

import heapq
from collections import deque
from dataclasses import dataclass, field

from .workload import Job, VirtualOrganization

WEEK = 7 * 86400.0


class InsufficientResources(RuntimeError):
    pass


@dataclass
class Placement:
    job: Job
    slot: "Slot"
    cores: int
    memory: int
    active: bool = True


@dataclass
class MatchDecision:
    time: float
    job: Job
    slot_id: int
    cores: int
    memory: int
    rank: tuple


class Slot:
    __slots__ = ("id", "pilot", "vo", "total_cores", "total_memory",
                 "free_cores", "free_memory", "placements", "version")

    def __init__(self, slot_id: int, pilot, total_cores: int, total_memory: int):
        self.id = slot_id
        self.pilot = pilot
        self.vo = pilot.vo
        self.total_cores = total_cores
        self.total_memory = total_memory
        self.free_cores = total_cores
        self.free_memory = total_memory
        self.placements: dict[int, Placement] = {}
        self.version = 0


class FairShareLimiter:
    """Per-user throughput cap in core-hours per calendar week.

    Admission-controlled on committed work: a job may start only if the
    user's committed core-hours in the current week, plus the job's own,
    stay under the cap. A user whose head job is blocked waits; later jobs
    do not jump the intra-user FIFO.
    """

    def __init__(self, core_hours_per_user_per_week: float):
        self.cap = core_hours_per_user_per_week
        self._committed: dict[tuple[str, int], float] = {}

    def _week(self, now: float) -> int:
        return int(now // WEEK)

    def job_core_hours(self, job: Job) -> float:
        return job.cpu_seconds_total / 3600.0

    def eligible(self, job: Job, now: float) -> bool:
        key = (job.user, self._week(now))
        return self._committed.get(key, 0.0) + self.job_core_hours(job) <= self.cap

    def commit(self, job: Job, now: float) -> None:
        key = (job.user, self._week(now))
        self._committed[key] = self._committed.get(key, 0.0) + self.job_core_hours(job)


class Pool:
    def __init__(self, vos: list[VirtualOrganization], limiter: FairShareLimiter | None = None):
        self.vos = {vo.name: vo for vo in vos}
        self._vo_order = [vo.name for vo in sorted(vos, key=lambda v: v.priority_rank)]
        self.limiter = limiter
        self.slots: dict[int, Slot] = {}
        self._next_slot_id = 0
        self._buckets: dict[tuple[str, int], list[tuple[int, int]]] = {}
        self._max_slot_cores = 0
        self._total_free = 0
        # queues[vo][user] -> heap of (submit_time, job_id, job)
        self._queues: dict[str, dict[str, list]] = {vo.name: {} for vo in vos}
        self._queue_depth: dict[str, int] = {vo.name: 0 for vo in vos}
        self._queued_cores_hist: dict[str, dict[int, int]] = {vo.name: {} for vo in vos}
        self._rr: dict[str, int] = {vo.name: 0 for vo in vos}
        self.busy_by_vo: dict[str, int] = {vo.name: 0 for vo in vos}
        self.busy_integral_by_vo: dict[str, float] = {vo.name: 0.0 for vo in vos}
        self._now = 0.0

    # -- time / accounting ---------------------------------------------------

    def set_time(self, now: float) -> None:
        """Advance the busy-core integrals; call before any mutation at `now`."""
        dt = now - self._now
        if dt > 0:
            for vo, busy in self.busy_by_vo.items():
                if busy:
                    self.busy_integral_by_vo[vo] += busy * dt
            self._now = now

    # -- queue ----------------------------------------------------------------

    def enqueue(self, job: Job) -> None:
        per_user = self._queues[job.vo].setdefault(job.user, [])
        heapq.heappush(per_user, (job.submit_time, job.id, job))
        self._queue_depth[job.vo] += 1
        hist = self._queued_cores_hist[job.vo]
        hist[job.cores] = hist.get(job.cores, 0) + 1

    def _dequeued(self, job: Job) -> None:
        self._queue_depth[job.vo] -= 1
        hist = self._queued_cores_hist[job.vo]
        hist[job.cores] -= 1
        if hist[job.cores] == 0:
            del hist[job.cores]

    def queue_depth(self, vo: str) -> int:
        return self._queue_depth[vo]

    def queued_cores(self, vo: str) -> int:
        return sum(cores * n for cores, n in self._queued_cores_hist[vo].items())

    # -- slots ------------------------------------------------------------------

    def add_slot(self, pilot) -> Slot:
        slot = Slot(self._next_slot_id, pilot, pilot.cores, pilot.memory)
        self._next_slot_id += 1
        self.slots[slot.id] = slot
        self._max_slot_cores = max(self._max_slot_cores, slot.total_cores)
        self._total_free += slot.free_cores
        self._bucket_push(slot)
        return slot

    def remove_slot(self, slot: Slot) -> list[Job]:
        """Drop the slot; returns the jobs that were running on it."""
        if slot.id not in self.slots:
            return []
        jobs = []
        for placement in list(slot.placements.values()):
            placement.active = False
            self.busy_by_vo[placement.job.vo] -= placement.cores
            jobs.append(placement.job)
        slot.placements.clear()
        self._total_free -= slot.free_cores
        del self.slots[slot.id]
        slot.version += 1  # invalidates bucket entries
        return jobs

    def _bucket_push(self, slot: Slot) -> None:
        key = (slot.vo, slot.free_cores)
        heapq.heappush(self._buckets.setdefault(key, []), (slot.id, slot.version))

    def _bucket_peek(self, vo: str, free: int) -> Slot | None:
        heap = self._buckets.get((vo, free))
        if not heap:
            return None
        while heap:
            slot_id, version = heap[0]
            slot = self.slots.get(slot_id)
            if slot is not None and slot.version == version and slot.free_cores == free:
                return slot
            heapq.heappop(heap)
        return None

    # -- partitioning -------------------------------------------------------------

    def partition(self, slot: Slot, cores: int, memory: int, job: Job) -> Placement:
        if cores > slot.free_cores or memory > slot.free_memory:
            raise InsufficientResources(
                f"slot {slot.id}: need {cores}c/{memory}B, free {slot.free_cores}c/{slot.free_memory}B")
        slot.free_cores -= cores
        slot.free_memory -= memory
        slot.version += 1
        self._bucket_push(slot)
        self._total_free -= cores
        placement = Placement(job=job, slot=slot, cores=cores, memory=memory)
        slot.placements[job.id] = placement
        self.busy_by_vo[job.vo] += cores
        return placement

    def release(self, placement: Placement) -> bool:
        """Return resources to the slot; False if already released."""
        if not placement.active:
            return False
        placement.active = False
        slot = placement.slot
        if slot.placements.pop(placement.job.id, None) is None:
            return False
        slot.free_cores += placement.cores
        slot.free_memory += placement.memory
        slot.version += 1
        if slot.id in self.slots:
            self._bucket_push(slot)
            self._total_free += placement.cores
        self.busy_by_vo[placement.job.vo] -= placement.cores
        return True

    # -- matchmaking ------------------------------------------------------------

    def _best_fit(self, cores: int, memory: int, allowed_vos: tuple[str, ...]) -> Slot | None:
        aside: list[Slot] = []
        chosen = None
        for free in range(cores, self._max_slot_cores + 1):
            while True:
                best = None
                for vo in allowed_vos:
                    slot = self._bucket_peek(vo, free)
                    if slot is not None and (best is None or slot.id < best.id):
                        best = slot
                if best is None:
                    break
                if best.free_memory >= memory:
                    chosen = best
                    break
                # memory-starved slot: set aside, keep scanning this width
                heapq.heappop(self._buckets[(best.vo, free)])
                aside.append(best)
            if chosen is not None:
                break
        for slot in aside:
            self._bucket_push(slot)
        return chosen

    def _max_free_for(self, allowed_vos: tuple[str, ...]) -> int:
        for free in range(self._max_slot_cores, 0, -1):
            for vo in allowed_vos:
                if self._bucket_peek(vo, free) is not None:
                    return free
        return 0

    def _min_queued_cores(self, vo: str) -> int | None:
        hist = self._queued_cores_hist[vo]
        return min(hist) if hist else None

    def negotiate(self, now: float) -> list[MatchDecision]:
        """One matchmaking cycle; applies placements and returns the decisions."""
        self.set_time(now)
        decisions: list[MatchDecision] = []
        if self._total_free == 0:
            return decisions
        for vo_name in self._vo_order:
            if self._total_free == 0:
                break
            queues = self._queues[vo_name]
            users = sorted(u for u, h in queues.items() if h)
            if not users:
                continue
            vo = self.vos[vo_name]
            allowed = vo.allowed_pilot_vos()
            offset = self._rr[vo_name] % len(users)
            self._rr[vo_name] += 1
            active = deque(users[offset:] + users[:offset])
            skipped: list[tuple] = []
            round_marker = object()
            active.append(round_marker)
            while active:
                head = active.popleft()
                if head is round_marker:
                    if not active:
                        break
                    min_need = self._min_queued_cores(vo_name)
                    if min_need is None or self._max_free_for(allowed) < min_need:
                        break
                    active.append(round_marker)
                    continue
                if self._total_free == 0:
                    break
                user = head
                heap = queues.get(user)
                if not heap:
                    continue
                entry = heapq.heappop(heap)
                job = entry[2]
                if self.limiter is not None and not self.limiter.eligible(job, now):
                    # head blocked by the throughput cap: user sits out the cycle
                    heapq.heappush(heap, entry)
                    continue
                slot = self._best_fit(job.cores, job.memory, allowed)
                if slot is None:
                    skipped.append((vo_name, user, entry))
                    active.append(user)
                    continue
                self._dequeued(job)
                self.partition(slot, job.cores, job.memory, job)
                if self.limiter is not None:
                    self.limiter.commit(job, now)
                decisions.append(MatchDecision(
                    time=now, job=job, slot_id=slot.id, cores=job.cores,
                    memory=job.memory, rank=(vo.priority_rank, user, job.submit_time)))
                active.append(user)
            for vo_name2, user, entry in skipped:
                heapq.heappush(self._queues[vo_name2][user], entry)
        return decisions

    # -- observables ----------------------------------------------------------------

    def utilization(self) -> tuple[int, int, float]:
        provisioned = sum(s.total_cores for s in self.slots.values())
        busy = provisioned - self._total_free
        fraction = busy / provisioned if provisioned else 1.0
        return busy, provisioned, fraction

    @property
    def provisioned_cores(self) -> int:
        return sum(s.total_cores for s in self.slots.values())
