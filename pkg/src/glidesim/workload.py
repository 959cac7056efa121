"""Job populations: virtual organizations, per-user campaigns, resource demands.

A campaign materializes into a deterministic list of jobs at build time; each
job is a CPU-seconds envelope with a core/memory footprint and an I/O profile
that couples it to the data layer.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

from .events import RngStream

GIB = 1024 ** 3


class JobState(enum.Enum):
    QUEUED = "queued"
    RUNNING = "running"
    COMPLETED = "completed"


class ConfigInvalid(ValueError):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


@dataclass(frozen=True)
class VirtualOrganization:
    name: str
    priority_rank: int
    core_cap: int | None = None
    # Pilot pools this VO's jobs may land on. A backfill VO typically lists
    # every VO so it can soak idle cores anywhere; a capped VO lists only
    # itself so the pilot-level cap bounds its footprint.
    runs_on: tuple[str, ...] = ()

    def allowed_pilot_vos(self) -> tuple[str, ...]:
        return self.runs_on if self.runs_on else (self.name,)


@dataclass(frozen=True)
class DistributionSpec:
    family: str  # "lognormal" | "fixed"
    mean: float = 0.0
    sigma: float = 0.0

    def sample(self, rng: RngStream, n: int) -> list[float]:
        if self.family == "fixed":
            return [self.mean] * n
        if self.family == "lognormal":
            if self.sigma == 0.0:
                return [self.mean] * n
            mu = math.log(self.mean) - 0.5 * self.sigma ** 2
            return [float(x) for x in rng.gen.lognormal(mu, self.sigma, n)]
        raise ConfigInvalid("cpu_seconds.family", f"unknown family {self.family!r}")


@dataclass(frozen=True)
class ArrivalSpec:
    kind: str = "burst"  # "burst" | "poisson"
    rate_per_s: float = 0.0
    start: float = 0.0


@dataclass
class Campaign:
    name: str
    vo: str
    user: str
    job_count: int
    cores_per_job: int
    mem_per_core: int
    cpu_seconds: DistributionSpec
    io_profile: str
    arrival: ArrivalSpec = field(default_factory=ArrivalSpec)
    jobs: list["Job"] = field(default_factory=list)

    def total_cpu_core_hours(self) -> float:
        return sum(j.cpu_seconds_total for j in self.jobs) / 3600.0


@dataclass
class Job:
    id: int
    campaign: Campaign
    vo: str
    user: str
    cores: int
    memory: int
    cpu_seconds_total: float
    cpu_seconds_done: float = 0.0
    state: JobState = JobState.QUEUED
    preempt_count: int = 0
    submit_time: float = 0.0
    start_time: float | None = None
    finish_time: float | None = None
    # live-run bookkeeping, owned by the engine
    run_start: float | None = None
    run_efficiency: float = 1.0
    completion_event: int | None = None

    @property
    def remaining_cpu_seconds(self) -> float:
        return self.cpu_seconds_total - self.cpu_seconds_done


def job_requirements(job: Job) -> tuple[int, int]:
    return job.cores, job.memory


def build_campaigns(specs: list[Campaign], rng_for: callable) -> list[Campaign]:
    """Materialize job lists in deterministic order.

    rng_for(name) must return the dedicated stream for a campaign; draws for
    one campaign never perturb another's.
    """
    next_id = 0
    for camp in specs:
        if camp.job_count < 1:
            raise ConfigInvalid(f"campaigns[{camp.name}].job_count", "must be >= 1")
        if camp.cores_per_job < 1:
            raise ConfigInvalid(f"campaigns[{camp.name}].cores_per_job", "must be >= 1")
        if camp.mem_per_core <= 0:
            raise ConfigInvalid(f"campaigns[{camp.name}].mem_per_core", "must be > 0")
        if camp.cpu_seconds.mean <= 0:
            raise ConfigInvalid(f"campaigns[{camp.name}].cpu_seconds.mean", "must be > 0")
        stream = rng_for(f"campaign/{camp.name}")
        durations = camp.cpu_seconds.sample(stream, camp.job_count)
        if camp.arrival.kind == "poisson":
            gaps = stream.exponential(1.0 / camp.arrival.rate_per_s, camp.job_count)
            submit_times = list(camp.arrival.start + gaps.cumsum())
        else:
            submit_times = [camp.arrival.start] * camp.job_count
        camp.jobs = [
            Job(
                id=next_id + i,
                campaign=camp,
                vo=camp.vo,
                user=camp.user,
                cores=camp.cores_per_job,
                memory=camp.cores_per_job * camp.mem_per_core,
                cpu_seconds_total=durations[i],
                submit_time=submit_times[i],
            )
            for i in range(camp.job_count)
        ]
        next_id += camp.job_count
    return specs


def accrue_progress(job: Job, slot_cores: int, wall_seconds: float, efficiency: float) -> float:
    """Credit CPU-seconds for wall time spent on a slot; returns the amount added."""
    if not 0.0 < efficiency <= 1.0:
        raise ValueError(f"efficiency must be in (0, 1], got {efficiency}")
    added = min(slot_cores * wall_seconds * efficiency, job.remaining_cpu_seconds)
    job.cpu_seconds_done += added
    return added


def remaining_wall_seconds(job: Job, efficiency: float) -> float:
    """Wall time until completion on the job's own cores at this efficiency."""
    return job.remaining_cpu_seconds / (job.cores * efficiency)


def requeue_on_preemption(job: Job, retention: str = "none") -> Job:
    """Return a running job to the queue after its pilot died under it."""
    job.state = JobState.QUEUED
    job.preempt_count += 1
    job.run_start = None
    job.completion_event = None
    if retention == "none":
        job.cpu_seconds_done = 0.0
    elif retention != "checkpoint":
        raise ValueError(f"unknown retention policy {retention!r}")
    return job
