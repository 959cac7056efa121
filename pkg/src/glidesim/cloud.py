"""Region-partitioned spot capacity: scale sets, boot delays, preemption, cost.

Each region runs one scale set with a target count. Targets are applied at
provisioning-policy ticks; between ticks the live count only decays under the
preemption hazard unless continuous reconcile mode is on, which reproduces
the characteristic sawtooth of operator-driven spot fleets.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable

from .events import SimKernel

DAY = 86400.0


class ImageUnavailable(RuntimeError):
    """set_target before the VM image finished replicating to the region."""


class InstanceState(enum.Enum):
    BOOTING = "booting"
    RUNNING = "running"
    PREEMPTED = "preempted"
    DEALLOCATED = "deallocated"


@dataclass
class Region:
    name: str
    capacity: int
    hazard_base_per_day: float = 0.0
    hazard_load_coeff: float = 0.0
    boot_delay_s: tuple[float, float] = (120.0, 300.0)
    price_per_instance_day: float = 3.30
    instance_cores: int = 16
    instance_memory: int = 32 * 1024 ** 3
    image_replicated: bool = False


class CloudInstance:
    __slots__ = ("id", "region", "cores", "memory", "state", "create_time",
                 "ready_time", "end_time", "price_per_day", "free_cores", "pilots")

    def __init__(self, instance_id: int, region: Region, now: float):
        self.id = instance_id
        self.region = region
        self.cores = region.instance_cores
        self.memory = region.instance_memory
        self.state = InstanceState.BOOTING
        self.create_time = now
        self.ready_time: float | None = None
        self.end_time: float | None = None
        self.price_per_day = region.price_per_instance_day
        self.free_cores = region.instance_cores
        self.pilots: list = []

    def cost_accrued(self, now: float) -> float:
        """Billed from boot start until termination (or now, while alive)."""
        end = self.end_time if self.end_time is not None else now
        return self.price_per_day * (end - self.create_time) / DAY


@dataclass
class ScaleSet:
    region: Region
    target: int = 0
    booting: dict[int, CloudInstance] = field(default_factory=dict)
    running: dict[int, CloudInstance] = field(default_factory=dict)

    @property
    def live(self) -> int:
        return len(self.booting) + len(self.running)


@dataclass
class _CostLedger:
    """O(1) exact running cost: closed instances folded in, open ones via sums."""

    closed_total: float = 0.0
    open_price_sum: float = 0.0
    open_price_create_sum: float = 0.0

    def open_instance(self, inst: CloudInstance) -> None:
        self.open_price_sum += inst.price_per_day
        self.open_price_create_sum += inst.price_per_day * inst.create_time

    def close_instance(self, inst: CloudInstance) -> None:
        self.open_price_sum -= inst.price_per_day
        self.open_price_create_sum -= inst.price_per_day * inst.create_time
        self.closed_total += inst.price_per_day * (inst.end_time - inst.create_time) / DAY

    def total(self, now: float) -> float:
        return self.closed_total + (self.open_price_sum * now - self.open_price_create_sum) / DAY


class CloudProvider:
    """All regions of one scenario, driven by the simulation kernel."""

    def __init__(self, kernel: SimKernel, regions: list[Region], reconcile: bool = False):
        self.kernel = kernel
        self.regions: dict[str, Region] = {r.name: r for r in regions}
        self.region_order = [r.name for r in regions]
        self.scale_sets: dict[str, ScaleSet] = {r.name: ScaleSet(region=r) for r in regions}
        self.reconcile_mode = reconcile
        self.instances: list[CloudInstance] = []
        self._boot_events: dict[int, int] = {}
        self._boot_rng = {r.name: kernel.rng(f"boot/{r.name}") for r in regions}
        self._preempt_rng = {r.name: kernel.rng(f"preemption/{r.name}") for r in regions}
        self._cost = _CostLedger()
        self._cost_by_region = {r.name: _CostLedger() for r in regions}
        self.preemptions_total = 0
        self.preemption_trials = 0
        # engine hooks
        self.on_instance_ready: Callable[[CloudInstance], None] = lambda inst: None
        self.on_instance_gone: Callable[[CloudInstance, str], None] = lambda inst, reason: None

    # -- image replication -------------------------------------------------

    def replicate_image(self, region_names: list[str], delay_s: float = 3600.0) -> dict[str, float]:
        """Start image replication; each region becomes provisionable at now+delay."""
        ready: dict[str, float] = {}
        now = self.kernel.clock
        for name in region_names:
            region = self.regions[name]
            if delay_s <= 0:
                region.image_replicated = True
                ready[name] = now
                continue

            def mark(region=region):
                region.image_replicated = True

            self.kernel.schedule(now + delay_s, mark, f"image-ready/{name}")
            ready[name] = now + delay_s
        return ready

    # -- scale-set control ---------------------------------------------------

    def set_target(self, region_name: str, n: int) -> int:
        """Reconcile the region toward n instances; returns the unmet count."""
        if n < 0:
            raise ValueError("target must be >= 0")
        region = self.regions[region_name]
        if not region.image_replicated:
            raise ImageUnavailable(f"image not replicated to {region_name}")
        ss = self.scale_sets[region_name]
        ss.target = n
        if n < ss.live:
            self._deallocate(ss, ss.live - n)
        unmet = max(0, n - region.capacity)
        self._boot_up_to_target(ss)
        return unmet

    def _boot_up_to_target(self, ss: ScaleSet) -> None:
        region = ss.region
        want = min(ss.target, region.capacity) - ss.live
        now = self.kernel.clock
        for _ in range(max(0, want)):
            inst = CloudInstance(len(self.instances), region, now)
            self.instances.append(inst)
            ss.booting[inst.id] = inst
            self._cost.open_instance(inst)
            self._cost_by_region[region.name].open_instance(inst)
            lo, hi = region.boot_delay_s
            delay = float(self._boot_rng[region.name].uniform(lo, hi)) if hi > lo else lo

            def ready(inst=inst, ss=ss):
                self._boot_events.pop(inst.id, None)
                ss.booting.pop(inst.id)
                inst.state = InstanceState.RUNNING
                inst.ready_time = self.kernel.clock
                ss.running[inst.id] = inst
                self.on_instance_ready(inst)

            self._boot_events[inst.id] = self.kernel.schedule(now + delay, ready, f"boot/{region.name}")

    def _deallocate(self, ss: ScaleSet, count: int) -> None:
        # newest first, so long-lived pilots (and their jobs) survive the cut
        live = sorted(list(ss.booting.values()) + list(ss.running.values()),
                      key=lambda i: (i.create_time, i.id), reverse=True)
        for inst in live[:count]:
            self._terminate(ss, inst, InstanceState.DEALLOCATED, "deallocated")

    def _terminate(self, ss: ScaleSet, inst: CloudInstance, state: InstanceState, reason: str) -> None:
        if inst.id in ss.booting:
            ss.booting.pop(inst.id)
            ev = self._boot_events.pop(inst.id, None)
            if ev is not None:
                self.kernel.cancel(ev)
        else:
            ss.running.pop(inst.id)
        inst.state = state
        inst.end_time = self.kernel.clock
        self._cost.close_instance(inst)
        self._cost_by_region[inst.region.name].close_instance(inst)
        self.on_instance_gone(inst, reason)

    # -- preemption ----------------------------------------------------------

    def hazard_rate(self, region_name: str) -> float:
        """Effective per-instance preemption rate (per day) at current load."""
        region = self.regions[region_name]
        ss = self.scale_sets[region_name]
        load = ss.live / region.capacity if region.capacity else 0.0
        return region.hazard_base_per_day * (1.0 + region.hazard_load_coeff * load)

    def preemption_tick(self, region_name: str, dt: float) -> list[CloudInstance]:
        """Independently preempt each live instance with prob 1 - exp(-hazard*dt)."""
        if dt <= 0:
            raise ValueError("dt must be > 0")
        ss = self.scale_sets[region_name]
        rate = self.hazard_rate(region_name)
        if rate <= 0.0 or ss.live == 0:
            return []
        p = 1.0 - math.exp(-rate * dt / DAY)
        live = sorted(list(ss.booting.values()) + list(ss.running.values()), key=lambda i: i.id)
        draws = self._preempt_rng[region_name].random(len(live))
        self.preemption_trials += len(live)
        preempted = [inst for inst, u in zip(live, draws) if u < p]
        for inst in preempted:
            self._terminate(ss, inst, InstanceState.PREEMPTED, "preempted")
        self.preemptions_total += len(preempted)
        if self.reconcile_mode and preempted:
            self._boot_up_to_target(ss)
        return preempted

    # -- accounting ------------------------------------------------------------

    def cumulative_cost(self, now: float, region: str | None = None) -> float:
        ledger = self._cost if region is None else self._cost_by_region[region]
        return ledger.total(now)

    def cost_added(self, t0: float, t1: float) -> tuple[dict[str, float], float]:
        """Currency accrued over [t0, t1] per region and in total."""
        if t1 < t0:
            raise ValueError("t1 must be >= t0")
        per_region = {name: self._cost_by_region[name].total(t1) - self._cost_by_region[name].total(t0)
                      for name in self.region_order}
        return per_region, self._cost.total(t1) - self._cost.total(t0)

    def recomputed_cost(self, now: float) -> float:
        """Independent conservation check: per-instance price x alive time."""
        return sum(inst.cost_accrued(now) for inst in self.instances)

    def live_counts(self, region_name: str) -> tuple[int, int]:
        ss = self.scale_sets[region_name]
        return len(ss.running), len(ss.booting)


class OperatorSchedule:
    """Replays a piecewise-constant target timeline of total cores.

    Entries are (time_s, total_cores); the entry in force at tick time is
    converted to instances and spread over regions in preference order,
    filling cheaper-preferred regions first up to capacity.
    """

    kind = "schedule"

    def __init__(self, entries: list[tuple[float, int]]):
        self.entries = sorted(entries)

    def targets(self, provider: CloudProvider, now: float, idle_cores: int) -> dict[str, int]:
        total_cores = 0
        for t, cores in self.entries:
            if t <= now:
                total_cores = cores
        out: dict[str, int] = {}
        for name in provider.region_order:
            region = provider.regions[name]
            want = math.ceil(total_cores / region.instance_cores) if total_cores > 0 else 0
            take = min(want, region.capacity)
            out[name] = take
            total_cores = max(0, total_cores - take * region.instance_cores)
        return out


class AdaptiveSpendPolicy:
    """Targets queue demand, clamped so projected spend stays under the cap."""

    kind = "adaptive"

    def __init__(self, spend_cap_per_day: float):
        self.spend_cap_per_day = spend_cap_per_day

    def targets(self, provider: CloudProvider, now: float, idle_cores: int) -> dict[str, int]:
        budget = self.spend_cap_per_day
        remaining_cores = idle_cores
        out: dict[str, int] = {}
        for name in provider.region_order:
            region = provider.regions[name]
            want = math.ceil(remaining_cores / region.instance_cores) if remaining_cores > 0 else 0
            affordable = int(budget // region.price_per_instance_day)
            take = min(want, region.capacity, affordable)
            out[name] = take
            budget -= take * region.price_per_instance_day
            remaining_cores = max(0, remaining_cores - take * region.instance_cores)
        return out
