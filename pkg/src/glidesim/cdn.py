"""Regional data layer: LRU object caches over a high-latency origin.

Software and calibration objects are cacheable and shared by every job using
the same I/O profile; bulk payload bytes stream straight from managed storage
and are charged pure bandwidth time. The stall a job accumulates while
fetching determines its CPU efficiency on the slot.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .kernels import CACHED_BYTES, EVICTIONS, HITS, MISSES, ORIGIN_BYTES, REQUESTS

SOFTWARE = "software"
CALIBRATION = "calibration"
BULK = "bulk"

CACHEABLE_CLASSES = (SOFTWARE, CALIBRATION)


@dataclass(frozen=True)
class DataObject:
    id: int
    klass: str
    size: int
    mutability: str = "immutable"

    @property
    def cacheable(self) -> bool:
        return self.klass in CACHEABLE_CLASSES


@dataclass(frozen=True)
class IoProfile:
    """Per-job data appetite: small cacheable lookups plus bulk streaming."""

    name: str
    calibration_count: int = 0
    calibration_bytes: int = 0
    software_count: int = 0
    software_bytes: int = 0
    bulk_in_bytes: int = 0
    bulk_out_bytes: int = 0
    spread: str = "startup-burst"


@dataclass(frozen=True)
class LatencyModel:
    cache_rtt: float = 0.002
    origin_rtt: float = 0.120
    cache_bandwidth: float = 1.25e8
    wan_bandwidth: float = 5.0e7
    bulk_bandwidth: float = 5.0e8
    request_concurrency: float = 1.0


def job_efficiency(cpu_seconds: float, stall_seconds: float) -> float:
    """Fraction of wall time spent computing: cpu / (cpu + stall)."""
    if cpu_seconds <= 0:
        raise ValueError("cpu_seconds must be positive")
    if stall_seconds < 0:
        raise ValueError("stall_seconds must be non-negative")
    return cpu_seconds / (cpu_seconds + stall_seconds)


class ObjectCatalog:
    """Global enumeration of cacheable objects, one set per I/O profile.

    Jobs sharing a profile request the same objects, which is what makes the
    regional caches effective. Request traces list software objects first
    (startup), then calibration lookups.
    """

    def __init__(self):
        self.objects: list[DataObject] = []
        self.profiles: dict[str, IoProfile] = {}
        self._traces: dict[str, np.ndarray] = {}
        self._sizes: list[int] = []

    def register(self, profile: IoProfile) -> None:
        if profile.name in self.profiles:
            raise ValueError(f"duplicate io profile {profile.name!r}")
        self.profiles[profile.name] = profile
        ids = []
        for _ in range(profile.software_count):
            ids.append(self._add(SOFTWARE, profile.software_bytes))
        for _ in range(profile.calibration_count):
            ids.append(self._add(CALIBRATION, profile.calibration_bytes))
        self._traces[profile.name] = np.asarray(ids, dtype=np.int64)

    def _add(self, klass: str, size: int) -> int:
        obj = DataObject(id=len(self.objects), klass=klass, size=size)
        self.objects.append(obj)
        self._sizes.append(size)
        return obj.id

    def trace(self, profile_name: str) -> np.ndarray:
        return self._traces[profile_name]

    @property
    def sizes(self) -> np.ndarray:
        return np.asarray(self._sizes, dtype=np.int64)


class CacheNode:
    """One LRU byte cache serving a region."""

    def __init__(self, region: str, capacity_bytes: int, catalog: ObjectCatalog, latency: LatencyModel):
        self.region = region
        self.capacity_bytes = int(capacity_bytes)
        self.catalog = catalog
        self.latency = latency
        self._sizes = catalog.sizes
        self.in_cache, self.nxt, self.prv, self.counters = kernels.new_lru_state(len(self._sizes))

    def fetch(self, obj: DataObject) -> tuple[float, str]:
        """Serve one object; returns (latency_seconds, "cache"|"origin")."""
        if not obj.cacheable:
            raise ValueError(f"object {obj.id} of class {obj.klass!r} is not cacheable")
        was_cached = bool(self.in_cache[obj.id])
        latency = self.fetch_trace(np.asarray([obj.id], dtype=np.int64))
        return latency, "cache" if was_cached else "origin"

    def fetch_trace(self, ids: np.ndarray) -> float:
        lat = self.latency
        return kernels.fetch_batch(
            ids, self._sizes, self.in_cache, self.nxt, self.prv, self.counters,
            self.capacity_bytes, lat.cache_rtt, lat.origin_rtt,
            lat.cache_bandwidth, lat.wan_bandwidth, lat.request_concurrency,
        )

    @property
    def hits(self) -> int:
        return int(self.counters[HITS])

    @property
    def misses(self) -> int:
        return int(self.counters[MISSES])

    @property
    def bytes_from_origin(self) -> int:
        return int(self.counters[ORIGIN_BYTES])

    @property
    def evictions(self) -> int:
        return int(self.counters[EVICTIONS])

    @property
    def cached_bytes(self) -> int:
        return int(self.counters[CACHED_BYTES])

    def stats(self) -> tuple[float | None, int, int]:
        """(hit_rate, bytes_from_origin, evictions); hit_rate None before any request."""
        total = int(self.counters[REQUESTS])
        rate = self.hits / total if total else None
        return rate, self.bytes_from_origin, self.evictions


@dataclass
class _RegionCounters:
    requests: int = 0
    origin_bytes: int = 0


class DataService:
    """Routes job I/O to the regional cache, or to the origin when disabled."""

    def __init__(self, regions: list[str], catalog: ObjectCatalog, latency: LatencyModel,
                 caches_enabled: bool = True, cache_capacity_bytes: int = 100_000_000_000):
        self.catalog = catalog
        self.latency = latency
        self.caches_enabled = caches_enabled
        self.caches: dict[str, CacheNode] = {}
        self._origin_only: dict[str, _RegionCounters] = {}
        for region in regions:
            if caches_enabled:
                self.caches[region] = CacheNode(region, cache_capacity_bytes, catalog, latency)
            else:
                self._origin_only[region] = _RegionCounters()

    def job_stall_time(self, profile_name: str, region: str) -> float:
        """Total fetch latency plus bulk streaming time for one job placement."""
        profile = self.catalog.profiles[profile_name]
        ids = self.catalog.trace(profile_name)
        cache = self.caches.get(region)
        if cache is not None:
            stall = cache.fetch_trace(ids)
        else:
            lat = self.latency
            sizes = self.catalog.sizes
            transfer = float(sizes[ids].sum()) / lat.wan_bandwidth if len(ids) else 0.0
            stall = len(ids) * lat.origin_rtt / lat.request_concurrency + transfer
            counters = self._origin_only.setdefault(region, _RegionCounters())
            counters.requests += len(ids)
            counters.origin_bytes += int(sizes[ids].sum()) if len(ids) else 0
        stall += (profile.bulk_in_bytes + profile.bulk_out_bytes) / self.latency.bulk_bandwidth
        return stall

    def origin_bytes(self, region: str) -> int:
        """Bytes pulled over the WAN for cacheable classes (bulk excluded)."""
        cache = self.caches.get(region)
        if cache is not None:
            return cache.bytes_from_origin
        counters = self._origin_only.get(region)
        return counters.origin_bytes if counters else 0

    def hit_rate(self, region: str) -> float | None:
        cache = self.caches.get(region)
        if cache is None:
            return None
        return cache.stats()[0]
