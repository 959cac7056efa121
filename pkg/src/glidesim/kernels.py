"""Hot inner loops, JIT-compiled when numba is available.

The per-job cache trace dominates runtime at scale (10^8 LRU operations in a
full campaign), so it lives here as an array kernel. Set GLIDESIM_NUMBA=0 to
force the plain-Python path; results are bit-identical either way, only
slower. `benchmarks/bench_kernels.py` compares the two.

Cache state layout over a catalog of M objects:
  in_cache : uint8[M]      membership flags
  nxt, prv : int64[M+2]    doubly-linked recency list, head sentinel at M
                           (most recent), tail sentinel at M+1 (eviction end)
  counters : int64[6]      hits, misses, bytes_from_origin, evictions,
                           cached_bytes, requests
"""

from __future__ import annotations

import os

import numpy as np

HITS, MISSES, ORIGIN_BYTES, EVICTIONS, CACHED_BYTES, REQUESTS = range(6)

N_COUNTERS = 6


def new_lru_state(n_objects: int) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Allocate (in_cache, nxt, prv, counters) for an empty cache."""
    head = n_objects
    tail = n_objects + 1
    in_cache = np.zeros(n_objects, dtype=np.uint8)
    nxt = np.empty(n_objects + 2, dtype=np.int64)
    prv = np.empty(n_objects + 2, dtype=np.int64)
    nxt[head] = tail
    prv[tail] = head
    nxt[tail] = -1
    prv[head] = -1
    counters = np.zeros(N_COUNTERS, dtype=np.int64)
    return in_cache, nxt, prv, counters


def _fetch_batch(ids, sizes, in_cache, nxt, prv, counters, capacity,
                 cache_rtt, origin_rtt, cache_bw, wan_bw, rtt_div):
    """Serve a request trace against one LRU cache; returns total stall seconds.

    Hits pay cache_rtt + size/cache_bw, misses pay origin_rtt + size/wan_bw
    and insert the object at the recency head, evicting from the tail until
    the byte budget holds. rtt_div pipelines round-trips (1.0 = sequential).
    """
    head = in_cache.shape[0]
    tail = head + 1
    stall = 0.0
    for k in range(ids.shape[0]):
        obj = ids[k]
        size = sizes[obj]
        counters[REQUESTS] += 1
        if in_cache[obj] == 1:
            counters[HITS] += 1
            stall += cache_rtt / rtt_div + size / cache_bw
            # refresh recency: unlink, reinsert at head
            prv[nxt[obj]] = prv[obj]
            nxt[prv[obj]] = nxt[obj]
            nxt[obj] = nxt[head]
            prv[obj] = head
            prv[nxt[head]] = obj
            nxt[head] = obj
        else:
            counters[MISSES] += 1
            counters[ORIGIN_BYTES] += size
            stall += origin_rtt / rtt_div + size / wan_bw
            if size <= capacity:
                in_cache[obj] = 1
                counters[CACHED_BYTES] += size
                nxt[obj] = nxt[head]
                prv[obj] = head
                prv[nxt[head]] = obj
                nxt[head] = obj
                while counters[CACHED_BYTES] > capacity:
                    victim = prv[tail]
                    prv[tail] = prv[victim]
                    nxt[prv[victim]] = tail
                    in_cache[victim] = 0
                    counters[CACHED_BYTES] -= sizes[victim]
                    counters[EVICTIONS] += 1
    return stall


py_fetch_batch = _fetch_batch

_flag = os.environ.get("GLIDESIM_NUMBA", "1").lower()
USING_NUMBA = _flag not in ("0", "false", "no")

if USING_NUMBA:
    try:
        from numba import njit

        fetch_batch = njit(cache=True)(_fetch_batch)
    except ImportError:
        USING_NUMBA = False
        fetch_batch = _fetch_batch
else:
    fetch_batch = _fetch_batch
