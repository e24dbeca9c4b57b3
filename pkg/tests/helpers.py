"""Shared fixtures-by-function for the test suite."""
from __future__ import annotations

import random

from dlcache.cache import Simulator
from dlcache.config import RunConfig
from dlcache.runner import POLICY_IDS, make_policy
from dlcache.trace import Request

# small-trace settings that still exercise every code path of the learners
FAST_PARAMS = {
    "dqn": {"k": 50, "h_window_addition": 40, "h_window_eviction": 60, "scan_period": 10,
            "warmup_addition": 30, "warmup_eviction": 2, "replay_capacity": 500, "target_sync": 20},
    "scdl2-onk": {"k": 37},
}


def reference_lru(trace, capacity, w_high=0.95, w_low=0.75):
    """Naive list-based LRU with the two-watermark sweep; returns hit flags."""
    cached = []  # (file, size), least recent first
    used = 0
    hits = []

    def sweep(incoming):
        nonlocal used
        while cached and (used > w_low * capacity or used + incoming > capacity):
            used -= cached.pop(0)[1]

    for fid, size in trace:
        pos = [i for i, (f, _) in enumerate(cached) if f == fid]
        if pos:
            cached.append(cached.pop(pos[0]))
            hits.append(True)
            continue
        hits.append(False)
        if size > capacity:
            continue
        if used + size > capacity:
            sweep(size)
        cached.append((fid, size))
        used += size
        if used >= w_high * capacity:
            sweep(0)
    return hits


def requests_from(rows, day_every: int | None = None) -> list[Request]:
    """Requests from (file_id, size[, data_type]) tuples, optionally rolling the day."""
    out = []
    for t, row in enumerate(rows):
        fid, size = row[0], row[1]
        dtype = row[2] if len(row) > 2 else "data"
        day = t // day_every if day_every else 0
        out.append(Request(t, day, fid, size, dtype))
    return out


def random_trace(rng: random.Random, n_requests: int, n_files: int, max_size: int = 100,
                 day_every: int | None = 25) -> list[Request]:
    sizes = {f"f{i}": rng.randint(1, max_size) for i in range(n_files)}
    types = {f: rng.choice(("data", "mc", "user")) for f in sizes}
    files = list(sizes)
    weights = [1.0 / (i + 1) for i in range(n_files)]
    rows = []
    for _ in range(n_requests):
        f = rng.choices(files, weights)[0]
        rows.append((f, sizes[f], types[f]))
    return requests_from(rows, day_every)


def config_for(policy: str, capacity: int, seed: int = 0, **kw) -> RunConfig:
    return RunConfig(policy=policy, capacity=capacity, trace_preset="small",
                     params=dict(FAST_PARAMS.get(policy, {})), seed=seed, **kw)


def simulate(policy: str, requests, capacity: int, seed: int = 0, observe=None, **kw) -> Simulator:
    """Run one policy over ``requests``; ``observe(sim, req, outcome)`` sees every step."""
    cfg = config_for(policy, capacity, seed, **kw)
    pol = make_policy(cfg, len(requests))
    sim = Simulator(capacity, pol, w_high=cfg.w_high, w_low=cfg.w_low,
                    bandwidth_limit=cfg.bandwidth_limit)
    for req in requests:
        outcome = sim.process_request(req)
        if observe is not None:
            observe(sim, req, outcome)
    sim.finish()
    return sim


ALL_POLICIES = POLICY_IDS


def two_class_trace(n_requests: int = 200_000, seed: int = 0, wave: int = 10_000, hot_per_wave: int = 200,
                    hot_share: float = 0.5, hot_size: float = 256 * 1024, cold_size: float = 32 * 1024**2,
                    requests_per_day: int = 20_000) -> list[Request]:
    """Hot small files re-requested heavily (a fresh hot set every ``wave``
    requests) mixed with cold large files that are requested exactly once."""
    import numpy as np

    rng = np.random.default_rng(seed)
    types = ("data", "mc", "user")
    out = []
    hot = []
    cold_i = 0
    for t in range(n_requests):
        if t % wave == 0:
            base = t // wave * hot_per_wave
            hot = [(f"h{base + i}", int(hot_size * rng.lognormal(0, 0.2)), types[rng.integers(3)])
                   for i in range(hot_per_wave)]
        if rng.random() < hot_share:
            fid, size, dtype = hot[rng.integers(hot_per_wave)]
        else:
            fid, size, dtype = f"c{cold_i}", int(cold_size * rng.lognormal(0, 0.2)), types[rng.integers(3)]
            cold_i += 1
        out.append(Request(t, t // requests_per_day, fid, size, dtype))
    return out
