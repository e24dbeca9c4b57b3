"""Single cache node in front of remote storage.

The :class:`Simulator` walks a trace one request at a time, keeps byte
accounting, and delegates admission and eviction decisions to a
:class:`Policy`.  Eviction follows a two-watermark rule: once occupancy
reaches ``w_high * capacity`` files are removed until it drops to
``w_low * capacity``.
"""
from __future__ import annotations

import enum
from collections import deque
from dataclasses import dataclass, fields
from typing import Container, Iterable, NamedTuple

from .trace import Request


class SimulationError(RuntimeError):
    pass


class EvictionError(SimulationError):
    """An eviction ordering ran out of files before the watermark target was met."""


class Outcome(str, enum.Enum):
    HIT = "hit"
    MISS_STORED = "miss_stored"
    MISS_PROXIED = "miss_proxied"
    MISS_BANDWIDTH = "miss_bandwidth"

    @property
    def is_hit(self) -> bool:
        return self is Outcome.HIT


class CacheEntry:
    __slots__ = ("size", "last_access_tick", "insertion_tick", "access_count")

    def __init__(self, size: int, tick: int):
        self.size = size
        self.last_access_tick = tick
        self.insertion_tick = tick
        self.access_count = 1

    def __repr__(self):
        return (f"CacheEntry(size={self.size}, last={self.last_access_tick}, "
                f"ins={self.insertion_tick}, count={self.access_count})")


class CacheState:
    """Stored files and occupancy.

    ``stored`` iterates in least-recently-used-first order: a hit moves the
    file to the end.
    """

    def __init__(self, capacity: int, w_high: float = 0.95, w_low: float = 0.75):
        if capacity <= 0:
            raise ValueError("capacity must be positive")
        if not 0 < w_low < w_high <= 1:
            raise ValueError("watermarks must satisfy 0 < w_low < w_high <= 1")
        self.capacity = int(capacity)
        self.w_high = w_high
        self.w_low = w_low
        self.occupancy = 0
        self.stored: dict[str, CacheEntry] = {}
        self.hit_rate = 0.0

    @property
    def high_mark(self) -> float:
        return self.w_high * self.capacity

    @property
    def low_mark(self) -> float:
        return self.w_low * self.capacity

    @property
    def occupancy_fraction(self) -> float:
        return self.occupancy / self.capacity

    def __contains__(self, file_id) -> bool:
        return file_id in self.stored

    def __len__(self) -> int:
        return len(self.stored)


ACCOUNTING_FIELDS = ("hits", "misses", "rhd", "rhm", "wd", "dd")


@dataclass
class Accounting:
    """Run totals.  ``rhd``/``rhm`` are bytes read on hit/miss, ``wd``/``dd``
    bytes written to and deleted from the cache."""

    hits: int = 0
    misses: int = 0
    rhd: int = 0
    rhm: int = 0
    wd: int = 0
    dd: int = 0

    def totals(self) -> tuple[int, ...]:
        return (self.hits, self.misses, self.rhd, self.rhm, self.wd, self.dd)

    @property
    def requests(self) -> int:
        return self.hits + self.misses

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


class DayRow(NamedTuple):
    day: int
    hits: int
    misses: int
    rhd: int
    rhm: int
    wd: int
    dd: int
    occupancy_eod: int
    hit_rate: float


DAILY_CSV_HEADER = DayRow._fields


class BandwidthGate:
    """Daily cap on bytes served from cache; ``daily_limit=None`` disables it."""

    def __init__(self, daily_limit: int | None = None):
        if daily_limit is not None and daily_limit <= 0:
            raise ValueError("daily_limit must be positive or None")
        self.daily_limit = daily_limit
        self.consumed_today = 0

    def allows(self, size: int) -> bool:
        return self.daily_limit is None or self.consumed_today + size <= self.daily_limit

    def consume(self, size: int) -> None:
        self.consumed_today += size

    def reset(self) -> None:
        self.consumed_today = 0


class FileStats(NamedTuple):
    file_id: str
    size: int
    data_type: str
    n: int  # requests inside the trailing window, current one included
    dt_days: int | None  # None: never seen before (or history expired)
    dt_ticks: int | None


class _StatsEntry:
    __slots__ = ("size", "data_type", "days", "last_day", "last_tick")

    def __init__(self, size, data_type):
        self.size = size
        self.data_type = data_type
        self.days: deque[int] = deque()
        self.last_day = -1
        self.last_tick = -1


class FileStatsStore:
    """Per-file request history over a trailing window of ``window_days`` days.

    History of a file that is not cached and has not been requested for a full
    window is dropped; its next request looks like a first request.
    """

    def __init__(self, cached: Container[str], window_days: int = 7):
        self.window_days = window_days
        self._cached = cached
        self._entries: dict[str, _StatsEntry] = {}

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, file_id) -> bool:
        return file_id in self._entries

    def _expired(self, fid: str, e: _StatsEntry, day: int) -> bool:
        return day - e.last_day >= self.window_days and fid not in self._cached

    def update(self, req: Request) -> FileStats:
        e = self._entries.get(req.file_id)
        if e is not None and self._expired(req.file_id, e, req.day):
            e = None
        if e is None:
            e = _StatsEntry(req.size, req.data_type)
            self._entries[req.file_id] = e
            dt_days = dt_ticks = None
        else:
            dt_days = req.day - e.last_day
            dt_ticks = req.tick - e.last_tick
        horizon = req.day - self.window_days
        days = e.days
        while days and days[0] <= horizon:
            days.popleft()
        days.append(req.day)
        e.last_day = req.day
        e.last_tick = req.tick
        return FileStats(req.file_id, e.size, e.data_type, len(days), dt_days, dt_ticks)

    def view(self, file_id: str, day: int, tick: int) -> FileStats:
        """Statistics of a known file as seen at (day, tick), without recording a request."""
        e = self._entries[file_id]
        horizon = day - self.window_days
        n = sum(1 for d in e.days if d > horizon)
        return FileStats(file_id, e.size, e.data_type, n, day - e.last_day, tick - e.last_tick)

    def features(self, file_id: str, day: int) -> tuple[int, int, int]:
        """(size, requests in window, days since last request) of a known file."""
        e = self._entries[file_id]
        horizon = day - self.window_days
        n = 0
        for d in e.days:
            if d > horizon:
                n += 1
        return e.size, n, day - e.last_day

    def purge(self, day: int) -> int:
        stale = [fid for fid, e in self._entries.items() if self._expired(fid, e, day)]
        for fid in stale:
            del self._entries[fid]
        return len(stale)


class Policy:
    """Admission/eviction strategy plugged into a :class:`Simulator`.

    The default behaviour is write-everything with LRU watermark eviction.
    """

    name = "policy"
    sim: "Simulator"

    def bind(self, sim: "Simulator") -> None:
        self.sim = sim

    def admit(self, req: Request, stats: FileStats) -> bool:
        return True

    def eviction_order(self) -> Iterable[str]:
        return list(self.sim.cache.stored)

    def free_space(self, incoming: int) -> int:
        return self.sim.evict_to_low_watermark(self.eviction_order(), incoming)

    def after_request(self, req: Request, stats: FileStats, outcome: Outcome) -> None:
        pass

    def on_day_end(self, day: int) -> None:
        pass

    def finish(self) -> None:
        pass


class Simulator:
    """Per-request driver for one cache and one policy."""

    def __init__(
        self,
        capacity: int,
        policy: Policy,
        *,
        w_high: float = 0.95,
        w_low: float = 0.75,
        bandwidth_limit: int | None = None,
        hit_rate_window: int | None = None,
        stats_window_days: int = 7,
    ):
        self.cache = CacheState(capacity, w_high, w_low)
        self.acc = Accounting()
        self.gate = BandwidthGate(bandwidth_limit)
        self.stats = FileStatsStore(self.cache.stored, stats_window_days)
        self.hit_rate_window = hit_rate_window
        self._recent: deque[bool] | None = deque(maxlen=hit_rate_window) if hit_rate_window else None
        self._recent_hits = 0
        self.daily: list[DayRow] = []
        self._day_base = self.acc.totals()
        self.tick = -1
        self.day: int | None = None
        self.requests = 0
        self.occupancy_at_request_start = 0
        self.peak_occupancy = 0
        # worst post-eviction occupancy per contract ("low": w_low target, "high": w_high target)
        self.post_eviction_peak = {"low": 0, "high": 0}
        self.eviction_events = {"low": 0, "high": 0}
        self._finished = False
        self.policy = policy
        policy.bind(self)

    # -- request path -------------------------------------------------

    def run(self, requests: Iterable[Request]) -> Accounting:
        for req in requests:
            self.process_request(req)
        self.finish()
        return self.acc

    def process_request(self, req: Request) -> Outcome:
        if self._finished:
            raise SimulationError("simulation already finished")
        if req.tick <= self.tick:
            raise SimulationError(f"tick {req.tick} is not after previous tick {self.tick}")
        if self.day is None:
            self.day = req.day
        elif req.day > self.day:
            self._close_days(req.day)
        elif req.day < self.day:
            raise SimulationError(f"day went backwards at tick {req.tick}")
        self.tick = req.tick
        self.requests += 1
        cache = self.cache
        acc = self.acc
        self.occupancy_at_request_start = cache.occupancy

        stats = self.stats.update(req)
        size = req.size
        entry = cache.stored.get(req.file_id)
        if entry is not None:
            if self.gate.allows(size):
                self.gate.consume(size)
                outcome = Outcome.HIT
                acc.hits += 1
                acc.rhd += size
                entry.last_access_tick = req.tick
                entry.access_count += 1
                cache.stored[req.file_id] = cache.stored.pop(req.file_id)
            else:
                outcome = Outcome.MISS_BANDWIDTH
                acc.misses += 1
                acc.rhm += size
        else:
            acc.misses += 1
            acc.rhm += size
            if size <= cache.capacity and self.policy.admit(req, stats):
                self.insert(req.file_id, size)
                outcome = Outcome.MISS_STORED
            else:
                outcome = Outcome.MISS_PROXIED
        self._update_hit_rate(outcome is Outcome.HIT)
        self.policy.after_request(req, stats, outcome)
        return outcome

    def _update_hit_rate(self, hit: bool) -> None:
        if self._recent is None:
            self.cache.hit_rate = self.acc.hits / self.requests
            return
        if len(self._recent) == self._recent.maxlen:
            self._recent_hits -= self._recent[0]
        self._recent.append(hit)
        self._recent_hits += hit
        self.cache.hit_rate = self._recent_hits / len(self._recent)

    # -- cache mutation -----------------------------------------------

    def insert(self, file_id: str, size: int) -> bool:
        cache = self.cache
        if size > cache.capacity:
            return False
        if cache.occupancy + size > cache.capacity:
            self.policy.free_space(size)
            if cache.occupancy + size > cache.capacity:
                raise EvictionError(f"policy {self.policy.name} did not make room for {size} bytes")
        cache.stored[file_id] = CacheEntry(size, self.tick)
        cache.occupancy += size
        self.acc.wd += size
        if cache.occupancy > cache.capacity:
            raise SimulationError("occupancy exceeded capacity")
        if cache.occupancy > self.peak_occupancy:
            self.peak_occupancy = cache.occupancy
        if cache.occupancy >= cache.high_mark:
            self.policy.free_space(0)
        return True

    def evict(self, file_id: str) -> int:
        entry = self.cache.stored.pop(file_id)
        self.cache.occupancy -= entry.size
        self.acc.dd += entry.size
        return entry.size

    def needs_space(self, incoming: int = 0) -> bool:
        c = self.cache
        return c.occupancy >= c.high_mark or c.occupancy + incoming > c.capacity

    def evict_to_low_watermark(self, order: Iterable[str], incoming: int = 0) -> int:
        """Evict files in ``order`` until occupancy is at or below the low mark
        and ``incoming`` bytes fit.  No-op unless :meth:`needs_space`."""
        if not self.needs_space(incoming):
            return 0
        cache = self.cache
        target = cache.low_mark
        freed = 0
        for fid in list(order):
            if cache.occupancy <= target and cache.occupancy + incoming <= cache.capacity:
                break
            if fid in cache.stored:
                freed += self.evict(fid)
        if cache.occupancy > target or cache.occupancy + incoming > cache.capacity:
            raise EvictionError("eviction order exhausted above the low watermark")
        self.record_eviction_event("low")
        return freed

    def record_eviction_event(self, kind: str) -> None:
        self.eviction_events[kind] += 1
        if self.cache.occupancy > self.post_eviction_peak[kind]:
            self.post_eviction_peak[kind] = self.cache.occupancy

    # -- day bookkeeping ----------------------------------------------

    def _close_days(self, new_day: int) -> None:
        for d in range(self.day, new_day):
            self.day = d
            self.policy.on_day_end(d)
            self.snapshot_day()
        self.day = new_day
        self.stats.purge(new_day)

    def snapshot_day(self) -> DayRow:
        totals = self.acc.totals()
        delta = [a - b for a, b in zip(totals, self._day_base)]
        row = DayRow(self.day, *delta, self.cache.occupancy, self.cache.hit_rate)
        self.daily.append(row)
        self._day_base = totals
        self.gate.reset()
        return row

    def finish(self) -> Accounting:
        if self._finished:
            return self.acc
        if self.day is not None:
            self.policy.on_day_end(self.day)
            self.snapshot_day()
        self.policy.finish()
        self._finished = True
        return self.acc
