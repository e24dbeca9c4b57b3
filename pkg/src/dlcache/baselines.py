"""Write-everything admission with classic eviction orderings."""
from __future__ import annotations

import enum

from .cache import CacheState, Policy


class EvictionOrdering(str, enum.Enum):
    LRU = "lru"
    LFU = "lfu"
    SIZE_BIG = "size-big"
    SIZE_SMALL = "size-small"


def order_for_eviction(state: CacheState, kind: EvictionOrdering | str) -> list[str]:
    """Cached file ids, first-to-evict first.  Ties go to the older insertion."""
    kind = EvictionOrdering(kind)
    stored = state.stored
    if kind is EvictionOrdering.LRU:
        key = lambda f: (stored[f].last_access_tick, stored[f].insertion_tick)
    elif kind is EvictionOrdering.LFU:
        key = lambda f: (stored[f].access_count, stored[f].insertion_tick)
    elif kind is EvictionOrdering.SIZE_BIG:
        key = lambda f: (-stored[f].size, stored[f].insertion_tick)
    else:
        key = lambda f: (stored[f].size, stored[f].insertion_tick)
    return sorted(stored, key=key)


def admit_always(req=None) -> bool:
    return True


class WriteEverything(Policy):
    """Store every miss; evict by ``ordering`` under the watermark rule."""

    def __init__(self, ordering: EvictionOrdering | str = EvictionOrdering.LRU):
        self.ordering = EvictionOrdering(ordering)
        self.name = f"we-{self.ordering.value}"

    def admit(self, req, stats) -> bool:
        return admit_always(req)

    def eviction_order(self):
        if self.ordering is EvictionOrdering.LRU:
            # dict order of CacheState.stored is already least-recent first
            return list(self.sim.cache.stored)
        return order_for_eviction(self.sim.cache, self.ordering)
