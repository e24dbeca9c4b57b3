import random

import pytest

from dlcache.baselines import EvictionOrdering, WriteEverything, order_for_eviction
from dlcache.cache import CacheEntry, CacheState, Simulator
from helpers import random_trace, reference_lru, requests_from


def _state(entries):
    st = CacheState(1000)
    for fid, (size, last, ins, count) in entries.items():
        e = CacheEntry(size, ins)
        e.last_access_tick = last
        e.access_count = count
        st.stored[fid] = e
        st.occupancy += size
    return st


ENTRIES = {
    "a": (10, 5, 0, 3),
    "b": (50, 2, 1, 1),
    "c": (50, 9, 2, 1),
    "d": (5, 1, 3, 7),
}


@pytest.mark.parametrize("kind, expected", [
    ("lru", ["d", "b", "a", "c"]),
    ("lfu", ["b", "c", "a", "d"]),
    ("size-big", ["b", "c", "a", "d"]),
    ("size-small", ["d", "a", "b", "c"]),
])
def test_orderings(kind, expected):
    assert order_for_eviction(_state(ENTRIES), kind) == expected


def test_unknown_ordering():
    with pytest.raises(ValueError):
        WriteEverything("fifo")


def test_names():
    assert [WriteEverything(k).name for k in EvictionOrdering] == [
        "we-lru", "we-lfu", "we-size-big", "we-size-small"]


def test_lfu_keeps_frequent_file():
    rows = [("A", 30), ("A", 30), ("B", 30), ("C", 30), ("D", 10)]
    sim = Simulator(100, WriteEverything("lfu"))
    sim.run(requests_from(rows))
    assert "A" in sim.cache.stored and "B" not in sim.cache.stored


def test_size_big_drops_largest():
    rows = [("A", 60), ("B", 20), ("C", 15)]
    sim = Simulator(100, WriteEverything("size-big"))
    sim.run(requests_from(rows))
    assert list(sim.cache.stored) == ["B", "C"]


@pytest.mark.parametrize("seed", range(20))
def test_lru_matches_reference(seed):
    rng = random.Random(seed)
    reqs = random_trace(rng, 300, 25)
    cap = rng.randint(50, 600)
    sim = Simulator(cap, WriteEverything("lru"))
    got = [sim.process_request(r).value == "hit" for r in reqs]
    assert got == reference_lru([(r.file_id, r.size) for r in reqs], cap)
