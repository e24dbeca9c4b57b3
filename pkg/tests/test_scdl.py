import random

import pytest

from dlcache.bandit import BinningScheme, FixedEpsilon
from dlcache.baselines import WriteEverything
from dlcache.cache import Outcome, Simulator
from dlcache.scdl import NOT_STORE, STORE, SCDL, PendingDecision, scdl_reward
from helpers import random_trace, requests_from


def _p(action, hits=0, misses=0, size=7):
    return PendingDecision((0,), action, "f", size, 0, hits, misses)


def test_reward_rule():
    assert scdl_reward(_p(STORE, hits=1), 0.5, 0.95) == 7
    assert scdl_reward(_p(STORE, hits=2), 0.96, 0.95) == -7
    assert scdl_reward(_p(STORE), 0.5, 0.95) == -7
    assert scdl_reward(_p(NOT_STORE), 0.5, 0.95) == 7
    assert scdl_reward(_p(NOT_STORE, misses=1), 0.5, 0.95) == -7


def test_greedy_store():
    pol = SCDL(epsilon=FixedEpsilon(0.0))
    pol.table[(0, 0, -1)][:] = [1.0, 0.0]
    sim = Simulator(100, pol)
    assert sim.process_request(requests_from([("A", 5)])[0]) is Outcome.MISS_STORED


def test_pending_settled_when_state_recurs():
    # A and B share state (size bin 0, n=1, never); A is stored, hit, then B arrives
    pol = SCDL(epsilon=FixedEpsilon(0.0))
    pol.table[(0, 0, -1)][:] = [1.0, 0.0]
    pol.table[(0, 1, 0)][:] = [1.0, 0.0]
    sim = Simulator(100, pol)
    for r in requests_from([("A", 5), ("A", 5), ("B", 5)]):
        sim.process_request(r)
    # (s, Store) got +5 with alpha=gamma=0.5 in bandit mode: 1 + 0.5 * (5 + 0.5 * 1 - 1)
    assert pol.table[(0, 0, -1)][STORE] == pytest.approx(1 + 0.5 * (5 + 0.5 * 1.0 - 1))
    assert pol.rewards_applied == 1
    assert list(pol.pending) == [(0, 0, -1)] and pol.pending[(0, 0, -1)].file_id == "B"


def test_occupancy_above_high_mark_runs_lru():
    pol = SCDL(forced_action=STORE)
    sim = Simulator(100, pol)
    sim.run(requests_from([("A", 30), ("B", 30), ("C", 30), ("D", 6)]))
    assert sim.cache.occupancy <= 75 and "A" not in sim.cache.stored


@pytest.mark.parametrize("seed", range(8))
def test_forced_store_is_write_everything_lru(seed):
    rng = random.Random(seed)
    reqs = random_trace(rng, 250, 20)
    cap = rng.randint(40, 500)
    a = Simulator(cap, SCDL(forced_action=STORE))
    b = Simulator(cap, WriteEverything("lru"))
    assert [a.process_request(r) for r in reqs] == [b.process_request(r) for r in reqs]


def test_pending_table_bounded_by_states():
    pol = SCDL(scheme=BinningScheme(), seed=3)
    sim = Simulator(300, pol)
    decided = set()
    for r in random_trace(random.Random(4), 600, 60):
        sim.process_request(r)
        if pol.pending:
            decided.update(pol.pending)
        assert len(pol.pending) <= len(decided) <= 6 * 6 * 8
        assert sum(len(v) for v in pol._by_file.values()) == len(pol.pending)
