"""SCDL2: tabular addition agent plus a category-level eviction agent.

Cached files are grouped into categories by binned (size, frequency,
recency).  The eviction agent picks one of five actions per category.  Both
agents learn from delayed +/-1 rewards (with a +/-1 bonus) settled when the
affected file is requested again.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .bandit import (
    BinningScheme,
    EpsilonSchedule,
    FixedEpsilon,
    QTable,
    attach_clock,
    bin_addition_state,
    bin_eviction_state,
    q_update,
    select_action,
)
from .cache import Outcome, Policy

STORE, NOT_STORE = 0, 1
NOT_DELETE, DELETE_ALL, DELETE_HALF, DELETE_QUARTER, DELETE_ONE = range(5)
EVICTION_ACTIONS = ("NotDelete", "DeleteAll", "DeleteHalf", "DeleteQuarter", "DeleteOne")


class EvictionTrigger(str, enum.Enum):
    NO_EVICTION = "noeviction"
    ON_FREE = "onfree"
    ON_DAY_END = "ondayend"
    ON_K = "onk"


def eviction_count(action: int, members: int) -> int:
    if action == NOT_DELETE or members == 0:
        return 0
    if action == DELETE_ALL:
        return members
    if action == DELETE_HALF:
        return math.ceil(members / 2)
    if action == DELETE_QUARTER:
        return math.ceil(members / 4)
    if action == DELETE_ONE:
        return 1
    raise ValueError(f"unknown eviction action {action}")


@dataclass
class Category:
    key: tuple
    members: list[str]
    occupied: int


@dataclass
class _Pending:
    state: tuple
    action: int
    tick: int
    deleted: bool = False


class SCDL2(Policy):
    def __init__(
        self,
        trigger: EvictionTrigger | str = EvictionTrigger.ON_FREE,
        *,
        k: int = 8192,
        scheme: BinningScheme | None = None,
        alpha: float = 0.5,
        gamma: float = 0.5,
        addition_epsilon: EpsilonSchedule | FixedEpsilon | None = None,
        eviction_epsilon: EpsilonSchedule | FixedEpsilon | None = None,
        seed: int | np.random.SeedSequence = 0,
        forced_addition: int | None = None,
        forced_eviction: int | None = None,
        transition_basis: str = "file",
        epsilon_clock: str = "requests",
    ):
        self.trigger = EvictionTrigger(trigger)
        self.name = f"scdl2-{self.trigger.value}"
        if k <= 0:
            raise ValueError("k must be positive")
        if transition_basis not in ("file", "state"):
            raise ValueError("transition_basis must be 'file' or 'state'")
        if epsilon_clock not in ("requests", "decisions"):
            raise ValueError("epsilon_clock must be 'requests' or 'decisions'")
        self.epsilon_clock = epsilon_clock
        self.k = k
        self.scheme = scheme or BinningScheme()
        self.alpha = alpha
        self.gamma = gamma
        self.add_eps = addition_epsilon if addition_epsilon is not None else EpsilonSchedule(1.0, 0.1, 7.3e-5)
        self.evict_eps = eviction_epsilon if eviction_epsilon is not None else EpsilonSchedule(1.0, 0.1, 7.3e-5)
        self.rng = np.random.default_rng(seed)
        self.forced_addition = forced_addition
        self.forced_eviction = forced_eviction
        self.transition_basis = transition_basis

        self.addition_table = QTable(2)
        self.eviction_table = QTable(5)
        self.pending_add: dict[str, _Pending] = {}
        self.pending_evict: dict[str, dict[tuple, _Pending]] = {}
        self._last_hit: dict = {}  # file id (or addition state) -> was the last request a hit
        self._cat_bytes: dict[tuple, int] = {}  # category bytes seen at the latest pass
        self._decision: tuple[tuple, int] | None = None
        self.eviction_calls = 0
        self.rewards: list[int] = []
        self.record_rewards = False

    def bind(self, sim) -> None:
        super().bind(sim)
        if self.epsilon_clock == "requests":
            attach_clock(self.add_eps, lambda: sim.requests)
            attach_clock(self.evict_eps, lambda: sim.requests)

    # -- addition -----------------------------------------------------

    def _addition_state(self, stats):
        return bin_addition_state(stats, self.sim.cache, "scdl2", self.scheme)

    def admit(self, req, stats) -> bool:
        state = self._addition_state(stats)
        if self.forced_addition is not None:
            self.add_eps.step()
            action = self.forced_addition
        else:
            action = select_action(self.addition_table, state, self.add_eps, self.rng)
        self._decision = (state, action)
        return action == STORE

    def after_request(self, req, stats, outcome) -> None:
        sim = self.sim
        fid = req.file_id
        add_pending = self.pending_add.pop(fid, None)
        evict_pending = self.pending_evict.pop(fid, None)

        if self.trigger is EvictionTrigger.ON_K and sim.requests % self.k == 0:
            self.evict_by_categories(for_space=False)

        state_now = self._addition_state(stats)
        prev_key = fid if self.transition_basis == "file" else state_now
        prev_hit = self._last_hit.get(prev_key, False)
        hit = outcome is Outcome.HIT

        if add_pending is not None and add_pending.tick < req.tick:
            r = 0
            if add_pending.action == STORE and hit:
                r = 1 + (not prev_hit)
            elif add_pending.action == NOT_STORE and not hit:
                r = -1 - prev_hit
            if r:
                self._reward(self.addition_table, add_pending.state, add_pending.action, r, state_now)

        if evict_pending:
            occ_not_increased = sim.cache.occupancy <= sim.occupancy_at_request_start
            s_next = None
            for p in evict_pending.values():
                if p.tick >= req.tick:
                    continue
                r = 0
                if p.action == NOT_DELETE and hit:
                    r = 1 + occ_not_increased
                elif p.deleted and not hit:
                    r = -1 - prev_hit
                if r:
                    if s_next is None:
                        key = self.scheme.file_key(stats)
                        s_next = bin_eviction_state(key, self._cat_bytes.get(key, 0), sim.cache, self.scheme)
                    self._reward(self.eviction_table, p.state, p.action, r, s_next)

        if self._decision is not None:
            s, a = self._decision
            self._decision = None
            self.pending_add[fid] = _Pending(s, a, req.tick)

        if self.transition_basis == "state":
            self._last_hit[state_now] = hit
        elif fid in self.pending_add or fid in self.pending_evict or fid in sim.cache.stored:
            self._last_hit[fid] = hit
        else:
            self._last_hit.pop(fid, None)

    def _reward(self, table, s, a, r, s_next) -> None:
        q_update(table, s, a, r, s_next, self.alpha, self.gamma)
        if self.record_rewards:
            self.rewards.append(r)

    # -- eviction -----------------------------------------------------

    def free_space(self, incoming: int) -> int:
        if self.trigger is EvictionTrigger.NO_EVICTION:
            return super().free_space(incoming)
        return self.evict_by_categories(for_space=True, incoming=incoming)

    def on_day_end(self, day: int) -> None:
        if self.trigger is EvictionTrigger.ON_DAY_END:
            self.evict_by_categories(for_space=False)

    def categories(self) -> list[Category]:
        """Partition of the cached files, largest category first."""
        sim = self.sim
        day = sim.day
        groups: dict[tuple, Category] = {}
        features = sim.stats.features
        key_of = self.scheme.key
        for fid, entry in sim.cache.stored.items():
            key = key_of(*features(fid, day))
            c = groups.get(key)
            if c is None:
                c = groups[key] = Category(key, [], 0)
            c.members.append(fid)
            c.occupied += entry.size
        return sorted(groups.values(), key=lambda c: (-c.occupied, c.key))

    def _space_needed(self, incoming: int) -> bool:
        c = self.sim.cache
        return c.occupancy > c.low_mark or c.occupancy + incoming > c.capacity

    def evict_by_categories(self, for_space: bool = False, incoming: int = 0) -> int:
        """Run the eviction agent over every category.

        Under space pressure passes repeat until occupancy is at or below the
        low watermark; a pass that frees nothing forces DeleteOne on the
        largest category.
        """
        sim = self.sim
        if for_space and not sim.needs_space(incoming):
            return 0
        self.eviction_calls += 1
        freed = 0
        while True:
            cats = self.categories()
            if not cats:
                break
            self._cat_bytes = {c.key: c.occupied for c in cats}
            freed_pass = sum(self._decide(c) for c in cats)
            freed += freed_pass
            if not for_space or not self._space_needed(incoming):
                break
            if freed_pass == 0:
                freed += self._decide(cats[0], forced=DELETE_ONE)
                if not self._space_needed(incoming):
                    break
        if for_space:
            sim.record_eviction_event("low")
        return freed

    def _decide(self, cat: Category, forced: int | None = None) -> int:
        sim = self.sim
        cache = sim.cache
        members = [f for f in cat.members if f in cache.stored]
        if not members:
            return 0
        state = bin_eviction_state(cat.key, cat.occupied, cache, self.scheme)
        if forced is not None:
            action = forced
        elif self.forced_eviction is not None:
            self.evict_eps.step()
            action = self.forced_eviction
        else:
            action = select_action(self.eviction_table, state, self.evict_eps, self.rng)
        n = eviction_count(action, len(members))
        tick = sim.tick
        freed = 0
        pending = self.pending_evict
        if action == NOT_DELETE:
            p = _Pending(state, action, tick)  # shared: settlement never mutates it
            for f in members:
                d = pending.get(f)
                if d is None:
                    pending[f] = {state: p}
                else:
                    d[state] = p
            return 0
        if n == len(members):
            victims = members
        else:
            victims = [members[i] for i in sorted(self.rng.choice(len(members), n, replace=False))]
        p = _Pending(state, action, tick, deleted=True)
        for f in victims:
            freed += sim.evict(f)
            pending.setdefault(f, {})[state] = p
        return freed
