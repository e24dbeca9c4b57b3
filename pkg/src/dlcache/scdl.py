"""SCDL: contextual-bandit addition agent over binned file statistics.

Eviction is plain LRU under the watermark rule.  Each decision is remembered
per discrete state and rewarded with +/- file size the next time that state
comes up.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bandit import (
    BinningScheme,
    EpsilonSchedule,
    FixedEpsilon,
    QTable,
    attach_clock,
    bin_addition_state,
    q_update,
    select_action,
)
from .cache import Outcome, Policy

STORE, NOT_STORE = 0, 1
ADDITION_ACTIONS = ("Store", "NotStore")


@dataclass
class PendingDecision:
    state: tuple
    action: int
    file_id: str
    size: int
    decision_tick: int
    hits_since: int = 0
    misses_since: int = 0


def scdl_reward(p: PendingDecision, occupancy_fraction: float, w_high: float) -> int:
    """+size when the decision turned out useful, -size otherwise.

    Store is useful if the file was hit at least once before settlement and
    the cache sits below the high watermark; NotStore is useful if the file
    was not asked for again.
    """
    if p.action == STORE:
        good = p.hits_since >= 1 and occupancy_fraction < w_high
    else:
        good = p.hits_since + p.misses_since == 0
    return p.size if good else -p.size


class SCDL(Policy):
    name = "scdl"

    def __init__(
        self,
        *,
        scheme: BinningScheme | None = None,
        alpha: float = 0.5,
        gamma: float = 0.5,
        epsilon: EpsilonSchedule | FixedEpsilon | None = None,
        seed: int | np.random.SeedSequence = 0,
        forced_action: int | None = None,
        epsilon_clock: str = "requests",
    ):
        if epsilon_clock not in ("requests", "decisions"):
            raise ValueError("epsilon_clock must be 'requests' or 'decisions'")
        self.epsilon_clock = epsilon_clock
        self.scheme = scheme or BinningScheme()
        self.alpha = alpha
        self.gamma = gamma
        self.epsilon = epsilon if epsilon is not None else EpsilonSchedule(1.0, 0.1, 7.3e-5)
        self.rng = np.random.default_rng(seed)
        self.forced_action = forced_action
        self.table = QTable(2)
        self.pending: dict[tuple, PendingDecision] = {}
        self._by_file: dict[str, set[tuple]] = {}
        self._decision: tuple[tuple, int] | None = None
        self.rewards_applied = 0
        self.decisions = 0

    def bind(self, sim) -> None:
        super().bind(sim)
        if self.epsilon_clock == "requests":
            attach_clock(self.epsilon, lambda: sim.requests)

    def admit(self, req, stats) -> bool:
        state = bin_addition_state(stats, None, "scdl", self.scheme)
        if self.forced_action is not None:
            action = self.forced_action
            self.epsilon.step()
        else:
            action = select_action(self.table, state, self.epsilon, self.rng)
        self._decision = (state, action)
        self.decisions += 1
        return action == STORE

    def after_request(self, req, stats, outcome) -> None:
        for s in self._by_file.get(req.file_id, ()):
            p = self.pending[s]
            if outcome is Outcome.HIT:
                p.hits_since += 1
            else:
                p.misses_since += 1

        state = bin_addition_state(stats, None, "scdl", self.scheme)
        old = self.pending.pop(state, None)
        if old is not None:
            self._unlink(old)
            cache = self.sim.cache
            r = scdl_reward(old, cache.occupancy_fraction, cache.w_high)
            q_update(self.table, old.state, old.action, r, old.state, self.alpha, self.gamma)
            self.rewards_applied += 1

        if self._decision is not None:
            s, a = self._decision
            self._decision = None
            p = PendingDecision(s, a, req.file_id, req.size, req.tick)
            # a decision can only be settled on a later request with the same state
            prev = self.pending.pop(s, None)
            if prev is not None:
                self._unlink(prev)
            self.pending[s] = p
            self._by_file.setdefault(req.file_id, set()).add(s)

    def _unlink(self, p: PendingDecision) -> None:
        states = self._by_file.get(p.file_id)
        if states is not None:
            states.discard(p.state)
            if not states:
                del self._by_file[p.file_id]
