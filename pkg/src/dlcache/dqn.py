"""DQN QCache: deep-Q addition and eviction agents.

The addition agent decides Store/NotStore on every miss.  Every ``k``
requests, or when the high watermark is hit, the eviction agent walks the
cached files in insertion order and decides Keep/NotKeep for each.  A
decision is rewarded once ``h_window`` further requests have been observed:
Store/Keep earn ``n_hit * size`` (or ``-size`` if never hit), NotStore/NotKeep
earn ``-n_miss * size`` (or ``+size`` if never missed).  Settled decisions go
into per-agent replay memories; the online networks train on random batches
with targets from periodically synced target networks.
"""
from __future__ import annotations

import json
import math
from bisect import bisect_right
from collections import deque
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .bandit import EpsilonSchedule
from .cache import Outcome, Policy
from .neuralnet import AdamState, Network, copy_parameters, train_batch
from .trace import DATA_TYPES, GiB

STORE, NOT_STORE = 0, 1
KEEP, NOT_KEEP = 0, 1

# raw state columns: size, n, dt_days (-1 = never seen), data-type index, oc, hr
RAW_WIDTH = 6


class DqnState(NamedTuple):
    size: float
    n: float
    dt_days: float
    dtype: float
    oc: float
    hr: float

    def next_state(self, oc: float, hr: float) -> "DqnState":
        """State after a settled window: one more request, fresh cache figures."""
        return self._replace(n=self.n + 1, oc=oc, hr=hr)


def encode_states(raw: np.ndarray, n_types: int) -> np.ndarray:
    """Map raw state rows to bounded network inputs.

    size -> log10(bytes)/12, n -> log2(1+n)/10, dt -> days/7 clamped to 1
    (never seen -> 1), data type -> one-hot, oc and hr unchanged.
    """
    raw = np.atleast_2d(raw)
    out = np.zeros((raw.shape[0], 5 + n_types))
    out[:, 0] = np.log10(np.maximum(raw[:, 0], 1.0)) / 12.0
    out[:, 1] = np.log2(1.0 + raw[:, 1]) / 10.0
    dt = raw[:, 2]
    out[:, 2] = np.where(dt < 0, 1.0, np.minimum(dt / 7.0, 1.0))
    t = raw[:, 3].astype(np.int64)
    ok = (t >= 0) & (t < n_types)
    out[np.nonzero(ok)[0], 3 + t[ok]] = 1.0
    out[:, 3 + n_types] = raw[:, 4]
    out[:, 4 + n_types] = raw[:, 5]
    return out


def dqn_reward(action: int, n_hit: int, n_miss: int, size: float) -> float:
    """Reward of a settled decision in bytes (action 0 = Store/Keep, 1 = NotStore/NotKeep)."""
    if action == STORE:
        return n_hit * size if n_hit > 0 else -size
    return -n_miss * size if n_miss > 0 else size


class ReplayMemory:
    """Fixed-size FIFO of (S, A, R, S') with raw state rows."""

    def __init__(self, capacity: int):
        if capacity <= 0:
            raise ValueError("replay capacity must be positive")
        self.capacity = capacity
        self.S = np.zeros((capacity, RAW_WIDTH))
        self.A = np.zeros(capacity, dtype=np.int64)
        self.R = np.zeros(capacity)
        self.S2 = np.zeros((capacity, RAW_WIDTH))
        self.size = 0
        self._next = 0
        self.appended = 0

    def __len__(self) -> int:
        return self.size

    def append(self, s, a: int, r: float, s2) -> None:
        i = self._next
        self.S[i] = s
        self.A[i] = a
        self.R[i] = r
        self.S2[i] = s2
        self._next = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)
        self.appended += 1

    def sample(self, rng: np.random.Generator, batch: int):
        idx = rng.integers(0, self.size, batch)
        return self.S[idx], self.A[idx], self.R[idx], self.S2[idx]

    def rows(self):
        """Stored experiences, oldest first."""
        if self.size < self.capacity:
            order = np.arange(self.size)
        else:
            order = (np.arange(self.capacity) + self._next) % self.capacity
        return self.S[order], self.A[order], self.R[order], self.S2[order]


@dataclass
class _Pending:
    file_id: str
    index: int  # request index of the decision
    state: DqnState
    action: int


class RewardWindow:
    """Decisions waiting for ``h_window`` requests to elapse."""

    def __init__(self, h_window: int):
        if h_window <= 0:
            raise ValueError("h_window must be positive")
        self.h_window = h_window
        self.queue: deque[_Pending] = deque()

    def __len__(self) -> int:
        return len(self.queue)

    def add(self, p: _Pending) -> None:
        self.queue.append(p)

    def pop_elapsed(self, now: int):
        q = self.queue
        while q and now - q[0].index >= self.h_window:
            yield q.popleft()

    def pop_all(self):
        while self.queue:
            yield self.queue.popleft()


class _Agent:
    """Online/target network pair with its replay memory and optimiser."""

    def __init__(self, n_inputs, hidden, lr, replay_capacity, seed):
        ss = np.random.SeedSequence(seed) if not isinstance(seed, np.random.SeedSequence) else seed
        net_seed, rng_seed = ss.spawn(2)
        self.online = Network((n_inputs, hidden[0], hidden[1], 2), seed=net_seed)
        self.target = Network(self.online.sizes)
        copy_parameters(self.online, self.target)
        self.adam = AdamState.for_network(self.online, lr=lr)
        self.replay = ReplayMemory(replay_capacity)
        self.rng = np.random.default_rng(rng_seed)
        self.train_steps = 0
        self.last_loss = math.nan

    def greedy(self, x: np.ndarray) -> int:
        q = self.online.forward(x)
        return 0 if q[0] >= q[1] else 1


class DQNCache(Policy):
    name = "dqn"

    def __init__(
        self,
        *,
        k: int = 50_000,
        h_window_addition: int = 100_000,
        h_window_eviction: int = 200_000,
        scan_period: int = 1000,
        warmup_addition: int = 5000,
        warmup_eviction: int = 50,
        replay_capacity: int = 100_000,
        batch_size: int = 32,
        gamma: float = 0.95,
        lr: float = 1e-3,
        hidden: tuple[int, int] = (32, 32),
        target_sync: int = 1000,
        epsilon: EpsilonSchedule | None = None,
        reward_unit: float = GiB,
        data_types: tuple[str, ...] = DATA_TYPES,
        safety_margin: float = 0.05,
        seed: int | np.random.SeedSequence = 0,
        forced_addition: int | None = None,
        forced_eviction: int | None = None,
        record_decisions: bool = False,
    ):
        for name, v in (("k", k), ("scan_period", scan_period), ("batch_size", batch_size),
                        ("target_sync", target_sync)):
            if v <= 0:
                raise ValueError(f"{name} must be positive")
        self.k = k
        self.scan_period = scan_period
        self.warmup_addition = warmup_addition
        self.warmup_eviction = warmup_eviction
        self.batch_size = batch_size
        self.gamma = gamma
        self.target_sync = target_sync
        self.epsilon = epsilon if epsilon is not None else EpsilonSchedule(1.0, 0.1, math.log(9) / 300_000)
        self.reward_unit = float(reward_unit)
        self.data_types = tuple(data_types)
        self._type_index = {t: i for i, t in enumerate(self.data_types)}
        self.safety_margin = safety_margin
        self.forced_addition = forced_addition
        self.forced_eviction = forced_eviction

        n_inputs = 5 + len(self.data_types)
        ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
        add_seed, evict_seed = ss.spawn(2)
        self.addition = _Agent(n_inputs, hidden, lr, replay_capacity, add_seed)
        self.eviction = _Agent(n_inputs, hidden, lr, replay_capacity, evict_seed)
        self.add_window = RewardWindow(h_window_addition)
        self.evict_window = RewardWindow(h_window_eviction)

        self._events: dict[str, list[tuple[int, bool]]] = {}
        self._pending_count: dict[str, int] = {}
        self._decided = False
        self.eviction_calls = 0
        self.safety_valve_runs = 0
        self.settled = 0
        self.record_decisions = record_decisions
        self.decisions: list[tuple[int, str, str, int, bool]] = []  # (request, agent, file, action, explored)

    # -- state --------------------------------------------------------

    def raw_state(self, size, n, dt_days, data_type) -> DqnState:
        cache = self.sim.cache
        return DqnState(
            float(size), float(n), -1.0 if dt_days is None else float(dt_days),
            float(self._type_index.get(data_type, -1)), cache.occupancy_fraction, cache.hit_rate,
        )

    def encode(self, state: DqnState) -> np.ndarray:
        """Scalar twin of :func:`encode_states` for the per-decision path."""
        nt = len(self.data_types)
        x = np.zeros(5 + nt)
        x[0] = math.log10(max(state.size, 1.0)) / 12.0
        x[1] = math.log2(1.0 + state.n) / 10.0
        x[2] = 1.0 if state.dt_days < 0 else min(state.dt_days / 7.0, 1.0)
        t = int(state.dtype)
        if 0 <= t < nt:
            x[3 + t] = 1.0
        x[3 + nt] = state.oc
        x[4 + nt] = state.hr
        return x

    def _choose(self, agent: _Agent, state: DqnState, warm: bool, forced: int | None) -> tuple[int, bool]:
        if forced is not None:
            return forced, False
        eps = self.epsilon.value_at(self.sim.requests)
        if warm or agent.rng.random() < eps:
            return int(agent.rng.integers(2)), True
        return agent.greedy(self.encode(state)), False

    def _track(self, fid: str) -> None:
        self._pending_count[fid] = self._pending_count.get(fid, 0) + 1
        self._events.setdefault(fid, [])

    # -- addition agent -----------------------------------------------

    def admit(self, req, stats) -> bool:
        sim = self.sim
        state = self.raw_state(stats.size, stats.n, stats.dt_days, stats.data_type)
        warm = sim.requests < self.warmup_addition
        action, explored = self._choose(self.addition, state, warm, self.forced_addition)
        self.add_window.add(_Pending(req.file_id, sim.requests, state, action))
        self._track(req.file_id)
        self._decided = True
        if self.record_decisions:
            self.decisions.append((sim.requests, "addition", req.file_id, action, explored))
        return action == STORE

    def after_request(self, req, stats, outcome) -> None:
        sim = self.sim
        fid = req.file_id
        events = self._events.get(fid)
        if events is not None:
            events.append((sim.requests, outcome is Outcome.HIT))
        if self._decided:
            self._decided = False
            if sim.requests > self.warmup_addition:
                self._train(self.addition)
        if sim.requests % self.k == 0:
            self.eviction_pass(for_space=False)
        if sim.requests % self.scan_period == 0:
            self.scan(sim.requests)

    # -- eviction agent -----------------------------------------------

    def free_space(self, incoming: int) -> int:
        return self.eviction_pass(for_space=True, incoming=incoming)

    def eviction_pass(self, for_space: bool = False, incoming: int = 0) -> int:
        sim = self.sim
        cache = sim.cache
        self.eviction_calls += 1
        warm = self.eviction_calls <= self.warmup_eviction
        train = not warm
        day, tick, now = sim.day, sim.tick, sim.requests
        view = sim.stats.view
        freed = 0
        files = sorted(cache.stored, key=lambda f: cache.stored[f].insertion_tick)
        for fid in files:
            st = view(fid, day, tick)
            state = self.raw_state(st.size, st.n, st.dt_days, st.data_type)
            action, explored = self._choose(self.eviction, state, warm, self.forced_eviction)
            self.evict_window.add(_Pending(fid, now, state, action))
            self._track(fid)
            if self.record_decisions:
                self.decisions.append((now, "eviction", fid, action, explored))
            if action == NOT_KEEP:
                freed += sim.evict(fid)
            if train:
                self._train(self.eviction)
        if for_space or sim.needs_space(incoming):
            freed += self._safety_valve(incoming)
            sim.record_eviction_event("high")
        return freed

    def _safety_valve(self, incoming: int) -> int:
        sim = self.sim
        cache = sim.cache
        if not sim.needs_space(incoming):
            return 0
        self.safety_valve_runs += 1
        target = (cache.w_high - self.safety_margin) * cache.capacity
        freed = 0
        for fid in list(cache.stored):  # least recently used first
            if cache.occupancy <= target and cache.occupancy + incoming <= cache.capacity:
                break
            freed += sim.evict(fid)
        return freed

    # -- rewards and training -----------------------------------------

    def scan(self, now: int) -> int:
        n = 0
        for agent, window in ((self.addition, self.add_window), (self.eviction, self.evict_window)):
            for p in window.pop_elapsed(now):
                self._settle(agent, p, p.index + window.h_window)
                n += 1
        return n

    def _settle(self, agent: _Agent, p: _Pending, horizon: int) -> None:
        events = self._events.get(p.file_id, ())
        idx = [e[0] for e in events]
        lo = bisect_right(idx, p.index)
        hi = bisect_right(idx, horizon)
        n_hit = sum(1 for e in events[lo:hi] if e[1])
        n_miss = (hi - lo) - n_hit
        r = dqn_reward(p.action, n_hit, n_miss, p.state.size) / self.reward_unit
        cache = self.sim.cache
        s2 = p.state.next_state(cache.occupancy_fraction, cache.hit_rate)
        agent.replay.append(p.state, p.action, r, s2)
        self.settled += 1
        c = self._pending_count[p.file_id] - 1
        if c:
            self._pending_count[p.file_id] = c
            # drop events no remaining decision of this file can see
            oldest = min(self._oldest_pending_index(p.file_id), p.index)
            cut = bisect_right(idx, oldest)
            if cut:
                del events[:cut]
        else:
            del self._pending_count[p.file_id]
            self._events.pop(p.file_id, None)

    def _oldest_pending_index(self, fid: str) -> int:
        # both windows are FIFO; the head of each is the oldest outstanding decision
        heads = [w.queue[0].index for w in (self.add_window, self.evict_window) if w.queue]
        return min(heads) if heads else 0

    def _train(self, agent: _Agent) -> None:
        if len(agent.replay) < self.batch_size:
            return
        S, A, R, S2 = agent.replay.sample(agent.rng, self.batch_size)
        n_types = len(self.data_types)
        X = encode_states(S, n_types)
        q_next = agent.target.forward(encode_states(S2, n_types))
        y = R + self.gamma * q_next.max(axis=1)
        T = np.zeros((self.batch_size, 2))
        M = np.zeros((self.batch_size, 2))
        rows = np.arange(self.batch_size)
        T[rows, A] = y
        M[rows, A] = 1.0
        agent.last_loss = train_batch(agent.online, agent.adam, X, T, M)
        agent.train_steps += 1
        if agent.train_steps % self.target_sync == 0:
            copy_parameters(agent.online, agent.target)

    def finish(self) -> None:
        for agent, window in ((self.addition, self.add_window), (self.eviction, self.evict_window)):
            for p in window.pop_all():
                self._settle(agent, p, p.index + window.h_window)

    # -- checkpoints --------------------------------------------------

    def save_checkpoint(self, directory: str | Path) -> None:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        self.addition.online.save(d / "addition.npz", self.addition.adam)
        self.eviction.online.save(d / "eviction.npz", self.eviction.adam)
        meta = {
            "addition_replay_size": len(self.addition.replay),
            "eviction_replay_size": len(self.eviction.replay),
            "addition_train_steps": self.addition.train_steps,
            "eviction_train_steps": self.eviction.train_steps,
        }
        (d / "dqn_meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")

    def load_checkpoint(self, directory: str | Path) -> dict:
        d = Path(directory)
        for agent, fname in ((self.addition, "addition.npz"), (self.eviction, "eviction.npz")):
            net, adam = Network.load(d / fname)
            copy_parameters(net, agent.online)
            copy_parameters(net, agent.target)
            if adam is not None:
                agent.adam = adam
        return json.loads((d / "dqn_meta.json").read_text())
