"""Tabular Q-learning pieces shared by the SCDL-family agents."""
from __future__ import annotations

import csv
import math
from bisect import bisect_right
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Hashable, Sequence

import numpy as np

from .cache import CacheState, FileStats
from .trace import GiB, MiB

DT_NEVER = -1

State = tuple[int, ...]


def _strictly_ascending(edges: Sequence[float]) -> bool:
    return all(a < b for a, b in zip(edges, edges[1:]))


def bin_value(value: float, edges: Sequence[float]) -> int:
    """Index of the bin holding ``value``; ``len(edges) + 1`` bins, clamped at both ends."""
    return bisect_right(edges, value)


def bin_fraction(x: float, bins: int) -> int:
    return min(max(int(x * bins), 0), bins - 1)


@dataclass(frozen=True)
class BinningScheme:
    size_edges: tuple[float, ...] = (100 * MiB, 500 * MiB, 1 * GiB, 2 * GiB, 4 * GiB)
    freq_edges: tuple[float, ...] = (2, 3, 4, 8, 16)
    dt_edges: tuple[float, ...] = (1, 2, 3, 4, 5, 6)
    occupancy_bins: int = 10
    hitrate_bins: int = 10
    cat_occupancy_edges: tuple[float, ...] = (0.01, 0.05, 0.10, 0.25)

    def __post_init__(self):
        for name in ("size_edges", "freq_edges", "dt_edges", "cat_occupancy_edges"):
            edges = tuple(getattr(self, name))
            object.__setattr__(self, name, edges)
            if not _strictly_ascending(edges):
                raise ValueError(f"{name} must be strictly ascending")
        if self.occupancy_bins < 1 or self.hitrate_bins < 1:
            raise ValueError("occupancy_bins and hitrate_bins must be >= 1")

    def scaled(self, byte_scale: float) -> "BinningScheme":
        """Same scheme with the size edges multiplied by ``byte_scale``."""
        return BinningScheme(
            tuple(e * byte_scale for e in self.size_edges),
            self.freq_edges,
            self.dt_edges,
            self.occupancy_bins,
            self.hitrate_bins,
            self.cat_occupancy_edges,
        )

    def size_bin(self, size: float) -> int:
        return bin_value(size, self.size_edges)

    def freq_bin(self, n: float) -> int:
        return bin_value(n, self.freq_edges)

    def dt_bin(self, dt_days: int | None) -> int:
        return DT_NEVER if dt_days is None else bin_value(dt_days, self.dt_edges)

    def file_key(self, stats: FileStats) -> State:
        return self.key(stats.size, stats.n, stats.dt_days)

    def key(self, size: float, n: float, dt_days: int | None) -> State:
        return (
            bisect_right(self.size_edges, size),
            bisect_right(self.freq_edges, n),
            DT_NEVER if dt_days is None else bisect_right(self.dt_edges, dt_days),
        )


def bin_addition_state(stats: FileStats, cache: CacheState | None, variant: str,
                       scheme: BinningScheme) -> State:
    """Discrete addition state: 3 bins for ``scdl``, plus occupancy and hit rate for ``scdl2``."""
    key = scheme.file_key(stats)
    if variant == "scdl":
        return key
    if variant == "scdl2":
        return key + (
            bin_fraction(cache.occupancy_fraction, scheme.occupancy_bins),
            bin_fraction(cache.hit_rate, scheme.hitrate_bins),
        )
    raise ValueError(f"unknown variant {variant!r}")


def bin_eviction_state(category_key: State, category_bytes: int, cache: CacheState,
                       scheme: BinningScheme) -> State:
    return category_key + (
        bin_value(category_bytes / cache.capacity, scheme.cat_occupancy_edges),
        bin_fraction(cache.occupancy_fraction, scheme.occupancy_bins),
        bin_fraction(cache.hit_rate, scheme.hitrate_bins),
    )


class QTable:
    """state -> action values, materialised at zero on first touch."""

    def __init__(self, n_actions: int):
        self.n_actions = n_actions
        self.values: dict[Hashable, np.ndarray] = {}
        self.visits: dict[Hashable, np.ndarray] = {}

    def __len__(self) -> int:
        return len(self.values)

    def __getitem__(self, state) -> np.ndarray:
        q = self.values.get(state)
        if q is None:
            q = self.values[state] = np.zeros(self.n_actions)
            self.visits[state] = np.zeros(self.n_actions, dtype=np.int64)
        return q

    def greedy(self, state) -> int:
        # np.argmax returns the first maximum: ties go to the lowest action index
        return int(np.argmax(self[state]))

    def dump_csv(self, path: str | Path) -> None:
        """Write ``state_0..state_k,action,visits,q_value`` rows."""
        states = list(self.values)
        width = max((len(s) for s in states), default=0)
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow([f"state_{i}" for i in range(width)] + ["action", "visits", "q_value"])
            for s in states:
                q = self.values[s]
                v = self.visits[s]
                for a in range(self.n_actions):
                    w.writerow(list(s) + [a, int(v[a]), repr(float(q[a]))])

    @classmethod
    def load_csv(cls, path: str | Path, n_actions: int) -> "QTable":
        table = cls(n_actions)
        with Path(path).open(newline="") as fh:
            r = csv.reader(fh)
            header = next(r)
            width = len(header) - 3
            for row in r:
                s = tuple(int(x) for x in row[:width])
                a = int(row[width])
                table[s]
                table.visits[s][a] = int(row[width + 1])
                table.values[s][a] = float(row[width + 2])
        return table


@dataclass
class EpsilonSchedule:
    """eps(t) = eps_min + (eps_max - eps_min) * exp(-decay * t)

    ``t`` counts decisions.  With a ``clock`` (e.g. the simulator's request
    counter) the schedule is read off that clock instead, so agents that
    decide rarely still anneal on the same timeline as the workload.
    """

    eps_max: float = 1.0
    eps_min: float = 0.1
    decay: float = 1e-4
    t: int = 0
    clock: Callable[[], float] | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if not 0 <= self.eps_min <= self.eps_max <= 1:
            raise ValueError("need 0 <= eps_min <= eps_max <= 1")
        if self.decay < 0:
            raise ValueError("decay must be non-negative")

    def value_at(self, t: float) -> float:
        return self.eps_min + (self.eps_max - self.eps_min) * math.exp(-self.decay * t)

    @property
    def value(self) -> float:
        return self.value_at(self.t if self.clock is None else self.clock())

    def step(self) -> float:
        eps = self.value
        self.t += 1
        return eps


def attach_clock(schedule, clock: Callable[[], float]) -> None:
    """Drive ``schedule`` by ``clock`` unless it is fixed or already clocked."""
    if isinstance(schedule, EpsilonSchedule) and schedule.clock is None:
        schedule.clock = clock


@dataclass
class FixedEpsilon:
    """Constant exploration rate; handy for forcing greedy (0) or random (1) play."""

    eps: float
    t: int = field(default=0)

    def value_at(self, t: float) -> float:
        return self.eps

    @property
    def value(self) -> float:
        return self.eps

    def step(self) -> float:
        self.t += 1
        return self.eps


def select_action(table: QTable, state, schedule, rng: np.random.Generator) -> int:
    """epsilon-greedy choice; advances the schedule by one decision."""
    eps = schedule.step()
    if rng.random() < eps:
        return int(rng.integers(table.n_actions))
    return table.greedy(state)


def q_update(table: QTable, s, a: int, r: float, s_next, alpha: float, gamma: float) -> float:
    """One Q-learning step; returns the new Q(s, a)."""
    if not math.isfinite(r):
        raise ValueError(f"non-finite reward {r!r}")
    if not 0 < alpha <= 1 or not 0 <= gamma <= 1:
        raise ValueError("need alpha in (0, 1] and gamma in [0, 1]")
    q = table[s]
    target = r + gamma * float(np.max(table[s_next]))
    q[a] += alpha * (target - q[a])
    table.visits[s][a] += 1
    return float(q[a])
