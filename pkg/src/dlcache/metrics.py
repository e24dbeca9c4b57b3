"""Throughput, Cost and Score, normalized by an infinite write-everything cache.

TP = RHD / RHD_inf, Cost = (WD + DD) / (2 * WD_inf), Score = TP / Cost.
Ratios with a zero denominator are reported as ``None`` and listed under
``undefined`` instead of becoming NaN.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

from .cache import Accounting, DayRow
from .trace import Request

CSV_HEADER = ("policy", "capacity", "score", "throughput", "cost", "rhd", "rhm", "wd", "dd")


@dataclass(frozen=True)
class OracleResult:
    rhd_inf: int
    wd_inf: int
    requests: int
    total_bytes: int
    daily_rhd_inf: dict[int, int] = field(default_factory=dict)
    daily_wd_inf: dict[int, int] = field(default_factory=dict)

    @property
    def empty(self) -> bool:
        return self.requests == 0

    @property
    def flags(self) -> list[str]:
        out = []
        if self.empty:
            out.append("empty-trace")
        if self.rhd_inf == 0:
            out.append("rhd_inf-zero")
        if self.wd_inf == 0:
            out.append("wd_inf-zero")
        return out

    def to_dict(self) -> dict:
        return {
            "rhd_inf": self.rhd_inf,
            "wd_inf": self.wd_inf,
            "requests": self.requests,
            "total_bytes": self.total_bytes,
            "flags": self.flags,
        }


def infinite_cache_oracle(requests: Iterable[Request]) -> OracleResult:
    """One pass of write-everything with unlimited capacity: the first request
    of each file is written, every later one is a hit."""
    seen: set[str] = set()
    rhd = wd = n = total = 0
    d_rhd: dict[int, int] = {}
    d_wd: dict[int, int] = {}
    for r in requests:
        n += 1
        total += r.size
        if r.file_id in seen:
            rhd += r.size
            d_rhd[r.day] = d_rhd.get(r.day, 0) + r.size
        else:
            seen.add(r.file_id)
            wd += r.size
            d_wd[r.day] = d_wd.get(r.day, 0) + r.size
    return OracleResult(rhd, wd, n, total, d_rhd, d_wd)


def _ratio(num: float, den: float) -> float | None:
    return num / den if den > 0 else None


def throughput(rhd: float, rhd_inf: float) -> float | None:
    return _ratio(rhd, rhd_inf)


def cost(wd: float, dd: float, wd_inf: float) -> float | None:
    return _ratio(wd + dd, 2 * wd_inf)


def score(tp: float | None, c: float | None) -> float | None:
    if tp is None or c is None:
        return None
    return _ratio(tp, c)


def _triple(rhd, wd, dd, rhd_inf, wd_inf) -> tuple:
    tp = throughput(rhd, rhd_inf)
    c = cost(wd, dd, wd_inf)
    return tp, c, score(tp, c)


def _mean(xs: Sequence[float | None]) -> float | None:
    vals = [x for x in xs if x is not None]
    return sum(vals) / len(vals) if vals else None


@dataclass
class MetricsReport:
    policy: str
    capacity: int | None
    throughput: float | None
    cost: float | None
    score: float | None
    rhd: int
    rhm: int
    wd: int
    dd: int
    rhd_inf: int
    wd_inf: int
    hits: int
    misses: int
    hit_rate: float | None
    undefined: list[str]
    daily_mean: dict[str, float | None]
    daily: list[dict]
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def csv_row(self) -> list:
        return [self.policy, self.capacity, self.score, self.throughput, self.cost,
                self.rhd, self.rhm, self.wd, self.dd]


def compute_report(
    acc: Accounting,
    oracle: OracleResult,
    *,
    policy: str = "",
    capacity: int | None = None,
    daily: Sequence[DayRow] = (),
) -> MetricsReport:
    """Whole-run metrics plus two per-day views.

    ``daily`` rows carry, per day, the cumulative ratios against full-trace
    oracle totals (``*_cum``) and that day's counters against that day's
    oracle counters.  ``daily_mean`` averages the latter over days where
    they are defined.
    """
    tp, c, s = _triple(acc.rhd, acc.wd, acc.dd, oracle.rhd_inf, oracle.wd_inf)
    undefined = [name for name, v in (("throughput", tp), ("cost", c), ("score", s)) if v is None]

    rows = []
    cum = [0, 0, 0]
    for row in daily:
        cum[0] += row.rhd
        cum[1] += row.wd
        cum[2] += row.dd
        ctp, cc, cs = _triple(*cum, oracle.rhd_inf, oracle.wd_inf)
        dtp, dc, ds = _triple(row.rhd, row.wd, row.dd,
                              oracle.daily_rhd_inf.get(row.day, 0), oracle.daily_wd_inf.get(row.day, 0))
        rows.append({
            "day": row.day,
            "throughput_cum": ctp, "cost_cum": cc, "score_cum": cs,
            "throughput": dtp, "cost": dc, "score": ds,
            "occupancy_eod": row.occupancy_eod, "hit_rate": row.hit_rate,
        })
    daily_mean = {k: _mean([r[k] for r in rows]) for k in ("throughput", "cost", "score")}
    reqs = acc.requests
    return MetricsReport(
        policy=policy,
        capacity=capacity,
        throughput=tp,
        cost=c,
        score=s,
        rhd=acc.rhd,
        rhm=acc.rhm,
        wd=acc.wd,
        dd=acc.dd,
        rhd_inf=oracle.rhd_inf,
        wd_inf=oracle.wd_inf,
        hits=acc.hits,
        misses=acc.misses,
        hit_rate=acc.hits / reqs if reqs else None,
        undefined=undefined,
        daily_mean=daily_mean,
        daily=rows,
    )
