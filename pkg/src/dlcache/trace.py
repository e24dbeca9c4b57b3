"""Request traces: CSV ingestion and a seeded synthetic generator.

A trace is an ordered stream of :class:`Request` records.  The tick is the
request's position in the stream; it is never stored on disk.

CSV schema (UTF-8, header required)::

    day,file_id,size_bytes,data_type,user_id,site_id
"""
from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Iterable, Iterator, NamedTuple

import numpy as np

CSV_HEADER = ("day", "file_id", "size_bytes", "data_type", "user_id", "site_id")
DATA_TYPES = ("data", "mc", "user")

KiB = 1024
MiB = 1024**2
GiB = 1024**3
TiB = 1024**4


class TraceError(ValueError):
    """Raised for malformed or inconsistent trace input."""


class Request(NamedTuple):
    tick: int
    day: int
    file_id: str
    size: int
    data_type: str
    user_id: str = "u0"
    site_id: str = "s0"


@dataclass(frozen=True)
class TraceSpec:
    """Parameters of a synthetic trace.

    Popularity is a truncated Zipf law over ``num_distinct_files`` ranks.  With
    ``drift_days > 0`` the rank-to-file permutation is redrawn every
    ``drift_days`` days, so yesterday's hot files are mostly cold today.
    File sizes are log-normal around ``size_median`` bytes.
    """

    num_days: int = 30
    requests_per_day: int = 20_000
    num_distinct_files: int = 100_000
    popularity_skew: float = 1.0
    size_median: float = 2 * GiB
    size_sigma: float = 1.0
    data_types: tuple[str, ...] = DATA_TYPES
    data_type_weights: tuple[float, ...] = (0.6, 0.3, 0.1)
    drift_days: int = 0
    num_users: int = 200
    num_sites: int = 10
    rng_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "data_types", tuple(self.data_types))
        object.__setattr__(self, "data_type_weights", tuple(float(w) for w in self.data_type_weights))

    def validate(self) -> None:
        if self.num_days <= 0:
            raise TraceError("num_days must be positive")
        if self.requests_per_day <= 0:
            raise TraceError("requests_per_day must be positive")
        if self.num_distinct_files <= 0:
            raise TraceError("num_distinct_files must be positive")
        if self.popularity_skew < 0:
            raise TraceError("popularity_skew must be >= 0")
        if self.size_median < 1 or self.size_sigma < 0:
            raise TraceError("size distribution needs median >= 1 byte and sigma >= 0")
        if len(self.data_types) != len(self.data_type_weights) or not self.data_types:
            raise TraceError("data_types and data_type_weights must have equal, non-zero length")
        if any(w < 0 for w in self.data_type_weights):
            raise TraceError("data_type_weights must be non-negative")
        if abs(sum(self.data_type_weights) - 1.0) > 1e-9:
            raise TraceError("data_type_weights must sum to 1")
        if self.drift_days < 0:
            raise TraceError("drift_days must be >= 0")
        if self.num_users <= 0 or self.num_sites <= 0:
            raise TraceError("num_users and num_sites must be positive")

    @property
    def total_requests(self) -> int:
        return self.num_days * self.requests_per_day

    def to_dict(self) -> dict:
        d = asdict(self)
        d["data_types"] = list(self.data_types)
        d["data_type_weights"] = list(self.data_type_weights)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TraceSpec":
        return cls(**d)


# Desk-scale stand-in for the CMS 2018 workload: byte sizes are scaled by 1/1000
# (HEP files of ~2 GB become ~2 MB) so that the 100 TiB..1000 TiB cache grid maps
# onto 100 GiB..1000 GiB.  Skew and file universe were tuned so that files
# requested more than once are requested ~5 times on average.
PRESETS: dict[str, TraceSpec] = {
    "paper-like": TraceSpec(
        num_days=30,
        requests_per_day=20_000,
        num_distinct_files=2_000_000,
        popularity_skew=0.9,
        size_median=2 * MiB,
        size_sigma=0.9,
        drift_days=1,
        rng_seed=2018,
    ),
    "small": TraceSpec(
        num_days=5,
        requests_per_day=2_000,
        num_distinct_files=5_000,
        popularity_skew=0.9,
        size_median=2 * MiB,
        size_sigma=0.9,
        drift_days=1,
        rng_seed=7,
    ),
}


def preset(name: str, **overrides) -> TraceSpec:
    try:
        spec = PRESETS[name]
    except KeyError:
        raise TraceError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
    return replace(spec, **overrides) if overrides else spec


def zipf_weights(n: int, skew: float) -> np.ndarray:
    ranks = np.arange(1, n + 1, dtype=np.float64)
    w = ranks ** (-skew)
    return w / w.sum()


@dataclass
class TraceArrays:
    """Columnar form of a generated trace (one row per request)."""

    day: np.ndarray
    file_index: np.ndarray
    file_sizes: np.ndarray  # indexed by file_index
    file_types: np.ndarray  # indexed by file_index
    user: np.ndarray
    site: np.ndarray
    data_types: tuple[str, ...] = field(default=DATA_TYPES)

    def __len__(self) -> int:
        return len(self.day)


def generate_arrays(spec: TraceSpec) -> TraceArrays:
    spec.validate()
    rng = np.random.default_rng(spec.rng_seed)
    n_files = spec.num_distinct_files

    mu = math.log(spec.size_median)
    sizes = np.maximum(1, np.rint(rng.lognormal(mu, spec.size_sigma, n_files))).astype(np.int64)
    type_cdf = np.cumsum(spec.data_type_weights)
    types = np.searchsorted(type_cdf, rng.random(n_files), side="right")
    types = np.minimum(types, len(spec.data_types) - 1).astype(np.int64)

    cdf = np.cumsum(zipf_weights(n_files, spec.popularity_skew))
    cdf[-1] = 1.0
    rpd = spec.requests_per_day
    total = spec.total_requests
    file_index = np.empty(total, dtype=np.int64)
    perm = rng.permutation(n_files)
    for d in range(spec.num_days):
        if spec.drift_days and d > 0 and d % spec.drift_days == 0:
            perm = rng.permutation(n_files)
        ranks = np.searchsorted(cdf, rng.random(rpd), side="right")
        file_index[d * rpd:(d + 1) * rpd] = perm[np.minimum(ranks, n_files - 1)]

    day = np.repeat(np.arange(spec.num_days, dtype=np.int64), rpd)
    user = rng.integers(0, spec.num_users, total)
    site = rng.integers(0, spec.num_sites, total)
    return TraceArrays(day, file_index, sizes, types, user, site, spec.data_types)


def iter_arrays(arr: TraceArrays) -> Iterator[Request]:
    sizes = arr.file_sizes.tolist()
    types = [arr.data_types[t] for t in arr.file_types.tolist()]
    for tick, (d, f, u, s) in enumerate(
        zip(arr.day.tolist(), arr.file_index.tolist(), arr.user.tolist(), arr.site.tolist())
    ):
        yield Request(tick, d, f"f{f}", sizes[f], types[f], f"u{u}", f"s{s}")


def generate_trace(spec: TraceSpec) -> Iterator[Request]:
    """Yield the requests of a synthetic trace; a pure function of ``spec``."""
    return iter_arrays(generate_arrays(spec))


def read_trace(path: str | Path, format: str = "csv") -> Iterator[Request]:
    """Stream requests from a CSV trace, validating as it goes.

    Row numbers in error messages are file line numbers (the header is row 1).
    """
    if format != "csv":
        raise TraceError(f"unsupported trace format {format!r}")
    path = Path(path)
    if not path.exists():
        raise TraceError(f"trace file not found: {path}")
    return _read_csv(path)


def _read_csv(path: Path) -> Iterator[Request]:
    seen: dict[str, tuple[int, str]] = {}
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != CSV_HEADER:
            raise TraceError(f"bad header in {path}: expected {','.join(CSV_HEADER)}")
        last_day = -1
        tick = 0
        for row_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(CSV_HEADER):
                raise TraceError(f"expected {len(CSV_HEADER)} fields, got {len(row)}, row {row_no}")
            day_s, file_id, size_s, data_type, user_id, site_id = (c.strip() for c in row)
            try:
                day = int(day_s)
            except ValueError:
                raise TraceError(f"day must be an integer, row {row_no}") from None
            if day < 0:
                raise TraceError(f"day must be non-negative, row {row_no}")
            if day < last_day:
                raise TraceError(f"day must be non-decreasing, row {row_no}")
            try:
                size = int(size_s)
            except ValueError:
                raise TraceError(f"size_bytes must be an integer, row {row_no}") from None
            if size <= 0:
                raise TraceError(f"size must be positive, row {row_no}")
            if not file_id:
                raise TraceError(f"file_id must be non-empty, row {row_no}")
            if not data_type:
                raise TraceError(f"data_type must be non-empty, row {row_no}")
            prev = seen.get(file_id)
            if prev is None:
                seen[file_id] = (size, data_type)
            elif prev != (size, data_type):
                raise TraceError(
                    f"file {file_id!r} changes size/data_type "
                    f"({prev[0]},{prev[1]} -> {size},{data_type}), row {row_no}"
                )
            last_day = day
            yield Request(tick, day, file_id, size, data_type, user_id, site_id)
            tick += 1


def write_trace(requests: Iterable[Request], path: str | Path) -> int:
    """Write requests as CSV; returns the number of rows written."""
    n = 0
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in requests:
            w.writerow((r.day, r.file_id, r.size, r.data_type, r.user_id, r.site_id))
            n += 1
    return n


def requests_per_file_stats(requests: Iterable[Request]) -> dict:
    """Summary used to calibrate presets against the target workload shape."""
    counts: dict[str, int] = {}
    total = 0
    for r in requests:
        counts[r.file_id] = counts.get(r.file_id, 0) + 1
        total += 1
    multi = [c for c in counts.values() if c > 1]
    return {
        "requests": total,
        "distinct_files": len(counts),
        "multi_request_files": len(multi),
        "mean_requests_multi": (sum(multi) / len(multi)) if multi else 0.0,
        "unique_fraction": (len(counts) - len(multi)) / max(total, 1),
    }
