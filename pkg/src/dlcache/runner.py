"""Build policies from configs, run them, and assemble comparison tables."""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .bandit import BinningScheme, EpsilonSchedule
from .baselines import WriteEverything
from .cache import DAILY_CSV_HEADER, Policy, Simulator
from .config import ConfigError, RunConfig
from .dqn import DQNCache
from .metrics import CSV_HEADER, MetricsReport, OracleResult, compute_report, infinite_cache_oracle
from .scdl import SCDL
from .scdl2 import SCDL2
from .trace import GiB, TiB, Request, generate_trace, read_trace

POLICY_IDS = (
    "we-lru",
    "we-lfu",
    "we-size-big",
    "we-size-small",
    "scdl",
    "scdl2-noeviction",
    "scdl2-onfree",
    "scdl2-ondayend",
    "scdl2-onk",
    "dqn",
)

_EPS_KEYS = ("eps_max", "eps_min", "eps_decay")
_TABULAR_KEYS = ("alpha", "gamma", "epsilon_clock") + _EPS_KEYS
_PARAMS = {
    "we": (),
    "scdl": _TABULAR_KEYS,
    "scdl2": _TABULAR_KEYS + ("k", "transition_basis"),
    "dqn": (
        "k", "h_window_addition", "h_window_eviction", "scan_period", "warmup_addition",
        "warmup_eviction", "replay_capacity", "batch_size", "gamma", "lr", "hidden1", "hidden2",
        "target_sync", "safety_margin", "reward_unit",
    ) + _EPS_KEYS,
}


def _family(policy_id: str) -> str:
    return policy_id.split("-", 1)[0]


def default_dqn_k(capacity: int, byte_scale: float = 1.0) -> int:
    """Eviction period proportional to capacity: 50 000 requests per 100 TiB (scaled)."""
    return max(1, round(50_000 * capacity / (100 * TiB * byte_scale)))


def _epsilon(params: dict, default_decay: float) -> EpsilonSchedule:
    return EpsilonSchedule(
        float(params.get("eps_max", 1.0)),
        float(params.get("eps_min", 0.1)),
        float(params.get("eps_decay", default_decay)),
    )


def make_policy(cfg: RunConfig, trace_length: int | None = None) -> Policy:
    pid = cfg.policy
    if pid not in POLICY_IDS:
        raise ConfigError(f"unknown policy {pid!r}; valid ids: {', '.join(POLICY_IDS)}")
    fam = _family(pid)
    params = dict(cfg.params)
    unknown = set(params) - set(_PARAMS[fam])
    if unknown:
        raise ConfigError(f"unknown parameters for {pid}: {sorted(unknown)}; valid: {sorted(_PARAMS[fam])}")
    seed = np.random.SeedSequence(cfg.seed)
    scheme = BinningScheme().scaled(cfg.byte_scale)

    if fam == "we":
        return WriteEverything(pid[3:])
    alpha = float(params.get("alpha", 0.5))
    if fam == "scdl":
        return SCDL(scheme=scheme, alpha=alpha, gamma=float(params.get("gamma", 0.5)),
                    epsilon=_epsilon(params, 7.3e-5), seed=seed,
                    epsilon_clock=params.get("epsilon_clock", "requests"))
    if fam == "scdl2":
        add_seed, evict_seed = seed.spawn(2)
        return SCDL2(
            pid[6:],
            k=int(params.get("k", 8192)),
            scheme=scheme,
            alpha=alpha,
            gamma=float(params.get("gamma", 0.5)),
            addition_epsilon=_epsilon(params, 7.3e-5),
            eviction_epsilon=_epsilon(params, 7.3e-5),
            seed=add_seed,
            transition_basis=params.get("transition_basis", "file"),
            epsilon_clock=params.get("epsilon_clock", "requests"),
        )
    # dqn: epsilon falls to ~0.2 halfway through the trace
    half = (trace_length or 600_000) / 2
    return DQNCache(
        k=int(params.get("k", default_dqn_k(cfg.capacity, cfg.byte_scale))),
        h_window_addition=int(params.get("h_window_addition", 100_000)),
        h_window_eviction=int(params.get("h_window_eviction", 200_000)),
        scan_period=int(params.get("scan_period", 1000)),
        warmup_addition=int(params.get("warmup_addition", 5000)),
        warmup_eviction=int(params.get("warmup_eviction", 50)),
        replay_capacity=int(params.get("replay_capacity", 100_000)),
        batch_size=int(params.get("batch_size", 32)),
        gamma=float(params.get("gamma", 0.95)),
        lr=float(params.get("lr", 1e-3)),
        hidden=(int(params.get("hidden1", 32)), int(params.get("hidden2", 32))),
        target_sync=int(params.get("target_sync", 1000)),
        epsilon=_epsilon(params, math.log(9) / half),
        reward_unit=float(params.get("reward_unit", GiB * cfg.byte_scale)),
        safety_margin=float(params.get("safety_margin", 0.05)),
        seed=seed,
    )


def load_requests(cfg: RunConfig) -> list[Request]:
    if cfg.trace_path is not None:
        return list(read_trace(cfg.trace_path, cfg.trace_format))
    return list(generate_trace(cfg.trace_spec()))


def _fmt(x) -> str:
    return "" if x is None else repr(x)


def write_daily_csv(path: Path, sim: Simulator) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(DAILY_CSV_HEADER)
        for row in sim.daily:
            w.writerow([_fmt(v) for v in row])


def dump_agents(policy: Policy, directory: Path) -> list[str]:
    """Persist learned state; returns the written file names."""
    written = []
    if isinstance(policy, SCDL):
        policy.table.dump_csv(directory / "qtable_addition.csv")
        written.append("qtable_addition.csv")
    elif isinstance(policy, SCDL2):
        policy.addition_table.dump_csv(directory / "qtable_addition.csv")
        policy.eviction_table.dump_csv(directory / "qtable_eviction.csv")
        written += ["qtable_addition.csv", "qtable_eviction.csv"]
    elif isinstance(policy, DQNCache):
        policy.save_checkpoint(directory / "checkpoint")
        written.append("checkpoint")
    return written


def _policy_extra(policy: Policy) -> dict:
    if isinstance(policy, SCDL):
        return {"decisions": policy.decisions, "rewards_applied": policy.rewards_applied,
                "states": len(policy.table.values)}
    if isinstance(policy, SCDL2):
        return {"eviction_calls": policy.eviction_calls,
                "addition_states": len(policy.addition_table.values),
                "eviction_states": len(policy.eviction_table.values)}
    if isinstance(policy, DQNCache):
        return {
            "eviction_calls": policy.eviction_calls,
            "safety_valve_runs": policy.safety_valve_runs,
            "settled": policy.settled,
            "addition_train_steps": policy.addition.train_steps,
            "eviction_train_steps": policy.eviction.train_steps,
            "addition_replay": len(policy.addition.replay),
            "eviction_replay": len(policy.eviction.replay),
        }
    return {}


def run(
    cfg: RunConfig,
    requests: Sequence[Request] | None = None,
    oracle: OracleResult | None = None,
    *,
    on_request: Callable[[Simulator, Request], None] | None = None,
) -> tuple[MetricsReport, Simulator]:
    """Simulate one config; writes artifacts when ``cfg.output_dir`` is set."""
    cfg.validate()
    if requests is None:
        requests = load_requests(cfg)
    if oracle is None:
        oracle = infinite_cache_oracle(requests)
    policy = make_policy(cfg, len(requests))
    sim = Simulator(cfg.capacity, policy, w_high=cfg.w_high, w_low=cfg.w_low,
                    bandwidth_limit=cfg.bandwidth_limit, hit_rate_window=cfg.hit_rate_window)
    for req in requests:
        sim.process_request(req)
        if on_request is not None:
            on_request(sim, req)
    sim.finish()
    report = compute_report(sim.acc, oracle, policy=cfg.policy, capacity=cfg.capacity, daily=sim.daily)
    report.extra = {
        "config": cfg.to_dict(),
        "oracle_flags": oracle.flags,
        "peak_occupancy": sim.peak_occupancy,
        "post_eviction_peak": dict(sim.post_eviction_peak),
        "eviction_events": dict(sim.eviction_events),
        "policy": _policy_extra(policy),
    }
    if cfg.output_dir is not None:
        out = Path(cfg.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_daily_csv(out / "daily.csv", sim)
        report.extra["artifacts"] = ["daily.csv", *dump_agents(policy, out)]
        (out / "report.json").write_text(report.to_json())
    return report, sim


TABLE_HEADER = CSV_HEADER + ("best", "error")


def sweep(configs: Sequence[RunConfig], output_dir: str | Path | None = None,
          requests: Sequence[Request] | None = None) -> list[dict]:
    """Run every config against one shared trace; rows sorted by Score, best first.

    A config that fails still yields a row, with its error message set.
    """
    if not configs:
        raise ConfigError("sweep needs at least one config")
    keys = {c.trace_key() for c in configs}
    if len(keys) > 1:
        raise ConfigError("all configs in a sweep must read the same trace")
    if requests is None:
        requests = load_requests(configs[0])
    oracle = infinite_cache_oracle(requests)
    rows = []
    for cfg in configs:
        row = {k: None for k in TABLE_HEADER}
        row.update(policy=cfg.policy, capacity=cfg.capacity, best="", error="")
        try:
            if output_dir is not None:
                cfg = RunConfig.from_dict(dict(cfg.to_dict(), output_dir=str(
                    Path(output_dir) / f"{cfg.policy}_{cfg.capacity}")))
            report, _ = run(cfg, requests, oracle)
            for k in ("score", "throughput", "cost", "rhd", "rhm", "wd", "dd"):
                row[k] = getattr(report, k)
        except Exception as exc:  # noqa: BLE001 - a failed run becomes a marked row
            row["error"] = f"{type(exc).__name__}: {exc}"
        rows.append(row)

    rows.sort(key=lambda r: (r["score"] is None, -(r["score"] or 0.0)))
    _flag_best(rows)
    if output_dir is not None:
        out = Path(output_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_table(out / "table.csv", rows)
    return rows


def _flag_best(rows: list[dict]) -> None:
    for metric, pick in (("score", max), ("throughput", max), ("cost", min)):
        vals = [r[metric] for r in rows if r[metric] is not None]
        if not vals:
            continue
        best = pick(vals)
        for r in rows:
            if r[metric] == best:
                r["best"] = ";".join(filter(None, [r["best"], metric]))


def write_table(path: Path, rows: list[dict]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TABLE_HEADER)
        for r in rows:
            w.writerow([_fmt(r[k]) if not isinstance(r[k], str) else r[k] for k in TABLE_HEADER])


def oracle_summary(cfg: RunConfig) -> dict:
    return infinite_cache_oracle(load_requests(cfg)).to_dict()


def report_json(report: MetricsReport) -> str:
    return json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n"
