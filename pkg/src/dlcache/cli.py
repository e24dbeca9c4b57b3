"""Command line entry point: ``dlcache {run,sweep,gen-trace,oracle}``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .config import ConfigError, RunConfig, load_configs, parse_size
from .runner import POLICY_IDS, oracle_summary, run, sweep
from .trace import PRESETS, TraceError, generate_trace, preset, read_trace, write_trace

log = logging.getLogger("dlcache")


def _coerce(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _parse_kv(items) -> dict:
    out = {}
    for item in items or ():
        key, sep, value = item.partition("=")
        if not sep or not key:
            raise ConfigError(f"expected key=value, got {item!r}")
        out[key.strip()] = _coerce(value.strip())
    return out


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--trace", help="CSV trace file")
    p.add_argument("--preset", choices=sorted(PRESETS), help="synthetic trace preset")
    p.add_argument("--trace-param", action="append", metavar="KEY=VALUE",
                   help="override a preset field (repeatable)")
    p.add_argument("--param", action="append", metavar="KEY=VALUE",
                   help="policy parameter (repeatable)")
    p.add_argument("--w-high", type=float)
    p.add_argument("--w-low", type=float)
    p.add_argument("--bandwidth-limit", help="daily bytes served from cache, e.g. 50GiB")
    p.add_argument("--hit-rate-window", type=int)
    p.add_argument("--byte-scale", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output directory")


def _overrides(args) -> dict:
    o = {}
    if args.trace:
        o.update(trace_path=args.trace, trace_preset=None)
    if args.preset:
        o.update(trace_preset=args.preset, trace_path=None)
    for attr in ("w_high", "w_low", "hit_rate_window", "byte_scale", "seed"):
        v = getattr(args, attr)
        if v is not None:
            o[attr] = v
    if args.bandwidth_limit is not None:
        o["bandwidth_limit"] = parse_size(args.bandwidth_limit)
    if args.out:
        o["output_dir"] = args.out
    return o


def _merge(base: dict, args) -> RunConfig:
    d = dict(base)
    d.update(_overrides(args))
    tp = _parse_kv(args.trace_param)
    if tp:
        d["trace_overrides"] = {**d.get("trace_overrides", {}), **tp}
    pp = _parse_kv(args.param)
    if pp:
        d["params"] = {**d.get("params", {}), **pp}
    if not d.get("trace_path") and not d.get("trace_preset"):
        d["trace_preset"] = "paper-like"
    if d.get("trace_preset"):
        # presets carry byte sizes scaled down by 1000
        d.setdefault("byte_scale", 0.001)
    return RunConfig.from_dict(d)


def cmd_run(args) -> int:
    base = load_configs(args.config)[0] if args.config else {}
    if args.policy:
        base["policy"] = args.policy
    if args.capacity:
        base["capacity"] = args.capacity
    if "policy" not in base or "capacity" not in base:
        raise ConfigError("run needs a policy and a capacity (flags or config)")
    cfg = _merge(base, args)
    report, _ = run(cfg)
    if cfg.output_dir is None:
        sys.stdout.write(report.to_json())
    else:
        log.info("wrote %s", Path(cfg.output_dir) / "report.json")
        print(f"{report.policy} capacity={report.capacity} score={report.score} "
              f"throughput={report.throughput} cost={report.cost}")
    return 0


def cmd_sweep(args) -> int:
    bases = load_configs(args.config) if args.config else [{}]
    policies = args.policies.split(",") if args.policies else None
    capacities = args.capacities.split(",") if args.capacities else None
    if policies or capacities:
        base = bases[0]
        bases = [dict(base, policy=p, capacity=c)
                 for p in (policies or [base.get("policy")])
                 for c in (capacities or [base.get("capacity")])]
    out = args.out
    args.out = None  # per-run directories are derived by the sweep
    cfgs = [_merge(b, args) for b in bases]
    rows = sweep(cfgs, out)
    w = max(len(r["policy"]) for r in rows)
    print(f"{'policy':<{w}}  {'capacity':>14}  {'score':>8}  {'tp':>6}  {'cost':>6}  best")
    for r in rows:
        if r["error"]:
            print(f"{r['policy']:<{w}}  {r['capacity']:>14}  ERROR {r['error']}")
            continue
        f = lambda x: "n/a" if x is None else f"{x:.3f}"  # noqa: E731
        print(f"{r['policy']:<{w}}  {r['capacity']:>14}  {f(r['score']):>8}  {f(r['throughput']):>6}  "
              f"{f(r['cost']):>6}  {r['best']}")
    return 1 if any(r["error"] for r in rows) else 0


def cmd_gen_trace(args) -> int:
    spec = preset(args.preset, **_parse_kv(args.trace_param))
    n = write_trace(generate_trace(spec), args.output)
    print(f"wrote {n} requests to {args.output}")
    return 0


def cmd_oracle(args) -> int:
    if args.trace:
        from .metrics import infinite_cache_oracle

        summary = infinite_cache_oracle(read_trace(args.trace)).to_dict()
    else:
        cfg = RunConfig(policy="we-lru", capacity=1, trace_preset=args.preset or "paper-like",
                        trace_overrides=_parse_kv(args.trace_param))
        summary = oracle_summary(cfg)
    print(json.dumps(summary, indent=2, sort_keys=True))
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="dlcache", description="Trace-driven cache policy simulator.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="simulate one policy at one capacity")
    p.add_argument("--policy", choices=POLICY_IDS)
    p.add_argument("--capacity", help="cache size, e.g. 100GiB")
    _add_common(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="policies x capacities comparison table")
    p.add_argument("--policies", help=f"comma-separated ids from: {','.join(POLICY_IDS)}")
    p.add_argument("--capacities", help="comma-separated sizes, e.g. 100GiB,200GiB")
    _add_common(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("gen-trace", help="write a synthetic trace as CSV")
    p.add_argument("--preset", choices=sorted(PRESETS), default="paper-like")
    p.add_argument("--trace-param", action="append", metavar="KEY=VALUE")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_gen_trace)

    p = sub.add_parser("oracle", help="infinite-cache upper bounds of a trace")
    p.add_argument("--trace")
    p.add_argument("--preset", choices=sorted(PRESETS))
    p.add_argument("--trace-param", action="append", metavar="KEY=VALUE")
    p.set_defaults(func=cmd_oracle)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ConfigError, TraceError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
