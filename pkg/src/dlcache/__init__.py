"""Trace-driven cache simulator with reinforcement-learning admission and eviction policies."""
from .cache import Accounting, CacheState, Outcome, Policy, Simulator
from .trace import Request, TraceSpec, generate_trace, preset, read_trace, write_trace

__version__ = "0.1.0"

__all__ = [
    "Accounting",
    "CacheState",
    "Outcome",
    "Policy",
    "Request",
    "Simulator",
    "TraceSpec",
    "generate_trace",
    "preset",
    "read_trace",
    "write_trace",
]
