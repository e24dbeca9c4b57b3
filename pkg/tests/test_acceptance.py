"""Acceptance suite: one test (or group) per criterion, tagged with ``criterion``.

The terminal summary prints one PASS/FAIL line per criterion.
"""
import json
import math
import random
import time

import numpy as np
import pytest

from dlcache.bandit import EpsilonSchedule, QTable, q_update, select_action
from dlcache.cache import Simulator
from dlcache.config import RunConfig
from dlcache.dqn import STORE, DQNCache
from dlcache.metrics import compute_report, infinite_cache_oracle, score
from dlcache.neuralnet import Network, loss_and_grad
from dlcache.runner import POLICY_IDS, run, sweep
from dlcache.trace import GiB

from helpers import ALL_POLICIES, config_for, random_trace, reference_lru, simulate, two_class_trace
from test_neuralnet import ARCHS, _batch, finite_difference_grad, grad_rel_error

RL_POLICIES = [p for p in POLICY_IDS if not p.startswith("we-")]
WE_POLICIES = [p for p in POLICY_IDS if p.startswith("we-")]


def _report_line(n, ok, detail):
    print(f"criterion {n}: {'PASS' if ok else 'FAIL'} {detail}")


# 1 ------------------------------------------------------------------------

@pytest.mark.criterion(1, "LRU matches naive reference on 200 random traces, < 10 s")
def test_c1_lru_oracle_equivalence():
    rng = random.Random(1)
    t0 = time.perf_counter()
    for i in range(200):
        trace = random_trace(rng, rng.randint(1, 500), rng.randint(1, 30), max_size=100)
        cap = rng.randint(20, 600)
        got = []
        simulate("we-lru", trace, cap, observe=lambda s, r, o: got.append(o.name == "HIT"))
        want = reference_lru([(r.file_id, r.size) for r in trace], cap)
        assert got == want, f"trace {i} (capacity {cap}) diverges"
    elapsed = time.perf_counter() - t0
    _report_line(1, elapsed < 10, f"{elapsed:.2f}s")
    assert elapsed < 10


# 2 ------------------------------------------------------------------------

@pytest.mark.criterion(2, "RHD + RHM equals requested bytes for every policy")
@pytest.mark.parametrize("policy", ALL_POLICIES)
def test_c2_conservation(policy):
    rng = random.Random(sum(map(ord, policy)))
    for _ in range(6):
        trace = random_trace(rng, rng.randint(50, 400), rng.randint(3, 40), max_size=200)
        sim = simulate(policy, trace, rng.randint(50, 1500), seed=rng.randint(0, 99))
        assert sim.acc.rhd + sim.acc.rhm == sum(r.size for r in trace)


# 3 ------------------------------------------------------------------------

@pytest.mark.criterion(3, "occupancy <= capacity always; post-eviction watermark contract")
@pytest.mark.parametrize("policy", ALL_POLICIES)
def test_c3_watermarks(policy):
    rng = random.Random(len(policy))
    for _ in range(5):
        trace = random_trace(rng, rng.randint(100, 500), rng.randint(5, 60), max_size=150)
        cap = rng.randint(150, 1200)
        peak = 0

        def observe(sim, req, outcome):
            nonlocal peak
            assert sim.cache.occupancy <= cap
            peak = max(peak, sim.cache.occupancy)

        sim = simulate(policy, trace, cap, observe=observe)
        _check_watermarks(policy, sim.post_eviction_peak, cap, sim.cache.w_low, sim.cache.w_high)


def _check_watermarks(policy, post_peak, cap, w_low, w_high):
    if policy == "dqn":
        assert post_peak["high"] <= w_high * cap
    else:
        assert post_peak["low"] <= w_low * cap


# 4 ------------------------------------------------------------------------

@pytest.mark.criterion(4, "Score arithmetic and TP in [0, 1] on >= 50 runs")
def test_c4_metric_formulas():
    assert score(0.40, 1.19) == pytest.approx(0.34, abs=0.005)
    rng = random.Random(4)
    runs = 0
    for i in range(60):
        policy = ALL_POLICIES[i % len(ALL_POLICIES)]
        trace = random_trace(rng, rng.randint(20, 300), rng.randint(2, 40), max_size=120)
        sim = simulate(policy, trace, rng.randint(30, 1000), seed=i)
        rep = compute_report(sim.acc, infinite_cache_oracle(trace))
        if rep.throughput is not None:
            assert 0.0 <= rep.throughput <= 1.0
            runs += 1
    assert runs >= 50


# 5 ------------------------------------------------------------------------

@pytest.mark.criterion(5, "Q-learning update by hand; toy bandit converges within 1000 steps")
def test_c5_q_update_hand_values():
    rng = random.Random(5)
    for _ in range(20):
        table = QTable(3)
        s, s2 = (0,), (1,)
        q_s = [rng.uniform(-5, 5) for _ in range(3)]
        q_s2 = [rng.uniform(-5, 5) for _ in range(3)]
        table[s][:] = q_s
        table[s2][:] = q_s2
        a = rng.randrange(3)
        alpha, gamma, r = rng.uniform(0.01, 1), rng.uniform(0, 1), rng.uniform(-3, 3)
        want = q_s[a] + alpha * (r + gamma * max(q_s2) - q_s[a])
        assert abs(q_update(table, s, a, r, s2, alpha, gamma) - want) < 1e-12
        assert abs(table[s][a] - want) < 1e-12


@pytest.mark.criterion(5, "Q-learning update by hand; toy bandit converges within 1000 steps")
def test_c5_toy_bandit_converges():
    # two states, next state equals current state; best actions differ per state
    means = {(0,): (1.0, 0.2), (1,): (-0.5, 0.4)}
    optimal = {s: int(np.argmax(m)) for s, m in means.items()}
    rng = np.random.default_rng(5)
    table = QTable(2)
    eps = EpsilonSchedule(1.0, 0.0, decay=0.01)
    states = list(means)
    for step in range(1000):
        s = states[step % 2]
        a = select_action(table, s, eps, rng)
        r = means[s][a] + rng.normal(scale=0.1)
        q_update(table, s, a, r, s, alpha=0.5, gamma=0.5)
    assert eps.value < 1e-4
    assert {s: table.greedy(s) for s in states} == optimal


# 6 ------------------------------------------------------------------------

@pytest.mark.criterion(6, "analytic vs finite-difference gradients, 5 seeds x 3 architectures, < 30 s")
def test_c6_gradient_check():
    t0 = time.perf_counter()
    worst = 0.0
    for sizes in ARCHS:
        for seed in range(5):
            net = Network(sizes, seed=seed)
            X, T, M = _batch(sizes, seed)
            T[0, 0] += 3.0
            _, g = loss_and_grad(net, X, T, M)
            worst = max(worst, grad_rel_error(g, finite_difference_grad(net, X, T, M)))
    elapsed = time.perf_counter() - t0
    _report_line(6, worst < 1e-4 and elapsed < 30, f"max rel err {worst:.2e}, {elapsed:.2f}s")
    assert worst < 1e-4
    assert elapsed < 30


# 7 ------------------------------------------------------------------------

@pytest.mark.criterion(7, "DQN stores hot files >= 20 points more often than cold ones, < 5 min")
def test_c7_dqn_learns_hot_vs_cold():
    t0 = time.perf_counter()
    trace = two_class_trace(200_000, seed=0)
    warmup = 5000
    pol = DQNCache(
        k=2000,
        warmup_addition=warmup,
        warmup_eviction=4,
        reward_unit=GiB * 0.001,
        epsilon=EpsilonSchedule(1.0, 0.1, math.log(9) / (len(trace) / 2)),
        record_decisions=True,
        seed=0,
    )
    sim = Simulator(int(1.5 * GiB), pol)
    sim.run(trace)

    def store_rate(prefix):
        acts = [a for t, agent, fid, a, _ in pol.decisions
                if agent == "addition" and t > warmup and fid.startswith(prefix)]
        return sum(a == STORE for a in acts) / len(acts)

    hot, cold = store_rate("h"), store_rate("c")
    elapsed = time.perf_counter() - t0
    ok = hot - cold >= 0.20 and elapsed < 300
    _report_line(7, ok, f"hot {hot:.3f} cold {cold:.3f} gap {hot - cold:.3f}, {elapsed:.1f}s")
    assert hot - cold >= 0.20
    assert elapsed < 300


# 8 ------------------------------------------------------------------------

CAPACITIES = (100 * GiB, 200 * GiB)
# margins observed on the frozen preset (sweep of 2026-10-16), enforced with 25% slack
PINNED_COST_GAP = {100 * GiB: 0.0434, 200 * GiB: 0.0367}
PINNED_TP_GAP = {100 * GiB: 0.0122, 200 * GiB: 0.0}
PINNED_SCORE_GAP = 10.21
SLACK = 0.75
C8 = "qualitative policy ordering on the paper-like preset at 2 capacities, < 15 min"


@pytest.fixture(scope="module")
def paper_sweep(tmp_path_factory):
    out = tmp_path_factory.mktemp("sweep")
    configs = [
        RunConfig(policy=p, capacity=c, trace_preset="paper-like", byte_scale=0.001,
                  params={"warmup_eviction": 4} if p == "dqn" else {})
        for c in CAPACITIES for p in POLICY_IDS
    ]
    t0 = time.perf_counter()
    rows = sweep(configs, out)
    elapsed = time.perf_counter() - t0
    for r in rows:
        print(f"{r['policy']:18s} {r['capacity'] // GiB:5d}GiB tp={r['throughput']:.5f} "
              f"cost={r['cost']:.4f} score={r['score']:.3f} {r['error']}")
    assert not [r for r in rows if r["error"]]
    return rows, out, elapsed


def _by_cap(rows, cap):
    return {r["policy"]: r for r in rows if r["capacity"] == cap}


@pytest.mark.slow
@pytest.mark.criterion(8, C8)
def test_c8_runtime(paper_sweep):
    elapsed = paper_sweep[2]
    _report_line(8, elapsed < 900, f"sweep {elapsed:.0f}s")
    assert elapsed < 900


@pytest.mark.slow
@pytest.mark.criterion(8, C8)
@pytest.mark.parametrize("cap", CAPACITIES, ids=lambda c: f"{c // GiB}GiB")
def test_c8a_rl_cheaper_than_lru(paper_sweep, cap):
    t = _by_cap(paper_sweep[0], cap)
    worst = max(RL_POLICIES, key=lambda p: t[p]["cost"])
    gap = t["we-lru"]["cost"] - t[worst]["cost"]
    print(f"(a) {cap // GiB}GiB: LRU cost {t['we-lru']['cost']:.4f}, dearest RL {worst} "
          f"{t[worst]['cost']:.4f}, gap {gap:.4f}")
    assert gap > 0
    assert gap >= SLACK * PINNED_COST_GAP[cap]


@pytest.mark.slow
@pytest.mark.criterion(8, C8)
@pytest.mark.parametrize("cap", CAPACITIES, ids=lambda c: f"{c // GiB}GiB")
def test_c8b_lru_best_throughput(paper_sweep, cap):
    t = _by_cap(paper_sweep[0], cap)
    rival = max((p for p in POLICY_IDS if p != "we-lru"), key=lambda p: t[p]["throughput"])
    gap = t["we-lru"]["throughput"] - t[rival]["throughput"]
    print(f"(b) {cap // GiB}GiB: LRU tp {t['we-lru']['throughput']:.5f}, best other {rival} "
          f"{t[rival]['throughput']:.5f}, gap {gap:.5f}")
    assert gap >= 0, f"{rival} out-reads LRU by {-gap:.5f}"
    assert gap >= SLACK * PINNED_TP_GAP[cap]


@pytest.mark.slow
@pytest.mark.criterion(8, C8)
def test_c8c_rl_best_score_at_smallest_capacity(paper_sweep):
    t = _by_cap(paper_sweep[0], min(CAPACITIES))
    rl = max(RL_POLICIES, key=lambda p: t[p]["score"])
    we = max(WE_POLICIES, key=lambda p: t[p]["score"])
    gap = t[rl]["score"] - t[we]["score"]
    print(f"(c) best RL {rl} {t[rl]['score']:.3f} vs best WE {we} {t[we]['score']:.3f}")
    assert gap > 0
    assert gap >= SLACK * PINNED_SCORE_GAP


@pytest.mark.slow
@pytest.mark.criterion(3, "occupancy <= capacity always; post-eviction watermark contract")
def test_c3_watermarks_on_paper_sweep(paper_sweep):
    rows, out, _ = paper_sweep
    for r in rows:
        rep = json.loads((out / f"{r['policy']}_{r['capacity']}" / "report.json").read_text())
        cfg = rep["extra"]["config"]
        assert rep["extra"]["peak_occupancy"] <= r["capacity"]
        _check_watermarks(r["policy"], rep["extra"]["post_eviction_peak"], r["capacity"],
                          cfg["w_low"], cfg["w_high"])


# 9 ------------------------------------------------------------------------

@pytest.mark.criterion(9, "identical config and seed give byte-identical report.json")
@pytest.mark.parametrize("policy", ALL_POLICIES)
def test_c9_determinism(policy, tmp_path):
    cfg = config_for(policy, 2 * GiB, seed=11, output_dir=str(tmp_path / "run"))
    run(cfg)
    first = (tmp_path / "run" / "report.json").read_bytes()
    run(cfg)
    assert (tmp_path / "run" / "report.json").read_bytes() == first
