"""End-to-end acceptance criteria, each at its stated tolerance.

Every test records a verdict through the ``criterion`` fixture; the
terminal summary prints one PASS/FAIL line per criterion.
"""

import math
import time

import numpy as np
import pytest
from scipy import stats as sps

from dynpush import checks, corpus
from dynpush.cli import main
from dynpush.coupling import VirtualCoupler, absorption_time
from dynpush.dyngraph import GraphSnapshot, RngStream, Static
from dynpush.harness import ExperimentConfig, execute, load, persist
from dynpush.protocol import run_protocol
from dynpush.stats import bounded_degree_report, fit_scaling, log_n_over_nphat

pytestmark = pytest.mark.acceptance

SIZES = [2**k for k in range(8, 13)]


def _run(cfg: dict):
    return execute(ExperimentConfig.from_dict(cfg), parallelism=1)


def _medians(result):
    return {s.n: s.stats.median for s in result.summaries}


# 1 ------------------------------------------------------------------------


def test_c1_closed_forms(criterion):
    start = time.perf_counter()
    res = checks.closed_forms_suite(points=100, max_t=100)
    elapsed = time.perf_counter() - start
    ok = all(c.ok for c in res) and elapsed < 1.0
    assert criterion("1 closed forms", ok, "; ".join(c.line() for c in res) + f"; {elapsed:.2f}s")


# 2 ------------------------------------------------------------------------


def test_c2_virtual_nodes_exact_corpus(criterion):
    start = time.perf_counter()
    verdicts = corpus.verify_corpus()
    bad = [v.instance.label() for v in verdicts if not v.ok]
    n_max = max(v.instance.graph.n for v in verdicts)
    ok = len(verdicts) >= 200 and not bad and n_max <= 5
    detail = f"{len(verdicts)} instances, n <= {n_max}, {len(bad)} failures, {time.perf_counter() - start:.1f}s"
    assert criterion("2 virtual nodes", ok, detail), bad[:5]


def test_c2_virtual_nodes_coupled_sampler(criterion):
    start = time.perf_counter()
    res = checks.virtual_mc_check(trials=10**6, seed=2024, graphs=50, n_max=6)
    # containment on every committed corpus instance as well
    gen = RngStream(2024).child("corpus").generator()
    corpus_ok = all(
        VirtualCoupler(inst.graph, inst.informed, inst.b).sample_batch(gen, 200).containment.all()
        for path in corpus.corpus_files()
        for inst in corpus.read_corpus_file(path)
    )
    elapsed = time.perf_counter() - start
    ok = all(c.ok for c in res) and corpus_ok and elapsed < 120
    detail = "; ".join(c.line() for c in res) + f"; corpus containment {corpus_ok}; {elapsed:.1f}s"
    assert criterion("2 virtual nodes", ok, detail)


# 3 ------------------------------------------------------------------------


def test_c3_time_windows(criterion):
    start = time.perf_counter()
    exact = checks.window_dominance_check(random_n4=300, seed=3)
    marg = checks.window_marginal_check(ground=(0, 1, 2), max_t=3)
    mc = checks.window_mc_check(pairs=10**5, seed=3, n=64, T=3, informed=8)
    elapsed = time.perf_counter() - start
    res = [exact, marg, *mc]
    ok = all(c.ok for c in res) and elapsed < 300
    assert criterion("3 time windows", ok, "; ".join(c.line() for c in res) + f"; {elapsed:.1f}s")


# 4 ------------------------------------------------------------------------


@pytest.mark.parametrize("k", [3, 4])
def test_c4_static_complete_graph(k, criterion):
    g = GraphSnapshot.complete(k)
    model = Static(g)
    runs = 10**5
    times = np.array([run_protocol(model, "push", 0, 1000, RngStream(4, i)).completion_round for i in range(runs)], dtype=float)
    oracle = float(absorption_time(g, 0))
    half = sps.norm.ppf(0.995) * times.std(ddof=1) / math.sqrt(runs)
    ok = abs(times.mean() - oracle) <= half
    assert criterion("4 static regression", ok, f"K{k}: mean {times.mean():.4f} vs oracle {oracle:.4f} (99% half-width {half:.4f})")


# 5 ------------------------------------------------------------------------


def test_c5_sparse_independent_scaling(criterion):
    res = _run(
        {"experiment_id": "c5", "model": "independent_gnp", "n": [64, 128, 256, 512], "p": ["n^-1.5"], "replicas": 100, "master_seed": 5}
    )
    med = _medians(res)
    fit = fit_scaling(sorted(med.items()), log_n_over_nphat(lambda n: n**-1.5), "log_n_over_nphat")
    timeouts = max(s.stats.timeout_fraction for s in res.summaries)
    ok = fit.r2 >= 0.9 and fit.ratio_spread <= 3
    detail = f"R2 {fit.r2:.4f}, ratio spread {fit.ratio_spread:.3f}, medians {med}, max timeout fraction {timeouts}"
    assert criterion("5 sparse independent scaling", ok, detail)


# 6 / 8 --------------------------------------------------------------------


def _log_band(result, name, criterion):
    med = _medians(result)
    ratios = {n: med[n] / math.log2(n) for n in med}
    in_band = all(1 <= r <= 30 for r in ratios.values())
    spread = max(ratios.values()) / min(ratios.values())
    floor_ok = all(r.completion_round is None or r.completion_round >= math.ceil(math.log2(r.n)) for r in result.rows)
    timeouts = sum(r.timed_out for r in result.rows)
    ok = in_band and spread <= 2.5 and floor_ok and len(med) == len(SIZES)
    detail = (
        f"median/log2 n {', '.join(f'{n}:{r:.2f}' for n, r in sorted(ratios.items()))}; spread {spread:.3f}; "
        f"completion >= ceil(log2 n) in all runs: {floor_ok}; timeouts {timeouts}"
    )
    return criterion(name, ok, detail)


def test_c6a_independent_logarithmic(criterion):
    res = _run({"experiment_id": "c6a", "model": "independent_gnp", "n": SIZES, "p": ["1/n"], "replicas": 100, "master_seed": 6})
    assert _log_band(res, "6a independent p=1/n", criterion)


def test_c6b_edge_markov_logarithmic(criterion):
    res = _run({"experiment_id": "c6b", "n": SIZES, "p": ["1/n"], "q": [0.5], "replicas": 100, "master_seed": 6})
    assert _log_band(res, "6b edge-Markov p=1/n q=1/2", criterion)


def test_c8_bounded_degree_states(criterion):
    res = _run(
        {
            "experiment_id": "c8",
            "n": SIZES,
            "p": ["1/n"],
            "q": [0.5],
            "replicas": 100,
            "master_seed": 6,
            "initial_informed": "ceil_ln_n",
            "instruments": {"bounded_degree": {"rounds": 50}},
        }
    )
    rep = bounded_degree_report(res.records)
    frac = rep.violations / rep.rounds_checked
    ok = frac <= 0.01
    assert criterion("8 bounded-degree states", ok, f"{rep.violations}/{rep.rounds_checked} rounds violate ({frac:.4f}); max ratio {rep.max_ratio:.3f}")


# 7 ------------------------------------------------------------------------


def test_c7_bootstrap(criterion):
    n = 4096
    res = _run({"experiment_id": "c7", "n": [n], "p": ["1/n"], "q": [0.5], "replicas": 300, "master_seed": 7, "protocol": "source_only"})
    target = math.ceil(10 * math.log(n))
    horizon = math.ceil(80 * math.log(n))
    reached = sum(1 for r in res.records if r.completion_round is not None and r.completion_round <= horizon)
    frac = reached / len(res.records)
    not_f = sum(r.events.not_f for r in res.records)
    hits = sum(r.events.s1_or_s2_given_not_f for r in res.records)
    rate = hits / not_f
    f_rounds = sum(r.events.f for r in res.records)
    ok = frac >= 0.99 and rate > 0.25
    detail = f"{reached}/{len(res.records)} runs reach {target} within {horizon} rounds; Pr[S1 or S2 | not F] = {rate:.3f} over {not_f} rounds ({f_rounds} F rounds)"
    assert criterion("7 bootstrap", ok, detail)


# 9 ------------------------------------------------------------------------


def test_c9_slow_regime(criterion):
    res = _run({"experiment_id": "c9", "n": SIZES, "p": ["8/n"], "q": ["1/log n"], "replicas": 40, "master_seed": 9})
    med = _medians(res)
    ratios = {n: med[n] / math.log(n) for n in med}
    spread = max(ratios.values()) / min(ratios.values())
    timeouts = sum(r.timed_out for r in res.rows)
    ok = spread <= 3 and len(med) == len(SIZES)
    assert criterion("9 slow regime", ok, f"median/ln n {', '.join(f'{n}:{r:.2f}' for n, r in sorted(ratios.items()))}; spread {spread:.3f}; timeouts {timeouts}")


# 10 -----------------------------------------------------------------------


def test_c10_push_vs_flooding_messages(criterion):
    n = 1024
    base = {"n": [n], "p": ["n^-0.5"], "q": [0.5], "replicas": 50, "master_seed": 10}
    push = _run({**base, "experiment_id": "c10"})
    flood = _run({**base, "experiment_id": "c10", "protocol": "flooding"})
    push_cap = 10 * n * math.log2(n)
    flood_floor = n**1.5 / 4
    push_ok = np.mean([r.total_messages <= push_cap for r in push.rows])
    flood_ok = np.mean([r.total_messages >= flood_floor for r in flood.rows])
    ok = push_ok >= 0.95 and flood_ok >= 0.95
    detail = (
        f"push <= {push_cap:.0f} in {push_ok:.0%} (median {np.median([r.total_messages for r in push.rows]):.0f}); "
        f"flooding >= {flood_floor:.0f} in {flood_ok:.0%} (median {np.median([r.total_messages for r in flood.rows]):.0f})"
    )
    assert criterion("10 push vs flooding messages", ok, detail)


# 11 -----------------------------------------------------------------------


def test_c11_infrastructure(criterion, tmp_path, capsys):
    cfg = ExperimentConfig.from_dict(
        {
            "experiment_id": "c11",
            "n": [64, 128, 256],
            "p": ["1/n", "logn/n"],
            "q": [0.5],
            "replicas": 8,
            "master_seed": 11,
            "instruments": {"bounded_degree": True},
        }
    )
    a = persist(execute(cfg, parallelism=1), tmp_path / "p1" / "c11")
    r8 = execute(cfg, parallelism=8)
    b = persist(r8, tmp_path / "p8" / "c11")
    identical = a.read_bytes() == b.read_bytes() and a.with_suffix(".json").read_bytes() == b.with_suffix(".json").read_bytes()
    roundtrip = load(b) == r8

    lines = (corpus.CORPUS_DIR / "bridge5.txt").read_text().splitlines()
    for i, line in enumerate(lines):
        if line.startswith("X ") and lines[i + 1].startswith("Y "):
            lines[i], lines[i + 1] = "X " + lines[i + 1][2:], "Y " + line[2:]
    bad = tmp_path / "bridge5_reversed.txt"
    bad.write_text("\n".join(lines) + "\n")
    code = main(["verify", "couplings", "--corpus", str(bad)])
    out = capsys.readouterr().out
    negative = code == 1 and "bridge5_reversed.txt" in out
    ok = identical and roundtrip and negative
    detail = f"CSV+sidecar identical at parallelism 1 vs 8: {identical}; persist/load round-trip: {roundtrip}; negative control exit {code}"
    assert criterion("11 infrastructure", ok, detail)
