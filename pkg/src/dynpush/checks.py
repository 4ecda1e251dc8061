"""Verification suites run by ``dynpush verify``.

Each suite returns a list of :class:`Check` verdicts; a suite passes when
every check does.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Callable

import numpy as np
from scipy import stats as sps

from . import corpus as corpus_mod
from .coupling import (
    VirtualCoupler,
    check_dominance,
    coupled_push_window,
    exact_push_distribution,
    exact_sequence_push_distribution,
    exact_union_push_distribution,
    increasing_rate_lambda,
    reverse_markov_check,
    virtual_coupling_marginal,
    window_choice_distribution,
    OutcomeDistribution,
)
from .dyngraph import (
    GraphSnapshot,
    RngStream,
    edge_markov,
    edge_presence_probability,
    expected_degree,
    expected_switching_edges,
    pair_count,
    sample_gnp,
    stationary_probability,
    two_step_presence_lower_bound,
)
from .protocol import Instruments, run_protocol
from .stats import NotApplicable, empirical_dominance_test


@dataclass
class Check:
    name: str
    ok: bool
    detail: str = ""

    def line(self) -> str:
        return f"{'PASS' if self.ok else 'FAIL'} {self.name}" + (f": {self.detail}" if self.detail else "")


# --------------------------------------------------------------------------
# couplings


def corpus_checks(directory=corpus_mod.CORPUS_DIR) -> list[Check]:
    verdicts = corpus_mod.verify_corpus(directory)
    checks = [Check(f"corpus {v.file.name} {v.instance.label()}", v.ok, v.reason) for v in verdicts if not v.ok]
    files = sorted({v.file.name for v in verdicts})
    bad = sorted({v.file.name for v in verdicts if not v.ok})
    checks.append(
        Check(
            "corpus dominance",
            not bad and bool(verdicts),
            f"{len(verdicts)} instances in {len(files)} files" + (f"; failing files: {', '.join(bad)}" if bad else ""),
        )
    )
    return checks


def virtual_marginal_check(max_deg: int = 6) -> Check:
    """Every neighbour gets probability 1/(h+k) under the x-branch algebra."""
    bad = []
    count = 0
    for b in range(1, max_deg + 1):
        for h in range(0, b + 1):
            for k in range(0, b + 1 - h):
                if h + k == 0:
                    continue
                count += 1
                p_inf, p_non = virtual_coupling_marginal(h, k, b)
                want = Fraction(1, h + k)
                if (h and p_inf != want) or (k and p_non != want):
                    bad.append((h, k, b))
    return Check("virtual-node coupling marginals", not bad, f"{count} (h,k,b) cases" + (f"; bad {bad[:5]}" if bad else ""))


def window_marginal_check(ground=(0, 1, 2), max_t: int = 3) -> Check:
    """Pr[delta_{H_t}(u) = v] = 1/h_t for all neighbourhood sequences over ``ground``."""
    subsets = [frozenset(c) for r in range(len(ground) + 1) for c in itertools.combinations(ground, r)]
    bad, count = [], 0
    for T in range(1, max_t + 1):
        for seq in itertools.product(subsets, repeat=T):
            dists = window_choice_distribution(seq)
            seen: set[int] = set()
            for t, (nb, dist) in enumerate(zip(seq, dists)):
                seen |= nb
                count += 1
                if seen:
                    want = {v: Fraction(1, len(seen)) for v in seen}
                else:
                    want = {None: Fraction(1)}
                if {k: v for k, v in dist.items() if v} != want:
                    bad.append((seq, t))
    return Check("time-window coupling marginals", not bad, f"{count} (sequence, t) cases" + (f"; bad {bad[:3]}" if bad else ""))


def all_graphs(n: int) -> list[GraphSnapshot]:
    pairs = list(itertools.combinations(range(n), 2))
    out = []
    for mask in range(1 << len(pairs)):
        out.append(GraphSnapshot.from_edges(n, [e for i, e in enumerate(pairs) if mask >> i & 1]))
    return out


def window_dominance_check(random_n4: int = 300, seed: int = 0) -> Check:
    """Exact dominance of T=2 sequence Push over union Push.

    All graph pairs and informed sets at n = 3, plus random n = 4 cases.
    """
    cases = []
    g3 = all_graphs(3)
    for g1, g2 in itertools.product(g3, repeat=2):
        for r in (1, 2, 3):
            for informed in itertools.combinations(range(3), r):
                cases.append((g1, g2, informed))
    gen = np.random.default_rng(seed)
    g4 = all_graphs(4)
    for _ in range(random_n4):
        g1, g2 = g4[gen.integers(len(g4))], g4[gen.integers(len(g4))]
        size = int(gen.integers(1, 4))
        informed = tuple(sorted(gen.choice(4, size, replace=False).tolist()))
        cases.append((g1, g2, informed))
    bad = []
    for g1, g2, informed in cases:
        seq = exact_sequence_push_distribution([g1, g2], informed)
        uni = exact_union_push_distribution([g1, g2], informed)
        if not check_dominance(seq, uni):
            bad.append((g1.edges, g2.edges, informed))
    return Check("time-window exact dominance (T=2, n<=4)", not bad, f"{len(cases)} cases" + (f"; first failure {bad[0]}" if bad else ""))


def couplings_suite(corpus_dir=corpus_mod.CORPUS_DIR) -> list[Check]:
    return [*corpus_checks(corpus_dir), virtual_marginal_check(), window_marginal_check(), window_dominance_check()]


# --------------------------------------------------------------------------
# dominance-mc


def virtual_mc_check(trials: int, seed: int, graphs: int = 50, n_max: int = 6, alpha: float = 0.001) -> list[Check]:
    """Coupled sampler over random small graphs: containment in every trial, uniform delta_G marginals.

    The trials are split evenly across ``graphs`` seeded G(n, p) instances
    with 3 <= n <= n_max and random (I, b).
    """
    rs = RngStream(seed)
    pick = rs.child("instances").generator()
    gen = rs.child("coupling").generator()
    per = max(1, trials // graphs)
    violations = 0
    pvals = []
    stat = dof = 0.0
    for k in range(graphs):
        n = int(pick.integers(3, n_max + 1))
        g = sample_gnp(n, float(pick.uniform(0.3, 0.8)), rs.child("graph", k))
        informed = pick.choice(n, int(pick.integers(1, n)), replace=False).tolist()
        coupler = VirtualCoupler(g, informed, int(pick.integers(1, n + 1)))
        batch = coupler.sample_batch(gen, per)
        violations += int((~batch.containment).sum())
        for i, (u, *_rest) in enumerate(coupler.plan):
            nb = g.neighbors(u)
            if nb.size < 2:
                continue
            counts = np.array([(batch.delta_g[:, i] == v).sum() for v in nb])
            res = sps.chisquare(counts)
            pvals.append(float(res.pvalue))
            stat += float(res.statistic)
            dof += nb.size - 1
    # alpha is family-wise: pooled chi-square plus Bonferroni on the per-node tests
    total = per * graphs
    pooled = float(sps.chi2.sf(stat, dof)) if dof else 1.0
    worst = min(pvals, default=1.0)
    uniform = pooled >= alpha and worst >= alpha / max(1, len(pvals))
    return [
        Check(f"virtual coupling containment ({total} trials, {graphs} graphs, n<={n_max})", violations == 0, f"{violations} violations"),
        Check(
            "virtual coupling delta_G uniformity (chi-square)",
            uniform,
            f"pooled p {pooled:.4g}; min p {worst:.4g} over {len(pvals)} tests (Bonferroni); family alpha {alpha}",
        ),
    ]


def window_mc_check(pairs: int, seed: int, n: int = 64, T: int = 3, informed: int = 8) -> list[Check]:
    """DKW test of sequence-Push over union-Push counts on a fixed G(n, p) window."""
    rs = RngStream(seed)
    p = 2.0 * math.log(n) / n
    gen_g = rs.child("graph").generator()
    window = [sample_gnp(n, p, gen_g) for _ in range(T)]
    start = list(range(informed))
    gen = rs.child("coupling").generator()
    seq = np.empty(pairs)
    uni = np.empty(pairs)
    contained = True
    for i in range(pairs):
        s = coupled_push_window(window, start, gen)
        seq[i], uni[i] = len(s.seq_informed), len(s.union_informed)
        contained &= s.containment
    verdict = empirical_dominance_test(seq, uni)
    return [
        Check(f"time-window coupling containment ({pairs} pairs)", contained),
        Check(
            f"time-window DKW dominance (n={n}, T={T})",
            verdict.status == "dominates",
            f"{verdict.status}, worst gap {verdict.worst_gap:.4g}, band {verdict.band:.4g}",
        ),
    ]


def dominance_mc_suite(trials: int = 200_000, pairs: int = 10_000, seed: int = 0) -> list[Check]:
    return [*virtual_mc_check(trials, seed), *window_mc_check(pairs, seed)]


# --------------------------------------------------------------------------
# closed forms and stationarity


def matrix_power_presence(p: float, q: float, p0: float, t: int) -> float:
    P = np.array([[1 - p, p], [q, 1 - q]])
    row = np.array([1 - p0, p0]) @ np.linalg.matrix_power(P, t)
    return float(row[1])


def two_step_bound_oracle(p: float, q: float) -> float:
    P = np.array([[1 - p, p], [q, 1 - q]])
    vals = []
    for x in (0, 1):
        # 1 - Pr[X1 = 0 and X2 = 0 | X0 = x]
        vals.append(1 - P[x, 0] * P[0, 0])
    return min(vals)


def closed_forms_suite(points: int = 100, max_t: int = 100, seed: int = 0) -> list[Check]:
    gen = np.random.default_rng(seed)
    worst_nu = worst_pt = worst_two = 0.0
    for _ in range(points):
        n = int(gen.integers(2, 10_000))
        p, q = gen.uniform(1e-4, 1, size=2)
        d = expected_degree(n, p, q)
        nu = expected_switching_edges(n, p, q)
        worst_nu = max(worst_nu, abs(nu - n * q * d) / max(1.0, nu))
        p0 = float(gen.uniform())
        for t in range(max_t + 1):
            worst_pt = max(worst_pt, abs(edge_presence_probability(p, q, p0, t) - matrix_power_presence(p, q, p0, t)))
        worst_two = max(worst_two, abs(two_step_presence_lower_bound(p, q) - two_step_bound_oracle(p, q)))
    return [
        Check("switching edges = n q dbar", worst_nu <= 1e-12, f"max rel err {worst_nu:.3g}"),
        Check("edge presence vs matrix power", worst_pt <= 1e-12, f"max abs err {worst_pt:.3g} over t<={max_t}"),
        Check("two-step presence bound", worst_two <= 1e-12, f"max abs err {worst_two:.3g}"),
        Check("two-step bound >= p", all(two_step_presence_lower_bound(p, q) >= p for p, q in gen.uniform(0, 1, (points, 2)))),
    ]


def stationarity_suite(n: int = 300, steps: int = 30, seed: int = 0, z: float = 5.0) -> list[Check]:
    """Empirical edge density along a trajectory against p_t."""
    checks = []
    N = pair_count(n)
    for p, q, start in ((0.02, 0.1, "empty"), (0.05, 0.3, "complete"), (0.01, 0.5, "stationary"), (0.3, 0.2, "gnp:0.9")):
        model = edge_markov(n, p, q, start)
        p0 = {"empty": 0.0, "complete": 1.0, "stationary": stationary_probability(p, q)}.get(start, 0.9)
        worst = 0.0
        for t, g in enumerate(model.snapshots(RngStream(seed, 1))):
            if t > steps:
                break
            pt = edge_presence_probability(p, q, p0, t)
            sd = math.sqrt(max(pt * (1 - pt), 1e-12) / N)
            worst = max(worst, abs(g.m / N - pt) / sd if pt not in (0.0, 1.0) else (0.0 if g.m / N == pt else math.inf))
        checks.append(Check(f"edge density follows p_t (p={p}, q={q}, start={start})", worst <= z, f"max |z| {worst:.2f}"))
    return checks


# --------------------------------------------------------------------------
# bounded-degree


def bounded_degree_suite(n: int = 512, runs: int = 10, rounds: int = 50, seed: int = 0, limit: float = 0.01) -> list[Check]:
    model = edge_markov(n, 1.0 / n, 0.5)
    inst = Instruments(bounded_degree=True, bd_rounds=rounds)
    checked = viol = 0
    worst = 0.0
    k0 = math.ceil(math.log(n))
    for r in range(runs):
        rec = run_protocol(model, "push", 0, 10 * rounds, RngStream(seed, r), inst, initial_informed=k0)
        checked += rec.bd_rounds_checked
        viol += rec.bd_violations
        worst = max(worst, rec.bd_max_ratio)
    frac = viol / checked if checked else 0.0
    return [
        Check(
            f"bounded-degree states (n={n}, {runs} runs, first {rounds} rounds)",
            frac <= limit,
            f"violations {viol}/{checked} = {frac:.4f}, max ratio {worst:.3f}",
        )
    ]


# --------------------------------------------------------------------------
# reverse-markov and increasing rate


def reverse_markov_suite(corpus_dir=corpus_mod.CORPUS_DIR, seed: int = 0, floor: float = 0.05) -> list[Check]:
    bad, applied = [], 0
    for path in corpus_mod.corpus_files(corpus_dir):
        for inst in corpus_mod.read_corpus_file(path):
            m = min(len(inst.informed), inst.graph.n - len(inst.informed))
            if m == 0:
                continue
            lam = min(Fraction(1), Fraction(inst.x.mean()) / m)
            try:
                ok = reverse_markov_check(inst.x, m, lam)
            except NotApplicable:
                continue
            applied += 1
            if not ok:
                bad.append(inst.label())
    checks = [Check("reverse Markov bound on corpus laws", not bad, f"{applied} applicable instances" + (f"; failing {bad[:3]}" if bad else ""))]
    lam_min, where = increasing_rate_floor(seed)
    checks.append(Check("increasing-rate floor on averaged G(n,p) laws", lam_min >= floor, f"min lambda {float(lam_min):.3f} at {where}"))
    return checks


def increasing_rate_floor(seed: int = 0, sizes=range(5, 10), graphs: int = 12) -> tuple[Fraction, str]:
    """Smallest per-instance lambda over G(n, p) with n p in {1, 2}, averaging exact laws over sampled graphs."""
    gen = np.random.default_rng(seed)
    lam_min, where = Fraction(1), ""
    for n in sizes:
        for c in (1.0, 2.0):
            p = c / n
            sample = [sample_gnp(n, p, gen) for _ in range(graphs)]
            for size in range(1, n):
                informed = tuple(range(size))
                avg: dict[int, Fraction] = {}
                for g in sample:
                    for k, pr in exact_push_distribution(g, informed).by_count.items():
                        avg[k] = avg.get(k, 0) + Fraction(pr) / graphs
                lam = increasing_rate_lambda(OutcomeDistribution(avg), min(size, n - size))
                if lam < lam_min:
                    lam_min, where = lam, f"n={n}, np={c:g}, |I|={size}"
    return lam_min, where


SUITES: dict[str, Callable[..., list[Check]]] = {
    "couplings": couplings_suite,
    "dominance-mc": dominance_mc_suite,
    "stationarity": stationarity_suite,
    "closed-forms": closed_forms_suite,
    "bounded-degree": bounded_degree_suite,
    "reverse-markov": reverse_markov_suite,
}
