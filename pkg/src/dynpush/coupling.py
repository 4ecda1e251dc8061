"""Coupling constructions behind the dominance lemmas, plus exact oracles.

Two couplings are implemented as samplers:

* ``coupled_push_modified``: one Push on a graph G and on its (I, b)-modified
  graph H share randomness so that the real nodes H informs are a subset of
  the nodes G informs.
* ``coupled_push_window``: T Push rounds on a snapshot sequence and a single
  Push on the union graph share randomness the same way.

The exact oracles enumerate Push outcomes with rational arithmetic. They
work on informed-set states, so their cost grows with 2^n rather than with
the number of joint neighbour choices.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, NamedTuple, Sequence

import numpy as np

from .dyngraph import GraphSnapshot, as_generator, union_window
from .protocol import push_choices
from .stats import NotApplicable

ENUMERATION_GUARD = 10**7
EXACT_DENOMINATOR_LIMIT = 2**63
FLOAT_TOL = 1e-12


class InstanceTooLarge(ValueError):
    pass


class DistributionError(ValueError):
    pass


# --------------------------------------------------------------------------
# (I, b)-modified graphs


@dataclass(frozen=True)
class ModifiedGraph:
    """Graph on real nodes 0..base_n-1 and virtual nodes base_n..base_n+b-1."""

    base_n: int
    b: int
    graph: GraphSnapshot
    informed: frozenset[int]
    deactivated: frozenset[int]

    @property
    def edges(self) -> list[tuple[int, int]]:
        return self.graph.edges

    def is_virtual(self, v: int) -> bool:
        return v >= self.base_n

    def virtual_nodes(self) -> range:
        return range(self.base_n, self.base_n + self.b)


def modify_graph(g: GraphSnapshot, informed: Iterable[int], b: int) -> ModifiedGraph:
    """Build the (I, b)-modified graph.

    1. informed nodes with deg_G > b lose all their edges;
    2. informed nodes with deg_G <= b get an edge to each of the b virtual nodes;
    3. edges with both endpoints informed are removed.
    """
    n = g.n
    if not 1 <= b <= max(n, 1):
        raise ValueError(f"b must lie in [1, n], got {b}")
    inf = frozenset(int(u) for u in informed)
    if any(not 0 <= u < n for u in inf):
        raise ValueError("informed node out of range")
    deg = g.degrees
    deactivated = frozenset(u for u in inf if deg[u] > b)
    kept = [
        (u, v)
        for u, v in g.edges
        if u not in deactivated and v not in deactivated and not (u in inf and v in inf)
    ]
    virtual = [(u, n + j) for u in sorted(inf - deactivated) for j in range(b)]
    h = GraphSnapshot.from_edges(n + b, kept + virtual)
    return ModifiedGraph(n, b, h, inf, deactivated)


# --------------------------------------------------------------------------
# Exact outcome distributions


@dataclass
class OutcomeDistribution:
    """Exact law of an informed count (and optionally of the informed set)."""

    by_count: dict[int, Fraction | float]
    by_set: dict[frozenset[int], Fraction | float] | None = None

    def total(self):
        return sum(self.by_count.values())

    def is_normalized(self) -> bool:
        t = self.total()
        if isinstance(t, Fraction):
            return t == 1
        return abs(t - 1.0) <= FLOAT_TOL

    def cdf(self, h: float):
        return sum((pr for k, pr in self.by_count.items() if k <= h), Fraction(0))

    def mean(self):
        return sum((k * pr for k, pr in self.by_count.items()), Fraction(0))

    def prob_at_least(self, x: float):
        return sum((pr for k, pr in self.by_count.items() if k >= x), Fraction(0))

    def shifted(self, k: int) -> "OutcomeDistribution":
        return OutcomeDistribution({c + k: pr for c, pr in self.by_count.items()}, self.by_set)


def _to_text(pr) -> str:
    return str(pr) if isinstance(pr, Fraction) else repr(float(pr))


def format_distribution(d: OutcomeDistribution) -> str:
    return " ".join(f"{k}:{_to_text(pr)}" for k, pr in sorted(d.by_count.items()))


def parse_distribution(text: str) -> OutcomeDistribution:
    out: dict[int, Fraction] = {}
    for tok in text.split():
        k, pr = tok.split(":")
        out[int(k)] = Fraction(pr)
    return OutcomeDistribution(out)


def _denominator_product(sizes: Iterable[int]) -> int:
    prod = 1
    for s in sizes:
        if s > 0:
            prod *= s
    return prod


def _choice_dp(n: int, informed: frozenset[int], choices: Sequence[Sequence[int | None]]) -> OutcomeDistribution:
    """Law of the informed set after each informed node picks uniformly from its list.

    ``choices[i]`` lists the possible targets of the i-th pushing node; None
    stands for a target that informs no real node (a virtual node).
    """
    prod = _denominator_product(len(c) for c in choices)
    if prod > ENUMERATION_GUARD:
        raise InstanceTooLarge(f"{prod} joint choices exceed the guard {ENUMERATION_GUARD}")
    exact = prod <= EXACT_DENOMINATOR_LIMIT
    one = Fraction(1) if exact else 1.0
    base = 0
    for u in informed:
        base |= 1 << u
    states: dict[int, Fraction | float] = {base: one}
    for opts in choices:
        if not opts:
            continue
        w = one / len(opts)
        nxt: dict[int, Fraction | float] = {}
        for state, pr in states.items():
            for v in opts:
                s = state if v is None else state | (1 << v)
                nxt[s] = nxt.get(s, 0) + pr * w
        states = nxt
    by_set: dict[frozenset[int], Fraction | float] = {}
    by_count: dict[int, Fraction | float] = {}
    k0 = len(informed)
    for state, pr in states.items():
        members = frozenset(i for i in range(n) if state >> i & 1)
        by_set[members] = by_set.get(members, 0) + pr
        c = len(members) - k0
        by_count[c] = by_count.get(c, 0) + pr
    return OutcomeDistribution(by_count, by_set)


def exact_push_distribution(g: GraphSnapshot, informed: Iterable[int]) -> OutcomeDistribution:
    """Exact law of the number of newly informed nodes after one Push round."""
    inf = frozenset(int(u) for u in informed)
    choices = [g.neighbors(u).tolist() for u in sorted(inf)]
    return _choice_dp(g.n, inf, choices)


def exact_modified_push_distribution(g: GraphSnapshot, informed: Iterable[int], b: int) -> OutcomeDistribution:
    """Same as :func:`exact_push_distribution` on modify_graph(g, I, b); real nodes only."""
    mg = modify_graph(g, informed, b)
    h = mg.graph
    choices = []
    for u in sorted(mg.informed):
        choices.append([None if mg.is_virtual(v) else v for v in h.neighbors(u).tolist()])
    return _choice_dp(g.n, mg.informed, choices)


def exact_sequence_push_distribution(snapshots: Sequence[GraphSnapshot], informed: Iterable[int]) -> OutcomeDistribution:
    """Law of the total informed count after T Push rounds on G_1..G_T (all informed push)."""
    if not snapshots:
        raise ValueError("empty snapshot sequence")
    n = snapshots[0].n
    start = frozenset(int(u) for u in informed)
    sets: dict[frozenset[int], Fraction | float] = {start: Fraction(1)}
    for g in snapshots:
        nxt: dict[frozenset[int], Fraction | float] = {}
        for s, pr in sets.items():
            step = exact_push_distribution(g, s)
            for s2, pr2 in step.by_set.items():
                nxt[s2] = nxt.get(s2, 0) + pr * pr2
        sets = nxt
    by_count: dict[int, Fraction | float] = {}
    for s, pr in sets.items():
        by_count[len(s)] = by_count.get(len(s), 0) + pr
    return OutcomeDistribution(by_count, sets)


def exact_union_push_distribution(snapshots: Sequence[GraphSnapshot], informed: Iterable[int]) -> OutcomeDistribution:
    """Law of the total informed count after one Push on the union of the window."""
    inf = frozenset(int(u) for u in informed)
    return exact_push_distribution(union_window(snapshots), inf).shifted(len(inf))


def check_dominance(lo: OutcomeDistribution, hi: OutcomeDistribution) -> bool:
    """True iff Pr[lo <= h] <= Pr[hi <= h] for every h.

    ``lo`` is the stochastically larger variable; ``hi`` the dominated one.
    Exact for rational inputs, tolerance 1e-12 otherwise.
    """
    for name, d in (("lo", lo), ("hi", hi)):
        if not d.is_normalized():
            raise DistributionError(f"{name} distribution sums to {d.total()}, not 1")
    exact = all(isinstance(v, Fraction) for d in (lo, hi) for v in d.by_count.values())
    tol = 0 if exact else FLOAT_TOL
    for h in sorted(set(lo.by_count) | set(hi.by_count)):
        if lo.cdf(h) > hi.cdf(h) + tol:
            return False
    return True


def reverse_markov_check(dist: OutcomeDistribution, m: float, lam: float) -> bool:
    """For X in [0, m] with E[X] >= lam*m, check Pr[X >= lam*m/2] >= lam/2.

    Raises NotApplicable when the preconditions fail.
    """
    if not 0 <= lam <= 1:
        raise NotApplicable("lambda must lie in [0, 1]")
    if any(k < 0 or k > m for k, pr in dist.by_count.items() if pr > 0):
        raise NotApplicable("support is not inside [0, m]")
    lam = Fraction(lam)
    m = Fraction(m)
    if dist.mean() < lam * m:
        raise NotApplicable("mean is below lambda * m")
    return dist.prob_at_least(lam * m / 2) >= lam / 2



def increasing_rate_lambda(dist: OutcomeDistribution, m: int) -> Fraction:
    """Largest lam in (0, 1] with Pr[X >= lam*m] >= lam; 0 if there is none.

    Pr[X >= lam*m] only drops at lam = k/m, so the supremum is
    max_k min(k/m, Pr[X >= k], 1) over the positive support points k.
    """
    if m <= 0:
        raise NotApplicable("m must be positive")
    best = Fraction(0)
    for k in sorted(dist.by_count):
        if k <= 0:
            continue
        tail = Fraction(dist.prob_at_least(k))
        best = max(best, min(Fraction(k, 1) / m, tail, Fraction(1)))
    return best

# --------------------------------------------------------------------------
# Virtual-nodes coupling


class CoupledPush(NamedTuple):
    x: int
    y: int
    containment: bool
    delta_g: dict[int, int | None]
    delta_h: dict[int, int | None]


def virtual_switch_probability(h: int, k: int, b: int) -> Fraction:
    """x = k(b - h) / ((h + k) b): chance a virtual pick in H maps to a non-informed pick in G."""
    if h + k == 0:
        return Fraction(0)
    return Fraction(k * (b - h), (h + k) * b)


def virtual_coupling_marginal(h: int, k: int, b: int) -> tuple[Fraction, Fraction]:
    """Exact Pr[delta_G(u) = w] for one informed and one non-informed neighbour w.

    Sums the coupling's branches; both values equal 1/(h+k) when h + k <= b.
    """
    x = virtual_switch_probability(h, k, b)
    direct = Fraction(1, k + b)
    virtual = Fraction(b, k + b)
    p_non = direct + virtual * x / k if k else Fraction(0)
    p_inf = virtual * (1 - x) / h if h else Fraction(0)
    return p_inf, p_non


class VirtualCoupler:
    """Precomputed coupling for a fixed (G, I, b); ``sample`` draws one coupled Push."""

    def __init__(self, g: GraphSnapshot, informed: Iterable[int], b: int):
        mg = modify_graph(g, informed, b)
        self.n = g.n
        self.b = b
        self.informed = mg.informed
        self.plan = []
        for u in sorted(mg.informed):
            nb = g.neighbors(u).tolist()
            if u in mg.deactivated:
                self.plan.append((u, "deactivated", nb, [], 0.0))
                continue
            inf_nb = [w for w in nb if w in mg.informed]
            non_nb = [w for w in nb if w not in mg.informed]
            x = float(virtual_switch_probability(len(inf_nb), len(non_nb), b))
            self.plan.append((u, "active", inf_nb, non_nb, x))

    def sample(self, gen: np.random.Generator) -> CoupledPush:
        r = gen.random(3 * len(self.plan)) if self.plan else ()
        dg: dict[int, int | None] = {}
        dh: dict[int, int | None] = {}
        for i, (u, kind, a, c, x) in enumerate(self.plan):
            r0, r1, r2 = r[3 * i], r[3 * i + 1], r[3 * i + 2]
            if kind == "deactivated":
                dh[u] = None
                dg[u] = a[int(r0 * len(a))] if a else None
                continue
            inf_nb, non_nb = a, c
            k = len(non_nb)
            j = int(r0 * (k + self.b))
            if j < k:
                dh[u] = dg[u] = non_nb[j]
                continue
            dh[u] = self.n + (j - k)
            if not inf_nb and not non_nb:
                dg[u] = None
            elif r1 < x:
                dg[u] = non_nb[int(r2 * k)]
            else:
                dg[u] = inf_nb[int(r2 * len(inf_nb))]
        new_g = {v for v in dg.values() if v is not None and v not in self.informed}
        new_h = {v for v in dh.values() if v is not None and v < self.n and v not in self.informed}
        return CoupledPush(len(new_g), len(new_h), new_h <= new_g, dg, dh)

    def sample_batch(self, gen: np.random.Generator, trials: int) -> "CoupledBatch":
        """``trials`` independent coupled Pushes at once, same branch logic as ``sample``."""
        m = len(self.plan)
        dg = np.full((trials, m), -1, dtype=np.int64)
        dh = np.full((trials, m), -1, dtype=np.int64)  # -1: no real target
        r = gen.random((trials, m, 3)) if m else np.empty((trials, 0, 3))
        for i, (u, kind, a, c, x) in enumerate(self.plan):
            r0, r1, r2 = r[:, i, 0], r[:, i, 1], r[:, i, 2]
            if kind == "deactivated":
                if a:
                    dg[:, i] = np.asarray(a)[(r0 * len(a)).astype(np.int64)]
                continue
            inf_nb, non_nb = np.asarray(a, dtype=np.int64), np.asarray(c, dtype=np.int64)
            k = len(non_nb)
            j = (r0 * (k + self.b)).astype(np.int64)
            direct = j < k
            if k:
                dg[direct, i] = dh[direct, i] = non_nb[j[direct]]
            virt = ~direct
            if k == 0 and len(inf_nb) == 0:
                continue
            to_non = virt & (r1 < x)
            to_inf = virt & ~(r1 < x)
            if k:
                dg[to_non, i] = non_nb[(r2[to_non] * k).astype(np.int64)]
            if len(inf_nb):
                dg[to_inf, i] = inf_nb[(r2[to_inf] * len(inf_nb)).astype(np.int64)]
        informed = np.zeros(self.n + 1, dtype=bool)
        informed[list(self.informed)] = True
        rows = np.arange(trials)[:, None]
        hit_g = np.zeros((trials, self.n + 1), dtype=bool)
        hit_h = np.zeros((trials, self.n + 1), dtype=bool)
        hit_g[rows, np.where(dg < 0, self.n, dg)] = True
        hit_h[rows, np.where(dh < 0, self.n, dh)] = True
        hit_g[:, informed] = False
        hit_h[:, informed] = False
        hit_g[:, self.n] = hit_h[:, self.n] = False
        contained = ~np.any(hit_h & ~hit_g, axis=1)
        return CoupledBatch(hit_g.sum(axis=1), hit_h.sum(axis=1), contained, dg)


class CoupledBatch(NamedTuple):
    x: np.ndarray
    y: np.ndarray
    containment: np.ndarray
    delta_g: np.ndarray  # trials x informed nodes (sorted), -1 for no push


def coupled_push_modified(g: GraphSnapshot, informed: Iterable[int], b: int, rng) -> CoupledPush:
    """One coupled Push on G and its (I, b)-modified graph.

    X counts new nodes informed in G, Y new real nodes informed in H.
    Informed nodes with deg_G > b push in G with independent randomness;
    isolated informed nodes with deg_G <= b push only into virtual nodes.
    """
    return VirtualCoupler(g, informed, b).sample(as_generator(rng))


# --------------------------------------------------------------------------
# Time-window coupling


class WindowSample(NamedTuple):
    seq_informed: frozenset[int]
    union_informed: frozenset[int]
    containment: bool
    delta_h: dict[int, int | None]


def coupled_push_window(snapshots: Sequence[GraphSnapshot], informed: Iterable[int], rng) -> WindowSample:
    """T Push rounds on the sequence, coupled with one Push on the union graph.

    For each initially informed u, delta_H starts at u's round-1 choice and
    switches to its round-t choice only if that choice is a neighbour u has
    not had before and an independent coin C_t ~ Bernoulli(d_t / h_t) lands 1,
    where d_t = |N_t(u)| and h_t = |N_1(u) | ... | N_t(u)|.
    """
    if not snapshots:
        raise ValueError("empty snapshot sequence")
    n = snapshots[0].n
    if any(g.n != n for g in snapshots):
        raise ValueError("snapshots must share the node count")
    gen = as_generator(rng)
    start = sorted({int(u) for u in informed})
    cur = np.zeros(n, dtype=bool)
    cur[start] = True
    seen: dict[int, set[int]] = {u: set() for u in start}
    delta_h: dict[int, int | None] = {u: None for u in start}
    for t, g in enumerate(snapshots):
        active, targets = push_choices(g, np.flatnonzero(cur), gen)
        picked = dict(zip(active.tolist(), targets.tolist()))
        for u in start:
            nb = g.neighbors(u).tolist()
            if t == 0:
                delta_h[u] = picked.get(u)
            elif nb:
                ht = len(seen[u].union(nb))
                coin = gen.random() < len(nb) / ht
                if coin and picked[u] not in seen[u]:
                    delta_h[u] = picked[u]
            seen[u].update(nb)
        cur[targets] = True
    seq = frozenset(np.flatnonzero(cur).tolist())
    union = frozenset(start) | {v for v in delta_h.values() if v is not None}
    return WindowSample(seq, union, union <= seq, delta_h)


def window_choice_distribution(neighborhoods: Sequence[Iterable[int]]) -> list[dict[int | None, Fraction]]:
    """Exact law of delta_{H_t}(u) for t = 1..T by enumerating the coupling space.

    ``neighborhoods[t]`` is N_{t+1}(u). Enumerates every (delta_G_t, C_t)
    outcome; None means u has had no neighbour yet.
    """
    nbs = [sorted(set(nb)) for nb in neighborhoods]
    if not nbs:
        raise ValueError("empty window")
    out = []
    dist: dict[int | None, Fraction] = {}
    if nbs[0]:
        for v in nbs[0]:
            dist[v] = Fraction(1, len(nbs[0]))
    else:
        dist[None] = Fraction(1)
    out.append(dict(dist))
    seen = set(nbs[0])
    for nb in nbs[1:]:
        if nb:
            d = len(nb)
            ht = len(seen.union(nb))
            p_coin = Fraction(d, ht)
            nxt: dict[int | None, Fraction] = {}
            for prev, pr in dist.items():
                for choice in nb:
                    for coin, pc in ((1, p_coin), (0, 1 - p_coin)):
                        w = pr * Fraction(1, d) * pc
                        if w == 0:
                            continue
                        val = choice if coin and choice not in seen else prev
                        nxt[val] = nxt.get(val, 0) + w
            dist = nxt
        seen.update(nb)
        out.append(dict(dist))
    return out


# --------------------------------------------------------------------------
# Static-graph absorption oracle


def absorption_time(g: GraphSnapshot, source: int) -> Fraction:
    """Exact expected Push completion time on a static graph.

    Brute force over the 2^n informed-set chain: transitions come from
    enumerating every joint neighbour choice with itertools.product.
    """
    n = g.n
    nbrs = [g.neighbors(u).tolist() for u in range(n)]
    full = frozenset(range(n))
    memo: dict[frozenset[int], Fraction] = {full: Fraction(0)}

    def transitions(s: frozenset[int]) -> dict[frozenset[int], Fraction]:
        pushers = [u for u in sorted(s) if nbrs[u]]
        total = math.prod(len(nbrs[u]) for u in pushers)
        out: dict[frozenset[int], Fraction] = {}
        for combo in itertools.product(*(nbrs[u] for u in pushers)):
            s2 = s | frozenset(combo)
            out[s2] = out.get(s2, 0) + Fraction(1, total)
        return out

    def expect(s: frozenset[int]) -> Fraction:
        if s in memo:
            return memo[s]
        tr = transitions(s)
        stay = tr.pop(s, Fraction(0))
        if stay == 1:
            raise ValueError("Push never completes from this state")
        val = (1 + sum(pr * expect(s2) for s2, pr in tr.items())) / (1 - stay)
        memo[s] = val
        return val

    return expect(frozenset([source]))
