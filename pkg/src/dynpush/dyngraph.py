"""Random graph models: G(n,p) snapshots and edge-Markovian evolution.

A snapshot stores its edges as a sorted array of lexicographic pair indices
k(u, v) = u*n - u*(u+1)/2 + (v - u - 1), u < v. Every sampler in the package
draws pairs in that order, so a (seed, stream) pair fixes the exact sequence.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Iterator, Sequence

import numpy as np

# Dense per-pair updates above this stationary density; rejection below.
DENSE_THRESHOLD = 0.1


class UndefinedStationaryError(ValueError):
    """p + q == 0: the two-state edge chain has no stationary distribution."""


class ShapeError(ValueError):
    pass


def pair_count(n: int) -> int:
    return n * (n - 1) // 2


def pair_index(u, v, n: int):
    """Lexicographic index of the unordered pair {u, v}; works on arrays."""
    u = np.asarray(u, dtype=np.int64)
    v = np.asarray(v, dtype=np.int64)
    lo = np.minimum(u, v)
    hi = np.maximum(u, v)
    return lo * n - lo * (lo + 1) // 2 + (hi - lo - 1)


def pair_endpoints(k, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Inverse of :func:`pair_index`."""
    k = np.asarray(k, dtype=np.int64)
    if k.size == 0:
        return np.empty(0, np.int64), np.empty(0, np.int64)
    b = 2 * n - 1
    u = np.floor((b - np.sqrt(b * b - 8.0 * k)) / 2).astype(np.int64)
    u = np.clip(u, 0, n - 2)
    # float rounding can leave u off by one in either direction
    start = u * n - u * (u + 1) // 2
    u = np.where(start > k, u - 1, u)
    start = u * n - u * (u + 1) // 2
    nxt = (u + 1) * n - (u + 1) * (u + 2) // 2
    u = np.where(k >= nxt, u + 1, u)
    start = u * n - u * (u + 1) // 2
    v = k - start + u + 1
    return u, v


# --------------------------------------------------------------------------
# RNG streams


def stream_hash(*parts) -> int:
    """Stable 64-bit hash of a tuple of ints/strings (blake2b)."""
    h = hashlib.blake2b(digest_size=8)
    for part in parts:
        h.update(repr(part).encode())
        h.update(b"\x1f")
    return int.from_bytes(h.digest(), "little")


@dataclass(frozen=True)
class RngStream:
    """A reproducible random stream: PCG64 seeded from SeedSequence(seed, (stream_id,)).

    ``generator()`` always returns a fresh generator at the start of the
    stream; ``child(purpose)`` derives an independent sub-stream.
    """

    seed: int
    stream_id: int = 0

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(self.seed & (2**64 - 1), spawn_key=(self.stream_id & (2**64 - 1),))
        return np.random.Generator(np.random.PCG64(ss))

    def child(self, *purpose) -> "RngStream":
        return RngStream(self.seed, stream_hash(self.stream_id, *purpose))


def as_generator(rng) -> np.random.Generator:
    if isinstance(rng, RngStream):
        return rng.generator()
    if isinstance(rng, np.random.Generator):
        return rng
    if rng is None or isinstance(rng, (int, np.integer)):
        return np.random.default_rng(rng)
    raise TypeError(f"cannot make a generator from {type(rng).__name__}")


# --------------------------------------------------------------------------
# Snapshots


@dataclass(frozen=True, eq=False)
class GraphSnapshot:
    """One time step's undirected simple graph on nodes 0..n-1."""

    n: int
    pairs: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.pairs.setflags(write=False)

    @classmethod
    def from_edges(cls, n: int, edges: Iterable[tuple[int, int]]) -> "GraphSnapshot":
        edges = list(edges)
        if n < 0:
            raise ValueError("node count must be non-negative")
        if not edges:
            return cls.empty(n)
        arr = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        u, v = arr[:, 0], arr[:, 1]
        if np.any(u == v):
            raise ValueError("self-loops are not allowed")
        if np.any(arr < 0) or np.any(arr >= n):
            raise ValueError(f"edge endpoint out of range [0, {n})")
        return cls(n, np.unique(pair_index(u, v, n)))

    @classmethod
    def from_pairs(cls, n: int, pairs) -> "GraphSnapshot":
        pairs = np.unique(np.asarray(pairs, dtype=np.int64))
        if pairs.size and (pairs[0] < 0 or pairs[-1] >= pair_count(n)):
            raise ValueError("pair index out of range")
        return cls(n, pairs)

    @classmethod
    def _trusted(cls, n: int, sorted_pairs: np.ndarray) -> "GraphSnapshot":
        return cls(n, np.ascontiguousarray(sorted_pairs, dtype=np.int64))

    @classmethod
    def empty(cls, n: int) -> "GraphSnapshot":
        return cls(n, np.empty(0, np.int64))

    @classmethod
    def complete(cls, n: int) -> "GraphSnapshot":
        return cls(n, np.arange(pair_count(n), dtype=np.int64))

    @property
    def m(self) -> int:
        return int(self.pairs.size)

    @cached_property
    def endpoints(self) -> tuple[np.ndarray, np.ndarray]:
        return pair_endpoints(self.pairs, self.n)

    @property
    def edges(self) -> list[tuple[int, int]]:
        u, v = self.endpoints
        return list(zip(u.tolist(), v.tolist()))

    @cached_property
    def adjacency(self) -> tuple[np.ndarray, np.ndarray]:
        """CSR form (indptr, neighbors); neighbors of each node in ascending order."""
        u, v = self.endpoints
        src = np.concatenate([u, v])
        dst = np.concatenate([v, u])
        order = np.argsort(src * self.n + dst)
        counts = np.bincount(src, minlength=self.n)
        indptr = np.zeros(self.n + 1, dtype=np.int64)
        np.cumsum(counts, out=indptr[1:])
        return indptr, dst[order]

    @cached_property
    def degrees(self) -> np.ndarray:
        indptr, _ = self.adjacency
        return np.diff(indptr)

    def neighbors(self, u: int) -> np.ndarray:
        if "adjacency" not in self.__dict__:
            return self._neighbors_from_pairs(int(u))
        indptr, nbrs = self.adjacency
        return nbrs[indptr[u]:indptr[u + 1]]

    def _neighbors_from_pairs(self, u: int) -> np.ndarray:
        # one-off lookup without building the CSR form
        n = self.n
        if not 0 <= u < n:
            raise IndexError(f"node {u} out of range")
        below = np.empty(0, dtype=np.int64)
        if u > 0:
            lower = np.arange(u, dtype=np.int64)
            ks = pair_index(lower, np.full(u, u, dtype=np.int64), n)
            idx = np.searchsorted(self.pairs, ks)
            ok = idx < self.pairs.size
            ok[ok] = self.pairs[idx[ok]] == ks[ok]
            below = lower[ok]
        above = np.empty(0, dtype=np.int64)
        if u < n - 1:
            base = int(pair_index(u, u + 1, n))
            i, j = np.searchsorted(self.pairs, [base, base + (n - u - 1)])
            above = self.pairs[i:j] - base + u + 1
        return np.concatenate([below, above])

    def has_edge(self, u: int, v: int) -> bool:
        if u == v:
            return False
        k = int(pair_index(u, v, self.n))
        i = np.searchsorted(self.pairs, k)
        return bool(i < self.pairs.size and self.pairs[i] == k)

    def __eq__(self, other):
        if not isinstance(other, GraphSnapshot):
            return NotImplemented
        return self.n == other.n and np.array_equal(self.pairs, other.pairs)

    def __hash__(self):
        return hash((self.n, self.pairs.tobytes()))

    def to_edgelist(self) -> str:
        lines = [f"{self.n} {self.m}"]
        lines.extend(f"{u} {v}" for u, v in self.edges)
        return "\n".join(lines) + "\n"

    @classmethod
    def from_edgelist(cls, text: str) -> "GraphSnapshot":
        rows = [ln.split() for ln in text.strip().splitlines() if ln.strip()]
        if not rows or len(rows[0]) != 2:
            raise ValueError("edge list must start with 'n m'")
        n, m = int(rows[0][0]), int(rows[0][1])
        if len(rows) - 1 != m:
            raise ValueError(f"header announces {m} edges, found {len(rows) - 1}")
        edges = []
        for i, row in enumerate(rows[1:], start=2):
            if len(row) != 2:
                raise ValueError(f"line {i}: expected 'u v'")
            edges.append((int(row[0]), int(row[1])))
        g = cls.from_edges(n, edges)
        if g.m != m:
            raise ValueError("duplicate edges in edge list")
        return g


# --------------------------------------------------------------------------
# Samplers


def _check_prob(x: float, name: str) -> float:
    x = float(x)
    if not 0.0 <= x <= 1.0 or math.isnan(x):
        raise ValueError(f"{name} must lie in [0, 1], got {x}")
    return x


def _bernoulli_positions(total: int, p: float, gen: np.random.Generator) -> np.ndarray:
    """Indices in [0, total) each kept independently w.p. p, by geometric skipping."""
    if total <= 0 or p <= 0.0:
        return np.empty(0, np.int64)
    if p >= 1.0:
        return np.arange(total, dtype=np.int64)
    if p > 0.25:
        return np.flatnonzero(gen.random(total) < p).astype(np.int64)
    chunks = []
    pos = -1
    mean = total * p
    batch = int(mean + 5.0 * math.sqrt(mean) + 16)
    while True:
        # clamp so tiny p cannot overflow the running sum
        gaps = np.minimum(gen.geometric(p, size=batch), total + 1)
        idx = pos + np.cumsum(gaps)
        if idx[-1] >= total:
            chunks.append(idx[idx < total])
            break
        chunks.append(idx)
        pos = int(idx[-1])
        batch = max(16, batch // 4)
    return np.concatenate(chunks).astype(np.int64)


def sample_gnp(n: int, p: float, rng) -> GraphSnapshot:
    """Erdos-Renyi G(n, p): every pair present independently with probability p."""
    p = _check_prob(p, "p")
    gen = as_generator(rng)
    return GraphSnapshot._trusted(n, _bernoulli_positions(pair_count(n), p, gen))


def _isin_sorted(values: np.ndarray, sorted_ref: np.ndarray) -> np.ndarray:
    if sorted_ref.size == 0:
        return np.zeros(values.shape, dtype=bool)
    i = np.searchsorted(sorted_ref, values)
    i = np.minimum(i, sorted_ref.size - 1)
    return sorted_ref[i] == values


def _sample_absent(total: int, k: int, present: np.ndarray, gen: np.random.Generator) -> np.ndarray:
    """Uniform k-subset of [0, total) \\ present, by rejection in draw order."""
    if k <= 0:
        return np.empty(0, np.int64)
    accept = max((total - present.size) / total, 1e-3)
    chosen = np.empty(0, np.int64)
    while chosen.size < k:
        need = k - chosen.size
        cand = gen.integers(0, total, size=int(need / accept * 1.1) + 8)
        cand = cand[~_isin_sorted(cand, present)]
        combined = np.concatenate([chosen, cand])
        _, first = np.unique(combined, return_index=True)
        first.sort()
        chosen = combined[first][:k]
    return chosen


def evolve_step(current: GraphSnapshot, p: float, q: float, rng) -> GraphSnapshot:
    """One edge-Markovian step: absent pairs appear w.p. p, present edges die w.p. q."""
    p = _check_prob(p, "p")
    q = _check_prob(q, "q")
    gen = as_generator(rng)
    n = current.n
    total = pair_count(n)
    m = current.m
    if total == 0:
        return current
    dense = p > DENSE_THRESHOLD or m > total // 2 or total <= 64
    if not dense and p + q > 0:
        dense = p / (p + q) > DENSE_THRESHOLD
    if dense:
        present = np.zeros(total, dtype=bool)
        present[current.pairs] = True
        u = gen.random(total)
        nxt = np.where(present, u >= q, u < p)
        return GraphSnapshot._trusted(n, np.flatnonzero(nxt))
    survivors = current.pairs[gen.random(m) >= q] if q > 0 else current.pairs
    births = gen.binomial(total - m, p) if p > 0 else 0
    born = _sample_absent(total, births, current.pairs, gen)
    if born.size == 0:
        return GraphSnapshot._trusted(n, survivors.copy())
    return GraphSnapshot._trusted(n, np.sort(np.concatenate([survivors, born])))


def union_window(snapshots: Sequence[GraphSnapshot]) -> GraphSnapshot:
    if not snapshots:
        raise ValueError("union of an empty window")
    n = snapshots[0].n
    if any(g.n != n for g in snapshots):
        raise ShapeError("snapshots in a window must share the node count")
    return GraphSnapshot._trusted(n, np.unique(np.concatenate([g.pairs for g in snapshots])))


def switched_pairs(before: GraphSnapshot, after: GraphSnapshot) -> int:
    """Number of pairs whose state differs between two snapshots."""
    return int(np.setxor1d(before.pairs, after.pairs, assume_unique=True).size)


# --------------------------------------------------------------------------
# Closed forms


def _require_stationary(p: float, q: float) -> None:
    if p + q <= 0:
        raise UndefinedStationaryError("p + q = 0: no stationary edge probability")


def stationary_probability(p: float, q: float) -> float:
    _require_stationary(p, q)
    return p / (p + q)


def edge_presence_probability(p: float, q: float, p0: float, t: int) -> float:
    """Pr[pair present at step t] when present at step 0 with probability p0."""
    _require_stationary(p, q)
    if t < 0:
        raise ValueError("t must be non-negative")
    if t == 0:
        return p0
    s = p / (p + q)
    return s + (p0 - s) * (1.0 - p - q) ** t


def two_step_presence_lower_bound(p: float, q: float) -> float:
    """min over the start state x of Pr[X1 = 1 or X2 = 1 | X0 = x]."""
    from_absent = p + (1 - p) * p
    from_present = (1 - q) + q * p
    return min(from_absent, from_present)


def expected_degree(n: int, p: float, q: float) -> float:
    return (n - 1) * stationary_probability(p, q)


def expected_switching_edges(n: int, p: float, q: float) -> float:
    _require_stationary(p, q)
    return n * (n - 1) * p * q / (p + q)


# --------------------------------------------------------------------------
# Models


@dataclass(frozen=True)
class Initial:
    """Initial snapshot rule: empty, complete, stationary, gnp (with p0) or explicit."""

    kind: str = "stationary"
    p0: float | None = None
    graph: GraphSnapshot | None = None

    KINDS = ("empty", "complete", "stationary", "gnp", "explicit")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown initial condition {self.kind!r}")
        if self.kind == "gnp":
            _check_prob(self.p0 if self.p0 is not None else -1.0, "p0")
        if self.kind == "explicit" and self.graph is None:
            raise ValueError("explicit initial condition needs a graph")

    @classmethod
    def parse(cls, text: str) -> "Initial":
        text = text.strip().lower()
        if text.startswith("gnp:"):
            return cls("gnp", float(text[4:]))
        return cls(text)

    def __str__(self):
        if self.kind == "gnp":
            return f"gnp:{self.p0!r}"
        return self.kind


@dataclass(frozen=True)
class EdgeMarkovParams:
    n: int
    p: float
    q: float
    initial: Initial = Initial()

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be positive")
        _check_prob(self.p, "p")
        _check_prob(self.q, "q")
        if self.initial.kind == "stationary":
            _require_stationary(self.p, self.q)
        if self.initial.kind == "explicit" and self.initial.graph.n != self.n:
            raise ShapeError("explicit initial graph has the wrong node count")

    def initial_snapshot(self, gen: np.random.Generator) -> GraphSnapshot:
        kind = self.initial.kind
        if kind == "empty":
            return GraphSnapshot.empty(self.n)
        if kind == "complete":
            return GraphSnapshot.complete(self.n)
        if kind == "stationary":
            return sample_gnp(self.n, stationary_probability(self.p, self.q), gen)
        if kind == "gnp":
            return sample_gnp(self.n, self.initial.p0, gen)
        return self.initial.graph


class EvolvingModel:
    """Base class for snapshot generators.

    Subclasses expose ``n``, ``p`` and ``q`` and ``snapshots(rng)``, which
    yields G_0, G_1, G_2, ... forever.
    """

    def snapshots(self, rng) -> Iterator[GraphSnapshot]:
        raise NotImplementedError

    def describe(self) -> str:
        raise NotImplementedError

    def initial_label(self) -> str:
        raise NotImplementedError


@dataclass(frozen=True)
class EdgeMarkov(EvolvingModel):
    params: EdgeMarkovParams

    @property
    def n(self):
        return self.params.n

    @property
    def p(self):
        return self.params.p

    @property
    def q(self):
        return self.params.q

    def snapshots(self, rng):
        gen = as_generator(rng)
        g = self.params.initial_snapshot(gen)
        yield g
        while True:
            g = evolve_step(g, self.params.p, self.params.q, gen)
            yield g

    def initial_label(self):
        return str(self.params.initial)

    def describe(self):
        return f"edge_markov(n={self.n},p={self.p!r},q={self.q!r},initial={self.params.initial})"


@dataclass(frozen=True)
class IndependentGnp(EvolvingModel):
    n: int
    p: float

    def __post_init__(self):
        _check_prob(self.p, "p")

    @property
    def q(self):
        return 1.0 - self.p

    def snapshots(self, rng):
        gen = as_generator(rng)
        while True:
            yield sample_gnp(self.n, self.p, gen)

    def initial_label(self):
        return "independent"

    def describe(self):
        return f"independent_gnp(n={self.n},p={self.p!r})"


@dataclass(frozen=True)
class Static(EvolvingModel):
    graph: GraphSnapshot

    @property
    def n(self):
        return self.graph.n

    @property
    def p(self):
        return 0.0

    @property
    def q(self):
        return 0.0

    def snapshots(self, rng):
        while True:
            yield self.graph

    def initial_label(self):
        return "static"

    def describe(self):
        return f"static(n={self.n},m={self.graph.m})"


def edge_markov(n: int, p: float, q: float, initial: Initial | str = "stationary") -> EdgeMarkov:
    if isinstance(initial, str):
        initial = Initial.parse(initial)
    return EdgeMarkov(EdgeMarkovParams(n, p, q, initial))
