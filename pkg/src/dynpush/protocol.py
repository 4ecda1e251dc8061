"""Push and Flooding over a sequence of snapshots.

Round convention: I_0 = {source} (plus any extra initially informed nodes)
and G_0 is the model's initial snapshot. Round t >= 1 draws G_t and then
every node informed by the end of round t-1 acts on G_t. Nodes informed in
round t first push in round t+1.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Iterable

import numpy as np

from .dyngraph import EvolvingModel, GraphSnapshot, RngStream, as_generator, switched_pairs
from . import stats

PROTOCOLS = ("push", "flooding", "source_only")


def as_mask(informed, n: int) -> np.ndarray:
    """Boolean membership mask from a mask, or an iterable of node ids."""
    if isinstance(informed, np.ndarray) and informed.dtype == bool:
        if informed.shape != (n,):
            raise ValueError(f"mask must have shape ({n},)")
        return informed
    mask = np.zeros(n, dtype=bool)
    ids = np.fromiter((int(x) for x in informed), dtype=np.int64)
    if ids.size and (ids.min() < 0 or ids.max() >= n):
        raise ValueError(f"node id out of range [0, {n})")
    mask[ids] = True
    return mask


def node_set(mask: np.ndarray) -> frozenset[int]:
    return frozenset(np.flatnonzero(mask).tolist())


def push_choices(snapshot: GraphSnapshot, senders: np.ndarray, gen: np.random.Generator):
    """Each sender with degree >= 1 picks one neighbour uniformly at random.

    Returns ``(active_senders, targets)`` as aligned arrays.
    """
    indptr, nbrs = snapshot.adjacency
    deg = indptr[senders + 1] - indptr[senders]
    active = senders[deg > 0]
    d = deg[deg > 0]
    if active.size == 0:
        return active, active
    off = np.minimum((gen.random(active.size) * d).astype(np.int64), d - 1)
    return active, nbrs[indptr[active] + off]


def push_step(snapshot: GraphSnapshot, informed, rng) -> tuple[np.ndarray, int]:
    """One synchronous Push round; returns (new informed mask, messages sent)."""
    gen = as_generator(rng)
    mask = as_mask(informed, snapshot.n)
    active, targets = push_choices(snapshot, np.flatnonzero(mask), gen)
    new = mask.copy()
    new[targets] = True
    return new, int(active.size)


def flood_step(snapshot: GraphSnapshot, informed) -> tuple[np.ndarray, int]:
    """One Flooding round: informed nodes transmit on every incident edge."""
    mask = as_mask(informed, snapshot.n)
    u, v = snapshot.endpoints
    from_u = mask[u]
    from_v = mask[v]
    new = mask.copy()
    new[v[from_u]] = True
    new[u[from_v]] = True
    return new, int(from_u.sum() + from_v.sum())


def default_max_rounds(n: int, p: float) -> int:
    """ceil(200 * max(log2 n, ln n / (n * phat))), at least 1."""
    base = math.log2(n) if n > 1 else 1.0
    ph = stats.phat(n, p)
    if ph > 0 and n > 1:
        base = max(base, math.log(n) / (n * ph))
    return max(1, math.ceil(200 * base))


@dataclass(frozen=True)
class Instruments:
    bounded_degree: bool = False
    bd_rounds: int | None = None  # None: check every round
    bootstrap_gamma: float | None = 10.0
    switch_count: bool = False


@dataclass
class BootstrapEvents:
    """Per-round indicator tallies from a source-only run."""

    rounds: int = 0
    s1: int = 0
    s2: int = 0
    f: int = 0
    not_f: int = 0
    s1_or_s2_given_not_f: int = 0

    @property
    def conditional_rate(self) -> float:
        return self.s1_or_s2_given_not_f / self.not_f if self.not_f else float("nan")


@dataclass
class RunRecord:
    model: str
    n: int
    p: float
    q: float
    initial: str
    protocol: str
    source: int
    seed: int
    stream_id: int
    completion_round: int | None  # None is the timeout sentinel
    max_rounds: int
    trajectory: list[int]
    messages_total: int
    bootstrap_round: int | None = None
    bd_violations: int | None = None
    bd_max_ratio: float | None = None
    bd_rounds_checked: int | None = None
    switch_total: int | None = None
    events: BootstrapEvents | None = None

    @property
    def timed_out(self) -> bool:
        return self.completion_round is None

    def to_dict(self) -> dict:
        d = asdict(self)
        d["timed_out"] = self.timed_out
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RunRecord":
        d = dict(d)
        d.pop("timed_out", None)
        if d.get("events") is not None:
            d["events"] = BootstrapEvents(**d["events"])
        return cls(**d)


def _initial_mask(n: int, source: int, initial_informed, gen) -> np.ndarray:
    mask = np.zeros(n, dtype=bool)
    mask[source] = True
    if initial_informed is None or initial_informed == 1:
        return mask
    if isinstance(initial_informed, (int, np.integer)):
        k = int(initial_informed)
        if not 1 <= k <= n:
            raise ValueError("initial informed count must lie in [1, n]")
        others = np.delete(np.arange(n), source)
        mask[gen.choice(others, size=k - 1, replace=False)] = True
        return mask
    return as_mask(initial_informed, n) | mask


def _bootstrap_target(n: int, gamma: float | None) -> int | None:
    if gamma is None or n < 2:
        return None
    return math.ceil(gamma * math.log(n))


def run_protocol(
    model: EvolvingModel,
    protocol: str,
    source: int,
    max_rounds: int,
    rng: RngStream,
    instruments: Instruments | None = None,
    initial_informed: int | Iterable[int] | None = None,
) -> RunRecord:
    """Run Push or Flooding until everyone is informed or ``max_rounds`` pass.

    ``initial_informed`` is either a count (the source plus that many minus
    one uniformly chosen other nodes) or an explicit collection of nodes.
    Graph, protocol and initial-set randomness come from separate children
    of ``rng``, so Push and Flooding under the same stream see the same
    snapshot sequence.
    """
    if protocol not in ("push", "flooding"):
        raise ValueError(f"unknown protocol {protocol!r}")
    n = model.n
    if not 0 <= source < n:
        raise ValueError("source out of range")
    if max_rounds < 1:
        raise ValueError("max_rounds must be >= 1")
    inst = instruments or Instruments()
    if not isinstance(rng, RngStream):
        rng = RngStream(int(rng))
    graphs = model.snapshots(rng.child("graph"))
    push_gen = rng.child("protocol").generator()
    informed = _initial_mask(n, source, initial_informed, rng.child("initial").generator())

    count = int(informed.sum())
    trajectory = [count]
    messages = 0
    target = _bootstrap_target(n, inst.bootstrap_gamma)
    boot = 0 if target is not None and count >= target else None
    check_bd = inst.bounded_degree and model.q > 0 and model.p + model.q > 0
    bd_viol, bd_ratio, bd_checked = (0, 0.0, 0) if check_bd else (None, None, None)
    switches = 0 if inst.switch_count else None
    completion = 0 if count == n else None

    prev = next(graphs)
    t = 0
    while completion is None and t < max_rounds:
        t += 1
        g = next(graphs)
        if switches is not None:
            switches += switched_pairs(prev, g)
        if check_bd and (inst.bd_rounds is None or t <= inst.bd_rounds):
            ratio = stats.bounded_degree_ratio(g, informed, model.p, model.q)
            bd_checked += 1
            bd_ratio = max(bd_ratio, ratio)
            if ratio > 1.0:
                bd_viol += 1
        if protocol == "push":
            active, targets = push_choices(g, np.flatnonzero(informed), push_gen)
            informed = informed.copy()
            informed[targets] = True
            messages += int(active.size)
        else:
            informed, sent = flood_step(g, informed)
            messages += sent
        count = int(informed.sum())
        trajectory.append(count)
        if boot is None and target is not None and count >= target:
            boot = t
        if count == n:
            completion = t
        prev = g

    return RunRecord(
        model=model.describe(),
        n=n,
        p=float(model.p),
        q=float(model.q),
        initial=model.initial_label(),
        protocol=protocol,
        source=source,
        seed=rng.seed,
        stream_id=rng.stream_id,
        completion_round=completion,
        max_rounds=max_rounds,
        trajectory=trajectory,
        messages_total=messages,
        bootstrap_round=boot,
        bd_violations=bd_viol,
        bd_max_ratio=bd_ratio,
        bd_rounds_checked=bd_checked,
        switch_total=switches,
    )


def source_only_run(
    model: EvolvingModel,
    source: int,
    target_informed: int,
    max_rounds: int,
    rng: RngStream,
) -> RunRecord:
    """Only the source pushes; stops once ``target_informed`` nodes know the rumour.

    Per round t it also tallies, with D_t = #edges of G_t between the source
    and the informed set after round t:

    * S1: the source informs a new node in round t;
    * S2: D_t <= D_{t-1} - 1;
    * F:  some edge from the source to a node informed before round t is
      absent in G_{t-1} and present in G_t.
    """
    n = model.n
    if not 0 <= source < n:
        raise ValueError("source out of range")
    if not 1 <= target_informed <= n:
        raise ValueError("target_informed must lie in [1, n]")
    if not isinstance(rng, RngStream):
        rng = RngStream(int(rng))
    graphs = model.snapshots(rng.child("graph"))
    gen = rng.child("protocol").generator()
    informed = np.zeros(n, dtype=bool)
    informed[source] = True
    count = 1
    trajectory = [1]
    messages = 0
    ev = BootstrapEvents()
    completion = 0 if count >= target_informed else None

    prev_nbrs = next(graphs).neighbors(source)
    prev_deg = 0  # the source has no informed neighbour at t = 0
    t = 0
    while completion is None and t < max_rounds:
        t += 1
        g = next(graphs)
        nbrs = g.neighbors(source)
        informed_before = informed
        # edges to previously informed nodes that are new in G_t
        new_edges = np.setdiff1d(nbrs, prev_nbrs, assume_unique=True)
        f_event = bool(informed_before[new_edges].any())
        s1 = False
        if nbrs.size:
            target = int(nbrs[min(int(gen.random() * nbrs.size), nbrs.size - 1)])
            messages += 1
            if not informed[target]:
                informed = informed.copy()
                informed[target] = True
                count += 1
                s1 = True
        deg_now = int(informed[nbrs].sum())
        s2 = deg_now <= prev_deg - 1
        ev.rounds += 1
        ev.s1 += s1
        ev.s2 += s2
        ev.f += f_event
        if not f_event:
            ev.not_f += 1
            ev.s1_or_s2_given_not_f += s1 or s2
        trajectory.append(count)
        if count >= target_informed:
            completion = t
        prev_nbrs, prev_deg = nbrs, deg_now

    return RunRecord(
        model=model.describe(),
        n=n,
        p=float(model.p),
        q=float(model.q),
        initial=model.initial_label(),
        protocol="source_only",
        source=source,
        seed=rng.seed,
        stream_id=rng.stream_id,
        completion_round=completion,
        max_rounds=max_rounds,
        trajectory=trajectory,
        messages_total=messages,
        bootstrap_round=completion,
        events=ev,
    )
