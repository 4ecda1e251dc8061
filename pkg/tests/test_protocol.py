import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dynpush.dyngraph import GraphSnapshot, IndependentGnp, RngStream, Static, edge_markov, sample_gnp
from dynpush.protocol import (
    Instruments,
    RunRecord,
    as_mask,
    default_max_rounds,
    flood_step,
    node_set,
    push_step,
    run_protocol,
    source_only_run,
)


def test_k2_completes_in_one_round():
    rec = run_protocol(edge_markov(2, 1.0, 0.0), "push", 0, 10, RngStream(0))
    assert rec.completion_round == 1
    assert rec.trajectory == [1, 2]
    assert rec.messages_total == 1


def test_no_edges_times_out():
    rec = run_protocol(edge_markov(8, 0.0, 0.0, "empty"), "push", 0, 25, RngStream(0))
    assert rec.timed_out and rec.completion_round is None
    assert rec.trajectory == [1] * 26
    assert rec.messages_total == 0  # isolated nodes do not push


def test_single_node_is_complete_at_zero():
    rec = run_protocol(Static(GraphSnapshot.empty(1)), "push", 0, 5, RngStream(0))
    assert rec.completion_round == 0


def test_push_step_on_star():
    g = GraphSnapshot.from_edges(4, [(0, 1), (0, 2), (0, 3)])
    new, msgs = push_step(g, [0], RngStream(1))
    assert msgs == 1 and new.sum() == 2 and new[0]


def test_flood_step_is_neighbourhood_closure():
    g = sample_gnp(30, 0.1, RngStream(3))
    informed = {0, 5, 9}
    new, msgs = flood_step(g, informed)
    want = set(informed)
    for u in informed:
        want |= set(g.neighbors(u).tolist())
    assert node_set(new) == want
    assert msgs == sum(g.degrees[u] for u in informed)


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 60), st.floats(0.01, 0.5), st.integers(0, 10**6))
def test_push_at_most_doubles_and_is_monotone(n, p, seed):
    rec = run_protocol(IndependentGnp(n, p), "push", 0, 40, RngStream(seed))
    t = rec.trajectory
    assert all(b >= a for a, b in zip(t, t[1:]))
    assert all(b <= 2 * a for a, b in zip(t, t[1:]))
    assert all(m <= n for m in t)
    if rec.completion_round is not None:
        assert t[rec.completion_round] == n
        assert rec.completion_round >= math.ceil(math.log2(n))


@settings(max_examples=20, deadline=None)
@given(st.integers(2, 50), st.floats(0.02, 0.5), st.floats(0.05, 1), st.integers(0, 10**6))
def test_flooding_never_slower_than_push_on_same_snapshots(n, p, q, seed):
    m = edge_markov(n, p, q)
    push = run_protocol(m, "push", 0, 60, RngStream(seed))
    flood = run_protocol(m, "flooding", 0, 60, RngStream(seed))
    # flooding's informed set contains push's at every round on a shared sequence
    assert all(f >= pu for f, pu in zip(flood.trajectory, push.trajectory))


def test_same_stream_reproduces_record():
    m = edge_markov(200, 0.01, 0.3)
    a = run_protocol(m, "push", 3, 500, RngStream(5, 9))
    b = run_protocol(m, "push", 3, 500, RngStream(5, 9))
    assert a == b
    assert a.source == 3


def test_initial_informed_count_and_set():
    m = edge_markov(50, 0.05, 0.5)
    rec = run_protocol(m, "push", 0, 100, RngStream(1), initial_informed=7)
    assert rec.trajectory[0] == 7
    rec = run_protocol(m, "push", 0, 100, RngStream(1), initial_informed=[3, 4])
    assert rec.trajectory[0] == 3
    with pytest.raises(ValueError):
        run_protocol(m, "push", 0, 100, RngStream(1), initial_informed=51)


def test_bad_arguments():
    m = edge_markov(5, 0.1, 0.1)
    with pytest.raises(ValueError):
        run_protocol(m, "pull", 0, 5, RngStream(0))
    with pytest.raises(ValueError):
        run_protocol(m, "push", 5, 5, RngStream(0))
    with pytest.raises(ValueError):
        run_protocol(m, "push", 0, 0, RngStream(0))
    with pytest.raises(ValueError):
        as_mask([7], 5)


def test_default_max_rounds():
    assert default_max_rounds(1024, 1 / 1024) == 2000
    # sparse independent regime: ln n / (n p) dominates
    n = 64
    assert default_max_rounds(n, n**-1.5) == math.ceil(200 * math.log(n) / (n * n**-1.5))
    assert default_max_rounds(8, 0.0) == 600


def test_instruments_bootstrap_and_bounded_degree():
    n = 512
    inst = Instruments(bounded_degree=True, bd_rounds=5, bootstrap_gamma=2.0, switch_count=True)
    rec = run_protocol(edge_markov(n, 1 / n, 0.5), "push", 0, 2000, RngStream(2), inst)
    target = math.ceil(2.0 * math.log(n))
    assert rec.bootstrap_round is not None
    assert rec.trajectory[rec.bootstrap_round] >= target > rec.trajectory[rec.bootstrap_round - 1]
    assert rec.bd_rounds_checked == 5
    assert 0 <= rec.bd_violations <= 5
    assert rec.switch_total > 0


def test_bounded_degree_skipped_without_deaths():
    rec = run_protocol(Static(GraphSnapshot.complete(5)), "push", 0, 50, RngStream(0), Instruments(bounded_degree=True))
    assert rec.bd_violations is None


def test_record_dict_roundtrip_through_json():
    rec = source_only_run(edge_markov(300, 1 / 300, 0.5), 0, 20, 500, RngStream(4))
    back = RunRecord.from_dict(json.loads(json.dumps(rec.to_dict())))
    assert back == rec
    assert back.events.rounds == rec.events.rounds


def test_source_only_only_source_sends():
    n = 300
    rec = source_only_run(edge_markov(n, 1 / n, 0.5), 0, 15, 1000, RngStream(6))
    t = rec.trajectory
    assert all(b - a in (0, 1) for a, b in zip(t, t[1:]))
    assert rec.messages_total <= len(t) - 1
    ev = rec.events
    assert ev.rounds == len(t) - 1
    assert ev.s1 == t[-1] - 1
    assert ev.not_f + ev.f == ev.rounds
    assert ev.s1_or_s2_given_not_f <= ev.not_f


def test_source_only_events_on_hand_sequence():
    # source 0; G_0 empty, G_1 = {01}, G_2 = {01, 02}, G_3 = {02}
    seq = [
        GraphSnapshot.empty(3),
        GraphSnapshot.from_edges(3, [(0, 1)]),
        GraphSnapshot.from_edges(3, [(0, 1), (0, 2)]),
        GraphSnapshot.from_edges(3, [(0, 2)]),
    ]

    class Seq(Static):
        def snapshots(self, rng):
            yield from seq

    rec = source_only_run(Seq(seq[0]), 0, 3, 3, RngStream(0))
    ev = rec.events
    # round 1 informs 1 (S1); D_1 = 1. Round 2 either informs 2 (S1) or wastes a push.
    assert rec.trajectory[1] == 2
    assert ev.f == 0  # no edge to an already informed node ever reappears
    if rec.trajectory[2] == 2:
        # round 3: edge 0-1 vanished so D drops (S2) and 0 must inform 2 (S1)
        assert rec.completion_round == 3
        assert ev.s2 == 1


def test_node_set_and_mask_roundtrip():
    mask = as_mask({1, 4}, 6)
    assert node_set(mask) == frozenset({1, 4})
    assert as_mask(mask, 6) is mask
    with pytest.raises(ValueError):
        as_mask(np.zeros(3, dtype=bool), 6)
