import itertools
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dynpush.coupling import (
    DistributionError,
    InstanceTooLarge,
    OutcomeDistribution,
    VirtualCoupler,
    absorption_time,
    check_dominance,
    coupled_push_modified,
    coupled_push_window,
    exact_modified_push_distribution,
    exact_push_distribution,
    exact_sequence_push_distribution,
    exact_union_push_distribution,
    format_distribution,
    increasing_rate_lambda,
    modify_graph,
    parse_distribution,
    reverse_markov_check,
    virtual_coupling_marginal,
    virtual_switch_probability,
    window_choice_distribution,
)
from dynpush.dyngraph import GraphSnapshot, RngStream, sample_gnp
from dynpush.stats import NotApplicable

K2 = GraphSnapshot.complete(2)
K3 = GraphSnapshot.complete(3)
PATH3 = GraphSnapshot.from_edges(3, [(0, 1), (1, 2)])


def point(k):
    return OutcomeDistribution({k: Fraction(1)})


# -- modified graph -------------------------------------------------------


def test_modify_graph_structure():
    # star centre 0 with 4 leaves; I = {0, 1}, b = 2: 0 has degree 4 > b
    g = GraphSnapshot.from_edges(6, [(0, 1), (0, 2), (0, 3), (0, 4), (1, 5)])
    mg = modify_graph(g, {0, 1}, 2)
    assert mg.deactivated == {0}
    assert mg.graph.n == 8
    assert mg.graph.neighbors(0).size == 0
    assert mg.graph.neighbors(1).tolist() == [5, 6, 7]
    assert list(mg.virtual_nodes()) == [6, 7]
    assert not mg.graph.has_edge(0, 1)


def test_modify_graph_drops_informed_informed_edges():
    mg = modify_graph(K3, {0, 1}, 3)
    assert not mg.graph.has_edge(0, 1)
    assert mg.graph.has_edge(0, 2) and mg.graph.has_edge(1, 2)


def test_modify_graph_b_range():
    with pytest.raises(ValueError):
        modify_graph(K3, {0}, 0)
    with pytest.raises(ValueError):
        modify_graph(K3, {0}, 4)


# -- exact oracles --------------------------------------------------------


def test_exact_push_examples():
    assert exact_push_distribution(K2, {0}).by_count == {1: 1}
    d = exact_push_distribution(PATH3, {1})
    assert d.by_count == {1: 1}
    assert d.by_set == {frozenset({0, 1}): Fraction(1, 2), frozenset({1, 2}): Fraction(1, 2)}
    d = exact_push_distribution(K3, {0, 1})
    assert d.by_count == {0: Fraction(1, 4), 1: Fraction(3, 4)}


def test_exact_modified_examples():
    assert exact_modified_push_distribution(K2, {0}, 1).by_count == {0: Fraction(1, 2), 1: Fraction(1, 2)}
    assert exact_modified_push_distribution(GraphSnapshot.empty(3), {0}, 2).by_count == {0: 1}


def test_isolated_informed_nodes_do_not_push():
    g = GraphSnapshot.from_edges(4, [(1, 2)])
    assert exact_push_distribution(g, {0, 1}).by_count == {1: 1}


def test_enumeration_guard():
    g = GraphSnapshot.complete(40)
    with pytest.raises(InstanceTooLarge):
        exact_push_distribution(g, range(10))


def test_distribution_text_roundtrip():
    d = exact_push_distribution(K3, {0, 1})
    text = format_distribution(d)
    assert text == "0:1/4 1:3/4"
    assert parse_distribution(text).by_count == d.by_count


def test_sequence_of_one_matches_single_push():
    g = sample_gnp(5, 0.5, RngStream(1))
    seq = exact_sequence_push_distribution([g], {0, 2})
    single = exact_push_distribution(g, {0, 2}).shifted(2)
    assert seq.by_count == single.by_count


def test_union_of_nested_window_is_first_graph():
    g1 = GraphSnapshot.from_edges(4, [(0, 1), (0, 2)])
    g2 = GraphSnapshot.from_edges(4, [(0, 1)])
    assert exact_union_push_distribution([g1, g2], {0}).by_count == exact_union_push_distribution([g1], {0}).by_count


# -- dominance ------------------------------------------------------------


def test_check_dominance_examples():
    d = exact_push_distribution(K3, {0, 1})
    assert check_dominance(d, d)
    assert check_dominance(point(3), point(1))
    assert not check_dominance(point(1), point(3))
    with pytest.raises(DistributionError):
        check_dominance(OutcomeDistribution({0: Fraction(1, 2)}), point(0))


def test_check_dominance_float_tolerance():
    a = OutcomeDistribution({0: 0.5, 1: 0.5})
    b = OutcomeDistribution({0: 0.5 - 1e-14, 1: 0.5 + 1e-14})
    assert check_dominance(b, a) and check_dominance(a, b)


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 6), st.floats(0.1, 0.9), st.integers(0, 10**6), st.data())
def test_virtual_nodes_dominance_random(n, p, seed, data):
    g = sample_gnp(n, p, RngStream(seed))
    informed = data.draw(st.sets(st.integers(0, n - 1), min_size=1))
    b = data.draw(st.integers(1, n))
    x = exact_push_distribution(g, informed)
    y = exact_modified_push_distribution(g, informed, b)
    assert check_dominance(x, y)


# -- virtual-node coupling -----------------------------------------------


def test_switch_probability_and_marginals():
    assert virtual_switch_probability(0, 0, 3) == 0
    assert virtual_switch_probability(1, 1, 2) == Fraction(1, 4)
    for b in range(1, 7):
        for h in range(b + 1):
            for k in range(b + 1 - h):
                if h + k == 0:
                    continue
                p_inf, p_non = virtual_coupling_marginal(h, k, b)
                if h:
                    assert p_inf == Fraction(1, h + k)
                if k:
                    assert p_non == Fraction(1, h + k)


def test_coupler_k2_example():
    s = coupled_push_modified(K2, {0}, 1, RngStream(0))
    assert s.x == 1 and s.containment


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 9), st.floats(0.1, 0.9), st.integers(0, 10**6), st.data())
def test_coupler_containment_every_sample(n, p, seed, data):
    g = sample_gnp(n, p, RngStream(seed))
    informed = data.draw(st.sets(st.integers(0, n - 1), min_size=1))
    b = data.draw(st.integers(1, n))
    coupler = VirtualCoupler(g, informed, b)
    gen = np.random.default_rng(seed)
    for _ in range(20):
        s = coupler.sample(gen)
        assert s.containment and s.y <= s.x
    batch = coupler.sample_batch(gen, 500)
    assert batch.containment.all() and np.all(batch.y <= batch.x)


def test_coupled_counts_match_exact_laws():
    g = sample_gnp(7, 0.5, RngStream(8))
    informed, b = {0, 1, 2}, 3
    batch = VirtualCoupler(g, informed, b).sample_batch(np.random.default_rng(3), 200_000)
    for dist, xs in ((exact_push_distribution(g, informed), batch.x), (exact_modified_push_distribution(g, informed, b), batch.y)):
        for k, pr in dist.by_count.items():
            assert abs(np.mean(xs == k) - float(pr)) < 5e-3


def test_batch_and_scalar_samplers_agree_in_law():
    g = GraphSnapshot.from_edges(5, [(0, 1), (0, 2), (1, 3), (2, 4), (3, 4)])
    c = VirtualCoupler(g, {0, 3}, 2)
    gen = np.random.default_rng(0)
    scalar = np.array([c.sample(gen).y for _ in range(20_000)])
    batch = c.sample_batch(gen, 20_000).y
    assert abs(scalar.mean() - batch.mean()) < 0.03


# -- time-window coupling -------------------------------------------------


def test_window_choice_examples():
    assert window_choice_distribution([[0]]) == [{0: 1}]
    # N1 = {a}, N2 = {a, b}
    d = window_choice_distribution([[0], [0, 1]])
    assert d[1] == {0: Fraction(1, 2), 1: Fraction(1, 2)}
    # nested second neighbourhood gives no upgrade
    d = window_choice_distribution([[0, 1], [1]])
    assert d[1] == d[0]
    assert window_choice_distribution([[], []]) == [{None: 1}, {None: 1}]
    with pytest.raises(ValueError):
        window_choice_distribution([])


@given(st.lists(st.sets(st.integers(0, 3), max_size=4), min_size=1, max_size=3))
def test_window_marginals_uniform(neigh):
    seen = set()
    for nb, dist in zip(neigh, window_choice_distribution(neigh)):
        seen |= nb
        if seen:
            assert dist == {v: Fraction(1, len(seen)) for v in seen}


def test_window_single_round_is_plain_push():
    g = sample_gnp(8, 0.4, RngStream(2))
    s = coupled_push_window([g], {0, 1}, RngStream(5))
    assert s.seq_informed == s.union_informed


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 10), st.integers(1, 4), st.integers(0, 10**6))
def test_window_containment(n, T, seed):
    gen = np.random.default_rng(seed)
    window = [sample_gnp(n, 0.3, gen) for _ in range(T)]
    for _ in range(10):
        s = coupled_push_window(window, {0}, gen)
        assert s.containment


def test_window_exact_dominance_small():
    graphs = [GraphSnapshot.from_edges(3, [e for i, e in enumerate([(0, 1), (0, 2), (1, 2)]) if m >> i & 1]) for m in range(8)]
    for g1, g2 in itertools.product(graphs, repeat=2):
        for informed in ({0}, {0, 1}):
            seq = exact_sequence_push_distribution([g1, g2], informed)
            uni = exact_union_push_distribution([g1, g2], informed)
            assert check_dominance(seq, uni)


def test_window_empty_sequence_rejected():
    with pytest.raises(ValueError):
        coupled_push_window([], {0}, RngStream(0))


# -- reverse Markov and increasing rate ----------------------------------


def test_reverse_markov_examples():
    assert reverse_markov_check(point(4), 4, 1)
    assert reverse_markov_check(OutcomeDistribution({0: Fraction(1, 2), 4: Fraction(1, 2)}), 4, Fraction(1, 2))
    with pytest.raises(NotApplicable):
        reverse_markov_check(point(1), 4, 1)
    with pytest.raises(NotApplicable):
        reverse_markov_check(point(5), 4, Fraction(1, 2))


@given(st.lists(st.integers(1, 50), min_size=2, max_size=8))
def test_reverse_markov_holds_whenever_applicable(weights):
    m = len(weights) - 1
    total = sum(weights)
    d = OutcomeDistribution({k: Fraction(w, total) for k, w in enumerate(weights)})
    lam = min(Fraction(1), d.mean() / m)
    assert reverse_markov_check(d, m, lam)


def test_increasing_rate_lambda():
    assert increasing_rate_lambda(point(2), 2) == 1
    d = OutcomeDistribution({0: Fraction(1, 2), 1: Fraction(1, 2)})
    assert increasing_rate_lambda(d, 4) == Fraction(1, 4)
    assert increasing_rate_lambda(point(0), 3) == 0
    with pytest.raises(NotApplicable):
        increasing_rate_lambda(d, 0)


# -- absorption oracle ----------------------------------------------------


def test_absorption_times():
    assert absorption_time(K2, 0) == 1
    assert absorption_time(K3, 0) == Fraction(7, 3)
    assert absorption_time(GraphSnapshot.complete(4), 0) == Fraction(485, 152)
    # path 0-1-2 from the middle: one round informs a leaf, the other needs 2 more on average
    assert absorption_time(PATH3, 1) == 3
    with pytest.raises(ValueError):
        absorption_time(GraphSnapshot.empty(2), 0)
