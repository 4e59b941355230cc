from fractions import Fraction

import numpy as np
import pytest

from expograph import consensus as cs
from expograph import spectral as sp
from expograph import topology as tp
from expograph.consensus import ScheduleKind, WeightSchedule
from expograph.topology import TopologySpec


def cyclic(n):
    return WeightSchedule.build("cyclic", n)


def test_cyclic_exponents_wrap():
    s = cyclic(8)
    assert [s.exponent(k) for k in range(4)] == [0, 1, 2, 0]
    for k in range(6):
        assert cs.next_matrix(s, k) == tp.build_one_peer_exponential(8, k)


def test_static_schedule_is_constant():
    s = WeightSchedule.build("static", 8, "static-exp")
    first = cs.next_matrix(s, 0)
    assert all(cs.next_matrix(s, k) == first for k in range(1, 10))
    assert first == tp.build_static_exponential(8)


@pytest.mark.parametrize("seed", range(10))
def test_permutation_blocks_use_each_hop_once(seed):
    s = WeightSchedule.build("permutation", 16, seed=seed)
    for block in range(5):
        hops = [s.exponent(k) for k in range(4 * block, 4 * block + 4)]
        assert sorted(hops) == [0, 1, 2, 3]


def test_permutation_n4_first_block():
    s = WeightSchedule.build("permutation", 4, seed=123)
    mats = {cs.next_matrix(s, k).entries.tobytes() for k in range(2)}
    expected = {tp.build_one_peer_exponential(4, e).entries.tobytes() for e in range(2)}
    assert mats == expected


def test_schedules_are_pure_functions_of_seed_and_k():
    for kind in ("permutation", "uniform", "random-match"):
        a = WeightSchedule.build(kind, 8, seed=9)
        b = WeightSchedule.build(kind, 8, seed=9)
        for k in (5, 0, 3, 5):
            assert cs.next_matrix(a, k) == cs.next_matrix(b, k)


def test_random_match_schedule_requires_even_n():
    with pytest.raises(ValueError):
        WeightSchedule(ScheduleKind.BIPARTITE_MATCH_SEQUENCE, TopologySpec("ring", 7))


def test_schedule_parse_aliases():
    assert ScheduleKind.parse("one-peer") is ScheduleKind.CYCLIC_ONE_PEER
    assert ScheduleKind.parse("match") is ScheduleKind.BIPARTITE_MATCH_SEQUENCE
    with pytest.raises(ValueError, match="unknown schedule"):
        ScheduleKind.parse("gossip")


def test_product_exactness_examples():
    assert cs.product_exactness(cyclic(4), 0, 2) <= 1e-15
    assert cs.product_exactness(cyclic(2), 0, 1) == 0.0
    with pytest.raises(ValueError):
        cs.product_exactness(cyclic(4), 0, 0)


def test_product_exactness_six_nodes_explicit():
    W = [tp.build_one_peer_exponential(6, k).entries for k in range(3)]
    manual = W[2] @ W[1] @ W[0]
    expected = float(np.max(np.abs(manual - 1 / 6)))
    assert expected > 0.05
    assert cs.product_exactness(cyclic(6), 0, 3) == pytest.approx(expected, abs=1e-15)


def test_product_orientation_newest_on_left():
    s = WeightSchedule.build("random-match", 6, seed=2)
    manual = cs.next_matrix(s, 2).entries @ cs.next_matrix(s, 1).entries @ cs.next_matrix(s, 0).entries
    np.testing.assert_array_equal(cs.product(s, 0, 3), manual)


@pytest.mark.parametrize("n", [2, 4, 8, 16, 32, 64])
def test_periodic_window_property(n):
    s = cyclic(n)
    tau = s.tau
    for start in range(2 * tau):
        for length in range(tau, 2 * tau + 1):
            assert cs.product_exactness(s, start, length) <= 1e-12
        if tau > 1:
            assert cs.product_exactness(s, start, tau - 1) > 1e-6


@pytest.mark.parametrize("n", [3, 5, 6, 7])
def test_non_power_of_two_not_exact_within_period(n):
    s = cyclic(n)
    for length in range(1, 2 * s.tau + 1):
        assert cs.product_exactness(s, 0, length) > 1e-6


def test_residue_one_peer_32_exact_at_index_4():
    x0 = cs.default_x0(32, seed=1)
    series = cs.residue_decay(cyclic(32), x0, 8)
    assert series.values[4] <= 1e-12 * np.linalg.norm(x0)
    assert np.all(series.values[:4] > 1e-6)
    assert series.d == 10


def test_residue_full_average_is_zero_at_first_step():
    s = WeightSchedule.build("static", 7, "full")
    series = cs.residue_decay(s, cs.default_x0(7, seed=0), 3)
    assert series.values[0] <= 1e-14


def test_residue_static_exp_contracts_by_rho():
    n = 16
    s = WeightSchedule.build("static", n, "static-exp")
    rho = sp.family_spectrum(TopologySpec("static-exp", n)).rho
    x0 = cs.default_x0(n, seed=4)
    base = np.linalg.norm(x0 - x0.mean(axis=0))
    values = cs.residue_decay(s, x0, 30).values
    for k, v in enumerate(values):
        assert v <= rho ** (k + 1) * base * (1 + 1e-9)


def test_residue_accepts_vector_and_validates():
    s = cyclic(4)
    series = cs.residue_decay(s, np.arange(4.0), 2)
    assert series.x0.shape == (4, 1)
    with pytest.raises(ValueError):
        cs.residue_decay(s, np.ones((5, 2)), 2)
    with pytest.raises(ValueError):
        cs.residue_decay(s, np.full((4, 2), np.nan), 2)
    with pytest.raises(ValueError):
        cs.residue_decay(s, np.ones((4, 2)), 0)


@pytest.mark.parametrize("kind", ["cyclic", "permutation", "uniform", "random-match"])
def test_residue_mean_is_preserved(kind):
    s = WeightSchedule.build(kind, 8, seed=3)
    y = cs.default_x0(8, seed=5)
    mean = y.mean(axis=0)
    for k in range(12):
        y = cs.next_matrix(s, k).entries @ y
        np.testing.assert_allclose(y.mean(axis=0), mean, atol=1e-12)


def test_min_exact_steps_cyclic_and_permutation():
    assert cs.min_exact_steps(cyclic(8)) == 3
    for seed in range(100):
        assert cs.min_exact_steps(WeightSchedule.build("permutation", 8, seed=seed)) == 3


def test_min_exact_steps_uniform():
    results = [cs.min_exact_steps(WeightSchedule.build("uniform", 8, seed=s)) for s in range(100)]
    assert any(r is None or r > 3 for r in results)
    for seed in range(100):
        s = WeightSchedule.build("uniform", 8, seed=seed)
        w = cs.witness_index(s)
        assert cs.product_exactness(s, 0, w) <= 1e-12


def test_min_exact_steps_gives_up_on_non_power_of_two():
    assert cs.min_exact_steps(cyclic(6), cap=20) is None
    with pytest.raises(ValueError):
        cs.min_exact_steps(cyclic(8), tol=0)


@pytest.mark.parametrize("n", [4, 8, 16, 32])
def test_rho_max_series_power_of_two(n):
    tau = tp.ceil_log2(n)
    series = cs.rho_max_series(n, tau + 2)
    assert series[0] == 1.0
    assert all(0 < v <= 1 + 1e-12 for v in series[1:tau])
    assert series[tau] <= 1e-12
    assert max(series) <= 1 + 1e-12


def test_rho_max_series_first_entry_and_n6():
    s8 = cs.rho_max_series(8, 1)
    svd = np.linalg.norm(tp.build_one_peer_exponential(8, 0).entries - 1 / 8, 2)
    assert s8[1] == pytest.approx(svd, abs=1e-12)
    s6 = cs.rho_max_series(6, 6)
    assert max(s6) <= 1 + 1e-12
    assert s6[3] > 0


def test_two_step_search():
    res = cs.two_step_symmetric_search(3, 1000)
    assert res.discriminant == Fraction(-1, 3)
    assert res.min_deviation > 0.01
    a, b = res.argmin
    assert 0 <= a <= 1 and 0 <= b <= 1


def test_two_step_half_half_by_hand():
    # diag 1 - a - b + 2ab = 1/2, off-diagonals ab terms = 1/4 each; max deviation 1/2 - 1/3
    w0, w1 = cs._three_node_pair(np.array(0.5), np.array(0.5))
    assert np.abs(w1 @ w0 - 1 / 3).max() == pytest.approx(1 / 6, abs=1e-15)


def test_two_step_search_rejects_other_sizes():
    with pytest.raises(ValueError):
        cs.two_step_symmetric_search(4)
    with pytest.raises(ValueError):
        cs.two_step_symmetric_search(3, 5)
