import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from expograph import topology as tp
from expograph.topology import Family, TopologySpec


def nonzero_cols(W, row):
    return set(np.flatnonzero(np.asarray(W)[row]).tolist())


def test_static_exponential_two_nodes():
    np.testing.assert_array_equal(tp.build_static_exponential(2).entries, np.full((2, 2), 0.5))


@pytest.mark.parametrize("n", [5, 6])
def test_static_exponential_row0_pattern(n):
    W = tp.build_static_exponential(n)
    assert nonzero_cols(W, 0) == {0, 1, 2, 4}
    assert np.all(W.entries[0, [0, 1, 2, 4]] == 0.25)


def test_static_exponential_brute_force_definition():
    # entry-by-entry evaluation of the log2 rule, independent of the circulant builder
    for n in range(2, 40):
        W = tp.build_static_exponential(n).entries
        tau = int(np.ceil(np.log2(n)))
        for i in range(n):
            for j in range(n):
                hop = (j - i) % n
                on = i == j or (hop > 0 and float(np.log2(hop)).is_integer())
                assert W[i, j] == (1.0 / (tau + 1) if on else 0.0)


def test_static_exponential_rejects_small():
    with pytest.raises(tp.InvalidSizeError):
        tp.build_static_exponential(1)


def test_one_peer_examples():
    W0 = tp.build_one_peer_exponential(4, 0).entries
    for i in range(4):
        assert nonzero_cols(W0, i) == {i, (i + 1) % 4}
        assert W0[i, i] == W0[i, (i + 1) % 4] == 0.5
    np.testing.assert_array_equal(tp.build_one_peer_exponential(4, 2).entries, W0)
    W = tp.build_one_peer_exponential(6, 1)
    assert nonzero_cols(W, 0) == {0, 2}


@pytest.mark.parametrize("n", [2, 3, 5, 6, 8, 13, 32])
def test_one_peer_single_offdiagonal_per_row_and_column(n):
    for k in range(2 * tp.ceil_log2(n)):
        a = tp.build_one_peer_exponential(n, k).entries.copy()
        np.fill_diagonal(a, 0)
        assert np.all((a == 0.5).sum(axis=1) == 1)
        assert np.all((a == 0.5).sum(axis=0) == 1)


@pytest.mark.parametrize("tau", [1, 2, 3, 4, 5, 6])
def test_one_peer_patterns_cover_static_pattern(tau):
    n = 2**tau
    union = np.zeros((n, n), dtype=bool)
    for k in range(tau):
        union |= tp.build_one_peer_exponential(n, k).entries > 0
    static = tp.build_static_exponential(n).entries > 0
    off = ~np.eye(n, dtype=bool)
    np.testing.assert_array_equal(union & off, static & off)


def test_metropolis_triangle_and_path():
    np.testing.assert_allclose(tp.metropolis_weights(tp.ring_adjacency(3)).entries, np.full((3, 3), 1 / 3))
    path = np.array([[0, 1], [1, 0]], dtype=bool)
    np.testing.assert_array_equal(tp.metropolis_weights(path).entries, np.full((2, 2), 0.5))


def test_metropolis_four_ring():
    W = tp.metropolis_weights(tp.ring_adjacency(4)).entries
    expected = np.array(
        [[1, 1, 0, 1], [1, 1, 1, 0], [0, 1, 1, 1], [1, 0, 1, 1]], dtype=float
    ) / 3
    np.testing.assert_allclose(W, expected, atol=1e-15)


def test_metropolis_rejects_disconnected_and_bad_input():
    a = np.zeros((4, 4), dtype=bool)
    a[0, 1] = a[1, 0] = a[2, 3] = a[3, 2] = True
    with pytest.raises(tp.ConnectivityError):
        tp.metropolis_weights(a)
    b = a.copy()
    b[0, 2] = True
    with pytest.raises(tp.TopologyError):
        tp.metropolis_weights(b)
    c = tp.ring_adjacency(4)
    c[0, 0] = True
    with pytest.raises(tp.TopologyError):
        tp.metropolis_weights(c)


def test_family_examples():
    np.testing.assert_array_equal(
        tp.build_family(TopologySpec(Family.FULLY_CONNECTED, 3)).entries, np.full((3, 3), 1 / 3)
    )
    W = tp.random_match_weights(4, np.arange(4)).entries
    expected = np.kron(np.eye(2), np.full((2, 2), 0.5))
    np.testing.assert_array_equal(W, expected)
    H = tp.build_family(TopologySpec("hypercube", 8)).entries
    off = H - np.diag(np.diag(H))
    assert np.all((off > 0).sum(axis=1) == 3)
    assert set(np.unique(off[off > 0])) == {0.25}
    np.testing.assert_allclose(np.diag(H), 0.25)


def test_grid_and_torus_degrees():
    grid = tp.grid_adjacency(3, 4)
    assert grid.sum(axis=1).max() == 4 and grid.sum(axis=1).min() == 2
    torus = tp.torus_adjacency(4, 4)
    assert np.all(torus.sum(axis=1) == 4)
    assert tp.star_adjacency(6).sum(axis=1).tolist() == [5, 1, 1, 1, 1, 1]


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(kind="ring", n=1),
        dict(kind="grid", n=12, rows=5, cols=3),
        dict(kind="hypercube", n=12),
        dict(kind="random-match", n=7),
        dict(kind="ring", n=6, rows=2, cols=3),
    ],
)
def test_spec_invariants(kwargs):
    with pytest.raises(tp.InvalidSizeError):
        TopologySpec(**kwargs)


def test_spec_grid_defaults_to_square_factors():
    spec = TopologySpec("grid", 12)
    assert (spec.rows, spec.cols) == (3, 4)
    assert tp.square_factors(17) == (1, 17)


ALL_SPECS = [
    TopologySpec(f, n, seed=3)
    for f in Family
    for n in (4, 6, 8, 16, 30)
    if not (f is Family.HYPERCUBE and n & (n - 1))
]


@pytest.mark.parametrize("spec", ALL_SPECS, ids=lambda s: f"{s.kind.value}-{s.n}")
def test_every_builder_is_doubly_stochastic(spec):
    for k in range(3):
        W = tp.build_family(spec, k)
        assert tp.validate_doubly_stochastic(W, 1e-12)
        if spec.kind is not Family.HALF_RANDOM:
            assert np.all(np.diag(W.entries) > 0)


def test_half_random_weights_follow_max_degree_rule():
    W = tp.build_family(TopologySpec("half-random", 20, seed=11)).entries
    a = (W > 0) & ~np.eye(20, dtype=bool)
    d_max = a.sum(axis=1).max()
    np.testing.assert_allclose(W[a], 1.0 / d_max)
    np.testing.assert_allclose(np.diag(W), 1.0 - a.sum(axis=1) / d_max)
    assert tp.is_connected(a)


def test_half_random_gives_up_on_tiny_graphs():
    class Never:
        def random(self, shape):
            return np.ones(shape)

    with pytest.raises(tp.ConnectivityError):
        tp.half_random_weights(5, Never(), max_retries=3)


@pytest.mark.parametrize("kind", ["half-random", "random-match"])
def test_random_families_reproducible(kind):
    spec = TopologySpec(kind, 12, seed=42)
    for k in range(3):
        assert tp.build_family(spec, k) == tp.build_family(spec, k)
    other = TopologySpec(kind, 12, seed=43)
    assert any(tp.build_family(spec, k) != tp.build_family(other, k) for k in range(3))


@pytest.mark.parametrize("n", [3, 4, 8, 9])
def test_metropolis_outputs_symmetric(n):
    for adj in (tp.ring_adjacency(n), tp.star_adjacency(n), tp.grid_adjacency(1, n)):
        W = tp.metropolis_weights(adj)
        assert not W.directed
        np.testing.assert_array_equal(W.entries, W.entries.T)


def test_static_exponential_is_circulant_and_directed():
    for n in range(3, 50):
        W = tp.build_static_exponential(n).entries
        for i in range(n):
            np.testing.assert_array_equal(np.roll(W[0], i), W[i])
    assert tp.build_static_exponential(6).directed


def test_validate_doubly_stochastic_cases():
    J = np.full((5, 5), 0.2)
    assert tp.validate_doubly_stochastic(J)
    bumped = J.copy()
    bumped[1, 2] += 1e-6
    assert not tp.validate_doubly_stochastic(bumped, 1e-9)
    neg = np.array([[1.5, -0.5], [-0.5, 1.5]])
    assert not tp.validate_doubly_stochastic(neg, 1e-9)
    with pytest.raises(ValueError):
        tp.validate_doubly_stochastic(J, 0.0)


def test_max_out_degree():
    assert tp.max_out_degree(tp.build_static_exponential(64)) == 6
    assert tp.max_out_degree(tp.build_one_peer_exponential(64, 3)) == 1
    assert tp.max_out_degree(tp.build_family(TopologySpec("star", 9))) == 8


def test_weight_matrix_is_frozen_copy():
    a = np.full((2, 2), 0.5)
    W = tp.WeightMatrix(a)
    a[0, 0] = 9
    assert W.entries[0, 0] == 0.5
    with pytest.raises(ValueError):
        W.entries[0, 0] = 1.0


def test_family_parse_aliases():
    assert Family.parse("static-exponential") is Family.STATIC_EXPONENTIAL
    assert Family.parse("one_peer") is Family.ONE_PEER_EXPONENTIAL
    with pytest.raises(ValueError, match="unknown family"):
        Family.parse("mesh")


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 300), st.integers(0, 50))
def test_one_peer_doubly_stochastic_property(n, k):
    assert tp.validate_doubly_stochastic(tp.build_one_peer_exponential(n, k))


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 40), st.integers(0, 2**32))
def test_random_match_is_a_perfect_matching(half, seed):
    n = 2 * half
    W = tp.build_family(TopologySpec("random-match", n, seed=seed)).entries
    assert tp.validate_doubly_stochastic(W)
    np.testing.assert_array_equal(W, W.T)
    off = (W > 0) & ~np.eye(n, dtype=bool)
    assert np.all(off.sum(axis=1) == 1)


def test_matrix_csv_round_trip(tmp_path):
    for W in (tp.build_static_exponential(7), tp.build_family(TopologySpec("grid", 12))):
        path = tmp_path / "w.csv"
        tp.write_matrix_csv(W, path)
        lines = path.read_text().splitlines()
        assert lines[0] == str(W.n) and len(lines) == W.n + 1
        assert tp.read_matrix_csv(path) == W


def test_matrix_csv_rejects_bad_header(tmp_path):
    path = tmp_path / "w.csv"
    path.write_text("3\n0.5,0.5\n0.5,0.5\n")
    with pytest.raises(ValueError):
        tp.read_matrix_csv(path)
