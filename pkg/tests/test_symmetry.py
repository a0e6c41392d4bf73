import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wskan.kan import KanLayer, kan_forward_batch
from wskan.symmetry import (
    GroupElement,
    Permutation,
    act,
    compose,
    identity_element,
    permute_phi,
    sample_group_element,
    verify_invariance,
)

from test_kan import make_net


def test_permutation_validation():
    Permutation(np.array([2, 0, 1]))
    with pytest.raises(ValueError):
        Permutation(np.array([0, 0, 1]))
    with pytest.raises(ValueError):
        Permutation(np.array([[0, 1]]))


def test_permutation_inverse():
    p = Permutation(np.array([2, 0, 1]))
    inv = p.inverse()
    np.testing.assert_array_equal(inv.sigma[p.sigma], np.arange(3))
    assert Permutation.identity(4).is_identity()


def test_permute_phi_row_transposition():
    # swapping the first and third output neurons swaps rows 0 and 2
    net = make_net([3, 3], seed=0)
    lay = net.layers[0]
    row = Permutation(np.array([2, 1, 0]))
    col = Permutation.identity(3)
    out = permute_phi(lay, row, col)
    inv = row.inverse().sigma
    # explicit index-chasing oracle
    for p in range(3):
        for q in range(3):
            np.testing.assert_array_equal(out.params[p, q], lay.params[inv[p], col.sigma[q]])
    np.testing.assert_array_equal(out.params[0], lay.params[2])
    np.testing.assert_array_equal(out.params[2], lay.params[0])


def test_permute_phi_size_mismatch():
    net = make_net([3, 2], seed=0)
    with pytest.raises(ValueError):
        permute_phi(net.layers[0], Permutation.identity(3), Permutation.identity(3))


def test_act_identity_is_noop():
    net = make_net([2, 4, 3, 1], seed=1)
    out = act(identity_element(net.dims), net)
    for a, b in zip(out.layers, net.layers):
        np.testing.assert_array_equal(a.params, b.params)


def test_act_index_form():
    net = make_net([2, 3, 2], seed=2)
    g = sample_group_element(net.dims, np.random.default_rng(3))
    out = act(g, net)
    s1 = g.perms[0].sigma
    for p in range(3):
        for q in range(2):
            np.testing.assert_array_equal(out.layers[0].params[p, q], net.layers[0].params[s1[p], q])
    for p in range(2):
        for q in range(3):
            np.testing.assert_array_equal(out.layers[1].params[p, q], net.layers[1].params[p, s1[q]])


def test_act_preserves_function():
    rng = np.random.default_rng(4)
    net = make_net([2, 4, 3, 1], seed=5)
    xs = rng.uniform(-1, 1, size=(20, 2))
    base = kan_forward_batch(net, xs)
    for seed in range(10):
        g = sample_group_element(net.dims, np.random.default_rng(seed))
        out = kan_forward_batch(act(g, net), xs)
        assert np.abs(out - base).max() < 1e-10


def test_act_size_mismatch():
    net = make_net([2, 4, 1], seed=0)
    g = GroupElement((Permutation.identity(3),))
    with pytest.raises(ValueError):
        act(g, net)


def test_negative_control_partial_relabel_changes_function():
    # permuting one hidden layer's rows without fixing the next layer's
    # columns must change the function; this guards the invariance test
    net = make_net([2, 4, 1], seed=6)
    rng = np.random.default_rng(7)
    broken = net.copy()
    broken.layers[0] = KanLayer(broken.layers[0].params[[1, 0, 2, 3]].copy())
    xs = rng.uniform(-1, 1, size=(20, 2))
    dev = np.abs(kan_forward_batch(broken, xs) - kan_forward_batch(net, xs)).max()
    assert dev > 1e-3


def test_compose_and_inverse():
    net = make_net([2, 4, 3, 1], seed=8)
    r1, r2 = np.random.default_rng(9), np.random.default_rng(10)
    g1 = sample_group_element(net.dims, r1)
    g2 = sample_group_element(net.dims, r2)
    lhs = act(g2, act(g1, net))
    rhs = act(compose(g2, g1), net)
    for a, b in zip(lhs.layers, rhs.layers):
        np.testing.assert_array_equal(a.params, b.params)
    back = act(g1.inverse(), act(g1, net))
    for a, b in zip(back.layers, net.layers):
        np.testing.assert_array_equal(a.params, b.params)


@settings(deadline=None, max_examples=20)
@given(seed=st.integers(0, 10_000))
def test_act_invariance_property(seed):
    rng = np.random.default_rng(seed)
    net = make_net([2, 3, 2], seed=seed % 17)
    g = sample_group_element(net.dims, rng)
    xs = rng.uniform(-1, 1, size=(5, 2))
    dev = np.abs(kan_forward_batch(act(g, net), xs) - kan_forward_batch(net, xs)).max()
    assert dev < 1e-10


def test_sampler_is_uniform():
    # dims [2,3,3,1]: the group has 3! * 3! = 36 elements; with 6000 draws
    # each should appear 166.7 +- 38.2 times (3 sigma)
    rng = np.random.default_rng(11)
    counts = {}
    for _ in range(6000):
        g = sample_group_element([2, 3, 3, 1], rng)
        key = (tuple(g.perms[0].sigma.tolist()), tuple(g.perms[1].sigma.tolist()))
        counts[key] = counts.get(key, 0) + 1
    assert len(counts) == 36
    lo, hi = 6000 / 36 - 38.2, 6000 / 36 + 38.2
    assert all(lo < c < hi for c in counts.values())


def test_verify_invariance_report():
    net = make_net([2, 4, 3, 1], seed=12)
    rep = verify_invariance(net, n_inputs=30, tol=1e-10, rng=np.random.default_rng(13))
    assert rep.passed
    assert rep.max_deviation < 1e-10
    with pytest.raises(ValueError):
        verify_invariance(net, n_inputs=30, tol=0.0, rng=np.random.default_rng(0))
