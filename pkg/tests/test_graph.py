import numpy as np
import pytest

from wskan.containers import BadMagicError, TruncatedPayloadError
from wskan.graph import (
    assign_pe,
    build_graph,
    deserialize_graph,
    graph_from_text,
    graph_to_text,
    induced_edge_permutation,
    inject_input,
    n_pe_ids,
    node_permutation,
    permute_graph,
    serialize_graph,
)
from wskan.symmetry import act, identity_element, sample_group_element

from test_kan import make_net


def graphs_equal(g1, g2) -> bool:
    return (
        g1.dims == g2.dims
        and np.array_equal(g1.node_layer, g2.node_layer)
        and np.array_equal(g1.node_pe, g2.node_pe)
        and np.array_equal(g1.node_input, g2.node_input)
        and np.array_equal(g1.edge_src, g2.edge_src)
        and np.array_equal(g1.edge_dst, g2.edge_dst)
        and np.array_equal(g1.edge_layer, g2.edge_layer)
        and np.array_equal(g1.edge_feat, g2.edge_feat)
        and np.array_equal(g1.edge_pe_src, g2.edge_pe_src)
        and np.array_equal(g1.edge_pe_dst, g2.edge_pe_dst)
    )


def test_counts_and_feature_width():
    net = make_net([2, 3, 2], seed=0, grid=5, degree=3)
    g = build_graph(net)
    assert g.n == 7
    assert g.m == 12
    assert g.feature_dim == 2 + 5 + 3


def test_edge_features_match_parameters():
    net = make_net([2, 3, 2], seed=1)
    g = build_graph(net)
    offs = [0, 2, 5]
    e = 0
    for l, layer in enumerate(net.layers):
        for p in range(layer.d_out):
            for q in range(layer.d_in):
                assert g.edge_src[e] == offs[l] + q
                assert g.edge_dst[e] == offs[l + 1] + p
                assert g.edge_layer[e] == l
                np.testing.assert_array_equal(g.edge_feat[e], layer.params[p, q])
                e += 1
    assert e == g.m


def test_pe_assignment():
    net = make_net([2, 3, 2], seed=2)
    g = assign_pe(build_graph(net))
    assert g.has_pe
    # inputs distinct, hidden shared, outputs distinct: 5 ids for [2,3,2]
    np.testing.assert_array_equal(g.node_pe, [0, 1, 2, 2, 2, 3, 4])
    assert n_pe_ids([2, 3, 2]) == 5
    assert len(set(g.node_pe.tolist())) == 5
    np.testing.assert_array_equal(g.edge_pe_src, g.node_pe[g.edge_src])
    np.testing.assert_array_equal(g.edge_pe_dst, g.node_pe[g.edge_dst])


def test_pe_unassigned_by_default():
    g = build_graph(make_net([2, 3, 2]))
    assert not g.has_pe
    assert (g.node_pe == -1).all()


def test_inject_input():
    g = assign_pe(build_graph(make_net([2, 3, 2], seed=3)))
    x = np.array([0.7, -0.2])
    g2 = inject_input(g, x)
    np.testing.assert_array_equal(g2.node_input[:2], x)
    np.testing.assert_array_equal(g2.node_input[2:], 0.0)
    np.testing.assert_array_equal(g.node_input, 0.0)  # original untouched
    with pytest.raises(ValueError):
        inject_input(g, np.zeros(3))


def test_node_and_edge_permutations_are_permutations():
    dims = [2, 4, 3, 1]
    g = sample_group_element(dims, np.random.default_rng(0))
    nperm = node_permutation(dims, g)
    eperm = induced_edge_permutation(dims, g)
    assert sorted(nperm.tolist()) == list(range(sum(dims)))
    assert sorted(eperm.tolist()) == list(range(2 * 4 + 4 * 3 + 3 * 1))
    gi = identity_element(dims)
    np.testing.assert_array_equal(node_permutation(dims, gi), np.arange(sum(dims)))
    np.testing.assert_array_equal(induced_edge_permutation(dims, gi), np.arange(23))


def test_permute_graph_commutes_with_act():
    net = make_net([2, 4, 3, 1], seed=4)
    for seed in range(5):
        g = sample_group_element(net.dims, np.random.default_rng(seed))
        lhs = build_graph(act(g, net))
        rhs = permute_graph(build_graph(net), g)
        assert graphs_equal(lhs, rhs)
        # and with positional encodings assigned first
        lhs_pe = assign_pe(lhs)
        rhs_pe = permute_graph(assign_pe(build_graph(net)), g)
        assert graphs_equal(lhs_pe, rhs_pe)


def test_serialize_round_trip_bit_exact():
    net = make_net([2, 3, 2], seed=5)
    g = inject_input(assign_pe(build_graph(net)), np.array([0.1, 0.9]))
    blob = serialize_graph(g)
    back = deserialize_graph(blob)
    assert graphs_equal(g, back)
    assert serialize_graph(back) == blob


def test_text_round_trip():
    net = make_net([2, 3, 1], seed=6)
    g = assign_pe(build_graph(net))
    back = graph_from_text(graph_to_text(g))
    assert graphs_equal(g, back)


def test_deserialize_errors():
    g = assign_pe(build_graph(make_net([2, 3, 2], seed=7)))
    blob = serialize_graph(g)
    with pytest.raises(BadMagicError):
        deserialize_graph(b"XXXX" + blob[4:])
    with pytest.raises(TruncatedPayloadError):
        deserialize_graph(blob[: len(blob) // 2])


def test_deserialize_validates_structure():
    from wskan.containers import read_container, write_container
    from wskan.graph import GRAPH_MAGIC

    g = assign_pe(build_graph(make_net([2, 3, 2], seed=8)))
    blob = serialize_graph(g)
    _, header, arrays = read_container(blob, GRAPH_MAGIC, 1)
    header.pop("blocks")
    bad = dict(arrays)
    bad["edge_src"] = arrays["edge_src"].copy()
    bad["edge_src"][0] = 6  # an output node cannot source a layer-0 edge
    data = write_container(GRAPH_MAGIC, 1, header, list(bad.items()))
    with pytest.raises(ValueError):
        deserialize_graph(data)

    bad = dict(arrays)
    bad["edge_feat"] = np.full_like(arrays["edge_feat"], np.nan)
    data = write_container(GRAPH_MAGIC, 1, header, list(bad.items()))
    with pytest.raises(ValueError):
        deserialize_graph(data)
