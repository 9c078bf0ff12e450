import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from kgtext.graph_encoder import GraphEncoder, batch_node_graphs, node_graph, pool_entities, relation_slots, rgcn_layer
from kgtext.kg_core import Entity, KnowledgeGraph, Relation, Triple

from oracles import rgcn_brute_force


def five_node_graph():
    # entity 0 has two subword nodes, 1 has one, 2 has two -> 5 nodes, 2 relations
    ents = [Entity(0, ("new", "york"), (7, 8)), Entity(1, ("usa",), (9,)), Entity(2, ("big", "apple"), (10, 11))]
    return KnowledgeGraph(ents, [Relation(0, "country"), Relation(1, "nickname")],
                          [Triple(0, 0, 1), Triple(0, 1, 2)])


def test_node_graph_product_construction():
    ng = node_graph(five_node_graph())
    assert ng.num_nodes == 5
    intra = ng.intra_relation
    assert intra == 2
    assert set(ng.edges) == {(0, 1, intra), (3, 4, intra), (0, 2, 0), (1, 2, 0),
                             (0, 3, 1), (0, 4, 1), (1, 3, 1), (1, 4, 1)}


@pytest.mark.parametrize("normalize", [False, True])
@pytest.mark.parametrize("activation", ["relu", "tanh"])
def test_rgcn_layer_matches_brute_force(normalize, activation):
    g = five_node_graph()
    ng = node_graph(g)
    rng = np.random.default_rng(0)
    d = 4
    v = rng.normal(size=(5, d))
    w0 = rng.normal(size=(d, d))
    wr = rng.normal(size=(relation_slots(2), d, d))
    got = rgcn_layer(torch.tensor(v), ng, torch.tensor(w0), torch.tensor(wr), activation, normalize).numpy()
    want = rgcn_brute_force(g, v, w0, wr, activation, normalize)
    np.testing.assert_allclose(got, want, atol=1e-10, rtol=0)


def test_zero_relation_weights_leave_self_transform():
    ng = node_graph(five_node_graph())
    v = torch.randn(5, 3, dtype=torch.float64)
    w0 = torch.randn(3, 3, dtype=torch.float64)
    out = rgcn_layer(v, ng, w0, torch.zeros(3, 3, 3, dtype=torch.float64), "identity")
    torch.testing.assert_close(out, v @ w0.T)


def test_isolated_self_loop_entity():
    g = KnowledgeGraph([Entity(0, ("a",), (5,))], [Relation(0, "r")], [Triple(0, 0, 0)])
    ng = node_graph(g)
    v = torch.ones(1, 2, dtype=torch.float64)
    w0 = torch.eye(2, dtype=torch.float64)
    wr = torch.stack([torch.eye(2, dtype=torch.float64) * 2, torch.zeros(2, 2, dtype=torch.float64)])
    # the node is its own r-neighbor once (neighbor sets, not multisets)
    out = rgcn_layer(v, ng, w0, wr, "identity")
    torch.testing.assert_close(out, torch.full((1, 2), 3.0, dtype=torch.float64))


def test_shape_mismatch_raises():
    ng = node_graph(five_node_graph())
    with pytest.raises(ValueError):
        rgcn_layer(torch.zeros(5, 3), ng, torch.zeros(4, 4), torch.zeros(3, 4, 4))
    with pytest.raises(ValueError):
        rgcn_layer(torch.zeros(4, 3), ng, torch.zeros(3, 3), torch.zeros(3, 3, 3))


def test_untokenized_entity_rejected():
    g = KnowledgeGraph([Entity(0, ("a",))], [Relation(0, "r")], [Triple(0, 0, 0)])
    with pytest.raises(ValueError, match="not tokenized"):
        node_graph(g)


def test_split_inverse_uses_separate_slots():
    g = five_node_graph()
    ng = node_graph(g, split_inverse=True)
    assert ng.intra_relation == 4
    dst, src, rel = ng.message_index()
    trip = set(zip(dst.tolist(), src.tolist(), rel.tolist()))
    assert (2, 0, 0) in trip and (0, 2, 2) in trip  # tail hears head on r, head hears tail on r + R
    assert (0, 2, 0) not in trip


def test_batching_equals_separate_encoding():
    torch.manual_seed(0)
    enc = GraphEncoder(20, 6, 2, 2).double()
    g1 = five_node_graph()
    g2 = KnowledgeGraph([Entity(0, ("x",), (3,)), Entity(1, ("y",), (4,))], g1.relations, [Triple(1, 1, 0)])
    a, b = node_graph(g1), node_graph(g2)
    both = enc(batch_node_graphs([a, b]))
    torch.testing.assert_close(both.entity_vectors[:3], enc(a).entity_vectors)
    torch.testing.assert_close(both.entity_vectors[3:], enc(b).entity_vectors)


def test_pool_entities_is_mean():
    ng = node_graph(five_node_graph())
    v = torch.arange(10, dtype=torch.float64).reshape(5, 2)
    torch.testing.assert_close(pool_entities(v, ng), torch.tensor([[1.0, 2.0], [4.0, 5.0], [7.0, 8.0]],
                                                                   dtype=torch.float64))


def test_zero_layers_returns_lookup():
    enc = GraphEncoder(20, 4, 2, num_layers=0)
    ng = node_graph(five_node_graph())
    out = enc(ng)
    torch.testing.assert_close(out.node_vectors, enc.node_table.weight[torch.as_tensor(ng.token_ids)])
    torch.testing.assert_close(enc.last_relation_matrix(0), torch.eye(4))


def test_load_pretrained(tmp_path):
    enc = GraphEncoder(5, 3, 1)
    arr = np.arange(15, dtype=np.float32).reshape(5, 3)
    np.save(tmp_path / "t.npy", arr)
    enc.load_pretrained(str(tmp_path / "t.npy"))
    assert torch.equal(enc.node_table.weight.detach(), torch.as_tensor(arr))
    np.save(tmp_path / "bad.npy", arr[:4])
    with pytest.raises(ValueError):
        enc.load_pretrained(str(tmp_path / "bad.npy"))


@settings(max_examples=25, deadline=None)
@given(st.lists(st.integers(1, 3), min_size=1, max_size=4),
       st.lists(st.tuples(st.integers(0, 3), st.integers(0, 1), st.integers(0, 3)), max_size=6),
       st.integers(0, 10_000))
def test_rgcn_property_random_graphs(lengths, raw_triples, seed):
    n = len(lengths)
    ents, tok = [], 0
    for i, k in enumerate(lengths):
        ents.append(Entity(i, tuple(f"w{i}{j}" for j in range(k)), tuple(range(tok, tok + k))))
        tok += k
    triples = [Triple(h % n, r, t % n) for h, r, t in raw_triples]
    g = KnowledgeGraph(ents, [Relation(0, "a"), Relation(1, "b")], triples)
    ng = node_graph(g)
    rng = np.random.default_rng(seed)
    v = rng.normal(size=(ng.num_nodes, 3))
    w0, wr = rng.normal(size=(3, 3)), rng.normal(size=(3, 3, 3))
    got = rgcn_layer(torch.tensor(v), ng, torch.tensor(w0), torch.tensor(wr), "identity").numpy()
    np.testing.assert_allclose(got, rgcn_brute_force(g, v, w0, wr, "identity"), atol=1e-10, rtol=0)
