"""Token-level relational graph convolution over a knowledge graph."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
import torch
from torch import nn

from .kg_core import KnowledgeGraph

ACTIVATIONS: dict[str, Callable[[torch.Tensor], torch.Tensor]] = {
    "relu": torch.relu,
    "tanh": torch.tanh,
    "gelu": nn.functional.gelu,
    "identity": lambda x: x,
}


def relation_slots(num_relations: int, split_inverse: bool = False) -> int:
    """Number of weight matrices per layer: relations (+ inverses) + the intra-entity one."""
    return (2 * num_relations if split_inverse else num_relations) + 1


@dataclass
class NodeGraph:
    """Expanded graph with one node per entity subword.

    ``edges`` holds ``(u, v, rel)`` pairs of the product construction: every
    node of a triple's head is linked to every node of its tail, and the nodes
    of one entity are pairwise linked under the reserved intra relation.
    """

    token_ids: np.ndarray
    node_entity: np.ndarray  # position of the owning entity in ``entity_ids``
    entity_ids: list[int]
    edges: list[tuple[int, int, int]]
    num_relations: int
    split_inverse: bool = False
    graph_index: np.ndarray | None = None  # owning graph per entity, set when batched

    @property
    def num_nodes(self) -> int:
        return len(self.token_ids)

    @property
    def intra_relation(self) -> int:
        return relation_slots(self.num_relations, self.split_inverse) - 1

    def message_index(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """``(dst, src, rel)`` arrays: one entry per (node, relation, neighbor) with neighbors as sets."""
        seen: set[tuple[int, int, int]] = set()
        R = self.num_relations
        for u, v, r in self.edges:
            if r == self.intra_relation or not self.split_inverse:
                seen.add((v, u, r))
                seen.add((u, v, r))
            else:
                seen.add((v, u, r))  # tail receives from head
                seen.add((u, v, r + R))  # head receives from tail via the inverse slot
        trip = sorted(seen)
        if not trip:
            empty = np.zeros(0, dtype=np.int64)
            return empty, empty, empty
        arr = np.asarray(trip, dtype=np.int64)
        return arr[:, 0], arr[:, 1], arr[:, 2]


def node_graph(graph: KnowledgeGraph, num_relations: int | None = None,
               split_inverse: bool = False) -> NodeGraph:
    if num_relations is None:
        num_relations = len(graph.relations)
    tokens: list[int] = []
    owner: list[int] = []
    node_ranges: dict[int, range] = {}
    for pos, ent in enumerate(graph.entities):
        if not ent.subword_ids:
            raise ValueError(f"entity {ent.id} ({ent.name!r}) is not tokenized")
        start = len(tokens)
        tokens.extend(ent.subword_ids)
        owner.extend([pos] * len(ent.subword_ids))
        node_ranges[ent.id] = range(start, len(tokens))
    intra = relation_slots(num_relations, split_inverse) - 1
    edges: list[tuple[int, int, int]] = []
    for ent in graph.entities:
        nodes = node_ranges[ent.id]
        for i in nodes:
            for j in nodes:
                if i < j:
                    edges.append((i, j, intra))
    for t in graph.triples:
        if t.relation >= num_relations:
            raise ValueError(f"relation id {t.relation} outside the model's {num_relations} relations")
        for i in node_ranges[t.head]:
            for j in node_ranges[t.tail]:
                edges.append((i, j, t.relation))
    return NodeGraph(np.asarray(tokens, dtype=np.int64), np.asarray(owner, dtype=np.int64),
                     [e.id for e in graph.entities], edges, num_relations, split_inverse)


def batch_node_graphs(graphs: Sequence[NodeGraph]) -> NodeGraph:
    """Disjoint union with node and entity offsets."""
    tokens, owners, ents, edges, gidx = [], [], [], [], []
    node_off = ent_off = 0
    for g, ng in enumerate(graphs):
        tokens.append(ng.token_ids)
        owners.append(ng.node_entity + ent_off)
        ents.extend(ng.entity_ids)
        gidx.extend([g] * len(ng.entity_ids))
        edges.extend((u + node_off, v + node_off, r) for u, v, r in ng.edges)
        node_off += ng.num_nodes
        ent_off += len(ng.entity_ids)
    first = graphs[0]
    return NodeGraph(np.concatenate(tokens), np.concatenate(owners), ents, edges,
                     first.num_relations, first.split_inverse, np.asarray(gidx, dtype=np.int64))


def rgcn_layer(node_vectors: torch.Tensor, graph: NodeGraph, self_weight: torch.Tensor,
               rel_weights: torch.Tensor, activation: str = "relu", normalize: bool = False,
               index: tuple[np.ndarray, np.ndarray, np.ndarray] | None = None) -> torch.Tensor:
    """One layer: ``act(sum_r sum_{n' in N_n^r} W_r v_n' + W_0 v_n)``.

    ``normalize`` divides each relation's sum by its neighbor count; off by default.
    """
    d = node_vectors.shape[-1]
    if node_vectors.shape[0] != graph.num_nodes:
        raise ValueError("node vector count does not match the node graph")
    if self_weight.shape != (d, d) or rel_weights.shape[1:] != (d, d):
        raise ValueError(f"weight shapes {tuple(self_weight.shape)}, {tuple(rel_weights.shape)} "
                         f"do not match node dimension {d}")
    out = node_vectors @ self_weight.T
    dst, src, rel = graph.message_index() if index is None else index
    if len(dst):
        dst_t = torch.as_tensor(dst)
        src_t = torch.as_tensor(src)
        used = np.unique(rel)
        slot = np.full(rel_weights.shape[0], -1, dtype=np.int64)
        slot[used] = np.arange(len(used))
        transformed = torch.einsum("nd,sed->sne", node_vectors, rel_weights[torch.as_tensor(used)])
        msgs = transformed[torch.as_tensor(slot[rel]), src_t]
        if normalize:
            key = dst * rel_weights.shape[0] + rel
            _, inv, counts = np.unique(key, return_inverse=True, return_counts=True)
            msgs = msgs / torch.as_tensor(counts[inv], dtype=msgs.dtype).unsqueeze(-1)
        out = out.index_add(0, dst_t, msgs)
    return ACTIVATIONS[activation](out)


@dataclass
class GraphEncoding:
    node_vectors: torch.Tensor  # (num_nodes, d_E)
    entity_vectors: torch.Tensor  # (num_entities, d_E), mean over each entity's nodes
    graph: NodeGraph

    def entity_position(self) -> dict[int, int]:
        return {e: i for i, e in enumerate(self.graph.entity_ids)}


def pool_entities(node_vectors: torch.Tensor, graph: NodeGraph) -> torch.Tensor:
    n_ent = len(graph.entity_ids)
    owner = torch.as_tensor(graph.node_entity)
    sums = node_vectors.new_zeros(n_ent, node_vectors.shape[-1]).index_add(0, owner, node_vectors)
    counts = torch.bincount(owner, minlength=n_ent).to(node_vectors.dtype)
    return sums / counts.unsqueeze(-1)


class GraphEncoder(nn.Module):
    """Shared subword node table plus ``L`` stacked R-GCN layers."""

    def __init__(self, vocab_size: int, dim: int, num_relations: int, num_layers: int = 2,
                 activation: str = "relu", normalize: bool = False, split_inverse: bool = False):
        super().__init__()
        if activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {activation!r}")
        self.dim = dim
        self.num_relations = num_relations
        self.num_layers = num_layers
        self.activation = activation
        self.normalize = normalize
        self.split_inverse = split_inverse
        slots = relation_slots(num_relations, split_inverse)
        self.node_table = nn.Embedding(vocab_size, dim)
        self.self_weight = nn.Parameter(torch.empty(num_layers, dim, dim))
        self.rel_weight = nn.Parameter(torch.empty(num_layers, slots, dim, dim))
        self.reset_parameters()

    def reset_parameters(self):
        nn.init.uniform_(self.node_table.weight, -0.1, 0.1)
        std = self.dim ** -0.5
        with torch.no_grad():
            self.self_weight.normal_(0.0, std)
            self.rel_weight.normal_(0.0, 0.5 * std)

    def load_pretrained(self, path: str) -> None:
        """Load node vectors from a ``.npy`` array of shape (vocab_size, dim)."""
        arr = np.load(path)
        if arr.shape != tuple(self.node_table.weight.shape):
            raise ValueError(f"pretrained table shape {arr.shape} != {tuple(self.node_table.weight.shape)}")
        with torch.no_grad():
            self.node_table.weight.copy_(torch.as_tensor(arr, dtype=self.node_table.weight.dtype))

    def last_relation_matrix(self, r: int) -> torch.Tensor:
        if self.num_layers == 0:
            return torch.eye(self.dim, dtype=self.node_table.weight.dtype)
        return self.rel_weight[-1, r]

    def forward(self, graph: NodeGraph) -> GraphEncoding:
        v = self.node_table(torch.as_tensor(graph.token_ids))
        index = graph.message_index()
        for layer in range(self.num_layers):
            v = rgcn_layer(v, graph, self.self_weight[layer], self.rel_weight[layer],
                           self.activation, self.normalize, index=index)
        return GraphEncoding(v, pool_entities(v, graph), graph)


def encode_graph(graph: NodeGraph, encoder: GraphEncoder) -> GraphEncoding:
    return encoder(graph)
