"""Turn a knowledge graph into an ordered entity sequence.

RBFS orders each breadth-first layer by descending edge weight
``sigmoid(v_head^T W_r v_tail)``; RDFS applies the same weights depth-first.
FFS and RS are the randomized baselines.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np
import torch

from .graph_encoder import GraphEncoder, GraphEncoding
from .kg_core import KnowledgeGraph, Triple

STRATEGIES = ("rbfs", "rdfs", "ffs", "rs")


@dataclass
class LinearizedSequence:
    order: list[int]
    weights: dict[int, float]
    strategy: str
    root: int
    roots: list[int] = field(default_factory=list)
    via: dict[int, int] = field(default_factory=dict)  # entity -> relation of its discovering edge

    def to_dict(self) -> dict:
        return {
            "strategy": self.strategy,
            "root": self.root,
            "roots": list(self.roots),
            "order": list(self.order),
            "weights": {str(k): v for k, v in self.weights.items()},
        }


def _sigmoid(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + np.exp(-x))
    z = np.exp(x)
    return z / (1.0 + z)


def rbfs_weight(graph: KnowledgeGraph, e: int, r: int, e_prime: int,
                encoding: GraphEncoding, params: GraphEncoder) -> float:
    if Triple(e, r, e_prime) not in set(graph.triples):
        raise ValueError(f"<{e}, {r}, {e_prime}> is not a triple of the graph")
    pos = encoding.entity_position()
    v_e = encoding.entity_vectors[pos[e]]
    v_p = encoding.entity_vectors[pos[e_prime]]
    with torch.no_grad():
        score = float(v_e @ params.last_relation_matrix(r) @ v_p)
    return float(_sigmoid(score))


def triple_weights(graph: KnowledgeGraph, entity_vectors: torch.Tensor,
                   params: GraphEncoder) -> dict[Triple, float]:
    """Weights for every triple; ``entity_vectors`` rows follow ``graph.entities``."""
    if not graph.triples:
        return {}
    pos = {e.id: i for i, e in enumerate(graph.entities)}
    with torch.no_grad():
        h = entity_vectors[[pos[t.head] for t in graph.triples]]
        t_ = entity_vectors[[pos[t.tail] for t in graph.triples]]
        W = torch.stack([params.last_relation_matrix(t.relation) for t in graph.triples])
        scores = torch.einsum("nd,nde,ne->n", h, W, t_).double()
        alpha = torch.sigmoid(scores).tolist()
    return dict(zip(graph.triples, alpha))


def _incident(graph: KnowledgeGraph) -> dict[int, list[tuple[int, Triple]]]:
    inc: dict[int, list[tuple[int, Triple]]] = {e.id: [] for e in graph.entities}
    for t in graph.triples:
        inc[t.head].append((t.tail, t))
        if t.tail != t.head:
            inc[t.tail].append((t.head, t))
    return inc


def _degree(graph: KnowledgeGraph, e: int) -> int:
    return len(graph.undirected_neighbors(e) - {e})


def select_root(graph: KnowledgeGraph, candidates) -> int:
    """Highest undirected degree; ties go to the lowest entity id."""
    return min(candidates, key=lambda e: (-_degree(graph, e), e))


def _best_edges(node: int, inc, visited, weights: Mapping[Triple, float]):
    best: dict[int, tuple[float, int]] = {}
    for other, t in inc[node]:
        if other in visited:
            continue
        a = weights.get(t, 0.5)
        cur = best.get(other)
        if cur is None or a > cur[0] or (a == cur[0] and t.relation < cur[1]):
            best[other] = (a, t.relation)
    return best


def _check(graph: KnowledgeGraph):
    if len(graph.entities) == 0:
        raise ValueError("cannot linearize an empty graph")


def rbfs_order(graph: KnowledgeGraph, weights: Mapping[Triple, float]) -> LinearizedSequence:
    _check(graph)
    inc = _incident(graph)
    unvisited = {e.id for e in graph.entities}
    visited: set[int] = set()
    order: list[int] = []
    alpha: dict[int, float] = {}
    via: dict[int, int] = {}
    roots = []
    while unvisited:
        root = select_root(graph, unvisited)
        roots.append(root)
        layer = [root]
        visited.add(root)
        unvisited.discard(root)
        order.append(root)
        while layer:
            cand: dict[int, tuple[float, int]] = {}
            for node in layer:
                for other, (a, r) in _best_edges(node, inc, visited, weights).items():
                    cur = cand.get(other)
                    if cur is None or a > cur[0] or (a == cur[0] and r < cur[1]):
                        cand[other] = (a, r)
            layer = sorted(cand, key=lambda c: (-cand[c][0], c))
            for c in layer:
                alpha[c], via[c] = cand[c]
                visited.add(c)
                unvisited.discard(c)
            order.extend(layer)
    return LinearizedSequence(order, alpha, "rbfs", roots[0], roots, via)


def rdfs_order(graph: KnowledgeGraph, weights: Mapping[Triple, float]) -> LinearizedSequence:
    _check(graph)
    inc = _incident(graph)
    unvisited = {e.id for e in graph.entities}
    visited: set[int] = set()
    order: list[int] = []
    alpha: dict[int, float] = {}
    via: dict[int, int] = {}
    roots = []

    def expand(node):
        visited.add(node)
        unvisited.discard(node)
        order.append(node)
        best = _best_edges(node, inc, visited, weights)
        kids = sorted(best, key=lambda c: (-best[c][0], c))
        return iter([(c, best[c]) for c in kids])

    while unvisited:
        root = select_root(graph, unvisited)
        roots.append(root)
        stack = [expand(root)]
        while stack:
            for child, (a, r) in stack[-1]:
                if child not in visited:
                    alpha[child], via[child] = a, r
                    stack.append(expand(child))
                    break
            else:
                stack.pop()
    return LinearizedSequence(order, alpha, "rdfs", roots[0], roots, via)


def bfs_layers(graph: KnowledgeGraph) -> list[list[list[int]]]:
    """Breadth-first layers of each component, components in root-selection order."""
    _check(graph)
    unvisited = {e.id for e in graph.entities}
    components = []
    while unvisited:
        root = select_root(graph, unvisited)
        unvisited.discard(root)
        layers = []
        layer = [root]
        while layer:
            layers.append(layer)
            nxt = set()
            for node in layer:
                nxt |= graph.undirected_neighbors(node) & unvisited
            unvisited -= nxt
            layer = sorted(nxt)
        components.append(layers)
    return components


def linearize_rbfs(graph: KnowledgeGraph, encoding: GraphEncoding,
                   params: GraphEncoder) -> LinearizedSequence:
    return rbfs_order(graph, triple_weights(graph, _aligned(graph, encoding), params))


def linearize_rdfs(graph: KnowledgeGraph, encoding: GraphEncoding,
                   params: GraphEncoder) -> LinearizedSequence:
    return rdfs_order(graph, triple_weights(graph, _aligned(graph, encoding), params))


def _aligned(graph: KnowledgeGraph, encoding: GraphEncoding) -> torch.Tensor:
    pos = encoding.entity_position()
    return encoding.entity_vectors[[pos[e.id] for e in graph.entities]]


def linearize_ffs(graph: KnowledgeGraph, seed: int) -> LinearizedSequence:
    rng = np.random.default_rng(seed)
    inc = _incident(graph)
    order: list[int] = []
    roots = []
    via: dict[int, int] = {}
    for layers in bfs_layers(graph):
        roots.append(layers[0][0])
        for layer in layers:
            placed = set(order)
            for c in layer:
                rels = [t.relation for other, t in inc[c] if other in placed]
                if rels:
                    via[c] = min(rels)
            order.extend(layer[i] for i in rng.permutation(len(layer)))
    return LinearizedSequence(order, {}, "ffs", roots[0], roots, via)


def linearize_random(graph: KnowledgeGraph, seed: int) -> LinearizedSequence:
    _check(graph)
    rng = np.random.default_rng(seed)
    ids = [e.id for e in graph.entities]
    order = [ids[i] for i in rng.permutation(len(ids))]
    return LinearizedSequence(order, {}, "rs", order[0], [order[0]])


def linearize(graph: KnowledgeGraph, strategy: str, *, weights: Mapping[Triple, float] | None = None,
              seed: int = 0) -> LinearizedSequence:
    """Dispatch on strategy name; the relation-biased ones need ``weights``."""
    if strategy == "rbfs":
        return rbfs_order(graph, weights or {})
    if strategy == "rdfs":
        return rdfs_order(graph, weights or {})
    if strategy == "ffs":
        return linearize_ffs(graph, seed)
    if strategy == "rs":
        return linearize_random(graph, seed)
    raise ValueError(f"unknown linearization strategy {strategy!r}; expected one of {STRATEGIES}")
