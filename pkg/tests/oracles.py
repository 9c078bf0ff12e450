"""Slow, literal reference implementations used as test oracles."""
import itertools
import math

import networkx as nx
import numpy as np


def rgcn_brute_force(graph, vectors, self_weight, rel_weights, activation="relu", normalize=False):
    """Nested loops straight from the definition over entities and their subword nodes."""
    nodes = []  # (entity id, position within entity)
    for e in graph.entities:
        for k in range(len(e.subword_ids)):
            nodes.append((e.id, k))
    R = len(graph.relations)
    intra = R
    neigh = {(n, r): set() for n in range(len(nodes)) for r in range(R + 1)}
    for a, (ea, _) in enumerate(nodes):
        for b, (eb, _) in enumerate(nodes):
            if a != b and ea == eb:
                neigh[a, intra].add(b)
            for r in range(R):
                if eb in graph.neighbors(ea, r):
                    neigh[a, r].add(b)
    d = vectors.shape[1]
    out = np.zeros_like(vectors)
    for n in range(len(nodes)):
        acc = np.zeros(d)
        for i in range(d):
            for j in range(d):
                acc[i] += self_weight[i, j] * vectors[n, j]
        for r in range(R + 1):
            part = np.zeros(d)
            for m in sorted(neigh[n, r]):
                for i in range(d):
                    for j in range(d):
                        part[i] += rel_weights[r, i, j] * vectors[m, j]
            if normalize and neigh[n, r]:
                part /= len(neigh[n, r])
            acc += part
        out[n] = acc
    if activation == "relu":
        return np.maximum(out, 0.0)
    if activation == "tanh":
        return np.tanh(out)
    return out


def _undirected(graph):
    g = nx.Graph()
    g.add_nodes_from(e.id for e in graph.entities)
    g.add_edges_from((t.head, t.tail) for t in graph.triples)
    return g


def _root(graph, g, candidates):
    deg = {e: len(set(g.neighbors(e)) - {e}) for e in candidates}
    return min(candidates, key=lambda e: (-deg[e], e))


def _components(graph):
    """Components in root-selection order, each with its root."""
    g = _undirected(graph)
    remaining = set(g.nodes)
    out = []
    while remaining:
        root = _root(graph, g, remaining)
        comp = nx.node_connected_component(g, root)
        out.append((root, comp))
        remaining -= comp
    return g, out


def _edge_alpha(graph, weights, a, b):
    vals = [(weights[t], -t.relation) for t in graph.triples if {t.head, t.tail} == {a, b} and a != b]
    return max(vals)[0] if vals else None


def rbfs_exhaustive(graph, weights):
    """Enumerate every permutation; keep the ones that are breadth-first by depth and
    alpha-sorted inside each depth. Returns the list of survivors."""
    g, comps = _components(graph)
    depth, blocks = {}, []
    for root, comp in comps:
        lengths = nx.single_source_shortest_path_length(g, root)
        depth.update(lengths)
        blocks.append((root, comp))

    def key_alpha(node):
        # best weight among edges to the previous layer
        best = None
        for other in g.neighbors(node):
            if other != node and depth[other] == depth[node] - 1 and _comp_of[other] == _comp_of[node]:
                a = _edge_alpha(graph, weights, node, other)
                best = a if best is None or a > best else best
        return best

    _comp_of = {v: i for i, (_, comp) in enumerate(blocks) for v in comp}
    alpha = {v: key_alpha(v) for v in depth if depth[v] > 0}
    survivors = []
    for perm in itertools.permutations([e.id for e in graph.entities]):
        pos = 0
        ok = True
        for root, comp in blocks:
            block = perm[pos:pos + len(comp)]
            pos += len(comp)
            if set(block) != comp or block[0] != root:
                ok = False
                break
            for x, y in zip(block, block[1:]):
                if depth[x] > depth[y]:
                    ok = False
                    break
                if depth[x] == depth[y] and x != root and (-alpha[x], x) > (-alpha[y], y):
                    ok = False
                    break
            if not ok:
                break
        if ok:
            survivors.append(list(perm))
    return survivors


def rdfs_recursive(graph, weights):
    g, comps = _components(graph)
    order, visited = [], set()

    def visit(node):
        visited.add(node)
        order.append(node)
        kids = [c for c in g.neighbors(node) if c not in visited and c != node]
        kids.sort(key=lambda c: (-_edge_alpha(graph, weights, node, c), c))
        for c in kids:
            if c not in visited:
                visit(c)

    remaining = {e.id for e in graph.entities}
    while remaining:
        root = _root(graph, g, remaining)
        visit(root)
        remaining -= visited
    return order


def bleu_by_hand(cand, ref, n):
    c, r = cand.split(), ref.split()
    logs = []
    for k in range(1, n + 1):
        cg = [tuple(c[i:i + k]) for i in range(len(c) - k + 1)]
        rg = [tuple(r[i:i + k]) for i in range(len(r) - k + 1)]
        match = 0
        used = [False] * len(rg)
        for gram in cg:
            for j, other in enumerate(rg):
                if not used[j] and other == gram:
                    used[j] = True
                    match += 1
                    break
        if match == 0:
            return 0.0
        logs.append(math.log(match / len(cg)))
    bp = 1.0 if len(c) > len(r) else math.exp(1 - len(r) / len(c))
    return bp * math.exp(sum(logs) / n)
