"""Knowledge-graph data model, dataset ingestion and few-shot subsampling."""
from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

logger = logging.getLogger(__name__)

MASK_TOKEN = "[MASK]"


class DatasetError(ValueError):
    """Raised for malformed records or records violating instance invariants."""


@dataclass(frozen=True)
class Entity:
    id: int
    surface: tuple[str, ...]
    subword_ids: tuple[int, ...] = ()

    def __post_init__(self):
        if self.id < 0:
            raise DatasetError(f"entity id must be >= 0, got {self.id}")
        if not self.surface:
            raise DatasetError("entity surface must be non-empty")

    @property
    def name(self) -> str:
        return " ".join(self.surface)


@dataclass(frozen=True)
class Relation:
    id: int
    label: str


@dataclass(frozen=True)
class Triple:
    head: int
    relation: int
    tail: int

    @property
    def is_self_loop(self) -> bool:
        return self.head == self.tail


@dataclass(frozen=True)
class EntityMention:
    entity: int
    start: int
    end: int  # inclusive


class KnowledgeGraph:
    """A small directed multi-relational graph.

    ``neighbors`` follows the symmetric definition: ``e'`` is an ``r``-neighbor
    of ``e`` when either ``<e, r, e'>`` or ``<e', r, e>`` is in the graph.
    """

    def __init__(self, entities: Sequence[Entity], relations: Sequence[Relation],
                 triples: Iterable[Triple]):
        self.entities: tuple[Entity, ...] = tuple(entities)
        self.relations: tuple[Relation, ...] = tuple(relations)
        ids = [e.id for e in self.entities]
        if len(set(ids)) != len(ids):
            raise DatasetError("duplicate entity ids")
        self._entity_index = {e.id: e for e in self.entities}
        rel_ids = {r.id for r in self.relations}

        seen: set[Triple] = set()
        kept: list[Triple] = []
        for t in triples:
            if t.head not in self._entity_index or t.tail not in self._entity_index:
                raise DatasetError(f"triple {t} references an unknown entity")
            if t.relation not in rel_ids:
                raise DatasetError(f"triple {t} references an unknown relation")
            if t in seen:
                logger.warning("dropping duplicate triple %s", t)
                continue
            seen.add(t)
            kept.append(t)
        self.triples: tuple[Triple, ...] = tuple(kept)
        self.has_self_loops = any(t.is_self_loop for t in kept)

        adj: dict[int, dict[int, set[int]]] = {e: {} for e in ids}
        for t in kept:
            adj[t.head].setdefault(t.relation, set()).add(t.tail)
            adj[t.tail].setdefault(t.relation, set()).add(t.head)
        self.adjacency = adj

    def __len__(self) -> int:
        return len(self.entities)

    def __repr__(self) -> str:
        return f"KnowledgeGraph(entities={len(self.entities)}, triples={len(self.triples)})"

    def entity(self, e: int) -> Entity:
        try:
            return self._entity_index[e]
        except KeyError:
            raise KeyError(f"unknown entity id {e}") from None

    def neighbors(self, e: int, r: int) -> set[int]:
        if e not in self.adjacency:
            raise KeyError(f"unknown entity id {e}")
        return set(self.adjacency[e].get(r, ()))

    def undirected_neighbors(self, e: int) -> set[int]:
        if e not in self.adjacency:
            raise KeyError(f"unknown entity id {e}")
        out: set[int] = set()
        for nbrs in self.adjacency[e].values():
            out |= nbrs
        return out

    def with_subwords(self, subwords: dict[int, Sequence[int]]) -> "KnowledgeGraph":
        ents = [Entity(e.id, e.surface, tuple(subwords[e.id])) for e in self.entities]
        return KnowledgeGraph(ents, self.relations, self.triples)


def neighbors(graph: KnowledgeGraph, e: int, r: int) -> set[int]:
    return graph.neighbors(e, r)


def build_masked_text(text: Sequence[str], mentions: Iterable[EntityMention]) -> list[str]:
    """Replace every word inside a mention span with the mask token."""
    out = list(text)
    covered: set[int] = set()
    for m in mentions:
        if not (0 <= m.start <= m.end < len(out)):
            raise DatasetError(f"mention span {m} out of range for text of length {len(out)}")
        span = set(range(m.start, m.end + 1))
        if covered & span:
            raise DatasetError(f"mention {m} overlaps another mention")
        covered |= span
        for i in span:
            out[i] = MASK_TOKEN
    return out


@dataclass(frozen=True)
class Instance:
    graph: KnowledgeGraph
    text: tuple[str, ...]
    mentions: tuple[EntityMention, ...]
    masked_text: tuple[str, ...] = field(default=())

    def __post_init__(self):
        if not self.masked_text:
            object.__setattr__(self, "masked_text", tuple(build_masked_text(self.text, self.mentions)))
        _validate_instance(self)

    @property
    def mention_map(self) -> dict[int, EntityMention]:
        return {m.entity: m for m in self.mentions}


def _validate_instance(inst: Instance) -> None:
    T = len(inst.text)
    if len(inst.masked_text) != T:
        raise DatasetError("masked text length differs from text length")
    seen: set[int] = set()
    for m in inst.mentions:
        if not (0 <= m.start <= m.end < T):
            raise DatasetError(f"mention span {m} out of range (T={T})")
        if m.entity in seen:
            raise DatasetError(f"entity {m.entity} has more than one mention")
        seen.add(m.entity)
        inst.graph.entity(m.entity)
        if any(w == MASK_TOKEN for w in inst.text[m.start:m.end + 1]):
            raise DatasetError("text contains a mask token inside a mention span")
    inside: set[int] = set()
    for m in inst.mentions:
        span = set(range(m.start, m.end + 1))
        if inside & span:
            raise DatasetError(f"mention {m} overlaps another mention")
        inside |= span
    for i, (w, mw) in enumerate(zip(inst.text, inst.masked_text)):
        if i in inside:
            if mw != MASK_TOKEN:
                raise DatasetError(f"masked text position {i} is not masked")
        elif w != mw:
            raise DatasetError(f"masked text differs from text at unmasked position {i}")


@dataclass(frozen=True)
class Dataset:
    instances: tuple[Instance, ...]
    relations: tuple[Relation, ...]
    split: str = "train"

    def __len__(self) -> int:
        return len(self.instances)

    def __getitem__(self, i):
        return self.instances[i]

    def __iter__(self):
        return iter(self.instances)

    @property
    def relation_labels(self) -> list[str]:
        return [r.label for r in self.relations]

    def texts(self) -> list[str]:
        return [" ".join(inst.text) for inst in self.instances]


def parse_record(record: dict, relation_index: dict[str, int], *,
                 grow_relations: bool = True, where: str = "record") -> Instance:
    """Build an :class:`Instance` from one decoded JSON record."""
    try:
        raw_triples = record["triples"]
        text = record["text"]
        raw_mentions = record.get("mentions", [])
    except (KeyError, TypeError) as exc:
        raise DatasetError(f"{where}: missing field {exc}") from None
    if not isinstance(text, str):
        raise DatasetError(f"{where}: text must be a string")

    entity_ids: dict[str, int] = {}
    triples = []
    for tr in raw_triples:
        if not (isinstance(tr, (list, tuple)) and len(tr) == 3 and all(isinstance(x, str) for x in tr)):
            raise DatasetError(f"{where}: malformed triple {tr!r}")
        head, rel, tail = (x.strip() for x in tr)
        if not head or not tail or not rel:
            raise DatasetError(f"{where}: empty field in triple {tr!r}")
        for ent in (head, tail):
            entity_ids.setdefault(ent, len(entity_ids))
        if rel not in relation_index:
            if not grow_relations:
                raise DatasetError(f"{where}: unknown relation {rel!r}")
            relation_index[rel] = len(relation_index)
        triples.append(Triple(entity_ids[head], relation_index[rel], entity_ids[tail]))
    if not entity_ids:
        raise DatasetError(f"{where}: graph has no triples")

    words = tuple(text.split())
    mentions: list[EntityMention] = []
    mentioned: set[int] = set()
    for m in raw_mentions:
        if not (isinstance(m, (list, tuple)) and len(m) == 3):
            raise DatasetError(f"{where}: malformed mention {m!r}")
    for surface, start, end in sorted(raw_mentions, key=lambda m: (m[1], m[2])):
        if surface not in entity_ids:
            raise DatasetError(f"{where}: mention {surface!r} names no graph entity")
        if not (isinstance(start, int) and isinstance(end, int)) or not (0 <= start <= end < len(words)):
            raise DatasetError(f"{where}: mention span [{start}, {end}] out of range (T={len(words)})")
        e = entity_ids[surface]
        if e in mentioned:
            continue  # later mentions are dropped; only the first one is kept
        mentioned.add(e)
        mentions.append(EntityMention(e, start, end))

    relations = sorted(((i, lab) for lab, i in relation_index.items()))
    graph = KnowledgeGraph(
        [Entity(i, tuple(name.split())) for name, i in entity_ids.items()],
        [Relation(i, lab) for i, lab in relations],
        triples,
    )
    try:
        return Instance(graph, words, tuple(mentions))
    except DatasetError as exc:
        raise DatasetError(f"{where}: {exc}") from None


def parse_dataset(path: str | os.PathLike, split: str = "train",
                  relations: Sequence[str] | None = None) -> Dataset:
    """Read a JSON-lines dataset file.

    When ``relations`` is given the relation vocabulary is fixed to it and any
    other label is rejected; otherwise the vocabulary grows in order of first
    appearance.
    """
    rel_index: dict[str, int] = {lab: i for i, lab in enumerate(relations or [])}
    grow = relations is None
    raw: list[tuple[int, dict]] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                raw.append((lineno, json.loads(line)))
            except json.JSONDecodeError as exc:
                raise DatasetError(f"{path}:{lineno}: malformed JSON ({exc.msg})") from None
    # first pass fixes the relation vocabulary so every graph shares it
    for lineno, rec in raw:
        for tr in rec.get("triples", []) if isinstance(rec, dict) else []:
            if isinstance(tr, (list, tuple)) and len(tr) == 3 and isinstance(tr[1], str):
                lab = tr[1].strip()
                if lab and lab not in rel_index and grow:
                    rel_index[lab] = len(rel_index)
    instances = [parse_record(rec, rel_index, grow_relations=False, where=f"{path}:{lineno}")
                 for lineno, rec in raw]
    rels = tuple(Relation(i, lab) for lab, i in sorted(rel_index.items(), key=lambda kv: kv[1]))
    return Dataset(tuple(instances), rels, split)


def instance_to_record(inst: Instance) -> dict:
    g = inst.graph
    return {
        "triples": [[g.entity(t.head).name, g.relations[t.relation].label, g.entity(t.tail).name]
                    for t in g.triples],
        "text": " ".join(inst.text),
        "mentions": [[g.entity(m.entity).name, m.start, m.end] for m in inst.mentions],
    }


def serialize_dataset(dataset: Dataset, path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for inst in dataset.instances:
            fh.write(json.dumps(instance_to_record(inst), ensure_ascii=False) + "\n")


def few_shot_subsample(dataset: Dataset, k: int, seed: int) -> Dataset:
    """Draw ``k`` instances without replacement, deterministically in ``seed``."""
    n = len(dataset.instances)
    if k > n:
        raise ValueError(f"cannot draw {k} instances from a dataset of {n}")
    if k < 0:
        raise ValueError("k must be non-negative")
    rng = np.random.default_rng(seed)
    idx = rng.permutation(n)[:k]
    return Dataset(tuple(dataset.instances[i] for i in idx), dataset.relations, dataset.split)
