"""Input checking helpers shared by the estimator and the command line."""
from __future__ import annotations

from typing import Iterable, Sequence

from .kg_core import Dataset, DatasetError, Instance, KnowledgeGraph, Relation, parse_record


def check_dataset(X, relations: Sequence[str] | None = None, split: str = "train") -> Dataset:
    """Coerce ``X`` into a :class:`Dataset`.

    Accepts a Dataset, a sequence of Instances, or a sequence of raw records
    (dicts with ``triples``, ``text`` and ``mentions``).
    """
    if isinstance(X, Dataset):
        return X
    if isinstance(X, (str, bytes)) or not isinstance(X, Iterable):
        raise TypeError(f"expected a Dataset or a sequence of instances/records, got {type(X).__name__}")
    items = list(X)
    if not items:
        raise ValueError("empty input")
    if all(isinstance(x, Instance) for x in items):
        rels = items[0].graph.relations
        for inst in items[1:]:
            if inst.graph.relations != rels:
                raise DatasetError("instances use different relation vocabularies; pass a Dataset")
        return Dataset(tuple(items), tuple(rels), split)
    if all(isinstance(x, dict) for x in items):
        index = {lab: i for i, lab in enumerate(relations or [])}
        grow = relations is None
        for rec in items:
            for t in rec.get("triples", []):
                if grow and isinstance(t, (list, tuple)) and len(t) == 3 and isinstance(t[1], str):
                    index.setdefault(t[1].strip(), len(index))
        insts = [parse_record(rec, index, grow_relations=False, where=f"record {i}") for i, rec in enumerate(items)]
        rel_objs = tuple(Relation(i, lab) for lab, i in sorted(index.items(), key=lambda kv: kv[1]))
        return Dataset(tuple(insts), rel_objs, split)
    raise TypeError("mixed input: expected all Instances or all record dicts")


def check_graphs(X) -> list[KnowledgeGraph]:
    """Graphs to generate from: a Dataset, Instances, KnowledgeGraphs, or records."""
    if isinstance(X, KnowledgeGraph):
        return [X]
    if isinstance(X, Dataset):
        return [inst.graph for inst in X]
    items = list(X)
    if not items:
        raise ValueError("empty input")
    if all(isinstance(x, KnowledgeGraph) for x in items):
        return items
    if all(isinstance(x, Instance) for x in items):
        return [x.graph for x in items]
    if all(isinstance(x, dict) for x in items):
        # graphs alone are enough for generation; text and mentions are optional
        recs = [r if "text" in r else {**r, "text": "", "mentions": []} for r in items]
        return [inst.graph for inst in check_dataset(recs)]
    raise TypeError("expected graphs, instances or records")


def check_positive(name: str, value, allow_zero: bool = False):
    if value is None or (value < 0 if allow_zero else value <= 0):
        bound = ">= 0" if allow_zero else "> 0"
        raise ValueError(f"{name} must be {bound}, got {value!r}")
    return value


def check_choice(name: str, value, choices: Sequence):
    if value not in choices:
        raise ValueError(f"{name} must be one of {tuple(choices)}, got {value!r}")
    return value
