"""Few-shot knowledge-graph-to-text generation at desk scale."""
from .kg_core import (Dataset, Entity, EntityMention, Instance, KnowledgeGraph, Relation, Triple,
                      build_masked_text, few_shot_subsample, neighbors, parse_dataset, serialize_dataset)
from .tokenizer import SubwordVocab, train_bpe
from .estimator import KG2TextGenerator

__version__ = "0.1.0"

__all__ = [
    "Dataset", "Entity", "KG2TextGenerator", "EntityMention", "Instance", "KnowledgeGraph", "Relation", "Triple",
    "SubwordVocab", "build_masked_text", "few_shot_subsample", "neighbors", "parse_dataset",
    "serialize_dataset", "train_bpe",
]
