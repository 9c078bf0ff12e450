"""The full graph-to-text model: R-GCN encoder, linearizer, sequence model, copy gate, relation classifier."""
from __future__ import annotations

import zlib
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
import torch
from torch import nn
from torch.nn.utils.rnn import pad_sequence

from .graph_encoder import GraphEncoder, NodeGraph, batch_node_graphs, node_graph
from .kg_core import Entity, Instance, KnowledgeGraph, Relation, Triple
from .linearizer import STRATEGIES, LinearizedSequence, linearize, triple_weights
from .losses import (DEFAULT_LAMBDAS, CopyGate, LossBundle, RelationClassifier, copy_distribution,
                     copy_loss, gr_loss, lm_loss, mix_distributions, ra_loss, total_loss)
from .seq_model import DecoderTrace, SeqModel, SeqModelConfig
from .tokenizer import SubwordVocab


@dataclass
class ModelConfig:
    d_graph: int = 64
    rgcn_layers: int = 2
    activation: str = "relu"
    rgcn_normalize: bool = False
    split_inverse: bool = False
    seq: SeqModelConfig = field(default_factory=SeqModelConfig)
    use_copy: bool = True
    separator: bool = True
    interleave_relations: bool = False
    strategy: str = "rbfs"
    seed: int = 0

    def __post_init__(self):
        if isinstance(self.seq, dict):
            self.seq = SeqModelConfig(**self.seq)
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class GraphExample:
    graph: KnowledgeGraph  # entities carry subword ids
    nodes: NodeGraph
    seed: int


@dataclass
class Example(GraphExample):
    target_ids: list[int] = field(default_factory=list)  # subwords of the text, then EOS
    masked_ids: list[int] = field(default_factory=list)
    target_spans: dict[int, tuple[int, int]] = field(default_factory=dict)  # [start, end) subword range
    masked_spans: dict[int, tuple[int, int]] = field(default_factory=dict)
    copy_mask: list[bool] = field(default_factory=list)


def graph_seed(graph: KnowledgeGraph, seed: int) -> int:
    key = "|".join(f"{graph.entity(t.head).name}\t{graph.relations[t.relation].label}\t"
                   f"{graph.entity(t.tail).name}" for t in graph.triples)
    return (zlib.crc32(key.encode("utf-8")) ^ seed) & 0x7FFFFFFF


@dataclass
class EncodedBatch:
    memory: torch.Tensor  # (B, S, d_model)
    memory_pad: torch.Tensor  # (B, S) True at padding
    source_ids: torch.Tensor  # (B, S) copyable vocabulary id, -1 elsewhere
    entity_vectors: list[torch.Tensor]  # per instance, rows follow graph.entities
    linearized: list[LinearizedSequence]


class KG2TextModel(nn.Module):
    def __init__(self, vocab: SubwordVocab, relations: Sequence[str], config: ModelConfig | None = None):
        super().__init__()
        self.vocab = vocab
        self.relations = list(relations)
        self.config = config or ModelConfig()
        cfg = self.config
        self._relation_tokens = [vocab.encode(lab.replace("_", " ")) if _encodable(vocab, lab) else []
                                 for lab in self.relations]
        self.graph_encoder = GraphEncoder(len(vocab), cfg.d_graph, len(self.relations), cfg.rgcn_layers,
                                          cfg.activation, cfg.rgcn_normalize, cfg.split_inverse)
        self.seq_model = SeqModel(len(vocab), cfg.seq, cfg.d_graph)
        self.copy_gate = CopyGate(cfg.seq.d_model)
        self.relation_classifier = RelationClassifier(cfg.seq.d_model, len(self.relations))
        banned = [vocab.pad_id, vocab.bos_id, vocab.mask_id, vocab.sep_id]
        self.register_buffer("_banned", torch.tensor(banned, dtype=torch.long), persistent=False)

    # ------------------------------------------------------------------ data
    def tokenize_graph(self, graph: KnowledgeGraph) -> KnowledgeGraph:
        index = {lab: i for i, lab in enumerate(self.relations)}
        for r in graph.relations:
            if r.label not in index and any(t.relation == r.id for t in graph.triples):
                raise ValueError(f"relation {r.label!r} is not in the model's relation vocabulary")
        remap = {r.id: index.get(r.label, -1) for r in graph.relations}
        ents = [Entity(e.id, e.surface, self.vocab.encode_words(e.surface)[0]) for e in graph.entities]
        rels = [Relation(i, lab) for i, lab in enumerate(self.relations)]
        triples = [Triple(t.head, remap[t.relation], t.tail) for t in graph.triples]
        return KnowledgeGraph(ents, rels, triples)

    def prepare_graph(self, graph: KnowledgeGraph) -> GraphExample:
        if len(graph.entities) == 0:
            raise ValueError("cannot encode an empty graph")
        g = self.tokenize_graph(graph)
        return GraphExample(g, node_graph(g, len(self.relations), self.config.split_inverse),
                            graph_seed(g, self.config.seed))

    def prepare(self, instance: Instance) -> Example:
        base = self.prepare_graph(instance.graph)
        ids, offsets = self.vocab.encode_words(instance.text)
        masked, moffsets = self.vocab.encode_words(instance.masked_text)
        T = len(ids) + 1
        copy_mask = [False] * T
        tspans, mspans = {}, {}
        for m in instance.mentions:
            s, e = offsets[m.start][0], offsets[m.end][1]
            tspans[m.entity] = (s, e)
            mspans[m.entity] = (moffsets[m.start][0], moffsets[m.end][1])
            for j in range(s, e):
                copy_mask[j] = True
        return Example(base.graph, base.nodes, base.seed, ids + [self.vocab.eos_id], masked,
                       tspans, mspans, copy_mask)

    # --------------------------------------------------------------- forward
    def linearize(self, graph: KnowledgeGraph, entity_vectors: torch.Tensor, seed: int) -> LinearizedSequence:
        strategy = self.config.strategy
        weights = (triple_weights(graph, entity_vectors, self.graph_encoder)
                   if strategy in ("rbfs", "rdfs") else None)
        return linearize(graph, strategy, weights=weights, seed=seed)

    def encode_graphs(self, examples: Sequence[GraphExample]) -> EncodedBatch:
        batched = batch_node_graphs([ex.nodes for ex in examples])
        enc = self.graph_encoder(batched)
        projected = self.seq_model.project_graph(enc.node_vectors)
        emb = self.seq_model.token_embedding
        sep_vec = emb.weight[self.vocab.sep_id]
        seqs, srcs, ent_vecs, lins = [], [], [], []
        node_off = ent_off = 0
        for ex in examples:
            n_ent = len(ex.graph.entities)
            vecs = enc.entity_vectors[ent_off:ent_off + n_ent]
            lin = self.linearize(ex.graph, vecs, ex.seed)
            pos = {e.id: i for i, e in enumerate(ex.graph.entities)}
            node_rows = {}
            cursor = node_off
            for e in ex.graph.entities:
                node_rows[e.id] = range(cursor, cursor + len(e.subword_ids))
                cursor += len(e.subword_ids)
            parts, src = [], []
            for e in lin.order:
                if self.config.interleave_relations and e in lin.via:
                    rel_tok = self._relation_tokens[lin.via[e]]
                    if rel_tok:
                        parts.append(emb.weight[rel_tok])
                        src.extend([-1] * len(rel_tok))
                rows = node_rows[e]
                parts.append(projected[rows.start:rows.stop])
                src.extend(ex.graph.entities[pos[e]].subword_ids)
                if self.config.separator:
                    parts.append(sep_vec[None])
                    src.append(-1)
            seqs.append(torch.cat(parts))
            srcs.append(torch.tensor(src, dtype=torch.long))
            ent_vecs.append(vecs)
            lins.append(lin)
            node_off = cursor
            ent_off += n_ent
        inputs = pad_sequence(seqs, batch_first=True)
        lengths = torch.tensor([len(s) for s in srcs])
        pad = torch.arange(inputs.shape[1])[None] >= lengths[:, None]
        source_ids = pad_sequence(srcs, batch_first=True, padding_value=-1)
        memory = self.seq_model.encode_inputs(inputs, pad)
        return EncodedBatch(memory, pad, source_ids, ent_vecs, lins)

    def output_distribution(self, logits: torch.Tensor, trace: DecoderTrace, dec_in: torch.Tensor,
                            source_ids: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor | None]:
        """Mixed generation/copy probabilities and the copy gates (None when copying is off)."""
        if not self.config.use_copy:
            return torch.softmax(logits, dim=-1), None
        gates = self.copy_gate(trace.states, self.seq_model.token_embedding(dec_in))
        copy = copy_distribution(trace.attention, source_ids, logits.shape[-1])
        return mix_distributions(logits, copy, gates), gates

    def losses(self, examples: Sequence[Example], lambdas=DEFAULT_LAMBDAS, *, normalize: bool = True,
               bce_copy: bool = False, lm_only: bool = False) -> LossBundle:
        """Loss bundle for a batch.

        Zero-weighted auxiliary terms are still reported but computed outside
        the autograd graph (and, for alignment, without dropout), so they never
        change the gradient or the random stream.
        """
        lam1, lam2, lam3 = (float(x) for x in lambdas)
        vocab = self.vocab
        batch = self.encode_graphs(examples)
        tgt = pad_sequence([torch.tensor(ex.target_ids) for ex in examples], batch_first=True,
                           padding_value=vocab.pad_id)
        dec_in = torch.cat([torch.full((len(examples), 1), vocab.bos_id), tgt[:, :-1]], dim=1)
        lengths = torch.tensor([len(ex.target_ids) for ex in examples])
        valid = torch.arange(tgt.shape[1])[None] < lengths[:, None]
        logits, trace = self.seq_model.decode(dec_in, batch.memory, batch.memory_pad)
        probs, gates = self.output_distribution(logits, trace, dec_in, batch.source_ids)
        l_lm = lm_loss(logits, tgt, probs if gates is not None else None, valid, normalize)
        zero = l_lm.new_zeros(())
        if lm_only:
            return total_loss(l_lm, zero, zero, zero, (0.0, 0.0, 0.0))

        if gates is None:
            l_pg = zero
        else:
            cmask = pad_sequence([torch.tensor(ex.copy_mask) for ex in examples], batch_first=True)
            with torch.set_grad_enabled(torch.is_grad_enabled() and lam1 > 0):
                l_pg = copy_loss(gates, cmask, valid, normalize, bce_copy)

        if lam2 > 0:
            l_ra = self._ra(examples, batch, normalize)
        else:
            was_training = self.training
            self.seq_model.eval()
            try:
                with torch.no_grad():
                    l_ra = self._ra(examples, batch, normalize)
            finally:
                self.seq_model.train(was_training)

        with torch.set_grad_enabled(torch.is_grad_enabled() and lam3 > 0):
            l_gr = self._gr(examples, trace.states, normalize)
        return total_loss(l_lm, l_pg, l_ra, l_gr, (lam1, lam2, lam3))

    def _ra(self, examples: Sequence[Example], batch: EncodedBatch, normalize: bool) -> torch.Tensor:
        masked = pad_sequence([torch.tensor(ex.masked_ids) for ex in examples], batch_first=True,
                              padding_value=self.vocab.pad_id)
        lengths = torch.tensor([len(ex.masked_ids) for ex in examples])
        pad = torch.arange(masked.shape[1])[None] >= lengths[:, None]
        ctx = self.seq_model.text_encode_lower(masked, pad)
        per = []
        for b, ex in enumerate(examples):
            if not ex.masked_spans:
                continue
            pos = {e.id: i for i, e in enumerate(ex.graph.entities)}
            ents = sorted(ex.masked_spans)
            gnn = self.seq_model.project_graph(batch.entity_vectors[b][[pos[e] for e in ents]])
            plm = torch.stack([ctx[b, s:t].mean(0) for s, t in (ex.masked_spans[e] for e in ents)])
            per.append(ra_loss(gnn, plm, normalize))
        if not per:
            return ctx.new_zeros(())
        return torch.stack(per).mean()

    def _gr(self, examples: Sequence[Example], states: torch.Tensor, normalize: bool) -> torch.Tensor:
        per = []
        for b, ex in enumerate(examples):
            scoreable = [t for t in ex.graph.triples if t.head in ex.target_spans and t.tail in ex.target_spans]
            if not scoreable:
                continue
            pooled = {e: states[b, s:t].mean(0) for e, (s, t) in ex.target_spans.items()}
            h = torch.stack([pooled[t.head] for t in scoreable])
            tl = torch.stack([pooled[t.tail] for t in scoreable])
            rel = torch.tensor([t.relation for t in scoreable])
            loss, _ = gr_loss(self.relation_classifier(h, tl), rel, normalize)
            per.append(loss)
        if not per:
            return states.new_zeros(())
        return torch.stack(per).mean()

    # -------------------------------------------------------------- decoding
    @torch.no_grad()
    def next_token_logprobs(self, prefixes: torch.Tensor, batch: EncodedBatch) -> torch.Tensor:
        """Log-probabilities of the next token for every prefix (all sharing one encoded graph)."""
        K = prefixes.shape[0]
        memory = batch.memory.expand(K, -1, -1)
        pad = batch.memory_pad.expand(K, -1)
        src = batch.source_ids.expand(K, -1)
        logits, trace = self.seq_model.decode(prefixes, memory, pad)
        probs, _ = self.output_distribution(logits[:, -1:], _last(trace), prefixes[:, -1:], src)
        logp = torch.log(probs[:, -1].clamp_min(1e-30))
        logp[:, self._banned] = float("-inf")
        # renormalize over the tokens that may actually be emitted
        return logp - torch.logsumexp(logp, dim=-1, keepdim=True)


def _last(trace: DecoderTrace) -> DecoderTrace:
    return DecoderTrace(trace.states[:, -1:], trace.attention[:, -1:])


def _encodable(vocab: SubwordVocab, label: str) -> bool:
    return all(ch in vocab.alphabet for ch in label.replace("_", " ") if ch != " ")
