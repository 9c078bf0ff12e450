"""Greedy and beam-search generation with the copy-mixed output distribution."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import torch

from .kg_core import KnowledgeGraph

DEFAULT_BEAM_SIZE = 8
DEFAULT_MAX_LEN = 64
DEFAULT_LENGTH_PENALTY = 0.7

StepFn = Callable[[torch.Tensor], torch.Tensor]


@dataclass(frozen=True)
class BeamHypothesis:
    tokens: tuple[int, ...]
    logprob: float = 0.0
    finished: bool = False

    def score(self, length_penalty: float = DEFAULT_LENGTH_PENALTY) -> float:
        n = max(len(self.tokens), 1)
        return self.logprob / n ** length_penalty


@dataclass
class Generation:
    ids: list[int]
    text: str
    score: float


def beam_step(hypotheses: Sequence[BeamHypothesis], logprobs: torch.Tensor, beam_size: int,
              eos_id: int | None = None) -> list[BeamHypothesis]:
    """Extend live hypotheses and keep the global top ``beam_size``.

    ``logprobs`` has one row per *live* hypothesis, in order. Each live
    hypothesis contributes its best ``beam_size`` tokens (ties -> lower id);
    finished hypotheses compete unchanged. Ranking is by cumulative
    log-probability, ties broken by token id.
    """
    live = [h for h in hypotheses if not h.finished]
    if logprobs.shape[0] != len(live):
        raise ValueError(f"{logprobs.shape[0]} rows of log-probabilities for {len(live)} live hypotheses")
    cands: list[tuple[float, int, int, BeamHypothesis]] = []
    order = 0
    for h in hypotheses:
        if h.finished:
            cands.append((-h.logprob, h.tokens[-1] if h.tokens else -1, order, h))
            order += 1
    rows = logprobs.tolist()
    for h, row in zip(live, rows):
        ranked = sorted(range(len(row)), key=lambda t: (-row[t], t))[:beam_size]
        for tok in ranked:
            if row[tok] == float("-inf"):
                continue
            lp = h.logprob + row[tok]
            done = eos_id is not None and tok == eos_id
            cands.append((-lp, tok, order, BeamHypothesis(h.tokens + (tok,), lp, done)))
            order += 1
    cands.sort(key=lambda c: c[:3])
    return [c[3] for c in cands[:beam_size]]


def greedy_search(step: StepFn, bos_id: int, eos_id: int, max_len: int = DEFAULT_MAX_LEN) -> BeamHypothesis:
    tokens: list[int] = []
    logprob = 0.0
    for _ in range(max_len):
        prefix = torch.tensor([[bos_id] + tokens])
        row = step(prefix)[0]
        tok = int(torch.argmax(row))
        logprob += float(row[tok])
        tokens.append(tok)
        if tok == eos_id:
            return BeamHypothesis(tuple(tokens), logprob, True)
    return BeamHypothesis(tuple(tokens), logprob, False)


def beam_search(step: StepFn, bos_id: int, eos_id: int, beam_size: int = DEFAULT_BEAM_SIZE,
                max_len: int = DEFAULT_MAX_LEN,
                length_penalty: float = DEFAULT_LENGTH_PENALTY) -> BeamHypothesis:
    if beam_size < 1:
        raise ValueError("beam_size must be >= 1")
    beam = [BeamHypothesis(())]
    for _ in range(max_len):
        live = [h for h in beam if not h.finished]
        if not live:
            break
        prefixes = torch.tensor([[bos_id, *h.tokens] for h in live])
        beam = beam_step(beam, step(prefixes), beam_size, eos_id)
    finished = [h for h in beam if h.finished]
    pool = finished or beam
    return max(pool, key=lambda h: (h.score(length_penalty), [-t for t in h.tokens]))


def generate(model, graph: KnowledgeGraph, strategy: str = "beam", beam_size: int | None = None,
             max_len: int = DEFAULT_MAX_LEN, length_penalty: float = DEFAULT_LENGTH_PENALTY) -> Generation:
    """Encode, linearize and decode one graph with a trained :class:`KG2TextModel`."""
    if strategy not in ("beam", "greedy"):
        raise ValueError(f"unknown decoding strategy {strategy!r}")
    beam_size = DEFAULT_BEAM_SIZE if beam_size is None else beam_size
    if beam_size < 1:
        raise ValueError("beam_size must be >= 1")
    was_training = model.training
    model.eval()
    try:
        with torch.no_grad():
            example = model.prepare_graph(graph)
            batch = model.encode_graphs([example])
            vocab = model.vocab

            def step(prefixes):
                return model.next_token_logprobs(prefixes, batch)

            if strategy == "greedy":
                hyp = greedy_search(step, vocab.bos_id, vocab.eos_id, max_len)
            else:
                hyp = beam_search(step, vocab.bos_id, vocab.eos_id, beam_size, max_len, length_penalty)
    finally:
        model.train(was_training)
    ids = [t for t in hyp.tokens if t != model.vocab.eos_id]
    return Generation(ids, model.vocab.decode(ids), hyp.score(length_penalty))
