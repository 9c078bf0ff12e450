"""Corpus metrics: BLEU, ROUGE-L, CIDEr and chrF++.

Every metric tokenizes by lowercasing and splitting on whitespace, identically
for candidates and references. One reference per candidate.
"""
from __future__ import annotations

import math
from collections import Counter
from dataclasses import asdict, dataclass, field
from typing import Sequence


def tokenize(text: str) -> list[str]:
    return text.lower().split()


def ngrams(tokens: Sequence, n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def _check(candidates: Sequence[str], references: Sequence[str]):
    if len(candidates) != len(references):
        raise ValueError(f"{len(candidates)} candidates for {len(references)} references")
    if not candidates:
        raise ValueError("empty corpus")


def bleu_stats(candidate: str, reference: str, n: int = 4) -> list[int]:
    """``[cand_len, ref_len, match_1, total_1, ..., match_n, total_n]``."""
    c, r = tokenize(candidate), tokenize(reference)
    stats = [len(c), len(r)]
    for k in range(1, n + 1):
        cg, rg = ngrams(c, k), ngrams(r, k)
        stats.append(sum(min(cnt, rg[g]) for g, cnt in cg.items()))
        stats.append(max(len(c) - k + 1, 0))
    return stats


def _bleu_from_stats(stats: Sequence[int], n: int, smooth: bool) -> float:
    c, r = stats[0], stats[1]
    if c == 0:
        return 0.0
    log_p = 0.0
    for k in range(n):
        match, total = stats[2 + 2 * k], stats[3 + 2 * k]
        if smooth and k > 0:
            match, total = match + 1, total + 1
        if match == 0 or total == 0:
            return 0.0
        log_p += math.log(match / total) / n
    bp = 1.0 if c > r else math.exp(1 - r / c)
    return bp * math.exp(log_p)


def bleu(candidates: Sequence[str], references: Sequence[str], n: int = 4, smooth: bool = False) -> float:
    """Corpus BLEU in [0, 1] with clipped counts, uniform weights and brevity penalty.

    ``smooth`` adds one to matches and totals of orders above 1.
    """
    _check(candidates, references)
    totals = [0] * (2 + 2 * n)
    for cand, ref in zip(candidates, references):
        for i, v in enumerate(bleu_stats(cand, ref, n)):
            totals[i] += v
    return _bleu_from_stats(totals, n, smooth)


def sentence_bleu(candidate: str, reference: str, n: int = 4, smooth: bool = True) -> float:
    return _bleu_from_stats(bleu_stats(candidate, reference, n), n, smooth)


def lcs_length(a: Sequence, b: Sequence) -> int:
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b):
            cur.append(prev[j] + 1 if x == y else max(prev[j + 1], cur[j]))
        prev = cur
    return prev[-1]


def rouge_l_single(candidate: str, reference: str, beta: float = 1.2) -> float:
    c, r = tokenize(candidate), tokenize(reference)
    if not c and not r:
        return 1.0
    lcs = lcs_length(c, r)
    if lcs == 0:
        return 0.0
    p, rec = lcs / len(c), lcs / len(r)
    return (1 + beta ** 2) * p * rec / (rec + beta ** 2 * p)


def rouge_l(candidates: Sequence[str], references: Sequence[str], beta: float = 1.2) -> float:
    _check(candidates, references)
    return sum(rouge_l_single(c, r, beta) for c, r in zip(candidates, references)) / len(candidates)


def cider_instance_scores(candidates: Sequence[str], references: Sequence[str], n: int = 4) -> list[float]:
    """Per-instance CIDEr: mean over orders of TF-IDF cosine similarity, times 10.

    Document frequencies come from the references. IDF is smoothed,
    ``ln((1 + N) / (1 + df)) + 1``, so it stays positive on tiny corpora. An
    order at which both texts have no n-grams counts as a perfect match.
    """
    _check(candidates, references)
    N = len(references)
    cand_toks = [tokenize(c) for c in candidates]
    ref_toks = [tokenize(r) for r in references]
    df: list[Counter] = []
    for k in range(1, n + 1):
        d: Counter = Counter()
        for r in ref_toks:
            d.update(set(ngrams(r, k)))
        df.append(d)

    def vec(tokens, k):
        tf = ngrams(tokens, k)
        return {g: cnt * (math.log((1 + N) / (1 + df[k - 1][g])) + 1.0) for g, cnt in tf.items()}

    scores = []
    for c, r in zip(cand_toks, ref_toks):
        total = 0.0
        for k in range(1, n + 1):
            vc, vr = vec(c, k), vec(r, k)
            if not vc and not vr:
                total += 1.0
                continue
            if not vc or not vr:
                continue
            dot = sum(w * vr.get(g, 0.0) for g, w in vc.items())
            norm = math.sqrt(sum(w * w for w in vc.values())) * math.sqrt(sum(w * w for w in vr.values()))
            total += dot / norm
        scores.append(10.0 * total / n)
    return scores


def cider(candidates: Sequence[str], references: Sequence[str], n: int = 4) -> float:
    scores = cider_instance_scores(candidates, references, n)
    return sum(scores) / len(scores)


def chrf_stats(candidate: str, reference: str, char_order: int = 6, word_order: int = 2) -> list[int]:
    """Per order ``[hyp_count, ref_count, matches]``: character orders first, then word orders."""
    c_words, r_words = tokenize(candidate), tokenize(reference)
    c_chars, r_chars = "".join(c_words), "".join(r_words)
    stats = []
    for k in range(1, char_order + 1):
        cg, rg = ngrams(c_chars, k), ngrams(r_chars, k)
        stats += [sum(cg.values()), sum(rg.values()), sum((cg & rg).values())]
    for k in range(1, word_order + 1):
        cg, rg = ngrams(c_words, k), ngrams(r_words, k)
        stats += [sum(cg.values()), sum(rg.values()), sum((cg & rg).values())]
    return stats


def _chrf_from_stats(stats: Sequence[int], beta: float) -> float:
    precs, recs = [], []
    for i in range(0, len(stats), 3):
        hyp, ref, match = stats[i:i + 3]
        if hyp > 0 and ref > 0:
            precs.append(match / hyp)
            recs.append(match / ref)
    if not precs:
        return 0.0
    p, r = sum(precs) / len(precs), sum(recs) / len(recs)
    if p + r == 0:
        return 0.0
    b2 = beta ** 2
    return 100.0 * (1 + b2) * p * r / (b2 * p + r)


def chrf_pp(candidates: Sequence[str], references: Sequence[str], beta: float = 2.0,
            char_order: int = 6, word_order: int = 2) -> float:
    """Corpus chrF++ in [0, 100]: n-gram statistics are summed over the corpus first."""
    _check(candidates, references)
    totals = None
    for c, r in zip(candidates, references):
        s = chrf_stats(c, r, char_order, word_order)
        totals = s if totals is None else [a + b for a, b in zip(totals, s)]
    return _chrf_from_stats(totals, beta)


@dataclass
class EvalReport:
    bleu_4: float
    rouge_l: float
    cider: float
    chrf_pp: float
    per_instance: list[dict] = field(default_factory=list)

    def to_dict(self, percent_bleu: bool = False) -> dict:
        d = asdict(self)
        if percent_bleu:
            d["bleu_4"] = 100.0 * d["bleu_4"]
        return d


def evaluate(candidates: Sequence[str], references: Sequence[str], smooth_bleu: bool = False) -> EvalReport:
    _check(candidates, references)
    ciders = cider_instance_scores(candidates, references)
    per = []
    for i, (c, r) in enumerate(zip(candidates, references)):
        per.append({
            "index": i,
            "bleu_4": sentence_bleu(c, r),
            "rouge_l": rouge_l_single(c, r),
            "cider": ciders[i],
            "chrf_pp": chrf_pp([c], [r]),
        })
    return EvalReport(bleu(candidates, references, smooth=smooth_bleu), rouge_l(candidates, references),
                      sum(ciders) / len(ciders), chrf_pp(candidates, references), per)
