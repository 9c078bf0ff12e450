import math
from collections import Counter

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kgtext.metrics import (EvalReport, bleu, chrf_pp, cider, cider_instance_scores, evaluate, lcs_length, rouge_l,
                            rouge_l_single, sentence_bleu)

from oracles import bleu_by_hand

TOL = 1e-9
texts = st.lists(st.sampled_from("the a cat dog sat ran on mat".split()), min_size=1, max_size=9).map(" ".join)


@pytest.mark.parametrize("s", ["the cat sat on the mat .", "a", "x y z w v u"])
def test_identities(s):
    assert abs(bleu([s], [s]) - 1.0) < TOL or len(s.split()) < 4
    assert abs(rouge_l([s], [s]) - 1.0) < TOL
    assert abs(chrf_pp([s], [s]) - 100.0) < TOL
    assert abs(cider([s], [s]) - 10.0) < TOL


def test_bleu_brevity_toy():
    assert abs(bleu(["the cat sat"], ["the cat sat down"], n=3) - math.exp(-1 / 3)) < TOL
    assert bleu(["the cat sat"], ["the cat sat down"], n=4) == 0.0


def test_bleu_clipping():
    # "the" appears 7 times but only twice in the reference: p1 = 2/7
    assert abs(bleu(["the the the the the the the"], ["the cat is on the mat"], n=1) - 2 / 7) < TOL


def test_bleu_zero_order_gives_zero_without_smoothing():
    assert bleu(["a b c d"], ["a c b d"]) == 0.0
    assert sentence_bleu("a b c d", "a c b d") > 0.0


def test_bleu_is_corpus_level():
    c = ["the cat sat on the mat", "a dog ran"]
    r = ["the cat sat on a mat", "a dog ran fast"]
    assert bleu(c, r) != pytest.approx((sentence_bleu(c[0], r[0], smooth=False) + 0) / 2)


def test_length_mismatch_rejected():
    with pytest.raises(ValueError):
        bleu(["a"], ["a", "b"])
    with pytest.raises(ValueError):
        rouge_l([], [])


def test_rouge_l_toy():
    assert abs(rouge_l_single("a b c d", "a c d e") - 0.75) < TOL
    # P = 2/2, R = 2/4, beta = 1.2
    p, r, b2 = 1.0, 0.5, 1.44
    assert abs(rouge_l_single("a b", "a x b y") - (1 + b2) * p * r / (r + b2 * p)) < TOL
    assert rouge_l_single("a", "b") == 0.0


def test_lcs():
    assert lcs_length("ABCBDAB", "BDCABA") == 4
    assert lcs_length([], [1]) == 0


def test_chrf_toy():
    # effective orders: char-1 (P=R=1/2), char-2 (0), word-1 (0)
    assert abs(chrf_pp(["ab"], ["ac"]) - 100 / 6) < TOL


def test_chrf_ignores_whitespace_for_characters():
    a = chrf_pp(["ab cd"], ["abcd"])
    assert 0 < a < 100


def cider_brute(cands, refs, n=4):
    N = len(refs)
    out = []
    for c, r in zip(cands, refs):
        total = 0.0
        for k in range(1, n + 1):
            def grams(s):
                w = s.lower().split()
                return Counter(tuple(w[i:i + k]) for i in range(len(w) - k + 1))

            def idf(g):
                df = sum(1 for rr in refs if g in grams(rr))
                return math.log((1 + N) / (1 + df)) + 1
            gc, gr = grams(c), grams(r)
            if not gc and not gr:
                total += 1
                continue
            vocab = set(gc) | set(gr)
            vc = [gc[g] * idf(g) for g in vocab]
            vr = [gr[g] * idf(g) for g in vocab]
            den = math.sqrt(sum(x * x for x in vc)) * math.sqrt(sum(x * x for x in vr))
            total += sum(x * y for x, y in zip(vc, vr)) / den if den else 0.0
        out.append(10 * total / n)
    return out


def test_cider_matches_brute_force():
    c = ["the cat sat on the mat", "a dog ran", "the dog sat"]
    r = ["the cat is on the mat", "a dog ran fast", "a cat sat"]
    for got, want in zip(cider_instance_scores(c, r), cider_brute(c, r)):
        assert abs(got - want) < TOL


@settings(max_examples=60, deadline=None)
@given(texts, texts)
def test_bleu_matches_hand_computation(c, r):
    for n in (1, 2, 3, 4):
        assert abs(bleu([c], [r], n=n) - bleu_by_hand(c, r, n)) < TOL


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(texts, texts), min_size=1, max_size=5))
def test_metric_ranges(pairs):
    c, r = [p[0] for p in pairs], [p[1] for p in pairs]
    assert 0 <= bleu(c, r) <= 1 + TOL
    assert 0 <= rouge_l(c, r) <= 1 + TOL
    assert 0 <= chrf_pp(c, r) <= 100 + TOL
    assert 0 <= cider(c, r) <= 10 + TOL
    for got, want in zip(cider_instance_scores(c, r), cider_brute(c, r)):
        assert abs(got - want) < TOL


def test_evaluate_report():
    rep = evaluate(["a b c d"], ["a b c d"])
    assert isinstance(rep, EvalReport)
    assert rep.bleu_4 == pytest.approx(1.0) and rep.to_dict(percent_bleu=True)["bleu_4"] == pytest.approx(100.0)
    assert rep.per_instance[0]["rouge_l"] == pytest.approx(1.0)
