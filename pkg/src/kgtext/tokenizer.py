"""Word-internal byte-pair-encoding subword vocabulary.

Words are split into characters with the final character carrying an
end-of-word marker (``"n</w>"``), so a word always maps to a contiguous run of
subword ids and decoding can restore single-space word boundaries.
"""
from __future__ import annotations

import json
import os
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .kg_core import MASK_TOKEN

EOW = "</w>"
PAD, BOS, EOS, MASK, SEP = "[PAD]", "[BOS]", "[EOS]", MASK_TOKEN, "[SEP]"
SPECIALS = (PAD, BOS, EOS, MASK, SEP)


class TokenizerError(ValueError):
    pass


def _word_symbols(word: str) -> list[str]:
    return list(word[:-1]) + [word[-1] + EOW]


@dataclass
class SubwordVocab:
    merges: list[tuple[str, str]]
    tokens: list[str]
    alphabet: str
    specials: tuple[str, ...] = SPECIALS
    _index: dict[str, int] = field(init=False, repr=False)
    _ranks: dict[tuple[str, str], int] = field(init=False, repr=False)
    _cache: dict[str, tuple[int, ...]] = field(init=False, repr=False)

    def __post_init__(self):
        self._index = {}
        for i, tok in enumerate(self.tokens):
            if tok in self._index:
                raise TokenizerError(f"duplicate token {tok!r}")
            self._index[tok] = i
        self._ranks = {pair: i for i, pair in enumerate(self.merges)}
        self._cache = {}

    def __len__(self) -> int:
        return len(self.tokens)

    @property
    def pad_id(self) -> int:
        return self._index[PAD]

    @property
    def bos_id(self) -> int:
        return self._index[BOS]

    @property
    def eos_id(self) -> int:
        return self._index[EOS]

    @property
    def mask_id(self) -> int:
        return self._index[MASK]

    @property
    def sep_id(self) -> int:
        return self._index[SEP]

    @property
    def special_ids(self) -> frozenset[int]:
        return frozenset(self._index[s] for s in self.specials)

    @property
    def base_size(self) -> int:
        """Specials plus the two symbol forms of every alphabet character."""
        return len(self.specials) + 2 * len(self.alphabet)

    def token_id(self, token: str) -> int:
        return self._index[token]

    def encode_word(self, word: str) -> tuple[int, ...]:
        if word in self.specials:
            return (self._index[word],)
        cached = self._cache.get(word)
        if cached is not None:
            return cached
        for ch in word:
            if ch not in self._index:
                raise TokenizerError(f"character {ch!r} is outside the vocabulary alphabet")
        symbols = _word_symbols(word)
        while len(symbols) > 1:
            best = None
            best_rank = len(self._ranks)
            for pair in zip(symbols, symbols[1:]):
                rank = self._ranks.get(pair)
                if rank is not None and rank < best_rank:
                    best, best_rank = pair, rank
            if best is None:
                break
            merged: list[str] = []
            i = 0
            while i < len(symbols):
                if i + 1 < len(symbols) and (symbols[i], symbols[i + 1]) == best:
                    merged.append(symbols[i] + symbols[i + 1])
                    i += 2
                else:
                    merged.append(symbols[i])
                    i += 1
            symbols = merged
        ids = tuple(self._index[s] for s in symbols)
        self._cache[word] = ids
        return ids

    def encode_words(self, words: Sequence[str]) -> tuple[list[int], list[tuple[int, int]]]:
        """Encode pre-split words; also return each word's ``[start, end)`` subword range."""
        ids: list[int] = []
        offsets = []
        for w in words:
            piece = self.encode_word(w)
            offsets.append((len(ids), len(ids) + len(piece)))
            ids.extend(piece)
        return ids, offsets

    def encode(self, text: str) -> list[int]:
        return self.encode_words(text.split())[0]

    def decode(self, ids: Iterable[int]) -> str:
        specials = self.special_ids
        parts = []
        for i in ids:
            i = int(i)
            if not 0 <= i < len(self.tokens):
                raise TokenizerError(f"invalid token id {i}")
            if i in specials:
                continue
            parts.append(self.tokens[i])
        return "".join(parts).replace(EOW, " ").strip()

    def to_dict(self) -> dict:
        return {
            "alphabet": self.alphabet,
            "merges": [list(m) for m in self.merges],
            "specials": list(self.specials),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SubwordVocab":
        specials = tuple(data["specials"])
        merges = [tuple(m) for m in data["merges"]]
        return cls(merges, _build_tokens(data["alphabet"], merges, specials), data["alphabet"], specials)

    def save(self, path: str | os.PathLike) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, ensure_ascii=False, indent=1)

    @classmethod
    def load(cls, path: str | os.PathLike) -> "SubwordVocab":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def _build_tokens(alphabet: str, merges: Sequence[tuple[str, str]],
                  specials: Sequence[str]) -> list[str]:
    tokens = list(specials)
    for ch in alphabet:
        tokens.append(ch)
    for ch in alphabet:
        tokens.append(ch + EOW)
    seen = set(tokens)
    for a, b in merges:
        if a + b not in seen:
            seen.add(a + b)
            tokens.append(a + b)
    return tokens


def train_bpe(corpus: Sequence[str], target_size: int, alphabet: str = "") -> SubwordVocab:
    """Learn merges until the vocabulary (specials included) reaches ``target_size``.

    The most frequent adjacent pair is merged first; frequency ties go to the
    lexicographically smallest pair. Characters in ``alphabet`` get base ids
    even when the corpus never uses them.
    """
    if not corpus:
        raise TokenizerError("cannot train BPE on an empty corpus")
    word_freq: Counter[str] = Counter()
    for text in corpus:
        for w in text.split():
            if w not in SPECIALS:
                word_freq[w] += 1
    if not word_freq:
        raise TokenizerError("corpus contains no words")
    alphabet = "".join(sorted({ch for w in word_freq for ch in w} | set(alphabet) - set(" \t\n")))
    base = len(SPECIALS) + 2 * len(alphabet)
    if target_size < base:
        raise TokenizerError(f"target_size {target_size} is below the base vocabulary size {base}")

    words = [(_word_symbols(w), f) for w, f in sorted(word_freq.items())]
    merges: list[tuple[str, str]] = []
    vocab = set(_build_tokens(alphabet, (), SPECIALS))
    while len(vocab) < target_size:
        pairs: Counter[tuple[str, str]] = Counter()
        for symbols, f in words:
            for pair in zip(symbols, symbols[1:]):
                pairs[pair] += f
        if not pairs:
            break
        top = max(pairs.values())
        best = min(p for p, c in pairs.items() if c == top)
        merges.append(best)
        vocab.add(best[0] + best[1])
        new_words = []
        for symbols, f in words:
            if len(symbols) > 1:
                out = []
                i = 0
                while i < len(symbols):
                    if i + 1 < len(symbols) and symbols[i] == best[0] and symbols[i + 1] == best[1]:
                        out.append(best[0] + best[1])
                        i += 2
                    else:
                        out.append(symbols[i])
                        i += 1
                symbols = out
            new_words.append((symbols, f))
        words = new_words
    return SubwordVocab(merges, _build_tokens(alphabet, merges, SPECIALS), alphabet)


def encode(text: str, vocab: SubwordVocab) -> list[int]:
    return vocab.encode(text)


def decode(ids: Iterable[int], vocab: SubwordVocab) -> str:
    return vocab.decode(ids)
