"""Sub-word tokenization for the token encoders.

Two interchangeable schemes:

* :class:`SubwordTokenizer` -- a piece inventory learned from corpus word
  frequencies by iterative pair merging, applied at encode time with greedy
  longest-match from the left.  Lowercases its input.
* :class:`IdentityTokenizer` -- one id per distinct (lowercased) word of the
  fitting corpus; out-of-vocabulary words map to the unknown id.

Both expose ``encode_words(words) -> (ids, word_spans)`` where
``word_spans[i]`` is the inclusive sub-token range covering word ``i``, so
word-level mention spans can be resolved against sub-token sequences.
"""

from __future__ import annotations

from collections import Counter
from typing import Iterable, Sequence

from .errors import ArgumentError, ValidationError

PAD = "<pad>"
UNK = "<unk>"


def _merge_pairs(word_freq: dict[tuple[str, ...], int], target_size: int, base: set[str]):
    """Learn merged pieces by repeatedly joining the most frequent adjacent
    pair.  Ties break lexicographically so training is deterministic."""
    pieces = set(base)
    words = dict(word_freq)
    while len(pieces) < target_size:
        counts: Counter[tuple[str, str]] = Counter()
        for symbols, freq in words.items():
            for a, b in zip(symbols, symbols[1:]):
                counts[(a, b)] += freq
        if not counts:
            break
        best = min(counts, key=lambda p: (-counts[p], p))
        if counts[best] < 2:
            break
        merged = best[0] + best[1]
        pieces.add(merged)
        rewritten = {}
        for symbols, freq in words.items():
            out = []
            i = 0
            while i < len(symbols):
                if i + 1 < len(symbols) and (symbols[i], symbols[i + 1]) == best:
                    out.append(merged)
                    i += 2
                else:
                    out.append(symbols[i])
                    i += 1
            key = tuple(out)
            rewritten[key] = rewritten.get(key, 0) + freq
        words = rewritten
    return pieces


class SubwordTokenizer:
    """Greedy longest-match encoder over a learned piece inventory."""

    kind = "subword"

    def __init__(self, pieces: Sequence[str]):
        if pieces[:2] != [PAD, UNK] and tuple(pieces[:2]) != (PAD, UNK):
            raise ValidationError("piece table must start with the pad and unk symbols")
        self.pieces = tuple(pieces)
        self.piece_to_id = {p: i for i, p in enumerate(self.pieces)}
        if len(self.piece_to_id) != len(self.pieces):
            raise ValidationError("piece table contains duplicates")
        self._max_piece = max(len(p) for p in self.pieces)

    @classmethod
    def train(cls, words: Iterable[str], vocab_size: int = 512) -> "SubwordTokenizer":
        if vocab_size < 8:
            raise ArgumentError("vocab_size too small to be useful")
        freq = Counter(w.lower() for w in words)
        if not freq:
            raise ArgumentError("cannot train a tokenizer on an empty word stream")
        chars = sorted({c for w in freq for c in w})
        word_freq = {tuple(w): n for w, n in freq.items()}
        budget = vocab_size - 2  # pad, unk
        pieces = _merge_pairs(word_freq, budget, set(chars))
        ordered = [PAD, UNK] + sorted(pieces, key=lambda p: (len(p), p))
        return cls(ordered[: vocab_size])

    def __len__(self) -> int:
        return len(self.pieces)

    @property
    def pad_id(self) -> int:
        return 0

    @property
    def unk_id(self) -> int:
        return 1

    def encode_word(self, word: str) -> list[int]:
        word = word.lower()
        ids = []
        i = 0
        while i < len(word):
            match = None
            stop = min(len(word), i + self._max_piece)
            for j in range(stop, i, -1):
                piece_id = self.piece_to_id.get(word[i:j])
                if piece_id is not None:
                    match = (piece_id, j)
                    break
            if match is None:
                ids.append(self.unk_id)
                i += 1
            else:
                ids.append(match[0])
                i = match[1]
        return ids

    def encode_words(self, words: Sequence[str]):
        if not words:
            raise ArgumentError("cannot encode an empty word sequence")
        ids: list[int] = []
        spans: list[tuple[int, int]] = []
        for word in words:
            sub = self.encode_word(word)
            spans.append((len(ids), len(ids) + len(sub) - 1))
            ids.extend(sub)
        return ids, spans

    def to_dict(self) -> dict:
        return {"kind": self.kind, "pieces": list(self.pieces)}


class IdentityTokenizer:
    """One sub-token per word; the table is the fitting corpus vocabulary."""

    kind = "identity"

    def __init__(self, words: Sequence[str]):
        if tuple(words[:2]) != (PAD, UNK):
            raise ValidationError("word table must start with the pad and unk symbols")
        self.pieces = tuple(words)
        self.piece_to_id = {w: i for i, w in enumerate(self.pieces)}
        if len(self.piece_to_id) != len(self.pieces):
            raise ValidationError("word table contains duplicates")

    @classmethod
    def train(cls, words: Iterable[str], vocab_size: int | None = None) -> "IdentityTokenizer":
        vocab = sorted({w.lower() for w in words})
        if not vocab:
            raise ArgumentError("cannot build a word table from an empty word stream")
        if vocab_size is not None and len(vocab) + 2 > vocab_size:
            vocab = vocab[: vocab_size - 2]
        return cls([PAD, UNK] + vocab)

    def __len__(self) -> int:
        return len(self.pieces)

    @property
    def pad_id(self) -> int:
        return 0

    @property
    def unk_id(self) -> int:
        return 1

    def encode_word(self, word: str) -> list[int]:
        return [self.piece_to_id.get(word.lower(), self.unk_id)]

    def encode_words(self, words: Sequence[str]):
        if not words:
            raise ArgumentError("cannot encode an empty word sequence")
        ids = []
        spans = []
        for i, word in enumerate(words):
            ids.extend(self.encode_word(word))
            spans.append((i, i))
        return ids, spans

    def to_dict(self) -> dict:
        return {"kind": self.kind, "pieces": list(self.pieces)}


def tokenizer_from_dict(payload: dict):
    kind = payload.get("kind")
    if kind == "subword":
        return SubwordTokenizer(payload["pieces"])
    if kind == "identity":
        return IdentityTokenizer(payload["pieces"])
    raise ValidationError(f"unknown tokenizer kind {kind!r}")


def build_tokenizer(scheme: str, words: Iterable[str], vocab_size: int):
    if scheme == "subword":
        return SubwordTokenizer.train(words, vocab_size)
    if scheme == "identity":
        return IdentityTokenizer.train(words, vocab_size)
    raise ArgumentError(f"unknown tokenizer scheme {scheme!r}")
