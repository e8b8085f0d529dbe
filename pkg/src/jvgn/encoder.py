"""Phrase encoder: mean-pooled word embeddings followed by a trainable affine map.

The pooling is order-free, so ``encode_phrase`` is permutation invariant in
its tokens.
"""
from __future__ import annotations

import json
from pathlib import Path
from typing import Sequence

import numpy as np

from . import autodiff as ad

UNK = "<unk>"


class Vocabulary:
    """Dense token index with 0 reserved for unknown tokens."""

    def __init__(self, tokens: Sequence[str]):
        self.tokens = [UNK]
        self.index = {UNK: 0}
        for t in tokens:
            if t == UNK or t in self.index:
                continue
            self.index[t] = len(self.tokens)
            self.tokens.append(t)

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: str) -> bool:
        return token in self.index

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocabulary) and self.tokens == other.tokens

    def lookup(self, token: str) -> int:
        return self.index.get(token, 0)

    def to_dict(self) -> dict:
        return {"tokens": self.tokens[1:]}

    @classmethod
    def from_dict(cls, doc: dict) -> "Vocabulary":
        return cls(doc["tokens"])

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path: str | Path) -> "Vocabulary":
        return cls.from_dict(json.loads(Path(path).read_text()))


def pooling_matrix(spans: Sequence[Sequence[str]], vocab: Vocabulary) -> np.ndarray:
    """(P, V) matrix whose row p averages the embedding rows of span p."""
    out = np.zeros((len(spans), len(vocab)))
    for p, tokens in enumerate(spans):
        if len(tokens) == 0:
            raise ValueError("cannot encode an empty token span")
        for t in tokens:
            out[p, vocab.lookup(t)] += 1.0 / len(tokens)
    return out


def encode_phrases(spans: Sequence[Sequence[str]], params) -> ad.Tensor:
    """(P, D_w) encodings of several token spans in one pass."""
    pooled = ad.matmul(pooling_matrix(spans, params.vocab), params["embedding"])
    return ad.add(ad.matmul(pooled, params["enc_w"]), params["enc_b"])


def encode_phrase(tokens: Sequence[str], params) -> ad.Tensor:
    """``mean(embedding[tokens]) @ enc_w + enc_b``.

    ``params`` is a ModelParams or a Weights view; with a Weights view that
    requires grad the result is differentiable in the embedding table and the
    affine map.
    """
    return ad.reshape(encode_phrases([tokens], params), (-1,))


def load_pretrained_embeddings(path: str | Path, params) -> int:
    """Overwrite embedding rows from a ``token v1 ... vD`` text file.

    Updates ``params["embedding"]`` in place and returns the number of rows
    written. Tokens missing from the vocabulary are skipped.
    """
    table = params["embedding"]
    d = table.shape[1]
    count = 0
    seen = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) - 1 != d:
                raise ValueError(f"{path}:{lineno}: vector has {len(parts) - 1} dims, expected {d}")
            token = parts[0]
            if token not in params.vocab:
                continue
            table[params.vocab.lookup(token)] = np.array(parts[1:], dtype=np.float64)
            if token not in seen:
                seen.add(token)
                count += 1
    return count
