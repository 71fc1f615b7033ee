"""Pre-trained word vectors: loading, cosine similarity, stem-tolerant lookup.

The store is read from the de-facto text format (header ``V D`` followed
by ``token v1 .. vD`` rows).  A stem index built over the vocabulary lets
description words match embedding tokens despite differing endings.
"""

from __future__ import annotations

from typing import Callable, Optional

import numpy as np

from .errors import FormatError
from .stemmer import stem as porter2_stem


class EmbeddingStore:
    """Immutable token -> vector table of fixed dimension."""

    def __init__(self, dim: int, table: dict[str, np.ndarray]):
        self.dim = dim
        self._table = table

    def __len__(self) -> int:
        return len(self._table)

    def __contains__(self, token: str) -> bool:
        return token in self._table

    def tokens(self) -> list[str]:
        return list(self._table)

    def get(self, token: str) -> Optional[np.ndarray]:
        return self._table.get(token)

    def vector(self, token: str) -> np.ndarray:
        try:
            return self._table[token]
        except KeyError:
            raise KeyError(f"token {token!r} not in embedding vocabulary")


def load_text_embeddings(path) -> EmbeddingStore:
    """Load an embedding store from the text format.

    Tokens are lowercased at load; duplicate tokens (after lowercasing),
    arity mismatches and all-zero vectors are load failures that name the
    offending line.
    """
    with open(path, encoding="utf-8") as fh:
        header = fh.readline()
        if not header:
            raise FormatError("empty file", path=path, line=1)
        parts = header.split()
        if len(parts) != 2:
            raise FormatError("header must be 'V D'", path=path, line=1)
        try:
            count, dim = int(parts[0]), int(parts[1])
        except ValueError:
            raise FormatError("non-integer header fields", path=path, line=1)
        if count < 0 or dim <= 0:
            raise FormatError(f"invalid header V={count} D={dim}",
                              path=path, line=1)

        table: dict[str, np.ndarray] = {}
        lineno = 1
        for line in fh:
            lineno += 1
            fields = line.split()
            if not fields:
                continue
            if len(fields) != dim + 1:
                raise FormatError(
                    f"expected {dim + 1} fields, got {len(fields)}",
                    path=path, line=lineno)
            token = fields[0].lower()
            try:
                values = np.array([float(x) for x in fields[1:]], dtype=np.float64)
            except ValueError:
                raise FormatError("non-numeric vector component",
                                  path=path, line=lineno)
            if token in table:
                raise FormatError(f"duplicate token {token!r}",
                                  path=path, line=lineno)
            if not np.any(values):
                raise FormatError(f"zero vector for token {token!r}",
                                  path=path, line=lineno)
            values.setflags(write=False)
            table[token] = values

    if len(table) != count:
        raise FormatError(
            f"header declares {count} tokens but file has {len(table)}",
            path=path, line=lineno)
    return EmbeddingStore(dim=dim, table=table)


def cosine_similarity(u: np.ndarray, v: np.ndarray) -> float:
    """Cosine of the angle between two vectors, clamped to [-1, 1]."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise ValueError(f"dimension mismatch: {u.shape} vs {v.shape}")
    nu = np.linalg.norm(u)
    nv = np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        raise ValueError("cosine similarity undefined for zero vector")
    return float(np.clip(np.dot(u, v) / (nu * nv), -1.0, 1.0))


def build_stem_index(store: EmbeddingStore,
                     stemmer: Callable[[str], str] = porter2_stem) -> dict[str, str]:
    """Map each vocabulary stem to one representative vocabulary token.

    Collisions resolve to the shortest token, then the lexicographically
    smallest, so the index is deterministic for a given store.
    """
    index: dict[str, str] = {}
    for token in store.tokens():
        s = stemmer(token)
        held = index.get(s)
        if held is None or (len(token), token) < (len(held), held):
            index[s] = token
    return index


def lookup_token(store: EmbeddingStore, index: dict[str, str], raw_token: str,
                 stemmer: Callable[[str], str] = porter2_stem) -> Optional[np.ndarray]:
    """Resolve a raw token to a vector: exact lowercase match, then stem match."""
    token = raw_token.lower()
    vec = store.get(token)
    if vec is not None:
        return vec
    rep = index.get(stemmer(token))
    if rep is not None:
        return store.get(rep)
    return None
