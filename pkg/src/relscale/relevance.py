"""Estimate each feature's relevance to an outcome keyword.

A feature's hierarchical description is tokenized, stop-filtered and
matched against the embedding vocabulary; the per-word similarities to
the keyword (rescaled from [-1, 1] to [0, 1]) are combined with a power
mean, which leans toward the maximum while still using every word.
"""

from __future__ import annotations

import csv
import hashlib
import math
import re
from dataclasses import dataclass, field
from importlib import resources
from typing import Iterable, Optional, Sequence

import numpy as np

from .codebook import Codebook, CodeSystem
from .embeddings import EmbeddingStore, build_stem_index, cosine_similarity, lookup_token
from .errors import ConfigError, DataError, FormatError

AGE_FEATURE = ("meta", "age")

# Words appended to any stop list because they carry no outcome signal in
# hierarchy descriptions.
AUGMENTATION_WORDS = frozenset({"system", "disease", "disorder", "condition"})

_TOKEN_SPLIT = re.compile(r"[^a-z]+")


def load_stoplist(path) -> frozenset[str]:
    """Load a one-word-per-line stop list, always unioned with the
    augmentation words."""
    words = set()
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            word = line.strip().lower()
            if word and not word.startswith("#"):
                words.add(word)
    return frozenset(words | AUGMENTATION_WORDS)


def default_stoplist() -> frozenset[str]:
    """The stop list shipped with the package."""
    text = resources.files("relscale").joinpath("data/stopwords.txt").read_text("utf-8")
    words = {w.strip().lower() for w in text.splitlines()
             if w.strip() and not w.strip().startswith("#")}
    return frozenset(words | AUGMENTATION_WORDS)


def stoplist_digest(stoplist: frozenset[str]) -> str:
    payload = "\n".join(sorted(stoplist)).encode("utf-8")
    return hashlib.sha256(payload).hexdigest()


def tokenize_and_filter(description: str, stoplist: frozenset[str]) -> list[str]:
    """Split on non-letter characters, lowercase, drop stop words.

    Order is preserved and duplicates are kept.
    """
    tokens = _TOKEN_SPLIT.split(description.lower())
    return [t for t in tokens if t and t not in stoplist]


def resolve_keyword(store: EmbeddingStore, index: dict[str, str],
                    keyword: str) -> np.ndarray:
    """Resolve the outcome keyword to a vector, or fail with guidance."""
    keyword = keyword.strip().lower()
    if not keyword:
        raise ConfigError("outcome keyword is empty")
    if _TOKEN_SPLIT.search(keyword):
        raise ConfigError(
            f"outcome keyword {keyword!r} must be a single word; summarize "
            "the outcome as one keyword (e.g. a disease name)")
    vec = lookup_token(store, index, keyword)
    if vec is None:
        raise ConfigError(
            f"outcome keyword {keyword!r} not found in the embedding "
            "vocabulary, even after stemming")
    return vec


def _scaled_similarity(vec: np.ndarray, keyword_vec: np.ndarray) -> float:
    return (cosine_similarity(vec, keyword_vec) + 1.0) / 2.0


def word_similarity(store: EmbeddingStore, index: dict[str, str],
                    token: str, keyword_token: str) -> Optional[float]:
    """Similarity of one description word to the keyword, in [0, 1].

    Returns None when the token cannot be resolved; an unresolvable
    keyword is a configuration error.
    """
    keyword_vec = resolve_keyword(store, index, keyword_token)
    vec = lookup_token(store, index, token)
    if vec is None:
        return None
    return _scaled_similarity(vec, keyword_vec)


def power_mean(values: Sequence[float], p: float) -> float:
    """Generalized mean ((1/m) * sum(s_i^p))^(1/p) over values in [0, 1].

    Computed against the max in log space so large exponents neither
    overflow nor flush everything to zero.  p = inf returns the maximum.
    """
    if len(values) == 0:
        raise ValueError("power mean of an empty sequence")
    arr = np.asarray(values, dtype=np.float64)
    if np.any(arr < 0.0) or np.any(arr > 1.0):
        raise ValueError("power mean inputs must lie in [0, 1]")
    if not p >= 1.0:
        raise ValueError(f"power mean exponent must be >= 1, got {p}")
    top = float(arr.max())
    if top == 0.0:
        return 0.0
    if math.isinf(p):
        return top
    if p == 1.0:
        return float(arr.mean())
    ratios = arr / top
    mean_pow = float(np.mean(ratios ** p))
    return top * math.exp(math.log(mean_pow) / p)


def similarity_vector(cb: Codebook, store: EmbeddingStore, index: dict[str, str],
                      stoplist: frozenset[str], system: CodeSystem, code: str,
                      keyword_vec: np.ndarray) -> list[float]:
    """Similarities of the resolvable filtered description words."""
    description = cb.hierarchical_description(system, code)
    sims = []
    for token in tokenize_and_filter(description, stoplist):
        vec = lookup_token(store, index, token)
        if vec is not None:
            sims.append(_scaled_similarity(vec, keyword_vec))
    return sims


def feature_relevance(cb: Codebook, store: EmbeddingStore, index: dict[str, str],
                      stoplist: frozenset[str], system: CodeSystem, code: str,
                      keyword: str, p: float = 10.0) -> float:
    """Relevance of one coded feature to the outcome keyword.

    Features whose descriptions resolve to no vocabulary word at all get
    the neutral score 0.5, which neither boosts nor suppresses them.
    """
    keyword_vec = resolve_keyword(store, index, keyword)
    sims = similarity_vector(cb, store, index, stoplist, system, code, keyword_vec)
    if not sims:
        return 0.5
    return power_mean(sims, p)


@dataclass
class RelevanceTable:
    """Feature id -> relevance in [0, 1], plus the parameters used."""

    scores: dict[tuple[str, str], float]
    m_tokens: dict[tuple[str, str], int]
    keyword: str
    p: float
    stoplist_digest: str = ""
    age_relevance: float = field(default=1.0)

    def get(self, feature_id: tuple[str, str]) -> float:
        try:
            return self.scores[feature_id]
        except KeyError:
            raise DataError(f"no relevance entry for feature {feature_id}")

    def __len__(self) -> int:
        return len(self.scores)


def build_relevance_table(cb: Codebook, store: EmbeddingStore,
                          feature_ids: Iterable[tuple[CodeSystem, str]],
                          keyword: str, p: float = 10.0,
                          stoplist: Optional[frozenset[str]] = None,
                          index: Optional[dict[str, str]] = None,
                          include_age: bool = True,
                          age_relevance: float = 1.0) -> RelevanceTable:
    """Score every feature id; the age pseudo-feature gets a fixed value."""
    if stoplist is None:
        stoplist = default_stoplist()
    if index is None:
        index = build_stem_index(store)
    keyword_vec = resolve_keyword(store, index, keyword)

    scores: dict[tuple[str, str], float] = {}
    m_tokens: dict[tuple[str, str], int] = {}
    for system, code in feature_ids:
        if not isinstance(system, CodeSystem):
            system = CodeSystem.parse(str(system))
        sims = similarity_vector(cb, store, index, stoplist, system, code,
                                 keyword_vec)
        key = (system.value, code)
        m_tokens[key] = len(sims)
        scores[key] = power_mean(sims, p) if sims else 0.5
    if include_age:
        scores[AGE_FEATURE] = float(age_relevance)
        m_tokens[AGE_FEATURE] = 0
    return RelevanceTable(scores=scores, m_tokens=m_tokens, keyword=keyword,
                          p=p, stoplist_digest=stoplist_digest(stoplist),
                          age_relevance=float(age_relevance))


def relevance_distribution(table: RelevanceTable) -> list[tuple[float, float]]:
    """(rank fraction, relevance) pairs sorted by relevance ascending."""
    if not table.scores:
        raise DataError("relevance table is empty")
    values = sorted(table.scores.values())
    n = len(values)
    return [((i + 1) / n, v) for i, v in enumerate(values)]


def identity_relevance_table(feature_ids: Iterable[tuple[str, str]]) -> RelevanceTable:
    """All-ones table: rescaling with it is a no-op baseline."""
    scores = {}
    m_tokens = {}
    for system, code in feature_ids:
        tag = system.value if isinstance(system, CodeSystem) else str(system)
        scores[(tag, code)] = 1.0
        m_tokens[(tag, code)] = 0
    scores[AGE_FEATURE] = 1.0
    m_tokens[AGE_FEATURE] = 0
    return RelevanceTable(scores=scores, m_tokens=m_tokens, keyword="",
                          p=1.0, stoplist_digest="", age_relevance=1.0)


def write_relevance_csv(table: RelevanceTable, path, provenance: dict | None = None) -> None:
    """Dump a table as ``system,code,relevance,m_tokens`` rows.

    ``#`` comment lines carry the scoring parameters and any provenance
    the caller supplies; readers skip them.
    """
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"# keyword: {table.keyword}\n")
        fh.write(f"# power: {table.p!r}\n")
        fh.write(f"# stoplist_digest: {table.stoplist_digest}\n")
        for key, value in (provenance or {}).items():
            fh.write(f"# {key}: {value}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["system", "code", "relevance", "m_tokens"])
        for (system, code) in sorted(table.scores):
            writer.writerow([system, code, repr(table.scores[(system, code)]),
                             table.m_tokens.get((system, code), 0)])


def load_relevance_csv(path) -> RelevanceTable:
    """Read a table written by write_relevance_csv."""
    scores: dict[tuple[str, str], float] = {}
    m_tokens: dict[tuple[str, str], int] = {}
    keyword = ""
    p = 0.0
    digest = ""
    with open(path, encoding="utf-8") as fh:
        rows = []
        for lineno, line in enumerate(fh, start=1):
            if line.startswith("#"):
                body = line[1:].strip()
                if body.startswith("keyword:"):
                    keyword = body.split(":", 1)[1].strip()
                elif body.startswith("power:"):
                    p = float(body.split(":", 1)[1])
                elif body.startswith("stoplist_digest:"):
                    digest = body.split(":", 1)[1].strip()
                continue
            rows.append((lineno, line))
    if not rows:
        raise FormatError("no header row", path=path)
    header = rows[0][1].strip().split(",")
    if header[:4] != ["system", "code", "relevance", "m_tokens"]:
        raise FormatError("unexpected header", path=path, line=rows[0][0])
    for lineno, line in rows[1:]:
        fields = line.strip().split(",")
        if len(fields) != 4:
            raise FormatError(f"expected 4 fields, got {len(fields)}",
                              path=path, line=lineno)
        system, code, rel_text, m_text = fields
        try:
            rel = float(rel_text)
            m = int(m_text)
        except ValueError:
            raise FormatError("non-numeric relevance or token count",
                              path=path, line=lineno)
        if not 0.0 <= rel <= 1.0:
            raise FormatError(f"relevance {rel} outside [0, 1]",
                              path=path, line=lineno)
        scores[(system, code)] = rel
        m_tokens[(system, code)] = m
    age_rel = scores.get(AGE_FEATURE, 1.0)
    return RelevanceTable(scores=scores, m_tokens=m_tokens, keyword=keyword,
                          p=p, stoplist_digest=digest, age_relevance=age_rel)
