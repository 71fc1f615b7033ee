"""Synthetic billing cohorts with planted ground truth.

Everything derives from a master seed through named substreams, so a
config maps to byte-identical artifacts no matter what else ran
before.  Labels come from a logistic model over planted signal-code
exposures; positives then emit enough outcome-window events that the
cohort module reconstructs exactly the generated labels.

Embedding fixtures are geometric: a word with similarity target t is
placed at angle arccos(2t - 1) from the keyword direction, so the
relevance module measures back t to within file-rounding error.
"""

from __future__ import annotations

import datetime
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.special import expit

from .codebook import CodeSystem, load_codebook, write_codebook_tsv
from .cohort import BillingRecord, write_records_csv
from .errors import ConfigError, DataError

_PREFIX = {"icd9-diagnosis": "d", "icd9-procedure": "p", "atc": "a"}
_DIGITS = "abcdefghij"

# Substream ids off the master seed; names fix the draw order contract.
_S_EMBED = 0
_S_FIRING = 1
_S_DEMOGRAPHICS = 2
_S_EXPOSURE = 3
_S_LABEL = 4
_S_EVENTS = 5
_S_OUTCOME = 6


@dataclass
class GeneratorConfig:
    n_patients: int
    prevalence: float
    feature_window: tuple[datetime.date, datetime.date]
    outcome_window: tuple[datetime.date, datetime.date]
    systems: tuple[str, ...] = ("icd9-diagnosis",)
    depth: int = 3
    branching: int = 4
    signal_codes: dict[str, float] = field(default_factory=dict)
    signal_exposure_rate: float = 0.15
    signal_similarity: float = 0.85
    ancestor_similarity: float = 0.70
    similarity_targets: dict[str, float] = field(default_factory=dict)
    word_targets: dict[str, float] = field(default_factory=dict)
    noise_similarity_range: tuple[float, float] = (0.35, 0.60)
    noise_firing_range: tuple[float, float] = (0.02, 0.12)
    extra_events_mean: float = 0.5
    negative_outcome_noise: float = 0.05
    occurrence_threshold: int = 3
    outcome_code: str = "outc"
    keyword: str = "wkey"
    embedding_dim: int = 16
    master_seed: int = 0

    def __post_init__(self):
        if self.n_patients < 2:
            raise ConfigError("need at least two patients")
        if not 0.0 < self.prevalence < 1.0:
            raise ConfigError("prevalence must be inside (0, 1)")
        if self.embedding_dim < 2:
            raise ConfigError("embedding dimension must be at least 2")
        if self.depth < 1 or self.branching < 1:
            raise ConfigError("codebook depth and branching must be >= 1")
        for system in self.systems:
            if system not in _PREFIX:
                raise ConfigError(f"unknown code system {system!r}")
        fs, fe = self.feature_window
        os_, oe = self.outcome_window
        if not (fs < fe <= os_ < oe):
            raise ConfigError("feature window must precede outcome window")
        for code, effect in self.signal_codes.items():
            if not np.isfinite(effect):
                raise ConfigError(f"effect size for {code} must be finite")
        for name, t in list(self.similarity_targets.items()) + \
                list(self.word_targets.items()):
            if not 0.0 <= t <= 1.0:
                raise ConfigError(
                    f"similarity target for {name} must be in [0, 1]")
        if self.occurrence_threshold < 1:
            raise ConfigError("occurrence threshold must be >= 1")

    def stream(self, stream_id: int) -> np.random.Generator:
        return np.random.default_rng(
            np.random.SeedSequence(self.master_seed, spawn_key=(stream_id,)))


@dataclass
class GroundTruth:
    intercept: float
    effects: dict[str, float]
    exposure_rates: dict[str, float]
    predictive_codes: list[str]
    relevance_ordering: list[str]
    labels: np.ndarray
    exposures: dict[str, np.ndarray]
    realized_prevalence: float
    patient_ids: list[str] = field(default_factory=list)

    def label_of(self, patient_id: str) -> int:
        """True label by id; patients with no events never reach the
        records file, so positional alignment with a cohort is wrong."""
        idx = int(patient_id[1:])
        if self.patient_ids[idx] != patient_id:
            raise KeyError(f"unknown patient id {patient_id!r}")
        return int(self.labels[idx])


def _code_word(code: str) -> str:
    out = ["w"]
    for ch in code:
        if ch.isdigit():
            out.append(_DIGITS[int(ch)])
        elif ch.isalpha():
            out.append(ch.lower())
    return "".join(out)


def generate_codebook_rows(cfg: GeneratorConfig) -> list[tuple[str, str, str, str]]:
    """Complete b-ary trees per system, plus a rootless outcome node.

    Every node's description is its own unique alphabetic word, which
    keeps the mapping from codes to embedding vectors exact.
    """
    rows: list[tuple[str, str, str, str]] = []
    for system in cfg.systems:
        prefix = _PREFIX[system]
        frontier = []
        for i in range(cfg.branching):
            code = f"{prefix}{i}"
            rows.append((system, code, "", _code_word(code)))
            frontier.append(code)
        for _level in range(1, cfg.depth):
            nxt = []
            for parent in frontier:
                for i in range(cfg.branching):
                    code = f"{parent}.{i}"
                    rows.append((system, code, parent, _code_word(code)))
                    nxt.append(code)
            frontier = nxt
    if any(code == cfg.outcome_code for _s, code, _p, _d in rows):
        raise ConfigError(
            f"outcome code {cfg.outcome_code!r} collides with a tree code")
    rows.append((cfg.systems[0], cfg.outcome_code, "",
                 _code_word(cfg.outcome_code)))
    return rows


def _system_of(cfg: GeneratorConfig, code: str) -> str:
    if code == cfg.outcome_code:
        return cfg.systems[0]
    for system, prefix in _PREFIX.items():
        if system in cfg.systems and code.startswith(prefix):
            return system
    raise ConfigError(f"cannot infer the system of code {code!r}")


def _ancestor_codes(code: str) -> list[str]:
    """Proper ancestors implied by the dotted naming scheme."""
    parts = code.split(".")
    return [".".join(parts[:k]) for k in range(1, len(parts))]


def _leaf_codes(cfg: GeneratorConfig,
                rows: list[tuple[str, str, str, str]]) -> list[str]:
    parents = {parent for _s, _c, parent, _d in rows if parent}
    return [code for _s, code, _p, _d in rows
            if code not in parents and code != cfg.outcome_code]


def resolve_word_targets(cfg: GeneratorConfig,
                         rows: list[tuple[str, str, str, str]],
                         ) -> dict[str, float]:
    """Similarity target per description word, resolution order:
    explicit word target > per-code target > signal default > ancestor
    default > neutral for the outcome node > seeded noise draw."""
    rng = cfg.stream(_S_EMBED)
    lo, hi = cfg.noise_similarity_range
    ancestors_of_signal: set[str] = set()
    for code in cfg.signal_codes:
        ancestors_of_signal.update(_ancestor_codes(code))

    targets: dict[str, float] = {}
    for _system, code, _parent, description in rows:
        word = description
        if word in cfg.word_targets:
            targets[word] = cfg.word_targets[word]
        elif code in cfg.similarity_targets:
            targets[word] = cfg.similarity_targets[code]
        elif code in cfg.signal_codes:
            targets[word] = cfg.signal_similarity
        elif code in ancestors_of_signal:
            targets[word] = cfg.ancestor_similarity
        elif code == cfg.outcome_code:
            targets[word] = 0.5
        else:
            targets[word] = float(rng.uniform(lo, hi))
    return targets


def _unit(vec: np.ndarray) -> np.ndarray:
    return vec / np.linalg.norm(vec)


def embedding_lines(keyword: str, word_targets: dict[str, float],
                    dim: int, rng: np.random.Generator) -> list[str]:
    """Text-format embedding lines with exact-angle placement."""
    if dim < 2:
        raise ConfigError("embedding dimension must be at least 2")
    axis = _unit(rng.normal(size=dim))
    words = sorted(word_targets)
    lines = [f"{1 + len(words)} {dim}"]

    def fmt(word: str, vec: np.ndarray) -> str:
        return word + " " + " ".join(f"{x:.8f}" for x in vec)

    lines.append(fmt(keyword, axis))
    for word in words:
        t = word_targets[word]
        c = 2.0 * t - 1.0
        while True:
            raw = rng.normal(size=dim)
            perp = raw - np.dot(raw, axis) * axis
            norm = np.linalg.norm(perp)
            if norm > 1e-8:
                break
        vec = c * axis + np.sqrt(max(0.0, 1.0 - c * c)) * (perp / norm)
        lines.append(fmt(word, vec))
    return lines


def generate_embedding_fixture(cfg: GeneratorConfig,
                               rows: list[tuple[str, str, str, str]],
                               keyword: Optional[str] = None) -> list[str]:
    """Calibrated embedding for a generated codebook's vocabulary."""
    keyword = cfg.keyword if keyword is None else keyword
    targets = resolve_word_targets(cfg, rows)
    if keyword in targets:
        raise ConfigError(
            f"keyword {keyword!r} collides with a description word")
    return embedding_lines(keyword, targets, cfg.embedding_dim,
                           cfg.stream(_S_EMBED + 100))


def _calibrate_intercept(linear: np.ndarray, prevalence: float) -> float:
    lo, hi = -60.0, 60.0
    if expit(lo + linear).mean() > prevalence or \
            expit(hi + linear).mean() < prevalence:
        raise DataError("prevalence target is unreachable for this config")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if expit(mid + linear).mean() < prevalence:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def generate_cohort(cfg: GeneratorConfig,
                    ) -> tuple[list[BillingRecord],
                               list[tuple[str, str, str, str]], GroundTruth]:
    """Records, codebook rows and the planted mechanism."""
    rows = generate_codebook_rows(cfg)
    codes_in_book = {code for _s, code, _p, _d in rows}
    for code in cfg.signal_codes:
        if code not in codes_in_book:
            raise ConfigError(f"signal code {code!r} is not in the codebook")
    if cfg.outcome_code in cfg.signal_codes:
        raise ConfigError("the outcome code cannot also be a signal code")

    n = cfg.n_patients
    signal_codes = sorted(cfg.signal_codes)
    noise_codes = [c for c in _leaf_codes(cfg, rows)
                   if c not in cfg.signal_codes]

    rng_demo = cfg.stream(_S_DEMOGRAPHICS)
    sexes = np.where(rng_demo.random(n) < 0.5, "F", "M")
    ref_year = cfg.outcome_window[0].year
    ages = rng_demo.integers(30, 81, size=n)
    birth_years = ref_year - ages

    # Planted exposures and the logistic label mechanism.
    rng_exp = cfg.stream(_S_EXPOSURE)
    exposures = {code: rng_exp.random(n) < cfg.signal_exposure_rate
                 for code in signal_codes}
    linear = np.zeros(n)
    for code in signal_codes:
        linear += cfg.signal_codes[code] * exposures[code]
    intercept = _calibrate_intercept(linear, cfg.prevalence)
    rng_label = cfg.stream(_S_LABEL)
    labels = (rng_label.random(n) < expit(intercept + linear)).astype(np.int64)
    if labels.sum() == 0 or labels.sum() == n:
        raise DataError("generated labels are single-class; adjust config")

    fs, fe = cfg.feature_window
    os_, oe = cfg.outcome_window
    feature_days = (fe - fs).days
    outcome_days = (oe - os_).days

    per_patient: list[list[tuple[datetime.date, str, str]]] = \
        [[] for _ in range(n)]

    def emit(rng, patient_ids, code, window_start, window_days, counts):
        system = _system_of(cfg, code)
        offsets = rng.integers(0, window_days, size=int(counts.sum()))
        pos = 0
        for pid, count in zip(patient_ids, counts):
            for k in range(count):
                date = window_start + datetime.timedelta(
                    days=int(offsets[pos + k]))
                per_patient[pid].append((date, system, code))
            pos += count

    rng_events = cfg.stream(_S_EVENTS)
    for code in signal_codes:
        hit = np.flatnonzero(exposures[code])
        counts = 1 + rng_events.poisson(cfg.extra_events_mean, hit.shape[0])
        emit(rng_events, hit, code, fs, feature_days, counts)

    rng_firing = cfg.stream(_S_FIRING)
    lo, hi = cfg.noise_firing_range
    firing = {code: float(rng_firing.uniform(lo, hi)) for code in noise_codes}
    for code in noise_codes:
        hit = np.flatnonzero(rng_events.random(n) < firing[code])
        counts = 1 + rng_events.poisson(cfg.extra_events_mean, hit.shape[0])
        emit(rng_events, hit, code, fs, feature_days, counts)

    # Outcome evidence consistent with the 3-occurrence labeling rule.
    rng_out = cfg.stream(_S_OUTCOME)
    positives = np.flatnonzero(labels == 1)
    counts = cfg.occurrence_threshold + rng_out.poisson(1.0, positives.shape[0])
    emit(rng_out, positives, cfg.outcome_code, os_, outcome_days, counts)
    negatives = np.flatnonzero(labels == 0)
    if cfg.occurrence_threshold > 1 and cfg.negative_outcome_noise > 0:
        noisy = negatives[rng_out.random(negatives.shape[0])
                          < cfg.negative_outcome_noise]
        counts = rng_out.integers(1, cfg.occurrence_threshold,
                                  size=noisy.shape[0])
        emit(rng_out, noisy, cfg.outcome_code, os_, outcome_days, counts)

    records: list[BillingRecord] = []
    patient_ids = [f"p{i:06d}" for i in range(n)]
    for i in range(n):
        for date, system, code in per_patient[i]:
            records.append(BillingRecord(
                patient_id=patient_ids[i], sex=str(sexes[i]),
                birth_year=int(birth_years[i]), date=date,
                system=CodeSystem.parse(system), code=code))

    word_targets = resolve_word_targets(cfg, rows)
    own_target = {code: word_targets[_code_word(code)]
                  for _s, code, _p, _d in rows}
    ordering = sorted((c for c in own_target if c != cfg.outcome_code),
                      key=lambda c: (-own_target[c], c))
    predictive = sorted(set(signal_codes) | {a for c in signal_codes
                                             for a in _ancestor_codes(c)})
    truth = GroundTruth(
        intercept=float(intercept),
        effects=dict(cfg.signal_codes),
        exposure_rates={c: cfg.signal_exposure_rate for c in signal_codes},
        predictive_codes=predictive,
        relevance_ordering=ordering,
        labels=labels,
        exposures=exposures,
        realized_prevalence=float(labels.mean()),
        patient_ids=patient_ids)
    return records, rows, truth


def generate_dataset(cfg: GeneratorConfig, out_dir) -> tuple[dict, GroundTruth]:
    """Write records.csv, codebook.tsv and embedding.txt under out_dir."""
    import os

    records, rows, truth = generate_cohort(cfg)
    os.makedirs(out_dir, exist_ok=True)
    paths = {
        "records": os.path.join(out_dir, "records.csv"),
        "codebook": os.path.join(out_dir, "codebook.tsv"),
        "embedding": os.path.join(out_dir, "embedding.txt"),
    }
    write_records_csv(records, paths["records"])
    write_codebook_tsv(rows, paths["codebook"])
    lines = generate_embedding_fixture(cfg, rows)
    with open(paths["embedding"], "w", encoding="utf-8", newline="") as fh:
        fh.write("\n".join(lines) + "\n")
    load_codebook(paths["codebook"])  # round-trip sanity before reporting
    return paths, truth
