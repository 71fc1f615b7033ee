"""Synthetic data generator: planted mechanism, calibrated embeddings
and reproducible files."""

import datetime

import numpy as np
import pytest

from relscale.codebook import CodeSystem, load_codebook
from relscale.cohort import CohortSpec, build_cohort, load_records
from relscale.embeddings import (build_stem_index, cosine_similarity,
                                 load_text_embeddings)
from relscale.errors import ConfigError
from relscale.relevance import build_relevance_table
from relscale.synthgen import (GeneratorConfig, embedding_lines,
                               generate_codebook_rows, generate_cohort,
                               generate_dataset, generate_embedding_fixture,
                               resolve_word_targets)

FW = (datetime.date(2000, 1, 1), datetime.date(2005, 1, 1))
OW = (datetime.date(2005, 1, 1), datetime.date(2008, 1, 1))


def make_cfg(**kwargs):
    base = dict(n_patients=3000, prevalence=0.05, feature_window=FW,
                outcome_window=OW, depth=2, branching=3,
                signal_codes={"d0.0": 2.0, "d1.1": 1.5},
                signal_exposure_rate=0.2, master_seed=5)
    base.update(kwargs)
    return GeneratorConfig(**base)


# ---------------------------------------------------------------------------
# configuration validation


def test_config_rejects_bad_values():
    with pytest.raises(ConfigError):
        make_cfg(n_patients=1)
    with pytest.raises(ConfigError):
        make_cfg(prevalence=0.0)
    with pytest.raises(ConfigError):
        make_cfg(prevalence=1.0)
    with pytest.raises(ConfigError):
        make_cfg(embedding_dim=1)
    with pytest.raises(ConfigError):
        make_cfg(depth=0)
    with pytest.raises(ConfigError):
        make_cfg(systems=("snomed",))
    with pytest.raises(ConfigError):
        make_cfg(similarity_targets={"d0.0": 1.5})
    with pytest.raises(ConfigError):
        make_cfg(occurrence_threshold=0)


def test_config_rejects_overlapping_windows():
    with pytest.raises(ConfigError):
        make_cfg(feature_window=(datetime.date(2000, 1, 1),
                                 datetime.date(2006, 1, 1)))


def test_outcome_code_collision_rejected():
    cfg = make_cfg(outcome_code="d0")
    with pytest.raises(ConfigError):
        generate_codebook_rows(cfg)


def test_unknown_signal_code_rejected():
    cfg = make_cfg(signal_codes={"d9.9": 1.0})
    with pytest.raises(ConfigError):
        generate_cohort(cfg)


# ---------------------------------------------------------------------------
# codebook generation


def test_codebook_tree_shape():
    rows = generate_codebook_rows(make_cfg())
    # 3 roots + 9 leaves + the outcome node
    assert len(rows) == 13
    codes = {code for _s, code, _p, _d in rows}
    assert len(codes) == 13
    roots = [r for r in rows if r[2] == ""]
    assert {code for _s, code, _p, _d in roots} == {"d0", "d1", "d2", "outc"}
    for _system, code, parent, _desc in rows:
        if parent:
            assert parent in codes


def test_codebook_descriptions_unique_words():
    rows = generate_codebook_rows(make_cfg())
    words = [desc for _s, _c, _p, desc in rows]
    assert len(set(words)) == len(words)
    for word in words:
        assert word.isalpha() and word.islower()
        assert word.startswith("w")


def test_codebook_two_systems():
    rows = generate_codebook_rows(make_cfg(systems=("icd9-diagnosis",
                                                    "atc")))
    assert len(rows) == 2 * 12 + 1
    systems = {system for system, _c, _p, _d in rows}
    assert systems == {"icd9-diagnosis", "atc"}


# ---------------------------------------------------------------------------
# similarity targets


def word_of(rows, code):
    return next(desc for _s, c, _p, desc in rows if c == code)


def test_target_resolution_priorities():
    cfg = make_cfg(similarity_targets={"d2.2": 0.22})
    rows = generate_codebook_rows(cfg)
    targets = resolve_word_targets(cfg, rows)
    assert targets[word_of(rows, "d0.0")] == cfg.signal_similarity
    assert targets[word_of(rows, "d1.1")] == cfg.signal_similarity
    assert targets[word_of(rows, "d0")] == cfg.ancestor_similarity
    assert targets[word_of(rows, "d1")] == cfg.ancestor_similarity
    assert targets[word_of(rows, "d2.2")] == 0.22
    assert targets[word_of(rows, "outc")] == 0.5
    lo, hi = cfg.noise_similarity_range
    for code in ("d2", "d0.1", "d1.0"):
        assert lo <= targets[word_of(rows, code)] <= hi


def test_word_target_overrides_signal_default():
    cfg = make_cfg()
    rows = generate_codebook_rows(cfg)
    word = word_of(rows, "d0.0")
    cfg2 = make_cfg(word_targets={word: 0.11})
    assert resolve_word_targets(cfg2, rows)[word] == 0.11


def test_targets_deterministic():
    cfg = make_cfg()
    rows = generate_codebook_rows(cfg)
    assert resolve_word_targets(cfg, rows) == resolve_word_targets(cfg, rows)


# ---------------------------------------------------------------------------
# calibrated embeddings


def load_lines(tmp_path, lines):
    path = tmp_path / "emb.txt"
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return load_text_embeddings(path)


def test_embedding_lines_hit_exact_angles(tmp_path):
    targets = {"parallel": 1.0, "ortho": 0.5, "anti": 0.0, "mid": 0.73}
    lines = embedding_lines("kw", targets, dim=6,
                            rng=np.random.default_rng(5))
    assert lines[0] == "5 6"
    store = load_lines(tmp_path, lines)
    kw = store.vector("kw")
    for word, t in targets.items():
        measured = (cosine_similarity(kw, store.vector(word)) + 1.0) / 2.0
        assert measured == pytest.approx(t, abs=1e-6)


def test_fixture_calibrated_for_every_word(tmp_path):
    cfg = make_cfg(embedding_dim=8)
    rows = generate_codebook_rows(cfg)
    targets = resolve_word_targets(cfg, rows)
    lines = generate_embedding_fixture(cfg, rows)
    store = load_lines(tmp_path, lines)
    kw = store.vector(cfg.keyword)
    for word, t in targets.items():
        measured = (cosine_similarity(kw, store.vector(word)) + 1.0) / 2.0
        assert measured == pytest.approx(t, abs=1e-6)


def test_fixture_rejects_keyword_collision():
    cfg = make_cfg()
    rows = generate_codebook_rows(cfg)
    with pytest.raises(ConfigError):
        generate_embedding_fixture(cfg, rows, keyword=rows[0][3])


# ---------------------------------------------------------------------------
# cohort mechanism


@pytest.fixture(scope="module")
def generated():
    cfg = make_cfg()
    records, rows, truth = generate_cohort(cfg)
    return cfg, records, rows, truth


def test_prevalence_near_target(generated):
    cfg, _records, _rows, truth = generated
    assert truth.labels.shape == (cfg.n_patients,)
    assert abs(truth.realized_prevalence - cfg.prevalence) < 0.016


def test_ground_truth_bookkeeping(generated):
    cfg, _records, _rows, truth = generated
    assert truth.effects == cfg.signal_codes
    assert truth.predictive_codes == ["d0", "d0.0", "d1", "d1.1"]
    assert truth.relevance_ordering[:2] == ["d0.0", "d1.1"]
    assert set(truth.relevance_ordering[2:4]) == {"d0", "d1"}
    assert len(truth.patient_ids) == cfg.n_patients
    assert truth.realized_prevalence == truth.labels.mean()
    assert truth.label_of("p000007") == truth.labels[7]
    with pytest.raises(KeyError):
        truth.label_of("p7")


def test_exposure_raises_outcome_rate(generated):
    _cfg, _records, _rows, truth = generated
    exposed = truth.exposures["d0.0"]
    assert truth.labels[exposed].mean() > truth.labels[~exposed].mean()


def test_signal_events_only_for_exposed(generated):
    cfg, records, _rows, truth = generated
    seen = {code: set() for code in cfg.signal_codes}
    for rec in records:
        if rec.code in seen:
            seen[rec.code].add(rec.patient_id)
    for code, patients in seen.items():
        exposed_ids = {truth.patient_ids[i]
                       for i in np.flatnonzero(truth.exposures[code])}
        assert patients == exposed_ids


def test_event_dates_respect_windows(generated):
    cfg, records, _rows, _truth = generated
    fs, fe = cfg.feature_window
    os_, oe = cfg.outcome_window
    for rec in records:
        if rec.code == cfg.outcome_code:
            assert os_ <= rec.date < oe
        else:
            assert fs <= rec.date < fe


def test_ages_match_reference_year(generated):
    cfg, records, _rows, _truth = generated
    ref = cfg.outcome_window[0].year
    for rec in records[:500]:
        assert 30 <= ref - rec.birth_year <= 80


def test_cohort_module_recovers_planted_labels(generated):
    cfg, records, _rows, truth = generated
    spec = CohortSpec(feature_window=cfg.feature_window,
                      outcome_window=cfg.outcome_window,
                      outcome_codes={(CodeSystem.parse("icd9-diagnosis"),
                                      cfg.outcome_code)},
                      occurrence_threshold=cfg.occurrence_threshold,
                      expand_descendants=False)
    cohort = build_cohort(records, spec)
    assert not cohort.excluded
    assert not cohort.filtered
    recovered = {m.patient_id: m.label for m in cohort.members}
    for pid, label in recovered.items():
        assert label == truth.label_of(pid)
    # patients absent from the records are all negatives
    missing = set(truth.patient_ids) - set(recovered)
    for pid in missing:
        assert truth.label_of(pid) == 0
    assert sum(recovered.values()) == int(truth.labels.sum())


def test_estimated_relevance_separates_signal_from_noise(tmp_path,
                                                         generated):
    cfg, _records, rows, truth = generated
    lines = generate_embedding_fixture(cfg, rows)
    store = load_lines(tmp_path, lines)
    path = tmp_path / "cb.tsv"
    from relscale.codebook import write_codebook_tsv
    write_codebook_tsv(rows, path)
    cb = load_codebook(path)
    system = CodeSystem.parse("icd9-diagnosis")
    leaves = [code for _s, code, _p, _d in rows
              if "." in code]
    table = build_relevance_table(
        cb, store, [(system, code) for code in leaves], cfg.keyword,
        index=build_stem_index(store), include_age=False)
    signal = [table.get(("icd9-diagnosis", c)) for c in cfg.signal_codes]
    noise = [table.get(("icd9-diagnosis", c)) for c in leaves
             if c not in cfg.signal_codes]
    assert min(signal) > max(noise)


# ---------------------------------------------------------------------------
# dataset files


def test_dataset_files_reproducible(tmp_path):
    cfg = make_cfg(n_patients=400, master_seed=21)
    paths_a, truth_a = generate_dataset(cfg, tmp_path / "a")
    paths_b, truth_b = generate_dataset(cfg, tmp_path / "b")
    assert set(paths_a) == {"records", "codebook", "embedding"}
    for key in paths_a:
        with open(paths_a[key], "rb") as fa, open(paths_b[key], "rb") as fb:
            assert fa.read() == fb.read()
    assert np.array_equal(truth_a.labels, truth_b.labels)


def test_dataset_seed_changes_records(tmp_path):
    cfg_a = make_cfg(n_patients=400, master_seed=21)
    cfg_b = make_cfg(n_patients=400, master_seed=22)
    paths_a, _ = generate_dataset(cfg_a, tmp_path / "a")
    paths_b, _ = generate_dataset(cfg_b, tmp_path / "b")
    with open(paths_a["records"], "rb") as fa, \
            open(paths_b["records"], "rb") as fb:
        assert fa.read() != fb.read()


def test_dataset_files_load_cleanly(tmp_path):
    cfg = make_cfg(n_patients=400, master_seed=3)
    paths, truth = generate_dataset(cfg, tmp_path / "d")
    records = load_records(paths["records"])
    assert records
    cb = load_codebook(paths["codebook"])
    system = CodeSystem.parse("icd9-diagnosis")
    assert cb.ancestors(system, "d0.0") == ["d0", "d0.0"]
    store = load_text_embeddings(paths["embedding"])
    assert cfg.keyword in store.tokens()
