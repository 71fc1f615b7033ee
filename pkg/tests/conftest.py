"""Shared fixtures: committed desk files plus the synthetic benchmark.

The benchmark dataset and its experiment runs are expensive, so they are
generated once per session and shared by every test that needs them.
"""
from __future__ import annotations

import json
import pathlib
import sys
import time
from dataclasses import dataclass

import pytest

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parent))

from relscale.codebook import load_codebook
from relscale.embeddings import build_stem_index, load_text_embeddings
from relscale.relevance import default_stoplist

FIXTURES = pathlib.Path(__file__).resolve().parent / "fixtures"


@pytest.fixture(scope="session")
def fixtures_dir() -> pathlib.Path:
    return FIXTURES


@pytest.fixture(scope="session")
def cardio_cb():
    return load_codebook(FIXTURES / "codebook_cardio.tsv")


@pytest.fixture(scope="session")
def cardio_store():
    return load_text_embeddings(FIXTURES / "embedding_cardio.txt")


@pytest.fixture(scope="session")
def cardio_index(cardio_store):
    return build_stem_index(cardio_store)


@pytest.fixture(scope="session")
def stoplist():
    return default_stoplist()


class TimedRun:
    """One CLI invocation: exit code, wall time, and the output files."""

    def __init__(self, exit_code: int, seconds: float,
                 out_dir: pathlib.Path):
        self.exit_code = exit_code
        self.seconds = seconds
        self.out_dir = out_dir

    def read_bytes(self, name: str) -> bytes:
        return (self.out_dir / name).read_bytes()


def timed_cli(argv: list[str], out_dir: pathlib.Path) -> TimedRun:
    from relscale.cli import main

    start = time.perf_counter()
    code = main(argv)
    return TimedRun(code, time.perf_counter() - start, out_dir)


# ---------------------------------------------------------------------------
# synthetic benchmark: ~20k patients at 1% prevalence with 40 planted
# signal leaves spread across the hierarchy, plus a signal-free twin and
# a small identity-relevance task

BENCH_GEN = """\
n_patients = 20000
prevalence = 0.01
feature_window_start = 2000-01-01
feature_window_end = 2005-01-01
outcome_window_start = 2005-01-01
outcome_window_end = 2008-01-01
depth = 3
branching = 5
signal_codes = d0.0.0:0.8, d0.0.2:0.9, d0.1.1:1.0, d0.1.3:0.8, d0.2.2:0.9, d0.2.4:1.0, d0.3.3:0.8, d0.3.0:0.9, d0.4.4:1.0, d0.4.1:0.8, d1.0.1:0.9, d1.0.3:1.0, d1.1.2:0.8, d1.1.4:0.9, d1.2.3:1.0, d1.2.0:0.8, d1.3.4:0.9, d1.3.1:1.0, d1.4.0:0.8, d1.4.2:0.9, d2.0.2:1.0, d2.0.4:0.8, d2.1.3:0.9, d2.1.0:1.0, d2.2.4:0.8, d2.2.1:0.9, d2.3.0:1.0, d2.3.2:0.8, d2.4.1:0.9, d2.4.3:1.0, d3.0.3:0.8, d3.1.4:0.9, d3.2.0:1.0, d3.3.1:0.8, d3.4.2:0.9, d4.0.4:1.0, d4.1.0:0.8, d4.2.1:0.9, d4.3.2:1.0, d4.4.3:0.8
signal_exposure_rate = 0.15
signal_similarity = 0.98
ancestor_similarity = 0.80
noise_similarity_range = 0.10, 0.40
noise_firing_range = 0.05, 0.20
embedding_dim = 16
master_seed = 101
"""

BENCH_EXP = """\
records = {data}/records.csv
codebook = {data}/codebook.tsv
embeddings = {data}/embedding.txt
out_dir = {out}
keyword = wkey
outcome_codes = icd9-diagnosis:outc
feature_window_start = 2000-01-01
feature_window_end = 2005-01-01
outcome_window_start = 2005-01-01
outcome_window_end = 2008-01-01
repeats = 10
train_fraction = 2/3
downsample_positives = 50
master_seed = 202
max_iterations = 32
"""

NULL_GEN = """\
n_patients = 12000
prevalence = 0.01
feature_window_start = 2000-01-01
feature_window_end = 2005-01-01
outcome_window_start = 2005-01-01
outcome_window_end = 2008-01-01
depth = 3
branching = 4
signal_similarity = 0.98
ancestor_similarity = 0.80
noise_similarity_range = 0.10, 0.40
noise_firing_range = 0.05, 0.20
embedding_dim = 16
master_seed = 404
"""

NULL_EXP = """\
records = {data}/records.csv
codebook = {data}/codebook.tsv
embeddings = {data}/embedding.txt
out_dir = {out}
keyword = wkey
outcome_codes = icd9-diagnosis:outc
feature_window_start = 2000-01-01
feature_window_end = 2005-01-01
outcome_window_start = 2005-01-01
outcome_window_end = 2008-01-01
repeats = 10
train_fraction = 2/3
downsample_positives = 50
master_seed = 414
max_iterations = 32
"""

IDENT_GEN = """\
n_patients = 4000
prevalence = 0.02
feature_window_start = 2000-01-01
feature_window_end = 2005-01-01
outcome_window_start = 2005-01-01
outcome_window_end = 2008-01-01
depth = 2
branching = 3
signal_codes = d0.0:1.2, d1.1:1.0, d2.2:0.8
signal_exposure_rate = 0.2
signal_similarity = 0.98
ancestor_similarity = 0.80
noise_similarity_range = 0.10, 0.40
noise_firing_range = 0.05, 0.20
embedding_dim = 12
master_seed = 505
"""

IDENT_EXP = """\
records = {data}/records.csv
codebook = {data}/codebook.tsv
embeddings = {data}/embedding.txt
out_dir = {out}
keyword = wkey
outcome_codes = icd9-diagnosis:outc
feature_window_start = 2000-01-01
feature_window_end = 2005-01-01
outcome_window_start = 2005-01-01
outcome_window_end = 2008-01-01
repeats = 10
train_fraction = 2/3
identity_relevance = yes
master_seed = 515
max_iterations = 32
"""


@dataclass
class ExperimentRun:
    """A finished experiment: where it ran, how long, and its report."""

    synth_seconds: float
    seconds: float
    out_dir: pathlib.Path
    report_bytes: bytes
    report: dict


def _synth(gen_text: str, base: pathlib.Path) -> float:
    (base / "gen.cfg").write_text(gen_text)
    run = timed_cli(["synth", "--config", str(base / "gen.cfg"),
                     "--out", str(base / "data")], base / "data")
    assert run.exit_code == 0, "synthetic dataset generation failed"
    return run.seconds


def _experiment(base: pathlib.Path, exp_text: str, synth_seconds: float,
                threads: int) -> ExperimentRun:
    cfg = base / "exp.cfg"
    out = base / "out"
    cfg.write_text(exp_text.format(data=base / "data", out=out))
    run = timed_cli(["experiment", "--config", str(cfg),
                     "--threads", str(threads)], out)
    assert run.exit_code == 0, "experiment run failed"
    data = run.read_bytes("report.json")
    return ExperimentRun(synth_seconds, run.seconds, out, data,
                         json.loads(data))


@pytest.fixture(scope="session")
def bench_paths(tmp_path_factory):
    base = tmp_path_factory.mktemp("bench")
    return base, _synth(BENCH_GEN, base)


@pytest.fixture(scope="session")
def bench_run(bench_paths) -> ExperimentRun:
    base, synth_seconds = bench_paths
    return _experiment(base, BENCH_EXP, synth_seconds, threads=1)


@pytest.fixture(scope="session")
def bench_run_threads8(bench_paths, bench_run) -> ExperimentRun:
    # Reruns the exact same config into the same output directory; the
    # canonical single-thread report bytes are already stashed.
    base, synth_seconds = bench_paths
    return _experiment(base, BENCH_EXP, synth_seconds, threads=8)


@pytest.fixture(scope="session")
def null_run(tmp_path_factory) -> ExperimentRun:
    base = tmp_path_factory.mktemp("null")
    return _experiment(base, NULL_EXP, _synth(NULL_GEN, base), threads=1)


@pytest.fixture(scope="session")
def ident_run(tmp_path_factory) -> ExperimentRun:
    base = tmp_path_factory.mktemp("ident")
    return _experiment(base, IDENT_EXP, _synth(IDENT_GEN, base), threads=1)
