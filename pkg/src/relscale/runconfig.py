"""Flat key = value config files and the validated run configuration.

The format is one `key = value` pair per line, `#` starts a comment,
list values are comma-separated.  Every key is validated up front and
unknown keys are rejected, so a typo fails the run before any compute.
"""

from __future__ import annotations

import datetime
import hashlib
import os
from dataclasses import dataclass
from typing import Optional

from .codebook import CodeSystem
from .errors import ConfigError
from .cohort import CohortSpec
from .evaluate import DownsampleSpec, SplitPlan
from .sparse_glm import CVPlan, DEFAULT_C_GRID
from .synthgen import GeneratorConfig

_REQUIRED = object()


def parse_flat_config(path) -> dict[str, str]:
    """Raw key -> value text mapping; duplicate keys are errors."""
    out: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            if "=" not in text:
                raise ConfigError(
                    f"{path}:{lineno}: expected 'key = value', got {text!r}")
            key, value = text.split("=", 1)
            key = key.strip()
            value = value.strip()
            if not key:
                raise ConfigError(f"{path}:{lineno}: empty key")
            if key in out:
                raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
            out[key] = value
    return out


class ConfigView:
    """Typed, consume-once access over a parsed config mapping."""

    def __init__(self, raw: dict[str, str], source: str):
        self._raw = dict(raw)
        self._source = source

    def _fail(self, key: str, message: str):
        raise ConfigError(f"{self._source}: key {key!r}: {message}")

    def take(self, key: str, default=_REQUIRED) -> Optional[str]:
        if key in self._raw:
            return self._raw.pop(key)
        if default is _REQUIRED:
            raise ConfigError(f"{self._source}: missing required key {key!r}")
        return default

    def take_int(self, key, default=_REQUIRED) -> Optional[int]:
        text = self.take(key, default)
        if text is default or text is None:
            return text
        try:
            return int(str(text))
        except ValueError:
            self._fail(key, f"expected an integer, got {text!r}")

    def take_float(self, key, default=_REQUIRED) -> Optional[float]:
        text = self.take(key, default)
        if text is default or text is None:
            return text
        try:
            return float(str(text))
        except ValueError:
            self._fail(key, f"expected a number, got {text!r}")

    def take_fraction(self, key, default=_REQUIRED) -> Optional[float]:
        """Accepts plain floats and a/b forms such as 2/3."""
        text = self.take(key, default)
        if text is default or text is None:
            return text
        text = str(text)
        try:
            if "/" in text:
                num, den = text.split("/", 1)
                return float(num) / float(den)
            return float(text)
        except (ValueError, ZeroDivisionError):
            self._fail(key, f"expected a fraction, got {text!r}")

    def take_bool(self, key, default=_REQUIRED) -> Optional[bool]:
        text = self.take(key, default)
        if text is default or text is None or isinstance(text, bool):
            return text
        lowered = str(text).lower()
        if lowered in ("true", "yes", "1"):
            return True
        if lowered in ("false", "no", "0"):
            return False
        self._fail(key, f"expected true or false, got {text!r}")

    def take_date(self, key, default=_REQUIRED) -> Optional[datetime.date]:
        text = self.take(key, default)
        if text is default or text is None:
            return text
        try:
            return datetime.date.fromisoformat(str(text))
        except ValueError:
            self._fail(key, f"expected an ISO date, got {text!r}")

    def take_list(self, key, default=_REQUIRED) -> Optional[list[str]]:
        text = self.take(key, default)
        if text is default or text is None or isinstance(text, list):
            return text
        return [item.strip() for item in str(text).split(",") if item.strip()]

    def take_float_list(self, key, default=_REQUIRED) -> Optional[list[float]]:
        items = self.take_list(key, default)
        if items is default or items is None or \
                all(isinstance(x, float) for x in items):
            return items
        try:
            return [float(x) for x in items]
        except ValueError:
            self._fail(key, f"expected comma-separated numbers, got {items!r}")

    def take_pairs(self, key, default=_REQUIRED) -> Optional[dict[str, float]]:
        """Comma list of name:number entries."""
        items = self.take_list(key, default)
        if items is default or items is None:
            return items
        out: dict[str, float] = {}
        for item in items:
            if ":" not in item:
                self._fail(key, f"expected name:number entries, got {item!r}")
            name, value = item.rsplit(":", 1)
            try:
                out[name.strip()] = float(value)
            except ValueError:
                self._fail(key, f"bad number in entry {item!r}")
        return out

    def finish(self):
        if self._raw:
            stray = ", ".join(sorted(self._raw))
            raise ConfigError(f"{self._source}: unknown key(s): {stray}")


def config_digest(path) -> str:
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()


def load_generator_config(path) -> GeneratorConfig:
    view = ConfigView(parse_flat_config(path), str(path))
    noise_sim = view.take_float_list("noise_similarity_range", None)
    noise_fire = view.take_float_list("noise_firing_range", None)
    for name, pair in (("noise_similarity_range", noise_sim),
                       ("noise_firing_range", noise_fire)):
        if pair is not None and len(pair) != 2:
            raise ConfigError(f"{path}: {name} needs exactly two numbers")
    kwargs = dict(
        n_patients=view.take_int("n_patients"),
        prevalence=view.take_float("prevalence"),
        feature_window=(view.take_date("feature_window_start"),
                        view.take_date("feature_window_end")),
        outcome_window=(view.take_date("outcome_window_start"),
                        view.take_date("outcome_window_end")),
        systems=tuple(view.take_list("systems", ["icd9-diagnosis"])),
        depth=view.take_int("depth", 3),
        branching=view.take_int("branching", 4),
        signal_codes=view.take_pairs("signal_codes", {}),
        signal_exposure_rate=view.take_float("signal_exposure_rate", 0.15),
        signal_similarity=view.take_float("signal_similarity", 0.85),
        ancestor_similarity=view.take_float("ancestor_similarity", 0.70),
        similarity_targets=view.take_pairs("similarity_targets", {}),
        word_targets=view.take_pairs("word_targets", {}),
        extra_events_mean=view.take_float("extra_events_mean", 0.5),
        negative_outcome_noise=view.take_float("negative_outcome_noise", 0.05),
        occurrence_threshold=view.take_int("occurrence_threshold", 3),
        outcome_code=view.take("outcome_code", "outc"),
        keyword=view.take("keyword", "wkey"),
        embedding_dim=view.take_int("embedding_dim", 16),
        master_seed=view.take_int("master_seed", 0),
    )
    if noise_sim is not None:
        kwargs["noise_similarity_range"] = (noise_sim[0], noise_sim[1])
    if noise_fire is not None:
        kwargs["noise_firing_range"] = (noise_fire[0], noise_fire[1])
    view.finish()
    return GeneratorConfig(**kwargs)


@dataclass
class RunConfig:
    records: str
    codebook: str
    embeddings: str
    stoplist: Optional[str]
    out_dir: str
    keyword: str
    outcome_codes: set[tuple[CodeSystem, str]]
    occurrence_threshold: int
    expand_descendants: bool
    feature_window: tuple[datetime.date, datetime.date]
    outcome_window: tuple[datetime.date, datetime.date]
    age_range: Optional[tuple[int, int]]
    sex: Optional[str]
    power: float
    age_relevance: float
    identity_relevance: bool
    c_grid: tuple[float, ...]
    cv_folds: int
    cv_repeats: int
    train_fraction: float
    repeats: int
    downsample_positives: Optional[int]
    tolerance: float
    max_iterations: int
    rare_threshold: int
    master_seed: int
    digest: str

    def cohort_spec(self) -> CohortSpec:
        return CohortSpec(feature_window=self.feature_window,
                          outcome_window=self.outcome_window,
                          outcome_codes=self.outcome_codes,
                          occurrence_threshold=self.occurrence_threshold,
                          expand_descendants=self.expand_descendants,
                          age_range=self.age_range,
                          sex=self.sex)

    def split_plan(self) -> SplitPlan:
        return SplitPlan(train_fraction=self.train_fraction,
                         repeats=self.repeats,
                         master_seed=self.master_seed)

    def cv_plan(self) -> CVPlan:
        return CVPlan(folds=self.cv_folds, repeats=self.cv_repeats,
                      c_grid=self.c_grid, seed=0)

    def downsample_spec(self) -> Optional[DownsampleSpec]:
        if self.downsample_positives is None:
            return None
        return DownsampleSpec(target_positives=self.downsample_positives)


def load_run_config(path) -> RunConfig:
    view = ConfigView(parse_flat_config(path), str(path))

    outcome_items = view.take_list("outcome_codes")
    outcome_codes: set[tuple[CodeSystem, str]] = set()
    for item in outcome_items:
        if ":" not in item:
            raise ConfigError(
                f"{path}: outcome_codes entries must be system:code, "
                f"got {item!r}")
        system_text, code = item.split(":", 1)
        try:
            system = CodeSystem.parse(system_text.strip())
        except ValueError as exc:
            raise ConfigError(f"{path}: {exc}")
        outcome_codes.add((system, code.strip()))
    if not outcome_codes:
        raise ConfigError(f"{path}: outcome_codes is empty")

    age_min = view.take_int("age_min", None)
    age_max = view.take_int("age_max", None)
    if (age_min is None) != (age_max is None):
        raise ConfigError(f"{path}: age_min and age_max go together")
    age_range = None if age_min is None else (age_min, age_max)

    cfg = RunConfig(
        records=view.take("records"),
        codebook=view.take("codebook"),
        embeddings=view.take("embeddings"),
        stoplist=view.take("stoplist", None),
        out_dir=view.take("out_dir"),
        keyword=view.take("keyword"),
        outcome_codes=outcome_codes,
        occurrence_threshold=view.take_int("occurrence_threshold", 3),
        expand_descendants=view.take_bool("expand_descendants", True),
        feature_window=(view.take_date("feature_window_start"),
                        view.take_date("feature_window_end")),
        outcome_window=(view.take_date("outcome_window_start"),
                        view.take_date("outcome_window_end")),
        age_range=age_range,
        sex=view.take("sex", None),
        power=view.take_float("power", 10.0),
        age_relevance=view.take_float("age_relevance", 1.0),
        identity_relevance=view.take_bool("identity_relevance", False),
        c_grid=tuple(view.take_float_list("c_grid", list(DEFAULT_C_GRID))),
        cv_folds=view.take_int("cv_folds", 5),
        cv_repeats=view.take_int("cv_repeats", 2),
        train_fraction=view.take_fraction("train_fraction", 2.0 / 3.0),
        repeats=view.take_int("repeats", 10),
        downsample_positives=view.take_int("downsample_positives", None),
        tolerance=view.take_float("tolerance", 1e-5),
        max_iterations=view.take_int("max_iterations", 200),
        rare_threshold=view.take_int("rare_threshold", 3),
        master_seed=view.take_int("master_seed", 0),
        digest=config_digest(path),
    )
    view.finish()

    if not cfg.keyword:
        raise ConfigError(f"{path}: keyword must be nonempty")
    for label, p in (("records", cfg.records), ("codebook", cfg.codebook),
                     ("embeddings", cfg.embeddings),
                     ("stoplist", cfg.stoplist)):
        if p is not None and not os.path.exists(p):
            raise ConfigError(f"{path}: {label} file not found: {p}")
    if not 0.0 < cfg.train_fraction < 1.0:
        raise ConfigError(f"{path}: train_fraction must be in (0, 1)")
    if cfg.tolerance <= 0 or cfg.tolerance > 1e-3:
        raise ConfigError(
            f"{path}: tolerance must be in (0, 1e-3] for experiment runs")
    if cfg.power < 1:
        raise ConfigError(f"{path}: power must be >= 1")
    if cfg.sex is not None and cfg.sex not in ("F", "M"):
        raise ConfigError(f"{path}: sex filter must be F or M")
    # Constructing the plan objects runs their own validation early.
    try:
        cfg.cohort_spec()
        cfg.split_plan()
        cfg.cv_plan()
        cfg.downsample_spec()
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}")
    return cfg
