"""Experimental protocol: repeated stratified splits, downsampling,
AUC, the exact sign test, and the standard-vs-rescaled comparison.

The two branches of a repeat are paired: they share the split, the
downsample and the cross-validation fold seeds, so per-repeat metric
differences reflect only the rescaling.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np

from .errors import DataError, RelscaleError
from .features import (SparseFeatureMatrix, apply_transform,
                       fit_transform_params, rescale_by_relevance)
from .relevance import RelevanceTable
from .sparse_glm import (CVPlan, HyperParams, class_cost_ratio,
                         cross_validate_C, fit, predict_scores,
                         selected_features)


@dataclass
class SplitPlan:
    train_fraction: float = 2.0 / 3.0
    repeats: int = 10
    master_seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise ValueError("train fraction must be in (0, 1)")
        if self.repeats < 1:
            raise ValueError("need at least one repeat")

    def repeat_seed(self, repeat: int, stage: str) -> np.random.SeedSequence:
        """Documented counter scheme: every (repeat, stage) pair gets its
        own independent stream off the master seed."""
        stage_ids = {"split": 0, "downsample": 1, "cv": 2}
        return np.random.SeedSequence(
            self.master_seed, spawn_key=(repeat, stage_ids[stage]))


@dataclass
class DownsampleSpec:
    target_positives: int
    negative_policy: str = "proportional"

    def __post_init__(self):
        if self.target_positives < 1:
            raise ValueError("target positives must be >= 1")
        if self.negative_policy != "proportional":
            raise ValueError("only the proportional negative policy exists")


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def stratified_split(labels, fraction: float,
                     seed) -> tuple[np.ndarray, np.ndarray]:
    """Per-class split: round(fraction * n_class) rows train, rest test,
    clamped so both sides keep at least one of each class."""
    y = np.asarray(labels)
    rng = np.random.default_rng(seed)
    train_parts = []
    test_parts = []
    for cls in (0, 1):
        members = np.flatnonzero(y == cls)
        n_cls = members.shape[0]
        if n_cls < 2:
            raise DataError(
                f"class {cls} has {n_cls} example(s); cannot place one on "
                "each side of the split")
        n_train = _round_half_up(fraction * n_cls)
        n_train = min(max(n_train, 1), n_cls - 1)
        perm = rng.permutation(members)
        train_parts.append(perm[:n_train])
        test_parts.append(perm[n_train:])
    train_idx = np.sort(np.concatenate(train_parts))
    test_idx = np.sort(np.concatenate(test_parts))
    return train_idx, test_idx


def downsample(train_idx, labels, spec: DownsampleSpec, seed) -> np.ndarray:
    """Keep exactly spec.target_positives positives and a proportional
    number of negatives, both sampled uniformly without replacement."""
    train_idx = np.asarray(train_idx)
    y = np.asarray(labels)
    pos = train_idx[y[train_idx] == 1]
    neg = train_idx[y[train_idx] == 0]
    n_pos, n_neg = pos.shape[0], neg.shape[0]
    if n_pos < spec.target_positives:
        raise DataError(
            f"training split has {n_pos} positives, fewer than the "
            f"downsample target {spec.target_positives}")
    rng = np.random.default_rng(seed)
    keep_pos = rng.choice(pos, size=spec.target_positives, replace=False)
    n_keep_neg = _round_half_up(n_neg * spec.target_positives / n_pos)
    n_keep_neg = min(n_keep_neg, n_neg)
    keep_neg = rng.choice(neg, size=n_keep_neg, replace=False)
    return np.sort(np.concatenate([keep_pos, keep_neg]))


def auc(scores, labels) -> float:
    """Mann-Whitney AUC by average ranks; ties get half credit."""
    scores = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels)
    n_pos = int(np.sum(y == 1))
    n_neg = int(np.sum(y == 0))
    if n_pos == 0 or n_neg == 0:
        raise DataError("AUC needs both classes present")
    order = np.argsort(scores, kind="stable")
    sorted_scores = scores[order]
    ranks = np.empty(scores.shape[0], dtype=np.float64)
    i = 0
    while i < sorted_scores.shape[0]:
        j = i
        while (j + 1 < sorted_scores.shape[0]
               and sorted_scores[j + 1] == sorted_scores[i]):
            j += 1
        # ranks are 1-based; a tie block shares its average rank
        ranks[order[i:j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    rank_sum_pos = float(np.sum(ranks[y == 1]))
    u = rank_sum_pos - n_pos * (n_pos + 1) / 2.0
    return u / (n_pos * n_neg)


def sign_test(pairs: Sequence[tuple[float, float]],
              ) -> tuple[int, int, Fraction, Fraction]:
    """(wins for b, non-tied pairs, one-sided p, two-sided p), exact.

    one-sided p = P[X >= k] under X ~ Binomial(m, 1/2); ties drop out
    first.  Both p-values are exact rationals.
    """
    k = 0
    m = 0
    for a, b in pairs:
        if a == b:
            continue
        m += 1
        if b > a:
            k += 1
    if m == 0:
        raise DataError("sign test is undefined when every pair is tied")
    denom = Fraction(2) ** m
    upper = sum(math.comb(m, j) for j in range(k, m + 1))
    lower = sum(math.comb(m, j) for j in range(0, k + 1))
    p_one = Fraction(upper, 1) / denom
    p_other = Fraction(lower, 1) / denom
    p_two = min(Fraction(1), 2 * min(p_one, p_other))
    return k, m, p_one, p_two


@dataclass
class RepeatResult:
    repeat: int
    auc_standard: Optional[float] = None
    auc_rescaled: Optional[float] = None
    nnz_standard: Optional[int] = None
    nnz_rescaled: Optional[int] = None
    chosen_c_standard: Optional[float] = None
    chosen_c_rescaled: Optional[float] = None
    kkt_standard: Optional[float] = None
    kkt_rescaled: Optional[float] = None
    converged_standard: Optional[bool] = None
    converged_rescaled: Optional[bool] = None
    n_train: Optional[int] = None
    n_train_positives: Optional[int] = None
    failed: Optional[str] = None


@dataclass
class ComparisonReport:
    repeats: list[RepeatResult]
    mean_auc_standard: float
    mean_auc_rescaled: float
    se_auc_standard: float
    se_auc_rescaled: float
    mean_nnz_standard: float
    mean_nnz_rescaled: float
    auc_wins_rescaled: int
    auc_pairs: int
    auc_p_one_sided: Optional[Fraction]
    auc_p_two_sided: Optional[Fraction]
    nnz_wins_rescaled: int
    nnz_pairs: int
    nnz_p_one_sided: Optional[Fraction]
    nnz_p_two_sided: Optional[Fraction]
    selected_standard: list[list] = field(default_factory=list)
    selected_rescaled: list[list] = field(default_factory=list)


def _mean_se(values: list[float]) -> tuple[float, float]:
    arr = np.asarray(values, dtype=np.float64)
    mean = float(arr.mean())
    if arr.shape[0] < 2:
        return mean, 0.0
    sd = float(arr.std(ddof=1))
    return mean, sd / math.sqrt(arr.shape[0])


def _run_single_repeat(repeat: int, raw: SparseFeatureMatrix,
                       table: RelevanceTable, split_plan: SplitPlan,
                       down: Optional[DownsampleSpec], cv_template: CVPlan,
                       hp_tolerance: float, max_iterations: int,
                       rare_threshold: int) -> tuple[RepeatResult, list, list]:
    y = raw.labels
    split_seed = split_plan.repeat_seed(repeat, "split")
    train_idx, test_idx = stratified_split(
        y, split_plan.train_fraction, split_seed)
    if down is not None:
        ds_seed = split_plan.repeat_seed(repeat, "downsample")
        train_idx = downsample(train_idx, y, down, ds_seed)

    train_raw = raw.subset_rows(train_idx)
    test_raw = raw.subset_rows(test_idx)
    params = fit_transform_params(train_raw, rare_threshold=rare_threshold)
    train = apply_transform(train_raw, params)
    test = apply_transform(test_raw, params)

    ratio = class_cost_ratio(train.labels)
    hp_template = HyperParams(C=1.0, class_cost_ratio=ratio,
                              tolerance=hp_tolerance,
                              max_iterations=max_iterations)
    # Both branches reuse one fold seed so the comparison stays paired.
    cv_seed = int(split_plan.repeat_seed(repeat, "cv").generate_state(1)[0])

    branch_out = {}
    for branch in ("standard", "rescaled"):
        if branch == "standard":
            tr, te = train, test
        else:
            tr = rescale_by_relevance(train, table)
            te = rescale_by_relevance(test, table)
        plan = CVPlan(folds=cv_template.folds, repeats=cv_template.repeats,
                      c_grid=cv_template.c_grid, seed=cv_seed)
        best_c, _ = cross_validate_C(tr, tr.labels, plan, hp_template)
        hp = HyperParams(C=best_c, class_cost_ratio=ratio,
                         tolerance=hp_tolerance,
                         max_iterations=max_iterations)
        model = fit(tr, tr.labels, hp)
        scores = predict_scores(model, te)
        branch_out[branch] = {
            "auc": auc(scores, te.labels),
            "nnz": int(np.count_nonzero(model.w)),
            "c": best_c,
            "kkt": model.kkt_residual,
            "converged": model.converged,
            "selected": selected_features(model),
        }

    std, res = branch_out["standard"], branch_out["rescaled"]
    result = RepeatResult(
        repeat=repeat,
        auc_standard=std["auc"], auc_rescaled=res["auc"],
        nnz_standard=std["nnz"], nnz_rescaled=res["nnz"],
        chosen_c_standard=std["c"], chosen_c_rescaled=res["c"],
        kkt_standard=std["kkt"], kkt_rescaled=res["kkt"],
        converged_standard=std["converged"],
        converged_rescaled=res["converged"],
        n_train=len(train_idx),
        n_train_positives=int(np.sum(y[train_idx] == 1)))
    return result, std["selected"], res["selected"]


def run_comparison(raw: SparseFeatureMatrix, table: RelevanceTable,
                   split_plan: SplitPlan,
                   downsample_spec: Optional[DownsampleSpec] = None,
                   cv_plan: Optional[CVPlan] = None,
                   hp_tolerance: float = 1e-5,
                   max_iterations: int = 200,
                   rare_threshold: int = 3,
                   threads: int = 1) -> ComparisonReport:
    """Paired standard-vs-rescaled experiment over all repeats.

    Each repeat: stratified split, optional downsample, per-branch CV
    over C, final fit, scores on the full test set.  Repeats may run on
    a thread pool; results are assembled in repeat order, so the report
    does not depend on scheduling.
    """
    if cv_plan is None:
        cv_plan = CVPlan()

    def worker(rep: int):
        try:
            return _run_single_repeat(
                rep, raw, table, split_plan, downsample_spec, cv_plan,
                hp_tolerance, max_iterations, rare_threshold)
        except RelscaleError as exc:
            failed = f"{type(exc).__name__}: {exc}"
            return RepeatResult(repeat=rep, failed=failed), [], []

    order = range(split_plan.repeats)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            futures = [pool.submit(worker, rep) for rep in order]
            outputs = [f.result() for f in futures]
    else:
        outputs = [worker(rep) for rep in order]

    repeats = [out[0] for out in outputs]
    selected_standard = [out[1] for out in outputs]
    selected_rescaled = [out[2] for out in outputs]
    ok = [r for r in repeats if r.failed is None]
    if not ok:
        raise DataError("every repeat failed; see per-repeat reasons")

    # All-tied pairs (e.g. identity relevance) yield no test, not a crash.
    auc_pairs = [(r.auc_standard, r.auc_rescaled) for r in ok]
    try:
        k_auc, m_auc, p1_auc, p2_auc = sign_test(auc_pairs)
    except DataError:
        k_auc, m_auc, p1_auc, p2_auc = 0, 0, None, None
    # Fewer features is the win for the rescaled branch, so compare
    # negated counts.
    nnz_pairs = [(-r.nnz_standard, -r.nnz_rescaled) for r in ok]
    try:
        k_nnz, m_nnz, p1_nnz, p2_nnz = sign_test(nnz_pairs)
    except DataError:
        k_nnz, m_nnz, p1_nnz, p2_nnz = 0, 0, None, None

    mean_auc_s, se_auc_s = _mean_se([r.auc_standard for r in ok])
    mean_auc_r, se_auc_r = _mean_se([r.auc_rescaled for r in ok])
    mean_nnz_s, _ = _mean_se([float(r.nnz_standard) for r in ok])
    mean_nnz_r, _ = _mean_se([float(r.nnz_rescaled) for r in ok])

    return ComparisonReport(
        repeats=repeats,
        mean_auc_standard=mean_auc_s, mean_auc_rescaled=mean_auc_r,
        se_auc_standard=se_auc_s, se_auc_rescaled=se_auc_r,
        mean_nnz_standard=mean_nnz_s, mean_nnz_rescaled=mean_nnz_r,
        auc_wins_rescaled=k_auc, auc_pairs=m_auc,
        auc_p_one_sided=p1_auc, auc_p_two_sided=p2_auc,
        nnz_wins_rescaled=k_nnz, nnz_pairs=m_nnz,
        nnz_p_one_sided=p1_nnz, nnz_p_two_sided=p2_nnz,
        selected_standard=selected_standard,
        selected_rescaled=selected_rescaled)


def _fraction_fields(value: Optional[Fraction]) -> Optional[dict]:
    if value is None:
        return None
    return {"numerator": value.numerator, "denominator": value.denominator,
            "value": float(value)}


def report_to_dict(report: ComparisonReport, task: str = "",
                   config_digest: str = "") -> dict:
    """JSON-ready view of a report; keys are stable and sorted on dump."""
    return {
        "task": task,
        "config_digest": config_digest,
        "repeats": [
            {
                "repeat": r.repeat,
                "auc_standard": r.auc_standard,
                "auc_rescaled": r.auc_rescaled,
                "nnz_standard": r.nnz_standard,
                "nnz_rescaled": r.nnz_rescaled,
                "chosen_c_standard": r.chosen_c_standard,
                "chosen_c_rescaled": r.chosen_c_rescaled,
                "kkt_standard": r.kkt_standard,
                "kkt_rescaled": r.kkt_rescaled,
                "converged_standard": r.converged_standard,
                "converged_rescaled": r.converged_rescaled,
                "n_train": r.n_train,
                "n_train_positives": r.n_train_positives,
                "failed": r.failed,
            }
            for r in report.repeats
        ],
        "aggregates": {
            "mean_auc_standard": report.mean_auc_standard,
            "mean_auc_rescaled": report.mean_auc_rescaled,
            "se_auc_standard": report.se_auc_standard,
            "se_auc_rescaled": report.se_auc_rescaled,
            "mean_nnz_standard": report.mean_nnz_standard,
            "mean_nnz_rescaled": report.mean_nnz_rescaled,
        },
        "sign_tests": {
            "auc": {
                "wins_rescaled": report.auc_wins_rescaled,
                "pairs": report.auc_pairs,
                "p_one_sided": _fraction_fields(report.auc_p_one_sided),
                "p_two_sided": _fraction_fields(report.auc_p_two_sided),
            },
            "nnz": {
                "wins_rescaled": report.nnz_wins_rescaled,
                "pairs": report.nnz_pairs,
                "p_one_sided": _fraction_fields(report.nnz_p_one_sided),
                "p_two_sided": _fraction_fields(report.nnz_p_two_sided),
            },
        },
    }


def write_report_json(report_dict: dict, path) -> None:
    # json emits shortest round-trip floats, so identical values give
    # identical bytes; sorted keys pin the layout.
    text = json.dumps(report_dict, sort_keys=True, indent=2)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text + "\n")


def write_report_csv(report: ComparisonReport, path) -> None:
    """Flat per-repeat rows for plotting."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("repeat,auc_standard,auc_rescaled,nnz_standard,"
                 "nnz_rescaled,chosen_c_standard,chosen_c_rescaled\n")
        for r in report.repeats:
            fh.write(f"{r.repeat},{r.auc_standard!r},{r.auc_rescaled!r},"
                     f"{r.nnz_standard},{r.nnz_rescaled},"
                     f"{r.chosen_c_standard!r},{r.chosen_c_rescaled!r}\n")


def selected_relevance_histogram(report: ComparisonReport,
                                 table: RelevanceTable,
                                 n_bins: int = 10) -> list[tuple[str, int, int]]:
    """Counts of selected features per relevance bin, both branches.

    Selections are pooled over repeats; each bin label is "lo-hi".
    """
    edges = np.linspace(0.0, 1.0, n_bins + 1)

    def counts(per_repeat_selections):
        binned = [0] * n_bins
        for selections in per_repeat_selections:
            for key, _weight in selections:
                rel = table.get(tuple(key))
                idx = min(int(rel * n_bins), n_bins - 1)
                binned[idx] += 1
        return binned

    std = counts(report.selected_standard)
    res = counts(report.selected_rescaled)
    rows = []
    for i in range(n_bins):
        label = f"{edges[i]:.2f}-{edges[i + 1]:.2f}"
        rows.append((label, std[i], res[i]))
    return rows


def write_relevance_histogram_csv(rows, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("relevance_bin,count_standard,count_rescaled\n")
        for label, c_std, c_res in rows:
            fh.write(f"{label},{c_std},{c_res}\n")


def write_distribution_csv(points, path) -> None:
    """Relevance-distribution curve dump: rank_fraction,relevance."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("rank_fraction,relevance\n")
        for rank_fraction, relevance in points:
            fh.write(f"{rank_fraction!r},{relevance!r}\n")
