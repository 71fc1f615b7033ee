"""Command line interface.

Subcommands mirror the pipeline stages: synth -> relevance ->
featurize -> train -> experiment, each stage's output consumable by
the next.  Exit codes: 0 success, 2 configuration error, 3 data
error, 4 convergence failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys

from . import __version__
from .codebook import CodeSystem, load_codebook
from .cohort import build_cohort, cohort_summary, load_records
from .embeddings import load_text_embeddings
from .errors import ConfigError, ConvergenceError, DataError, RelscaleError
from .evaluate import (report_to_dict, run_comparison,
                       selected_relevance_histogram, write_distribution_csv,
                       write_relevance_histogram_csv, write_report_csv,
                       write_report_json)
from .features import (apply_transform, build_raw_matrix,
                       fit_transform_params, rescale_by_relevance,
                       write_columns_csv, write_labels_csv, write_matrix_csv)
from .relevance import (build_relevance_table, default_stoplist,
                        identity_relevance_table, load_stoplist,
                        relevance_distribution, write_relevance_csv)
from .runconfig import (RunConfig, config_digest, load_generator_config,
                        load_run_config)
from .sparse_glm import (HyperParams, class_cost_ratio, cross_validate_C,
                         fit, write_model_csv)
from .synthgen import generate_dataset


def _require_file(label: str, path: str) -> None:
    if not os.path.exists(path):
        raise ConfigError(f"{label} file not found: {path}")


def _sha256(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _load_relevance_inputs(cfg: RunConfig):
    """Cohort, raw matrix and relevance table for a run config."""
    records = load_records(cfg.records)
    cb = load_codebook(cfg.codebook)
    cohort = build_cohort(records, cfg.cohort_spec(), cb)
    raw = build_raw_matrix(cohort, cb)
    if cfg.identity_relevance:
        table = identity_relevance_table(raw.columns)
    else:
        store = load_text_embeddings(cfg.embeddings)
        stoplist = (load_stoplist(cfg.stoplist) if cfg.stoplist
                    else default_stoplist())
        feature_ids = [(CodeSystem.parse(system), code)
                       for system, code in raw.columns[1:]]
        table = build_relevance_table(cb, store, feature_ids, cfg.keyword,
                                      p=cfg.power, stoplist=stoplist,
                                      age_relevance=cfg.age_relevance)
    return cohort, raw, table


def cmd_synth(args) -> int:
    _require_file("config", args.config)
    cfg = load_generator_config(args.config)
    paths, truth = generate_dataset(cfg, args.out)
    manifest = {
        "version": __version__,
        "master_seed": cfg.master_seed,
        "config_digest": config_digest(args.config),
        "files": {name: {"path": path, "sha256": _sha256(path)}
                  for name, path in sorted(paths.items())},
        "n_patients": cfg.n_patients,
        "realized_prevalence": truth.realized_prevalence,
        "intercept": truth.intercept,
        "signal_codes": {code: truth.effects[code]
                         for code in sorted(truth.effects)},
        "predictive_codes": truth.predictive_codes,
    }
    print(json.dumps(manifest, sort_keys=True, indent=2))
    return 0


def cmd_relevance(args) -> int:
    _require_file("codebook", args.codebook)
    _require_file("embeddings", args.embeddings)
    if args.stoplist:
        _require_file("stoplist", args.stoplist)
    if not args.keyword:
        raise ConfigError("keyword must be nonempty")
    cb = load_codebook(args.codebook)
    store = load_text_embeddings(args.embeddings)
    stoplist = load_stoplist(args.stoplist) if args.stoplist \
        else default_stoplist()
    table = build_relevance_table(cb, store, cb.codes(), args.keyword,
                                  p=args.power, stoplist=stoplist,
                                  include_age=False)
    write_relevance_csv(table, args.out, provenance={"version": __version__})
    print(f"wrote {len(table)} relevance scores to {args.out}")
    return 0


def cmd_featurize(args) -> int:
    _require_file("config", args.config)
    cfg = load_run_config(args.config)
    out_dir = args.out_dir or cfg.out_dir
    records = load_records(cfg.records)
    cb = load_codebook(cfg.codebook)
    cohort = build_cohort(records, cfg.cohort_spec(), cb)
    raw = build_raw_matrix(cohort, cb)
    # Debug dump: the transform is fitted on every row, unlike the
    # experiment command where fitting happens inside each split.
    params = fit_transform_params(raw, rare_threshold=cfg.rare_threshold)
    matrix = apply_transform(raw, params)
    os.makedirs(out_dir, exist_ok=True)
    write_matrix_csv(matrix, os.path.join(out_dir, "matrix.csv"))
    write_columns_csv(matrix, os.path.join(out_dir, "columns.csv"))
    write_labels_csv(matrix, os.path.join(out_dir, "labels.csv"))
    manifest = {
        "version": __version__,
        "master_seed": cfg.master_seed,
        "config_digest": cfg.digest,
        "n_rows": matrix.n_rows,
        "n_cols": matrix.n_cols,
        "cohort": dict(zip(("n_total", "n_positive", "prevalence"),
                           cohort_summary(cohort))),
    }
    with open(os.path.join(out_dir, "featurize_manifest.json"), "w",
              encoding="utf-8", newline="") as fh:
        fh.write(json.dumps(manifest, sort_keys=True, indent=2) + "\n")
    print(f"wrote {matrix.n_rows}x{matrix.n_cols} matrix to {out_dir}")
    return 0


def cmd_train(args) -> int:
    _require_file("config", args.config)
    cfg = load_run_config(args.config)
    _cohort, raw, table = _load_relevance_inputs(cfg)
    params = fit_transform_params(raw, rare_threshold=cfg.rare_threshold)
    matrix = apply_transform(raw, params)
    if args.branch == "rescaled":
        matrix = rescale_by_relevance(matrix, table)
    ratio = class_cost_ratio(matrix.labels)
    hp_template = HyperParams(C=1.0, class_cost_ratio=ratio,
                              tolerance=cfg.tolerance,
                              max_iterations=cfg.max_iterations)
    if args.c is not None:
        best_c = args.c
    else:
        plan = cfg.cv_plan()
        plan.seed = cfg.master_seed
        best_c, _ = cross_validate_C(matrix, matrix.labels, plan, hp_template)
    hp = HyperParams(C=best_c, class_cost_ratio=ratio,
                     tolerance=cfg.tolerance,
                     max_iterations=cfg.max_iterations)
    model = fit(matrix, matrix.labels, hp)
    if not model.converged:
        raise ConvergenceError(
            f"fit did not reach tolerance {cfg.tolerance} within "
            f"{cfg.max_iterations} iterations (residual "
            f"{model.kkt_residual:.3e})")
    os.makedirs(cfg.out_dir, exist_ok=True)
    out_path = args.out or os.path.join(cfg.out_dir, "model.csv")
    write_model_csv(model, out_path)
    nnz = int((model.w != 0).sum())
    print(f"trained {args.branch} model: C={best_c} nnz={nnz} "
          f"objective={model.objective:.6f} kkt={model.kkt_residual:.2e}")
    return 0


def cmd_experiment(args) -> int:
    _require_file("config", args.config)
    cfg = load_run_config(args.config)
    _cohort, raw, table = _load_relevance_inputs(cfg)
    report = run_comparison(raw, table, cfg.split_plan(),
                            downsample_spec=cfg.downsample_spec(),
                            cv_plan=cfg.cv_plan(),
                            hp_tolerance=cfg.tolerance,
                            max_iterations=cfg.max_iterations,
                            rare_threshold=cfg.rare_threshold,
                            threads=args.threads)
    os.makedirs(cfg.out_dir, exist_ok=True)
    task = os.path.splitext(os.path.basename(args.config))[0]
    payload = report_to_dict(report, task=task, config_digest=cfg.digest)
    payload["master_seed"] = cfg.master_seed
    payload["version"] = __version__
    write_report_json(payload, os.path.join(cfg.out_dir, "report.json"))
    write_report_csv(report, os.path.join(cfg.out_dir, "report.csv"))
    hist = selected_relevance_histogram(report, table)
    write_relevance_histogram_csv(
        hist, os.path.join(cfg.out_dir, "selected_relevance.csv"))
    write_distribution_csv(
        relevance_distribution(table),
        os.path.join(cfg.out_dir, "relevance_distribution.csv"))
    p_text = "n/a"
    if report.auc_p_one_sided is not None:
        p_text = f"{float(report.auc_p_one_sided):.5f}"
    print(f"experiment {task}: mean AUC standard="
          f"{report.mean_auc_standard:.4f} rescaled="
          f"{report.mean_auc_rescaled:.4f} sign-test p={p_text}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="relscale",
        description="Estimate feature relevance from code descriptions and "
                    "compare standard vs relevance-rescaled sparse models.")
    parser.add_argument("--version", action="version",
                        version=f"relscale {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("relevance", help="score a codebook against a keyword")
    p.add_argument("--codebook", required=True)
    p.add_argument("--embeddings", required=True)
    p.add_argument("--stoplist", default=None)
    p.add_argument("--keyword", required=True)
    p.add_argument("--power", type=float, default=10.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_relevance)

    p = sub.add_parser("featurize", help="dump the normalized feature matrix")
    p.add_argument("--config", required=True)
    p.add_argument("--out-dir", default=None)
    p.set_defaults(func=cmd_featurize)

    p = sub.add_parser("train", help="fit one model on the full cohort")
    p.add_argument("--config", required=True)
    p.add_argument("--branch", choices=("standard", "rescaled"),
                   default="rescaled")
    p.add_argument("--c", type=float, default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("experiment",
                       help="run the paired standard-vs-rescaled protocol")
    p.add_argument("--config", required=True)
    p.add_argument("--threads", type=int, default=1)
    p.set_defaults(func=cmd_experiment)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except ConvergenceError as exc:
        print(f"convergence failure: {exc}", file=sys.stderr)
        return 4
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except RelscaleError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
