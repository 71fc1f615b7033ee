"""Sparse patient x feature matrices.

Pipeline: per-patient counts are propagated up the code hierarchies,
log-transformed (1 + ln z), normalized to [0,1] by the per-column
training maximum, filtered of columns present in fewer than three
training patients, and optionally rescaled by per-feature relevance.
Column 0 is always the patient's age.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .codebook import Codebook, CodeSystem
from .cohort import LabeledCohort
from .errors import DataError
from .relevance import AGE_FEATURE, RelevanceTable

FeatureId = tuple[str, str]


@dataclass
class SparseFeatureMatrix:
    """CSR value matrix with aligned column metadata and labels.

    ``columns[0]`` is the age pseudo-feature; every other column is a
    ``(system, code)`` pair with the system spelled as its wire string.
    """

    matrix: sp.csr_matrix
    columns: list[FeatureId]
    labels: np.ndarray

    def __post_init__(self):
        if self.matrix.shape[1] != len(self.columns):
            raise ValueError("column metadata does not match matrix width")
        if self.matrix.shape[0] != len(self.labels):
            raise ValueError("labels do not match matrix height")
        if len(set(self.columns)) != len(self.columns):
            raise ValueError("duplicate column metadata")

    @property
    def n_rows(self) -> int:
        return self.matrix.shape[0]

    @property
    def n_cols(self) -> int:
        return self.matrix.shape[1]

    def column_index(self) -> dict[FeatureId, int]:
        return {key: j for j, key in enumerate(self.columns)}

    def subset_rows(self, indices: Sequence[int]) -> "SparseFeatureMatrix":
        idx = np.asarray(indices, dtype=np.int64)
        return SparseFeatureMatrix(matrix=self.matrix[idx],
                                   columns=list(self.columns),
                                   labels=self.labels[idx])

    def row_values(self, i: int) -> dict[FeatureId, float]:
        start, end = self.matrix.indptr[i], self.matrix.indptr[i + 1]
        return {self.columns[j]: float(v)
                for j, v in zip(self.matrix.indices[start:end],
                                self.matrix.data[start:end])}


def propagate_counts(cb: Codebook,
                     counts: dict[tuple[CodeSystem, str], int],
                     ) -> dict[tuple[CodeSystem, str], int]:
    """Sum each raw count into the code itself and all its ancestors."""
    out: dict[tuple[CodeSystem, str], int] = {}
    for (system, code), count in counts.items():
        for anc in cb.ancestors(system, code):
            key = (system, anc)
            out[key] = out.get(key, 0) + count
    return out


def log_transform(z) -> float:
    """0 stays 0; positive counts become 1 + ln z."""
    if z < 0:
        raise ValueError(f"count must be >= 0, got {z}")
    if z == 0:
        return 0.0
    return 1.0 + math.log(z)


def build_raw_matrix(cohort: LabeledCohort, cb: Codebook) -> SparseFeatureMatrix:
    """Propagated, log-transformed values; age left in raw years.

    Columns are the codes with a nonzero propagated count in at least
    one patient, sorted by (system, code); codes nobody has would be
    removed by the rare filter regardless.
    """
    per_patient: list[dict[FeatureId, float]] = []
    all_keys: set[FeatureId] = set()
    for patient_counts in cohort.counts:
        propagated = propagate_counts(cb, patient_counts)
        row = {(system.value, code): log_transform(count)
               for (system, code), count in propagated.items()}
        all_keys.update(row)
        per_patient.append(row)

    columns: list[FeatureId] = [AGE_FEATURE] + sorted(all_keys)
    col_of = {key: j for j, key in enumerate(columns)}

    indptr = [0]
    indices: list[int] = []
    data: list[float] = []
    for member, row in zip(cohort.members, per_patient):
        entries = [(0, float(member.age))]
        entries.extend((col_of[key], value) for key, value in row.items())
        entries.sort()
        indices.extend(j for j, _ in entries)
        data.extend(v for _, v in entries)
        indptr.append(len(indices))

    matrix = sp.csr_matrix(
        (np.asarray(data, dtype=np.float64),
         np.asarray(indices, dtype=np.int32),
         np.asarray(indptr, dtype=np.int32)),
        shape=(len(per_patient), len(columns)))
    labels = np.asarray([m.label for m in cohort.members], dtype=np.int64)
    return SparseFeatureMatrix(matrix=matrix, columns=columns, labels=labels)


@dataclass
class TransformParams:
    """Training-set statistics needed to normalize any row set."""

    kept_columns: list[FeatureId]
    col_max: dict[FeatureId, float]
    presence: dict[FeatureId, int]
    age_min: float
    age_max: float
    rare_threshold: int


def fit_transform_params(train: SparseFeatureMatrix,
                         rare_threshold: int = 3) -> TransformParams:
    """Column maxima, presence counts and age bounds on training rows.

    Code columns present in fewer than ``rare_threshold`` training
    patients are marked dropped.  The age column is always kept; it is
    min-max scaled rather than max-divided.
    """
    if train.n_rows == 0:
        raise DataError("cannot fit transform parameters on zero rows")
    if rare_threshold < 1:
        raise ValueError("rare threshold must be >= 1")
    csc = train.matrix.tocsc()
    ages = np.asarray(csc[:, 0].todense()).ravel()
    age_min, age_max = float(ages.min()), float(ages.max())

    kept: list[FeatureId] = [AGE_FEATURE]
    col_max: dict[FeatureId, float] = {}
    presence: dict[FeatureId, int] = {}
    for j in range(1, train.n_cols):
        key = train.columns[j]
        start, end = csc.indptr[j], csc.indptr[j + 1]
        values = csc.data[start:end]
        count = int(np.count_nonzero(values))
        presence[key] = count
        if count >= rare_threshold:
            kept.append(key)
            col_max[key] = float(values.max())
    return TransformParams(kept_columns=kept, col_max=col_max,
                           presence=presence, age_min=age_min,
                           age_max=age_max, rare_threshold=rare_threshold)


def apply_transform(rows: SparseFeatureMatrix,
                    params: TransformParams) -> SparseFeatureMatrix:
    """Normalize by training statistics and drop rare columns.

    Values above the training maximum (possible on test rows) stay
    above 1.0; they are not clipped.  Ages are clamped at 0 below so
    matrix values stay nonnegative; a degenerate training age range
    maps every age to 0.5.
    """
    if not params.kept_columns or params.kept_columns[0] != AGE_FEATURE:
        raise ValueError("fitted parameters must keep age as column 0")
    src_index = rows.column_index()
    missing = [key for key in params.kept_columns if key not in src_index]
    if missing:
        raise DataError(f"rows are missing fitted columns, e.g. {missing[0]}")

    col_ids = np.asarray([src_index[key] for key in params.kept_columns],
                         dtype=np.int64)
    matrix = rows.matrix.tocsc()[:, col_ids].tocsr()
    matrix.sort_indices()

    # Kept column 0 is age; everything else divides by its training max.
    divisors = np.asarray(
        [1.0] + [params.col_max[key] for key in params.kept_columns[1:]],
        dtype=np.float64)
    age_mask = matrix.indices == 0
    code_mask = ~age_mask
    matrix.data[code_mask] = (matrix.data[code_mask]
                              / divisors[matrix.indices[code_mask]])
    age_span = params.age_max - params.age_min
    if age_span == 0.0:
        matrix.data[age_mask] = 0.5
    else:
        matrix.data[age_mask] = np.maximum(
            0.0, (matrix.data[age_mask] - params.age_min) / age_span)
    return SparseFeatureMatrix(matrix=matrix,
                               columns=list(params.kept_columns),
                               labels=rows.labels.copy())


def rescale_by_relevance(rows: SparseFeatureMatrix,
                         table: RelevanceTable) -> SparseFeatureMatrix:
    """Multiply every column by its relevance; sparsity is untouched.

    Stored entries keep their positions even when relevance is 0, so
    the standard and rescaled branches share an identical pattern.
    """
    scale = np.asarray([table.get(key) for key in rows.columns],
                       dtype=np.float64)
    matrix = rows.matrix.copy()
    matrix.data = matrix.data * scale[matrix.indices]
    return SparseFeatureMatrix(matrix=matrix, columns=list(rows.columns),
                               labels=rows.labels.copy())


def write_matrix_csv(rows: SparseFeatureMatrix, path) -> None:
    """Sparse triplet dump: row,col,value."""
    coo = rows.matrix.tocoo()
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["row", "col", "value"])
        order = np.lexsort((coo.col, coo.row))
        for k in order:
            writer.writerow([int(coo.row[k]), int(coo.col[k]),
                             repr(float(coo.data[k]))])


def write_columns_csv(rows: SparseFeatureMatrix, path) -> None:
    """Column metadata dump: col,system,code."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["col", "system", "code"])
        for j, (system, code) in enumerate(rows.columns):
            writer.writerow([j, system, code])


def write_labels_csv(rows: SparseFeatureMatrix, path) -> None:
    """Label dump aligned to matrix rows: row,label."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["row", "label"])
        for i, label in enumerate(rows.labels):
            writer.writerow([i, int(label)])
