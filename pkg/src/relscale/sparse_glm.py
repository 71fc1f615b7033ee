"""L1-regularized logistic regression with asymmetric class costs.

Objective:

    min_{w,b}  sum_j lam_j |w_j| + C * sum_i c_i log(1 + exp(-s_i (x_i.w + b)))

with s_i in {-1,+1}, c_i = class_cost_ratio for positives and 1 for
negatives, and an unpenalized intercept.  lam_j is 1 unless per-feature
penalty weights are given (the adaptive-lasso route).

The solver is a proximal Newton method: each outer iteration builds a
quadratic model of the loss, solves it approximately by coordinate
descent, and takes a backtracked Armijo step.  Convergence is defined
by the subgradient (KKT) residual, not by the algorithm.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.sparse as sp
from numba import njit

from .errors import DataError
from .features import SparseFeatureMatrix

DEFAULT_C_GRID = (1e-3, 1e-2, 1e-1, 1.0, 1e1, 1e2, 1e3)


@dataclass
class HyperParams:
    C: float
    class_cost_ratio: float = 1.0
    tolerance: float = 1e-5
    max_iterations: int = 200

    def __post_init__(self):
        if not (self.C > 0 and self.class_cost_ratio > 0
                and self.tolerance > 0 and self.max_iterations > 0):
            raise ValueError("hyperparameters must all be positive")


@dataclass
class ModelWeights:
    w: np.ndarray
    intercept: float
    converged: bool
    n_iterations: int
    objective: float
    kkt_residual: float
    hp: Optional[HyperParams] = None
    columns: Optional[list[tuple[str, str]]] = None


@dataclass
class CVPlan:
    folds: int = 5
    repeats: int = 2
    c_grid: tuple[float, ...] = DEFAULT_C_GRID
    seed: int = 0

    def __post_init__(self):
        if self.folds < 2:
            raise ValueError("need at least 2 folds")
        if self.repeats < 1:
            raise ValueError("need at least 1 repeat")
        grid = tuple(float(c) for c in self.c_grid)
        if not grid or any(c <= 0 for c in grid):
            raise ValueError("C grid must be nonempty and positive")
        if list(grid) != sorted(grid):
            raise ValueError("C grid must be sorted ascending")
        self.c_grid = grid


@njit(cache=True, nogil=True)
def _weighted_loss(f, s, cost, C):
    total = 0.0
    for i in range(f.shape[0]):
        z = s[i] * f[i]
        if z > 0.0:
            total += cost[i] * np.log1p(np.exp(-z))
        else:
            total += cost[i] * (np.log1p(np.exp(z)) - z)
    return C * total


@njit(cache=True, nogil=True)
def _loss_terms(f, s, cost, C, g, h):
    """Fill per-row gradient g and curvature h of the loss wrt f."""
    total = 0.0
    for i in range(f.shape[0]):
        z = s[i] * f[i]
        if z > 0.0:
            ez = np.exp(-z)
            total += cost[i] * np.log1p(ez)
            sig = ez / (1.0 + ez)
        else:
            ez = np.exp(z)
            total += cost[i] * (np.log1p(ez) - z)
            sig = 1.0 / (1.0 + ez)
        wi = C * cost[i]
        g[i] = -wi * s[i] * sig
        h[i] = wi * sig * (1.0 - sig)
    return C * total


@njit(cache=True, nogil=True)
def _penalty(w, lam):
    total = 0.0
    for j in range(w.shape[0]):
        if w[j] != 0.0:
            total += lam[j] * np.abs(w[j])
    return total


@njit(cache=True, nogil=True)
def _kkt_residual(indptr, indices, data, g, w, lam):
    res = 0.0
    for j in range(w.shape[0]):
        gj = 0.0
        for k in range(indptr[j], indptr[j + 1]):
            gj += data[k] * g[indices[k]]
        if w[j] > 0.0:
            r = np.abs(gj + lam[j])
        elif w[j] < 0.0:
            r = np.abs(gj - lam[j])
        else:
            r = np.abs(gj) - lam[j]
            if r < 0.0:
                r = 0.0
        if r > res:
            res = r
    gb = 0.0
    for i in range(g.shape[0]):
        gb += g[i]
    if np.abs(gb) > res:
        res = np.abs(gb)
    return res


@njit(cache=True, nogil=True)
def _fit_kernel(n_rows, n_cols, indptr, indices, data, s, cost, C, lam,
                w, b, tol, max_outer, max_inner):
    """Proximal Newton loop.  Mutates w; returns (b, obj, kkt, iters, ok)."""
    f = np.zeros(n_rows)
    for j in range(n_cols):
        wj = w[j]
        if wj != 0.0:
            for k in range(indptr[j], indptr[j + 1]):
                f[indices[k]] += wj * data[k]
    for i in range(n_rows):
        f[i] += b

    g = np.empty(n_rows)
    h = np.empty(n_rows)
    loss = _loss_terms(f, s, cost, C, g, h)
    obj = loss + _penalty(w, lam)

    d = np.empty(n_cols)
    v = np.empty(n_cols)
    r = np.empty(n_rows)
    grad = np.empty(n_cols)
    curv = np.empty(n_cols)
    f_trial = np.empty(n_rows)

    kkt = _kkt_residual(indptr, indices, data, g, w, lam)
    converged = kkt <= tol
    outer = 0
    while not converged and outer < max_outer:
        outer += 1
        # Quadratic model pieces at the current point.
        for j in range(n_cols):
            gj = 0.0
            aj = 0.0
            for k in range(indptr[j], indptr[j + 1]):
                i = indices[k]
                gj += data[k] * g[i]
                aj += h[i] * data[k] * data[k]
            grad[j] = gj
            curv[j] = aj + 1e-12
        curv_b = 1e-12
        grad_b = 0.0
        for i in range(n_rows):
            curv_b += h[i]
            grad_b += g[i]

        # Approximate subproblem solve by cyclic coordinate descent.
        for j in range(n_cols):
            d[j] = 0.0
            v[j] = w[j]
        db = 0.0
        for i in range(n_rows):
            r[i] = 0.0
        moved = False
        first_measure = -1.0
        for _sweep in range(max_inner):
            measure = 0.0
            gb = grad_b
            for i in range(n_rows):
                gb += h[i] * r[i]
            step = -gb / curv_b
            if step != 0.0:
                db += step
                for i in range(n_rows):
                    r[i] += step
                moved = True
                m = np.abs(step) * np.sqrt(curv_b)
                if m > measure:
                    measure = m
            for j in range(n_cols):
                lj = lam[j]
                if not np.isfinite(lj):
                    continue
                aj = curv[j]
                gj = grad[j]
                for k in range(indptr[j], indptr[j + 1]):
                    i = indices[k]
                    gj += h[i] * data[k] * r[i]
                u = v[j]
                unew = u - gj / aj
                t = lj / aj
                if unew > t:
                    unew -= t
                elif unew < -t:
                    unew += t
                else:
                    unew = 0.0
                step = unew - u
                if step != 0.0:
                    v[j] = unew
                    d[j] += step
                    for k in range(indptr[j], indptr[j + 1]):
                        r[indices[k]] += step * data[k]
                    moved = True
                    m = np.abs(step) * np.sqrt(aj)
                    if m > measure:
                        measure = m
            if first_measure < 0.0:
                first_measure = measure
            if measure <= 0.01 * first_measure or measure == 0.0:
                break
        if not moved:
            break

        # Expected decrease of the full step; must be a descent direction.
        delta = grad_b * db
        for j in range(n_cols):
            if d[j] != 0.0:
                delta += grad[j] * d[j]
                delta += lam[j] * (np.abs(v[j]) - np.abs(w[j]))
        if delta >= 0.0:
            break

        # Armijo backtracking on the composite objective.
        alpha = 1.0
        accepted = False
        for _ls in range(60):
            for i in range(n_rows):
                f_trial[i] = f[i] + alpha * r[i]
            trial = _weighted_loss(f_trial, s, cost, C)
            pen = 0.0
            for j in range(n_cols):
                if alpha == 1.0:
                    vj = v[j]
                else:
                    vj = w[j] + alpha * d[j]
                if vj != 0.0:
                    pen += lam[j] * np.abs(vj)
            if trial + pen <= obj + 0.01 * alpha * delta:
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            break

        if alpha == 1.0:
            for j in range(n_cols):
                w[j] = v[j]
        else:
            for j in range(n_cols):
                if d[j] != 0.0:
                    w[j] = w[j] + alpha * d[j]
        b += alpha * db
        for i in range(n_rows):
            f[i] += alpha * r[i]
        loss = _loss_terms(f, s, cost, C, g, h)
        obj = loss + _penalty(w, lam)
        kkt = _kkt_residual(indptr, indices, data, g, w, lam)
        converged = kkt <= tol

    return b, obj, kkt, outer, converged


def _as_csc(X) -> sp.csc_matrix:
    if isinstance(X, SparseFeatureMatrix):
        X = X.matrix
    csc = sp.csc_matrix(X, dtype=np.float64)
    csc.sort_indices()
    return csc


def class_cost_ratio(y) -> float:
    """Negatives over positives; raises on single-class labels."""
    y = np.asarray(y)
    n_pos = int(np.sum(y == 1))
    n_neg = int(np.sum(y == 0))
    if n_pos == 0 or n_neg == 0:
        raise DataError("class cost ratio needs both classes present")
    return n_neg / n_pos


def fit(X, y, hp: HyperParams,
        penalty_weights: Optional[np.ndarray] = None,
        warm_start: Optional[tuple[np.ndarray, float]] = None) -> ModelWeights:
    """Fit the weighted-L1 logistic objective.

    Non-convergence within ``hp.max_iterations`` outer iterations is
    not an exception: the result carries the best iterate with
    ``converged=False`` and its KKT residual.
    """
    columns = X.columns if isinstance(X, SparseFeatureMatrix) else None
    csc = _as_csc(X)
    n_rows, n_cols = csc.shape
    y = np.asarray(y)
    if y.shape[0] != n_rows:
        raise ValueError("label count does not match row count")
    if not np.all(np.isfinite(csc.data)):
        raise DataError("feature matrix contains non-finite values")
    n_pos = int(np.sum(y == 1))
    if n_pos == 0 or n_pos == n_rows:
        raise DataError("fit needs at least one example of each class")

    s = np.where(y == 1, 1.0, -1.0)
    cost = np.where(y == 1, float(hp.class_cost_ratio), 1.0)
    if penalty_weights is None:
        lam = np.ones(n_cols)
    else:
        lam = np.asarray(penalty_weights, dtype=np.float64)
        if lam.shape != (n_cols,):
            raise ValueError("penalty weights must have one entry per column")
        if np.any(lam < 0) or np.any(np.isnan(lam)):
            raise ValueError("penalty weights must be nonnegative")

    if warm_start is None:
        w = np.zeros(n_cols)
        b = 0.0
    else:
        w0, b0 = warm_start
        w = np.array(w0, dtype=np.float64, copy=True)
        if w.shape != (n_cols,):
            raise ValueError("warm start has wrong dimension")
        b = float(b0)

    b, obj, kkt, iters, converged = _fit_kernel(
        n_rows, n_cols,
        csc.indptr.astype(np.int64), csc.indices.astype(np.int64), csc.data,
        s, cost, float(hp.C), lam, w, b,
        float(hp.tolerance), int(hp.max_iterations), 50)
    return ModelWeights(w=w, intercept=float(b), converged=bool(converged),
                        n_iterations=int(iters), objective=float(obj),
                        kkt_residual=float(kkt), hp=hp, columns=columns)


def predict_scores(model: ModelWeights, X) -> np.ndarray:
    """Linear scores w.x + b (monotone in probability)."""
    mat = X.matrix if isinstance(X, SparseFeatureMatrix) else X
    if mat.shape[1] != model.w.shape[0]:
        raise ValueError(
            f"model has {model.w.shape[0]} columns, data has {mat.shape[1]}")
    return np.asarray(mat @ model.w).ravel() + model.intercept


def selected_features(model: ModelWeights) -> list[tuple[object, float]]:
    """Nonzero-weight columns, largest |weight| first."""
    out = []
    for j in np.flatnonzero(model.w):
        key = model.columns[j] if model.columns is not None else int(j)
        out.append((key, float(model.w[j])))
    out.sort(key=lambda item: (-abs(item[1]), str(item[0])))
    return out


def stratified_fold_ids(y, folds: int, rng: np.random.Generator) -> np.ndarray:
    """Per-row fold ids with each class dealt round-robin after a shuffle."""
    y = np.asarray(y)
    ids = np.empty(y.shape[0], dtype=np.int64)
    for cls in (0, 1):
        members = np.flatnonzero(y == cls)
        if members.shape[0] < folds:
            raise DataError(
                f"class {cls} has {members.shape[0]} examples, "
                f"fewer than {folds} folds")
        perm = rng.permutation(members)
        for pos, row in enumerate(perm):
            ids[row] = pos % folds
    return ids


def cross_validate_C(X, y, plan: CVPlan, hp_template: HyperParams,
                     ) -> tuple[float, dict[float, float]]:
    """Pick C by mean validation AUC over repeats x folds; ties take the
    smallest C.  The grid is swept ascending with warm starts."""
    from .evaluate import auc

    mat = X.matrix if isinstance(X, SparseFeatureMatrix) else sp.csr_matrix(X)
    y = np.asarray(y)
    sums = {c: 0.0 for c in plan.c_grid}
    for rep in range(plan.repeats):
        rng = np.random.default_rng(
            np.random.SeedSequence(plan.seed, spawn_key=(rep,)))
        fold_ids = stratified_fold_ids(y, plan.folds, rng)
        for fold in range(plan.folds):
            val_idx = np.flatnonzero(fold_ids == fold)
            tr_idx = np.flatnonzero(fold_ids != fold)
            Xtr, ytr = mat[tr_idx], y[tr_idx]
            Xval, yval = mat[val_idx], y[val_idx]
            warm = None
            for c in plan.c_grid:
                hp = HyperParams(C=c,
                                 class_cost_ratio=hp_template.class_cost_ratio,
                                 tolerance=hp_template.tolerance,
                                 max_iterations=hp_template.max_iterations)
                model = fit(Xtr, ytr, hp, warm_start=warm)
                warm = (model.w, model.intercept)
                scores = np.asarray(Xval @ model.w).ravel() + model.intercept
                sums[c] += auc(scores, yval)
    n_fits = plan.repeats * plan.folds
    means = {c: sums[c] / n_fits for c in plan.c_grid}
    best_c = plan.c_grid[0]
    for c in plan.c_grid:
        if means[c] > means[best_c]:
            best_c = c
    return best_c, means


def write_model_csv(model: ModelWeights, path) -> None:
    """Dump nonzero weights as col,system,code,weight with a diagnostics
    comment header."""
    hp = model.hp
    c_text = repr(float(hp.C)) if hp else "NA"
    ratio_text = repr(float(hp.class_cost_ratio)) if hp else "NA"
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"# intercept={model.intercept!r}"
                 f" C={c_text}"
                 f" class_cost_ratio={ratio_text}"
                 f" objective={model.objective!r}"
                 f" kkt_residual={model.kkt_residual!r}"
                 f" converged={model.converged}\n")
        fh.write("col,system,code,weight\n")
        for j in np.flatnonzero(model.w):
            if model.columns is not None:
                system, code = model.columns[j]
            else:
                system, code = "", ""
            fh.write(f"{j},{system},{code},{float(model.w[j])!r}\n")
