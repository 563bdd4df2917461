"""Double cross-validation: outer leave-one-out for validation, inner leave-one-out for tuning.

For every sample i the classifier is rebuilt from scratch on the remaining
n - 1 samples, with its tuning value (k or gamma) chosen by a full
leave-one-out on those n - 1 samples only. Nothing computed from sample i
enters the rule that classifies it.

Inner selection minimizes the misclassification count, then the summed
squared Brier terms, and finally prefers the most shrinkage (smallest k,
largest gamma).
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import lda
from ._stats import mode
from .errors import CrossValidationError, ModelError
from .metrics import build_report

METHOD_ALIASES = {
    "mp": lda.MOORE_PENROSE,
    "pca": lda.PCA_K,
    "mp-euclid": lda.MP_EUCLID,
    "pca-euclid": lda.PCA_K_EUCLID,
    "ridge": lda.RIDGE,
}
DEFAULT_RIDGE_GRID = tuple(float(g) for g in np.logspace(-6, 0, 13))
STRATEGIES = ("loo-on-full", "mode-k", "ensemble")


def resolve_kind(method):
    kind = METHOD_ALIASES.get(method, method)
    if kind not in lda.KINDS:
        raise CrossValidationError(
            f"unknown method {method!r}; choose from {sorted(METHOD_ALIASES)}")
    return kind


@dataclass(frozen=True)
class TuningGrid:
    kind: str
    values: tuple

    def __post_init__(self):
        kind = resolve_kind(self.kind)
        object.__setattr__(self, "kind", kind)
        values = tuple(self.values)
        if not values:
            raise CrossValidationError("tuning grid is empty")
        if kind in lda.COMPONENT_KINDS:
            if any(v is None or int(v) != v or v < 1 for v in values):
                raise CrossValidationError("component counts must be integers >= 1")
            values = tuple(int(v) for v in values)
        elif kind == lda.RIDGE:
            if any(v is None or not 0 < v <= 1 for v in values):
                raise CrossValidationError("ridge values must lie in (0, 1]")
            values = tuple(float(v) for v in values)
        elif values != (None,):
            raise CrossValidationError(f"{kind} takes no tuning values")
        if len(set(values)) != len(values):
            raise CrossValidationError("tuning grid has duplicate values")
        object.__setattr__(self, "values", values)

    @classmethod
    def default(cls, method, n, n_groups=2):
        """k in 1..n-G-2 (the rank bound of an inner training set) or 13 ridge values."""
        kind = resolve_kind(method)
        if kind in lda.COMPONENT_KINDS:
            return cls(kind, tuple(range(1, max(1, n - n_groups - 2) + 1)))
        if kind == lda.RIDGE:
            return cls(kind, DEFAULT_RIDGE_GRID)
        return cls(kind, (None,))

    @classmethod
    def parse(cls, method, text, n, n_groups=2):
        """Grid from CLI text: ``auto``, ``a:b`` (inclusive integer range) or ``v1,v2,...``."""
        kind = resolve_kind(method)
        if text is None or text == "auto" or kind not in (*lda.COMPONENT_KINDS, lda.RIDGE):
            return cls.default(kind, n, n_groups)
        try:
            if ":" in text:
                a, b = (int(t) for t in text.split(":"))
                return cls(kind, tuple(range(a, b + 1)))
            return cls(kind, tuple(float(t) for t in text.split(",") if t.strip()))
        except ValueError:
            raise CrossValidationError(f"cannot parse grid {text!r}") from None

    def preference(self, value):
        """Larger means more shrinkage; used to break ties."""
        if self.kind in lda.COMPONENT_KINDS:
            return -value
        if self.kind == lda.RIDGE:
            return value
        return 0

    def spec(self, value):
        return lda.RegularizerSpec.of(self.kind, value)


@dataclass
class DoubleCvResult:
    report: object
    chosen: list
    grid: TuningGrid
    classifiers: list | None = None


# -- building blocks -----------------------------------------------------------

def _fit_model(X, labels, n_groups):
    try:
        return lda.pooled_eigen(X, labels, n_groups=n_groups)
    except ModelError as exc:
        raise CrossValidationError(f"degenerate training set: {exc.args[0]}") from None


def _posteriors(model, x, kind, values, priors):
    D = lda.distance_profile(model, x[None, :], kind, values)
    return lda.posterior_from_distances(D, priors)[0]


def _check_groups(labels, n_groups, minimum, what):
    counts = np.bincount(labels, minlength=n_groups + 1)[1:n_groups + 1]
    if np.any(counts < minimum):
        raise CrossValidationError(
            f"{what} needs >= {minimum} samples per group, got counts {counts.tolist()}")


def loo_profile(X, labels, grid: TuningGrid, priors=None, n_groups=2):
    """Leave-one-out posteriors for every grid value: array (n, G, len(grid))."""
    X = np.asarray(X, dtype=float)
    labels = np.asarray(labels, dtype=int)
    priors = lda._check_priors(priors, n_groups)
    n = labels.size
    out = np.empty((n, n_groups, len(grid.values)))
    keep = np.ones(n, dtype=bool)
    for j in range(n):
        keep[j] = False
        model = _fit_model(X[keep], labels[keep], n_groups)
        keep[j] = True
        out[j] = _posteriors(model, X[j], grid.kind, grid.values, priors)
    return out


def select_value(P, labels, grid: TuningGrid):
    """Pick from LOO posteriors ``P`` (n, G, V): fewest errors, then Brier, then most shrinkage."""
    labels = np.asarray(labels, dtype=int)
    alloc = P.argmax(axis=1) + 1
    errors = (alloc != labels[:, None]).sum(axis=0)
    p_true = P[np.arange(labels.size), labels - 1, :]
    sq = ((1.0 - p_true) ** 2).sum(axis=0)
    best = min(range(len(grid.values)),
               key=lambda v: (errors[v], sq[v], -grid.preference(grid.values[v]), v))
    return grid.values[best]


def inner_tune(X, labels, grid: TuningGrid, priors=None, n_groups=2):
    """Tuning value chosen by leave-one-out on this training set alone."""
    if len(grid.values) == 1:
        return grid.values[0]
    labels = np.asarray(labels, dtype=int)
    _check_groups(labels, n_groups, 2, "inner tuning")
    return select_value(loo_profile(X, labels, grid, priors, n_groups), labels, grid)


def _clamped_spec(grid, value, model):
    if grid.kind in lda.COMPONENT_KINDS:
        value = min(value, model.rank)
    return grid.spec(value)


def _outer(X, labels, tests, rows, grid, priors, n_groups, threads, keep_models):
    """Validated posteriors of ``tests[k]`` with sample ``rows[k]`` held out of calibration."""
    priors = lda._check_priors(priors, n_groups)
    n = labels.size

    def fold(k):
        keep = np.ones(n, dtype=bool)
        keep[rows[k]] = False
        Xt, yt = X[keep], labels[keep]
        value = inner_tune(Xt, yt, grid, priors, n_groups)
        model = _fit_model(Xt, yt, n_groups)
        post = _posteriors(model, tests[k], grid.kind, (value,), priors)[:, 0]
        clf = lda.Classifier(model, _clamped_spec(grid, value, model), priors) if keep_models else None
        return value, post, clf

    idx = range(len(rows))
    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(fold, idx))
    else:
        results = [fold(k) for k in idx]
    chosen = [r[0] for r in results]
    P = np.vstack([r[1] for r in results])
    models = [r[2] for r in results] if keep_models else None
    return chosen, P, models


# -- public operations -----------------------------------------------------------

def double_cv(data, grid: TuningGrid, priors=None, threads=1, keep_models=False) -> DoubleCvResult:
    """Double cross-validated posteriors and summary measures for every sample."""
    X, labels = data.X, data.labels
    if data.n < 3:
        raise CrossValidationError("double cross-validation needs n >= 3")
    _check_groups(labels, data.n_groups, 2, "double cross-validation")
    rows = np.arange(data.n)
    chosen, P, models = _outer(X, labels, X, rows, grid, priors, data.n_groups, threads, keep_models)
    report = build_report(data.ids, labels, P, chosen, method=grid.kind)
    return DoubleCvResult(report=report, chosen=chosen, grid=grid, classifiers=models)


def plain_loo(data, kind, value=None, priors=None):
    """Ordinary leave-one-out with a fixed regularizer."""
    grid = TuningGrid(kind, (value,))
    P = loo_profile(data.X, data.labels, grid, priors, data.n_groups)[:, :, 0]
    return build_report(data.ids, data.labels, P, [grid.values[0]] * data.n, method=grid.kind)


def tuned_loo(data, grid: TuningGrid, priors=None):
    """Leave-one-out at the value tuned on that same leave-one-out (optimistically biased)."""
    P = loo_profile(data.X, data.labels, grid, priors, data.n_groups)
    value = select_value(P, data.labels, grid)
    v = grid.values.index(value)
    return build_report(data.ids, data.labels, P[:, :, v], [value] * data.n,
                        method=grid.kind, extra={"tuned_on_full_data": True})


def replicate_swap_eval(pair, grid: TuningGrid, priors=None, threads=1):
    """Calibrate on week 1, classify each remeasured sample by its week-2 vector."""
    w1, w2 = pair.week1, pair.week2
    if w2.n == 0:
        raise CrossValidationError("no week-2 samples to evaluate")
    if w1.p != w2.p:
        raise CrossValidationError(f"week 1 has {w1.p} bins, week 2 has {w2.p}")
    _check_groups(w1.labels, w1.n_groups, 2, "double cross-validation")
    rows = np.asarray(pair.week1_index, dtype=int)
    chosen, P, _ = _outer(w1.X, w1.labels, w2.X, rows, grid, priors, w1.n_groups, threads, False)
    extra = {"n_evaluated": int(w2.n), "n_week1": int(w1.n),
             "missing_ids": list(pair.missing_ids)}
    return build_report(w2.ids, w1.labels[rows], P, chosen, method=grid.kind, extra=extra)


class EnsembleClassifier:
    """Mean posterior over the classifiers calibrated in the outer folds."""

    def __init__(self, members):
        if not members:
            raise CrossValidationError("ensemble needs at least one classifier")
        self.members = list(members)

    def posterior(self, X):
        X = np.atleast_2d(X)
        return np.mean([m.posterior(X) for m in self.members], axis=0)

    def predict(self, X):
        return self.posterior(X).argmax(axis=1) + 1


def final_classifier(data, grid: TuningGrid, strategy="loo-on-full", result=None, priors=None):
    """Rule for allocating future samples.

    ``loo-on-full`` tunes by leave-one-out on all data; ``mode-k`` refits with
    the most frequent inner choice of a completed double CV; ``ensemble``
    averages the posteriors of that run's retained fold classifiers.
    """
    if strategy not in STRATEGIES:
        raise CrossValidationError(f"unknown strategy {strategy!r}; choose from {STRATEGIES}")
    if strategy == "ensemble":
        if result is None or not result.classifiers:
            raise CrossValidationError("ensemble needs a double CV run with keep_models=True")
        return EnsembleClassifier(result.classifiers)
    if strategy == "loo-on-full":
        value = inner_tune(data.X, data.labels, grid, priors, data.n_groups)
    else:
        if result is None:
            raise CrossValidationError("mode-k needs a completed double CV result")
        value = mode(result.chosen, prefer=lambda vs: max(vs, key=grid.preference))
    model = _fit_model(data.X, data.labels, data.n_groups)
    return lda.Classifier(model, _clamped_spec(grid, value, model), priors)
