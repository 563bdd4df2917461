"""Fisher linear discrimination with a regularized pooled covariance.

The pooled within-group dispersion ``S = Q diag(lam) Q^T`` is decomposed once
per training set. Every distance is then evaluated in component-score space,
``z = Q^T (x - mean_g)``, so no p x p inverse is ever formed. When p exceeds
the number of training samples the decomposition goes through the n x n
inner-product matrix of the group-centered data (dual form).

Regularizer kinds:

``moore-penrose``         sum_i z_i^2 / lam_i over all r components
``pca-k``                 the same over the first k components
``ridge``                 sum_i z_i^2 / ((1-gamma) lam_i + gamma) + |z_perp|^2 / gamma
``moore-penrose-euclid``  sum_i z_i^2 over all r components
``pca-k-euclid``          sum_i z_i^2 over the first k components
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import ModelError

MOORE_PENROSE = "moore-penrose"
PCA_K = "pca-k"
RIDGE = "ridge"
MP_EUCLID = "moore-penrose-euclid"
PCA_K_EUCLID = "pca-k-euclid"
KINDS = (MOORE_PENROSE, PCA_K, RIDGE, MP_EUCLID, PCA_K_EUCLID)
COMPONENT_KINDS = (PCA_K, PCA_K_EUCLID)
EUCLID_KINDS = (MP_EUCLID, PCA_K_EUCLID)

RANK_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class EigenModel:
    """Pooled within-group eigendecomposition of one training set.

    In the dual form ``_basis`` holds ``(Xc, U / sqrt(d))`` so that scores are
    ``((x - mean) @ Xc.T) @ U / sqrt(d)``; in the primal form it holds ``Q``.
    """

    means: np.ndarray
    variances: np.ndarray
    df: int
    form: str
    _basis: tuple

    @property
    def rank(self):
        return self.variances.size

    @property
    def n_groups(self):
        return self.means.shape[0]

    @property
    def p(self):
        return self.means.shape[1]

    @cached_property
    def loadings(self):
        """p x r matrix of orthonormal component weights."""
        if self.form == "primal":
            return self._basis[0]
        Xc, W = self._basis
        return Xc.T @ W

    def scores(self, V):
        """Component scores of already-centered rows ``V`` (t x p)."""
        if self.form == "primal":
            return V @ self._basis[0]
        Xc, W = self._basis
        return (V @ Xc.T) @ W


def pooled_eigen(X, labels, n_groups=None, form="auto", tol=RANK_TOL) -> EigenModel:
    """Eigendecomposition of ``S = sum_g sum_{i in g} (x_i - mean_g)^T (x_i - mean_g) / (n - G)``.

    Eigenvalues below ``tol * lam_1`` are dropped. ``form`` is ``"dual"``,
    ``"primal"`` or ``"auto"`` (dual when p > n).
    """
    X = np.asarray(X, dtype=float)
    labels = np.asarray(labels, dtype=int)
    n, p = X.shape
    G = int(n_groups if n_groups is not None else labels.max())
    if labels.shape != (n,):
        raise ModelError("label vector does not match the data")
    counts = np.bincount(labels, minlength=G + 1)[1:G + 1]
    if labels.min() < 1 or labels.max() > G:
        raise ModelError(f"labels must lie in 1..{G}")
    if np.any(counts == 0):
        raise ModelError(f"group(s) {[g + 1 for g in np.flatnonzero(counts == 0)]} are empty")
    df = n - G
    if df < 1:
        raise ModelError("no within-group degrees of freedom (rank 0)")
    means = np.vstack([X[labels == g].mean(axis=0) for g in range(1, G + 1)])
    Xc = X - means[labels - 1]

    if form == "auto":
        form = "dual" if p > n else "primal"
    if form == "dual":
        d, U = np.linalg.eigh(Xc @ Xc.T)
    elif form == "primal":
        d, U = np.linalg.eigh(Xc.T @ Xc)
    else:
        raise ModelError(f"unknown eigendecomposition form {form!r}")
    d, U = d[::-1], U[:, ::-1]
    scale = np.einsum("ij,ij->", X, X)
    if not d[0] > 1e-24 * max(scale, np.finfo(float).tiny):
        raise ModelError("rank 0: all spectra are identical within their groups")
    r = int(np.sum(d > tol * d[0]))
    d, U = d[:r], U[:, :r]
    basis = (Xc, U / np.sqrt(d)) if form == "dual" else (U,)
    return EigenModel(means=means, variances=d / df, df=df, form=form, _basis=basis)


@dataclass(frozen=True)
class RegularizerSpec:
    kind: str
    k: int | None = None
    gamma: float | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ModelError(f"unknown regularizer kind {self.kind!r}; choose from {KINDS}")
        if self.kind in COMPONENT_KINDS:
            if self.k is None or int(self.k) != self.k or self.k < 1:
                raise ModelError(f"{self.kind} needs a component count k >= 1")
        if self.kind == RIDGE:
            if self.gamma is None or not 0 < self.gamma <= 1:
                raise ModelError("ridge needs 0 < gamma <= 1")

    @property
    def value(self):
        """The tuning value (k or gamma), None for untuned kinds."""
        if self.kind in COMPONENT_KINDS:
            return self.k
        if self.kind == RIDGE:
            return self.gamma
        return None

    @classmethod
    def of(cls, kind, value=None):
        if kind in COMPONENT_KINDS:
            return cls(kind, k=int(value))
        if kind == RIDGE:
            return cls(kind, gamma=float(value))
        return cls(kind)


def distance_profile(model: EigenModel, X, kind, values=(None,)):
    """Distances of rows of ``X`` to each group mean, for several tuning values.

    Returns an array of shape (t, G, len(values)). Component counts above the
    model rank are clamped to the rank.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != model.p:
        raise ModelError(f"feature vector has length {X.shape[1]}, model expects {model.p}")
    lam = model.variances
    r = model.rank
    out = np.empty((X.shape[0], model.n_groups, len(values)))
    for g in range(model.n_groups):
        V = X - model.means[g]
        z2 = model.scores(V) ** 2
        if kind == RIDGE:
            resid = np.maximum(np.einsum("ij,ij->i", V, V) - z2.sum(axis=1), 0.0)
            for v, gamma in enumerate(values):
                out[:, g, v] = (z2 / ((1.0 - gamma) * lam + gamma)).sum(axis=1) + resid / gamma
            continue
        w = z2 if kind in EUCLID_KINDS else z2 / lam
        c = np.cumsum(w, axis=1)
        if kind in COMPONENT_KINDS:
            idx = np.clip(np.asarray(values, dtype=int), 1, r) - 1
        else:
            idx = np.full(len(values), r - 1)
        out[:, g, :] = c[:, idx]
    return out


def posterior_from_distances(D, priors):
    """``p(g|x) = pi_g exp(-D_g/2) / sum_h pi_h exp(-D_h/2)`` along axis 1."""
    priors = np.asarray(priors, dtype=float)
    shape = (1, -1) + (1,) * (D.ndim - 2)
    with np.errstate(divide="ignore"):
        logit = np.log(priors).reshape(shape) - 0.5 * D
    logit = logit - logit.max(axis=1, keepdims=True)
    e = np.exp(logit)
    return e / e.sum(axis=1, keepdims=True)


def _check_priors(priors, G):
    if priors is None:
        return np.full(G, 1.0 / G)
    priors = np.asarray(priors, dtype=float)
    if priors.shape != (G,) or np.any(priors < 0) or not priors.sum() > 0:
        raise ModelError(f"priors must be {G} non-negative numbers with a positive sum")
    return priors / priors.sum()


@dataclass(frozen=True, eq=False)
class Classifier:
    model: EigenModel
    spec: RegularizerSpec
    priors: np.ndarray = None

    def __post_init__(self):
        object.__setattr__(self, "priors", _check_priors(self.priors, self.model.n_groups))
        if self.spec.kind in COMPONENT_KINDS and self.spec.k > self.model.rank:
            raise ModelError(f"k={self.spec.k} exceeds the covariance rank {self.model.rank}")

    @property
    def groups(self):
        return np.arange(1, self.model.n_groups + 1)

    def distances(self, X):
        """(t, G) array of regularized distances."""
        return distance_profile(self.model, X, self.spec.kind, (self.spec.value,))[:, :, 0]

    def posterior(self, X):
        return posterior_from_distances(self.distances(X), self.priors)

    def predict(self, X):
        return self.posterior(X).argmax(axis=1) + 1


def fit(X, labels, spec: RegularizerSpec, priors=None, n_groups=None, form="auto"):
    return Classifier(pooled_eigen(X, labels, n_groups=n_groups, form=form), spec, priors)


def regularized_distance(clf: Classifier, x, g):
    """Distance of one feature vector ``x`` to group ``g`` (1-based)."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise ModelError("expected a single feature vector")
    if not 1 <= g <= clf.model.n_groups:
        raise ModelError(f"group {g} outside 1..{clf.model.n_groups}")
    return float(clf.distances(x[None, :])[0, g - 1])


def posterior(clf: Classifier, x):
    """Posterior class probabilities for one vector (length G) or rows of a matrix."""
    x = np.asarray(x, dtype=float)
    P = clf.posterior(np.atleast_2d(x))
    return P[0] if x.ndim == 1 else P


def discriminant_coefficients(clf: Classifier):
    """``beta = S_reg^{-1} (mean_1 - mean_2)`` through the classifier's own regularized inverse."""
    m = clf.model
    if m.n_groups != 2:
        raise ModelError("discriminant coefficients need exactly two groups")
    diff = m.means[0] - m.means[1]
    Q, lam, kind = m.loadings, m.variances, clf.spec.kind
    if kind in COMPONENT_KINDS:
        Q, lam = Q[:, :clf.spec.k], lam[:clf.spec.k]
    proj = Q.T @ diff
    if kind in EUCLID_KINDS:
        return Q @ proj
    if kind == RIDGE:
        gamma = clf.spec.gamma
        return Q @ (proj / ((1 - gamma) * lam + gamma)) + (diff - Q @ proj) / gamma
    return Q @ (proj / lam)
