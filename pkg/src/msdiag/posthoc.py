"""Exploratory analysis run after validation: bin-cluster reduction and discriminant correlations.

Nothing here feeds back into validated error rates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pandas as pd

from . import lda
from ._stats import quantile
from .errors import ModelError, PosthocError

GROWTH_THRESHOLD = 0.9
RHO_SLACK = 1e-9


def _cor(a, b):
    """Pearson correlation; nan when either vector is constant."""
    a = a - a.mean()
    b = b - b.mean()
    den = np.sqrt((a @ a) * (b @ b))
    if not den > 0:
        return np.nan
    return float(a @ b / den)


@dataclass
class BinSelection:
    indices: np.ndarray
    clusters: list
    v_ref: float
    variances: np.ndarray

    @property
    def n_clusters(self):
        return len(self.clusters)

    def cluster_of(self):
        """First cluster id (0-based) that selected each bin in ``indices``."""
        first = {}
        for cid, members in enumerate(self.clusters):
            for b in members:
                first.setdefault(int(b), cid)
        return np.array([first[int(b)] for b in self.indices], dtype=int)

    def to_frame(self, lower=None, upper=None):
        idx = self.indices
        return pd.DataFrame({
            "bin": idx,
            "lower_mz": np.nan if lower is None else np.asarray(lower)[idx],
            "upper_mz": np.nan if upper is None else np.asarray(upper)[idx],
            "cluster_id": self.cluster_of(),
        })

    @classmethod
    def from_frame(cls, frame, p=None):
        idx = frame["bin"].to_numpy(int)
        clusters = [g["bin"].to_numpy(int) for _, g in frame.groupby("cluster_id", sort=True)]
        return cls(np.unique(idx), clusters, np.nan, np.full(p or 0, np.nan))


def reduce_bins(data) -> BinSelection:
    """Variance-seeded, correlation-grown bin clusters.

    Seed at the highest-variance bin and widen the cluster one bin on each side
    while both new neighbours correlate above 0.9 with the cluster's mean
    intensity. Reseed at the highest remaining variance while it exceeds the
    95th percentile of all bin variances. Labels are never read.
    """
    X = data.X
    n, p = X.shape
    if n < 3:
        raise PosthocError("bin reduction needs n >= 3")
    v = X.var(axis=0, ddof=1)
    v_ref = float(quantile(v, 0.95))
    available = np.ones(p, dtype=bool)
    selected = set()
    clusters = []

    j = int(np.argmax(v))
    while True:
        available[j] = False
        lo_edge = hi_edge = j
        m = X[:, j].copy()
        k = 1
        while j - k >= 0 and j + k < p:
            lo, hi = j - k, j + k
            if not (_cor(m, X[:, lo]) > GROWTH_THRESHOLD and _cor(m, X[:, hi]) > GROWTH_THRESHOLD):
                break
            lo_edge, hi_edge = lo, hi
            m = X[:, lo_edge:hi_edge + 1].mean(axis=1)
            available[lo] = available[hi] = False
            k += 1
        members = np.arange(lo_edge, hi_edge + 1)
        clusters.append(members)
        selected.update(members.tolist())

        remaining = np.flatnonzero(available)
        if remaining.size == 0:
            break
        j = int(remaining[np.argmax(v[remaining])])
        if not v[j] > v_ref:
            break

    return BinSelection(np.array(sorted(selected), dtype=int), clusters, v_ref, v)


def orient(loadings):
    """Flip each column so its largest-magnitude entry is positive."""
    Q = np.array(loadings, dtype=float)
    for c in range(Q.shape[1]):
        if Q[np.argmax(np.abs(Q[:, c])), c] < 0:
            Q[:, c] = -Q[:, c]
    return Q


@dataclass
class ExplorationOutput:
    bins: np.ndarray
    mz: np.ndarray
    beta: np.ndarray
    rho: np.ndarray
    s_x: np.ndarray
    s_g: float
    loadings: np.ndarray
    scores: np.ndarray
    means: np.ndarray
    sample_ids: tuple
    labels: np.ndarray

    @property
    def out_of_range(self):
        """Bins where the coefficient formula gives ``|rho| > 1``."""
        return np.abs(self.rho) > 1 + RHO_SLACK

    def correlation_frame(self):
        return pd.DataFrame({"bin": self.bins, "mz": self.mz, "rho": self.rho,
                             "beta": self.beta, "flag": self.out_of_range.astype(int)})

    def scores_frame(self):
        cols = {f"pc{c + 1}": self.scores[:, c] for c in range(self.scores.shape[1])}
        return pd.DataFrame({"sample_id": self.sample_ids, "group": self.labels, **cols})

    def loadings_frame(self):
        cols = {f"pc{c + 1}": self.loadings[:, c] for c in range(self.loadings.shape[1])}
        return pd.DataFrame({"bin": self.bins, "mz": self.mz, **cols})

    def means_frame(self):
        return pd.DataFrame({"bin": self.bins, "mz": self.mz,
                             "mean_cases": self.means[0], "mean_controls": self.means[1]})

    def extreme_bins(self):
        """Original bin indices of the largest positive and most negative rho."""
        return int(self.bins[np.argmax(self.rho)]), int(self.bins[np.argmin(self.rho)])


def correlation_coefficients(s_x, beta, s_g):
    """``rho_j = s_xj * beta_j / s_g``."""
    return np.asarray(s_x, dtype=float) * np.asarray(beta, dtype=float) / s_g


def correlation_map(data, k=2, selection=None, kind=lda.PCA_K_EUCLID) -> ExplorationOutput:
    """Full-data discriminant fit (Euclidean, first ``k`` components by default) and its summaries."""
    if data.n_groups != 2 or set(np.unique(data.labels)) != {1, 2}:
        raise PosthocError("correlation map needs exactly two non-empty groups")
    bins = np.arange(data.p) if selection is None else np.asarray(selection.indices, dtype=int)
    X = data.X[:, bins]
    labels = data.labels
    mz = np.full(bins.size, np.nan) if data.mz is None else np.asarray(data.mz)[bins]
    try:
        model = lda.pooled_eigen(X, labels, n_groups=2)
        clf = lda.Classifier(model, lda.RegularizerSpec.of(kind, k))
    except ModelError as exc:
        raise PosthocError(exc.args[0]) from None
    beta = lda.discriminant_coefficients(clf)
    s_x = X.std(axis=0, ddof=1)
    s_g = float(np.std((labels == 1).astype(float), ddof=1))
    Q = orient(model.loadings[:, :min(2, model.rank)])
    scores = (X - X.mean(axis=0)) @ Q
    return ExplorationOutput(
        bins=bins, mz=mz, beta=beta, rho=correlation_coefficients(s_x, beta, s_g),
        s_x=s_x, s_g=s_g, loadings=Q, scores=scores, means=model.means.copy(),
        sample_ids=data.ids, labels=labels,
    )


def contrast(data, bin_a, bin_b):
    """Per-sample difference ``x[a] - x[b]`` with group tags."""
    p = data.p
    for b in (bin_a, bin_b):
        if not 0 <= b < p:
            raise PosthocError(f"bin index {b} outside 0..{p - 1}")
    X = data.X
    return pd.DataFrame({"sample_id": data.ids, "group": data.labels,
                         "contrast": X[:, bin_a] - X[:, bin_b]})
