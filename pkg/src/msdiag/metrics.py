"""Validated performance measures for two-group allocation.

Recognition rates and AUC are in percent inside a :class:`ValidationReport`;
the standalone :func:`auc` returns a proportion. Group 1 is the case group.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import rankdata

from .errors import MetricError

REPORT_COLUMNS = ("T", "Se", "Sp", "B", "AUC")


def _two_groups(labels):
    labels = np.asarray(labels, dtype=int)
    cases, controls = labels == 1, labels == 2
    if not cases.any() or not controls.any():
        raise MetricError("both groups need at least one sample")
    if not np.all(cases | controls):
        raise MetricError("labels must be 1 (cases) or 2 (controls)")
    return cases, controls


def total_recognition(se, sp):
    return (se + sp) / 2


def recognition(allocations, labels):
    """``(T, Se, Sp)`` in percent; Se over cases, Sp over controls, T their mean."""
    allocations = np.asarray(allocations, dtype=int)
    cases, controls = _two_groups(labels)
    se = 100.0 * np.mean(allocations[cases] == 1)
    sp = 100.0 * np.mean(allocations[controls] == 2)
    return total_recognition(se, sp), se, sp


def brier(p_true):
    """Root mean squared distance of the true-class posterior from 1."""
    p = np.asarray(p_true, dtype=float)
    if p.size == 0:
        raise MetricError("Brier distance of an empty set")
    if np.any((p < 0) | (p > 1)):
        raise MetricError("probabilities must lie in [0, 1]")
    return float(np.sqrt(np.mean((1.0 - p) ** 2)))


def auc(p1, labels):
    """Empirical ROC area by ranks: ``P(score_case > score_control) + 0.5 P(tie)``."""
    p1 = np.asarray(p1, dtype=float)
    cases, controls = _two_groups(labels)
    n1, n2 = int(cases.sum()), int(controls.sum())
    ranks = rankdata(p1, method="average")
    u = ranks[cases].sum() - n1 * (n1 + 1) / 2.0
    return float(u / (n1 * n2))


def auc_pairs(p1, labels):
    """Brute-force pair enumeration of the same quantity (reference implementation)."""
    p1 = np.asarray(p1, dtype=float)
    cases, controls = _two_groups(labels)
    a, b = p1[cases][:, None], p1[controls][None, :]
    total = (a > b).sum() + 0.5 * (a == b).sum()
    return float(total / (a.size * b.size))


@dataclass
class ValidationReport:
    sample_ids: tuple
    labels: np.ndarray
    p1: np.ndarray
    p_true: np.ndarray
    allocations: np.ndarray
    chosen: list
    T: float
    Se: float
    Sp: float
    B: float
    AUC: float
    method: str = ""
    extra: dict = field(default_factory=dict)

    @property
    def n(self):
        return len(self.sample_ids)

    def summary(self):
        return {k: getattr(self, k) for k in REPORT_COLUMNS}

    def to_dict(self):
        labels = self.labels
        return {
            "method": self.method,
            "n": self.n,
            "n_cases": int(np.sum(labels == 1)),
            "n_controls": int(np.sum(labels == 2)),
            **self.summary(),
            **self.extra,
            "samples": [
                {"sample_id": sid, "label": int(g), "p1": float(p), "p_true": float(pt),
                 "allocation": int(a), "chosen_param": c}
                for sid, g, p, pt, a, c in zip(self.sample_ids, labels, self.p1,
                                               self.p_true, self.allocations, self.chosen)
            ],
        }

    def to_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)
            fh.write("\n")

    def to_summary_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(REPORT_COLUMNS)
            w.writerow([repr(float(getattr(self, k))) for k in REPORT_COLUMNS])

    def to_per_sample_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(("sample_id", "label", "p1", "allocation", "chosen_param"))
            for sid, g, p, a, c in zip(self.sample_ids, self.labels, self.p1,
                                       self.allocations, self.chosen):
                w.writerow((sid, int(g), repr(float(p)), int(a), "" if c is None else c))


def build_report(sample_ids, labels, posteriors, chosen, method="", extra=None):
    """Summarize validated (n, 2) posteriors into a :class:`ValidationReport`.

    Allocation is to the group with the larger posterior; an exact 0.5 tie goes
    to group 1.
    """
    labels = np.asarray(labels, dtype=int)
    P = np.asarray(posteriors, dtype=float)
    if P.ndim != 2 or P.shape != (labels.size, 2):
        raise MetricError("expected an (n, 2) array of posteriors")
    alloc = P.argmax(axis=1) + 1
    p_true = P[np.arange(labels.size), labels - 1]
    T, se, sp = recognition(alloc, labels)
    return ValidationReport(
        sample_ids=tuple(sample_ids), labels=labels, p1=P[:, 0].copy(), p_true=p_true,
        allocations=alloc, chosen=list(chosen), T=T, Se=se, Sp=sp, B=brier(p_true),
        AUC=100.0 * auc(P[:, 0], labels), method=method, extra=dict(extra or {}),
    )
