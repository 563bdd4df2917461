"""Label-permutation audit of the double cross-validation pipeline.

Labels are shuffled before any fitting and the whole double CV is rerun. An
unbiased procedure centres at 50% recognition and AUC on permuted data; the
2.5-97.5 percentile range of the replications gives the null band.
"""

from __future__ import annotations

import csv
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ._stats import quantile
from .double_cv import double_cv
from .errors import PermutationError

MEASURES = ("misclassification", "AUC", "B")


def permute_labels(data, seed, stratify=None):
    """Dataset with its label sequence randomly permuted; features untouched.

    ``stratify="plate"`` shuffles labels within each plate only.
    """
    if data.n < 2:
        raise PermutationError("need at least 2 samples to permute")
    rng = np.random.default_rng(seed)
    labels = data.labels
    if stratify is None:
        return data.with_labels(rng.permutation(labels))
    if stratify != "plate":
        raise PermutationError(f"unknown stratification {stratify!r}")
    plates = np.array([-1 if s.plate is None else s.plate for s in data.samples])
    out = labels.copy()
    for plate in np.unique(plates):
        idx = np.flatnonzero(plates == plate)
        out[idx] = rng.permutation(labels[idx])
    return data.with_labels(out)


@dataclass
class PermutationSummary:
    replications: dict
    seed: int
    stratify: str | None = None
    medians: dict = field(default_factory=dict)
    q025: dict = field(default_factory=dict)
    q975: dict = field(default_factory=dict)
    seeds: list = field(default_factory=list)

    @property
    def R(self):
        return len(self.replications["misclassification"])

    def band(self, measure):
        return self.q025[measure], self.q975[measure]

    def recognition_band(self):
        """Null band of the total recognition rate T (= 100 - misclassification)."""
        lo, hi = self.band("misclassification")
        return 100.0 - hi, 100.0 - lo

    def to_dict(self):
        return {
            "R": self.R,
            "seed": self.seed,
            "stratify": self.stratify,
            "median": self.medians,
            "q2.5": self.q025,
            "q97.5": self.q975,
        }

    def to_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)
            fh.write("\n")

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(("replication", "seed", *MEASURES))
            for r in range(self.R):
                w.writerow((r, self.seeds[r], *(repr(float(self.replications[m][r])) for m in MEASURES)))


def summarize(replications, seed, stratify=None, seeds=()):
    reps = {m: np.asarray(v, dtype=float) for m, v in replications.items()}
    return PermutationSummary(
        replications=reps, seed=seed, stratify=stratify, seeds=list(seeds),
        medians={m: float(quantile(v, 0.5)) for m, v in reps.items()},
        q025={m: float(quantile(v, 0.025)) for m, v in reps.items()},
        q975={m: float(quantile(v, 0.975)) for m, v in reps.items()},
    )


def replication_seeds(seed, R):
    """Independent per-replication seeds derived from one master seed."""
    return [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(R)]


def permutation_study(data, grid, R=600, seed=0, stratify=None, priors=None, threads=1):
    """Rerun double CV on ``R`` label permutations of ``data``."""
    if R < 1:
        raise PermutationError("need at least one replication")
    seeds = replication_seeds(seed, R)

    def one(s):
        rep = double_cv(permute_labels(data, s, stratify), grid, priors=priors).report
        return 100.0 - rep.T, rep.AUC, rep.B

    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(one, seeds))
    else:
        rows = [one(s) for s in seeds]
    rows = np.array(rows)
    return summarize(dict(zip(MEASURES, rows.T)), seed, stratify, seeds)
