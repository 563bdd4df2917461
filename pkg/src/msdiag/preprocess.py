"""Within-sample preprocessing of spot spectra into analysis vectors.

The chain for one sample is

    average spots -> aggregate bins -> AsLS baseline removal
        -> median/IQR standardization -> log(x + alpha) - beta

Nothing here reads labels or any other sample, so the processed vector of a
sample depends on that sample's own spectra only. Cross-validated error rates
stay honest as long as this holds.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np
import pandas as pd
from scipy.linalg import solveh_banded

from ._stats import quantile
from .dataset import Dataset, RawSpectrum, Sample
from .errors import PreprocessError

# relative slack when comparing an accumulated span against its target width
_SPAN_RTOL = 1e-9


@dataclass(frozen=True)
class PreprocessConfig:
    w_min: float = 1.0
    w_max: float = 3.0
    baseline_lambda: float = 1e5
    baseline_p: float = 0.001
    baseline_iterations: int = 10
    alpha: float = 100.0
    beta: float = 4.0

    def __post_init__(self):
        if not 0 < self.w_min <= self.w_max:
            raise PreprocessError(f"need 0 < w_min <= w_max, got {self.w_min}, {self.w_max}")
        if not 0 < self.baseline_p < 1:
            raise PreprocessError(f"baseline_p must lie in (0, 1), got {self.baseline_p}")
        if not self.baseline_lambda > 0:
            raise PreprocessError(f"baseline_lambda must be positive, got {self.baseline_lambda}")
        if int(self.baseline_iterations) != self.baseline_iterations or self.baseline_iterations < 1:
            raise PreprocessError("baseline_iterations must be a positive integer")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise PreprocessError(f"unknown preprocessing options: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_json(cls, path):
        try:
            d = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise PreprocessError(f"{path}: malformed JSON ({exc})") from None
        return cls.from_dict(d)


@dataclass(frozen=True, eq=False)
class BinPlan:
    """Aggregated analysis bins. ``raw_from``/``raw_to`` are inclusive 0-based raw indices."""

    lower: np.ndarray
    upper: np.ndarray
    raw_from: np.ndarray
    raw_to: np.ndarray

    @property
    def n_bins(self):
        return self.lower.size

    @property
    def n_raw(self):
        return int(self.raw_to[-1]) + 1

    @property
    def widths(self):
        return self.upper - self.lower

    def bin_of(self, mz):
        """Index of the aggregated bin containing ``mz``."""
        k = int(np.searchsorted(self.lower, mz, side="right")) - 1
        if k < 0 or mz > self.upper[-1]:
            raise PreprocessError(f"m/z {mz} lies outside the plan [{self.lower[0]}, {self.upper[-1]}]")
        return k

    def check_grid(self, mz):
        mz = np.asarray(mz)
        if mz.size != self.n_raw or not np.array_equal(mz[self.raw_from], self.lower):
            raise PreprocessError("bin plan was not built from this raw grid")

    def to_frame(self):
        return pd.DataFrame({"lower": self.lower, "upper": self.upper,
                             "raw_from": self.raw_from, "raw_to": self.raw_to})

    def to_csv(self, path):
        self.to_frame().to_csv(path, index=False, float_format="%.17g")

    @classmethod
    def from_csv(cls, path):
        t = pd.read_csv(path, float_precision="round_trip")
        missing = {"lower", "upper", "raw_from", "raw_to"} - set(t.columns)
        if missing:
            raise PreprocessError(f"{path}: bin plan lacks columns {sorted(missing)}")
        return cls(t["lower"].to_numpy(float), t["upper"].to_numpy(float),
                   t["raw_from"].to_numpy(int), t["raw_to"].to_numpy(int))


def raw_upper_edges(mz):
    """Upper edges of contiguous raw bins; the last bin repeats the previous width."""
    mz = np.asarray(mz, dtype=float)
    return np.append(mz[1:], mz[-1] + (mz[-1] - mz[-2]))


def average_spots(sample: Sample) -> RawSpectrum:
    """Per-bin arithmetic mean over the spot spectra of one sample."""
    if not sample.spots:
        raise PreprocessError(f"sample {sample.sample_id} has no spots")
    grid = sample.spots[0].mz
    for s in sample.spots[1:]:
        if not np.array_equal(s.mz, grid):
            raise PreprocessError(f"sample {sample.sample_id}: spot grids differ")
    stacked = np.vstack([s.intensities for s in sample.spots])
    return RawSpectrum(grid, stacked.mean(axis=0))


def build_bin_plan(raw_edges, config: PreprocessConfig = PreprocessConfig()) -> BinPlan:
    """Merge contiguous raw bins into analysis bins whose width ramps linearly in m/z.

    The target width at m/z ``m`` is ``w_min + (w_max - w_min) (m - m_lo) / (m_hi - m_lo)``.
    Raw bins are taken left to right until the span reaches the target at the
    current lower edge, or the previous aggregated width if that is larger, so
    widths never decrease. Raw bins left over at the right end join the last bin.
    """
    e = np.asarray(raw_edges, dtype=float)
    if e.ndim != 1 or e.size < 2:
        raise PreprocessError("need at least 2 raw edges to build a bin plan")
    if not np.all(np.diff(e) > 0):
        raise PreprocessError("raw edges must be strictly increasing")
    up = raw_upper_edges(e)
    m_lo, m_hi = e[0], up[-1]
    slope = (config.w_max - config.w_min) / (m_hi - m_lo)

    spans = []
    start, prev = 0, 0.0
    q = e.size
    while start < q:
        lo = e[start]
        target = max(config.w_min + slope * (lo - m_lo), prev)
        end = int(np.searchsorted(up, lo + target * (1 - _SPAN_RTOL), side="left"))
        if end >= q:
            if spans:
                spans[-1] = (spans[-1][0], q - 1)
            else:
                spans.append((start, q - 1))
            break
        spans.append((start, end))
        prev = up[end] - lo
        start = end + 1

    raw_from = np.array([a for a, _ in spans], dtype=int)
    raw_to = np.array([b for _, b in spans], dtype=int)
    return BinPlan(e[raw_from], up[raw_to], raw_from, raw_to)


def aggregate(spectrum: RawSpectrum, plan: BinPlan) -> np.ndarray:
    """Sum raw intensities over each aggregated bin."""
    plan.check_grid(spectrum.mz)
    return np.add.reduceat(spectrum.intensities, plan.raw_from)


def _second_difference_bands(q, lam):
    d0 = np.zeros(q)
    d0[:-2] += 1.0
    d0[1:-1] += 4.0
    d0[2:] += 1.0
    d1 = np.zeros(q - 1)
    d1[:-1] -= 2.0
    d1[1:] -= 2.0
    ab = np.zeros((3, q))
    ab[0, 2:] = lam
    ab[1, 1:] = lam * d1
    ab[2] = lam * d0
    return ab


def asls_baseline(v, lam=1e5, p=0.001, iterations=10):
    """Asymmetric least squares baseline (Eilers & Boelens smoother).

    Minimizes ``sum w_j (v_j - b_j)^2 + lam * sum (second difference of b)^2``
    and reweights with ``w_j = p`` where ``v_j > b_j`` and ``1 - p`` elsewhere,
    for a fixed number of iterations starting from unit weights.
    """
    v = np.asarray(v, dtype=float)
    if v.ndim != 1 or v.size < 3:
        raise PreprocessError("baseline removal needs a vector of length >= 3")
    if not np.all(np.isfinite(v)):
        raise PreprocessError("baseline removal got non-finite input")
    bands = _second_difference_bands(v.size, lam)
    w = np.ones_like(v)
    for _ in range(int(iterations)):
        ab = bands.copy()
        ab[2] += w
        b = solveh_banded(ab, w * v, check_finite=False)
        w = np.where(v > b, p, 1.0 - p)
    return b


def baseline_asls(v, config: PreprocessConfig = PreprocessConfig()):
    """Baseline-corrected copy of ``v``."""
    v = np.asarray(v, dtype=float)
    b = asls_baseline(v, config.baseline_lambda, config.baseline_p, config.baseline_iterations)
    return v - b


def robust_standardize(v):
    """``(v - median) / (q75 - q25)`` with the linear quantile rule."""
    v = np.asarray(v, dtype=float)
    q25, med, q75 = (quantile(v, q) for q in (0.25, 0.5, 0.75))
    iqr = q75 - q25
    if not iqr > 0:
        raise PreprocessError("zero interquartile range; spectrum is flat")
    return (v - med) / iqr


def log_stabilize(v, alpha=100.0, beta=4.0):
    v = np.asarray(v, dtype=float)
    if np.any(v + alpha <= 0):
        raise PreprocessError(f"log transform undefined: min value {v.min()} with alpha {alpha}")
    return np.log(v + alpha) - beta


def preprocess_spectrum(spectrum: RawSpectrum, plan: BinPlan, config=PreprocessConfig()):
    x = aggregate(spectrum, plan)
    x = baseline_asls(x, config)
    x = robust_standardize(x)
    return log_stabilize(x, config.alpha, config.beta)


def preprocess_sample(sample: Sample, plan: BinPlan, config=PreprocessConfig()):
    """Analysis vector for one sample; uses only that sample's spectra."""
    try:
        return preprocess_spectrum(average_spots(sample), plan, config)
    except PreprocessError as exc:
        raise PreprocessError(f"sample {sample.sample_id}: {exc.args[0]}") from None


def preprocess_dataset(data: Dataset, config=PreprocessConfig(), plan=None) -> Dataset:
    """Feature-level dataset of processed vectors, one sample at a time.

    A feature-level ``data`` is treated as one raw spectrum per sample on the
    grid ``data.mz``. Pass ``plan`` to reuse week-1 bins for a replicate week.
    """
    if data.is_spot_level:
        grid = data.samples[0].spots[0].mz
        samples = data.samples
    else:
        if data.mz is None:
            raise PreprocessError("raw spectra need an m/z column")
        grid = data.mz
        samples = [replace(s, spots=(RawSpectrum(grid, row),))
                   for s, row in zip(data.samples, data.X)]
    if plan is None:
        plan = build_bin_plan(grid, config)
    X = np.vstack([preprocess_sample(s, plan, config) for s in samples])
    return data.with_features(X, mz=plan.lower.copy(), bin_plan=plan)
