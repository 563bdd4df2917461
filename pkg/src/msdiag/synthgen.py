"""Synthetic MALDI-like spot spectra with planted group contrasts.

Each spot spectrum on a raw grid (widths ramping from about 0.07 to 0.24 Da) is

    decaying baseline + sum_k a_ik * gaussian_k(m) + spot noise, clipped at 0

where the peak amplitude ``a_ik`` carries a per-sample random part, a shift of
``delta_k`` within-group SDs for cases on contrast peaks, and additive plate
and day effects. Plates, days and positions come from a balanced
:func:`msdiag.design.allocate` layout, so batch effects are spread evenly over
the groups. Week 2 keeps the samples' latent amplitudes (plus a little
replicate noise) and redraws batch effects and spot noise.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, replace

import numpy as np

from .dataset import Dataset, RawSpectrum
from .design import DesignSpec, allocate
from .errors import SynthError
from .preprocess import PreprocessConfig, build_bin_plan

RAW_WIDTHS = (0.07, 0.24)


@dataclass(frozen=True)
class Peak:
    center: float
    sigma: float
    amplitude: float
    delta: float = 0.0

    def __post_init__(self):
        if not (self.sigma > 0 and self.amplitude > 0):
            raise SynthError(f"peak at {self.center}: sigma and amplitude must be positive")


@dataclass(frozen=True)
class SynthSpec:
    """Generator settings. Relative SDs are fractions of each peak's amplitude.

    ``contrast_correlation`` is the within-group correlation between the
    amplitudes of any two contrast peaks (peaks with non-zero ``delta``).
    """

    n_cases: int = 50
    n_controls: int = 50
    mz_range: tuple = (1000.0, 1910.0)
    raw_widths: tuple = RAW_WIDTHS
    peaks: tuple = ()
    amplitude_cv: float = 0.2
    contrast_correlation: float = 0.5
    baseline_amplitude: float = 300.0
    baseline_decay: float = 250.0
    baseline_cv: float = 0.02
    floor: float = 30.0
    plate_sd: float = 0.05
    day_sd: float = 0.03
    noise_sd: float = 4.0
    replicate_sd: float = 0.02
    spots: int = 4
    plates: int = 3
    week2_plates: tuple | None = None
    seed: int = 0

    def __post_init__(self):
        if self.n_cases < 2 or self.n_controls < 2:
            raise SynthError("need at least 2 samples per group")
        lo, hi = (float(v) for v in self.mz_range)
        w0, w1 = (float(v) for v in self.raw_widths)
        if not hi > lo:
            raise SynthError("m/z range must be increasing")
        if not 0 < w0 <= w1:
            raise SynthError("raw widths must be positive and non-decreasing")
        if self.spots < 1 or self.plates < 1:
            raise SynthError("need at least one spot and one plate")
        if not 0 <= self.contrast_correlation < 1:
            raise SynthError("contrast_correlation must lie in [0, 1)")
        for name in ("amplitude_cv", "baseline_cv", "plate_sd", "day_sd", "noise_sd",
                     "replicate_sd", "baseline_amplitude", "floor"):
            if getattr(self, name) < 0:
                raise SynthError(f"{name} must be non-negative")
        peaks = tuple(p if isinstance(p, Peak) else Peak(**p) for p in self.peaks)
        if not peaks:
            raise SynthError("peak list is empty")
        object.__setattr__(self, "peaks", peaks)
        object.__setattr__(self, "mz_range", (lo, hi))
        object.__setattr__(self, "raw_widths", (w0, w1))
        if self.week2_plates is not None:
            object.__setattr__(self, "week2_plates", tuple(int(p) for p in self.week2_plates))

    @property
    def n(self):
        return self.n_cases + self.n_controls

    def to_dict(self):
        d = asdict(self)
        d["peaks"] = [asdict(p) for p in self.peaks]
        d["mz_range"], d["raw_widths"] = list(self.mz_range), list(self.raw_widths)
        if self.week2_plates is not None:
            d["week2_plates"] = list(self.week2_plates)
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        planted = d.pop("planted", None)
        if planted is not None:
            base = planted_spec(**planted)
            return replace(base, **d) if d else base
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise SynthError(f"unknown generator options: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_json(cls, path):
        with open(path) as fh:
            try:
                return cls.from_dict(json.load(fh))
            except json.JSONDecodeError as exc:
                raise SynthError(f"{path}: malformed JSON ({exc})") from None


def raw_grid(mz_range, widths=RAW_WIDTHS):
    """Lower edges from ``lo`` with width growing linearly in m/z from ``widths[0]`` to ``widths[1]``.

    The recursion ``e[j+1] = e[j] + w0 + s (e[j] - lo)`` is solved in closed form.
    """
    lo, hi = mz_range
    w0, w1 = widths
    s = (w1 - w0) / (hi - lo)
    if s == 0:
        return lo + w0 * np.arange(int(np.ceil((hi - lo) / w0)))
    q = int(np.ceil(np.log1p(s * (hi - lo) / w0) / np.log1p(s)))
    u = w0 * np.expm1(np.arange(q) * np.log1p(s)) / s
    return lo + u


def mz_range_for(p, lo=1000.0, config=PreprocessConfig(), widths=RAW_WIDTHS):
    """An m/z range whose raw grid yields exactly ``p`` analysis bins (when reachable)."""
    if p < 1:
        raise SynthError("need p >= 1")
    ramp = (config.w_max - config.w_min) / np.log(config.w_max / config.w_min) \
        if config.w_max > config.w_min else config.w_min
    hi = lo + p * ramp
    best = None
    for _ in range(60):
        got = build_bin_plan(raw_grid((lo, hi), widths), config).n_bins
        if best is None or abs(got - p) < abs(best[1] - p):
            best = (hi, got)
        if got == p:
            break
        hi += (p - got) * 0.5 * (config.w_min + config.w_max) * (0.5 if abs(p - got) < 3 else 1.0)
    return (float(lo), float(best[0]))


def layout_peaks(mz_range, n_background=None, contrast=(2.0, -2.0), seed=0,
                 contrast_amplitude=1500.0, contrast_sigma=1.5, background=(50.0, 250.0)):
    """Peak list with contrast peaks spread over the range and weaker background peaks.

    Contrast peaks sit at evenly spaced fractions of the range with the
    given signed deltas. Background peaks (by default one per 25 Da, at most
    12) are placed at random, clear of the contrast peaks and of each other.
    """
    rng = np.random.default_rng([seed, 7])
    lo, hi = mz_range
    span = hi - lo
    if n_background is None:
        n_background = min(12, int(span // 25))
    k = len(contrast)
    peaks = []
    centers = [lo + span * (i + 1) / (k + 1) for i in range(k)]
    for c, d in zip(centers, contrast):
        peaks.append(Peak(float(c), contrast_sigma, contrast_amplitude, float(d)))
    attempts = 0
    while len(peaks) < k + n_background:
        attempts += 1
        if attempts > 10000:
            raise SynthError(f"cannot place {n_background} background peaks in {span:.1f} Da")
        c = lo + span * (0.03 + 0.94 * rng.random())
        gap = min(abs(c - p.center) - (8 * p.sigma if p.delta else 4.0) for p in peaks)
        if gap < 0:
            continue
        peaks.append(Peak(float(c), float(rng.uniform(0.8, 2.0)),
                          float(rng.uniform(*background)), 0.0))
    return tuple(sorted(peaks, key=lambda p: p.center))


def planted_spec(n=100, p=500, delta=2.0, seed=0, n_contrast=2, n_background=None, **overrides):
    """Spec with ``n_contrast`` alternating-sign contrast peaks of size ``delta`` (0 for a null)."""
    mz = mz_range_for(p)
    signs = [1.0 if i % 2 == 0 else -1.0 for i in range(n_contrast)]
    peaks = layout_peaks(mz, n_background, contrast=tuple(delta * s for s in signs), seed=seed)
    n_cases = n // 2
    return SynthSpec(n_cases=n - n_cases, n_controls=n_cases, mz_range=mz, peaks=peaks,
                     seed=seed, **overrides)


def null_spec(n=40, p=200, seed=0, **overrides):
    return planted_spec(n=n, p=p, delta=0.0, seed=seed, **overrides)


def _shapes(peaks, mz):
    centers = np.array([p.center for p in peaks])[:, None]
    sigmas = np.array([p.sigma for p in peaks])[:, None]
    return np.exp(-0.5 * ((mz[None, :] - centers) / sigmas) ** 2)


def _batch(rng, ids, sd, amp):
    return {b: rng.standard_normal(amp.size) * sd * amp for b in ids}


def _spectra(rng, spec, latent, plates, days, shapes, mz, baseline_scale):
    amp = np.array([p.amplitude for p in spec.peaks])
    plate_fx = _batch(rng, sorted(set(plates)), spec.plate_sd, amp)
    day_fx = _batch(rng, sorted(set(days)), spec.day_sd, amp)
    lo = spec.mz_range[0]
    drift = np.exp(-(mz - lo) / spec.baseline_decay) * spec.baseline_amplitude
    out = []
    for i in range(latent.shape[0]):
        a = latent[i] + plate_fx[plates[i]] + day_fx[days[i]]
        clean = spec.floor + baseline_scale[i] * drift + a @ shapes
        noise = rng.standard_normal((spec.spots, mz.size)) * spec.noise_sd
        out.append(np.maximum(clean[None, :] + noise, 0.0))
    return out


def generate(spec: SynthSpec):
    """``(week1, week2, truth)``: spot-level datasets for both weeks and the planted truth."""
    rng = np.random.default_rng(spec.seed)
    table = allocate(DesignSpec(groups={1: spec.n_cases, 2: spec.n_controls},
                                plates=spec.plates, seed=int(rng.integers(2**31))))
    samples = table.samples(week=1)
    labels = np.array([s.group for s in samples])
    plates = [s.plate for s in samples]
    days = [s.day for s in samples]
    n, K = len(samples), len(spec.peaks)

    mz = raw_grid(spec.mz_range, spec.raw_widths)
    shapes = _shapes(spec.peaks, mz)
    amp = np.array([p.amplitude for p in spec.peaks])
    delta = np.array([p.delta for p in spec.peaks])
    sd = spec.amplitude_cv * amp
    # contrast peaks share one latent factor; background peaks vary independently
    r = np.where(delta != 0, spec.contrast_correlation, 0.0)
    eps = np.sqrt(r) * rng.standard_normal((n, 1)) + np.sqrt(1 - r) * rng.standard_normal((n, K))
    latent = amp + sd * eps + (labels == 1)[:, None] * delta * sd
    baseline_scale = 1 + spec.baseline_cv * rng.standard_normal(n)

    grid = np.array(mz)
    grid.flags.writeable = False
    spots1 = _spectra(rng, spec, latent, plates, days, shapes, mz, baseline_scale)
    week1 = Dataset(samples=tuple(
        replace(s, spots=tuple(RawSpectrum(grid, y) for y in spots1[i]))
        for i, s in enumerate(samples)), week=1)

    keep = [i for i in range(n) if spec.week2_plates is None or plates[i] in spec.week2_plates]
    if not keep:
        raise SynthError("no week-2 samples: every plate was dropped")
    latent2 = latent + rng.standard_normal(latent.shape) * spec.replicate_sd * amp
    spots2 = _spectra(rng, spec, latent2, plates, days, shapes, mz, baseline_scale)
    week2 = Dataset(samples=tuple(
        replace(samples[i], spots=tuple(RawSpectrum(grid, y) for y in spots2[i]))
        for i in keep), week=2)

    truth = {
        "seed": spec.seed,
        "mz_range": list(spec.mz_range),
        "n_raw": int(mz.size),
        "contrast_peaks": [
            {**asdict(p), "sign": int(np.sign(p.delta)), "sd": float(spec.amplitude_cv * p.amplitude)}
            for p in spec.peaks if p.delta != 0
        ],
        "planted_bins": truth_bins_for(spec.peaks, build_bin_plan(mz)),
    }
    return week1, week2, truth


def truth_bins_for(peaks, plan):
    """Analysis bins overlapping ``center +/- sigma`` of each contrast peak, per peak."""
    out = []
    for p in peaks:
        if p.delta == 0:
            continue
        hit = np.flatnonzero((plan.upper > p.center - p.sigma) & (plan.lower < p.center + p.sigma))
        out.append(hit.tolist())
    return out


def truth_bins(truth, plan=None):
    """Sorted union of planted bins, optionally recomputed for another bin plan."""
    if plan is None:
        groups = truth["planted_bins"]
    else:
        peaks = [Peak(p["center"], p["sigma"], p["amplitude"], p["delta"])
                 for p in truth["contrast_peaks"]]
        groups = truth_bins_for(peaks, plan)
    return sorted({b for g in groups for b in g})


def drop_plate(data, plate):
    """Copy of ``data`` without the samples of ``plate`` (a lost week-2 plate)."""
    keep = [i for i, s in enumerate(data.samples) if s.plate != plate]
    if not keep:
        raise SynthError(f"dropping plate {plate} leaves no samples")
    return data.subset(keep)


def write_truth(truth, path):
    with open(path, "w") as fh:
        json.dump(truth, fh, indent=2)
        fh.write("\n")
