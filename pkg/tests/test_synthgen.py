import json

import numpy as np
import pytest

from msdiag import preprocess, synthgen
from msdiag.errors import SynthError
from msdiag.preprocess import average_spots


@pytest.fixture(scope="module")
def planted60():
    return synthgen.generate(synthgen.planted_spec(n=60, p=120, seed=8))


def test_same_seed_is_bit_identical():
    spec = synthgen.planted_spec(n=8, p=50, seed=3)
    a, a2, ta = synthgen.generate(spec)
    b, b2, tb = synthgen.generate(spec)
    for x, y in zip(a.samples + a2.samples, b.samples + b2.samples):
        assert x.metadata() == y.metadata()
        assert all(s.intensities.tobytes() == t.intensities.tobytes() for s, t in zip(x.spots, y.spots))
    assert ta == tb
    c, _, _ = synthgen.generate(synthgen.planted_spec(n=8, p=50, seed=4))
    assert c.samples[0].spots[0].intensities.tobytes() != a.samples[0].spots[0].intensities.tobytes()


def test_null_has_no_contrast():
    _, _, truth = synthgen.generate(synthgen.null_spec(n=8, p=50, seed=1))
    assert truth["contrast_peaks"] == [] and truth["planted_bins"] == []


def test_planted_mean_difference_within_three_se(planted60):
    week1, _, truth = planted60
    mz = week1.samples[0].spots[0].mz
    Y = np.vstack([average_spots(s).intensities for s in week1.samples])
    labels = week1.labels
    signs = set()
    for peak in truth["contrast_peaks"]:
        j = int(np.argmin(np.abs(mz - peak["center"])))
        shape = np.exp(-0.5 * ((mz[j] - peak["center"]) / peak["sigma"]) ** 2)
        expected = peak["delta"] * peak["sd"] * shape
        a, b = Y[labels == 1, j], Y[labels == 2, j]
        se = np.sqrt(a.var(ddof=1) / a.size + b.var(ddof=1) / b.size)
        assert abs(a.mean() - b.mean() - expected) < 3 * se
        signs.add(peak["sign"])
    assert signs == {1, -1}


def test_group_sizes_and_layout(planted60):
    week1, week2, _ = planted60
    assert week1.group_counts() == {1: 30, 2: 30}
    assert week1.is_spot_level and len(week1.samples[0].spots) == 4
    assert week2.ids == week1.ids and week2.week == 2
    plates = np.array([s.plate for s in week1.samples])
    for g in (1, 2):
        per = np.bincount(plates[week1.labels == g])[1:]
        assert per.max() - per.min() <= 1


def test_week_two_redraws_noise(planted60):
    week1, week2, _ = planted60
    a = week1.samples[0].spots[0].intensities
    b = week2.samples[0].spots[0].intensities
    assert not np.array_equal(a, b)
    assert np.corrcoef(a, b)[0, 1] > 0.9


def test_week2_plates_drop_a_plate():
    spec = synthgen.planted_spec(n=12, p=40, seed=2, week2_plates=(1, 2))
    w1, w2, _ = synthgen.generate(spec)
    assert {s.plate for s in w2.samples} == {1, 2}
    assert w2.n == sum(s.plate != 3 for s in w1.samples)
    assert synthgen.drop_plate(w1, 3).ids == w2.ids
    with pytest.raises(SynthError):
        synthgen.generate(synthgen.planted_spec(n=12, p=40, week2_plates=(9,)))


@pytest.mark.parametrize("p", [20, 60, 200, 500])
def test_mz_range_gives_exact_bin_count(p):
    mz = synthgen.mz_range_for(p)
    assert preprocess.build_bin_plan(synthgen.raw_grid(mz)).n_bins == p


def test_raw_grid_widths_ramp():
    g = synthgen.raw_grid((1000.0, 2000.0))
    w = np.diff(g)
    assert w[0] == pytest.approx(0.07, rel=1e-6)
    assert w[-1] == pytest.approx(0.24, rel=0.01)
    assert np.all(np.diff(w) > 0)
    flat = synthgen.raw_grid((1000.0, 1001.0), (0.1, 0.1))
    assert np.allclose(np.diff(flat), 0.1)


def test_truth_bins_cover_peak_centres(planted60):
    week1, _, truth = planted60
    plan = preprocess.build_bin_plan(week1.samples[0].spots[0].mz)
    for peak, bins in zip(truth["contrast_peaks"], truth["planted_bins"]):
        assert plan.bin_of(peak["center"]) in bins
    assert synthgen.truth_bins(truth, plan) == synthgen.truth_bins(truth)


def test_layout_peaks_keeps_clearance():
    peaks = synthgen.layout_peaks((1000.0, 1400.0), seed=5)
    contrast = [p for p in peaks if p.delta]
    assert [p.delta for p in contrast] == [2.0, -2.0]
    for c in contrast:
        for p in peaks:
            if p is not c:
                assert abs(p.center - c.center) >= 8 * c.sigma
    with pytest.raises(SynthError, match="cannot place"):
        synthgen.layout_peaks((1000.0, 1030.0), n_background=40)


def test_spec_validation_and_json(tmp_path):
    with pytest.raises(SynthError):
        synthgen.SynthSpec(n_cases=1, peaks=(synthgen.Peak(1100, 1, 10),))
    with pytest.raises(SynthError):
        synthgen.SynthSpec(peaks=())
    with pytest.raises(SynthError):
        synthgen.Peak(1100, 0, 10)
    with pytest.raises(SynthError, match="unknown"):
        synthgen.SynthSpec.from_dict({"n_cases": 5, "colour": 1})
    spec = synthgen.planted_spec(n=10, p=40, seed=1)
    (tmp_path / "s.json").write_text(json.dumps(spec.to_dict()))
    assert synthgen.SynthSpec.from_json(tmp_path / "s.json") == spec
    (tmp_path / "q.json").write_text(json.dumps({"planted": {"n": 10, "p": 40, "seed": 1}}))
    assert synthgen.SynthSpec.from_json(tmp_path / "q.json") == spec
    (tmp_path / "bad.json").write_text("[")
    with pytest.raises(SynthError, match="malformed"):
        synthgen.SynthSpec.from_json(tmp_path / "bad.json")


def test_write_truth(tmp_path, planted60):
    synthgen.write_truth(planted60[2], tmp_path / "t.json")
    assert json.loads((tmp_path / "t.json").read_text()) == planted60[2]
