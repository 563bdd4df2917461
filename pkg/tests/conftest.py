import functools

import numpy as np
import pytest

from msdiag import double_cv, permutation, preprocess, synthgen

PLANTED_SEED = 0


@functools.lru_cache(maxsize=None)
def synth_features(kind="planted", n=100, p=500, seed=0, **kw):
    """Preprocessed week-1 (and week-2) data plus truth, cached across tests."""
    if kind == "planted":
        spec = synthgen.planted_spec(n=n, p=p, seed=seed, **kw)
    else:
        spec = synthgen.null_spec(n=n, p=p, seed=seed, **kw)
    week1, week2, truth = synthgen.generate(spec)
    d1 = preprocess.preprocess_dataset(week1)
    d2 = preprocess.preprocess_dataset(week2, plan=d1.bin_plan)
    return d1, d2, truth


@pytest.fixture(scope="session")
def planted():
    """n=100, p=500, delta=2 planted-signal data."""
    return synth_features("planted", 100, 500, PLANTED_SEED)


@pytest.fixture(scope="session")
def planted_dcv(planted):
    data = planted[0]
    grid = double_cv.TuningGrid.default("pca", data.n)
    return double_cv.double_cv(data, grid)


@pytest.fixture(scope="session")
def null42():
    """n=40, p=200 data without any group difference."""
    return synth_features("null", 40, 200, 42)


@pytest.fixture(scope="session")
def null_study(null42):
    """200 label permutations of the null data, the reference null band."""
    data = null42[0]
    grid = double_cv.TuningGrid.default("pca", data.n)
    return permutation.permutation_study(data, grid, R=200, seed=42)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# -- acceptance summary -----------------------------------------------------------

def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")
    config._criteria = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    if rep.when == "call" or (rep.when == "setup" and rep.outcome != "passed"):
        number, title = marker.args
        detail = dict(item.user_properties).get("detail", "")
        item.config._criteria[number] = (title, rep.outcome == "passed", detail)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    crit = getattr(config, "_criteria", {})
    if not crit:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(crit):
        title, ok, detail = crit[number]
        line = f"{'PASS' if ok else 'FAIL'}  [{number:2d}] {title}"
        terminalreporter.write_line(line + (f"  ({detail})" if detail else ""))
