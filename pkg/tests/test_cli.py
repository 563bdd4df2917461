import json

import pandas as pd
import pytest

from msdiag.cli import run


def write_json(path, obj):
    path.write_text(json.dumps(obj))
    return path


@pytest.fixture(scope="module")
def synth_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("synth")
    spec = write_json(d / "spec.json", {"planted": {"n": 60, "p": 200, "seed": 5}})
    assert run(["synth", "--spec", str(spec), "--out-prefix", f"{d}/"]) == 0
    return d


@pytest.fixture(scope="module")
def features(synth_dir):
    d = synth_dir
    assert run(["preprocess", "--in", str(d / "spectra_week1.csv"), "--meta", str(d / "metadata_week1.csv"),
                "--out-prefix", f"{d}/w1_"]) == 0
    return d / "w1_features.csv", d / "w1_metadata.csv"


def test_no_arguments_prints_usage(capsys):
    assert run([]) != 0
    assert "usage" in capsys.readouterr().err


def test_unknown_flag_and_command(capsys):
    assert run(["dcv", "--bogus"]) != 0
    assert run(["fly"]) != 0


def test_synth_outputs(synth_dir):
    names = {p.name for p in synth_dir.iterdir()}
    assert {"spectra_week1.csv", "metadata_week1.csv", "spectra_week2.csv", "metadata_week2.csv",
            "truth.json", "manifest.json"} <= names
    m = json.loads((synth_dir / "manifest.json").read_text())
    assert m["command"] == "synth" and m["seeds"]["synth"] == 5
    assert {"numpy", "scipy", "pandas", "msdiag", "python"} <= set(m["versions"])


@pytest.mark.slow
def test_end_to_end_dcv(synth_dir, features, tmp_path):
    f, meta = features
    out = tmp_path / "report.json"
    assert run(["dcv", "--in", str(f), "--meta", str(meta), "--method", "pca",
                "--out", str(out), "--per-sample", str(tmp_path / "ps.csv")]) == 0
    rep = json.loads(out.read_text())
    assert rep["T"] >= 90, rep["T"]
    ps = pd.read_csv(tmp_path / "ps.csv")
    assert list(ps.columns) == ["sample_id", "label", "p1", "allocation", "chosen_param"]
    assert len(ps) == 60
    assert (tmp_path / "report.manifest.json").exists()


def test_replicate_swap_from_spot_files(synth_dir, tmp_path):
    d = synth_dir
    out = tmp_path / "swap.json"
    assert run(["dcv", "--in", str(d / "spectra_week1.csv"), "--meta", str(d / "metadata_week1.csv"),
                "--replicates", str(d / "spectra_week2.csv"),
                "--replicate-meta", str(d / "metadata_week2.csv"),
                "--grid", "1:3", "--out", str(out)]) == 0
    rep = json.loads(out.read_text())
    assert rep["n_evaluated"] == 60 and rep["T"] > 80


def test_reruns_are_byte_identical(features, tmp_path):
    f, meta = features
    outs = []
    for k in range(2):
        d = tmp_path / str(k)
        assert run(["dcv", "--in", str(f), "--meta", str(meta), "--grid", "1,2,3",
                    "--out", str(d / "r.json"), "--per-sample", str(d / "p.csv")]) == 0
        outs.append(d)
    for name in ("r.json", "p.csv"):
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()
    a, b = (json.loads((d / "r.manifest.json").read_text()) for d in outs)
    a.pop("created"), b.pop("created")
    a["config"].pop("out"), b["config"].pop("out")
    a["config"].pop("per_sample"), b["config"].pop("per_sample")
    assert a == b


def test_permute_single_rep_is_that_replication(features, tmp_path):
    f, meta = features
    assert run(["permute", "--in", str(f), "--meta", str(meta), "--grid", "1,2", "--reps", "1",
                "--seed", "3", "--out", str(tmp_path / "s.json"), "--csv", str(tmp_path / "r.csv")]) == 0
    s = json.loads((tmp_path / "s.json").read_text())
    row = pd.read_csv(tmp_path / "r.csv").iloc[0]
    assert s["R"] == 1
    for m in ("misclassification", "AUC", "B"):
        assert s["median"][m] == s["q2.5"][m] == s["q97.5"][m] == pytest.approx(row[m], abs=0)


def test_reduce_and_explore(features, tmp_path):
    f, meta = features
    sel = tmp_path / "sel.csv"
    plan = f.parent / "w1_bin_plan.csv"
    assert run(["reduce", "--in", str(f), "--meta", str(meta), "--plan", str(plan), "--out", str(sel),
                "--reduced-out", str(tmp_path / "red.csv")]) == 0
    frame = pd.read_csv(sel)
    assert list(frame.columns) == ["bin", "lower_mz", "upper_mz", "cluster_id"]
    assert (frame.lower_mz < frame.upper_mz).all()
    red = pd.read_csv(tmp_path / "red.csv")
    assert red.shape[0] == frame["bin"].nunique()
    assert run(["explore", "--in", str(f), "--meta", str(meta), "--selection", str(sel),
                "--out-prefix", f"{tmp_path}/x_"]) == 0
    for name in ("correlations", "scores", "loadings", "means", "contrast"):
        assert (tmp_path / f"x_{name}.csv").exists()
    corr = pd.read_csv(tmp_path / "x_correlations.csv")
    assert {"bin", "mz", "rho"} <= set(corr.columns)
    assert run(["explore", "--in", str(f), "--meta", str(meta), "--contrast", "#3,#4",
                "--out-prefix", f"{tmp_path}/y_"]) == 0
    c = pd.read_csv(tmp_path / "y_contrast.csv")
    assert len(c) == 60


def test_design_command(tmp_path):
    spec = write_json(tmp_path / "d.json", {"groups": {"1": 63, "2": 50},
                                           "strata": {"1": [11, 28, 12, 12]}, "plates": 3})
    out = tmp_path / "design.csv"
    assert run(["design", "--spec", str(spec), "--seed", "4", "--out", str(out)]) == 0
    table = pd.read_csv(out)
    assert len(table) == 113
    bal = json.loads((tmp_path / "design.balance.json").read_text())
    assert bal["passed"] and bal["max_imbalance"] <= 1


def test_errors_are_module_qualified(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{nope")
    assert run(["design", "--spec", str(bad), "--out", str(tmp_path / "x.csv")]) == 1
    assert "error: design:" in capsys.readouterr().err
    (tmp_path / "s.csv").write_text("mz,a\n1000,1\n")
    (tmp_path / "m.csv").write_text("sample_id,group\nb,1\n")
    assert run(["dcv", "--in", str(tmp_path / "s.csv"), "--meta", str(tmp_path / "m.csv"),
                "--out", str(tmp_path / "r.json")]) == 1
    assert "error: dataset:" in capsys.readouterr().err
    assert run(["dcv", "--in", str(tmp_path / "missing.csv"), "--meta", str(tmp_path / "m.csv"),
                "--out", str(tmp_path / "r.json")]) == 1
