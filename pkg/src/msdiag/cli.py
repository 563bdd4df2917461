"""Command-line front end: ``msdiag <subcommand> ...``.

Every subcommand writes a manifest (arguments, seeds, library versions) next
to its main output. The wall-clock timestamp lives in the manifest's
``created`` key only, so all other output is byte-identical across reruns.
"""

from __future__ import annotations

import argparse
import json
import platform
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
import pandas as pd
import scipy

from . import __version__
from .dataset import load_dataset, load_replicates, pair_replicates, save_dataset, write_spectra
from .design import DesignSpec, allocate, validate_design
from .double_cv import TuningGrid, double_cv, replicate_swap_eval
from .errors import DatasetError, MsDiagError, PosthocError
from .permutation import permutation_study
from .posthoc import BinSelection, contrast, correlation_map, reduce_bins
from .preprocess import BinPlan, PreprocessConfig, preprocess_dataset, raw_upper_edges
from .synthgen import SynthSpec, generate, write_truth


def _write_json(obj, path):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2)
        fh.write("\n")


def _prefixed(prefix, name):
    """``prefix`` ending in a separator is a directory; otherwise a file-name stem."""
    prefix = str(prefix)
    if prefix.endswith(("/", "\\")):
        Path(prefix).mkdir(parents=True, exist_ok=True)
    else:
        Path(prefix).parent.mkdir(parents=True, exist_ok=True)
    return Path(prefix + name)


def _ensure_parent(path):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    return Path(path)


def write_manifest(path, args, seeds=None, extra=None):
    config = {k: v for k, v in vars(args).items() if k != "func"}
    _write_json({
        "command": args.command,
        "config": config,
        "seeds": seeds or {},
        "versions": {"msdiag": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
                     "pandas": pd.__version__, "python": platform.python_version()},
        **(extra or {}),
        "created": datetime.now(timezone.utc).isoformat(timespec="seconds"),
    }, path)


def _manifest_for(out):
    out = Path(out)
    return out.with_name(out.stem + ".manifest.json")


def _preprocess_config(args):
    return PreprocessConfig.from_json(args.config) if getattr(args, "config", None) else PreprocessConfig()


def _load(args):
    """Feature-level dataset from ``--in``/``--meta``; spot-level input is preprocessed first."""
    data = load_dataset(args.input, args.meta)
    if data.is_spot_level:
        data = preprocess_dataset(data, _preprocess_config(args))
    return data


def _grid(args, data):
    return TuningGrid.parse(args.method, args.grid, data.n, data.n_groups)


# -- subcommands ---------------------------------------------------------------

def cmd_design(args):
    spec = DesignSpec.from_json(args.spec)
    if args.seed is not None:
        spec = DesignSpec.from_dict({**spec.to_dict(), "seed": args.seed})
    table = allocate(spec)
    out = _ensure_parent(args.out)
    table.to_csv(out)
    report = validate_design(table, plates=spec.plates)
    balance = out.with_name(out.stem + ".balance.json")
    _write_json(report.to_dict(), balance)
    write_manifest(_manifest_for(out), args, seeds={"design": spec.seed},
                   extra={"spec": spec.to_dict()})
    for w in report.warnings:
        print(f"warning: {w}", file=sys.stderr)
    print(f"{len(table)} rows on {spec.plates} plate(s); balanced: {report.passed}")
    return 0


def cmd_synth(args):
    spec = SynthSpec.from_json(args.spec)
    if args.seed is not None:
        spec = SynthSpec.from_dict({**spec.to_dict(), "seed": args.seed})
    week1, week2, truth = generate(spec)
    p = args.out_prefix
    save_dataset(week1, _prefixed(p, "spectra_week1.csv"), _prefixed(p, "metadata_week1.csv"))
    save_dataset(week2, _prefixed(p, "spectra_week2.csv"), _prefixed(p, "metadata_week2.csv"))
    write_truth(truth, _prefixed(p, "truth.json"))
    write_manifest(_prefixed(p, "manifest.json"), args, seeds={"synth": spec.seed},
                   extra={"spec": spec.to_dict()})
    print(f"week 1: {week1.n} samples, week 2: {week2.n} samples, {week1.p} raw bins")
    return 0


def cmd_preprocess(args):
    data = load_dataset(args.input, args.meta)
    config = _preprocess_config(args)
    plan = BinPlan.from_csv(args.plan) if args.plan else None
    out = preprocess_dataset(data, config, plan)
    p = args.out_prefix
    save_dataset(out, _prefixed(p, "features.csv"), _prefixed(p, "metadata.csv"))
    out.bin_plan.to_csv(_prefixed(p, "bin_plan.csv"))
    write_manifest(_prefixed(p, "manifest.json"), args, extra={"preprocess": config.to_dict()})
    print(f"{out.n} samples, {out.p} analysis bins")
    return 0


def cmd_dcv(args):
    if args.replicates:
        week1 = load_dataset(args.input, args.meta)
        pair = load_replicates(args.replicates, week1, args.replicate_meta)
        if week1.is_spot_level or pair.week2.is_spot_level:
            if not (week1.is_spot_level and pair.week2.is_spot_level):
                raise DatasetError("week 1 and week 2 must both be raw spot spectra or both features")
            config = _preprocess_config(args)
            week1 = preprocess_dataset(week1, config)
            week2 = preprocess_dataset(pair.week2, config, plan=week1.bin_plan)
            pair = pair_replicates(week1, week2)
        report = replicate_swap_eval(pair, _grid(args, pair.week1), threads=args.threads)
    else:
        data = _load(args)
        report = double_cv(data, _grid(args, data), threads=args.threads).report
    out = _ensure_parent(args.out)
    report.to_json(out)
    if args.per_sample:
        report.to_per_sample_csv(_ensure_parent(args.per_sample))
    if args.summary:
        report.to_summary_csv(_ensure_parent(args.summary))
    write_manifest(_manifest_for(out), args)
    print(" ".join(f"{k}={v:.4g}" for k, v in report.summary().items()))
    return 0


def cmd_permute(args):
    data = _load(args)
    summary = permutation_study(data, _grid(args, data), R=args.reps, seed=args.seed,
                                stratify=args.stratify, threads=args.threads)
    out = _ensure_parent(args.out)
    summary.to_json(out)
    if args.csv:
        summary.to_csv(_ensure_parent(args.csv))
    write_manifest(_manifest_for(out), args, seeds={"permutation": args.seed})
    lo, hi = summary.recognition_band()
    print(f"R={summary.R} median misclassification={summary.medians['misclassification']:.4g}"
          f" T null band=({lo:.4g}, {hi:.4g})")
    return 0


def _edges(data, plan_path):
    if plan_path:
        plan = BinPlan.from_csv(plan_path)
        if plan.n_bins != data.p:
            raise PosthocError(f"bin plan has {plan.n_bins} bins, data has {data.p}")
        return plan.lower, plan.upper
    if data.mz is None:
        return None, None
    if data.p == 1:
        return data.mz, np.full(1, np.nan)
    return data.mz, raw_upper_edges(data.mz)


def cmd_reduce(args):
    data = _load(args)
    sel = reduce_bins(data)
    lower, upper = _edges(data, args.plan)
    out = _ensure_parent(args.out)
    sel.to_frame(lower, upper).to_csv(out, index=False, float_format="%.17g")
    if args.reduced_out:
        reduced = data.with_columns(sel.indices)
        write_spectra(_ensure_parent(args.reduced_out),
                      reduced.mz if reduced.mz is not None else sel.indices.astype(float),
                      reduced.ids, reduced.X.T)
    write_manifest(_manifest_for(out), args, extra={"v_ref": sel.v_ref})
    print(f"{sel.indices.size} bins in {sel.n_clusters} clusters (v_ref={sel.v_ref:.4g})")
    return 0


def _bin_index(data, text):
    """Bin from ``#<index>`` or an m/z value (the bin whose lower edge is nearest below)."""
    if text.startswith("#"):
        return int(text[1:])
    if data.mz is None:
        raise PosthocError("data has no m/z column; give bins as #<index>")
    return max(int(np.searchsorted(data.mz, float(text), side="right")) - 1, 0)


def cmd_explore(args):
    data = _load(args)
    selection = None
    if args.selection:
        selection = BinSelection.from_frame(pd.read_csv(args.selection), data.p)
    ex = correlation_map(data, k=args.k, selection=selection)
    p = args.out_prefix
    float_fmt = "%.17g"
    ex.correlation_frame().to_csv(_prefixed(p, "correlations.csv"), index=False, float_format=float_fmt)
    ex.scores_frame().to_csv(_prefixed(p, "scores.csv"), index=False, float_format=float_fmt)
    ex.loadings_frame().to_csv(_prefixed(p, "loadings.csv"), index=False, float_format=float_fmt)
    ex.means_frame().to_csv(_prefixed(p, "means.csv"), index=False, float_format=float_fmt)
    if args.contrast:
        a, b = (_bin_index(data, t.strip()) for t in args.contrast.split(","))
    else:
        a, b = ex.extreme_bins()
    contrast(data, a, b).to_csv(_prefixed(p, "contrast.csv"), index=False, float_format=float_fmt)
    flagged = int(ex.out_of_range.sum())
    write_manifest(_prefixed(p, "manifest.json"), args,
                   extra={"contrast_bins": [a, b], "rho_out_of_range": flagged})
    if flagged:
        print(f"warning: {flagged} bin(s) with |rho| > 1", file=sys.stderr)
    print(f"contrast bins {a} and {b}; max |rho| = {np.abs(ex.rho).max():.4g}")
    return 0


# -- parser ----------------------------------------------------------------------

def _data_args(p):
    p.add_argument("--in", dest="input", required=True, help="spectra or features CSV")
    p.add_argument("--meta", required=True, help="metadata CSV")
    p.add_argument("--config", help="preprocessing JSON, used when the input is raw spot spectra")


def _model_args(p):
    p.add_argument("--method", default="pca", help="mp, pca, ridge, mp-euclid or pca-euclid")
    p.add_argument("--grid", default="auto", help="'auto', 'a:b' or comma-separated values")
    p.add_argument("--threads", type=int, default=1, help="worker cap; results do not depend on it")


def build_parser():
    parser = argparse.ArgumentParser(prog="msdiag", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"msdiag {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="{design,synth,preprocess,dcv,permute,reduce,explore}")

    p = sub.add_parser("design", help="randomized block allocation")
    p.add_argument("--spec", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_design)

    p = sub.add_parser("synth", help="synthetic spot spectra with planted signal")
    p.add_argument("--spec", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--out-prefix", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("preprocess", help="within-sample preprocessing to analysis vectors")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--meta", required=True)
    p.add_argument("--config")
    p.add_argument("--plan", help="reuse an existing bin plan CSV (e.g. week 1's)")
    p.add_argument("--out-prefix", required=True)
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("dcv", help="double cross-validation report")
    _data_args(p)
    _model_args(p)
    p.add_argument("--replicates", help="week-2 spectra CSV; evaluates the replicate swap")
    p.add_argument("--replicate-meta", help="week-2 metadata CSV (default: week 1's)")
    p.add_argument("--out", required=True)
    p.add_argument("--per-sample")
    p.add_argument("--summary")
    p.set_defaults(func=cmd_dcv)

    p = sub.add_parser("permute", help="label-permutation null band")
    _data_args(p)
    _model_args(p)
    p.add_argument("--reps", type=int, default=600)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--stratify", choices=["plate"])
    p.add_argument("--out", required=True)
    p.add_argument("--csv")
    p.set_defaults(func=cmd_permute)

    p = sub.add_parser("reduce", help="variance-seeded bin-cluster selection")
    _data_args(p)
    p.add_argument("--plan", help="bin plan CSV for m/z edges")
    p.add_argument("--out", required=True)
    p.add_argument("--reduced-out", help="also write the selected bins as a features CSV")
    p.set_defaults(func=cmd_reduce)

    p = sub.add_parser("explore", help="discriminant correlations, components and contrast")
    _data_args(p)
    p.add_argument("--k", type=int, default=2)
    p.add_argument("--selection", help="selection CSV from 'reduce'")
    p.add_argument("--contrast", help="two locations 'a,b' as m/z values or #bin indices")
    p.add_argument("--out-prefix", required=True)
    p.set_defaults(func=cmd_explore)
    return parser


def run(argv=None):
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    if not argv:
        parser.print_usage(sys.stderr)
        return 2
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 2
    try:
        return args.func(args)
    except MsDiagError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main():
    sys.exit(run())
