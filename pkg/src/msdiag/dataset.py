"""Data model and CSV ingestion for binned spectra and sample metadata.

Two file kinds are read and written:

* spectra CSV, wide: header ``mz,<sample_id>,...``. The first column holds the
  lower m/z edge of each bin. Spot-level files use ``<sample_id>#<spot>``
  columns, several per sample.
* metadata CSV: header ``sample_id,group,stage,plate,day,position,week``.

Group 1 denotes cases and group 2 controls throughout the package.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np
import pandas as pd

from .errors import DatasetError

METADATA_COLUMNS = ("sample_id", "group", "stage", "plate", "day", "position", "week")
SPOT_SEPARATOR = "#"
CASES, CONTROLS = 1, 2


def _frozen(a, dtype=float):
    a = np.array(a, dtype=dtype)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class RawSpectrum:
    """Intensities on an ordered grid of contiguous bins (lower edges in Dalton)."""

    mz: np.ndarray
    intensities: np.ndarray

    def __post_init__(self):
        mz = np.asarray(self.mz, dtype=float)
        y = np.asarray(self.intensities, dtype=float)
        if mz.ndim != 1 or y.shape != mz.shape:
            raise DatasetError("m/z edges and intensities must be 1-d and of equal length")
        if mz.size > 1 and not np.all(np.diff(mz) > 0):
            raise DatasetError("m/z edges must be strictly increasing")
        if not np.all(np.isfinite(y)):
            raise DatasetError("intensities must be finite")
        object.__setattr__(self, "mz", mz if not mz.flags.writeable else _frozen(mz))
        object.__setattr__(self, "intensities", _frozen(y))

    def __len__(self):
        return self.mz.size


@dataclass(frozen=True)
class Sample:
    """One biological sample: class label, block metadata and its spot spectra."""

    sample_id: str
    group: int
    stage: Optional[int] = None
    plate: Optional[int] = None
    day: Optional[int] = None
    position: Optional[int] = None
    spots: tuple = ()

    def __post_init__(self):
        if self.spots:
            grid = self.spots[0].mz
            for s in self.spots[1:]:
                if s.mz is not grid and not np.array_equal(s.mz, grid):
                    raise DatasetError(f"sample {self.sample_id}: spots do not share one bin grid")

    def metadata(self):
        return replace(self, spots=())


@dataclass(frozen=True, eq=False)
class Dataset:
    """Samples with either spot-level raw spectra or an n x p feature matrix.

    ``features`` is set once spectra are preprocessed (or when a plain wide CSV
    is loaded); spot-level data lives in ``samples[i].spots``.
    """

    samples: tuple
    features: Optional[np.ndarray] = None
    mz: Optional[np.ndarray] = None
    week: int = 1
    bin_plan: object = None
    n_groups: int = 2
    _index: dict = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        samples = tuple(self.samples)
        if not samples:
            raise DatasetError("no samples")
        ids = [s.sample_id for s in samples]
        if len(set(ids)) != len(ids):
            dup = sorted({i for i in ids if ids.count(i) > 1})
            raise DatasetError(f"duplicate sample_id: {', '.join(dup)}")
        for s in samples:
            if not (isinstance(s.group, (int, np.integer)) and 1 <= s.group <= self.n_groups):
                raise DatasetError(f"sample {s.sample_id}: unknown group label {s.group!r}")
        object.__setattr__(self, "samples", samples)
        if self.features is not None:
            X = np.asarray(self.features, dtype=float)
            if X.ndim != 2 or X.shape[0] != len(samples):
                raise DatasetError(
                    f"feature matrix has shape {X.shape}, expected ({len(samples)}, p)")
            if not np.all(np.isfinite(X)):
                raise DatasetError("feature matrix contains non-finite values")
            object.__setattr__(self, "features", X if not X.flags.writeable else _frozen(X))
            if self.mz is not None:
                mz = np.asarray(self.mz, dtype=float)
                if mz.shape != (X.shape[1],):
                    raise DatasetError("m/z column length does not match feature count")
                object.__setattr__(self, "mz", mz if not mz.flags.writeable else _frozen(mz))
        elif not all(s.spots for s in samples):
            raise DatasetError("dataset needs a feature matrix or spot spectra for every sample")
        object.__setattr__(self, "_index", {sid: i for i, sid in enumerate(ids)})

    # -- basic views -------------------------------------------------------
    @property
    def n(self):
        return len(self.samples)

    @property
    def p(self):
        if self.features is not None:
            return self.features.shape[1]
        return len(self.samples[0].spots[0])

    @property
    def ids(self):
        return tuple(s.sample_id for s in self.samples)

    @property
    def labels(self):
        return np.array([s.group for s in self.samples], dtype=int)

    @property
    def is_spot_level(self):
        return self.features is None

    def group_counts(self):
        lab = self.labels
        return {g: int(np.sum(lab == g)) for g in range(1, self.n_groups + 1)}

    def index_of(self, sample_id):
        try:
            return self._index[sample_id]
        except KeyError:
            raise DatasetError(f"unknown sample_id {sample_id!r}") from None

    @property
    def X(self):
        if self.features is None:
            raise DatasetError("dataset holds spot-level spectra; preprocess it first")
        return self.features

    # -- derived datasets --------------------------------------------------
    def subset(self, indices):
        indices = list(indices)
        return replace(
            self,
            samples=tuple(self.samples[i] for i in indices),
            features=None if self.features is None else self.features[indices],
            _index=None,
        )

    def with_labels(self, labels):
        labels = np.asarray(labels, dtype=int)
        if labels.shape != (self.n,):
            raise DatasetError("label vector length does not match sample count")
        samples = tuple(replace(s, group=int(g)) for s, g in zip(self.samples, labels))
        return replace(self, samples=samples, _index=None)

    def with_features(self, features, mz=None, bin_plan=None):
        return replace(
            self,
            samples=tuple(s.metadata() for s in self.samples),
            features=features,
            mz=mz,
            bin_plan=bin_plan,
            _index=None,
        )

    def with_columns(self, columns):
        """Feature-level dataset restricted to the given bin indices."""
        columns = np.asarray(columns, dtype=int)
        return replace(
            self,
            features=self.X[:, columns],
            mz=None if self.mz is None else self.mz[columns],
            bin_plan=None,
            _index=None,
        )


@dataclass(frozen=True, eq=False)
class ReplicatePair:
    """Week-1 data with a (possibly partial) week-2 remeasurement of the same samples.

    ``week1_index[k]`` is the week-1 row of the k-th week-2 sample.
    """

    week1: Dataset
    week2: Dataset
    week1_index: np.ndarray

    @property
    def overlap(self):
        return self.week2.n

    @property
    def missing_ids(self):
        present = set(self.week2.ids)
        return tuple(i for i in self.week1.ids if i not in present)


def pair_replicates(week1, week2):
    """Pair week-2 samples with their week-1 originals by ``sample_id``."""
    index = []
    for s in week2.samples:
        if s.sample_id not in week1._index:
            raise DatasetError(f"week-2 sample {s.sample_id!r} is absent from week 1")
        i = week1.index_of(s.sample_id)
        if week1.samples[i].group != s.group:
            raise DatasetError(
                f"label mismatch for {s.sample_id!r}: week 1 has {week1.samples[i].group}, "
                f"week 2 has {s.group}")
        index.append(i)
    if week1.features is not None and week2.features is not None and week1.p != week2.p:
        raise DatasetError(f"week 1 has {week1.p} bins but week 2 has {week2.p}")
    return ReplicatePair(week1, week2, _frozen(index, dtype=int))


# -- file IO -----------------------------------------------------------------

def _optional_int(value, column, sample_id):
    if value is None or (isinstance(value, float) and np.isnan(value)) or value == "":
        return None
    try:
        f = float(value)
    except (TypeError, ValueError):
        raise DatasetError(f"sample {sample_id}: {column} {value!r} is not an integer") from None
    if not f.is_integer():
        raise DatasetError(f"sample {sample_id}: {column} {value!r} is not an integer")
    return int(f)


def read_metadata(path, n_groups=2):
    """Parse a metadata CSV into ``(samples, week)``; samples carry no spectra."""
    try:
        table = pd.read_csv(path, dtype=str, keep_default_na=False)
    except pd.errors.EmptyDataError:
        raise DatasetError(f"{path}: no samples") from None
    if "sample_id" not in table.columns or "group" not in table.columns:
        raise DatasetError(f"{path}: metadata needs at least sample_id and group columns")
    unknown = [c for c in table.columns if c not in METADATA_COLUMNS]
    if unknown:
        raise DatasetError(f"{path}: unexpected metadata columns {unknown}")
    if len(table) == 0:
        raise DatasetError(f"{path}: no samples")
    samples = []
    for row in table.to_dict("records"):
        sid = row["sample_id"].strip()
        group = _optional_int(row["group"], "group", sid)
        if group is None or not 1 <= group <= n_groups:
            raise DatasetError(f"sample {sid}: unknown group label {row['group']!r}")
        samples.append(Sample(
            sample_id=sid,
            group=group,
            stage=_optional_int(row.get("stage"), "stage", sid),
            plate=_optional_int(row.get("plate"), "plate", sid),
            day=_optional_int(row.get("day"), "day", sid),
            position=_optional_int(row.get("position"), "position", sid),
        ))
    weeks = {_optional_int(w, "week", "?") for w in table["week"]} if "week" in table else {None}
    weeks.discard(None)
    if len(weeks) > 1:
        raise DatasetError(f"{path}: metadata mixes weeks {sorted(weeks)}; use one file per week")
    return samples, (weeks.pop() if weeks else 1)


def read_spectra(path):
    """Read a wide spectra CSV into ``(mz, columns, matrix)``; matrix is bins x columns."""
    try:
        table = pd.read_csv(path, float_precision="round_trip")
    except pd.errors.EmptyDataError:
        raise DatasetError(f"{path}: empty spectra file") from None
    if table.columns[0] != "mz":
        raise DatasetError(f"{path}: first column must be 'mz'")
    try:
        values = table.to_numpy(dtype=float)
    except ValueError:
        raise DatasetError(f"{path}: non-numeric entries in spectra") from None
    mz = values[:, 0]
    if mz.size == 0:
        raise DatasetError(f"{path}: no bins")
    if not np.all(np.isfinite(values)):
        raise DatasetError(f"{path}: non-finite values in spectra")
    if mz.size > 1 and not np.all(np.diff(mz) > 0):
        raise DatasetError(f"{path}: m/z column is not strictly increasing")
    columns = [str(c) for c in table.columns[1:]]
    return mz, columns, values[:, 1:]


def _split_spot_columns(columns, path):
    spotted = [SPOT_SEPARATOR in c for c in columns]
    if any(spotted) and not all(spotted):
        raise DatasetError(f"{path}: mixes spot-level and sample-level columns")
    if not any(spotted):
        return None
    layout = {}
    for k, c in enumerate(columns):
        sid, _, spot = c.rpartition(SPOT_SEPARATOR)
        try:
            spot = int(spot)
        except ValueError:
            raise DatasetError(f"{path}: bad spot suffix in column {c!r}") from None
        layout.setdefault(sid, []).append((spot, k))
    for sid, spots in layout.items():
        numbers = [s for s, _ in spots]
        if len(set(numbers)) != len(numbers):
            raise DatasetError(f"{path}: duplicate spot number for sample {sid!r}")
        spots.sort()
    return layout


def _assemble(samples, week, mz, columns, matrix, path, n_groups):
    ids = [s.sample_id for s in samples]
    if len(set(ids)) != len(ids):
        dup = sorted({i for i in ids if ids.count(i) > 1})
        raise DatasetError(f"duplicate sample_id: {', '.join(dup)}")
    layout = _split_spot_columns(columns, path)
    found = list(layout) if layout is not None else columns
    if len(set(found)) != len(found):
        raise DatasetError(f"{path}: duplicate spectrum columns")
    if set(found) != set(ids):
        extra = sorted(set(found) - set(ids))
        missing = sorted(set(ids) - set(found))
        raise DatasetError(
            f"{path}: spectra ({len(found)} samples) do not match metadata ({len(ids)} samples);"
            f" unmatched spectra {extra[:5]}, samples without spectra {missing[:5]}")
    if layout is None:
        col = {c: k for k, c in enumerate(columns)}
        X = matrix[:, [col[i] for i in ids]].T
        return Dataset(samples=tuple(samples), features=X, mz=mz, week=week, n_groups=n_groups)
    grid = _frozen(mz)
    full = []
    for s in samples:
        spots = tuple(RawSpectrum(grid, matrix[:, k]) for _, k in layout[s.sample_id])
        full.append(replace(s, spots=spots))
    return Dataset(samples=tuple(full), week=week, n_groups=n_groups)


def load_dataset(spectra_path, metadata_path, n_groups=2):
    """Load spectra plus metadata; sample order follows the metadata rows."""
    samples, week = read_metadata(metadata_path, n_groups=n_groups)
    mz, columns, matrix = read_spectra(spectra_path)
    return _assemble(samples, week, mz, columns, matrix, spectra_path, n_groups)


def load_replicates(spectra_path, week1, metadata_path=None):
    """Load week-2 spectra and pair them with ``week1``.

    Without a metadata file, labels and block data are taken from week 1 and
    the sample order is week 1's order restricted to the remeasured ids.
    """
    mz, columns, matrix = read_spectra(spectra_path)
    if metadata_path is not None:
        samples, week = read_metadata(metadata_path, n_groups=week1.n_groups)
    else:
        layout = _split_spot_columns(columns, spectra_path)
        present = set(layout) if layout is not None else set(columns)
        unknown = sorted(present - set(week1.ids))
        if unknown:
            raise DatasetError(f"week-2 sample {unknown[0]!r} is absent from week 1")
        samples = [s.metadata() for s in week1.samples if s.sample_id in present]
        week = 2
    week2 = _assemble(samples, week, mz, columns, matrix, spectra_path, week1.n_groups)
    return pair_replicates(week1, week2)


def write_metadata(samples, path, week=1):
    rows = []
    for s in samples:
        rows.append({
            "sample_id": s.sample_id,
            "group": s.group,
            "stage": "" if s.stage is None else s.stage,
            "plate": "" if s.plate is None else s.plate,
            "day": "" if s.day is None else s.day,
            "position": "" if s.position is None else s.position,
            "week": week,
        })
    pd.DataFrame(rows, columns=list(METADATA_COLUMNS)).to_csv(path, index=False)


def write_spectra(path, mz, columns, matrix):
    """Write a wide spectra CSV; ``matrix`` is bins x columns. Floats round-trip exactly."""
    frame = pd.DataFrame(np.asarray(matrix, dtype=float), columns=list(columns))
    frame.insert(0, "mz", np.asarray(mz, dtype=float))
    frame.to_csv(path, index=False, float_format="%.17g")


def save_dataset(data, spectra_path, metadata_path):
    """Write ``data`` in the layout :func:`load_dataset` reads."""
    Path(spectra_path).parent.mkdir(parents=True, exist_ok=True)
    Path(metadata_path).parent.mkdir(parents=True, exist_ok=True)
    if data.features is not None:
        mz = data.mz if data.mz is not None else np.arange(data.p, dtype=float)
        write_spectra(spectra_path, mz, data.ids, data.X.T)
    else:
        columns, blocks = [], []
        for s in data.samples:
            for k, spot in enumerate(s.spots, start=1):
                columns.append(f"{s.sample_id}{SPOT_SEPARATOR}{k}")
                blocks.append(spot.intensities)
        write_spectra(spectra_path, data.samples[0].spots[0].mz, columns, np.column_stack(blocks))
    write_metadata(data.samples, metadata_path, week=data.week)


def dataset_from_arrays(X, labels, ids=None, mz=None, week=1, n_groups=2, **meta):
    """Convenience constructor for a feature-level dataset.

    Extra keyword arguments (``stage``, ``plate``, ``day``, ``position``) take
    per-sample sequences.
    """
    X = np.asarray(X, dtype=float)
    labels = np.asarray(labels, dtype=int)
    ids = ids if ids is not None else [f"S{i + 1:03d}" for i in range(X.shape[0])]
    samples = []
    for i, (sid, g) in enumerate(zip(ids, labels)):
        extra = {k: (None if v[i] is None else int(v[i])) for k, v in meta.items()}
        samples.append(Sample(sample_id=str(sid), group=int(g), **extra))
    return Dataset(samples=tuple(samples), features=X, mz=mz, week=week, n_groups=n_groups)
