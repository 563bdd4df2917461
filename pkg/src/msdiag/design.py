"""Randomized block designs: spread each group (and stratum) evenly over plates.

Counts for every cell (a group, or a stratum within a group) are divided as
evenly as integers allow. The plates receiving the remainder are drawn at
random among those currently holding the fewest samples of that group, which
keeps group totals balanced too. Positions within each plate are shuffled.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .dataset import METADATA_COLUMNS, Sample
from .errors import DesignError


def _int_keys(d):
    return {int(k): v for k, v in (d or {}).items()}


@dataclass(frozen=True)
class DesignSpec:
    """Group sizes, optional strata counts per group, and the plate layout.

    ``strata[g]`` lists counts for strata 1, 2, ... of group ``g``; groups
    without strata get no stage. ``days`` gives the day of each plate and
    defaults to one plate per consecutive day.
    """

    groups: dict
    strata: dict = field(default_factory=dict)
    plates: int = 1
    positions: int | None = None
    days: tuple | None = None
    weeks: int = 1
    seed: int = 0

    def __post_init__(self):
        groups = {int(g): int(c) for g, c in _int_keys(self.groups).items()}
        if not groups or any(c < 0 for c in groups.values()) or sum(groups.values()) == 0:
            raise DesignError("group sizes must be non-negative with a positive total")
        strata = {g: tuple(int(c) for c in s) for g, s in _int_keys(self.strata).items()}
        for g, counts in strata.items():
            if g not in groups:
                raise DesignError(f"strata given for unknown group {g}")
            if any(c < 0 for c in counts) or sum(counts) != groups[g]:
                raise DesignError(
                    f"strata inconsistent: group {g} has {groups[g]} samples, strata sum to {sum(counts)}")
        if int(self.plates) < 1:
            raise DesignError("need at least one plate")
        plates = int(self.plates)
        total = sum(groups.values())
        positions = -(-total // plates) if self.positions is None else int(self.positions)
        if total > plates * positions:
            raise DesignError(
                f"capacity exceeded: {total} samples, {plates} plates x {positions} positions")
        days = tuple(range(1, plates + 1)) if self.days is None else tuple(int(d) for d in self.days)
        if len(days) != plates:
            raise DesignError(f"{plates} plates but {len(days)} days given")
        if len(set(days)) != len(days):
            raise DesignError("each plate needs its own day")
        if self.weeks not in (1, 2):
            raise DesignError("weeks must be 1 or 2")
        object.__setattr__(self, "groups", dict(sorted(groups.items())))
        object.__setattr__(self, "strata", strata)
        object.__setattr__(self, "plates", plates)
        object.__setattr__(self, "positions", positions)
        object.__setattr__(self, "days", days)

    @property
    def total(self):
        return sum(self.groups.values())

    def to_dict(self):
        return {"groups": {str(g): c for g, c in self.groups.items()},
                "strata": {str(g): list(s) for g, s in self.strata.items()},
                "plates": self.plates, "positions": self.positions,
                "days": list(self.days), "weeks": self.weeks, "seed": self.seed}

    @classmethod
    def from_dict(cls, d):
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise DesignError(f"unknown design options: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_json(cls, path):
        with open(path) as fh:
            try:
                return cls.from_dict(json.load(fh))
            except json.JSONDecodeError as exc:
                raise DesignError(f"{path}: malformed JSON ({exc})") from None


def sample_id(group, number):
    prefix = {1: "case", 2: "ctrl"}.get(group, f"g{group}_")
    return f"{prefix}{number:03d}"


@dataclass
class DesignTable:
    rows: pd.DataFrame

    def __post_init__(self):
        missing = [c for c in METADATA_COLUMNS if c not in self.rows.columns]
        if missing:
            raise DesignError(f"design table lacks columns {missing}")

    def __len__(self):
        return len(self.rows)

    @classmethod
    def from_counts(cls, counts, days=None):
        """Table with the given ``{plate: {(group, stage): count}}`` layout; positions in order."""
        rows, numbers = [], {}
        for plate in sorted(counts):
            pos = 0
            for (group, stage), c in counts[plate].items():
                for _ in range(c):
                    numbers[group] = numbers.get(group, 0) + 1
                    pos += 1
                    rows.append((sample_id(group, numbers[group]), group, stage, plate,
                                 plate if days is None else days[plate], pos, 1))
        return cls(_frame(rows))

    def week(self, w):
        return self.rows[self.rows["week"] == w]

    def samples(self, week=1):
        out = []
        for r in self.week(week).itertuples(index=False):
            out.append(Sample(sample_id=r.sample_id, group=int(r.group),
                              stage=None if pd.isna(r.stage) else int(r.stage),
                              plate=int(r.plate), day=int(r.day), position=int(r.position)))
        return out

    def to_csv(self, path):
        self.rows.to_csv(path, index=False)


def _frame(rows):
    frame = pd.DataFrame(rows, columns=list(METADATA_COLUMNS))
    frame["stage"] = frame["stage"].astype("Int64")
    return frame


def allocate(spec: DesignSpec) -> DesignTable:
    """Balanced random assignment of samples to plates, days and positions."""
    rng = np.random.default_rng(spec.seed)
    P, cap = spec.plates, spec.positions
    plate_total = np.zeros(P, dtype=int)
    assigned = []  # (sample_id, group, stage, plate)
    for g, n_g in spec.groups.items():
        cells = list(enumerate(spec.strata[g], start=1)) if g in spec.strata else [(None, n_g)]
        group_count = np.zeros(P, dtype=int)
        number = 0
        for stage, c in cells:
            base, r = divmod(c, P)
            counts = np.full(P, base)
            if r:
                full = (plate_total + base + 1 > cap).astype(int)
                order = np.lexsort((rng.random(P), plate_total, group_count, full))
                counts[order[:r]] += 1
            group_count += counts
            plate_total += counts
            plate_of = rng.permutation(np.repeat(np.arange(P), counts))
            for plate in plate_of:
                number += 1
                assigned.append((sample_id(g, number), g, stage, int(plate) + 1))
    if np.any(plate_total > cap):
        raise DesignError(f"capacity exceeded on plate(s) {list(np.flatnonzero(plate_total > cap) + 1)}")

    rows = []
    for plate in range(1, P + 1):
        members = [a for a in assigned if a[3] == plate]
        positions = rng.permutation(len(members)) + 1
        day = spec.days[plate - 1]
        for (sid, g, stage, _), pos in sorted(zip(members, positions), key=lambda t: t[1]):
            rows.append((sid, g, stage, plate, day, int(pos), 1))
    if spec.weeks == 2:
        rows += [r[:-1] + (2,) for r in rows]
    return DesignTable(_frame(rows))


@dataclass
class BalanceReport:
    group_counts: pd.DataFrame
    stratum_counts: pd.DataFrame
    group_spread: dict
    stratum_spread: dict
    passed: bool
    failures: list
    warnings: list

    @property
    def max_imbalance(self):
        return max([0, *self.group_spread.values(), *self.stratum_spread.values()])

    def to_dict(self):
        return {
            "passed": self.passed,
            "max_imbalance": int(self.max_imbalance),
            "group_spread": {str(k): int(v) for k, v in self.group_spread.items()},
            "stratum_spread": {f"{g}/{s}": int(v) for (g, s), v in self.stratum_spread.items()},
            "group_counts": {str(c): self.group_counts[c].astype(int).tolist()
                             for c in self.group_counts.columns},
            "failures": self.failures,
            "warnings": self.warnings,
        }


def _rounding_ok(counts, sizes, share):
    expected = np.asarray(sizes, dtype=float) * share
    tol = 1e-9
    return bool(np.all((counts >= np.floor(expected + tol)) & (counts <= np.ceil(expected - tol))))


def validate_design(table: DesignTable, plates=None) -> BalanceReport:
    """Per-plate counts and a balance verdict.

    A cell (group, or stratum within a group) passes when its per-plate counts
    differ by at most one, or when each plate's count is the expected count
    for that plate's size rounded down or up. Empty plates (``plates``
    is a plate count or a list of ids; listed plates holding no samples) only
    raise a warning.
    """
    rows = table.week(1) if (table.rows["week"] == 1).any() else table.rows
    if len(rows) == 0:
        raise DesignError("design table is empty")
    if isinstance(plates, (int, np.integer)):
        plates = range(1, int(plates) + 1)
    plate_ids = sorted(set(rows["plate"]) | set(plates or ()))
    g_counts = pd.crosstab(rows["plate"], rows["group"]).reindex(plate_ids, fill_value=0)
    staged = rows.dropna(subset=["stage"])
    s_counts = (pd.crosstab(staged["plate"], [staged["group"], staged["stage"]])
                .reindex(plate_ids, fill_value=0) if len(staged) else pd.DataFrame(index=plate_ids))
    sizes = g_counts.sum(axis=1).to_numpy()
    N = sizes.sum()
    failures, warnings = [], []

    g_spread = {}
    for g in g_counts.columns:
        c = g_counts[g].to_numpy()
        g_spread[int(g)] = int(c.max() - c.min())
        if g_spread[int(g)] > 1 and not _rounding_ok(c, sizes, c.sum() / N):
            failures.append(f"group {g}: per-plate counts {c.tolist()} are unbalanced")
    s_spread = {}
    for g, s in s_counts.columns:
        c = s_counts[(g, s)].to_numpy()
        key = (int(g), int(s))
        s_spread[key] = int(c.max() - c.min())
        in_group = g_counts[g].to_numpy()
        if s_spread[key] > 1 and not _rounding_ok(c, in_group, c.sum() / in_group.sum()):
            failures.append(f"group {g} stratum {s}: per-plate counts {c.tolist()} are unbalanced")

    for plate, size in zip(plate_ids, sizes):
        if size == 0:
            warnings.append(f"plate {plate} is empty")
    for plate, grp in rows.groupby("plate"):
        if grp["position"].duplicated().any():
            failures.append(f"plate {plate}: duplicate positions")
    return BalanceReport(g_counts, s_counts, g_spread, s_spread, not failures, failures, warnings)
