"""Study arms and the cohort CSV format.

Cohort CSV: a header row, then ``unit_id``, feature columns ``f_0 .. f_{d-1}``,
and optionally ``subpop_label`` and ``outcome``.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np


class DataValidationError(ValueError):
    """Malformed cohort or weights data."""


@dataclass
class StudyArm:
    features: np.ndarray
    outcomes: np.ndarray | None = None
    labels: np.ndarray | None = None
    arm_id: str = "0"
    unit_ids: np.ndarray | None = None

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        if self.features.ndim != 2:
            raise DataValidationError(f"features must be 2-D, got shape {self.features.shape}")
        n = self.features.shape[0]
        if self.outcomes is not None:
            self.outcomes = np.asarray(self.outcomes, dtype=np.float64)
            if self.outcomes.shape != (n,):
                raise DataValidationError(f"arm {self.arm_id}: {n} rows but {self.outcomes.shape[0]} outcomes")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=str)
            if self.labels.shape != (n,):
                raise DataValidationError(f"arm {self.arm_id}: {n} rows but {self.labels.shape[0]} labels")
        if self.unit_ids is None:
            self.unit_ids = np.array([str(i) for i in range(n)])
        else:
            self.unit_ids = np.asarray(self.unit_ids, dtype=str)
            if self.unit_ids.shape != (n,):
                raise DataValidationError(f"arm {self.arm_id}: {n} rows but {self.unit_ids.shape[0]} unit ids")
        self.arm_id = str(self.arm_id)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def with_features(self, features: np.ndarray) -> "StudyArm":
        return replace(self, features=features)


def feature_columns(d: int) -> list[str]:
    return [f"f_{j}" for j in range(d)]


def fmt(x: float) -> str:
    """Shortest round-trip float repr; keeps CSV output byte-stable."""
    return repr(float(x))


def write_cohort_csv(path, arm: StudyArm) -> None:
    cols = ["unit_id"] + feature_columns(arm.dim)
    if arm.labels is not None:
        cols.append("subpop_label")
    if arm.outcomes is not None:
        cols.append("outcome")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for i in range(arm.n):
        row = [arm.unit_ids[i]] + [fmt(v) for v in arm.features[i]]
        if arm.labels is not None:
            row.append(arm.labels[i])
        if arm.outcomes is not None:
            row.append(fmt(arm.outcomes[i]))
        w.writerow(row)
    Path(path).write_text(buf.getvalue(), encoding="utf-8")


def _parse_float(cell: str, row: int, col: str) -> float:
    try:
        v = float(cell)
    except ValueError:
        raise DataValidationError(f"row {row}, column {col!r}: non-numeric value {cell!r}") from None
    if not np.isfinite(v):
        raise DataValidationError(f"row {row}, column {col!r}: non-finite value {cell!r}")
    return v


def read_cohort_csv(path, arm_id: str | None = None) -> StudyArm:
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataValidationError(f"{path}: empty cohort file") from None
        header = [h.strip() for h in header]
        if not header or header[0] != "unit_id":
            raise DataValidationError(f"{path}: first column must be 'unit_id'")
        feats = [h for h in header if h.startswith("f_")]
        if not feats:
            raise DataValidationError(f"{path}: no feature columns (f_0, f_1, ...)")
        if feats != feature_columns(len(feats)):
            raise DataValidationError(f"{path}: feature columns must be f_0..f_{len(feats) - 1} in order")
        known = {"unit_id", "subpop_label", "outcome", *feats}
        unknown = [h for h in header if h not in known]
        if unknown:
            raise DataValidationError(f"{path}: unexpected columns {unknown}")
        fidx = [header.index(f) for f in feats]
        lidx = header.index("subpop_label") if "subpop_label" in header else None
        oidx = header.index("outcome") if "outcome" in header else None

        ids, X, labels, ys = [], [], [], []
        for r, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise DataValidationError(f"{path}: row {r} has {len(row)} cells, expected {len(header)}")
            ids.append(row[0])
            X.append([_parse_float(row[i], r, header[i]) for i in fidx])
            if lidx is not None:
                labels.append(row[lidx])
            if oidx is not None:
                ys.append(_parse_float(row[oidx], r, "outcome"))
    if not X:
        raise DataValidationError(f"{path}: cohort has no rows")
    return StudyArm(
        features=np.asarray(X),
        outcomes=np.asarray(ys) if oidx is not None else None,
        labels=np.asarray(labels) if lidx is not None else None,
        arm_id=arm_id if arm_id is not None else path.stem,
        unit_ids=np.asarray(ids),
    )


def check_same_schema(arms: Sequence[StudyArm], names: Sequence[str] | None = None) -> None:
    dims = {a.dim for a in arms}
    if len(dims) > 1:
        names = names or [a.arm_id for a in arms]
        cols = {n: feature_columns(a.dim) for n, a in zip(names, arms)}
        ref = max(cols.values(), key=len)
        diff = {n: sorted(set(ref) ^ set(c)) for n, c in cols.items() if c != ref}
        raise DataValidationError(f"cohorts have different feature columns: {diff}")
