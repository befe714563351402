"""Subject tables: CSV loading, seeded splitting and training-set normalisation."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .exceptions import ValidationError
from .io import atomic_write_text, fmt
from .numerics import make_rng

DEMOGRAPHIC_COLUMNS = ("age", "sex", "mmse", "cdr")
ROI_PREFIX = "roi_"


@dataclass(frozen=True)
class SubjectRecord:
    roi_signals: np.ndarray
    age: float
    sex: str
    mmse: float
    cdr: float
    label: int


@dataclass(frozen=True)
class NormalizationStats:
    """Statistics computed on a training split and reused for every split."""

    roi_mean: np.ndarray
    roi_sd: np.ndarray
    roi_min: np.ndarray
    roi_max: np.ndarray
    dense_mean: np.ndarray  # age, mmse, cdr
    dense_sd: np.ndarray
    sex_levels: Tuple[str, ...]
    roi_names: Tuple[str, ...] = ()  # order of the roi_* arrays; empty means "as the dataset"

    def aligned(self, names: Sequence[str]) -> "NormalizationStats":
        """Same statistics with the per-ROI arrays in the order of ``names``."""
        names = tuple(names)
        if not self.roi_names or self.roi_names == names:
            return self
        pos = {r: i for i, r in enumerate(self.roi_names)}
        missing = [r for r in names if r not in pos]
        if missing:
            raise ValidationError(f"no normalisation statistics for ROI(s) {', '.join(missing)}")
        idx = [pos[r] for r in names]
        return replace(self, roi_mean=self.roi_mean[idx], roi_sd=self.roi_sd[idx],
                       roi_min=self.roi_min[idx], roi_max=self.roi_max[idx], roi_names=names)

    @classmethod
    def from_dataset(cls, ds: "Dataset") -> "NormalizationStats":
        if ds.n_subjects == 0:
            raise ValidationError("cannot compute normalisation statistics on an empty dataset")
        S = ds.signals
        dense = ds.dense
        return cls(
            roi_mean=S.mean(axis=0),
            roi_sd=_safe_sd(S),
            roi_min=S.min(axis=0),
            roi_max=S.max(axis=0),
            dense_mean=dense.mean(axis=0),
            dense_sd=_safe_sd(dense),
            sex_levels=tuple(sorted(set(ds.sex.tolist()))),
            roi_names=ds.roi_names,
        )


def _safe_sd(X: np.ndarray) -> np.ndarray:
    sd = X.std(axis=0)
    return np.where(sd > 0, sd, 1.0)


@dataclass(frozen=True, eq=False)
class Dataset:
    roi_names: Tuple[str, ...]
    signals: np.ndarray
    age: np.ndarray
    sex: np.ndarray
    mmse: np.ndarray
    cdr: np.ndarray
    labels: np.ndarray
    stats: Optional[NormalizationStats] = field(default=None, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "roi_names", tuple(self.roi_names))
        n = len(self.labels)
        S = np.asarray(self.signals, dtype=np.float64).reshape(n, len(self.roi_names))
        if not np.all(np.isfinite(S)):
            raise ValidationError("ROI signals must be finite")
        object.__setattr__(self, "signals", S)
        for name in ("age", "mmse", "cdr"):
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            if arr.shape != (n,) or not np.all(np.isfinite(arr)):
                raise ValidationError(f"{name} must be {n} finite values")
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "sex", np.asarray(self.sex, dtype=str).reshape(n))
        labels = np.asarray(self.labels)
        if labels.size and not np.all(np.isin(labels, (0, 1))):
            raise ValidationError("labels must be 0 or 1")
        object.__setattr__(self, "labels", labels.astype(np.int64))

    def __eq__(self, other) -> bool:
        """Same ROIs and subjects; normalisation statistics are not compared."""
        if not isinstance(other, Dataset):
            return NotImplemented
        return (self.roi_names == other.roi_names
                and all(np.array_equal(getattr(self, k), getattr(other, k))
                        for k in ("signals", "age", "sex", "mmse", "cdr", "labels")))

    __hash__ = None

    @property
    def n_subjects(self) -> int:
        return len(self.labels)

    @property
    def n_rois(self) -> int:
        return len(self.roi_names)

    @property
    def dense(self) -> np.ndarray:
        return np.column_stack([self.age, self.mmse, self.cdr]).reshape(self.n_subjects, 3)

    def __len__(self) -> int:
        return self.n_subjects

    def __getitem__(self, i: int) -> SubjectRecord:
        return SubjectRecord(self.signals[i].copy(), float(self.age[i]), str(self.sex[i]),
                             float(self.mmse[i]), float(self.cdr[i]), int(self.labels[i]))

    @property
    def subjects(self) -> List[SubjectRecord]:
        return [self[i] for i in range(self.n_subjects)]

    def roi_index(self, roi: str) -> int:
        try:
            return self.roi_names.index(roi)
        except ValueError:
            raise ValidationError(f"unknown ROI {roi!r}") from None

    def take(self, idx: Sequence[int]) -> "Dataset":
        idx = np.asarray(idx, dtype=int)
        return Dataset(self.roi_names, self.signals[idx], self.age[idx], self.sex[idx],
                       self.mmse[idx], self.cdr[idx], self.labels[idx], self.stats)

    def with_stats(self, stats: Optional[NormalizationStats]) -> "Dataset":
        if stats is not None:
            stats = stats.aligned(self.roi_names)
        return replace(self, stats=stats)

    def reorder_rois(self, names: Sequence[str]) -> "Dataset":
        idx = [self.roi_index(n) for n in names]
        stats = self.stats
        if stats is not None:
            stats = replace(stats, roi_mean=stats.roi_mean[idx], roi_sd=stats.roi_sd[idx],
                            roi_min=stats.roi_min[idx], roi_max=stats.roi_max[idx],
                            roi_names=tuple(names))
        return replace(self, roi_names=tuple(names), signals=self.signals[:, idx], stats=stats)

    @classmethod
    def from_records(cls, roi_names: Sequence[str], records: Sequence[SubjectRecord]) -> "Dataset":
        R = len(roi_names)
        return cls(tuple(roi_names),
                   np.array([r.roi_signals for r in records], dtype=np.float64).reshape(len(records), R),
                   [r.age for r in records], [r.sex for r in records],
                   [r.mmse for r in records], [r.cdr for r in records],
                   np.array([r.label for r in records], dtype=np.int64))

    # normalised views -------------------------------------------------------

    def _require_stats(self) -> NormalizationStats:
        if self.stats is None:
            raise ValidationError("dataset has no normalisation statistics; split it first")
        return self.stats

    def treatment(self, roi: str) -> np.ndarray:
        """Min-max normalised treatment for ``roi``, clipped to [0, 1]."""
        st = self._require_stats()
        j = self.roi_index(roi)
        span = st.roi_max[j] - st.roi_min[j]
        if span <= 0:
            raise ValidationError(f"treatment ROI {roi!r} is constant on the training split")
        return np.clip((self.signals[:, j] - st.roi_min[j]) / span, 0.0, 1.0)

    def treatment_range(self, roi: str) -> Tuple[float, float]:
        st = self._require_stats()
        j = self.roi_index(roi)
        return float(st.roi_min[j]), float(st.roi_max[j])

    def node_features(self, nodes: Sequence[str]) -> np.ndarray:
        """Z-scored signals of ``nodes`` in the given order: (n, len(nodes), 1)."""
        st = self._require_stats()
        keep = [self.roi_index(name) for name in nodes]
        Z = (self.signals[:, keep] - st.roi_mean[keep]) / st.roi_sd[keep]
        return Z[:, :, None]

    def dense_z(self) -> np.ndarray:
        st = self._require_stats()
        return (self.dense - st.dense_mean) / st.dense_sd

    def sex_codes(self) -> np.ndarray:
        st = self._require_stats()
        pos = {lvl: i for i, lvl in enumerate(st.sex_levels)}
        try:
            return np.array([pos[s] for s in self.sex.tolist()], dtype=int)
        except KeyError as exc:
            raise ValidationError(f"unseen sex level {exc.args[0]!r}") from None


def load_dataset(path) -> Dataset:
    """Read ``roi_<name>...,age,sex,mmse,cdr,label`` rows, one per subject."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ValidationError(f"{path}: empty file, header required") from None
        rows = list(reader)
    missing = [c for c in DEMOGRAPHIC_COLUMNS + ("label",) if c not in header]
    if missing:
        raise ValidationError(f"{path}: missing column(s) {', '.join(missing)}")
    roi_cols = [i for i, h in enumerate(header) if h.startswith(ROI_PREFIX)]
    if not roi_cols:
        raise ValidationError(f"{path}: no roi_<name> columns")
    names = tuple(header[i][len(ROI_PREFIX):] for i in roi_cols)
    col = {h: i for i, h in enumerate(header)}

    signals, age, sex, mmse, cdr, labels = [], [], [], [], [], []
    for lineno, row in enumerate(rows, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise ValidationError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")

        def num(i, what):
            try:
                v = float(row[i])
            except ValueError:
                raise ValidationError(f"{path}:{lineno}: non-numeric {what} {row[i]!r}") from None
            if not math.isfinite(v):
                raise ValidationError(f"{path}:{lineno}: non-finite {what}")
            return v

        signals.append([num(i, header[i]) for i in roi_cols])
        age.append(num(col["age"], "age"))
        mmse.append(num(col["mmse"], "mmse"))
        cdr.append(num(col["cdr"], "cdr"))
        sex.append(row[col["sex"]].strip())
        lab = num(col["label"], "label")
        if lab not in (0.0, 1.0):
            raise ValidationError(f"{path}:{lineno}: label must be 0 or 1, got {row[col['label']]!r}")
        labels.append(int(lab))
    n = len(labels)
    return Dataset(names, np.array(signals, dtype=np.float64).reshape(n, len(names)),
                   age, sex, mmse, cdr, np.array(labels, dtype=np.int64))


def dataset_to_csv(ds: Dataset) -> str:
    header = [ROI_PREFIX + n for n in ds.roi_names] + list(DEMOGRAPHIC_COLUMNS) + ["label"]
    lines = [",".join(header)]
    for i in range(ds.n_subjects):
        fields = [fmt(v) for v in ds.signals[i]]
        fields += [fmt(ds.age[i]), str(ds.sex[i]), fmt(ds.mmse[i]), fmt(ds.cdr[i]), str(ds.labels[i])]
        lines.append(",".join(fields))
    return "\n".join(lines) + "\n"


def write_dataset(ds: Dataset, path) -> None:
    atomic_write_text(path, dataset_to_csv(ds))


def n_test_subjects(n: int, test_fraction: float) -> int:
    # round half up, after discarding float noise such as 905 * 0.3 = 271.49999999999997
    return int(math.floor(round(n * test_fraction, 9) + 0.5))


def split_dataset(ds: Dataset, test_fraction: float, seed: int) -> Tuple[Dataset, Dataset]:
    """Seeded shuffle then split; both halves carry the training-split statistics."""
    if not 0.0 < test_fraction < 1.0:
        raise ValidationError(f"test_fraction must lie in (0, 1), got {test_fraction}")
    perm = make_rng(seed).permutation(ds.n_subjects)
    n_test = n_test_subjects(ds.n_subjects, test_fraction)
    test_idx = np.sort(perm[:n_test])
    train_idx = np.sort(perm[n_test:])
    train = ds.take(train_idx)
    stats = NormalizationStats.from_dataset(train)
    return train.with_stats(stats), ds.take(test_idx).with_stats(stats)
