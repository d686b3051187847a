"""Datasets, preprocessing and split management."""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError

BLOB_STDS = (0.3, 0.5)
BLOB_CENTERS = (0.3, 0.5, 1.0)


@dataclass
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    feature_names: list = field(default_factory=list)
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.features = np.atleast_2d(np.asarray(self.features, dtype=float))
        self.labels = np.asarray(self.labels).astype(int).ravel()
        if self.features.shape[0] != self.labels.size:
            raise DataError(f"{self.features.shape[0]} feature rows but {self.labels.size} labels")
        if not np.isin(self.labels, (0, 1)).all():
            raise DataError("labels must be 0 or 1")
        if not np.all(np.isfinite(self.features)):
            raise DataError("features contain non-finite values")
        if not self.feature_names:
            self.feature_names = [f"x{i}" for i in range(self.features.shape[1])]
        if len(self.feature_names) != self.features.shape[1]:
            raise DataError("feature_names length does not match the feature count")

    def __len__(self):
        return self.labels.size

    @property
    def num_features(self) -> int:
        return self.features.shape[1]

    def subset(self, idx) -> "Dataset":
        return Dataset(self.features[idx], self.labels[idx], list(self.feature_names), dict(self.provenance))

    def select(self, names) -> "Dataset":
        missing = [n for n in names if n not in self.feature_names]
        if missing:
            raise DataError(f"unknown feature column(s): {', '.join(missing)}")
        cols = [self.feature_names.index(n) for n in names]
        prov = dict(self.provenance, selected=list(names))
        return Dataset(self.features[:, cols], self.labels, list(names), prov)


# synthetic blobs


@dataclass(frozen=True)
class BlobConfig:
    cluster_std: float = 0.3
    p1: float = 0.3
    p2: float = 1.0
    n_samples: int = 100
    seed: int = 0

    @property
    def name(self) -> str:
        return f"blobs_std{self.cluster_std:g}_c{self.p1:g}-{self.p2:g}"


def blob_grid(seed: int = 0, stds=BLOB_STDS, centers=BLOB_CENTERS) -> list:
    """Every ``(cluster_std, p1, p2)`` combination; 18 with the defaults."""
    return [BlobConfig(s, p1, p2, seed=seed) for s, p1, p2 in itertools.product(stds, centers, centers)]


def _box_muller(rng: np.random.Generator, count: int) -> np.ndarray:
    pairs = (count + 1) // 2
    u1 = 1.0 - rng.random(pairs)  # (0, 1]
    u2 = rng.random(pairs)
    r = np.sqrt(-2.0 * np.log(u1))
    z = np.concatenate([r * np.cos(2 * np.pi * u2), r * np.sin(2 * np.pi * u2)])
    return z[:count]


def make_blobs(config: BlobConfig, scale: bool = True) -> Dataset:
    """Two isotropic Gaussian classes around ``(p1, p2)`` (class 0) and ``(p2, p1)`` (class 1).

    Normals come from a Box-Muller transform over PCG64 uniforms. With
    ``scale`` the features are min-max rescaled to [0, 1] over the whole set.
    """
    rng = np.random.default_rng(config.seed)
    per_class = config.n_samples // 2
    counts = (per_class, config.n_samples - per_class)
    centers = ((config.p1, config.p2), (config.p2, config.p1))
    xs, ys = [], []
    for label, (cnt, center) in enumerate(zip(counts, centers)):
        noise = _box_muller(rng, 2 * cnt).reshape(cnt, 2)
        xs.append(np.asarray(center) + config.cluster_std * noise)
        ys.append(np.full(cnt, label))
    X = np.vstack(xs)
    if scale:
        X = MinMaxScaler.fit(X).apply(X)
    prov = {"source": "blobs", "cluster_std": config.cluster_std, "p1": config.p1, "p2": config.p2,
            "seed": config.seed, "scaled": scale}
    return Dataset(X, np.concatenate(ys), ["x0", "x1"], prov)


# preprocessing


@dataclass(frozen=True)
class MinMaxScaler:
    data_min: np.ndarray
    data_range: np.ndarray  # zero marks a constant column

    @classmethod
    def fit(cls, X) -> "MinMaxScaler":
        X = np.atleast_2d(np.asarray(X, dtype=float))
        lo, hi = X.min(axis=0), X.max(axis=0)
        return cls(lo, hi - lo)

    def apply(self, X) -> np.ndarray:
        """Column-wise ``(x - min) / (max - min)``; constant columns map to 0.

        Out-of-range values (test rows) are passed through unclamped.
        """
        X = np.atleast_2d(np.asarray(X, dtype=float))
        safe = np.where(self.data_range > 0, self.data_range, 1.0)
        out = (X - self.data_min) / safe
        out[:, self.data_range <= 0] = 0.0
        return out


def minmax_fit(X) -> MinMaxScaler:
    return MinMaxScaler.fit(X)


def minmax_apply(scaler: MinMaxScaler, X) -> np.ndarray:
    return scaler.apply(X)


@dataclass(frozen=True)
class PCAProjector:
    mean: np.ndarray
    components: np.ndarray  # (f, F), orthonormal rows
    explained_variance: np.ndarray
    total_variance: float = 0.0

    @property
    def explained_variance_ratio(self) -> np.ndarray:
        if self.total_variance <= 0:
            return np.zeros_like(self.explained_variance)
        return self.explained_variance / self.total_variance

    def apply(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return (X - self.mean) @ self.components.T

    def inverse(self, Z) -> np.ndarray:
        return np.atleast_2d(Z) @ self.components + self.mean


def pca_fit(X, n_components: int) -> PCAProjector:
    """Principal axes from the SVD of the mean-centered training matrix.

    Each component is signed so its largest-magnitude loading is positive.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    N, F = X.shape
    if not 1 <= n_components <= min(N, F):
        raise DataError(f"n_components={n_components} must be between 1 and min(N, F)={min(N, F)}")
    mean = X.mean(axis=0)
    _, s, vt = np.linalg.svd(X - mean, full_matrices=False)
    comps = vt[:n_components].copy()
    pivots = np.argmax(np.abs(comps), axis=1)
    signs = np.sign(comps[np.arange(n_components), pivots])
    comps *= np.where(signs == 0, 1.0, signs)[:, None]
    var = s**2 / max(N - 1, 1)
    return PCAProjector(mean, comps, var[:n_components], float(var.sum()))


def pca_apply(projector: PCAProjector, X) -> np.ndarray:
    return projector.apply(X)


# splits


@dataclass(frozen=True)
class SplitSpec:
    split_id: int
    train: np.ndarray
    test: np.ndarray
    folds: dict  # k -> fold id per entry of ``train``

    def fold_indices(self, k: int):
        """``(train_rows, validation_rows)`` per fold, as dataset indices."""
        ids = self.folds[k]
        return [(self.train[ids != f], self.train[ids == f]) for f in range(k)]


def stratified_fold_ids(labels, k: int, rng: np.random.Generator) -> np.ndarray:
    labels = np.asarray(labels).ravel()
    ids = np.empty(labels.size, dtype=int)
    offset = 0
    for c in np.unique(labels):
        members = rng.permutation(np.flatnonzero(labels == c))
        ids[members] = (np.arange(members.size) + offset) % k
        offset += members.size
    return ids


def stratified_kfold(labels, k: int, seed) -> list:
    """``(train_positions, validation_positions)`` for ``k`` stratified folds."""
    labels = np.asarray(labels).ravel()
    if k < 2 or k > labels.size:
        raise DataError(f"cannot make {k} folds from {labels.size} samples")
    ids = stratified_fold_ids(labels, k, np.random.default_rng(seed))
    idx = np.arange(labels.size)
    return [(idx[ids != f], idx[ids == f]) for f in range(k)]


def stratified_splits(labels, n_splits: int = 10, test_frac: float = 0.2, seed: int = 0, fold_counts=(4, 5)) -> list:
    """Distinct stratified train/test splits, each with stratified fold ids."""
    labels = np.asarray(labels).astype(int).ravel()
    classes, counts = np.unique(labels, return_counts=True)
    if classes.size < 2:
        raise DataError("stratified splits need both classes present")
    if counts.min() < n_splits:
        raise DataError(f"class {classes[counts.argmin()]} has {counts.min()} samples, fewer than n_splits={n_splits}")
    seen = set()
    splits = []
    for split_id in range(n_splits):
        for attempt in itertools.count():
            if attempt > 1000:
                raise DataError("could not draw enough distinct splits")
            rng = np.random.default_rng([seed, split_id, attempt])
            test = []
            for c in classes:
                members = rng.permutation(np.flatnonzero(labels == c))
                test.extend(members[: int(round(test_frac * members.size))])
            test = np.sort(np.asarray(test, dtype=int))
            key = test.tobytes()
            if key not in seen:
                seen.add(key)
                break
        train = np.setdiff1d(np.arange(labels.size), test)
        folds = {k: stratified_fold_ids(labels[train], k, rng) for k in fold_counts}
        splits.append(SplitSpec(split_id, train, test, folds))
    return splits


def preprocess_split(train_X, test_X, scale_scope="train", all_X=None, pca_components=None,
                     return_transforms=False):
    """Fit scaling (and optionally PCA) on training rows, apply to both sides.

    ``scale_scope="global"`` fits the scaler on ``all_X`` instead. With
    ``return_transforms`` the fitted ``(scaler, projector or None)`` pair is
    returned as a third element.
    """
    if scale_scope == "global":
        if all_X is None:
            raise ValueError("global scaling needs all_X")
        scaler = MinMaxScaler.fit(all_X)
    elif scale_scope == "train":
        scaler = MinMaxScaler.fit(train_X)
    else:
        raise ValueError(f"scale_scope must be 'train' or 'global', got {scale_scope!r}")
    tr, te = scaler.apply(train_X), scaler.apply(test_X)
    proj = None
    if pca_components:
        proj = pca_fit(tr, pca_components)
        tr, te = proj.apply(tr), proj.apply(te)
    if return_transforms:
        return tr, te, (scaler, proj)
    return tr, te


# CSV I/O


class CsvFormatError(DataError):
    def __init__(self, path, message, row=None, column=None):
        loc = str(path)
        if row is not None:
            loc += f", row {row}"
        if column is not None:
            loc += f", column {column!r}"
        self.row, self.column = row, column
        super().__init__(f"{loc}: {message}")


class EmptyCsvError(CsvFormatError):
    pass


class MissingLabelColumnError(CsvFormatError):
    pass


class NonNumericCellError(CsvFormatError):
    pass


class NonFiniteValueError(CsvFormatError):
    pass


class InvalidLabelError(CsvFormatError):
    pass


def _parse_label(path, cell, row, column) -> int:
    raw = cell.strip()
    try:
        lab = float(raw)
    except ValueError:
        raise InvalidLabelError(path, f"label {raw!r} is not 0 or 1", row=row, column=column) from None
    if lab not in (0.0, 1.0):
        raise InvalidLabelError(path, f"label {raw!r} is not 0 or 1", row=row, column=column)
    return int(lab)


def load_csv(path, label_column: str = "label", require_label: bool = True) -> Dataset:
    """Read a headed CSV with a ``label`` column of 0/1 values.

    With ``require_label=False`` a file without the label column loads with
    all labels set to 0. Row numbers in errors count the header as row 1.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    rows = [r for r in rows if r]
    if not rows:
        raise EmptyCsvError(path, "file is empty")
    header = [h.strip() for h in rows[0]]
    if label_column in header:
        li = header.index(label_column)
    elif require_label:
        raise MissingLabelColumnError(path, f"no {label_column!r} column in header", row=1)
    else:
        li = None
    names = [h for i, h in enumerate(header) if i != li]
    if len(rows) == 1:
        raise EmptyCsvError(path, "no data rows")
    X = np.empty((len(rows) - 1, len(names)))
    y = np.empty(len(rows) - 1, dtype=int)
    for r, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise CsvFormatError(path, f"expected {len(header)} cells, found {len(row)}", row=r)
        y[r - 2] = 0 if li is None else _parse_label(path, row[li], r, label_column)
        j = 0
        for i, cell in enumerate(row):
            if i == li:
                continue
            try:
                v = float(cell)
            except ValueError:
                raise NonNumericCellError(path, f"non-numeric value {cell!r}", row=r, column=header[i]) from None
            if not math.isfinite(v):
                raise NonFiniteValueError(path, f"non-finite value {cell!r}", row=r, column=header[i])
            X[r - 2, j] = v
            j += 1
    return Dataset(X, y, names, {"source": "csv", "path": str(path)})


def save_csv(dataset: Dataset, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(dataset.feature_names) + ["label"])
        for x, lab in zip(dataset.features, dataset.labels):
            w.writerow([repr(float(v)) for v in x] + [int(lab)])
