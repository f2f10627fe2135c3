"""Labeled feature datasets: loading, validation, splitting and stratified sampling."""

from __future__ import annotations

import csv
import hashlib
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

BINARY_MAGIC = b"MSEL1"


class DataError(ValueError):
    """Raised for malformed or inconsistent dataset inputs."""


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    class_count: int
    label_names: tuple = ()
    standardized: bool = False

    def __post_init__(self):
        x = np.array(self.features, dtype=np.float64)
        y = np.array(self.labels, dtype=np.int64)
        if x.ndim != 2 or x.shape[1] < 1:
            raise DataError(f"features must be a 2-D matrix with d >= 1, got shape {x.shape}")
        if y.shape != (x.shape[0],):
            raise DataError(f"expected {x.shape[0]} labels, got {y.shape}")
        if self.class_count < 2:
            raise DataError("class_count must be >= 2")
        if not np.all(np.isfinite(x)):
            r, c = np.argwhere(~np.isfinite(x))[0]
            raise DataError(f"non-finite feature at row {r}, column {c}")
        if y.size and (y.min() < 0 or y.max() >= self.class_count):
            raise DataError(f"labels must lie in [0, {self.class_count})")
        counts = np.bincount(y, minlength=self.class_count)
        if np.any(counts == 0):
            missing = np.flatnonzero(counts == 0).tolist()
            raise DataError(f"classes with zero samples: {missing}")
        x.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "features", x)
        object.__setattr__(self, "labels", y)
        if not self.label_names:
            object.__setattr__(self, "label_names", tuple(str(c) for c in range(self.class_count)))

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    @property
    def ids(self) -> np.ndarray:
        return np.arange(self.n)

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.features).tobytes())
        h.update(np.ascontiguousarray(self.labels).tobytes())
        return h.hexdigest()

    def standardize(self) -> "Dataset":
        """Per-column z-scoring; zero-variance columns are only centered."""
        mu = self.features.mean(axis=0)
        sd = self.features.std(axis=0)
        sd[sd == 0] = 1.0
        return Dataset((self.features - mu) / sd, self.labels, self.class_count,
                       self.label_names, standardized=True)


@dataclass(frozen=True)
class SplitSpec:
    pool_indices: np.ndarray
    val_indices: np.ndarray
    seed: int
    test_indices: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))


def _dense_labels(raw):
    mapping = {}
    out = np.empty(len(raw), dtype=np.int64)
    for i, lab in enumerate(raw):
        out[i] = mapping.setdefault(lab, len(mapping))
    return out, tuple(mapping)


def load_csv(path, label_column: str, standardize: bool = False) -> Dataset:
    """Read a headered CSV; labels are remapped to 0..C-1 by order of first appearance."""
    path = Path(path)
    if not path.is_file():
        raise DataError(f"no such file: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path} is empty") from None
        header = [h.strip() for h in header]
        if label_column not in header:
            raise DataError(f"label column {label_column!r} not in header {header}")
        li = header.index(label_column)
        feat_cols = [j for j in range(len(header)) if j != li]
        rows, raw_labels = [], []
        for r, rec in enumerate(reader, start=1):
            if not rec:
                continue
            if len(rec) != len(header):
                raise DataError(f"row {r}: expected {len(header)} fields, got {len(rec)}")
            vals = []
            for j in feat_cols:
                try:
                    v = float(rec[j])
                except ValueError:
                    raise DataError(f"row {r}, column {header[j]!r}: non-numeric value {rec[j]!r}") from None
                if not math.isfinite(v):
                    raise DataError(f"row {r}, column {header[j]!r}: non-finite value {rec[j]!r}")
                vals.append(v)
            rows.append(vals)
            raw_labels.append(rec[li].strip())
    if not rows:
        raise DataError(f"{path} has no data rows")
    labels, names = _dense_labels(raw_labels)
    if len(names) < 2:
        raise DataError("need at least two classes")
    ds = Dataset(np.asarray(rows, dtype=np.float64), labels, len(names), names)
    return ds.standardize() if standardize else ds


def save_csv(dataset: Dataset, path, label_column: str = "label") -> None:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow([f"x{j}" for j in range(dataset.d)] + [label_column])
        for row, lab in zip(dataset.features, dataset.labels):
            w.writerow([repr(float(v)) for v in row] + [dataset.label_names[lab]])


def load_binary(path, standardize: bool = False) -> Dataset:
    """Read the MSEL1 format: magic, u64 n/d/C, f32 features row-major, u32 labels."""
    path = Path(path)
    if not path.is_file():
        raise DataError(f"no such file: {path}")
    buf = path.read_bytes()
    if buf[:5] != BINARY_MAGIC:
        raise DataError(f"{path}: bad magic {buf[:5]!r}")
    if len(buf) < 29:
        raise DataError(f"{path}: truncated header")
    n, d, c = struct.unpack_from("<QQQ", buf, 5)
    off = 29
    need = off + 4 * n * d + 4 * n
    if len(buf) != need:
        raise DataError(f"{path}: expected {need} bytes, found {len(buf)}")
    x = np.frombuffer(buf, dtype="<f4", count=n * d, offset=off).reshape(n, d)
    y = np.frombuffer(buf, dtype="<u4", count=n, offset=off + 4 * n * d)
    ds = Dataset(x.astype(np.float64), y.astype(np.int64), int(c))
    return ds.standardize() if standardize else ds


def save_binary(dataset: Dataset, path) -> None:
    with Path(path).open("wb") as fh:
        fh.write(BINARY_MAGIC)
        fh.write(struct.pack("<QQQ", dataset.n, dataset.d, dataset.class_count))
        fh.write(dataset.features.astype("<f4").tobytes())
        fh.write(dataset.labels.astype("<u4").tobytes())


def class_frequencies(dataset: Dataset, subset) -> np.ndarray:
    subset = np.asarray(subset, dtype=np.int64)
    return np.bincount(dataset.labels[subset], minlength=dataset.class_count).astype(np.float64)


def largest_remainder(sizes, total: int, prefer_unrepresented: bool = False) -> np.ndarray:
    """Split `total` across groups in proportion to `sizes`.

    Each group gets floor or floor+1 of its quota. Leftover units go by largest
    fractional part, ties to the lower group id. With `prefer_unrepresented`,
    nonempty groups whose floor is zero are served first.
    """
    sizes = np.asarray(sizes, dtype=np.float64)
    if total == 0 or sizes.sum() == 0:
        return np.zeros(len(sizes), dtype=np.int64)
    quota = total * sizes / sizes.sum()
    alloc = np.floor(quota + 1e-12).astype(np.int64)
    frac = quota - alloc
    left = total - int(alloc.sum())
    # lexsort keys: last key is primary
    keys = [np.arange(len(sizes)), -frac]
    if prefer_unrepresented:
        keys.append(~((alloc == 0) & (sizes > 0)))
    order = np.lexsort(keys)
    for g in order[:left]:
        alloc[g] += 1
    return alloc


def stratified_sample(dataset: Dataset, source, count: int, seed: int) -> np.ndarray:
    """Class-proportional random sample from `source`, returned sorted by id."""
    source = np.unique(np.asarray(source, dtype=np.int64))
    if count > len(source):
        raise DataError(f"count {count} exceeds pool size {len(source)}")
    if count < 0:
        raise DataError("count must be non-negative")
    rng = np.random.default_rng(seed)
    labels = dataset.labels[source]
    sizes = np.bincount(labels, minlength=dataset.class_count)
    alloc = largest_remainder(sizes, count, prefer_unrepresented=True)
    picked = []
    for c in range(dataset.class_count):
        members = source[labels == c]
        if alloc[c]:
            picked.append(rng.choice(members, size=alloc[c], replace=False))
    if not picked:
        return np.empty(0, dtype=np.int64)
    return np.sort(np.concatenate(picked))


def split_pool_val(dataset: Dataset, val_fraction: float = 0.1, seed: int = 0) -> SplitSpec:
    """Stratified pool/validation partition with round(val_fraction * n) validation samples."""
    if not 0.0 < val_fraction < 1.0:
        raise DataError(f"val_fraction must be in (0, 1), got {val_fraction}")
    n, C = dataset.n, dataset.class_count
    n_val = int(math.floor(val_fraction * n + 0.5))
    if n_val < C:
        raise DataError(f"val_fraction*n = {val_fraction * n:.2f} < class count {C}; cannot stratify")
    sizes = np.bincount(dataset.labels, minlength=C)
    if np.any(sizes < 2):
        raise DataError(f"class {int(np.argmin(sizes))} has fewer than 2 samples; cannot stratify")
    alloc = largest_remainder(sizes, n_val, prefer_unrepresented=True)
    short = np.flatnonzero((alloc == 0) | (alloc >= sizes))
    if short.size:
        raise DataError(f"class {int(short[0])} is too small to stratify at val_fraction={val_fraction}")
    rng = np.random.default_rng(seed)
    val = []
    for c in range(C):
        members = np.flatnonzero(dataset.labels == c)
        val.append(rng.choice(members, size=alloc[c], replace=False))
    val = np.sort(np.concatenate(val))
    pool = np.setdiff1d(np.arange(n), val)
    return SplitSpec(pool, val, seed)
