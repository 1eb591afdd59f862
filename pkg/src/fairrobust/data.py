"""Datasets: Gaussian-mixture sampler, CSV tables with a group column, IDX images."""

from __future__ import annotations

import csv
import gzip
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .population import GaussianMixtureSpec

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


class DataFormatError(ValueError):
    """Malformed input file; ``row`` is the 1-based data row (header excluded)."""

    def __init__(self, message, path=None, row=None, column=None):
        where = []
        if path is not None:
            where.append(str(path))
        if row is not None:
            where.append(f"row {row}")
        if column is not None:
            where.append(f"column {column!r}")
        super().__init__(f"{': '.join([', '.join(where), message]) if where else message}")
        self.path, self.row, self.column = path, row, column


@dataclass
class LabeledDataset:
    features: np.ndarray
    groups: np.ndarray
    labels: np.ndarray
    num_classes: int
    num_groups: int
    label_names: tuple | None = None
    group_names: tuple | None = None
    feature_names: tuple | None = field(default=None)

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        if self.features.ndim == 1:
            self.features = self.features[:, None]
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.groups = np.asarray(self.groups, dtype=np.int64)
        n = self.features.shape[0]
        if n < 1:
            raise ValueError("a dataset needs at least one sample")
        if self.labels.shape != (n,) or self.groups.shape != (n,):
            raise ValueError("features, labels and groups must have the same length")
        if self.labels.min() < 0 or self.labels.max() >= self.num_classes:
            raise ValueError(f"labels must lie in [0, {self.num_classes})")
        if self.groups.min() < 0 or self.groups.max() >= self.num_groups:
            raise ValueError(f"groups must lie in [0, {self.num_groups})")

    def __len__(self):
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def subset(self, idx) -> "LabeledDataset":
        return LabeledDataset(self.features[idx], self.groups[idx], self.labels[idx],
                              self.num_classes, self.num_groups, self.label_names,
                              self.group_names, self.feature_names)

    def group_indices(self) -> dict:
        """Index arrays per group id, for every group that has samples."""
        return {int(a): np.flatnonzero(self.groups == a) for a in np.unique(self.groups)}


# --------------------------------------------------------------------------
# synthetic mixtures

@dataclass(frozen=True)
class MixtureSampleConfig:
    spec: GaussianMixtureSpec
    n: int
    seed: int = 0
    dims: int = 1

    def __post_init__(self):
        if self.n < 1 or self.dims < 1:
            raise ValueError("n and dims must be positive")


def sample_mixture(cfg: MixtureSampleConfig) -> LabeledDataset:
    """Draw ``(X, A, Y)`` with ``A = Y``.

    Class index 0 is label -1 (feature 0 ~ N(mu_minus, 1)) and class index 1 is
    label +1 (feature 0 ~ N(mu_plus, K^2)). Extra dimensions are N(0, 1) noise.
    """
    spec = cfg.spec
    rng = np.random.default_rng(cfg.seed)
    labels = (rng.random(cfg.n) < spec.prior_plus).astype(np.int64)
    z = rng.standard_normal((cfg.n, cfg.dims))
    X = z.copy()
    X[:, 0] = np.where(labels == 1, spec.mu_plus + spec.k_ratio * z[:, 0],
                       spec.mu_minus + z[:, 0])
    return LabeledDataset(X, labels.copy(), labels, 2, 2,
                          label_names=("-1", "+1"), group_names=("-1", "+1"),
                          feature_names=tuple(f"x{i}" for i in range(cfg.dims)))


# --------------------------------------------------------------------------
# CSV

def _dense_codes(values):
    names, codes = {}, []
    for v in values:
        codes.append(names.setdefault(v, len(names)))
    return np.array(codes, dtype=np.int64), tuple(names)


def load_csv(path, feature_cols, label_col, group_col=None) -> LabeledDataset:
    """Comma-separated UTF-8 table with a header row.

    Labels and groups are re-indexed densely from 0 in order of first
    appearance; without ``group_col`` the group is the label.
    """
    path = Path(path)
    feature_cols = list(feature_cols)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise DataFormatError("file is empty", path)
        header = [h.strip() for h in header]
        wanted = feature_cols + [label_col] + ([group_col] if group_col else [])
        for col in wanted:
            if col not in header:
                raise DataFormatError("missing column", path, column=col)
        pos = {h: i for i, h in enumerate(header)}
        feats, labels, groups = [], [], []
        for row_no, row in enumerate(reader, start=1):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise DataFormatError(
                    f"expected {len(header)} fields, found {len(row)}", path, row=row_no)
            vals = []
            for col in feature_cols:
                cell = row[pos[col]].strip()
                try:
                    vals.append(float(cell))
                except ValueError:
                    raise DataFormatError(f"non-numeric value {cell!r}", path,
                                          row=row_no, column=col) from None
            feats.append(vals)
            labels.append(row[pos[label_col]].strip())
            groups.append(row[pos[group_col]].strip() if group_col else labels[-1])
    if not feats:
        raise DataFormatError("no data rows", path)
    y, label_names = _dense_codes(labels)
    a, group_names = _dense_codes(groups)
    return LabeledDataset(np.array(feats, dtype=np.float64), a, y,
                          num_classes=max(2, len(label_names)), num_groups=len(group_names),
                          label_names=label_names, group_names=group_names,
                          feature_names=tuple(feature_cols))


def save_csv(ds: LabeledDataset, path, label_col="label", group_col="group"):
    """Write a dataset in the format :func:`load_csv` reads back."""
    names = ds.feature_names or tuple(f"x{i}" for i in range(ds.dim))
    lab = ds.label_names or tuple(str(i) for i in range(ds.num_classes))
    grp = ds.group_names or tuple(str(i) for i in range(ds.num_groups))
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([*names, label_col, group_col])
        for x, y, a in zip(ds.features, ds.labels, ds.groups):
            w.writerow([*(repr(float(v)) for v in x), lab[y], grp[a]])
    return Path(path)


# --------------------------------------------------------------------------
# IDX (MNIST-style ubyte files)

def _read_bytes(path) -> bytes:
    path = Path(path)
    opener = gzip.open if path.suffix == ".gz" else open
    with opener(path, "rb") as fh:
        return fh.read()


def load_idx(images_path, labels_path, max_items=None) -> LabeledDataset:
    """Parse an image/label IDX pair; pixels scaled to [0, 1], groups = labels."""
    img = _read_bytes(images_path)
    lab = _read_bytes(labels_path)
    if len(img) < 16:
        raise DataFormatError("image file shorter than its 16-byte header", images_path)
    if len(lab) < 8:
        raise DataFormatError("label file shorter than its 8-byte header", labels_path)
    magic, n_img, rows, cols = struct.unpack(">IIII", img[:16])
    if magic != IDX_IMAGES_MAGIC:
        raise DataFormatError(f"bad magic 0x{magic:08x}, expected 0x{IDX_IMAGES_MAGIC:08x}",
                              images_path)
    magic, n_lab = struct.unpack(">II", lab[:8])
    if magic != IDX_LABELS_MAGIC:
        raise DataFormatError(f"bad magic 0x{magic:08x}, expected 0x{IDX_LABELS_MAGIC:08x}",
                              labels_path)
    if n_img != n_lab:
        raise DataFormatError(f"{n_img} images but {n_lab} labels", labels_path)
    if len(img) != 16 + n_img * rows * cols:
        raise DataFormatError(
            f"header declares {n_img}x{rows}x{cols} pixels, payload has {len(img) - 16} bytes",
            images_path)
    if len(lab) != 8 + n_lab:
        raise DataFormatError(f"header declares {n_lab} labels, payload has {len(lab) - 8}",
                              labels_path)
    n = n_img if max_items is None else min(n_img, int(max_items))
    if n < 1:
        raise DataFormatError("no items to load", images_path)
    pixels = np.frombuffer(img, dtype=np.uint8, count=n * rows * cols, offset=16)
    X = pixels.reshape(n, rows * cols).astype(np.float64) / 255.0
    y = np.frombuffer(lab, dtype=np.uint8, count=n, offset=8).astype(np.int64)
    c = max(2, int(y.max()) + 1)
    return LabeledDataset(X, y.copy(), y, num_classes=c, num_groups=c)


def write_idx(images, labels, images_path, labels_path):
    """Write uint8 images (n x rows x cols) and labels as an uncompressed IDX pair."""
    images = np.asarray(images, dtype=np.uint8)
    labels = np.asarray(labels, dtype=np.uint8)
    n, rows, cols = images.shape
    Path(images_path).write_bytes(struct.pack(">IIII", IDX_IMAGES_MAGIC, n, rows, cols)
                                  + images.tobytes())
    Path(labels_path).write_bytes(struct.pack(">II", IDX_LABELS_MAGIC, len(labels))
                                  + labels.tobytes())
