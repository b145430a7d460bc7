"""Data sources: synthetic Gaussian draws, MNIST-style IDX files, CIFAR-10
binary batches, and class filtering.

Image data is normalized to [0, 1] by dividing by 255 and flattened
row-major; synthetic data stays unnormalized Gaussian.  Datasets store
features column-per-sample (X is d x n).
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801
CIFAR_RECORD = 3073
GRAY_WEIGHTS = (0.299, 0.587, 0.114)   # ITU-R BT.601 luminance


class DatasetError(ValueError):
    pass


@dataclass
class Dataset:
    X: np.ndarray                      # (d, n)
    labels: np.ndarray | None = None   # (n,) class indices
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.X.ndim != 2:
            raise DatasetError(f"X must be d x n, got shape {self.X.shape}")
        if self.labels is not None and len(self.labels) != self.X.shape[1]:
            raise DatasetError(
                f"labels length {len(self.labels)} != sample count {self.X.shape[1]}"
            )

    @property
    def d(self) -> int:
        return self.X.shape[0]

    @property
    def n(self) -> int:
        return self.X.shape[1]


def synth_gaussian(d: int, n: int, seed: int = 0) -> Dataset:
    """n iid standard normal vectors in R^d."""
    if d < 1 or n < 1:
        raise DatasetError(f"need d, n >= 1, got d={d}, n={n}")
    rng = np.random.default_rng(seed)
    return Dataset(X=rng.standard_normal((d, n)), meta={"source": "synth_gaussian", "seed": seed})


def synth_class_clusters(d: int, C: int, n: int, seed: int = 0, spread: float = 0.12,
                         means_seed: int | None = None,
                         center_span: tuple = (0.25, 0.75),
                         dark_prefix: int = 0) -> Dataset:
    """Clipped Gaussian clusters in [0, 1]^d, one mean per class, balanced labels.

    Stand-in for image data when no dataset files are available; pixel-like
    range keeps trigger stamping meaningful.  Pass the same means_seed to
    draw several sets (train/test/repair) from one population; center_span
    controls how far apart the class means sit.  The first dark_prefix
    coordinates are a near-zero, class-uninformative border (images have
    dark corners), which is where pixel triggers are usually stamped.
    """
    rng = np.random.default_rng(seed)
    means_rng = rng if means_seed is None else np.random.default_rng(means_seed)
    means = means_rng.uniform(center_span[0], center_span[1], size=(d, C))
    noise_scale = np.full((d, 1), spread)
    if dark_prefix > 0:
        means[:dark_prefix, :] = 0.03
        noise_scale[:dark_prefix] = 0.25 * spread
    labels = np.arange(n) % C
    X = means[:, labels] + noise_scale * rng.standard_normal((d, n))
    X = np.clip(X, 0.0, 1.0)
    perm = rng.permutation(n)
    return Dataset(X=X[:, perm], labels=labels[perm],
                   meta={"source": "synth_class_clusters", "seed": seed})


# ---------------------------------------------------------------------------
# IDX (MNIST container)


def _read_idx_array(path, expect_magic: int) -> np.ndarray:
    with open(path, "rb") as fh:
        head = fh.read(4)
        if len(head) < 4:
            raise DatasetError(f"{path}: truncated IDX header")
        magic = struct.unpack(">I", head)[0]
        if magic != expect_magic:
            raise DatasetError(f"{path}: bad IDX magic {magic:#010x}, expected {expect_magic:#010x}")
        ndim = magic & 0xFF
        dims_raw = fh.read(4 * ndim)
        if len(dims_raw) < 4 * ndim:
            raise DatasetError(f"{path}: truncated IDX dimension header")
        dims = struct.unpack(f">{ndim}I", dims_raw)
        count = int(np.prod(dims))
        body = fh.read(count)
        if len(body) < count:
            raise DatasetError(f"{path}: truncated IDX payload ({len(body)} of {count} bytes)")
        return np.frombuffer(body, dtype=np.uint8).reshape(dims)


def load_idx(images_path, labels_path=None) -> Dataset:
    """Load big-endian IDX images (and labels) scaled to [0, 1], flattened row-major."""
    imgs = _read_idx_array(images_path, IDX_IMAGES_MAGIC)
    n = imgs.shape[0]
    X = imgs.reshape(n, -1).T.astype(float) / 255.0
    labels = None
    if labels_path is not None:
        labels = _read_idx_array(labels_path, IDX_LABELS_MAGIC).astype(np.int64)
        if labels.shape[0] != n:
            raise DatasetError(
                f"image/label count mismatch: {n} images vs {labels.shape[0]} labels"
            )
    return Dataset(X=X, labels=labels,
                   meta={"source": "idx", "normalization": "byte/255", "shape": imgs.shape[1:]})


def write_idx_images(path, imgs: np.ndarray) -> None:
    """Write a (n, rows, cols) uint8 array as an IDX image file."""
    imgs = np.asarray(imgs, dtype=np.uint8)
    with open(path, "wb") as fh:
        fh.write(struct.pack(">IIII", IDX_IMAGES_MAGIC, *imgs.shape))
        fh.write(imgs.tobytes())


def write_idx_labels(path, labels: np.ndarray) -> None:
    labels = np.asarray(labels, dtype=np.uint8)
    with open(path, "wb") as fh:
        fh.write(struct.pack(">II", IDX_LABELS_MAGIC, labels.shape[0]))
        fh.write(labels.tobytes())


# ---------------------------------------------------------------------------
# CIFAR-10 binary batches


def load_cifar10(batch_paths, grayscale: bool = True) -> Dataset:
    """Load CIFAR-10 binary batches (1 label byte + 3072 pixel bytes per record)."""
    if isinstance(batch_paths, (str, bytes)) or not hasattr(batch_paths, "__iter__"):
        batch_paths = [batch_paths]
    chunks, labels = [], []
    for path in batch_paths:
        with open(path, "rb") as fh:
            raw = fh.read()
        if len(raw) % CIFAR_RECORD != 0:
            raise DatasetError(
                f"{path}: length {len(raw)} is not a multiple of {CIFAR_RECORD}"
            )
        rec = np.frombuffer(raw, dtype=np.uint8).reshape(-1, CIFAR_RECORD)
        labels.append(rec[:, 0].astype(np.int64))
        pix = rec[:, 1:].astype(float) / 255.0        # (n, 3072): R, G, B planes
        if grayscale:
            planes = pix.reshape(-1, 3, 1024)
            gray = (GRAY_WEIGHTS[0] * planes[:, 0] + GRAY_WEIGHTS[1] * planes[:, 1]
                    + GRAY_WEIGHTS[2] * planes[:, 2])
            chunks.append(gray.T)
        else:
            chunks.append(pix.T)
    return Dataset(
        X=np.concatenate(chunks, axis=1),
        labels=np.concatenate(labels),
        meta={"source": "cifar10", "grayscale": grayscale,
              "gray_weights": GRAY_WEIGHTS if grayscale else None,
              "normalization": "byte/255"},
    )


# ---------------------------------------------------------------------------
# class filtering


def filter_classes(ds: Dataset, classes, n: int, seed: int = 0) -> Dataset:
    """Balanced random subsample: n total across the given classes, labels
    remapped to 0..C-1 in the given order (balance within +-1 when n % C != 0)."""
    if ds.labels is None:
        raise DatasetError("dataset has no labels to filter on")
    classes = list(classes)
    if not classes:
        raise DatasetError("classes must be nonempty")
    if n == 0:
        return Dataset(X=ds.X[:, :0], labels=np.zeros(0, dtype=np.int64),
                       meta={**ds.meta, "classes": classes})
    rng = np.random.default_rng(seed)
    C = len(classes)
    base, extra = divmod(n, C)
    cols, new_labels = [], []
    for ci, cls in enumerate(classes):
        want = base + (1 if ci < extra else 0)
        avail = np.flatnonzero(ds.labels == cls)
        if avail.size < want:
            raise DatasetError(
                f"class {cls}: need {want} examples, only {avail.size} available"
            )
        take = rng.choice(avail, size=want, replace=False)
        cols.append(take)
        new_labels.append(np.full(want, ci, dtype=np.int64))
    cols = np.concatenate(cols)
    new_labels = np.concatenate(new_labels)
    perm = rng.permutation(cols.size)
    return Dataset(X=ds.X[:, cols[perm]], labels=new_labels[perm],
                   meta={**ds.meta, "classes": classes})
