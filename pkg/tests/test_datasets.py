import struct

import numpy as np
import pytest

from purifynet import (
    Dataset, DatasetError, filter_classes, load_cifar10, load_idx,
    synth_class_clusters, synth_gaussian, write_idx_images, write_idx_labels,
)
from purifynet.datasets import CIFAR_RECORD


def test_synth_gaussian_moments():
    ds = synth_gaussian(d=1000, n=1000, seed=0)   # 1e6 entries
    assert abs(ds.X.mean()) < 0.01
    assert abs(ds.X.var() - 1.0) < 0.01


def test_synth_gaussian_deterministic():
    a = synth_gaussian(5, 7, seed=3)
    b = synth_gaussian(5, 7, seed=3)
    assert np.array_equal(a.X, b.X)


def test_synth_class_clusters_in_unit_box():
    ds = synth_class_clusters(d=20, C=3, n=60, seed=1)
    assert ds.X.min() >= 0.0 and ds.X.max() <= 1.0
    assert sorted(np.unique(ds.labels)) == [0, 1, 2]


# ---------------------------------------------------------------------------
# IDX


@pytest.fixture
def idx_fixture(tmp_path):
    imgs = np.array(
        [[[0, 255], [17, 34]], [[255, 0], [51, 68]]], dtype=np.uint8)  # 2 images, 2x2
    labels = np.array([3, 7], dtype=np.uint8)
    ip, lp = tmp_path / "imgs.idx", tmp_path / "labels.idx"
    write_idx_images(ip, imgs)
    write_idx_labels(lp, labels)
    return ip, lp, imgs, labels


def test_idx_fixture_values(idx_fixture):
    ip, lp, imgs, labels = idx_fixture
    ds = load_idx(ip, lp)
    assert ds.d == 4 and ds.n == 2
    assert np.allclose(ds.X[:, 0], imgs[0].reshape(-1) / 255.0)
    assert ds.X[0, 0] == 0.0 and ds.X[1, 0] == 1.0
    assert ds.labels.tolist() == [3, 7]


def test_idx_roundtrip_bytes(idx_fixture, tmp_path):
    ip, lp, imgs, labels = idx_fixture
    ds = load_idx(ip, lp)
    back = (ds.X * 255.0).round().astype(np.uint8).T.reshape(ds.n, *ds.meta["shape"])
    ip2, lp2 = tmp_path / "imgs2.idx", tmp_path / "labels2.idx"
    write_idx_images(ip2, back)
    write_idx_labels(lp2, ds.labels.astype(np.uint8))
    assert ip2.read_bytes() == ip.read_bytes()
    assert lp2.read_bytes() == lp.read_bytes()


def test_idx_images_without_labels(idx_fixture):
    ip, *_ = idx_fixture
    ds = load_idx(ip)
    assert ds.labels is None and ds.n == 2


def test_idx_wrong_magic(idx_fixture, tmp_path):
    ip, lp, *_ = idx_fixture
    with pytest.raises(DatasetError, match="magic"):
        load_idx(lp, None)   # labels file offered as images
    bad = tmp_path / "bad.idx"
    bad.write_bytes(struct.pack(">I", 0x00000901) + b"\x00" * 8)
    with pytest.raises(DatasetError, match="magic"):
        load_idx(ip, bad)


def test_idx_truncated(tmp_path):
    path = tmp_path / "trunc.idx"
    path.write_bytes(struct.pack(">IIII", 0x00000803, 5, 2, 2) + b"\x00" * 7)
    with pytest.raises(DatasetError, match="truncated"):
        load_idx(path)


def test_idx_count_mismatch(idx_fixture, tmp_path):
    ip, _, _, _ = idx_fixture
    lp = tmp_path / "short.idx"
    write_idx_labels(lp, np.array([1], dtype=np.uint8))
    with pytest.raises(DatasetError, match="mismatch"):
        load_idx(ip, lp)


# ---------------------------------------------------------------------------
# CIFAR-10


def _cifar_record(label, r, g, b):
    return bytes([label]) + bytes([r] * 1024) + bytes([g] * 1024) + bytes([b] * 1024)


def test_cifar_all_white_is_one(tmp_path):
    path = tmp_path / "batch.bin"
    path.write_bytes(_cifar_record(1, 255, 255, 255))
    ds = load_cifar10([path], grayscale=True)
    assert ds.d == 1024 and ds.n == 1
    assert np.allclose(ds.X, 1.0)
    assert ds.labels.tolist() == [1]


def test_cifar_pure_red_luminance(tmp_path):
    path = tmp_path / "batch.bin"
    path.write_bytes(_cifar_record(0, 255, 0, 0))
    ds = load_cifar10([path], grayscale=True)
    assert np.allclose(ds.X, 0.299)


def test_cifar_color_mode(tmp_path):
    path = tmp_path / "batch.bin"
    path.write_bytes(_cifar_record(2, 255, 0, 0) + _cifar_record(5, 0, 255, 0))
    ds = load_cifar10([path], grayscale=False)
    assert ds.d == 3072 and ds.n == 2
    assert ds.X[:1024, 0].mean() == 1.0 and ds.X[1024:, 0].mean() == 0.0


def test_cifar_bad_length(tmp_path):
    path = tmp_path / "batch.bin"
    path.write_bytes(b"\x00" * (CIFAR_RECORD + 1))
    with pytest.raises(DatasetError, match="multiple"):
        load_cifar10([path])


# ---------------------------------------------------------------------------
# class filtering


def _labeled_dataset(n=400, seed=0):
    rng = np.random.default_rng(seed)
    labels = np.arange(n) % 10          # 40 per class
    return Dataset(X=rng.standard_normal((6, n)), labels=labels)


def test_filter_classes_balanced_and_remapped():
    ds = _labeled_dataset()
    out = filter_classes(ds, [4, 1, 9], n=99, seed=1)
    assert out.n == 99
    counts = np.bincount(out.labels, minlength=3)
    assert counts.tolist() == [33, 33, 33]
    assert set(out.labels.tolist()) == {0, 1, 2}


def test_filter_classes_within_one_when_not_divisible():
    ds = _labeled_dataset()
    out = filter_classes(ds, [0, 1, 2], n=100, seed=2)
    counts = np.bincount(out.labels, minlength=3)
    assert counts.max() - counts.min() <= 1 and counts.sum() == 100


def test_filter_classes_deterministic():
    ds = _labeled_dataset()
    a = filter_classes(ds, [2, 3], n=20, seed=5)
    b = filter_classes(ds, [2, 3], n=20, seed=5)
    assert np.array_equal(a.X, b.X) and np.array_equal(a.labels, b.labels)


def test_filter_classes_empty_request():
    ds = _labeled_dataset()
    out = filter_classes(ds, [1, 2], n=0, seed=0)
    assert out.n == 0 and out.labels.size == 0


def test_filter_classes_insufficient():
    ds = Dataset(X=np.zeros((2, 4)), labels=np.array([0, 0, 1, 1]))
    with pytest.raises(DatasetError, match="available"):
        filter_classes(ds, [0, 1], n=10, seed=0)


def test_filter_requires_labels():
    with pytest.raises(DatasetError):
        filter_classes(Dataset(X=np.zeros((2, 3))), [0], n=1)
