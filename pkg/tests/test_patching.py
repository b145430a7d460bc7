import numpy as np
import pytest
from hypothesis import given, strategies as st

from purifynet import PatchConfig, PatchConfigError, patch, patches_of, validate_config


def test_patch_middle_block():
    cfg = validate_config(6, 3, 2)
    x = np.array([1.0, 2, 3, 4, 5, 6])
    assert patch(cfg, x, 2).tolist() == [3.0, 4.0]


def test_patch_single_patch_is_identity():
    cfg = validate_config(4, 1, 4)
    x = np.array([7.0, 8, 9, 10])
    assert patch(cfg, x, 1).tolist() == [7.0, 8, 9, 10]


def test_patch_last_block():
    cfg = validate_config(6, 3, 2)
    assert patch(cfg, np.arange(1.0, 7.0), 3).tolist() == [5.0, 6.0]


@pytest.mark.parametrize("d,m,k", [(784, 4, 196), (784, 7, 112)])
def test_validate_config_accepts(d, m, k):
    cfg = validate_config(d, m, k)
    assert (cfg.d, cfg.m, cfg.k) == (d, m, k)


def test_validate_config_rejects_bad_product():
    with pytest.raises(PatchConfigError, match="10"):
        validate_config(10, 3, 4)


@pytest.mark.parametrize("m,k", [(0, 2), (2, 0), (-1, 3)])
def test_validate_config_rejects_nonpositive(m, k):
    with pytest.raises(PatchConfigError):
        validate_config(abs(m * k), m, k)


def test_patch_rejects_wrong_length():
    cfg = validate_config(6, 3, 2)
    with pytest.raises(PatchConfigError):
        patch(cfg, np.zeros(5), 1)


def test_patch_rejects_out_of_range_index():
    cfg = validate_config(6, 3, 2)
    for i in (0, 4):
        with pytest.raises(PatchConfigError):
            patch(cfg, np.zeros(6), i)


@given(st.integers(1, 8), st.integers(1, 8), st.randoms(use_true_random=False))
def test_patches_partition_input(m, k, rnd):
    cfg = PatchConfig(d=m * k, m=m, k=k)
    x = np.array([rnd.uniform(-5, 5) for _ in range(m * k)])
    rebuilt = np.concatenate([patch(cfg, x, i) for i in range(1, m + 1)])
    assert np.array_equal(rebuilt, x)


@given(st.integers(1, 6), st.integers(1, 6))
def test_patch_index_sets_disjoint(m, k):
    cfg = PatchConfig(d=m * k, m=m, k=k)
    marker = np.arange(cfg.d, dtype=float)
    seen = [set(patch(cfg, marker, i).astype(int).tolist()) for i in range(1, m + 1)]
    for i in range(m):
        for j in range(i + 1, m):
            assert not (seen[i] & seen[j])


def test_patches_of_matches_patch():
    cfg = validate_config(12, 3, 4)
    X = np.arange(24.0).reshape(12, 2)
    Xp = patches_of(cfg, X)
    assert Xp.shape == (3, 4, 2)
    for i in range(1, 4):
        for s in range(2):
            assert np.array_equal(Xp[i - 1, :, s], patch(cfg, X[:, s], i))
