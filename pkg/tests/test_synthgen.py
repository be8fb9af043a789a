import numpy as np
import pytest

from jmf import SyntheticSpec, generate
from jmf.synthgen import build_between, build_within


def test_invalid_dataset_id_rejected():
    with pytest.raises(ValueError):
        SyntheticSpec(dataset_id="D9")


def test_d1_shapes():
    truth = generate(SyntheticSpec(dataset_id="D1", seed=0))
    assert truth.w0.shape == (45, 4)
    assert [x.shape for x in truth.x0] == [(45, 130), (45, 170), (45, 215)]
    assert [h.shape for h in truth.h0] == [(4, 130), (4, 170), (4, 215)]


def test_d2_d3_d4_shapes():
    truth = generate(SyntheticSpec(dataset_id="D2", seed=0))
    assert truth.w0.shape == (1000, 10)
    assert [x.shape for x in truth.x0] == [(1000, 200), (1000, 300),
                                           (1000, 500)]
    truth = generate(SyntheticSpec(dataset_id="D3", seed=0))
    assert truth.w0.shape == (2000, 20)
    truth = generate(SyntheticSpec(dataset_id="D4", seed=0))
    assert truth.w0.shape == (500, 5)
    assert [x.shape for x in truth.x0] == [(500, 1200), (500, 1300),
                                           (500, 2000)]


def test_factors_are_binary_and_data_nonnegative():
    for ds in ("D1", "D2", "D3", "D4"):
        truth = generate(SyntheticSpec(dataset_id=ds, seed=1))
        assert set(np.unique(truth.w0)) <= {0.0, 1.0}
        for h in truth.h0:
            assert set(np.unique(h)) <= {0.0, 1.0}
        for x in truth.x0:
            assert x.min() >= 0


def test_zero_noise_gives_exact_products():
    truth = generate(SyntheticSpec(dataset_id="D1", mu=0.0, seed=3))
    for x, h in zip(truth.x0, truth.h0):
        assert np.array_equal(x, truth.w0 @ h)


def test_determinism_bit_identical():
    a = generate(SyntheticSpec(dataset_id="D1", seed=9))
    b = generate(SyntheticSpec(dataset_id="D1", seed=9))
    assert np.array_equal(a.w0, b.w0)
    assert all(np.array_equal(x, y) for x, y in zip(a.x0, b.x0))
    for key in a.constraints.between:
        assert np.array_equal(a.constraints.between[key],
                              b.constraints.between[key])


def test_d2_first_view_blocks_tile_disjointly():
    truth = generate(SyntheticSpec(dataset_id="D2", seed=0))
    h01 = truth.h0[0]
    for j in range(10):
        row = h01[j]
        lo, hi = j * 20, (j + 1) * 20
        assert np.array_equal(np.flatnonzero(row), np.arange(lo, hi))


def test_d1_and_d4_w0_supports_disjoint():
    for ds in ("D1", "D4"):
        truth = generate(SyntheticSpec(dataset_id=ds, seed=2))
        assert truth.w0.sum(axis=1).max() <= 1


def test_d3_w0_consecutive_columns_share_15_rows():
    truth = generate(SyntheticSpec(dataset_id="D3", seed=0))
    w0 = truth.w0
    for k in range(w0.shape[1] - 1):
        shared = np.sum((w0[:, k] > 0) & (w0[:, k + 1] > 0))
        assert shared == 15


def test_build_within_noise_free_counts():
    h0 = np.array([[1.0, 1.0], [0.0, 0.0]])
    theta = build_within(h0, noise_scale=0.0)
    assert np.array_equal(theta, np.ones((2, 2)))


def test_build_within_counts_co_membership():
    h0 = np.array([[1.0, 1.0, 0.0], [0.0, 1.0, 1.0]])
    theta = build_within(h0, noise_scale=0.0)
    # column 1 co-occurs with itself in two components
    assert theta[1, 1] == 2.0
    assert theta[0, 2] == 0.0 and theta[0, 1] == 1.0


def test_build_within_symmetric_and_nonnegative():
    rng = np.random.default_rng(5)
    h0 = (rng.random((3, 8)) < 0.4).astype(float)
    theta = build_within(h0, noise_scale=0.1, rng=7)
    assert theta.min() >= 0
    assert np.allclose(theta, theta.T, atol=1e-15)


def test_build_between_disjoint_supports_zero():
    h_i = np.array([[1.0, 0.0], [0.0, 0.0]])
    h_j = np.array([[0.0, 0.0], [0.0, 1.0]])
    assert np.array_equal(build_between(h_i, h_j, noise_scale=0.0),
                          np.zeros((2, 2)))


def test_build_between_counts_and_shape():
    h_i = np.eye(2)
    r = build_between(h_i, h_i, noise_scale=0.0)
    assert np.array_equal(r, np.eye(2))
    rng_out = build_between(np.ones((2, 3)), np.ones((2, 4)),
                            noise_scale=0.1, rng=3)
    assert rng_out.shape == (3, 4) and rng_out.min() >= 0


def test_build_between_rank_mismatch_rejected():
    with pytest.raises(ValueError):
        build_between(np.ones((2, 3)), np.ones((3, 4)), noise_scale=0.0)


def test_constraints_stored_for_ordered_pairs():
    truth = generate(SyntheticSpec(dataset_id="D1", seed=0))
    assert set(truth.constraints.between) == {(0, 1), (0, 2), (1, 2)}
    assert set(truth.constraints.within) == {0, 1, 2}
    for (i, j), mat in truth.constraints.between.items():
        assert mat.shape == (truth.x0[i].shape[1], truth.x0[j].shape[1])


def test_d1_views_missing_components_as_constructed():
    truth = generate(SyntheticSpec(dataset_id="D1", seed=0))
    # the second and third views each lack one pattern entirely
    zero_rows = [int(np.sum(h.sum(axis=1) == 0)) for h in truth.h0]
    assert zero_rows == [0, 1, 1]
