import numpy as np
import pytest

from framedeblur.framelet import CHANNELS, FrameOperator, filter_matrices, soft_threshold

from oracles import frame_matrix, mask_matrices


def test_filter_matrices_match_masks():
    for B, D in zip(filter_matrices(9), mask_matrices(9)):
        np.testing.assert_array_equal(B, D)


def test_unitary_partition_1d():
    B0, B1, B2 = filter_matrices(16)
    np.testing.assert_allclose(B0.T @ B0 + B1.T @ B1 + B2.T @ B2, np.eye(16), atol=1e-15)


@pytest.mark.parametrize("levels", [1, 2])
def test_analysis_matches_dense_kronecker(levels):
    n = 8
    W = FrameOperator(n, levels)
    Wd = frame_matrix(n, levels)
    x = np.random.default_rng(levels).standard_normal((n, n))
    np.testing.assert_allclose(W.analyze(x).ravel(), Wd @ x.ravel(), atol=1e-13)
    np.testing.assert_allclose(Wd.T @ Wd, np.eye(n * n), atol=1e-13)


def test_constant_image_channels():
    W = FrameOperator(8, 1)
    c = W.analyze(np.full((8, 8), 7.0))
    assert np.all(c[0] == 7.0)
    assert not c[1:].any()


def test_ramp_second_difference():
    n = 8
    W = FrameOperator(n, 1)
    ramp = np.repeat(np.arange(n, dtype=float)[:, None], n, axis=1)
    c = W.analyze(ramp)
    b20 = c[W.channel_index(1, 2, 0)]
    assert not b20[1:-1].any()
    # the edge-duplicating extension breaks linearity at the first and last rows
    assert b20[0, 0] == pytest.approx(-0.25) and b20[-1, 0] == pytest.approx(0.25)


@pytest.mark.parametrize("levels", [1, 2, 3, 4])
def test_round_trip(levels):
    rng = np.random.default_rng(levels)
    W = FrameOperator(16, levels)
    for _ in range(50):
        x = rng.standard_normal((16, 16))
        assert np.max(np.abs(W.synthesize(W.analyze(x)) - x)) < 1e-12


def test_adjoint_and_zero():
    rng = np.random.default_rng(0)
    W = FrameOperator(16, 3)
    x = rng.standard_normal((16, 16))
    y = rng.standard_normal(W.coeff_shape)
    assert np.vdot(W.analyze(x), y) == pytest.approx(np.vdot(x, W.synthesize(y)), abs=1e-12)
    assert not W.synthesize(np.zeros(W.coeff_shape)).any()


def test_redundant_frame_is_not_orthogonal():
    W = FrameOperator(8, 1)
    e = np.zeros(W.coeff_shape)
    e[0, 0, 0] = 1.0
    back = W.analyze(W.synthesize(e))
    assert np.linalg.norm(back - e) > 0.1


def test_channel_layout():
    W = FrameOperator(16, 2)
    assert W.coeff_shape == (17, 16, 16) and W.size == 17 * 256
    idx = {W.channel_index(lv, i, j) for lv in (1, 2) for (i, j) in CHANNELS if (lv, i, j) != (1, 0, 0)}
    assert idx == set(range(17))
    with pytest.raises(ValueError):
        W.channel_index(1, 0, 0)
    with pytest.raises(ValueError):
        W.channel_index(3, 1, 1)


def test_shape_errors():
    with pytest.raises(ValueError):
        FrameOperator(8, 4)
    W = FrameOperator(8, 1)
    with pytest.raises(ValueError):
        W.analyze(np.zeros((7, 7)))
    with pytest.raises(ValueError):
        W.synthesize(np.zeros((8, 8, 8)))


class TestSoftThreshold:
    def test_zero_threshold_copies(self):
        x = np.array([1.0, -2.0])
        y = soft_threshold(x, 0.0)
        np.testing.assert_array_equal(y, x)
        assert y is not x

    def test_scalar_cases(self):
        np.testing.assert_array_equal(soft_threshold(np.array([5.0, -1.0, -5.0]), 2.0), [3.0, 0.0, -3.0])

    def test_bounded_shrinkage(self):
        x = np.random.default_rng(0).standard_normal(1000) * 5
        assert np.max(np.abs(x - soft_threshold(x, 1.5))) <= 1.5

    def test_negative_threshold(self):
        with pytest.raises(ValueError):
            soft_threshold(np.ones(3), -0.1)
