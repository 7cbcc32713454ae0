import numpy as np
import pytest

from fi2p import tensor
from fi2p.errors import ConfigError, ShapeError

from conftest import matmul_oracle


def test_matmul_identity_is_bitwise_exact():
    x = np.array([[1.0, 2.0], [3.0, 4.0]])
    out = tensor.matmul(np.eye(2), x)
    assert np.array_equal(out, x)


def test_matmul_dot_product():
    out = tensor.matmul(np.array([[1.0, 2.0]]), np.array([[3.0], [4.0]]))
    assert out.shape == (1, 1)
    assert out[0, 0] == 11.0


def test_matmul_matches_triple_loop_oracle():
    rng = np.random.default_rng(3)
    a = rng.standard_normal((7, 5))
    b = rng.standard_normal((5, 3))
    assert np.abs(tensor.matmul(a, b) - matmul_oracle(a, b)).max() < 1e-12


def test_matmul_shape_mismatch_names_both_shapes():
    with pytest.raises(ShapeError) as exc:
        tensor.matmul(np.zeros((2, 3)), np.zeros((4, 2)))
    assert "(2, 3)" in str(exc.value) and "(4, 2)" in str(exc.value)


def test_im2col_full_image_kernel_is_flatten():
    x = np.arange(4.0).reshape(1, 2, 2)
    cols = tensor.im2col(x, (2, 2), (1, 1), (0, 0))
    assert cols.shape == (4, 1)
    assert np.array_equal(cols[:, 0], x.ravel())


def test_im2col_1x1_kernel_is_reshape():
    x = np.arange(9.0).reshape(1, 3, 3)
    cols = tensor.im2col(x, (1, 1), (1, 1), (0, 0))
    assert cols.shape == (1, 9)
    assert np.array_equal(cols[0], x.ravel())


def test_im2col_padding_contributes_zeros():
    x = np.ones((1, 2, 2))
    cols = tensor.im2col(x, (2, 2), (1, 1), (1, 1))
    # corner output position sees three padded zeros
    assert cols[:, 0].tolist() == [0.0, 0.0, 0.0, 1.0]


def test_im2col_empty_output_is_config_error():
    with pytest.raises(ConfigError):
        tensor.im2col(np.ones((1, 2, 2)), (5, 5), (1, 1), (0, 0))


def test_col2im_non_overlapping_inverts_im2col():
    rng = np.random.default_rng(5)
    x = rng.standard_normal((2, 3, 3))
    cols = tensor.im2col(x, (1, 1), (1, 1), (0, 0))
    back = tensor.col2im(cols, (2, 3, 3), (1, 1), (1, 1), (0, 0))
    assert np.array_equal(back, x)


def test_col2im_overlap_counts():
    ho = wo = 2  # 2x2 kernel stride 1 on 3x3
    cols = np.ones((4, ho * wo))
    out = tensor.col2im(cols, (1, 3, 3), (2, 2), (1, 1), (0, 0))
    expected = np.array([[1, 2, 1], [2, 4, 2], [1, 2, 1]], dtype=float)
    assert np.array_equal(out[0], expected)


def test_col2im_bad_geometry_is_config_error():
    with pytest.raises(ConfigError):
        tensor.col2im(np.ones((4, 5)), (1, 3, 3), (2, 2), (1, 1), (0, 0))


@pytest.mark.parametrize("c,h,w,k,s,p", [
    (1, 4, 4, 2, 1, 0),
    (2, 5, 5, 3, 2, 1),
    (3, 6, 4, 3, 1, 1),
    (2, 7, 7, 2, 2, 0),
])
def test_im2col_col2im_adjoint_identity(c, h, w, k, s, p):
    rng = np.random.default_rng(c * 100 + h)
    x = rng.standard_normal((c, h, w))
    cols = tensor.im2col(x, (k, k), (s, s), (p, p))
    y = rng.standard_normal(cols.shape)
    lhs = float((cols * y).sum())
    rhs = float((x * tensor.col2im(y, (c, h, w), (k, k), (s, s), (p, p))).sum())
    assert abs(lhs - rhs) < 1e-10


def test_flatten_reshape_roundtrip_bitwise():
    rng = np.random.default_rng(9)
    x = rng.standard_normal((2, 3, 4, 5))
    assert np.array_equal(x.ravel().reshape(x.shape), x)
