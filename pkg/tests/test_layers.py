import numpy as np
import pytest

from tsp_fcn import layers


@pytest.fixture(scope="function")
def rng():
    return np.random.default_rng(0)


def _naive_conv(x, w, b):
    k = w.shape[0]
    p = k // 2
    xp = np.pad(x, ((p, p), (p, p), (0, 0)))
    H, W, _ = x.shape
    out = np.zeros((H, W, w.shape[-1]))
    for i in range(H):
        for j in range(W):
            out[i, j] = np.tensordot(xp[i : i + k, j : j + k], w, axes=3) + b
    return out


def _numeric(f, x, step=1e-6):
    grad = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        old = x[idx]
        x[idx] = old + step
        plus = f()
        x[idx] = old - step
        minus = f()
        x[idx] = old
        grad[idx] = (plus - minus) / (2 * step)
    return grad


def test_xavier_variance(rng):
    w = layers.xavier_uniform((3, 3, 8, 16), 72, 144, rng, np.float64)
    assert w.var() == pytest.approx(2.0 / (72 + 144), rel=0.1)
    assert np.abs(w).max() <= np.sqrt(6.0 / 216)


@pytest.mark.parametrize("k", [1, 3])
def test_conv_matches_naive(rng, k):
    x = rng.standard_normal((6, 5, 3))
    w = rng.standard_normal((k, k, 3, 4))
    b = rng.standard_normal(4)
    out, _ = layers.conv_forward(x, w, b)
    assert np.allclose(out, _naive_conv(x, w, b))


def test_conv_constant_interior(rng):
    x = np.full((10, 10, 3), 0.7)
    out, _ = layers.conv_forward(x, rng.standard_normal((3, 3, 3, 2)), np.zeros(2))
    interior = out[1:-1, 1:-1]
    assert np.allclose(interior, interior[0, 0])


@pytest.mark.parametrize("k", [1, 3])
def test_conv_backward(rng, k):
    x = rng.standard_normal((5, 4, 2))
    w = rng.standard_normal((k, k, 2, 3))
    b = rng.standard_normal(3)
    g = rng.standard_normal((5, 4, 3))
    out, cache = layers.conv_forward(x, w, b)
    dx, dw, db = layers.conv_backward(g, cache)
    f = lambda: np.sum(layers.conv_forward(x, w, b)[0] * g)
    assert np.allclose(dx, _numeric(f, x), atol=1e-6)
    assert np.allclose(dw, _numeric(f, w), atol=1e-6)
    assert np.allclose(db, g.sum(axis=(0, 1)))


def test_maxpool(rng):
    x = rng.standard_normal((4, 6, 2))
    out, cache = layers.maxpool_forward(x)
    assert out.shape == (2, 3, 2)
    assert out[1, 2, 0] == x[2:4, 4:6, 0].max()
    g = rng.standard_normal(out.shape)
    dx = layers.maxpool_backward(g, cache)
    f = lambda: np.sum(layers.maxpool_forward(x)[0] * g)
    assert np.allclose(dx, _numeric(f, x), atol=1e-6)


def test_maxpool_constant_interior():
    out, _ = layers.maxpool_forward(np.full((8, 8, 1), 2.0))
    assert np.all(out == 2.0)


@pytest.mark.parametrize("factor", [2, 4, 8])
def test_upsample_shape_and_backward(rng, factor):
    x = rng.standard_normal((2, 3, 1))
    w = rng.standard_normal((2 * factor, 2 * factor, 1, 2))
    b = rng.standard_normal(2)
    out, cache = layers.upsample_forward(x, w, b, factor)
    assert out.shape == (2 * factor, 3 * factor, 2)
    g = rng.standard_normal(out.shape)
    dx, dw, db = layers.upsample_backward(g, cache)
    f = lambda: np.sum(layers.upsample_forward(x, w, b, factor)[0] * g)
    assert np.allclose(dx, _numeric(f, x), atol=1e-5)
    assert np.allclose(dw, _numeric(f, w), atol=1e-5)
    assert np.allclose(db, g.sum(axis=(0, 1)))


def test_upsample_constant_interior():
    factor = 4
    x = np.ones((4, 4, 1))
    w = np.ones((2 * factor, 2 * factor, 1, 1))
    out, _ = layers.upsample_forward(x, w, np.zeros(1), factor)
    interior = out[factor:-factor, factor:-factor]
    assert np.allclose(interior, interior[0, 0])


def test_relu_and_dropout(rng):
    x = rng.standard_normal((4, 4, 2))
    out, mask = layers.relu_forward(x)
    assert np.all(out >= 0)
    assert np.array_equal(layers.relu_backward(np.ones_like(x), mask), (x > 0).astype(float))
    same, cache = layers.dropout_forward(x, 0.0, rng)
    assert same is x and cache is None
    dropped, keep = layers.dropout_forward(np.ones((200, 200, 1)), 0.5, rng)
    assert set(np.unique(dropped)) <= {0.0, 2.0}
    assert dropped.mean() == pytest.approx(1.0, abs=0.05)


def test_sigmoid_extremes():
    out = layers.sigmoid(np.array([-1000.0, 0.0, 1000.0]))
    assert np.all(np.isfinite(out))
    assert out.tolist() == [0.0, 0.5, 1.0]
