import numpy as np
import pytest

from disco_s2.conv import ShapeError, depthwise_separable_conv, disco_conv, disco_conv_transposed
from disco_s2.filters import AXISYMMETRIC, make_random_filter, make_smooth_bump
from disco_s2.grid import RotationZY, build_grid, inverse_rotate_point
from disco_s2.kernel import build_kernel, build_transposed_kernel, densify

from conftest import random_filter


def kernels(kind, L=8):
    f = random_filter(kind, L)
    g = build_grid(L)
    return f, g, build_kernel(f, g, g), build_transposed_kernel(f, g, g)


def test_delta_input(kind):
    f, g, k, kt = kernels(kind)
    L = g.L
    i0 = (3, 5)
    x = np.zeros(g.shape)
    x[i0] = 1.0
    T, P = g.mesh()
    h = disco_conv(k, x)
    w = g.sample_weight(*i0)
    for j in [(0, 0), (2, 4), (3, 7), (4, 5), (8, 3)]:
        th, ph = inverse_rotate_point(RotationZY(P[j], T[j]), T[i0], P[i0])
        assert h[j] == pytest.approx(f(th, ph) * w, abs=1e-15)
    # transposed: the filter recentred at the delta
    ht = disco_conv_transposed(kt, x)
    th, ph = inverse_rotate_point(RotationZY(P[i0], T[i0]), T, P)
    np.testing.assert_allclose(ht, f(th, ph).reshape(g.shape) * w, atol=1e-15)


def test_constant_input_constant_along_rings():
    L = 16
    g = build_grid(L)
    h = disco_conv(build_kernel(make_smooth_bump(3 * np.pi / L), g, g), np.ones(g.shape))
    assert np.ptp(h, axis=1).max() == 0.0
    # the north pole output is the direct cap sum
    expect = np.sum(make_smooth_bump(3 * np.pi / L)(g.mesh()[0], 0.0) * g.sample_weights)
    assert h[0, 0] == pytest.approx(expect, abs=1e-14)


@pytest.mark.xfail(strict=True, reason="cap quadrature varies from ring to ring; see decisions ledger")
def test_constant_input_constant_everywhere():
    L = 8
    g = build_grid(L)
    h = disco_conv(build_kernel(make_smooth_bump(3 * np.pi / L), g, g), np.ones(g.shape))
    assert np.ptp(h) <= 1e-10


@pytest.mark.parametrize("up", [False, True])
def test_dense_oracle(kind, up, rng):
    L = 8
    f = random_filter(kind, L)
    gi, go = build_grid(L), build_grid(2 * L if up else L)
    x = rng.standard_normal((3,) + gi.shape)
    for builder, conv in ((build_kernel, disco_conv), (build_transposed_kernel, disco_conv_transposed)):
        k = builder(f, gi, go)
        ref = x.reshape(3, -1) @ densify(k).T
        assert np.abs(conv(k, x).reshape(3, -1) - ref).max() <= 1e-12


def test_dense_oracle_l16(kind, rng):
    L = 16
    f = random_filter(kind, L)
    g = build_grid(L)
    x = rng.standard_normal(g.shape)
    for builder, conv in ((build_kernel, disco_conv), (build_transposed_kernel, disco_conv_transposed)):
        k = builder(f, g, g)
        assert np.abs(conv(k, x).ravel() - densify(k) @ x.ravel()).max() <= 1e-12


def test_transposed_is_quadrature_adjoint(kind):
    f, g, k, kt = kernels(kind)
    F, T = densify(k), densify(kt)
    w = g.sample_weights.ravel()
    assert np.abs(T - (F.T * w[None, :]) / w[:, None]).max() <= 1e-12
    # <F x, y>_w == <x, T y>_w
    rng = np.random.default_rng(0)
    x, y = rng.standard_normal(F.shape[1]), rng.standard_normal(F.shape[0])
    assert np.dot(F @ x * w, y) == pytest.approx(np.dot(x * w, T @ y), rel=1e-12)


def test_upsample_shape_and_zero():
    g8, g16 = build_grid(8), build_grid(16)
    k = build_transposed_kernel(make_smooth_bump(0.4), g8, g16)
    out = disco_conv_transposed(k, np.zeros(g8.shape))
    assert out.shape == (17, 32) and out.size == 2 * 16 * 17
    assert np.all(out == 0)


def test_linearity(kind, rng):
    _, g, k, kt = kernels(kind)
    x, y = rng.standard_normal((2,) + g.shape)
    a, b = 1.7, -0.4
    for kk, conv in ((k, disco_conv), (kt, disco_conv_transposed)):
        np.testing.assert_allclose(conv(kk, a * x + b * y), a * conv(kk, x) + b * conv(kk, y), atol=1e-12)


def test_phi_shift_covariance(kind, rng):
    _, g, k, kt = kernels(kind)
    x = rng.standard_normal(g.shape)
    for kk, conv in ((k, disco_conv), (kt, disco_conv_transposed)):
        base = conv(kk, x)
        for s in (1, 5, 11):
            assert np.abs(conv(kk, np.roll(x, s, axis=-1)) - np.roll(base, s, axis=-1)).max() <= 1e-13


def test_errors():
    g8 = build_grid(8)
    k = build_kernel(make_smooth_bump(0.4), g8, g8)
    with pytest.raises(ShapeError):
        disco_conv(k, np.zeros((9, 18)))
    x = np.zeros(g8.shape)
    x[2, 2] = np.nan
    with pytest.raises(ValueError):
        disco_conv(k, x)
    with pytest.raises(ValueError):
        disco_conv_transposed(k, np.zeros(g8.shape))
    with pytest.raises(ValueError):
        disco_conv(build_transposed_kernel(make_smooth_bump(0.4), g8, g8), np.zeros(g8.shape))


def test_batch_matches_single(rng):
    _, g, k, _ = kernels(AXISYMMETRIC)
    x = rng.standard_normal((2, 3) + g.shape)
    out = disco_conv(k, x)
    assert out.shape == x.shape
    np.testing.assert_allclose(out[1, 2], disco_conv(k, x[1, 2]), atol=1e-15)


def test_depthwise_separable(rng):
    L = 8
    g = build_grid(L)
    ks = [build_kernel(make_random_filter(kd, 3 * np.pi / L, 4, seed=s), g, g)
          for s, kd in enumerate(["axisymmetric", "directional"])]
    x = rng.standard_normal((4, 2) + g.shape)
    W = rng.standard_normal((3, 2))
    b = rng.standard_normal(3)
    out = depthwise_separable_conv(ks, W, x, bias=b)
    ref = np.zeros((4, 3) + g.shape)
    for d in range(4):
        for o in range(3):
            ref[d, o] = b[o]
            for c in range(2):
                ref[d, o] += W[o, c] * disco_conv(ks[c], x[d, c])
    assert np.abs(out - ref).max() <= 1e-12
    one = depthwise_separable_conv(ks[:1], np.eye(1), x[:, :1])
    np.testing.assert_array_equal(one[:, 0], disco_conv(ks[0], x[:, 0]))
    assert np.all(depthwise_separable_conv(ks, np.zeros((3, 2)), x) == 0)
    with pytest.raises(ShapeError):
        depthwise_separable_conv(ks, W, x[:, :1])
