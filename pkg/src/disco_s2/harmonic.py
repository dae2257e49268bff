"""Spherical harmonic transforms, Wigner rotations and the harmonic baseline.

Conventions: orthonormal complex harmonics with the Condon-Shortley phase,
``Y_{l,-m} = (-1)^m conj(Y_{lm})``.  Coefficients are stored as arrays of
shape ``(..., L, 2L-1)`` where column ``m + L - 1`` holds order ``m`` (entries
with ``|m| > l`` are zero).

Rotations follow the zyz convention ``R = Z(alpha) Y(beta) Z(gamma)`` acting on
signals as ``(Rf)(omega) = f(R^{-1} omega)``; in harmonic space
``(Rf)_{lm} = sum_n D^l_{mn} f_{ln}`` with
``D^l_{mn} = exp(-i m alpha) d^l_{mn}(beta) exp(-i n gamma)``.
"""
from __future__ import annotations

from functools import lru_cache
from typing import NamedTuple

import numpy as np
from scipy.special import gammaln

from .grid import SampleGrid, build_grid


class EulerZYZ(NamedTuple):
    alpha: float
    beta: float
    gamma: float = 0.0

    def inverse(self) -> "EulerZYZ":
        return EulerZYZ(-self.gamma, -self.beta, -self.alpha)


def n_orders(L: int) -> int:
    return 2 * L - 1


def empty_coeffs(L: int, batch: tuple[int, ...] = ()) -> np.ndarray:
    return np.zeros(batch + (L, 2 * L - 1), dtype=complex)


def valid_mask(L: int) -> np.ndarray:
    """Boolean ``(L, 2L-1)`` mask of the ``|m| <= l`` entries."""
    ell = np.arange(L)[:, None]
    m = np.arange(-(L - 1), L)[None, :]
    return np.abs(m) <= ell


def legendre_lambda(L: int, theta) -> list[np.ndarray]:
    """Normalised associated Legendre functions ``lambda_{lm}(theta)``, m >= 0.

    Returns a list indexed by ``m``; entry ``m`` has shape ``(L - m, len(theta))``
    with row ``l - m``.  ``Y_{lm}(theta, phi) = lambda_{lm}(theta) exp(i m phi)``.
    """
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    x = np.cos(theta)
    s = np.sin(theta)
    out = []
    lmm = np.full_like(theta, 1.0 / np.sqrt(4 * np.pi))
    for m in range(L):
        if m > 0:
            lmm = -np.sqrt((2 * m + 1) / (2 * m)) * s * lmm
        rows = np.empty((L - m, theta.size))
        rows[0] = lmm
        if L - m > 1:
            rows[1] = np.sqrt(2 * m + 3) * x * lmm
        for l in range(m + 2, L):
            a = np.sqrt((4 * l * l - 1) / (l * l - m * m))
            b = np.sqrt(((l - 1) ** 2 - m * m) / (4 * (l - 1) ** 2 - 1))
            rows[l - m] = a * (x * rows[l - m - 1] - b * rows[l - m - 2])
        out.append(rows)
    return out


def spherical_harmonics(L: int, theta, phi) -> np.ndarray:
    """``Y_{lm}`` at points, shape ``(npoints, L, 2L-1)``."""
    theta = np.atleast_1d(np.asarray(theta, dtype=float)).ravel()
    phi = np.atleast_1d(np.asarray(phi, dtype=float)).ravel()
    lam = legendre_lambda(L, theta)
    Y = np.zeros((theta.size, L, 2 * L - 1), dtype=complex)
    for m in range(L):
        e = np.exp(1j * m * phi)
        Y[:, m:, L - 1 + m] = (lam[m] * e).T
        if m:
            Y[:, m:, L - 1 - m] = (-1) ** m * np.conj(Y[:, m:, L - 1 + m])
    return Y


def synthesize_at(flm: np.ndarray, theta, phi) -> np.ndarray:
    """Evaluate the bandlimited signal with coefficients ``flm`` at points."""
    L = flm.shape[-2]
    Y = spherical_harmonics(L, theta, phi)
    return np.einsum("...lm,plm->...p", flm, Y)


class _Transform:
    """Per-grid synthesis matrices and weighted least-squares analysis operators."""

    def __init__(self, grid: SampleGrid):
        L = grid.L
        self.L = L
        lam = legendre_lambda(L, grid.thetas)
        sw = np.sqrt(grid.ring_weights)
        self.synth = lam
        # Rows with l >= |m| only; the (L+1)-ring system is overdetermined by |m|+1,
        # so bandlimited signals are recovered exactly.
        self.analysis = [np.linalg.pinv(sw[:, None] * rows.T) * sw[None, :] for rows in lam]


@lru_cache(maxsize=8)
def _transform(L: int) -> _Transform:
    return _Transform(build_grid(L))


def _check_signal(f: np.ndarray, grid: SampleGrid) -> np.ndarray:
    f = np.asarray(f)
    if f.shape[-2:] != grid.shape:
        raise ValueError(f"signal shape {f.shape[-2:]} does not match grid {grid.shape}")
    return f


def sht_forward(f: np.ndarray, grid: SampleGrid | None = None, L: int | None = None) -> np.ndarray:
    """Harmonic coefficients of sampled signal(s) ``f`` of shape ``(..., L+1, 2L)``.

    Exact for signals bandlimited at ``L``; for other signals it returns the
    quadrature-weighted least-squares projection onto degrees ``< L``.
    """
    f = np.asarray(f)
    if grid is None:
        grid = build_grid(L if L is not None else f.shape[-1] // 2)
    f = _check_signal(f, grid)
    L = grid.L
    tr = _transform(L)
    g = np.fft.fft(f, axis=-1) / (2 * L)
    out = np.zeros(f.shape[:-2] + (L, 2 * L - 1), dtype=complex)
    for m in range(L):
        P = tr.analysis[m]
        out[..., m:, L - 1 + m] = np.einsum("lt,...t->...l", P, g[..., :, m])
        if m:
            out[..., m:, L - 1 - m] = (-1) ** m * np.einsum("lt,...t->...l", P, g[..., :, -m])
    return out


def sht_inverse(flm: np.ndarray, grid: SampleGrid | None = None, real: bool = True) -> np.ndarray:
    """Sample coefficients ``flm`` of shape ``(..., L, 2L-1)`` on the grid."""
    flm = np.asarray(flm)
    L = flm.shape[-2]
    if flm.shape[-1] != 2 * L - 1:
        raise ValueError(f"coefficient array has shape {flm.shape[-2:]}, expected (L, 2L-1)")
    if grid is None:
        grid = build_grid(L)
    if grid.L != L:
        raise ValueError(f"coefficients at L={L} do not match grid L={grid.L}")
    tr = _transform(L)
    g = np.zeros(flm.shape[:-2] + (L + 1, 2 * L), dtype=complex)
    for m in range(L):
        lam = tr.synth[m]
        g[..., :, m] = np.einsum("lt,...l->...t", lam, flm[..., m:, L - 1 + m])
        if m:
            g[..., :, -m] = (-1) ** m * np.einsum("lt,...l->...t", lam, flm[..., m:, L - 1 - m])
    f = np.fft.ifft(g, axis=-1) * (2 * L)
    return f.real if real else f


# --- Wigner d-matrices -----------------------------------------------------


def wigner_d(L: int, beta: float) -> list[np.ndarray]:
    """Wigner small-d matrices ``d^l(beta)`` for ``l < L``.

    Entry ``l`` has shape ``(2l+1, 2l+1)`` indexed ``[m + l, n + l]``.  Each
    ``(m, n)`` sequence is seeded in closed form at ``l = max(|m|, |n|)`` and
    advanced with the three-term recursion in ``l``.
    """
    cb = np.cos(beta)
    c = np.cos(beta / 2)
    s = np.sin(beta / 2)
    K = L - 1
    m = np.arange(-K, K + 1)[:, None] * np.ones((1, 2 * K + 1), dtype=int)
    n = m.T.copy()
    am, an = np.abs(m), np.abs(n)
    l0 = np.maximum(am, an)
    seed = _wigner_seed(l0, m, n, c, s)

    mf, nf = m.astype(float), n.astype(float)
    prev = np.zeros(m.shape)
    cur = np.zeros(m.shape)
    out = []
    for l in range(L):
        new = np.where(l0 == l, seed, 0.0)
        step = l0 < l
        if l >= 1 and step.any():
            lf = float(l)
            with np.errstate(divide="ignore", invalid="ignore"):
                denom = np.sqrt((lf * lf - mf * mf) * (lf * lf - nf * nf))
                a = lf * (2 * lf - 1) / denom
                mn = mf * nf / (lf * (lf - 1)) if l > 1 else np.zeros_like(mf)
                b = np.sqrt(((lf - 1) ** 2 - mf * mf) * ((lf - 1) ** 2 - nf * nf)) / ((lf - 1) * (2 * lf - 1)) if l > 1 else np.zeros_like(mf)
                rec = a * ((cb - mn) * cur - b * prev)
            new = np.where(step, rec, new)
        prev, cur = cur, new
        out.append(cur[K - l:K + l + 1, K - l:K + l + 1].copy())
    return out


def _wigner_seed(l0, m, n, c, s):
    # d^j_{j,n} = (-1)^{j-n} sqrt(C(2j, j+n)) c^{j+n} s^{j-n}, extended to the
    # other edges by d_{mn} = (-1)^{m-n} d_{nm} = d_{-n,-m}.
    j = l0

    def binom_sqrt(a, b):
        return np.exp(0.5 * (gammaln(2 * j + 1) - gammaln(a + 1) - gammaln(b + 1)))

    with np.errstate(invalid="ignore", over="ignore"):
        out = np.zeros(m.shape)
        # first index at +j
        case = m == j
        val = (-1.0) ** (j - n) * binom_sqrt(j + n, j - n) * c ** (j + n) * s ** (j - n)
        out = np.where(case, val, out)
        # first index at -j
        case2 = (m == -j) & ~case
        val = binom_sqrt(j - n, j + n) * c ** (j - n) * s ** (j + n)
        out = np.where(case2, val, out)
        # second index at +j
        case3 = (n == j) & ~case & ~case2
        val = binom_sqrt(j + m, j - m) * c ** (j + m) * s ** (j - m)
        out = np.where(case3, val, out)
        # second index at -j
        case4 = (n == -j) & ~case & ~case2 & ~case3
        val = (-1.0) ** (j + m) * binom_sqrt(j - m, j + m) * c ** (j - m) * s ** (j + m)
        out = np.where(case4, val, out)
    return out


def rotate_harmonic(flm: np.ndarray, R, d: list[np.ndarray] | None = None) -> np.ndarray:
    """Coefficients of the rotated signal ``f(R^{-1} omega)``.

    ``R`` is an :class:`EulerZYZ` (or any ``(alpha, beta[, gamma])``).  Pass a
    precomputed ``d = wigner_d(L, beta)`` to reuse it across calls.
    """
    alpha, beta, gamma = (tuple(R) + (0.0,))[:3]
    flm = np.asarray(flm)
    L = flm.shape[-2]
    if d is None:
        d = wigner_d(L, beta)
    ms = np.arange(-(L - 1), L)
    out = np.zeros(np.broadcast_shapes(flm.shape), dtype=complex)
    g = flm * np.exp(-1j * ms * gamma)
    for l in range(L):
        sl = slice(L - 1 - l, L + l)
        out[..., l, sl] = np.einsum("mn,...n->...m", d[l], g[..., l, sl])
    return out * np.exp(-1j * ms * alpha)


def harmonic_norm(flm: np.ndarray) -> np.ndarray:
    return np.sqrt(np.sum(np.abs(flm) ** 2, axis=(-2, -1)))


# --- random signals and the axisymmetric baseline ------------------------------


def random_flm(L: int, seed=None) -> np.ndarray:
    """Standard-normal coefficients of a real signal bandlimited at ``L``."""
    rng = np.random.default_rng(seed)
    flm = empty_coeffs(L)
    for l in range(L):
        flm[l, L - 1] = rng.standard_normal()
        for m in range(1, l + 1):
            v = rng.standard_normal() + 1j * rng.standard_normal()
            flm[l, L - 1 + m] = v
            flm[l, L - 1 - m] = (-1) ** m * np.conj(v)
    return flm


def random_bandlimited(L: int, seed=None) -> np.ndarray:
    """Real signal on the ``L`` grid with random harmonic content below ``L``."""
    return sht_inverse(random_flm(L, seed))


def harmonic_axisym_conv(flm: np.ndarray, psi_l) -> np.ndarray:
    """Convolution with an axisymmetric kernel given by its degree profile."""
    flm = np.asarray(flm)
    L = flm.shape[-2]
    psi_l = np.asarray(psi_l, dtype=float)
    if psi_l.shape != (L,):
        raise ValueError(f"need one kernel value per degree ({L}), got {psi_l.shape}")
    ell = np.arange(L)
    scale = np.sqrt(4 * np.pi / (2 * ell + 1)) * psi_l
    return flm * scale[:, None]
