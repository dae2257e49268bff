"""Equiangular sampling of the sphere and point-rotation geometry.

Samples sit at ``theta_t = pi t / L`` for ``t = 0..L`` and ``phi_p = pi p / L``
for ``p = 0..2L-1``, giving ``2L(L+1)`` pixels laid out as an equirectangular
``(L+1, 2L)`` array.  The two pole rings keep all their coincident samples so
that every ring has the same length and longitude shifts stay index shifts.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import NamedTuple

import numpy as np
from numpy.polynomial import legendre


class InvalidBandlimitError(ValueError):
    pass


class RotationZY(NamedTuple):
    """Rotation ``Z(alpha) Y(beta)``; a point of SO(3)/SO(2)."""

    alpha: float
    beta: float


def _check_bandlimit(L: int) -> int:
    if int(L) != L or L < 1:
        raise InvalidBandlimitError(f"bandlimit must be a positive integer, got {L!r}")
    return int(L)


@lru_cache(maxsize=64)
def _ring_weights(L: int) -> np.ndarray:
    # Weights making sum_t w_t P_l(cos theta_t) = 2 delta_{l0} for l = 0..L.
    x = np.cos(np.pi * np.arange(L + 1) / L)
    A = legendre.legvander(x, L).T
    rhs = np.zeros(L + 1)
    rhs[0] = 2.0
    w = np.linalg.solve(A, rhs)
    w.setflags(write=False)
    return w


@dataclass(frozen=True)
class SampleGrid:
    """Equiangular grid at bandlimit ``L`` with quadrature weights.

    ``ring_weights[t]`` integrates polynomials in ``cos(theta)`` of degree <= L
    exactly; a sample's weight is ``(pi / L) * ring_weights[t]``.
    """

    L: int
    thetas: np.ndarray = field(repr=False)
    phis: np.ndarray = field(repr=False)
    ring_weights: np.ndarray = field(repr=False)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.L + 1, 2 * self.L)

    @property
    def n_samples(self) -> int:
        return 2 * self.L * (self.L + 1)

    @property
    def dphi(self) -> float:
        return np.pi / self.L

    @property
    def sample_weights(self) -> np.ndarray:
        """Per-sample quadrature weights, shape ``(L+1, 2L)``."""
        return np.repeat((self.dphi * self.ring_weights)[:, None], 2 * self.L, axis=1)

    def sample_weight(self, t: int, p: int) -> float:
        return self.dphi * self.ring_weights[t]

    def integrate(self, f: np.ndarray) -> np.ndarray:
        """Quadrature of sampled ``f`` over its trailing ``(L+1, 2L)`` axes."""
        f = np.asarray(f)
        if f.shape[-2:] != self.shape:
            raise ValueError(f"expected trailing shape {self.shape}, got {f.shape[-2:]}")
        return self.dphi * np.einsum("...tp,t->...", f, self.ring_weights)

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.thetas, self.phis, indexing="ij")


@lru_cache(maxsize=64)
def build_grid(L: int) -> SampleGrid:
    L = _check_bandlimit(L)
    thetas = np.pi * np.arange(L + 1) / L
    phis = np.pi * np.arange(2 * L) / L
    for a in (thetas, phis):
        a.setflags(write=False)
    return SampleGrid(L, thetas, phis, _ring_weights(L))


def to_cartesian(theta, phi) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    st = np.sin(theta)
    return np.stack([st * np.cos(phi), st * np.sin(phi), np.cos(theta)], axis=-1)


def to_spherical(v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Unit vectors to ``(theta, phi)``; ``phi`` in ``[0, 2pi)`` and 0 at the poles."""
    v = np.asarray(v, dtype=float)
    x, y, z = v[..., 0], v[..., 1], v[..., 2]
    theta = np.arctan2(np.hypot(x, y), z)
    phi = np.mod(np.arctan2(y, x), 2 * np.pi)
    at_pole = (theta == 0.0) | (theta == np.pi)
    phi = np.where(at_pole, 0.0, phi)
    # mod can round 2pi - tiny up to exactly 2pi
    phi = np.where(phi >= 2 * np.pi, 0.0, phi)
    return theta, phi


def angular_distance(a, b) -> np.ndarray:
    """Great-circle distance between ``a = (theta, phi)`` and ``b``, broadcasting."""
    na = to_cartesian(*a)
    nb = to_cartesian(*b)
    return np.arccos(np.clip(np.sum(na * nb, axis=-1), -1.0, 1.0))


def rotation_matrix(alpha: float, beta: float, gamma: float = 0.0) -> np.ndarray:
    """3x3 matrix of ``Z(alpha) Y(beta) Z(gamma)``."""

    def rz(a):
        c, s = np.cos(a), np.sin(a)
        return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])

    c, s = np.cos(beta), np.sin(beta)
    ry = np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])
    return rz(alpha) @ ry @ rz(gamma)


def inverse_rotate_point(R: RotationZY, theta, phi) -> tuple[np.ndarray, np.ndarray]:
    """Spherical coordinates of ``R^{-1} omega`` for ``R = Z(alpha) Y(beta)``."""
    alpha, beta = R
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    # Z(alpha)^{-1} is a longitude shift, applied in angle space to keep
    # beta = 0 an exact translation.
    st, ct = np.sin(theta), np.cos(theta)
    x = st * np.cos(phi - alpha)
    y = st * np.sin(phi - alpha)
    cb, sb = np.cos(beta), np.sin(beta)
    xr = cb * x - sb * ct
    zr = sb * x + cb * ct
    return to_spherical(np.stack([xr, y, zr], axis=-1))
