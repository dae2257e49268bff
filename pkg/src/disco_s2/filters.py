"""Continuous, node-parameterised filters localised around the north pole."""
from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, field

import numpy as np

AXISYMMETRIC = "axisymmetric"
SEPARABLE = "separable"
DIRECTIONAL = "directional"
KINDS = (AXISYMMETRIC, SEPARABLE, DIRECTIONAL)

# Slack on the support test so samples lying exactly on the cutoff circle are
# classified the same way whatever rotation path produced their coordinates.
CUTOFF_TOL = 1e-12

_MAGIC = b"SFLT"
_VERSION = 1
_HEADER = struct.Struct("<4sIIddIII")


class FilterFormatError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Filter:
    """A filter ``psi(theta, phi)`` with learnable node values ``params``.

    * axisymmetric: ``n_theta`` nodes on ``[0, theta_cutoff]``.
    * separable: ``n_theta`` nodes on ``[0, theta_cutoff]`` then ``n_phi``
      periodic nodes on ``[0, 2pi)``; the value is the product of the two
      interpolants.
    * directional: a 3x3 planar grid (rows ``y = -1, 0, 1``, columns
      ``x = -1, 0, 1``) projected with ``(x, y) = theta / node_spacing *
      (sin phi, cos phi)``.
    """

    kind: str
    theta_cutoff: float
    params: np.ndarray = field(repr=False)
    n_theta: int = 0
    n_phi: int = 0
    node_spacing: float = 0.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown filter kind {self.kind!r}")
        if not 0 < self.theta_cutoff:
            raise ValueError("theta_cutoff must be positive")
        p = np.array(self.params, dtype=float).ravel()
        if p.size != self.n_params:
            raise ValueError(f"{self.kind} filter needs {self.n_params} params, got {p.size}")
        p.setflags(write=False)
        object.__setattr__(self, "params", p)

    @property
    def n_params(self) -> int:
        if self.kind == AXISYMMETRIC:
            return self.n_theta
        if self.kind == SEPARABLE:
            return self.n_theta + self.n_phi
        return 9

    @property
    def theta_nodes(self) -> np.ndarray:
        return np.linspace(0.0, self.theta_cutoff, self.n_theta)

    @property
    def phi_nodes(self) -> np.ndarray:
        return 2 * np.pi * np.arange(self.n_phi) / self.n_phi

    def with_params(self, params) -> "Filter":
        return Filter(self.kind, self.theta_cutoff, params, self.n_theta, self.n_phi, self.node_spacing)

    def __call__(self, theta, phi) -> np.ndarray:
        return eval_filter(self, theta, phi)

    def jacobian(self, theta, phi) -> np.ndarray:
        """``d psi(theta, phi) / d params``, shape ``(npoints, n_params)``."""
        theta, phi = _flat(theta, phi)
        if self.kind == SEPARABLE:
            u = self._theta_weights(theta)
            v = _periodic_hat_weights(phi, self.n_phi)
            a = self.params[: self.n_theta]
            b = self.params[self.n_theta:]
            return np.hstack([u * (v @ b)[:, None], (u @ a)[:, None] * v])
        return self._linear_weights(theta, phi)

    # linear kinds: psi = weights @ params
    def _linear_weights(self, theta, phi) -> np.ndarray:
        if self.kind == AXISYMMETRIC:
            return self._theta_weights(theta)
        x = theta / self.node_spacing * np.sin(phi)
        y = theta / self.node_spacing * np.cos(phi)
        inside = (np.abs(x) <= 1 + 1e-12) & (np.abs(y) <= 1 + 1e-12) & (theta <= self.theta_cutoff + CUTOFF_TOL)
        wx = _hat_weights(x, np.array([-1.0, 0.0, 1.0]))
        wy = _hat_weights(y, np.array([-1.0, 0.0, 1.0]))
        w = (wy[:, :, None] * wx[:, None, :]).reshape(-1, 9)
        return np.where(inside[:, None], w, 0.0)

    def _theta_weights(self, theta) -> np.ndarray:
        w = _hat_weights(theta, self.theta_nodes)
        return np.where((theta <= self.theta_cutoff + CUTOFF_TOL)[:, None], w, 0.0)


def _flat(theta, phi):
    theta, phi = np.broadcast_arrays(np.asarray(theta, dtype=float), np.asarray(phi, dtype=float))
    return theta.ravel(), phi.ravel()


def _hat_weights(x: np.ndarray, nodes: np.ndarray) -> np.ndarray:
    # piecewise-linear interpolation weights, clamped outside [nodes[0], nodes[-1]]
    n = nodes.size
    h = nodes[1] - nodes[0]
    pos = np.clip((x - nodes[0]) / h, 0.0, n - 1)
    k = np.minimum(np.floor(pos).astype(int), n - 2)
    frac = pos - k
    w = np.zeros((x.size, n))
    rows = np.arange(x.size)
    w[rows, k] = 1.0 - frac
    w[rows, k + 1] += frac
    return w


def _periodic_hat_weights(phi: np.ndarray, n: int) -> np.ndarray:
    pos = np.mod(phi, 2 * np.pi) * n / (2 * np.pi)
    k = np.floor(pos).astype(int) % n
    frac = pos - np.floor(pos)
    w = np.zeros((phi.size, n))
    rows = np.arange(phi.size)
    w[rows, k] = 1.0 - frac
    w[rows, (k + 1) % n] += frac
    return w


def eval_filter(filt: Filter, theta, phi) -> np.ndarray:
    """Evaluate ``psi`` at ``(theta, phi)``; zero beyond the cutoff."""
    shape = np.broadcast_shapes(np.shape(theta), np.shape(phi))
    theta, phi = _flat(theta, phi)
    if filt.kind == SEPARABLE:
        a = filt.params[: filt.n_theta]
        b = filt.params[filt.n_theta:]
        val = (filt._theta_weights(theta) @ a) * (_periodic_hat_weights(phi, filt.n_phi) @ b)
    else:
        val = filt._linear_weights(theta, phi) @ filt.params
    return val.reshape(shape)


# --- constructors ----------------------------------------------------------------


def axisymmetric(params, theta_cutoff: float) -> Filter:
    params = np.asarray(params, dtype=float)
    return Filter(AXISYMMETRIC, theta_cutoff, params, n_theta=params.size)


def separable(theta_params, phi_params, theta_cutoff: float) -> Filter:
    a = np.asarray(theta_params, dtype=float)
    b = np.asarray(phi_params, dtype=float)
    return Filter(SEPARABLE, theta_cutoff, np.concatenate([a, b]), n_theta=a.size, n_phi=b.size)


def directional(params, node_spacing: float, theta_cutoff: float | None = None) -> Filter:
    """3x3 grid filter; edge nodes sit at ``node_spacing`` from the centre."""
    if theta_cutoff is None:
        theta_cutoff = np.sqrt(2.0) * node_spacing
    return Filter(DIRECTIONAL, theta_cutoff, np.asarray(params, dtype=float).reshape(9), node_spacing=node_spacing)


def smooth_bump(theta, theta_cutoff: float) -> np.ndarray:
    """``exp(-c^2 / (c^2 - theta^2))`` inside the cutoff ``c``, 0 at and beyond it."""
    theta = np.asarray(theta, dtype=float)
    c2 = theta_cutoff**2
    with np.errstate(divide="ignore", over="ignore"):
        val = np.exp(-c2 / (c2 - theta**2))
    return np.where(theta < theta_cutoff, val, 0.0)


def make_smooth_bump(theta_cutoff: float, n_nodes: int = 4) -> Filter:
    if n_nodes < 2:
        raise ValueError("need at least two nodes")
    nodes = np.linspace(0.0, theta_cutoff, n_nodes)
    return axisymmetric(smooth_bump(nodes, theta_cutoff), theta_cutoff)


def make_directional_best(theta_cutoff: float, n_nodes: int = 4) -> Filter:
    if n_nodes < 2:
        raise ValueError("need at least two nodes")
    nodes = np.linspace(0.0, theta_cutoff, n_nodes)
    phis = 2 * np.pi * np.arange(n_nodes) / n_nodes
    return separable(smooth_bump(nodes, theta_cutoff), np.cos(phis), theta_cutoff)


def make_random_filter(kind: str, theta_cutoff: float, n_nodes: int = 4, seed=None) -> Filter:
    """Filter with i.i.d. standard-normal node values.

    Directional filters place their 3x3 grid so its corners reach the cutoff.
    """
    rng = np.random.default_rng(seed)
    if kind == AXISYMMETRIC:
        return axisymmetric(rng.standard_normal(n_nodes), theta_cutoff)
    if kind == SEPARABLE:
        return separable(rng.standard_normal(n_nodes), rng.standard_normal(n_nodes), theta_cutoff)
    if kind == DIRECTIONAL:
        return directional(rng.standard_normal(9), theta_cutoff / np.sqrt(2.0), theta_cutoff)
    raise ValueError(f"unknown filter kind {kind!r}")


# --- serialisation ---------------------------------------------------------------


def filter_to_bytes(filt: Filter) -> bytes:
    head = _HEADER.pack(
        _MAGIC, _VERSION, KINDS.index(filt.kind), filt.theta_cutoff, filt.node_spacing,
        filt.n_theta, filt.n_phi, filt.n_params,
    )
    return head + filt.params.astype("<f8").tobytes()


def filter_from_bytes(data: bytes) -> Filter:
    if len(data) < _HEADER.size:
        raise FilterFormatError("truncated filter record")
    magic, version, kind, cutoff, spacing, n_theta, n_phi, n_params = _HEADER.unpack_from(data)
    if magic != _MAGIC:
        raise FilterFormatError("not a filter record (bad magic)")
    if version != _VERSION:
        raise FilterFormatError(f"unsupported filter record version {version}")
    if kind >= len(KINDS):
        raise FilterFormatError(f"unknown kind tag {kind}")
    body = data[_HEADER.size:]
    if len(body) != 8 * n_params:
        raise FilterFormatError("filter payload length mismatch")
    params = np.frombuffer(body, dtype="<f8").astype(float)
    return Filter(KINDS[kind], cutoff, params, n_theta, n_phi, spacing)


def save_filter(filt: Filter, path) -> None:
    with open(path, "wb") as fh:
        fh.write(filter_to_bytes(filt))


def load_filter(path) -> Filter:
    with open(path, "rb") as fh:
        return filter_from_bytes(fh.read())


def filter_hash(filt: Filter) -> str:
    return hashlib.sha256(filter_to_bytes(filt)).hexdigest()
