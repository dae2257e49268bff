"""Sparse DISCO kernels compressed with the longitude-shift symmetry.

A convolution from grid ``L_in`` to grid ``L_out`` is a sparse matrix
``Psi[(t', p'), (t, p)]``.  Because a rotation ``Z(phi)`` is a longitude shift
of the input, only one output longitude per residue class needs storing:

    h[t', r + R s] = sum_(t, p) Psi^r[t', (t, p)] x[t, (p + s) mod 2 L_in]

with ``R = L_out / L_in`` residue classes (1 or 2).  Each class is a
compressed-row slab with one row per output ring.
"""
from __future__ import annotations

import hashlib
import io
import os
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .filters import CUTOFF_TOL, Filter, filter_hash, filter_to_bytes, filter_from_bytes
from .grid import RotationZY, SampleGrid, build_grid, inverse_rotate_point

CACHE_ENV = "DISCO_KERNEL_CACHE"
DENSE_MAX_L = 16


class KernelError(ValueError):
    pass


class KernelCacheError(IOError):
    pass


@dataclass(frozen=True, eq=False)
class KernelSlab:
    """One residue class: CSR rows over output rings.

    ``cols`` are flat input indices ``t * 2 L_in + p``.  ``theta``/``phi`` are
    the rotated coordinates at which the filter was evaluated (``None`` for
    inference-only kernels).
    """

    indptr: np.ndarray
    cols: np.ndarray
    values: np.ndarray
    theta: np.ndarray | None = field(default=None, repr=False)
    phi: np.ndarray | None = field(default=None, repr=False)

    @property
    def nnz(self) -> int:
        return self.cols.size

    @property
    def row_of_entry(self) -> np.ndarray:
        return np.repeat(np.arange(self.indptr.size - 1), np.diff(self.indptr))


@dataclass(frozen=True, eq=False)
class CompressedSparseKernel:
    L_in: int
    L_out: int
    slabs: tuple
    filter: Filter | None = field(default=None, repr=False)
    transposed: bool = False

    @property
    def residue(self) -> int:
        return len(self.slabs)

    @property
    def nnz(self) -> int:
        return sum(s.nnz for s in self.slabs)

    @property
    def grid_in(self) -> SampleGrid:
        return build_grid(self.L_in)

    @property
    def grid_out(self) -> SampleGrid:
        return build_grid(self.L_out)

    @property
    def trainable(self) -> bool:
        return self.filter is not None and all(s.theta is not None for s in self.slabs)

    def entry_weights(self, slab: KernelSlab) -> np.ndarray:
        """Quadrature weight of each stored entry's input sample."""
        g = self.grid_in
        return g.dphi * g.ring_weights[slab.cols // (2 * self.L_in)]

    def without_coordinates(self) -> "CompressedSparseKernel":
        slabs = tuple(replace(s, theta=None, phi=None) for s in self.slabs)
        return replace(self, slabs=slabs)

    def with_filter(self, filt: Filter) -> "CompressedSparseKernel":
        """Re-evaluate stored values for new filter parameters (same support)."""
        if not self.trainable:
            raise KernelError("kernel has no stored rotated coordinates")
        slabs = tuple(
            replace(s, values=filt(s.theta, s.phi) * self.entry_weights(s)) for s in self.slabs
        )
        return replace(self, slabs=slabs, filter=filt)


def _residue(L_in: int, L_out: int) -> int:
    if L_out == L_in:
        return 1
    if L_out == 2 * L_in:
        return 2
    raise KernelError(f"unsupported resolution change {L_in} -> {L_out}; need L_out in (L_in, 2 L_in)")


def support_candidates(theta_c: float, phi_c: float, grid: SampleGrid, cutoff: float):
    """Grid samples that may lie within ``cutoff`` of ``(theta_c, phi_c)``.

    Rings are limited to the colatitude band around the centre and each ring to
    the longitude half-width from the spherical law of cosines.  The result is
    a superset of the true support; callers apply the exact distance test.
    """
    L = grid.L
    n_phi = 2 * L
    reach = cutoff + 1e-9
    ts = np.nonzero(np.abs(grid.thetas - theta_c) <= reach)[0]
    out_t, out_p = [], []
    p_all = np.arange(n_phi)
    for t in ts:
        th = grid.thetas[t]
        denom = np.sin(th) * np.sin(theta_c)
        if denom < 1e-12:
            p = p_all
        else:
            arg = (np.cos(reach) - np.cos(th) * np.cos(theta_c)) / denom
            if arg <= -1.0:
                p = p_all
            else:
                half = np.arccos(min(arg, 1.0)) + 1e-9
                dp = np.mod(grid.phis - phi_c + np.pi, 2 * np.pi) - np.pi
                p = p_all[np.abs(dp) <= half]
        out_t.append(np.full(p.size, t))
        out_p.append(p)
    if not out_t:
        return np.zeros(0, int), np.zeros(0, int)
    return np.concatenate(out_t), np.concatenate(out_p)


def _check_filter(filt: Filter):
    if filt.theta_cutoff >= np.pi:
        raise KernelError("filter cutoff must be below pi (filter not localised)")


def build_kernel(filt: Filter, grid_in: SampleGrid, grid_out: SampleGrid, keep_coordinates: bool = True) -> CompressedSparseKernel:
    """Compressed kernel of the forward convolution ``grid_in -> grid_out``."""
    _check_filter(filt)
    R = _residue(grid_in.L, grid_out.L)
    cutoff = filt.theta_cutoff
    n_phi = 2 * grid_in.L
    qw = grid_in.dphi * grid_in.ring_weights
    slabs = []
    for r in range(R):
        alpha = r * np.pi / grid_out.L
        cols, vals, ths, phs, counts = [], [], [], [], []
        for t_out in range(grid_out.L + 1):
            beta = grid_out.thetas[t_out]
            t, p = support_candidates(beta, alpha, grid_in, cutoff)
            th, ph = inverse_rotate_point(RotationZY(alpha, beta), grid_in.thetas[t], grid_in.phis[p])
            keep = th <= cutoff + CUTOFF_TOL
            t, p, th, ph = t[keep], p[keep], th[keep], ph[keep]
            c = t * n_phi + p
            order = np.argsort(c, kind="stable")
            c, t, th, ph = c[order], t[order], th[order], ph[order]
            cols.append(c)
            vals.append(filt(th, ph) * qw[t])
            ths.append(th)
            phs.append(ph)
            counts.append(c.size)
        slabs.append(_make_slab(counts, cols, vals, ths, phs, keep_coordinates))
    return CompressedSparseKernel(grid_in.L, grid_out.L, tuple(slabs), filt, transposed=False)


def build_transposed_kernel(filt: Filter, grid_in: SampleGrid, grid_out: SampleGrid, keep_coordinates: bool = True) -> CompressedSparseKernel:
    """Compressed kernel of the transposed convolution ``grid_in -> grid_out``.

    Output sample ``omega_j`` receives ``sum_i x_i psi(R_i^{-1} omega_j) dw_i``:
    the filter is centred on every input sample.  Supports are enumerated
    around each input ring's canonical sample on the output grid, then
    regrouped into output-ring rows.
    """
    _check_filter(filt)
    R = _residue(grid_in.L, grid_out.L)
    cutoff = filt.theta_cutoff
    n_in = 2 * grid_in.L
    qw = grid_in.dphi * grid_in.ring_weights
    rows = [[[] for _ in range(grid_out.L + 1)] for _ in range(R)]
    for t_in in range(grid_in.L + 1):
        beta = grid_in.thetas[t_in]
        t_o, q = support_candidates(beta, 0.0, grid_out, cutoff)
        th, ph = inverse_rotate_point(RotationZY(0.0, beta), grid_out.thetas[t_o], grid_out.phis[q])
        keep = th <= cutoff + CUTOFF_TOL
        t_o, q, th, ph = t_o[keep], q[keep], th[keep], ph[keep]
        r = q % R
        u = ((r - q) // R) % n_in
        vals = filt(th, ph) * qw[t_in]
        for k in range(t_o.size):
            rows[r[k]][t_o[k]].append((t_in * n_in + u[k], vals[k], th[k], ph[k]))
    slabs = []
    for r in range(R):
        cols, vals, ths, phs, counts = [], [], [], [], []
        for entries in rows[r]:
            entries.sort(key=lambda e: e[0])
            arr = np.array(entries, dtype=float).reshape(-1, 4)
            cols.append(arr[:, 0].astype(np.int64))
            vals.append(arr[:, 1])
            ths.append(arr[:, 2])
            phs.append(arr[:, 3])
            counts.append(len(entries))
        slabs.append(_make_slab(counts, cols, vals, ths, phs, keep_coordinates))
    return CompressedSparseKernel(grid_in.L, grid_out.L, tuple(slabs), filt, transposed=True)


def _make_slab(counts, cols, vals, ths, phs, keep_coordinates) -> KernelSlab:
    indptr = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
    cat = lambda xs, dt: np.concatenate(xs).astype(dt) if xs else np.zeros(0, dt)
    return KernelSlab(
        indptr,
        cat(cols, np.int64),
        cat(vals, float),
        cat(ths, float) if keep_coordinates else None,
        cat(phs, float) if keep_coordinates else None,
    )


# --- dense forms (oracles) ---------------------------------------------------------


def densify(kernel: CompressedSparseKernel) -> np.ndarray:
    """Expand a compressed kernel into the full ``(N_out, N_in)`` matrix."""
    if kernel.L_in > DENSE_MAX_L or kernel.L_out > 2 * DENSE_MAX_L:
        raise KernelError(f"densify is limited to L_in <= {DENSE_MAX_L}")
    n_in_phi = 2 * kernel.L_in
    n_out_phi = 2 * kernel.L_out
    R = kernel.residue
    D = np.zeros((kernel.L_out + 1, n_out_phi, (kernel.L_in + 1) * n_in_phi))
    for r, slab in enumerate(kernel.slabs):
        rows = slab.row_of_entry
        t = slab.cols // n_in_phi
        p = slab.cols % n_in_phi
        for s in range(n_in_phi):
            D[rows, R * s + r, t * n_in_phi + (p + s) % n_in_phi] = slab.values
    return D.reshape(-1, (kernel.L_in + 1) * n_in_phi)


def dense_coordinates(grid_in: SampleGrid, grid_out: SampleGrid, transposed: bool = False):
    """Rotated coordinates ``(Theta, Phi)`` for every (output, input) pair.

    Forward: ``R_j^{-1} omega_i`` with ``R_j = Z(phi_j) Y(theta_j)`` at the
    output samples.  Transposed: ``R_i^{-1} omega_j``.
    """
    Ti, Pi = (a.ravel() for a in grid_in.mesh())
    To, Po = (a.ravel() for a in grid_out.mesh())
    Th = np.zeros((To.size, Ti.size))
    Ph = np.zeros_like(Th)
    if not transposed:
        for j in range(To.size):
            Th[j], Ph[j] = inverse_rotate_point(RotationZY(Po[j], To[j]), Ti, Pi)
    else:
        for i in range(Ti.size):
            Th[:, i], Ph[:, i] = inverse_rotate_point(RotationZY(Pi[i], Ti[i]), To, Po)
    return Th, Ph


def dense_reference(filt: Filter, grid_in: SampleGrid, grid_out: SampleGrid, transposed: bool = False) -> np.ndarray:
    """Dense DISCO matrix ``M[j, i] = psi(Theta_ji, Phi_ji) dw_i``, pair by pair."""
    Th, Ph = dense_coordinates(grid_in, grid_out, transposed)
    return filt(Th, Ph).reshape(Th.shape) * grid_in.sample_weights.ravel()[None, :]


# --- cache files ---------------------------------------------------------------------

_KMAGIC = b"SKRN"
_KVERSION = 1
_KHEAD = struct.Struct("<4sIIII32sdI")


def kernel_to_bytes(kernel: CompressedSparseKernel) -> bytes:
    """Serialise: header, filter record, then per-slab CSR arrays; sha256 footer."""
    if kernel.filter is None:
        raise KernelError("only kernels carrying their filter can be serialised")
    fbytes = filter_to_bytes(kernel.filter)
    buf = io.BytesIO()
    buf.write(_KHEAD.pack(
        _KMAGIC, _KVERSION, kernel.L_in, kernel.L_out, int(kernel.transposed),
        bytes.fromhex(filter_hash(kernel.filter)), kernel.filter.theta_cutoff, kernel.residue,
    ))
    buf.write(struct.pack("<I", len(fbytes)))
    buf.write(fbytes)
    for slab in kernel.slabs:
        has_coords = slab.theta is not None
        buf.write(struct.pack("<III", slab.indptr.size, slab.nnz, int(has_coords)))
        buf.write(slab.indptr.astype("<u4").tobytes())
        buf.write(slab.cols.astype("<u4").tobytes())
        buf.write(slab.values.astype("<f8").tobytes())
        if has_coords:
            buf.write(slab.theta.astype("<f8").tobytes())
            buf.write(slab.phi.astype("<f8").tobytes())
    body = buf.getvalue()
    return body + hashlib.sha256(body).digest()


def kernel_from_bytes(data: bytes) -> CompressedSparseKernel:
    if len(data) < _KHEAD.size + 32:
        raise KernelCacheError("truncated kernel file")
    body, digest = data[:-32], data[-32:]
    if hashlib.sha256(body).digest() != digest:
        raise KernelCacheError("kernel file checksum mismatch")
    magic, version, L_in, L_out, transposed, fh, cutoff, n_slabs = _KHEAD.unpack_from(body)
    if magic != _KMAGIC or version != _KVERSION:
        raise KernelCacheError("not a kernel file of a supported version")
    pos = _KHEAD.size
    (flen,) = struct.unpack_from("<I", body, pos)
    pos += 4
    filt = filter_from_bytes(body[pos:pos + flen])
    pos += flen
    if bytes.fromhex(filter_hash(filt)) != fh:
        raise KernelCacheError("filter hash mismatch")

    def take(n, dt):
        nonlocal pos
        size = np.dtype(dt).itemsize * n
        arr = np.frombuffer(body[pos:pos + size], dtype=dt)
        if arr.size != n:
            raise KernelCacheError("truncated kernel payload")
        pos += size
        return arr

    slabs = []
    for _ in range(n_slabs):
        n_ptr, nnz, has_coords = struct.unpack_from("<III", body, pos)
        pos += 12
        indptr = take(n_ptr, "<u4").astype(np.int64)
        cols = take(nnz, "<u4").astype(np.int64)
        vals = take(nnz, "<f8").astype(float)
        th = take(nnz, "<f8").astype(float) if has_coords else None
        ph = take(nnz, "<f8").astype(float) if has_coords else None
        slabs.append(KernelSlab(indptr, cols, vals, th, ph))
    if pos != len(body):
        raise KernelCacheError("trailing bytes in kernel file")
    return CompressedSparseKernel(L_in, L_out, tuple(slabs), filt, bool(transposed))


def save_kernel(kernel: CompressedSparseKernel, path) -> None:
    Path(path).write_bytes(kernel_to_bytes(kernel))


def load_kernel(path) -> CompressedSparseKernel:
    return kernel_from_bytes(Path(path).read_bytes())


def cache_key(filt: Filter, L_in: int, L_out: int, transposed: bool) -> str:
    h = hashlib.sha256(filter_to_bytes(filt))
    h.update(struct.pack("<III", L_in, L_out, int(transposed)))
    return h.hexdigest()[:32]


def get_kernel(filt: Filter, L_in: int, L_out: int | None = None, transposed: bool = False, cache_dir=None) -> CompressedSparseKernel:
    """Build a kernel, going through the on-disk cache when one is configured.

    The cache directory is ``cache_dir`` or the ``DISCO_KERNEL_CACHE``
    environment variable.  A damaged cache file raises :class:`KernelCacheError`.
    """
    L_out = L_in if L_out is None else L_out
    cache_dir = cache_dir if cache_dir is not None else os.environ.get(CACHE_ENV)
    path = None
    if cache_dir:
        path = Path(cache_dir) / f"kernel-{cache_key(filt, L_in, L_out, transposed)}.skrn"
        if path.exists():
            return load_kernel(path)
    builder = build_transposed_kernel if transposed else build_kernel
    kernel = builder(filt, build_grid(L_in), build_grid(L_out))
    if path is not None:
        path.parent.mkdir(parents=True, exist_ok=True)
        save_kernel(kernel, path)
    return kernel
