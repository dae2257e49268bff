"""Forward and transposed DISCO convolutions by compressed shift-multiply."""
from __future__ import annotations

import numpy as np
from scipy import sparse

from .kernel import CompressedSparseKernel, KernelSlab


class ShapeError(ValueError):
    pass


def _flatten(x: np.ndarray, L: int) -> tuple[np.ndarray, tuple]:
    x = np.asarray(x, dtype=float)
    if x.shape[-2:] != (L + 1, 2 * L):
        raise ShapeError(f"expected signals of trailing shape {(L + 1, 2 * L)}, got {x.shape}")
    lead = x.shape[:-2]
    return x.reshape(-1, (L + 1) * 2 * L), lead


def shifted_matrix(kernel: CompressedSparseKernel, slab: KernelSlab, s: int) -> sparse.csr_matrix:
    """Slab rows applied to the input shifted by ``s`` longitudes, as a CSR matrix.

    Only the column indices move; the stored values are shared by every shift.
    """
    n_phi = 2 * kernel.L_in
    t = slab.cols // n_phi
    cols = t * n_phi + (slab.cols - t * n_phi + s) % n_phi
    shape = (slab.indptr.size - 1, (kernel.L_in + 1) * n_phi)
    return sparse.csr_matrix((slab.values, cols, slab.indptr), shape=shape)


def _shift_multiply(kernel: CompressedSparseKernel, x: np.ndarray) -> np.ndarray:
    L_in, L_out, R = kernel.L_in, kernel.L_out, kernel.residue
    xf, lead = _flatten(x, L_in)
    if not np.all(np.isfinite(xf)):
        raise ValueError("input contains non-finite values")
    xt = np.ascontiguousarray(xf.T)
    out = np.zeros((L_out + 1, 2 * L_out, xf.shape[0]))
    for r, slab in enumerate(kernel.slabs):
        for s in range(2 * L_in):
            out[:, R * s + r, :] = shifted_matrix(kernel, slab, s) @ xt
    return np.moveaxis(out, -1, 0).reshape(lead + (L_out + 1, 2 * L_out))


def disco_conv(kernel: CompressedSparseKernel, x: np.ndarray) -> np.ndarray:
    """DISCO convolution of signals ``x`` of shape ``(..., L_in+1, 2 L_in)``.

    Every leading axis (batch, channel) is treated independently and shares
    the kernel.
    """
    if kernel.transposed:
        raise ValueError("kernel was built for the transposed convolution")
    return _shift_multiply(kernel, x)


def disco_conv_transposed(kernel: CompressedSparseKernel, x: np.ndarray) -> np.ndarray:
    """Transposed DISCO convolution: filters centred on every input sample,
    weighted by the sample values, summed on the output grid."""
    if not kernel.transposed:
        raise ValueError("kernel was built for the forward convolution; use build_transposed_kernel")
    return _shift_multiply(kernel, x)


def depthwise_separable_conv(kernels, pointwise, x: np.ndarray, bias=None) -> np.ndarray:
    """Per-channel DISCO convolution followed by a 1x1 channel mix.

    ``x`` has shape ``(..., C_in, L+1, 2L)``; ``pointwise`` is ``(C_out, C_in)``.
    """
    x = np.asarray(x, dtype=float)
    kernels = list(kernels)
    pointwise = np.asarray(pointwise, dtype=float)
    if x.ndim < 3 or x.shape[-3] != len(kernels):
        raise ShapeError(f"got {len(kernels)} kernels for input with shape {x.shape}")
    if pointwise.ndim != 2 or pointwise.shape[1] != len(kernels):
        raise ShapeError(f"pointwise weights {pointwise.shape} do not match {len(kernels)} channels")
    conv = disco_conv_transposed if kernels[0].transposed else disco_conv
    depth = np.stack([conv(k, x[..., c, :, :]) for c, k in enumerate(kernels)], axis=-3)
    out = np.einsum("oc,...ctp->...otp", pointwise, depth)
    if bias is not None:
        out = out + np.asarray(bias, dtype=float)[:, None, None]
    return out
