"""Backward passes of the DISCO convolution for inputs and filter parameters.

Only the two maps of the convolution primitive are provided.  Quadrature
weights live inside the kernel values, so the parameter gradient carries an
explicit ``dw_i`` factor per stored entry.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, replace

import numpy as np

from .conv import ShapeError, _flatten, disco_conv, disco_conv_transposed, shifted_matrix
from .filters import Filter
from .kernel import CompressedSparseKernel, KernelError, dense_coordinates, dense_reference

log = logging.getLogger(__name__)


class StepSizeError(RuntimeError):
    pass


@dataclass(frozen=True)
class ConvGradients:
    grad_input: np.ndarray
    grad_params: np.ndarray


def _split_out(kernel: CompressedSparseKernel, up: np.ndarray) -> tuple[np.ndarray, tuple]:
    """Upstream as ``(batch, L_out+1, 2 L_out)`` plus its leading shape."""
    up = np.asarray(up, dtype=float)
    shape = (kernel.L_out + 1, 2 * kernel.L_out)
    if up.shape[-2:] != shape:
        raise ShapeError(f"upstream must have trailing shape {shape}, got {up.shape}")
    return up.reshape((-1,) + shape), up.shape[:-2]


def backward_input(kernel: CompressedSparseKernel, upstream: np.ndarray) -> np.ndarray:
    """Gradient with respect to the convolution input: ``Psi^T upstream``."""
    up, lead = _split_out(kernel, upstream)
    R = kernel.residue
    n_in = 2 * kernel.L_in
    grad = np.zeros(((kernel.L_in + 1) * n_in, up.shape[0]))
    for r, slab in enumerate(kernel.slabs):
        for s in range(n_in):
            grad += shifted_matrix(kernel, slab, s).T @ up[:, :, R * s + r].T
    return grad.T.reshape(lead + (kernel.L_in + 1, n_in))


def entry_gradients(kernel: CompressedSparseKernel, x: np.ndarray, upstream: np.ndarray) -> list[np.ndarray]:
    """``d loss / d value`` for every stored entry, one array per slab."""
    xf, lead = _flatten(x, kernel.L_in)
    up, lead_up = _split_out(kernel, upstream)
    if lead != lead_up:
        raise ShapeError(f"input batch {lead} does not match upstream batch {lead_up}")
    R = kernel.residue
    n_in = 2 * kernel.L_in
    xf = xf.reshape(-1, kernel.L_in + 1, n_in)
    grads = []
    for r, slab in enumerate(kernel.slabs):
        rows = slab.row_of_entry
        t = slab.cols // n_in
        p = slab.cols % n_in
        g = np.zeros(slab.nnz)
        for s in range(n_in):
            g += np.einsum("de,de->e", up[:, rows, R * s + r], xf[:, t, (p + s) % n_in])
        grads.append(g)
    return grads


def backward_filter(kernel: CompressedSparseKernel, x: np.ndarray, upstream: np.ndarray) -> np.ndarray:
    """Gradient with respect to the filter node parameters.

    Each stored entry is ``psi(Theta, Phi) dw``; the entry gradients are
    chained through the interpolation weights at the stored coordinates.
    """
    if not kernel.trainable:
        raise KernelError("kernel was built without rotated coordinates; rebuild with keep_coordinates=True")
    filt = kernel.filter
    grad = np.zeros(filt.n_params)
    for slab, g in zip(kernel.slabs, entry_gradients(kernel, x, upstream)):
        qw = kernel.entry_weights(slab)
        grad += filt.jacobian(slab.theta, slab.phi).T @ (g * qw)
    return grad


def conv_gradients(kernel: CompressedSparseKernel, x: np.ndarray, upstream: np.ndarray) -> ConvGradients:
    return ConvGradients(backward_input(kernel, upstream), backward_filter(kernel, x, upstream))


def _apply(kernel, x):
    return disco_conv_transposed(kernel, x) if kernel.transposed else disco_conv(kernel, x)


def _loss(kernel, x, target) -> tuple[float, np.ndarray]:
    resid = _apply(kernel, x) - target
    return 0.5 * float(np.sum(resid ** 2)), resid


def fit_filter_demo(kernel: CompressedSparseKernel, x: np.ndarray, target: np.ndarray, init_filter: Filter,
                    steps: int = 500, lr: float | None = None, tol: float = 0.0) -> tuple[Filter, np.ndarray]:
    """Fit filter parameters to ``target = conv(x)`` by plain gradient descent.

    ``kernel`` supplies the support and stored coordinates; its values are
    replaced by ``init_filter``.  With ``lr=None`` the step is ``1 / lambda_max``
    of the Gauss-Newton matrix at the initial parameters, which for linear
    filter kinds is the exact curvature of the quadratic loss.

    Returns the fitted filter and the loss history.
    """
    kernel = kernel.with_filter(init_filter)
    if lr is None:
        lr = 1.0 / _curvature(kernel, x)
    loss, resid = _loss(kernel, x, target)
    history = [loss]
    filt = init_filter
    for _ in range(steps):
        if loss <= tol:
            break
        grad = backward_filter(kernel, x, resid)
        filt = filt.with_params(filt.params - lr * grad)
        kernel = kernel.with_filter(filt)
        loss, resid = _loss(kernel, x, target)
        history.append(loss)
        if not np.isfinite(loss) or loss > 10 * history[0] > 0:
            raise StepSizeError(f"loss grew from {history[0]:.3g} to {loss:.3g}; reduce lr (was {lr:g})")
    return filt, np.array(history)


def _curvature(kernel: CompressedSparseKernel, x: np.ndarray) -> float:
    """Largest eigenvalue of ``J^T J`` for the map params -> conv output."""
    filt = kernel.filter
    n = filt.n_params
    cols = []
    for k in range(n):
        jac = [filt.jacobian(s.theta, s.phi)[:, k] * kernel.entry_weights(s) for s in kernel.slabs]
        probe = replace(kernel, slabs=tuple(replace(s, values=v) for s, v in zip(kernel.slabs, jac)))
        cols.append(_apply(probe, x).ravel())
    J = np.stack(cols, axis=1)
    lam = np.linalg.eigvalsh(J.T @ J)[-1]
    if lam <= 0:
        raise StepSizeError("filter parameters do not affect the output")
    return float(lam)



def dense_gradients(filt: Filter, grid_in, grid_out, x: np.ndarray, upstream: np.ndarray, transposed: bool = False) -> ConvGradients:
    """Reference gradients from the dense matrix, for small grids only.

    ``d h_dj / d Psi_ji = x_di``; the entry gradients are chained through the
    filter Jacobian at every pairwise coordinate, inside the support or not.
    """
    M = dense_reference(filt, grid_in, grid_out, transposed)
    n_in, n_out = M.shape[1], M.shape[0]
    xf = np.asarray(x, float).reshape(-1, n_in)
    up = np.asarray(upstream, float).reshape(-1, n_out)
    grad_x = (up @ M).reshape(np.shape(x))
    G = up.T @ xf * grid_in.sample_weights.ravel()[None, :]
    Th, Ph = dense_coordinates(grid_in, grid_out, transposed)
    grad_p = filt.jacobian(Th, Ph).T @ G.ravel()
    return ConvGradients(grad_x, grad_p)
