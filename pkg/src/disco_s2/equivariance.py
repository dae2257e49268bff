"""Rotational equivariance error of spherical operators on random signals."""
from __future__ import annotations

import csv
import io
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from typing import Callable, Sequence

import numpy as np

from .conv import disco_conv
from .filters import AXISYMMETRIC, DIRECTIONAL, SEPARABLE, make_directional_best, make_random_filter, make_smooth_bump
from .grid import RotationZY, build_grid
from .harmonic import EulerZYZ, random_flm, rotate_harmonic, sht_forward, sht_inverse, wigner_d
from .kernel import build_kernel

log = logging.getLogger(__name__)

REPORT_COLUMNS = ("L", "kind", "case", "beta_deg", "mean_pct", "std_pct", "n_f", "n_q", "seed")


@dataclass(frozen=True)
class EquivarianceReport:
    L: int
    filter_kind: str
    filter_case: str
    beta_deg: float | None
    mean_error_pct: float
    std_error_pct: float
    n_signals: int
    n_rotations: int
    seed: int = 0

    def csv_row(self) -> list:
        beta = "uniform" if self.beta_deg is None else f"{self.beta_deg:g}"
        return [self.L, self.filter_kind, self.filter_case, beta,
                f"{self.mean_error_pct:.6f}", f"{self.std_error_pct:.6f}",
                self.n_signals, self.n_rotations, self.seed]


def reports_to_csv(reports: Sequence[EquivarianceReport]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(REPORT_COLUMNS)
    for r in reports:
        w.writerow(r.csv_row())
    return buf.getvalue()


def quadrature_norm(f: np.ndarray, L: int) -> np.ndarray:
    g = build_grid(L)
    return np.sqrt(g.integrate(np.asarray(f) ** 2))


def pair_errors(op: Callable[[np.ndarray], np.ndarray], flms: np.ndarray, rotations: Sequence, threads: int = 1) -> np.ndarray:
    """Relative errors ``||op(Qf) - Q op(f)|| / ||op(Qf)||`` for all pairs.

    ``flms`` are harmonic coefficients ``(n_f, L, 2L-1)`` of the test signals;
    rotations are ``(alpha, beta[, gamma])`` triples.  Returns ``(n_f, n_q)``.

    Pre-rotation is exact in harmonic space.  Operator outputs are generally
    not bandlimited, so both sides are compared through their degree ``< L``
    projections; post-rotation acts on that projection.
    """
    flms = np.asarray(flms)
    L = flms.shape[-2]
    out_coeffs = sht_forward(op(sht_inverse(flms)))
    L_out = out_coeffs.shape[-2]

    def one(R):
        R = EulerZYZ(*(tuple(R) + (0.0,))[:3])
        d = wigner_d(L, R.beta)
        a = sht_inverse(sht_forward(op(sht_inverse(rotate_harmonic(flms, R, d)))))
        d_out = d if L_out == L else wigner_d(L_out, R.beta)
        b = sht_inverse(rotate_harmonic(out_coeffs, R, d_out))
        return quadrature_norm(a - b, L_out), quadrature_norm(a, L_out)

    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            results = list(ex.map(one, rotations))
    else:
        results = [one(R) for R in rotations]
    num = np.stack([r[0] for r in results], axis=1)
    den = np.stack([r[1] for r in results], axis=1)
    bad = den == 0
    if bad.any():
        log.warning("excluding %d pairs with zero-norm output", int(bad.sum()))
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(bad, np.nan, num / den)


def equivariance_error(op, flms, rotations, threads: int = 1) -> tuple[float, float]:
    """Mean and standard deviation of the pairwise relative error."""
    err = pair_errors(op, flms, rotations, threads)
    err = np.sort(err[np.isfinite(err)])
    return float(err.mean()), float(err.std())


def random_rotations(n: int, rng, beta: float | None = None) -> list[RotationZY]:
    """Random ``Z(alpha) Y(beta)``; uniform on the sphere unless ``beta`` is fixed."""
    alpha = rng.uniform(0.0, 2 * np.pi, n)
    if beta is None:
        betas = np.arccos(rng.uniform(-1.0, 1.0, n))
    else:
        betas = np.full(n, float(beta))
    return [RotationZY(a, b) for a, b in zip(alpha, betas)]


def case_filter(L: int, kind: str, case: str, seed=0, n_nodes: int = 4, cutoff_factor: float = 5.0):
    """Filter for the equivariance benchmark; ``directional`` means separable."""
    cutoff = cutoff_factor * np.pi / L
    if kind == AXISYMMETRIC:
        if case == "best":
            return make_smooth_bump(cutoff, n_nodes)
        return make_random_filter(AXISYMMETRIC, cutoff, n_nodes, seed)
    if kind in (DIRECTIONAL, SEPARABLE):
        if case == "best":
            return make_directional_best(cutoff, n_nodes)
        return make_random_filter(SEPARABLE, cutoff, n_nodes, seed)
    raise ValueError(f"unknown kind {kind!r}")


def run_table6(L: int = 128, case: str = "best", kind: str = AXISYMMETRIC, beta_deg: float | None = None,
               seed: int = 0, n_f: int = 20, n_q: int = 20, threads: int = 1) -> EquivarianceReport:
    """Equivariance error of the DISCO convolution on random bandlimited signals.

    Axisymmetric filters default to rotations uniform on SO(3)/SO(2);
    directional filters use ``Z(alpha) Y(beta)`` with fixed ``beta``.
    """
    if case not in ("best", "worst"):
        raise ValueError("case must be 'best' or 'worst'")
    if beta_deg is not None and beta_deg < 0:
        raise ValueError("beta must be non-negative")
    if kind in (DIRECTIONAL, SEPARABLE) and beta_deg is None:
        raise ValueError("directional filters need a fixed beta")
    rng = np.random.default_rng(seed)
    filt = case_filter(L, kind, case, seed=rng.integers(2**32))
    grid = build_grid(L)
    kernel = build_kernel(filt, grid, grid, keep_coordinates=False)
    flms = np.stack([random_flm(L, rng.integers(2**32)) for _ in range(n_f)])
    beta = None if beta_deg is None else np.deg2rad(beta_deg)
    rotations = random_rotations(n_q, rng, beta)
    mean, std = equivariance_error(lambda x: disco_conv(kernel, x), flms, rotations, threads)
    return EquivarianceReport(L, kind, case, beta_deg, 100 * mean, 100 * std, n_f, n_q, seed)
