"""Analytic FLOP and memory counts for the DISCO layer and a harmonic baseline.

Conventions: one multiply-add is 2 flops; evaluating a linear interpolant is
4 flops.  The DISCO count uses the exact nonzero structure of the compressed
kernel, enumerated ring by ring without evaluating the filter.  The baseline
is an axisymmetric convolution through dense precomputed harmonic transforms.

Memory counts stored reals: DISCO stores the compressed kernel values (and the
rotated coordinates when training); the baseline stores its transform matrix
plus signal and coefficient buffers.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .filters import CUTOFF_TOL
from .grid import RotationZY, build_grid, inverse_rotate_point
from .kernel import support_candidates

CSV_COLUMNS = ("L", "model", "flops", "memory_values", "config_hash")

CONVENTION_NOTE = (
    "flops: multiply-add = 2, linear interpolation = 4 per evaluation; "
    "disco flops = 2 * nnz(compressed kernel) * 2L (one pass per output longitude); "
    "harmonic flops = forward + inverse dense transforms (2 * L^2 * 2L(L+1) each) "
    "+ L^2 coefficient products + 4L for the filter interpolation; "
    "disco memory = nnz (+ 2 nnz rotated coordinates when training); "
    "harmonic memory = transform matrix + buffers"
)


@dataclass(frozen=True)
class CostEstimate:
    L: int
    model: str
    flops: int
    memory_values: int
    config: dict

    @property
    def config_hash(self) -> str:
        blob = json.dumps(self.config, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:12]


@lru_cache(maxsize=None)
def kernel_nnz(L: int, cutoff: float) -> int:
    """Nonzeros of the compressed ``L -> L`` kernel for support radius ``cutoff``.

    Same support rule as the kernel builder; no filter values are computed.
    """
    g = build_grid(L)
    total = 0
    for t_out in range(L + 1):
        beta = g.thetas[t_out]
        t, p = support_candidates(beta, 0.0, g, cutoff)
        th, _ = inverse_rotate_point(RotationZY(0.0, beta), g.thetas[t], g.phis[p])
        total += int(np.count_nonzero(th <= cutoff + CUTOFF_TOL))
    return total


def disco_cost(L: int, n_nodes: int = 4, cutoff: float | None = None, training: bool = False) -> CostEstimate:
    """Cost of one forward DISCO convolution at bandlimit ``L``.

    ``flops`` counts the shift-multiply.  Building kernel values costs one
    interpolation per nonzero; it is paid once for inference and once per step
    when training, so it is included only with ``training=True``, which also
    adds the stored rotated coordinates to memory.
    """
    if L < 4:
        raise ValueError("L must be at least 4")
    cutoff = 3 * np.pi / L if cutoff is None else float(cutoff)
    nnz = kernel_nnz(L, cutoff)
    flops = 2 * nnz * 2 * L
    memory = nnz
    if training:
        flops += 4 * nnz
        memory += 2 * nnz
    config = {"n_nodes": n_nodes, "cutoff": round(cutoff * L / np.pi, 12), "training": training, "nnz": nnz}
    return CostEstimate(L, "disco", int(flops), int(memory), config)


def harmonic_cost(L: int, n_harmonic_nodes: int = 10) -> CostEstimate:
    """Cost of an axisymmetric convolution through dense precomputed transforms."""
    if L < 4:
        raise ValueError("L must be at least 4")
    n_coef = L * L
    n_samples = 2 * L * (L + 1)
    flops = 2 * (2 * n_coef * n_samples) + n_coef + 4 * L
    memory = n_coef * n_samples + 2 * n_samples + n_coef + n_harmonic_nodes
    config = {"n_harmonic_nodes": n_harmonic_nodes}
    return CostEstimate(L, "harmonic", int(flops), int(memory), config)


def loglog_slope(Ls, values) -> float:
    return float(np.polyfit(np.log(np.asarray(Ls, float)), np.log(np.asarray(values, float)), 1)[0])


def scaling_rows(L_list, n_nodes: int = 4, n_harmonic_nodes: int = 10) -> tuple[list[CostEstimate], dict]:
    """Cost estimates for both models over ``L_list`` and the fitted slopes."""
    L_list = sorted(int(L) for L in L_list)
    if not L_list:
        raise ValueError("L_list must not be empty")
    rows = []
    for L in L_list:
        rows.append(disco_cost(L, n_nodes))
        rows.append(harmonic_cost(L, n_harmonic_nodes))
    slopes = {}
    for model in ("disco", "harmonic"):
        sub = [r for r in rows if r.model == model]
        if len(sub) > 1:
            slopes[model] = (loglog_slope(L_list, [r.flops for r in sub]),
                             loglog_slope(L_list, [r.memory_values for r in sub]))
        else:
            slopes[model] = (float("nan"), float("nan"))
    return rows, slopes


def scaling_report(L_list=(64, 128, 256, 512, 1024), n_nodes: int = 4, n_harmonic_nodes: int = 10) -> str:
    """CSV of per-L costs for both models with two slope footer rows.

    The counting convention is stated in a leading ``#`` comment line.
    """
    rows, slopes = scaling_rows(L_list, n_nodes, n_harmonic_nodes)
    buf = io.StringIO()
    buf.write(f"# convention: {CONVENTION_NOTE}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in rows:
        w.writerow([r.L, r.model, r.flops, r.memory_values, r.config_hash])
    for model, (sf, sm) in slopes.items():
        w.writerow(["slope", model, f"{sf:.6f}", f"{sm:.6f}", ""])
    return buf.getvalue()


def parse_report(text: str) -> tuple[list[dict], dict]:
    """Data rows and slope rows of a scaling report."""
    lines = [ln for ln in text.splitlines() if ln and not ln.startswith("#")]
    data, slopes = [], {}
    for row in csv.DictReader(lines):
        if row["L"] == "slope":
            slopes[row["model"]] = (float(row["flops"]), float(row["memory_values"]))
        else:
            data.append({"L": int(row["L"]), "model": row["model"], "flops": int(row["flops"]),
                         "memory_values": int(row["memory_values"]), "config_hash": row["config_hash"]})
    return data, slopes


def cost_ratios(L: int) -> tuple[float, float]:
    """Harmonic over DISCO ``(flops, memory)`` at bandlimit ``L``."""
    d, h = disco_cost(L), harmonic_cost(L)
    return h.flops / d.flops, h.memory_values / d.memory_values
