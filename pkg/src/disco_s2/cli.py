"""Command-line front-end: ``python -m disco_s2 <command>``.

Commands: ``conv``, ``equiv``, ``profile``, ``gradcheck`` and ``fixtures``.
Every report starts with a ``# run_config: {...}`` line; ``--replay FILE``
re-runs the configuration found in such a report.

Exit codes: 0 success, 1 numerical check failed, 2 usage error, 3 I/O error.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import sys
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from . import autograd, equivariance, profiler
from .conv import disco_conv, disco_conv_transposed
from .filters import AXISYMMETRIC, DIRECTIONAL, KINDS, SEPARABLE, FilterFormatError, load_filter, make_random_filter, save_filter
from .grid import build_grid
from .kernel import KernelCacheError, KernelError, densify, get_kernel, kernel_to_bytes
from .signal_io import SignalFormatError, load_signal, save_signal

EXIT_OK, EXIT_CHECK, EXIT_USAGE, EXIT_IO = 0, 1, 2, 3
CONFIG_PREFIX = "# run_config: "
KIND_ALIASES = {"axisym": AXISYMMETRIC, "axisymmetric": AXISYMMETRIC, "separable": SEPARABLE, "directional": DIRECTIONAL}
FIXTURES = {"constant": "constant_L8.ssig", "axisym": "axisym_bump_L8.sflt"}


class UsageError(Exception):
    pass


class CheckFailed(Exception):
    pass


def fixture_path(name: str) -> Path:
    """Path of a bundled fixture (``constant`` or ``axisym``)."""
    return Path(str(resources.files("disco_s2") / "data" / FIXTURES[name]))


@dataclass
class RunConfig:
    command: str
    params: dict = field(default_factory=dict)

    def to_line(self) -> str:
        return CONFIG_PREFIX + json.dumps({"command": self.command, **self.params}, sort_keys=True)

    @classmethod
    def from_report(cls, path) -> "RunConfig":
        for line in Path(path).read_text().splitlines():
            if line.startswith(CONFIG_PREFIX):
                d = json.loads(line[len(CONFIG_PREFIX):])
                return cls(d.pop("command"), d)
        raise UsageError(f"{path}: no run_config line found")

    def validate(self) -> None:
        p = self.params
        if "L" in p and (not isinstance(p["L"], int) or p["L"] < 1):
            raise UsageError("L must be a positive integer")
        if self.command == "conv":
            if not p.get("input") or not p.get("output"):
                raise UsageError("conv needs an input path and --output")
            if p.get("filter_file") and p.get("kind"):
                raise UsageError("--filter-file and --kind are mutually exclusive")
            if p.get("verify_constant") and p.get("transposed"):
                raise UsageError("--verify-constant applies to the forward convolution only")
            if p.get("cutoff") is not None and p["cutoff"] <= 0:
                raise UsageError("--cutoff must be positive")
        if self.command == "equiv":
            if p["kind"] not in KIND_ALIASES:
                raise UsageError(f"unknown kind {p['kind']!r}")
            if p.get("beta") is not None and p["beta"] < 0:
                raise UsageError("--beta must be non-negative")
            if p["case"] not in ("best", "worst"):
                raise UsageError("--case must be best or worst")
            if p["n_f"] < 1 or p["n_q"] < 1:
                raise UsageError("--n-f and --n-q must be positive")
        if self.command == "profile":
            if not p["L_list"] or any(L < 4 for L in p["L_list"]):
                raise UsageError("--L-list needs values >= 4")
        if self.command == "gradcheck" and p["kind"] not in KIND_ALIASES:
            raise UsageError(f"unknown kind {p['kind']!r}")


# --- commands ---------------------------------------------------------------------


def _conv_filter(p: dict, L: int):
    if p.get("filter_file"):
        return load_filter(p["filter_file"])
    kind = KIND_ALIASES[p.get("kind") or AXISYMMETRIC]
    return make_random_filter(kind, p["cutoff"] * np.pi / L, p["nodes"], p["filter_seed"])


def cmd_conv(cfg: RunConfig, out) -> int:
    p = cfg.params
    src = Path(p["input"])
    if not src.exists():
        raise UsageError(f"input file {src} does not exist")
    x = load_signal(src)
    L = x.shape[1] - 1
    filt = _conv_filter(p, L)
    if p.get("verify_constant") and filt.kind != AXISYMMETRIC:
        raise UsageError("--verify-constant needs an axisymmetric filter")
    if p.get("save_filter"):
        save_filter(filt, p["save_filter"])
    L_out = 2 * L if p.get("upsample") else L
    kernel = get_kernel(filt, L, L_out, transposed=bool(p.get("transposed")), cache_dir=p.get("kernel_cache"))
    y = (disco_conv_transposed if kernel.transposed else disco_conv)(kernel, x)
    save_signal(y, p["output"])
    print(cfg.to_line(), file=out)
    print(f"output={p['output']} L={L_out} channels={y.shape[0]} "
          f"kernel_sha256={hashlib.sha256(kernel_to_bytes(kernel)).hexdigest()}", file=out)
    if p.get("verify_constant"):
        along = float(np.ptp(y, axis=-1).max())
        spread = float(np.ptp(y))
        scale = max(float(np.abs(y).max()), 1e-300)
        print(f"spread_along_rings={along:.3e} spread_total={spread:.3e} relative={spread / scale:.3e}", file=out)
        if spread > 1e-10 * scale:
            raise CheckFailed(f"output is not constant (relative spread {spread / scale:.3e})")
        print("constant: PASS", file=out)
    return EXIT_OK


def cmd_equiv(cfg: RunConfig, out) -> int:
    p = cfg.params
    kind = KIND_ALIASES[p["kind"]]
    beta = p.get("beta")
    if kind != AXISYMMETRIC and beta is None:
        beta = 0.0
    report = equivariance.run_table6(p["L"], p["case"], kind, beta, seed=p["seed"], n_f=p["n_f"],
                                     n_q=p["n_q"], threads=p.get("threads", 1))
    out.write(cfg.to_line() + "\n")
    out.write(equivariance.reports_to_csv([report]))
    return EXIT_OK


def cmd_profile(cfg: RunConfig, out) -> int:
    p = cfg.params
    text = cfg.to_line() + "\n" + profiler.scaling_report(p["L_list"])
    if p.get("out"):
        Path(p["out"]).write_text(text)
        print(f"wrote {p['out']}", file=out)
    else:
        out.write(text)
    return EXIT_OK


def gradient_checks(L: int, kind: str, seed: int, cache_dir=None, batch: int = 2) -> list[tuple[str, float, float]]:
    """``(name, error, tolerance)`` for the dense and finite-difference oracles."""
    rng = np.random.default_rng(seed)
    filt = make_random_filter(kind, 3 * np.pi / L, 4, seed=rng.integers(2**32))
    g = build_grid(L)
    kernel = get_kernel(filt, L, L, cache_dir=cache_dir)
    x = rng.standard_normal((batch, L + 1, 2 * L))
    up = rng.standard_normal((batch, L + 1, 2 * L))
    ref = autograd.dense_gradients(filt, g, g, x, up)
    gi = autograd.backward_input(kernel, up)
    gp = autograd.backward_filter(kernel, x, up)
    checks = [
        ("forward_vs_dense", np.abs(disco_conv(kernel, x).reshape(batch, -1) - x.reshape(batch, -1) @ densify(kernel).T).max(), 1e-12),
        ("input_vs_dense", np.abs(gi - ref.grad_input).max(), 1e-12),
        ("params_vs_dense", np.abs(gp - ref.grad_params).max() / max(1.0, np.abs(ref.grad_params).max()), 1e-12),
    ]

    def loss(k, xx):
        return 0.5 * np.sum(disco_conv(k, xx) ** 2)

    # central differences of 0.5 ||conv(x)||^2 at a few random input samples
    up_self = disco_conv(kernel, x)
    gi_self = autograd.backward_input(kernel, up_self)
    h = 1e-6
    idx = rng.choice(x.size, size=min(8, x.size), replace=False)
    fd = []
    for i in idx:
        e = np.zeros(x.size)
        e[i] = h
        e = e.reshape(x.shape)
        fd.append((loss(kernel, x + e) - loss(kernel, x - e)) / (2 * h))
    fd = np.array(fd)
    checks.append(("input_vs_fd", np.abs(gi_self.ravel()[idx] - fd).max() / np.abs(fd).max(), 1e-5))

    gp_self = autograd.backward_filter(kernel, x, up_self)
    fd = []
    for k in range(filt.n_params):
        e = np.zeros(filt.n_params)
        e[k] = h
        plus = kernel.with_filter(filt.with_params(filt.params + e))
        minus = kernel.with_filter(filt.with_params(filt.params - e))
        fd.append((loss(plus, x) - loss(minus, x)) / (2 * h))
    fd = np.array(fd)
    checks.append(("params_vs_fd", np.abs(gp_self - fd).max() / np.abs(fd).max(), 1e-5))
    return [(n, float(e), t) for n, e, t in checks]


def cmd_gradcheck(cfg: RunConfig, out) -> int:
    p = cfg.params
    checks = gradient_checks(p["L"], KIND_ALIASES[p["kind"]], p["seed"], p.get("kernel_cache"))
    print(cfg.to_line(), file=out)
    ok = True
    for name, err, tol in checks:
        status = "PASS" if err <= tol else "FAIL"
        ok &= status == "PASS"
        print(f"{status} {name} error={err:.3e} tol={tol:.0e}", file=out)
    if not ok:
        raise CheckFailed("gradient check failed")
    return EXIT_OK


def cmd_fixtures(cfg: RunConfig, out) -> int:
    for name in FIXTURES:
        print(f"{name}\t{fixture_path(name)}", file=out)
    return EXIT_OK


COMMANDS = {"conv": cmd_conv, "equiv": cmd_equiv, "profile": cmd_profile, "gradcheck": cmd_gradcheck, "fixtures": cmd_fixtures}


# --- argument parsing -------------------------------------------------------------


def _int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="disco-s2", description="DISCO spherical convolutions.")
    ap.add_argument("--threads", type=int, default=1, help="worker threads (default 1)")
    ap.add_argument("--replay", metavar="REPORT", help="re-run the configuration embedded in a report")
    sub = ap.add_subparsers(dest="command")

    c = sub.add_parser("conv", help="convolve a signal file")
    c.add_argument("input", nargs="?")
    c.add_argument("-o", "--output")
    c.add_argument("--filter-file")
    c.add_argument("--save-filter", help="also write the filter used")
    c.add_argument("--kind", choices=sorted(KIND_ALIASES))
    c.add_argument("--nodes", type=int, default=4)
    c.add_argument("--cutoff", type=float, default=3.0, help="support radius in units of pi/L")
    c.add_argument("--filter-seed", type=int, default=0)
    c.add_argument("--transposed", action="store_true")
    c.add_argument("--upsample", action="store_true")
    c.add_argument("--verify-constant", action="store_true")
    c.add_argument("--kernel-cache", help="kernel cache directory (overrides the environment)")

    e = sub.add_parser("equiv", help="equivariance error as CSV")
    e.add_argument("--L", type=int, default=128)
    e.add_argument("--kind", default="axisym")
    e.add_argument("--case", default="best")
    e.add_argument("--beta", type=float, default=None, help="fixed beta in degrees (directional)")
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--n-f", type=int, default=20)
    e.add_argument("--n-q", type=int, default=20)

    pr = sub.add_parser("profile", help="analytic cost scaling report")
    pr.add_argument("--L-list", type=_int_list, default=[64, 128, 256, 512, 1024])
    pr.add_argument("--out")

    g = sub.add_parser("gradcheck", help="check backward passes against oracles")
    g.add_argument("--L", type=int, default=8)
    g.add_argument("--kind", default="axisymmetric")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--kernel-cache")

    sub.add_parser("fixtures", help="print bundled fixture paths")
    return ap


def _config_from_args(ap: argparse.ArgumentParser, args: argparse.Namespace) -> RunConfig:
    if args.replay:
        cfg = RunConfig.from_report(args.replay)
        defaults = vars(ap.parse_args([cfg.command]))
        params = {k: v for k, v in defaults.items() if k not in ("command", "replay")}
        params.update(cfg.params)
        return RunConfig(cfg.command, params)
    if not args.command:
        raise UsageError("a command is required")
    params = {k: v for k, v in vars(args).items() if k not in ("command", "replay")}
    return RunConfig(args.command, params)


def main(argv=None, out=None) -> int:
    out = sys.stdout if out is None else out
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        cfg = _config_from_args(ap, args)
        if cfg.params.get("threads", 1) < 1:
            raise UsageError("--threads must be at least 1")
        cfg.validate()
        return COMMANDS[cfg.command](cfg, out)
    except UsageError as exc:
        print(f"disco-s2: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, KernelError) as exc:
        if isinstance(exc, (SignalFormatError, FilterFormatError)):
            print(f"disco-s2: bad file: {exc}", file=sys.stderr)
            return EXIT_IO
        print(f"disco-s2: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except CheckFailed as exc:
        print(f"disco-s2: check failed: {exc}", file=sys.stderr)
        return EXIT_CHECK
    except (OSError, KernelCacheError) as exc:
        print(f"disco-s2: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
