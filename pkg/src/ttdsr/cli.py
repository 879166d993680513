"""Command-line front end over the TTD1 file format.

Subcommands compose into a batch pipeline::

    ttdsr synth     --dims 16,16,12 --rank 2 --seed 7 --out-dir run/
    ttdsr degrade   --z run/z.ttd --d 2 --q 3 --m3 4 --out-dir run/
    ttdsr fuse      --yh run/yh.ttd --ym run/ym.ttd --ops-dir run/ --rank 2 --out run/fit
    ttdsr eval      --z run/z.ttd --zhat run/fit/zhat.ttd --d 2
    ttdsr gradcheck --dims 8,8,6 --rank 2 --seed 0
    ttdsr sweep     --spec spec.txt --rank-min 1 --rank-max 4 --out-dir sweep/
    ttdsr dump-slice --tensor run/z.ttd --band 3 --out band3.pgm

Exit codes: 0 success, 1 check failure (gradcheck above tolerance),
2 usage or validation error, 3 numerical breakdown in the solver.
The ``TTDSR_LOG`` environment variable (quiet, info, debug) controls
stderr verbosity.
"""

from __future__ import annotations

import argparse
import logging
import math
import os
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import io as tio
from .degradation import (
    add_white_gaussian_noise,
    build_spatial_operator,
    build_spectral,
    degrade_spatial,
    degrade_spectral,
)
from .metrics import evaluate
from .objective import FusionProblem, gradient_check
from .solver import NumericalBreakdownError, SolverConfig, solve
from .synth import load_experiment_spec, rank_sweep
from .triple import random_factors, reconstruct_matricized
from .synth import generate_ground_truth

EXIT_OK = 0
EXIT_CHECK_FAILURE = 1
EXIT_USAGE = 2
EXIT_BREAKDOWN = 3

GRADCHECK_TOL_FD = 1e-6
GRADCHECK_TOL_FORMS = 1e-10

log = logging.getLogger("ttdsr")

_SOLVER_KEY_TYPES = {
    "memory": int,
    "armijo_sigma": float,
    "backtrack_beta": float,
    "mu": float,
    "curvature_eps": float,
    "max_iter": int,
    "tol_grad_inf": float,
    "tol_x_inf": float,
    "tol_f_abs": float,
    "bb_variant": str,
    "max_backtracks": int,
    "seed": int,
}


def _fail(message):
    print(f"error: {message}", file=sys.stderr)
    return EXIT_USAGE


def _parse_dims(text):
    parts = text.split(",")
    if len(parts) != 3:
        raise ValueError(f"expected three comma-separated sizes, got {text!r}")
    dims = tuple(int(p) for p in parts)
    if any(d < 1 for d in dims):
        raise ValueError(f"sizes must be positive, got {dims}")
    return dims


def _parse_solver_config(path):
    """Flat key=value file onto SolverConfig; unknown keys are errors."""
    kwargs = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep:
            raise ValueError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        if key not in _SOLVER_KEY_TYPES:
            raise ValueError(f"{path}:{lineno}: unknown key {key!r}")
        kwargs[key] = _SOLVER_KEY_TYPES[key](value.strip())
    return SolverConfig(**kwargs)


def _config_echo(cfg):
    fields = " ".join(f"{k}={getattr(cfg, k)}" for k in _SOLVER_KEY_TYPES)
    return f"config {fields}"


def cmd_synth(ns):
    try:
        dims = _parse_dims(ns.dims)
        if ns.rank < 1:
            raise ValueError(f"rank must be at least 1, got {ns.rank}")
    except ValueError as exc:
        return _fail(exc)
    z, truth = generate_ground_truth(dims, ns.rank, ns.seed)
    out = Path(ns.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    tio.write_tensor(out / "z.ttd", z)
    tio.save_factors(out, truth)
    log.info("wrote %s and factors (dims %s, rank %d)", out / "z.ttd", dims, ns.rank)
    return EXIT_OK


def cmd_degrade(ns):
    try:
        z = tio.read_tensor(ns.z)
        m1, m2, n3 = z.shape
        spatial = build_spatial_operator(m1, m2, ns.d, ns.q, ns.sigma)
        spectral = build_spectral(n3, ns.m3)
    except (ValueError, OSError) as exc:
        return _fail(exc)
    yh = add_white_gaussian_noise(degrade_spatial(z, spatial), ns.snr_h, ns.seed_h)
    ym = add_white_gaussian_noise(degrade_spectral(z, spectral), ns.snr_m, ns.seed_m)
    out = Path(ns.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    tio.write_tensor(out / "yh.ttd", yh)
    tio.write_tensor(out / "ym.ttd", ym)
    tio.save_operators(out, spatial, spectral)
    log.info("wrote yh %s, ym %s under %s", yh.shape, ym.shape, out)
    return EXIT_OK


def cmd_fuse(ns):
    try:
        yh = tio.read_tensor(ns.yh)
        ym = tio.read_tensor(ns.ym)
        spatial, spectral = tio.load_operators(ns.ops_dir)
        cfg = _parse_solver_config(ns.config) if ns.config else SolverConfig()
        if ns.rank < 1:
            raise ValueError(f"rank must be at least 1, got {ns.rank}")
        problem = FusionProblem(
            yh=yh, ym=ym,
            p1=spatial.p1, p2=spatial.p2, p3=spectral.p3,
            mu=cfg.mu, rank=ns.rank,
        )
    except (ValueError, OSError) as exc:
        return _fail(exc)
    print(_config_echo(cfg))
    try:
        factors, trace = solve(problem, cfg)
    except NumericalBreakdownError as exc:
        print(f"error: numerical breakdown at iteration {exc.iteration}", file=sys.stderr)
        return EXIT_BREAKDOWN
    out = Path(ns.out)
    out.mkdir(parents=True, exist_ok=True)
    tio.write_tensor(out / "zhat.ttd", reconstruct_matricized(factors))
    tio.save_factors(out, factors)
    trace.write_csv(out / "trace.csv")
    final = trace.final
    print(f"reason={trace.reason} f={final.f:.10g} gnorm_inf={final.gnorm_inf:.10g}")
    return EXIT_OK


def cmd_eval(ns):
    try:
        z = tio.read_tensor(ns.z)
        zhat = tio.read_tensor(ns.zhat)
        t0 = time.perf_counter()
        report = evaluate(z, zhat, ns.d, wall_time_s=0.0)
        report = replace(report, wall_time_s=time.perf_counter() - t0)
    except (ValueError, OSError) as exc:
        return _fail(exc)
    vals = (report.rsnr_db, report.cc, report.sam_deg, report.ergas, report.wall_time_s)
    print(",".join(f"{v:.10g}" for v in vals))
    report.write_csv(ns.out)
    return EXIT_OK


def cmd_gradcheck(ns):
    try:
        dims = _parse_dims(ns.dims)
        if ns.rank < 1:
            raise ValueError(f"rank must be at least 1, got {ns.rank}")
    except ValueError as exc:
        return _fail(exc)
    m1, m2, n3 = dims
    # Deterministic desk-scale instance: decimate by 2 where sizes allow,
    # 3-tap blur, halved band count, unit regularization.
    d = 2 if (m1 % 2 == 0 and m2 % 2 == 0) else 1
    q = 3 if min(m1, m2) >= 3 else 1
    m3 = max(1, n3 // 2)
    rng = np.random.default_rng(ns.seed)
    z = rng.standard_normal(dims)
    spatial = build_spatial_operator(m1, m2, d, q)
    spectral = build_spectral(n3, m3)
    problem = FusionProblem(
        yh=degrade_spatial(z, spatial),
        ym=degrade_spectral(z, spectral),
        p1=spatial.p1, p2=spatial.p2, p3=spectral.p3,
        mu=1.0, rank=ns.rank,
    )
    factors = random_factors(dims, ns.rank, ns.seed + 1)
    result = gradient_check(problem, factors, step=ns.h, _perturb=ns.perturb)
    for name, (e_fd_mat, e_fd_vec, e_mat_vec) in result.blocks.items():
        print(
            f"block {name}: fd_vs_matrix={e_fd_mat:.6e} fd_vs_vector={e_fd_vec:.6e} "
            f"matrix_vs_vector={e_mat_vec:.6e}"
        )
    print(
        f"max: fd_vs_matrix={result.fd_vs_matrix:.6e} "
        f"fd_vs_vector={result.fd_vs_vector:.6e} "
        f"matrix_vs_vector={result.matrix_vs_vector:.6e}"
    )
    ok = result.passed(GRADCHECK_TOL_FD, GRADCHECK_TOL_FORMS)
    return EXIT_OK if ok else EXIT_CHECK_FAILURE


def cmd_dump_slice(ns):
    try:
        t = tio.read_tensor(ns.tensor)
    except (ValueError, OSError) as exc:
        return _fail(exc)
    n3 = t.shape[2]
    if not 1 <= ns.band <= n3:
        return _fail(f"band {ns.band} out of range 1..{n3}")
    img = t[:, :, ns.band - 1]
    lo, hi = float(img.min()), float(img.max())
    if hi > lo:
        scaled = np.rint((img - lo) / (hi - lo) * 255.0).astype(np.uint8)
    else:
        # Degenerate range maps to mid-gray.
        scaled = np.full(img.shape, 128, dtype=np.uint8)
    height, width = scaled.shape
    with open(ns.out, "wb") as fh:
        fh.write(f"P5\n{width} {height}\n255\n".encode("ascii"))
        fh.write(scaled.tobytes())
    log.info("wrote %dx%d PGM to %s", width, height, ns.out)
    return EXIT_OK


def cmd_sweep(ns):
    try:
        spec = load_experiment_spec(ns.spec)
        if ns.rank_min < 1 or ns.rank_max < ns.rank_min:
            raise ValueError(
                f"invalid rank range {ns.rank_min}..{ns.rank_max}"
            )
    except (ValueError, OSError) as exc:
        return _fail(exc)
    ranks = range(ns.rank_min, ns.rank_max + 1)
    results = rank_sweep(spec, ranks, out_dir=ns.out_dir, jobs=ns.jobs)
    out = Path(ns.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    lines = ["rank,rsnr_db"]
    for r, report, _ in results:
        lines.append(f"{r},{report.rsnr_db:.10g}")
        print(f"rank={r} rsnr_db={report.rsnr_db:.10g}")
    (out / "sweep.csv").write_text("\n".join(lines) + "\n")
    return EXIT_OK


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="ttdsr",
        description="Fuse a spatially coarse, spectrally fine image with a "
        "spatially fine, spectrally coarse one via low-rank triple factors.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic ground-truth tensor")
    p.add_argument("--dims", required=True, help="m1,m2,n3")
    p.add_argument("--rank", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("degrade", help="produce the coarse observation pair")
    p.add_argument("--z", required=True, help="ground-truth TTD1 file")
    p.add_argument("--d", type=int, required=True, help="spatial decimation ratio")
    p.add_argument("--q", type=int, required=True, help="blur taps (odd)")
    p.add_argument("--sigma", type=float, default=None, help="blur std (default q/6)")
    p.add_argument("--m3", type=int, required=True, help="coarse band count")
    p.add_argument("--snr-h", type=float, default=math.inf)
    p.add_argument("--snr-m", type=float, default=math.inf)
    p.add_argument("--seed-h", type=int, default=1)
    p.add_argument("--seed-m", type=int, default=2)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_degrade)

    p = sub.add_parser("fuse", help="fit factors to an observation pair")
    p.add_argument("--yh", required=True)
    p.add_argument("--ym", required=True)
    p.add_argument("--ops-dir", required=True, help="directory with p1/p2/p3 + ops.txt")
    p.add_argument("--rank", type=int, required=True)
    p.add_argument("--config", default=None, help="key=value solver settings")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_fuse)

    p = sub.add_parser("eval", help="score a reconstruction against ground truth")
    p.add_argument("--z", required=True)
    p.add_argument("--zhat", required=True)
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--out", default="report.csv")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("gradcheck", help="compare the three gradient routes")
    p.add_argument("--dims", default="8,8,6")
    p.add_argument("--rank", type=int, default=2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--h", type=float, default=1e-6, help="finite-difference step")
    p.add_argument(
        "--perturb", type=float, default=0.0,
        help="testing hook: corrupt the analytic gradient by this amount",
    )
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("dump-slice", help="write one band as an 8-bit PGM")
    p.add_argument("--tensor", required=True)
    p.add_argument("--band", type=int, required=True, help="1-based band index")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_dump_slice)

    p = sub.add_parser("sweep", help="rerun one experiment over a rank range")
    p.add_argument("--spec", required=True, help="flat key=value experiment spec")
    p.add_argument("--rank-min", type=int, required=True)
    p.add_argument("--rank-max", type=int, required=True)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_sweep)

    return parser


def _configure_logging():
    level = {"quiet": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}.get(
        os.environ.get("TTDSR_LOG", "info"), logging.INFO
    )
    logging.basicConfig(stream=sys.stderr, level=level, format="%(message)s")


def main(argv=None):
    parser = _build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    _configure_logging()
    return ns.func(ns)


if __name__ == "__main__":
    sys.exit(main())
