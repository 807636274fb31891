"""Command-line front end.

    chainkit COMMAND --config PATH [--out PATH] [--seed U64] [--threads N]
                     [--tol REAL] [--quad-order N] [--truncation L]
                     [--dump-blocks DIR]

Results go to stdout (or ``--out``) as CSV with 17 significant digits.
Exit codes: 0 ok, 1 computation failure, 2 config error, 3 identity violated.
"""

from __future__ import annotations

import argparse
import csv
import io
import sys
from contextlib import nullcontext
from pathlib import Path

import numpy as np

from .config import Config, parse_config, with_overrides
from .ensemble import Ensemble
from .errors import ChainkitError, ChainSpecError, ConfigError, MeasureError
from .oracle import enumerate_configurations, mcmc_sample
from .statistics import (
    correlator,
    counting_generating_function,
    gap_probability,
    janossy_density,
    verify_identity,
)

COMMANDS = ("verify-identity", "gap", "correlator", "janossy", "counts", "density", "enumerate", "sample")

EXIT_OK = 0
EXIT_COMPUTE = 1
EXIT_CONFIG = 2
EXIT_IDENTITY = 3


def fmt(x) -> str:
    return format(float(x), ".17g")


def _run(cmd: str, cfg: Config, ens: Ensemble, out, log) -> int:
    w = csv.writer(out, lineterminator="\n")
    kernel = ens.kernel
    if cmd == "verify-identity":
        rep = verify_identity(ens.spec, ens.bio, kernel, cfg.rho())
        w.writerow(["lhs", "rhs", "rel_diff"])
        w.writerow([fmt(rep.lhs), fmt(rep.rhs), fmt(rep.rel_diff)])
        if not rep.ok(cfg.tolerance):
            log.write(f"identity violated: rel_diff {rep.rel_diff:.3g} > tolerance {cfg.tolerance:g}\n")
            return EXIT_IDENTITY
    elif cmd == "gap":
        w.writerow(["gap"])
        w.writerow([fmt(gap_probability(kernel, cfg.regions()))])
    elif cmd == "correlator":
        w.writerow(["correlator"])
        w.writerow([fmt(correlator(kernel, cfg.points()))])
    elif cmd == "janossy":
        rel, ab = janossy_density(kernel, cfg.regions(), cfg.points())
        w.writerow(["relative", "absolute"])
        w.writerow([fmt(rel), fmt(ab)])
    elif cmd == "counts":
        regions = cfg.count_regions()
        gf = counting_generating_function(kernel, regions)
        names = [f"level{j + 1}_region{l + 1}" for j, lv in enumerate(regions) for l in range(len(lv))]
        w.writerow(names + ["probability"])
        for counts, p in gf.probabilities().items():
            w.writerow([str(k) for k in counts] + [fmt(p)])
    elif cmd == "density":
        ev = kernel.evaluator
        w.writerow(["level", "x", "intensity"])
        for j, space in enumerate(ens.spec.spaces):
            xs = np.asarray(cfg.levels[j].points) if cfg.levels[j].points else space.nodes
            diag = np.einsum("ai,ai->i", ev.psi(j, xs), ev.phi(j, xs))
            for x, v in zip(xs, diag):
                w.writerow([j + 1, fmt(x), fmt(v)])
    elif cmd == "enumerate":
        table = enumerate_configurations(ens.spec, ens.bio)
        w.writerow([f"level{j + 1}" for j in range(ens.spec.m)] + ["mass"])
        for conf, mass in table.configurations():
            cells = [";".join(fmt(ens.spec.spaces[j].nodes[i]) for i in idx) for j, idx in enumerate(conf)]
            w.writerow(cells + [fmt(mass)])
    elif cmd == "sample":
        res = mcmc_sample(ens.spec, ens.bio, cfg.steps, cfg.seed, chains=min(cfg.chains, cfg.steps))
        log.write(f"# acceptance_rate={res.acceptance_rate:.6f} step_size={res.step_size:.6g} "
                  f"negative_fraction={res.negative_fraction:.6g}\n")
        if any(cfg.regions()):
            est, err = res.gap_estimate(cfg.regions())
            log.write(f"# gap_estimate={fmt(est)} std_error={fmt(err)}\n")
        w.writerow(["chain", "step", "level", "particle", "x"])
        chains, steps, m, N = res.samples.shape
        for c in range(chains):
            for t in range(steps):
                for j in range(m):
                    for a in range(N):
                        w.writerow([c, t, j + 1, a + 1, fmt(res.samples[c, t, j, a])])
    return EXIT_OK


def run_command(cmd: str, cfg: Config, out=None, log=None, dump_blocks=None) -> int:
    """Build the ensemble for ``cfg`` and run ``cmd``; returns the exit code."""
    out = sys.stdout if out is None else out
    log = sys.stderr if log is None else log
    if cmd not in COMMANDS:
        log.write(f"unknown command {cmd!r}\n")
        return EXIT_CONFIG
    try:
        spec = cfg.chain_spec()
        ens = Ensemble.build(spec)
    except (ConfigError, ChainSpecError, MeasureError, ValueError) as exc:
        log.write(f"config error: {exc}\n")
        return EXIT_CONFIG
    except (ChainkitError, ArithmeticError, np.linalg.LinAlgError) as exc:
        log.write(f"computation failed: {exc}\n")
        return EXIT_COMPUTE
    if dump_blocks:
        ens.kernel.dump(dump_blocks)
    buf = io.StringIO()
    try:
        code = _run(cmd, cfg, ens, buf, log)
    except ValueError as exc:
        log.write(f"config error: {exc}\n")
        return EXIT_CONFIG
    except (ChainkitError, ArithmeticError, np.linalg.LinAlgError) as exc:
        log.write(f"computation failed: {exc}\n")
        return EXIT_COMPUTE
    out.write(buf.getvalue())
    return code


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="chainkit", description="Finite multilevel determinantal ensembles.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", required=True, type=Path, help="chain config file")
    p.add_argument("--out", type=Path, help="write CSV here instead of stdout")
    p.add_argument("--seed", type=int, help="random seed (sample)")
    p.add_argument("--threads", type=int, help="BLAS threads; 1 is the reproducible reference mode")
    p.add_argument("--tol", type=float, help="identity tolerance (default 1e-8)")
    p.add_argument("--quad-order", type=int, help="Gauss-Legendre points per panel")
    p.add_argument("--truncation", type=float, help="half-width L of the truncated real line")
    p.add_argument("--dump-blocks", type=Path, help="write Kcheck blocks as CSV files into this directory")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = parse_config(args.config.read_text(encoding="utf-8"))
        cfg = with_overrides(cfg, seed=args.seed, tolerance=args.tol, quad_order=args.quad_order,
                             truncation=args.truncation)
    except OSError as exc:
        sys.stderr.write(f"config error: {exc}\n")
        return EXIT_CONFIG
    except ConfigError as exc:
        sys.stderr.write(f"config error: {exc}\n")
        return EXIT_CONFIG

    if args.threads is not None:
        from threadpoolctl import threadpool_limits
        limiter = threadpool_limits(limits=args.threads)
    else:
        limiter = nullcontext()
    with limiter:
        if args.out is None:
            return run_command(args.command, cfg, dump_blocks=args.dump_blocks)
        buf = io.StringIO()
        code = run_command(args.command, cfg, out=buf, dump_blocks=args.dump_blocks)
        args.out.write_text(buf.getvalue(), encoding="utf-8")
        return code


if __name__ == "__main__":
    sys.exit(main())
