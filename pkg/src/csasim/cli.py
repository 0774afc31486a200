"""Command-line entry point ``csa-sim``.

Exit status: 0 when every verdict passes (``simulate``: on success),
1 when some check fails, 2 on configuration errors and refusals.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import __version__
from . import verify as V
from .config import load_config
from .errors import ConfigError, CSAError, Refusal
from .export import emit_report, ensure_dir, write_birth_csv, write_points_csv, write_statistics_csv
from .kernels import default_backend
from .measure import QuadratureGrid
from .sampler import simulate, simulate_birth_process

COMMANDS = ("simulate", "verify-lln", "verify-clt", "verify-poisson", "verify-tv-bound",
            "verify-coverage", "verify-cumulants", "verify-oracle", "verify-all")

EXIT_OK, EXIT_FAIL, EXIT_ERROR = 0, 1, 2


def _lln(cfg, threads):
    s = cfg.section("lln")
    return [V.run_lln(cfg.model, cfg.test_function(), s["m_list"], s["N"], cfg.base_seed,
                      tol=s["tol"], grid=cfg.quadrature_grid(), threads=threads)]


def _clt(cfg, threads):
    s = cfg.section("clt")
    return [V.run_clt(cfg.model, cfg.test_function(), s["m"], s["N"], cfg.base_seed,
                      slack=s["slack"], ks_slack=s["ks_slack"], centering=s["centering"],
                      grid=cfg.quadrature_grid(), threads=threads)]


def _poisson(cfg, threads):
    s = cfg.section("poisson")
    return [V.run_poisson(cfg.model, s["x"] or cfg.center(), s["r"], s["m"], s["N"], cfg.base_seed,
                          p_min=s["p_min"], mean_sigmas=s["mean_sigmas"], threads=threads)]


def _tv_bound(cfg, threads):
    s = cfg.section("tv_bound")
    return [V.run_poisson_tv_bound(cfg.model, s["x"] or cfg.center(), s["r"], s["m"], s["N"],
                                   cfg.base_seed, sigmas=s["sigmas"], threads=threads)]


def _coverage(cfg, threads):
    s = cfg.section("coverage")
    return [V.run_coverage(cfg.model, s["delta"], s["m_list"], s["N"], cfg.base_seed, threads=threads)]


def _cumulants(cfg, threads):
    s = cfg.section("cumulants")
    return [V.run_cumulants(cfg.model, cfg.test_function(), s["eps"], s["m"], s["N"], cfg.base_seed,
                            slack=s["slack"], sigmas=s["sigmas"], centering=s["centering"],
                            grid=cfg.quadrature_grid(), threads=threads)]


def _oracle(cfg, threads):
    s = cfg.section("oracle")
    grid = QuadratureGrid(cfg.domain, s["resolution"]) if s["resolution"] else None
    return [V.run_density_oracle(cfg.model, s["m"], grid, s["samples"], cfg.base_seed, sampler=kind,
                                 slack=s["slack"], tol=s[f"tol_{kind}"], threads=threads)
            for kind in ("exact", "ar")]


def _uniform(cfg, threads):
    s = cfg.section("uniform")
    return [V.run_uniform_gof(cfg.model, s["m"], s["N"], cfg.base_seed, p_min=s["p_min"],
                              threads=threads)]


RUNNERS = {"verify-lln": _lln, "verify-clt": _clt, "verify-poisson": _poisson,
           "verify-tv-bound": _tv_bound, "verify-coverage": _coverage,
           "verify-cumulants": _cumulants, "verify-oracle": _oracle}


def _applicable(cfg):
    """Checks of verify-all, with a reason for each one that does not apply to the family."""
    fam = cfg.model.family
    plan = [("verify-uniform", _uniform, None if fam.count_independent else
             "points are i.i.d. only when beta_n does not depend on n")]
    for name in ("verify-lln", "verify-clt", "verify-poisson", "verify-tv-bound",
                 "verify-coverage", "verify-cumulants", "verify-oracle"):
        reason = None
        if name == "verify-cumulants" and not fam.exponential_rate:
            reason = "cumulant decay is claimed only for exponential rates"
        if name == "verify-clt" and any(w for w in cfg.warnings):
            reason = "the family violates the rate condition of the Gaussian limit"
        plan.append((name, RUNNERS[name], reason))
    return plan


def _write(report, out_dir, meta, stdout):
    path = os.path.join(out_dir, f"{report.test}.json")
    emit_report(report, path, meta)
    if report.statistics:
        write_statistics_csv(os.path.join(out_dir, f"{report.test}.stats.csv"), report)
    crit = ", ".join(f"{k}={v}" for k, v in report.verdict["criteria"].items())
    print(f"{report.verdict['overall']:4s} {report.test:24s} {crit}", file=stdout)


def execute(command, cfg, threads=None, birth_times=False, stdout=None, stderr=None) -> int:
    """Run ``command`` on a parsed config, writing artifacts into ``cfg.output_dir``."""
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    if command not in COMMANDS:
        print(f"unknown command {command!r}; expected one of {', '.join(COMMANDS)}", file=stderr)
        return EXIT_ERROR
    out_dir = ensure_dir(cfg.output_dir)
    meta = {"version": __version__, "backend": default_backend(),
            "threads": V.resolve_threads(threads), "seed": cfg.base_seed}
    for w in cfg.warnings:
        print(f"warning: {w}", file=stderr)
    try:
        if command == "simulate":
            return _simulate(cfg, out_dir, threads, birth_times, stdout)
        if command == "verify-all":
            plan = _applicable(cfg)
        else:
            plan = [(command, RUNNERS[command], None)]
        ok = True
        for name, run, skip in plan:
            if skip:
                print(f"SKIP {name[7:]:24s} {skip}", file=stdout)
                continue
            for rep in run(cfg, threads):
                _write(rep, out_dir, meta, stdout)
                ok = ok and rep.passed
        return EXIT_OK if ok else EXIT_FAIL
    except Refusal as e:
        print(f"refused: {e}", file=stderr)
        return EXIT_ERROR


def _simulate(cfg, out_dir, threads, birth_times, stdout):
    from concurrent.futures import ThreadPoolExecutor

    def one(rid):
        if birth_times:
            return simulate_birth_process(cfg.model, cfg.m, cfg.base_seed, rid, grid=cfg.quadrature_grid())
        return simulate(cfg.model, cfg.m, cfg.base_seed, rid), None

    n = min(V.resolve_threads(threads), cfg.replicates)
    with ThreadPoolExecutor(n) as ex:
        results = list(ex.map(one, range(cfg.replicates)))
    states = [r[0] for r in results]
    path = os.path.join(out_dir, "points.csv")
    write_points_csv(path, states)
    if birth_times:
        write_birth_csv(os.path.join(out_dir, "birth_times.csv"),
                        [(i, r[1]) for i, r in enumerate(results)])
    att = np.concatenate([s.attempt_counts for s in states]) if cfg.m else np.zeros(1)
    print(f"wrote {cfg.replicates} x {cfg.m} points to {path} "
          f"(mean proposals per point {att.mean():.3f})", file=stdout)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="csa-sim", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", required=True, help="JSON run configuration")
    p.add_argument("--seed", type=int, help="base seed (overrides the config)")
    p.add_argument("--out", help="output directory (overrides the config)")
    p.add_argument("--replicates", type=int, help="replicate count for simulate and every check")
    p.add_argument("--threads", type=int, help=f"worker threads (default ${V.THREADS_ENV} or all cores)")
    p.add_argument("--birth-times", action="store_true",
                   help="simulate: also write birth-process jump times")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config).with_overrides(args.seed, args.replicates, args.out)
        if args.threads is not None and args.threads < 1:
            raise ConfigError("--threads must be positive", ["--threads: must be >= 1"])
        return execute(args.command, cfg, args.threads, args.birth_times)
    except ConfigError as e:
        print("configuration error:", file=sys.stderr)
        for v in e.violations or [str(e)]:
            print(f"  - {v}", file=sys.stderr)
        return EXIT_ERROR
    except (CSAError, OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
