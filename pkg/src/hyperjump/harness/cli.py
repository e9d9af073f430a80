"""Command line entry point.

    hyperjump <experiment> [--config FILE] [--out DIR] [--seed N] [--threads N] [--experimental]
    hyperjump suite [--out DIR] [--variants] ...
    hyperjump report RUN_DIR

Exit codes: 0 pass, 1 verdict failure, 2 configuration error, 3 numerical
contract failure.  ``HYPERJUMP_OUT`` sets the default output root.
"""

import argparse
import contextlib
import logging
import os
import sys
import time
import traceback
import warnings
from pathlib import Path

import scipy.fft
from threadpoolctl import threadpool_limits

from ..errors import ConfigError, ContractError, InputError
from .config import EXPERIMENTS, bundled_configs, load_config
from .experiments import RUNNERS
from .io import RunDir
from .report import emit_report

EXIT_PASS, EXIT_FAIL, EXIT_CONFIG, EXIT_CONTRACT = 0, 1, 2, 3
ENV_OUT = "HYPERJUMP_OUT"
DEFAULT_ROOT = "hyperjump-runs"
SUITE_VARIANTS = ("boundedness_s2", "jump_growth_s2")

log = logging.getLogger("hyperjump")


def output_root():
    return Path(os.environ.get(ENV_OUT, DEFAULT_ROOT))


def _stamp():
    return time.strftime("%Y%m%d-%H%M%S")


@contextlib.contextmanager
def _threads(n):
    if n is None:
        yield
        return
    with threadpool_limits(limits=n), scipy.fft.set_workers(n):
        yield


def run_experiment(experiment, config=None, out=None, seed=None, threads=None, experimental=False):
    """Run one experiment and write its run directory.

    Returns ``(exit_code, run_dir, outcome)``; ``run_dir`` is ``None`` when
    the config could not be loaded.
    """
    try:
        cfg = load_config(config, experiment)
        if seed is not None:
            cfg["seed"] = int(seed)
    except (ConfigError, InputError) as exc:
        log.error("configuration error: %s", exc)
        return EXIT_CONFIG, None, None
    run = RunDir(out if out is not None else output_root() / f"{experiment}-{_stamp()}")
    t0 = time.perf_counter()
    outcome, error, code = None, None, EXIT_PASS
    caught = []
    try:
        with _threads(threads), warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            outcome = RUNNERS[experiment](cfg, run, experimental=experimental)
        code = EXIT_PASS if outcome.passed else EXIT_FAIL
    except (ConfigError, InputError) as exc:
        error, code = f"configuration error: {exc}", EXIT_CONFIG
    except ContractError as exc:
        error, code = f"{type(exc).__name__}: {exc}", EXIT_CONTRACT
    except Exception as exc:  # unexpected: still leave a manifest behind
        error, code = f"{type(exc).__name__}: {exc}", EXIT_CONTRACT
        log.debug("%s", traceback.format_exc())
    warns = [str(w.message) for w in caught]
    verdicts, escalated = [], []
    if outcome is not None:
        warns = outcome.warnings + warns
        verdicts = [v.as_dict() for v in outcome.verdicts]
        escalated = outcome.escalated
    if error:
        log.error("%s", error)
    run.write_manifest(cfg, verdicts, warns, escalated, time.perf_counter() - t0, code, error)
    return code, run.path, outcome


def run_suite(out=None, seed=None, threads=None, variants=False):
    """All seven default experiments (plus the S2 variants if asked) and the joint report."""
    root = Path(out) if out is not None else output_root() / f"suite-{_stamp()}"
    jobs = [(e, None, e) for e in EXPERIMENTS]
    if variants:
        jobs += [(v.rsplit("_", 1)[0].replace("_", "-"), v, v) for v in SUITE_VARIANTS]
    codes = []
    for exp, cfg, name in jobs:
        log.info("running %s", name)
        code, _, _ = run_experiment(exp, cfg, root / name, seed, threads)
        codes.append(code)
    summary = emit_report(root)
    worst = max(codes) if codes else EXIT_PASS
    return (EXIT_PASS if summary["passed"] and worst == 0 else (worst or EXIT_FAIL)), root


def build_parser():
    ap = argparse.ArgumentParser(prog="hyperjump", description="Jump-discontinuity experiments.")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in EXPERIMENTS:
        p = sub.add_parser(name, help=f"run the {name} experiment")
        p.add_argument("--config", help="JSON config file or bundled config name (default: bundled default)")
        p.add_argument("--out", help=f"run directory (default: ${ENV_OUT} or ./{DEFAULT_ROOT})")
        p.add_argument("--seed", type=int)
        p.add_argument("--threads", type=int)
        p.add_argument("--experimental", action="store_true",
                       help="allow intermediate-rank systems; report observations without a verdict")
    p = sub.add_parser("suite", help="run all seven experiments and write a joint report")
    p.add_argument("--out")
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int)
    p.add_argument("--variants", action="store_true", help=f"also run {', '.join(SUITE_VARIANTS)}")
    p = sub.add_parser("report", help="summarize a run or suite directory")
    p.add_argument("run_dir")
    sub.add_parser("configs", help="list bundled configs")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format="%(message)s")
    if args.command == "configs":
        print("\n".join(bundled_configs()))
        return EXIT_PASS
    if args.command == "report":
        try:
            summary = emit_report(args.run_dir)
        except InputError as exc:
            log.error("%s", exc)
            return EXIT_CONFIG
        print((Path(args.run_dir) / "summary.txt").read_text(), end="")
        return EXIT_PASS if summary["passed"] else EXIT_FAIL
    if args.command == "suite":
        code, root = run_suite(args.out, args.seed, args.threads, args.variants)
        print((root / "summary.txt").read_text(), end="")
        return code
    code, path, outcome = run_experiment(args.command, args.config, args.out, args.seed, args.threads,
                                         args.experimental)
    if path is not None:
        status = {EXIT_PASS: "PASS", EXIT_FAIL: "FAIL"}.get(code, "ERROR")
        print(f"{status} {args.command} -> {path}")
        if outcome is not None:
            for v in outcome.verdicts:
                print(f"  {v.name}: {v.passed}")
    return code


if __name__ == "__main__":
    sys.exit(main())
