"""Command-line driver: ``singular-pnp --config run.cfg [--mode ...] [--out-dir ...]``.

Exit codes: 0 success, 1 configuration error, 2 Picard failure after the
step-halving cap, 3 linear-solver failure, 4 failed invariant in validate
mode.  ``PNP_NUM_THREADS`` caps the thread pools of the numerical libraries.
"""
import os

_threads = os.environ.get("PNP_NUM_THREADS")
if _threads:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(_var, _threads)

import argparse  # noqa: E402
import logging  # noqa: E402
import sys  # noqa: E402
import warnings  # noqa: E402

from .errors import (ConfigError, LinearSolverDivergence, NegativeInitialData,  # noqa: E402
                     PicardNonconvergence)

logger = logging.getLogger("singular_pnp")

EXIT_OK, EXIT_CONFIG, EXIT_PICARD, EXIT_LINEAR = 0, 1, 2, 3
# validate mode only: some asserted invariant failed
EXIT_INVARIANT = 4


def _out_dir(cfg):
    path = os.path.join(cfg.base_dir, cfg.out_dir)
    os.makedirs(path, exist_ok=True)
    return path


def run_simulation(cfg):
    """Simulate ``cfg``, streaming diagnostics.csv and snapshots; returns an exit code."""
    from .evolution import run
    from .output import DiagnosticsWriter, write_snapshot
    from .transform import prepare_initial
    from .weights import prepare_weights

    out = _out_dir(cfg)
    grid = cfg.make_grid()
    try:
        weights = prepare_weights(cfg.charges, cfg.boundary_function(grid), grid,
                                  snap=cfg.snap_charges, tol=cfg.quadrature_tol)
        c_n0, c_p0 = cfg.initial_fields(grid)
        initial, rep = prepare_initial(c_n0, c_p0, weights, budget=cfg.eps1, return_report=True)
    except (NegativeInitialData, ValueError) as exc:
        logger.error("setup failed: %s", exc)
        return EXIT_CONFIG
    logger.info("initial weighted norms: |u0| = %.6e, |v0| = %.6e, H(0) = %.6e (%s budget %g)",
                rep.l2w_u0, rep.l2winv_v0, rep.H0,
                "within" if rep.within_budget else "outside", cfg.eps1)

    writer = DiagnosticsWriter(os.path.join(out, "diagnostics.csv"))

    def callback(kind, step, obj):
        if kind == "record":
            writer.write(obj)
        else:
            write_snapshot(out, step, obj, weights, vtk=cfg.vtk)

    try:
        run(initial, cfg.scheme(), weights, snapshot_every=cfg.snapshot_every, callback=callback,
            keep_snapshots=False)
    except PicardNonconvergence as exc:
        logger.error("%s", exc)
        return EXIT_PICARD
    except LinearSolverDivergence as exc:
        logger.error("linear solver failure: %s", exc)
        return EXIT_LINEAR
    finally:
        writer.close()
    logger.info("wrote %s", out)
    return EXIT_OK


def run_validate(cfg):
    from .validation import run_validation_suite

    out = _out_dir(cfg)
    try:
        report = run_validation_suite(cfg)
    except PicardNonconvergence as exc:
        logger.error("%s", exc)
        return EXIT_PICARD
    except LinearSolverDivergence as exc:
        logger.error("linear solver failure: %s", exc)
        return EXIT_LINEAR
    text = "\n".join(report.lines()) + "\n"
    with open(os.path.join(out, "validation.txt"), "w") as fh:
        fh.write(text)
    print(text, end="")
    return EXIT_OK if report.passed else EXIT_INVARIANT


def run_oracle(cfg):
    from .oracle import run_oracle_comparison

    out = _out_dir(cfg)
    try:
        report = run_oracle_comparison(cfg)
    except PicardNonconvergence as exc:
        logger.error("%s", exc)
        return EXIT_PICARD
    except LinearSolverDivergence as exc:
        logger.error("linear solver failure: %s", exc)
        return EXIT_LINEAR
    text = "\n".join(report.lines()) + "\n"
    with open(os.path.join(out, "oracle_report.txt"), "w") as fh:
        fh.write(text)
    print(text, end="")
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="singular-pnp",
                                description="Poisson-Nernst-Planck solver with point charges")
    p.add_argument("--config", required=True, help="configuration file")
    p.add_argument("--out-dir", help="output directory (overrides output.out_dir)")
    p.add_argument("--mode", choices=("simulate", "validate", "oracle"),
                   help="overrides the mode key of the configuration")
    p.add_argument("--quiet", action="store_true", help="only log warnings and errors")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    logging.captureWarnings(True)
    from .config import parse_config, validate

    try:
        cfg = parse_config(args.config)
        overrides = {}
        if args.out_dir:
            overrides.update(out_dir=os.path.abspath(args.out_dir))
        if args.mode:
            overrides.update(mode=args.mode)
        if overrides:
            cfg = cfg.replace(**overrides)
            problems = validate(cfg)
            if problems:
                from .errors import ValidationError

                raise ValidationError(problems)
    except ConfigError as exc:
        logger.error("%s", exc)
        return EXIT_CONFIG
    with warnings.catch_warnings():
        warnings.simplefilter("default")
        handler = {"simulate": run_simulation, "validate": run_validate, "oracle": run_oracle}
        return handler[cfg.mode](cfg)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
