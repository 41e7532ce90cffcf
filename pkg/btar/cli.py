"""Command-line entry point: ``python -m btar <command> ...``."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import pandas as pd
from pydantic import ValidationError

from btar.config import settings
from btar.schemas.bench import DgpSpec, SuiteSpec
from btar.services.dgp import generate
from btar.services.experiment import run_experiment
from btar.services.fit_service import (
    load_fit_state,
    run_fit,
    write_factor_outputs,
    write_volatility_series,
)
from btar.services.series_io import export, load_run_config, write_csv
from btar.utils.errors import BtarError, ConfigError

logger = logging.getLogger("btar.cli")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


def _int_tuple(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(part) for part in text.split(",") if part.strip())
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="btar", description="Bayesian Tucker tensor autoregression toolkit")
    parser.add_argument("--seed", type=int, default=None, help="random seed (overrides config files)")
    parser.add_argument("--threads", type=int, default=settings.THREADS, help="worker threads for chains/suites")
    parser.add_argument("--out", type=Path, default=None, help="output directory")
    parser.add_argument("--log-level", default=settings.LOG_LEVEL)
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="simulate a benchmark DGP into a series file")
    sim.add_argument("--dgp", required=True, choices=["lowrank", "lowrank_sparse", "dense_var"])
    sim.add_argument("--dims", required=True, type=_int_tuple)
    sim.add_argument("--ranks", type=_int_tuple, default=None)
    sim.add_argument("--T", dest="n_obs", type=int, default=200)
    sim.add_argument("--noise-scale", type=float, default=None)
    sim.add_argument("--target-norm", type=float, default=None)

    fit = sub.add_parser("fit", help="run the Gibbs sampler and write posterior summaries")
    fit.add_argument("--config", type=Path, default=None, help="key = value run configuration file")
    fit.add_argument("--data", type=Path, default=None)
    fit.add_argument("--ranks", default=None)
    fit.add_argument("--regime", choices=["homoskedastic", "outlier", "csv"], default=None)
    fit.add_argument("--decomposition", choices=["tucker", "cp"], default=None)
    fit.add_argument("--trend", action="store_true", default=None)
    fit.add_argument("--no-shrinkage", dest="shrinkage", action="store_false", default=None)
    fit.add_argument("--n-iter", type=int, default=None)
    fit.add_argument("--n-burn", type=int, default=None)
    fit.add_argument("--thin", type=int, default=None)
    fit.add_argument("--chains", type=int, default=None)
    fit.add_argument("--preprocess", default=None, help='step list, e.g. "ma:3,yoy:12,standardize"')
    fit.add_argument("--dump-draws", action="store_true", default=None)

    bench = sub.add_parser("benchmark", help="run a coefficient-recovery suite")
    bench.add_argument("--suite", required=True, type=Path, help="JSON suite description")

    factors = sub.add_parser("factors", help="response/predictor factor series of a finished fit")
    factors.add_argument("--fit", type=Path, default=None, help="fit output directory (defaults to --out)")

    vol = sub.add_parser("volatility", help="posterior volatility path of a finished fit")
    vol.add_argument("--fit", type=Path, default=None, help="fit output directory (defaults to --out)")
    return parser


def _out(args) -> Path:
    return args.out if args.out is not None else settings.OUTPUT_DIR


def cmd_simulate(args) -> None:
    overrides = {"noise_scale": args.noise_scale, "target_norm": args.target_norm}
    try:
        spec = DgpSpec(
            kind=args.dgp,
            dims=args.dims,
            ranks=args.ranks,
            T=args.n_obs,
            seed=args.seed if args.seed is not None else settings.DEFAULT_SEED,
            **{k: v for k, v in overrides.items() if v is not None},
        )
    except ValidationError as exc:
        raise ConfigError(str(exc)) from exc
    draw = generate(spec)
    out = _out(args)
    export(draw.series, out / "series.csv")
    coef = pd.DataFrame(draw.b_hat)
    coef.columns = [str(k) for k in range(1, coef.shape[1] + 1)]
    write_csv(coef, out / "true_coefficients.csv")
    logger.info("Simulated %s series (radius %.3f) into %s", spec.kind, draw.radius, out)


def cmd_fit(args) -> None:
    config = load_run_config(
        args.config,
        data=args.data,
        out=args.out,
        seed=args.seed,
        ranks=args.ranks,
        regime=args.regime,
        decomposition=args.decomposition,
        trend=args.trend,
        shrinkage=args.shrinkage,
        n_iter=args.n_iter,
        n_burn=args.n_burn,
        thin=args.thin,
        chains=args.chains,
        preprocess=args.preprocess,
        dump_draws=args.dump_draws,
    )
    try:
        config.sampler_config()
    except ValidationError as exc:
        raise ConfigError(str(exc)) from exc
    run_fit(config, threads=args.threads)


def cmd_benchmark(args) -> None:
    if not args.suite.exists():
        raise ConfigError(f"suite file {args.suite} does not exist")
    try:
        suite = SuiteSpec.model_validate_json(args.suite.read_text(encoding="utf-8"))
    except ValidationError as exc:
        raise ConfigError(str(exc)) from exc
    if args.seed is not None:
        suite = suite.model_copy(update={"seeds": [args.seed]})
    table = run_experiment(suite, threads=args.threads)
    write_csv(table, _out(args) / "benchmark.csv")


def cmd_factors(args) -> None:
    state = load_fit_state(args.fit or _out(args))
    write_factor_outputs(state, _out(args))


def cmd_volatility(args) -> None:
    state = load_fit_state(args.fit or _out(args))
    write_volatility_series(state, _out(args))


COMMANDS = {
    "simulate": cmd_simulate,
    "fit": cmd_fit,
    "benchmark": cmd_benchmark,
    "factors": cmd_factors,
    "volatility": cmd_volatility,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_CONFIG
    logging.basicConfig(level=str(args.log_level).upper(),
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        COMMANDS[args.command](args)
    except ConfigError as exc:
        logger.error("Configuration error: %s", exc)
        return EXIT_CONFIG
    except BtarError:
        logger.exception("Command %s failed", args.command)
        return EXIT_RUNTIME
    except Exception:
        logger.exception("Unexpected failure in %s", args.command)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
