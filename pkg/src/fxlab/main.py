"""Command-line entry point: `fxlab tests|fit|evaluate|run|init|synth`."""

import argparse
import logging
import sys
from pathlib import Path

from fxlab import pipeline, synthetic
from fxlab.errors import ConfigError, FxlabError
from fxlab.settings import FILENAME, MODELS, Settings
from fxlab.utils.files import ArtifactWriteError
from fxlab.utils.logs import (
    ROOT_LOGGER,
    close_file_handlers,
    set_level,
    setup_console_logger,
    setup_file_logger,
)

logger = logging.getLogger(__name__)

LOG_FILENAME = "fxlab.log"

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2

# Settings written by `fxlab synth` on top of the defaults
SYNTHETIC_OVERRIDES = {
    "svr": {"c": 10.0, "gamma": 0.5, "epsilon": 0.01},
    "lstm": {"hidden": 8, "learning_rate": 0.01, "epochs": 200, "optimizer": "adam"},
    "analysis": {"trees": 100},
}


def seed_type(value: str) -> int:
    try:
        seed = int(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"`{value}` is not an integer.")
    if seed < 0:
        raise argparse.ArgumentTypeError("the seed cannot be negative.")
    return seed


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fxlab",
        description="Exchange-rate forecasting from cross-country macroeconomic deltas.",
    )
    parser.add_argument("--debug", action="store_true", help="log at DEBUG level")
    commands = parser.add_subparsers(dest="command", required=True)

    run_options = argparse.ArgumentParser(add_help=False)
    run_options.add_argument("--config", type=Path, required=True, help="settings file")
    run_options.add_argument("--seed", type=seed_type, help="master seed override")
    run_options.add_argument("--out", type=Path, help="output directory override")

    commands.add_parser(
        "tests", parents=[run_options], help="ADF, Granger and Durbin-Watson reports"
    )
    fit = commands.add_parser("fit", parents=[run_options], help="fit one model")
    fit.add_argument("model", choices=MODELS)
    commands.add_parser(
        "evaluate", parents=[run_options], help="score the fitted models on the test months"
    )
    commands.add_parser("run", parents=[run_options], help="every stage in order")

    init = commands.add_parser("init", help="write a template settings file")
    init.add_argument("path", type=Path)

    synth = commands.add_parser("synth", help="write a synthetic panel and its settings")
    synth.add_argument("directory", type=Path)
    synth.add_argument("--seed", type=seed_type, default=0)
    synth.add_argument("--months", type=int, default=297)
    synth.add_argument("--persistence", type=float, default=0.97)
    return parser


def write_synthetic(directory: Path, seed: int, months: int, persistence: float) -> Path:
    """Writes `usa.csv`, `ind.csv` and a settings file that runs on them."""

    usa, ind = synthetic.generate_panel(months=months, seed=seed, persistence=persistence)
    synthetic.write_panel(usa, ind, directory)

    settings_dict = {"data": {"usa": "usa.csv", "ind": "ind.csv"}, **SYNTHETIC_OVERRIDES}
    settings = Settings.from_dict(settings_dict)
    path = Path(directory) / FILENAME
    settings.update_file(path)
    logger.info(f"Synthetic panel of {months} months written to `{directory}`.")
    return path


def dispatch(args: argparse.Namespace) -> None:
    if args.command == "init":
        path = Settings.create_file(args.path)
        logger.info(f"Settings template written to `{path}`.")
        return
    if args.command == "synth":
        write_synthetic(args.directory, args.seed, args.months, args.persistence)
        return

    settings = Settings.from_file(args.config)
    if args.out is not None:
        settings.output_dir = args.out
    set_level(args.debug or settings.logging_debug)
    out_dir = settings.output_dir
    try:
        setup_file_logger(ROOT_LOGGER, out_dir / LOG_FILENAME)
    except OSError as e:
        raise ArtifactWriteError(
            f"Log file in `{out_dir}` could not be opened: {e}", path=out_dir / LOG_FILENAME
        )
    seed = settings.resolve_seed(args.seed)
    logger.info(f"`{args.command}` with seed {seed}, writing to `{out_dir}`.")

    match args.command:
        case "tests":
            pipeline.cmd_tests(settings, seed, out_dir)
        case "fit":
            pipeline.cmd_fit(settings, args.model, seed, out_dir)
        case "evaluate":
            pipeline.cmd_evaluate(settings, seed, out_dir)
        case "run":
            pipeline.run(settings, seed, out_dir)


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)

    setup_console_logger(ROOT_LOGGER)
    set_level(args.debug)
    try:
        dispatch(args)
    except ConfigError as e:
        logger.error(str(e))
        return EXIT_USAGE
    except (FxlabError, ArtifactWriteError) as e:
        logger.error(str(e))
        return EXIT_FAILURE
    finally:
        close_file_handlers(ROOT_LOGGER)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
