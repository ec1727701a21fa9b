import argparse
import json
import logging
import os
import sys

from . import checks
from .config import RunConfig, apply_overrides, load_config
from .errors import EXIT_CHECK, FareError, ValidationError
from .ingest import write_quotes, write_selection_report
from .model import DEPVARS, GRANULARITIES
from .report import FORMATS, TableWriter, default_layout, write_results
from .synthgen import generate, write_synthetic
from .utils import fit_tables, load_inputs, select_quotes, write_rejects


def logger() -> logging.Logger:
    return logging.getLogger("main")


def cmd_ingest(config: RunConfig) -> dict[str, str]:
    """Selected sample, selection report and row rejects, written to the output directory."""
    quotes, report, rejects = select_quotes(config)
    os.makedirs(config.output_directory, exist_ok=True)
    paths = {
        "sample": write_quotes(
            quotes,
            os.path.join(config.output_directory, "sample.csv"),
            delimiter=config.delimiter,
        ),
        "report": write_selection_report(
            report, os.path.join(config.output_directory, "selection_report.json")
        ),
        "rejects": write_rejects(rejects, os.path.join(config.output_directory, "rejects.csv")),
    }
    print(json.dumps(report.to_record(), indent=4))
    logger().info(f"cmd_ingest. {report.final_count} quotes written to {paths['sample']}")
    return paths


def cmd_fit(config: RunConfig) -> dict[str, str]:
    inputs = load_inputs(config)
    batch = fit_tables(config, inputs)
    os.makedirs(config.output_directory, exist_ok=True)

    writer = TableWriter()
    paths = {}
    for i, (table, fits) in enumerate(batch):
        layout = default_layout(fits, title=table.title, notes=table.notes)
        paths[f"table_{i + 1}"] = writer.write(
            fits=fits,
            layout=layout,
            directory=config.output_directory,
            stem=f"table_{i + 1}",
            fmt=config.fmt,
        )
    paths["results"] = write_results(
        [fit for _, fits in batch for fit in fits],
        os.path.join(config.output_directory, "results.json"),
        tables=[table.title for table, _ in batch],
    )
    for path in paths.values():
        print(path)
    return paths


def cmd_synth(config: RunConfig) -> dict[str, str]:
    if config.dgp is None:
        raise ValidationError("synth needs --seed or a synth block in the config")
    panel = generate(config.dgp)
    paths = write_synthetic(panel, config.dgp, config.output_directory)
    for path in paths.values():
        print(path)
    return paths


def cmd_check(config: RunConfig) -> int:
    results = checks.run_checks(tol=config.tol, max_iter=config.max_iter)
    sys.stdout.write(checks.format_matrix(results))
    return 0 if all(r.passed for r in results) else EXIT_CHECK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=str, default=None, help="JSON5 run configuration")
    common.add_argument(
        "--output_directory",
        "--output-directory",
        dest="output_directory",
        type=str,
        default=None,
        help="Directory to save output files",
    )
    common.add_argument(
        "--verbose", action="store_true", default=False, help="Debug logging"
    )

    parser = argparse.ArgumentParser(
        prog="holiday-fares", description="Holiday effects on airfares: ingest, fit, synth, check"
    )
    commands = parser.add_subparsers(dest="command", required=True)

    commands.add_parser("ingest", parents=[common], help="Select the estimation sample")

    fit = commands.add_parser("fit", parents=[common], help="Fit the configured tables")
    fit.add_argument("--robust-se", action="store_true", default=False, help="HC1 standard errors")
    fit.add_argument("--granularity", choices=GRANULARITIES, default=None)
    fit.add_argument("--depvar", choices=DEPVARS, default=None)
    fit.add_argument("--format", dest="fmt", choices=FORMATS, default=None)

    synth = commands.add_parser("synth", parents=[common], help="Write a synthetic panel")
    synth.add_argument("--seed", type=int, default=None)

    check = commands.add_parser("check", parents=[common], help="Run the estimator self-checks")
    check.add_argument(
        "--tol", type=float, default=None, help="Demeaning tolerance for the convergence check"
    )
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        if args.config is None and args.command in ("ingest", "fit"):
            raise ValidationError(f"{args.command} needs --config")
        config = apply_overrides(
            load_config(args.config),
            robust_se=getattr(args, "robust_se", None),
            granularity=getattr(args, "granularity", None),
            depvar=getattr(args, "depvar", None),
            fmt=getattr(args, "fmt", None),
            seed=getattr(args, "seed", None),
            tol=getattr(args, "tol", None),
            output_directory=args.output_directory
            or ("synthetic" if args.command == "synth" and args.config is None else None),
        )
        if args.command == "ingest":
            cmd_ingest(config)
        elif args.command == "fit":
            cmd_fit(config)
        elif args.command == "synth":
            cmd_synth(config)
        else:
            return cmd_check(config)
    except FareError as e:
        notes = "; ".join(getattr(e, "__notes__", []))
        logger().error(f"{e}" + (f" ({notes})" if notes else ""))
        return e.exit_code
    except Exception:
        logger().exception("unexpected failure")
        return 1
    return 0


def run() -> None:
    sys.exit(main())


if __name__ == "__main__":
    run()
