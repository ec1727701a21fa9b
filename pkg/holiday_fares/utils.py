import concurrent.futures
import logging
import os

from typing import NamedTuple, Sequence

import pandas as pd

from .config import RunConfig, TableSpec
from .errors import FareError
from .estimator import fit
from .exogenous import load_exogenous
from .features import build_features
from .holidays import HolidayCalendar, load_calendar
from .ingest import RowReject, SelectionReport, parse_quotes, run_selection
from .model import ExogenousSeries, FareQuote, FitResult, ModelSpec


def logger() -> logging.Logger:
    return logging.getLogger("utils")


class Inputs(NamedTuple):
    quotes: list[FareQuote]
    calendar: HolidayCalendar
    exogenous: ExogenousSeries
    report: SelectionReport


def select_quotes(config: RunConfig) -> tuple[list[FareQuote], SelectionReport, list[RowReject]]:
    config.require("quotes")
    parsed = parse_quotes(config.quotes, delimiter=config.delimiter)
    if parsed.rejects:
        logger().warning(
            f"select_quotes. {len(parsed.rejects)} rows rejected, first at line "
            f"{parsed.rejects[0].line}: {parsed.rejects[0].reason}"
        )
    quotes, report = run_selection(
        parsed.quotes, config.airports, rows_rejected=len(parsed.rejects)
    )
    return quotes, report, parsed.rejects


def load_inputs(config: RunConfig) -> Inputs:
    """Quotes (selection re-applied, a no-op on an ingested sample), calendar and exogenous data."""
    config.require("quotes", "calendar", "series", "routes", "periods")
    quotes, report, _ = select_quotes(config)
    calendar = load_calendar(config.calendar)
    exogenous = load_exogenous(
        series_path=config.series,
        routes_path=config.routes,
        periods_path=config.periods,
        delimiter=config.delimiter,
    )
    return Inputs(quotes=quotes, calendar=calendar, exogenous=exogenous, report=report)


def write_rejects(rejects: Sequence[RowReject], path: str) -> str:
    pd.DataFrame(rejects, columns=["line", "reason"]).to_csv(
        path, index=False, lineterminator="\n"
    )
    return path


def fit_spec_worker(
    inputs: Inputs, spec: ModelSpec, *, tol: float, max_iter: int, robust: bool
) -> FitResult:
    try:
        _, observations = build_features(inputs.quotes, inputs.calendar, inputs.exogenous, spec)
        return fit(observations, spec, tol=tol, max_iter=max_iter, robust=robust)
    except FareError as e:
        e.add_note(f"model: {spec.name}")
        raise


def fit_tables(
    config: RunConfig, inputs: Inputs, *, max_workers: int | None = None
) -> list[tuple[TableSpec, list[FitResult]]]:
    """Fits every model of every table. Specs run in parallel; results keep config order."""
    specs = [spec for table in config.tables for spec in table.models]
    with concurrent.futures.ThreadPoolExecutor(
        max_workers=max_workers or min(len(specs), os.cpu_count() or 1)
    ) as executor:
        futures = [
            executor.submit(
                fit_spec_worker,
                inputs,
                spec,
                tol=config.tol,
                max_iter=config.max_iter,
                robust=config.robust_se,
            )
            for spec in specs
        ]
        # result() in submission order keeps the batch deterministic
        fits = iter([future.result() for future in futures])

    return [(table, [next(fits) for _ in table.models]) for table in config.tables]
