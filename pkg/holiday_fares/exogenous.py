import json
import logging
import os

from datetime import date
from typing import Final

import json5
import pandas as pd

from .errors import ParseError, ValidationError
from .model import DateRange, ExogenousSeries

SERIES_COLUMNS: Final[tuple[str, ...]] = ("date", "usd", "conn_pax")
ROUTE_COLUMNS: Final[tuple[str, ...]] = (
    "date",
    "origin",
    "destination",
    "nairlines_a_pair",
    "nairlines_adj_pair",
    "nairlines_airp_o",
)
PERIOD_NAMES: Final[tuple[str, ...]] = ("fin_crisis", "delay", "azul")


def logger() -> logging.Logger:
    return logging.getLogger("exogenous")


def _read_table(path: str, columns: tuple[str, ...], delimiter: str) -> pd.DataFrame:
    if not os.path.exists(path):
        raise ValidationError(f"exogenous file not found: {path}")
    try:
        frame = pd.read_csv(path, sep=delimiter, dtype=str, keep_default_na=False)
    except (pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise ParseError(f"{path}: cannot read delimited file: {e}") from e
    missing = [c for c in columns if c not in frame.columns]
    if missing:
        raise ParseError(f"{path}: missing required columns {missing}")
    dates = pd.to_datetime(frame["date"], format="%Y-%m-%d", errors="coerce")
    if dates.isna().any():
        line = int(dates.isna().to_numpy().argmax()) + 2
        raise ParseError(f"{path}:{line}: malformed date")
    frame["date"] = dates.dt.date
    return frame


def _numeric(frame: pd.DataFrame, column: str, path: str) -> pd.Series:
    # empty cells stay missing; rows relying on them are dropped at join time
    values = pd.to_numeric(frame[column].where(frame[column] != ""), errors="coerce")
    bad = values.isna() & (frame[column] != "")
    if bad.any():
        line = int(bad.to_numpy().argmax()) + 2
        raise ParseError(f"{path}:{line}: malformed {column} {frame[column][bad].iloc[0]!r}")
    return values


def _ranges(record: dict, source: str) -> dict[str, tuple[DateRange, ...]]:
    periods = {}
    for name, items in record.items():
        ranges = []
        for item in items:
            try:
                start = date.fromisoformat(item[0])
                end = date.fromisoformat(item[1]) if len(item) > 1 and item[1] else None
            except (TypeError, ValueError, IndexError) as e:
                raise ParseError(f"{source}: malformed range for {name}: {item!r}") from e
            ranges.append(DateRange(start, end))
        periods[name] = tuple(ranges)
    return periods


def load_periods(path: str) -> dict[str, tuple[DateRange, ...]]:
    if not os.path.exists(path):
        raise ValidationError(f"periods file not found: {path}")
    with open(path, "r", encoding="utf-8") as f:
        try:
            record = json5.load(f)
        except ValueError as e:
            raise ParseError(f"{path}: {e}") from e
    periods = _ranges(record, path)
    unknown = sorted(set(periods) - set(PERIOD_NAMES))
    if unknown:
        logger().warning(f"load_periods. {path}: ignoring unknown periods {unknown}")
    periods.setdefault("fin_crisis", (DateRange(date(2008, 10, 1)),))
    return periods


def load_exogenous(
    *, series_path: str, routes_path: str, periods_path: str, delimiter: str = ","
) -> ExogenousSeries:
    """Loads the date-keyed series, the route counts and the period ranges.

    Empty cells are left out of the lookup tables; the features step drops
    and counts the rows that needed them.
    """
    series = _read_table(series_path, SERIES_COLUMNS, delimiter)
    usd = _numeric(series, "usd", series_path)
    conn_pax = _numeric(series, "conn_pax", series_path)

    routes = _read_table(routes_path, ROUTE_COLUMNS, delimiter)
    counts = [_numeric(routes, c, routes_path) for c in ROUTE_COLUMNS[3:]]

    route_counts = {}
    for i, (day, origin, destination) in enumerate(
        zip(routes["date"], routes["origin"], routes["destination"])
    ):
        values = [c.iat[i] for c in counts]
        if any(pd.isna(v) for v in values):
            continue
        route_counts[(day, origin.strip().upper(), destination.strip().upper())] = tuple(
            int(v) for v in values
        )

    exogenous = ExogenousSeries(
        usd={d: float(v) for d, v in zip(series["date"], usd) if not pd.isna(v)},
        conn_pax={d: float(v) for d, v in zip(series["date"], conn_pax) if not pd.isna(v)},
        route_counts=route_counts,
        periods=load_periods(periods_path),
    )
    logger().info(
        f"load_exogenous. {len(exogenous.usd)} usd days, {len(exogenous.conn_pax)} conn_pax "
        f"days, {len(exogenous.route_counts)} route-days"
    )
    return exogenous


def write_periods(periods: dict[str, tuple[DateRange, ...]], path: str) -> str:
    record = {
        name: [[r.start.isoformat(), r.end.isoformat() if r.end else None] for r in ranges]
        for name, ranges in periods.items()
    }
    with open(path, "w", encoding="utf-8") as f:
        json.dump(record, f, indent=4)
        f.write("\n")
    return path
