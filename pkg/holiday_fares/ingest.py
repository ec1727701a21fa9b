import json
import logging
import os

from dataclasses import asdict, dataclass
from typing import Final, Iterable, NamedTuple, Sequence

import numpy as np
import pandas as pd

from .errors import ParseError, ValidationError
from .model import FareQuote

QUOTE_COLUMNS: Final[tuple[str, ...]] = (
    "airline",
    "origin",
    "destination",
    "quotation_date",
    "departure_date",
    "stops",
    "price",
    "is_domestic",
)
DEFAULT_AIRPORTS: Final[frozenset[str]] = frozenset({"CGH", "GRU"})

_TRUE_VALUES: Final[frozenset[str]] = frozenset({"true", "1", "yes"})
_FALSE_VALUES: Final[frozenset[str]] = frozenset({"false", "0", "no"})


def logger() -> logging.Logger:
    return logging.getLogger("ingest")


class RowReject(NamedTuple):
    line: int
    reason: str


class ParseResult(NamedTuple):
    quotes: list[FareQuote]
    rejects: list[RowReject]


@dataclass(frozen=True)
class SelectionReport:
    rows_read: int
    rows_after_min_fare: int
    rows_dropped_international: int
    rows_dropped_airport_filter: int
    final_count: int
    rows_rejected: int = 0

    def __post_init__(self):
        counts = asdict(self)
        if any(v < 0 for v in counts.values()):
            raise ValidationError(f"selection counts must be non-negative: {counts}")
        if self.rows_read < self.rows_after_min_fare:
            raise ValidationError("min-fare selection cannot add rows")
        if (
            self.rows_after_min_fare
            - self.rows_dropped_international
            - self.rows_dropped_airport_filter
            != self.final_count
        ):
            raise ValidationError(f"selection counts do not add up: {counts}")

    @property
    def rows_dropped_min_fare(self) -> int:
        return self.rows_read - self.rows_after_min_fare

    def to_record(self) -> dict[str, int]:
        record = asdict(self)
        record["rows_dropped_min_fare"] = self.rows_dropped_min_fare
        return record


def _parse_bool(value: str) -> bool | None:
    value = value.strip().lower()
    if value in _TRUE_VALUES:
        return True
    if value in _FALSE_VALUES:
        return False
    return None


def parse_quotes(path: str, *, delimiter: str = ",") -> ParseResult:
    """Reads a delimited quote file into FareQuotes.

    Args:
        path: UTF-8 file with a header row naming every column of QUOTE_COLUMNS.
        delimiter: Field separator, "," or a tab.

    Returns:
        The valid quotes in file order, and one RowReject (with its 1-based
        file line number, header being line 1) per row that failed to parse.
    """
    if not os.path.exists(path):
        raise ValidationError(f"quote file not found: {path}")
    try:
        frame = pd.read_csv(
            path,
            sep=delimiter,
            dtype=str,
            keep_default_na=False,
            encoding="utf-8",
            skipinitialspace=True,
            skip_blank_lines=False,
        ).fillna("")
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as e:
        raise ParseError(f"{path}: cannot read delimited file: {e}") from e

    missing = [c for c in QUOTE_COLUMNS if c not in frame.columns]
    if missing:
        raise ParseError(f"{path}: missing required columns {missing}")

    quotation = pd.to_datetime(frame["quotation_date"], format="%Y-%m-%d", errors="coerce")
    departure = pd.to_datetime(frame["departure_date"], format="%Y-%m-%d", errors="coerce")
    price = pd.to_numeric(frame["price"], errors="coerce")
    stops = pd.to_numeric(frame["stops"], errors="coerce")

    quotes: list[FareQuote] = []
    rejects: list[RowReject] = []
    for i, row in enumerate(frame.itertuples(index=False)):
        # blank lines stay in the frame so that i + 2 is the physical line
        line = i + 2
        if not any(str(v).strip() for v in row):
            continue
        reason = None
        if pd.isna(quotation.iat[i]):
            reason = f"malformed quotation_date {row.quotation_date!r}"
        elif pd.isna(departure.iat[i]):
            reason = f"malformed departure_date {row.departure_date!r}"
        elif not np.isfinite(price.iat[i]):
            reason = f"malformed price {row.price!r}"
        elif not np.isfinite(stops.iat[i]) or stops.iat[i] != int(stops.iat[i]):
            reason = f"malformed stops {row.stops!r}"
        domestic = _parse_bool(row.is_domestic)
        if reason is None and domestic is None:
            reason = f"malformed is_domestic {row.is_domestic!r}"
        if reason is None:
            try:
                quotes.append(
                    FareQuote(
                        airline=row.airline.strip(),
                        origin_airport=row.origin.strip().upper(),
                        destination_airport=row.destination.strip().upper(),
                        quotation_date=quotation.iat[i].date(),
                        departure_date=departure.iat[i].date(),
                        stops=int(stops.iat[i]),
                        price=float(price.iat[i]),
                        is_domestic=domestic,
                    )
                )
                continue
            except ValidationError as e:
                reason = str(e.args[0])
        rejects.append(RowReject(line=line, reason=reason))
        logger().warning(f"parse_quotes. {path}:{line} rejected: {reason}")

    logger().info(
        f"parse_quotes. {len(quotes)} quotes read from {path}, {len(rejects)} rejected"
    )
    return ParseResult(quotes=quotes, rejects=rejects)


def _canonical_order(quote: FareQuote):
    return quote.group_key


def select_min_fare(quotes: Iterable[FareQuote]) -> list[FareQuote]:
    """Keeps the cheapest quote per (airline, pair, quotation date, departure date).

    Ties keep the first occurrence in input order. Output is sorted canonically.
    """
    best: dict[tuple, FareQuote] = {}
    n_in = 0
    for quote in quotes:
        n_in += 1
        key = quote.group_key
        current = best.get(key)
        if current is None or quote.price < current.price:
            best[key] = quote
    selected = sorted(best.values(), key=_canonical_order)
    logger().info(f"select_min_fare. {len(selected)} groups from {n_in} quotes")
    return selected


def filter_sample(
    quotes: Sequence[FareQuote],
    airport_filter: Iterable[str] | None = DEFAULT_AIRPORTS,
    *,
    rows_read: int | None = None,
) -> tuple[list[FareQuote], SelectionReport]:
    """Drops international quotes, then quotes whose origin is outside `airport_filter`.

    A quote that fails both tests is counted once, as international.
    `airport_filter=None` keeps every origin.
    """
    airports = None if airport_filter is None else frozenset(a.upper() for a in airport_filter)
    kept: list[FareQuote] = []
    international = wrong_airport = 0
    for quote in quotes:
        if not quote.is_domestic:
            international += 1
        elif airports is not None and quote.origin_airport not in airports:
            wrong_airport += 1
        else:
            kept.append(quote)

    report = SelectionReport(
        rows_read=len(quotes) if rows_read is None else rows_read,
        rows_after_min_fare=len(quotes),
        rows_dropped_international=international,
        rows_dropped_airport_filter=wrong_airport,
        final_count=len(kept),
    )
    logger().info(
        f"filter_sample. dropped {international} international and "
        f"{wrong_airport} outside {sorted(airports) if airports else 'any'}; kept {len(kept)}"
    )
    return kept, report


def run_selection(
    quotes: Sequence[FareQuote],
    airport_filter: Iterable[str] | None = DEFAULT_AIRPORTS,
    *,
    rows_rejected: int = 0,
) -> tuple[list[FareQuote], SelectionReport]:
    """Min-fare selection followed by the sample filters, reported end to end."""
    selected = select_min_fare(quotes)
    kept, report = filter_sample(selected, airport_filter, rows_read=len(quotes))
    if rows_rejected:
        report = SelectionReport(**{**asdict(report), "rows_rejected": rows_rejected})
    return kept, report


def quotes_to_frame(quotes: Sequence[FareQuote]) -> pd.DataFrame:
    return pd.DataFrame(
        {
            "airline": [q.airline for q in quotes],
            "origin": [q.origin_airport for q in quotes],
            "destination": [q.destination_airport for q in quotes],
            "quotation_date": [q.quotation_date.isoformat() for q in quotes],
            "departure_date": [q.departure_date.isoformat() for q in quotes],
            "stops": [q.stops for q in quotes],
            "price": [q.price for q in quotes],
            "is_domestic": ["true" if q.is_domestic else "false" for q in quotes],
        },
        columns=list(QUOTE_COLUMNS),
    )


def write_quotes(quotes: Sequence[FareQuote], path: str, *, delimiter: str = ",") -> str:
    """Writes quotes in the input schema. Prices keep full precision."""
    quotes_to_frame(quotes).to_csv(
        path, sep=delimiter, index=False, lineterminator="\n", float_format="%.17g"
    )
    return path


def write_selection_report(report: SelectionReport, path: str) -> str:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(report.to_record(), f, indent=4)
        f.write("\n")
    return path
