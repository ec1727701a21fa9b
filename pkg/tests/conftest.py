from datetime import date, timedelta

import pytest

from holiday_fares.holidays import HolidayCalendar
from holiday_fares.ingest import QUOTE_COLUMNS
from holiday_fares.model import DateRange, ExogenousSeries, FareQuote, HolidaySpec


def quote(**overrides) -> FareQuote:
    fields = dict(
        airline="TAM",
        origin_airport="CGH",
        destination_airport="SDU",
        quotation_date=date(2009, 8, 20),
        departure_date=date(2009, 9, 4),
        stops=0,
        price=300.0,
        is_domestic=True,
    )
    fields.update(overrides)
    return FareQuote(**fields)


def exogenous_for(quotes, *, skip_usd=(), periods=None) -> ExogenousSeries:
    """Complete series over the span of `quotes`, minus the usd dates in `skip_usd`."""
    first = min(q.quotation_date for q in quotes)
    last = max(q.departure_date for q in quotes)
    days = [first + timedelta(days=i) for i in range((last - first).days + 1)]
    routes = {(q.origin_airport, q.destination_airport) for q in quotes}
    return ExogenousSeries(
        usd={d: 2.0 + 0.001 * i for i, d in enumerate(days) if d not in skip_usd},
        conn_pax={d: 0.25 for d in days},
        route_counts={(d, o, t): (3, 4, 6) for d in days for o, t in routes},
        periods=periods or {"fin_crisis": (DateRange(date(2008, 10, 1)),)},
    )


def write_quote_file(path, rows, *, delimiter=","):
    lines = [delimiter.join(QUOTE_COLUMNS)]
    lines += [delimiter.join(str(v) for v in row) for row in rows]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return str(path)


@pytest.fixture
def calendar() -> HolidayCalendar:
    return HolidayCalendar(
        [
            HolidaySpec("independ", date(2009, 9, 5), 3),
            HolidaySpec("aparecida", date(2009, 10, 10), 3),
            HolidaySpec("finados", date(2009, 10, 31), 3),
            HolidaySpec("carnaval", date(2009, 2, 21), 5, excluded=True),
            HolidaySpec("natal", date(2009, 12, 25), 2),
        ],
        coverage_start=date(2008, 1, 1),
        coverage_end=date(2010, 12, 31),
    )
