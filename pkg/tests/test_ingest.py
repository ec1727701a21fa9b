import json
import random

from datetime import date, timedelta
from pathlib import Path

import pytest

from holiday_fares.errors import ParseError, ValidationError
from holiday_fares.ingest import (
    SelectionReport,
    filter_sample,
    parse_quotes,
    run_selection,
    select_min_fare,
    write_quotes,
    write_selection_report,
)

from conftest import quote, write_quote_file


def _row(airline="TAM", origin="CGH", destination="SDU", q="2009-08-20", d="2009-09-04",
         stops=0, price=300.0, domestic="true"):
    return (airline, origin, destination, q, d, stops, price, domestic)


def test_parse_well_formed(tmp_path):
    rows = [_row(price=300 + i, d=f"2009-09-0{i + 1}") for i in range(5)]
    result = parse_quotes(write_quote_file(tmp_path / "q.csv", rows))
    assert len(result.quotes) == 5
    assert result.rejects == []
    assert result.quotes[0].departure_date == date(2009, 9, 1)
    assert result.quotes[4].price == 304.0


def test_parse_rejects_rows_with_line_numbers(tmp_path):
    rows = [_row(), _row(price="abc"), _row(q="2009-13-01"), _row(domestic="maybe"), _row(price=-5)]
    result = parse_quotes(write_quote_file(tmp_path / "q.csv", rows))
    assert len(result.quotes) == 1
    assert [r.line for r in result.rejects] == [3, 4, 5, 6]
    assert "price" in result.rejects[0].reason
    assert "quotation_date" in result.rejects[1].reason


def test_parse_rejects_non_finite_numbers(tmp_path):
    rows = [_row(), _row(stops="inf", d="2009-09-05"), _row(price="inf", d="2009-09-06"),
            _row(price="nan", d="2009-09-07"), _row(d="2009-09-08")]
    result = parse_quotes(write_quote_file(tmp_path / "q.csv", rows))
    assert [q.price for q in result.quotes] == [300.0, 300.0]
    assert [r.line for r in result.rejects] == [3, 4, 5]
    assert "stops" in result.rejects[0].reason
    assert "price" in result.rejects[1].reason


def test_parse_line_numbers_survive_blank_lines(tmp_path):
    target = tmp_path / "q.csv"
    lines = Path(write_quote_file(target, [_row(), _row(price="abc")])).read_text(encoding="utf-8").splitlines()
    # two blank lines between the valid row and the malformed one
    target.write_text("\n".join(lines[:2] + ["", ""] + lines[2:]) + "\n", encoding="utf-8")
    result = parse_quotes(str(target))

    assert len(result.quotes) == 1
    assert [r.line for r in result.rejects] == [5]


def test_parse_keeps_international_rows(tmp_path):
    rows = [_row(domestic="false"), _row(domestic="yes", d="2009-09-05"), _row(domestic="0", d="2009-09-06")]
    result = parse_quotes(write_quote_file(tmp_path / "q.csv", rows))
    assert [q.is_domestic for q in result.quotes] == [False, True, False]


def test_parse_tab_delimited(tmp_path):
    path = write_quote_file(tmp_path / "q.tsv", [_row()], delimiter="\t")
    assert len(parse_quotes(path, delimiter="\t").quotes) == 1


def test_parse_schema_errors(tmp_path):
    with pytest.raises(ValidationError, match="missing.csv"):
        parse_quotes(str(tmp_path / "missing.csv"))
    path = tmp_path / "bad.csv"
    path.write_text("airline,origin\nTAM,CGH\n", encoding="utf-8")
    with pytest.raises(ParseError, match="missing required columns"):
        parse_quotes(str(path))


def test_select_min_fare_keeps_minimum():
    quotes = [quote(price=500.0), quote(price=450.0)]
    assert [q.price for q in select_min_fare(quotes)] == [450.0]

    other = quote(airline="GOL", price=500.0)
    assert len(select_min_fare([quote(), other])) == 2


def test_select_min_fare_ties_keep_first():
    first = quote(stops=0, price=400.0)
    second = quote(stops=1, price=400.0)
    assert select_min_fare([first, second]) == [first]
    assert select_min_fare([second, first]) == [second]


def _random_quotes(n, seed):
    rng = random.Random(seed)
    quotes = []
    for _ in range(n):
        q = date(2009, 8, 1) + timedelta(days=rng.randrange(3))
        destination = rng.choice(["SDU", "POA", "MIA"])
        quotes.append(
            quote(
                airline=rng.choice(["TAM", "GOL"]),
                origin_airport=rng.choice(["CGH", "GRU", "BSB"]),
                destination_airport=destination,
                quotation_date=q,
                departure_date=q + timedelta(days=rng.randrange(3)),
                price=float(rng.randrange(100, 900)),
                is_domestic=destination != "MIA",
            )
        )
    return quotes


def test_select_min_fare_matches_brute_force():
    quotes = _random_quotes(100, seed=7)
    selected = select_min_fare(quotes)
    groups = {q.group_key for q in quotes}
    assert len(selected) == len(groups)
    for kept in selected:
        assert all(kept.price <= q.price for q in quotes if q.group_key == kept.group_key)
    assert [q.group_key for q in selected] == sorted(groups)
    assert select_min_fare(selected) == selected


def test_filter_sample_hand_counted_fixture():
    quotes = [quote(departure_date=date(2009, 9, 1) + timedelta(days=i)) for i in range(13)]
    quotes += [quote(airline="GOL", is_domestic=False, departure_date=date(2009, 9, 1) + timedelta(days=i)) for i in range(4)]
    quotes += [quote(airline="AZU", origin_airport=o) for o in ("BSB", "SDU", "VCP")]
    kept, report = filter_sample(quotes)
    assert len(quotes) == 20
    assert report.final_count == 13
    assert report.rows_dropped_international == 4
    assert report.rows_dropped_airport_filter == 3
    assert len(kept) == 13


def test_filter_counts_international_first():
    _, report = filter_sample([quote(origin_airport="BSB", is_domestic=False)])
    assert report.rows_dropped_international == 1
    assert report.rows_dropped_airport_filter == 0


def test_filter_and_selection_commute():
    quotes = _random_quotes(100, seed=11)
    a, _ = filter_sample(select_min_fare(quotes))
    b = select_min_fare(filter_sample(quotes)[0])
    assert a == b


def test_run_selection_report(tmp_path):
    quotes = _random_quotes(100, seed=3)
    kept, report = run_selection(quotes, rows_rejected=2)
    assert report.rows_read == 100
    assert report.rows_after_min_fare == len({q.group_key for q in quotes})
    assert report.rows_dropped_min_fare == 100 - report.rows_after_min_fare
    assert report.final_count == len(kept)
    assert report.rows_rejected == 2

    path = write_selection_report(report, str(tmp_path / "report.json"))
    with open(path, encoding="utf-8") as f:
        record = json.load(f)
    assert record["final_count"] == report.final_count
    assert record["rows_dropped_min_fare"] == report.rows_dropped_min_fare


def test_selection_report_consistency():
    with pytest.raises(ValidationError):
        SelectionReport(
            rows_read=10,
            rows_after_min_fare=8,
            rows_dropped_international=1,
            rows_dropped_airport_filter=1,
            final_count=7,
        )


def test_written_sample_parses_back(tmp_path):
    kept, _ = run_selection(_random_quotes(60, seed=5))
    path = write_quotes(kept, str(tmp_path / "sample.csv"))
    assert parse_quotes(path).quotes == kept
