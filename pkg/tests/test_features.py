from datetime import date, timedelta

import numpy as np
import pytest

from holiday_fares.errors import ValidationError
from holiday_fares.exogenous import load_exogenous, write_periods
from holiday_fares.features import (
    adv_bucket_dummies,
    adv_days,
    bucket_names,
    build_features,
    holiday_windows,
)
from holiday_fares.holidays import HolidayCalendar, calendar_from_record, write_calendar, load_calendar
from holiday_fares.model import DateRange, HolidaySpec, HolidayWindowConfig, ModelSpec
from holiday_fares.synthgen import bundled_calendar

from conftest import exogenous_for, quote


def test_adv_days():
    assert adv_days(date(2010, 1, 1), date(2010, 1, 31)) == 30
    assert adv_days(date(2010, 1, 1), date(2010, 1, 1)) == 0
    assert adv_days(date(2009, 12, 25), date(2010, 1, 4)) == 10
    with pytest.raises(ValidationError):
        adv_days(date(2010, 1, 2), date(2010, 1, 1))


def test_adv_bucket_dummies():
    assert adv_bucket_dummies(1) == (0,) * 7
    assert adv_bucket_dummies(3) == (1, 0, 0, 0, 0, 0, 0)
    assert adv_bucket_dummies(45) == (0, 0, 0, 0, 0, 1, 0)
    assert adv_bucket_dummies(90) == (0, 0, 0, 0, 0, 0, 1)
    assert all(sum(adv_bucket_dummies(d)) <= 1 for d in range(120))
    assert bucket_names() == (
        "adv_days_03", "adv_days_05", "adv_days_07", "adv_days_10",
        "adv_days_30", "adv_days_45", "adv_days_60",
    )


def test_holiday_windows_partition(calendar):
    config = HolidayWindowConfig()
    assert holiday_windows(date(2009, 9, 4), calendar, config).eve == 1
    during = holiday_windows(date(2009, 9, 6), calendar, config)
    assert during.during == 1 and during.holiday_name == "independ"
    assert holiday_windows(date(2009, 9, 8), calendar, config).post == 1
    quiet = holiday_windows(date(2009, 9, 9), calendar, config)
    assert (quiet.eve, quiet.during, quiet.post, quiet.holiday_name) == (0, 0, 0, None)


def test_holiday_windows_wider_eve(calendar):
    config = HolidayWindowConfig(eve_days=3)
    assert holiday_windows(date(2009, 9, 2), calendar, config).eve == 1
    assert holiday_windows(date(2009, 9, 1), calendar, config).eve == 0


def test_excluded_holiday_never_matches(calendar):
    window = holiday_windows(date(2009, 2, 22), calendar, HolidayWindowConfig())
    assert window.during == 0 and window.holiday_name is None


def test_holiday_windows_outside_coverage(calendar):
    with pytest.raises(ValidationError):
        holiday_windows(date(2011, 1, 1), calendar, HolidayWindowConfig())


def _calendar(*holidays):
    return HolidayCalendar(holidays, coverage_start=date(2009, 1, 1), coverage_end=date(2009, 12, 31))


def test_nearest_holiday_wins_in_any_order():
    a = HolidaySpec("aparecida", date(2009, 10, 10), 1)
    b = HolidaySpec("finados", date(2009, 10, 13), 1)
    config = HolidayWindowConfig(post_days=3)
    for calendar in (_calendar(a, b), _calendar(b, a)):
        window = holiday_windows(date(2009, 10, 12), calendar, config)
        assert window.eve == 1 and window.holiday_name == "finados"


def test_equal_distance_goes_to_earlier_entry():
    a = HolidaySpec("aparecida", date(2009, 10, 10), 1)
    b = HolidaySpec("finados", date(2009, 10, 12), 1)
    window = holiday_windows(date(2009, 10, 11), _calendar(a, b), HolidayWindowConfig())
    assert window.post == 1 and window.holiday_name == "aparecida"
    window = holiday_windows(date(2009, 10, 11), _calendar(b, a), HolidayWindowConfig())
    assert window.eve == 1 and window.holiday_name == "finados"


def test_holiday_length_filter(calendar):
    config = HolidayWindowConfig(holiday_length_filter=3)
    assert holiday_windows(date(2009, 9, 6), calendar, config).during == 1
    assert holiday_windows(date(2009, 12, 25), calendar, config).during == 0


def test_calendar_validation_and_round_trip(calendar, tmp_path):
    with pytest.raises(ValidationError):
        HolidayCalendar([HolidaySpec("natal", date(2009, 12, 25), 2), HolidaySpec("natal", date(2009, 12, 26), 1)])
    path = write_calendar(calendar, str(tmp_path / "holidays.json"))
    loaded = load_calendar(path)
    assert loaded.holidays == calendar.holidays
    assert (loaded.coverage_start, loaded.coverage_end) == (date(2008, 1, 1), date(2010, 12, 31))


def test_calendar_default_coverage():
    calendar = calendar_from_record(
        {"holidays": [{"name": "natal", "start_date": "2009-12-31", "length_days": 2}]}
    )
    assert calendar.coverage_start == date(2009, 1, 1)
    assert calendar.coverage_end == date(2010, 12, 31)


def test_bundled_calendar():
    calendar = bundled_calendar()
    assert len(calendar) == 39
    assert {h.name for h in calendar.active()} == {
        "9jul", "anivsp", "anonovo", "aparecida", "chorpus", "consnegra",
        "finados", "independ", "natal", "pascoa", "tiradent", "trabalho",
    }
    assert all(h.excluded for h in calendar if h.name == "carnaval")
    assert calendar.covers(date(2008, 1, 1)) and calendar.covers(date(2010, 12, 31))


def _spec(*regressors, **kwargs):
    return ModelSpec(name="test", regressors=regressors, **kwargs)


def test_build_features_columns_follow_spec(calendar):
    quotes = [
        quote(stops=0, departure_date=date(2009, 9, 4)),
        quote(airline="GOL", stops=1, departure_date=date(2009, 9, 6)),
        quote(airline="AZU", stops=2, quotation_date=date(2009, 9, 4), departure_date=date(2009, 9, 8)),
    ]
    spec = _spec("nstop", "hday_dept_eve", "hday_dept_n_of_days", "hday_dept_post", "hday_qut_eve", "adv_days")
    matrix, observations = build_features(quotes, calendar, exogenous_for(quotes), spec)
    assert matrix.columns == spec.regressors
    np.testing.assert_array_equal(
        matrix.values,
        [
            [1, 1, 0, 0, 0, 15],
            [0, 0, 1, 0, 0, 17],
            [0, 0, 0, 1, 1, 4],
        ],
    )
    assert observations[0].entity_key == "TAM|CGH>SDU"
    assert observations[0].quote_period_key == "2009-08"
    assert observations[0].depart_period_key == "2009-09"
    assert observations[0].y == pytest.approx(100 * np.log(300.0))


def test_build_features_raw_depvar_and_day_keys(calendar):
    quotes = [quote()]
    spec = _spec("nstop", depvar="raw", time_granularity="day")
    _, observations = build_features(quotes, calendar, exogenous_for(quotes), spec)
    assert observations[0].y == 300.0
    assert observations[0].depart_period_key == "2009-09-04"


def test_fin_crisis_boundary(calendar):
    before = quote(quotation_date=date(2008, 9, 30), departure_date=date(2008, 10, 5))
    after = quote(quotation_date=date(2008, 10, 1), departure_date=date(2008, 10, 5))
    quotes = [before, after]
    matrix, _ = build_features(quotes, calendar, exogenous_for(quotes), _spec("fin_crisis"))
    assert matrix.column("fin_crisis").tolist() == [0.0, 1.0]


def test_period_dummies_use_departure_date(calendar):
    quotes = [
        quote(quotation_date=date(2009, 5, 1), departure_date=date(2009, 5, 30)),
        quote(quotation_date=date(2009, 5, 30), departure_date=date(2009, 6, 2)),
    ]
    periods = {"delay": (DateRange(date(2009, 6, 1), date(2009, 6, 30)),)}
    exogenous = exogenous_for(quotes, periods=periods)
    matrix, _ = build_features(quotes, calendar, exogenous, _spec("delay", "azul"))
    assert matrix.column("delay").tolist() == [0.0, 1.0]
    assert matrix.column("azul").tolist() == [0.0, 0.0]


def test_missing_usd_rows_are_dropped(calendar):
    quotes = [
        quote(quotation_date=date(2009, 8, 1) + timedelta(days=i), departure_date=date(2009, 8, 20))
        for i in range(10)
    ]
    exogenous = exogenous_for(quotes, skip_usd={date(2009, 8, 3), date(2009, 8, 7)})
    matrix, observations = build_features(quotes, calendar, exogenous, _spec("usd", "conn_pax", "nairlines_a_pair"))
    assert len(observations) == 8
    assert matrix.rows_dropped == 2
    assert matrix.drop_reasons == {"missing usd": 2}
    assert matrix.column("nairlines_a_pair").tolist() == [3.0] * 8


def test_named_holiday_and_length_columns(calendar):
    quotes = [
        quote(departure_date=date(2009, 9, 6)),
        quote(quotation_date=date(2009, 12, 20), departure_date=date(2009, 12, 25)),
    ]
    spec = _spec("hday_dept_independ", "hday_dept_natal", "dholndays_3", "adv_days_05")
    matrix, _ = build_features(quotes, calendar, exogenous_for(quotes), spec)
    np.testing.assert_array_equal(matrix.values, [[1, 0, 1, 0], [0, 1, 0, 1]])


def test_unknown_columns_are_rejected(calendar):
    quotes = [quote()]
    with pytest.raises(ValidationError, match="unknown regressor"):
        build_features(quotes, calendar, exogenous_for(quotes), _spec("price_level"))
    with pytest.raises(ValidationError):
        build_features(quotes, calendar, exogenous_for(quotes), _spec("adv_days_04"))


def test_everything_dropped_is_fatal(calendar):
    quotes = [quote()]
    exogenous = exogenous_for(quotes, skip_usd={quote().quotation_date})
    with pytest.raises(ValidationError, match="no observations"):
        build_features(quotes, calendar, exogenous, _spec("usd"))


def test_exogenous_files(tmp_path):
    (tmp_path / "series.csv").write_text(
        "date,usd,conn_pax\n2009-08-20,2.1,0.3\n2009-08-21,,0.2\n", encoding="utf-8"
    )
    (tmp_path / "routes.csv").write_text(
        "date,origin,destination,nairlines_a_pair,nairlines_adj_pair,nairlines_airp_o\n"
        "2009-08-21,cgh,sdu,2,3,5\n",
        encoding="utf-8",
    )
    write_periods({"azul": (DateRange(date(2008, 12, 15)),)}, str(tmp_path / "periods.json"))
    exogenous = load_exogenous(
        series_path=str(tmp_path / "series.csv"),
        routes_path=str(tmp_path / "routes.csv"),
        periods_path=str(tmp_path / "periods.json"),
    )
    assert exogenous.usd == {date(2009, 8, 20): 2.1}
    assert exogenous.conn_pax[date(2009, 8, 21)] == 0.2
    assert exogenous.route_counts[(date(2009, 8, 21), "CGH", "SDU")] == (2, 3, 5)
    assert exogenous.in_period("azul", date(2009, 1, 1)) == 1
    assert exogenous.in_period("fin_crisis", date(2008, 10, 1)) == 1
