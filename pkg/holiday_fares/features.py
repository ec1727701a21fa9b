import bisect
import logging
import math
import re

from collections import Counter
from dataclasses import dataclass, field, replace
from datetime import date
from functools import lru_cache
from typing import Callable, Final, Sequence

import numpy as np

from .errors import ValidationError
from .holidays import HolidayCalendar
from .model import (
    DEFAULT_ADV_THRESHOLDS,
    HOLIDAY_NAMES,
    ExogenousSeries,
    FareQuote,
    HolidayWindowConfig,
    ModelSpec,
    PanelObservation,
    entity_key,
    period_key,
)

_WINDOW_COLUMNS: Final[dict[str, tuple[str, str]]] = {
    "hday_qut_eve": ("quotation", "eve"),
    "hday_quote_n_of_days": ("quotation", "during"),
    "hday_qut_post": ("quotation", "post"),
    "hday_dept_eve": ("departure", "eve"),
    "hday_dept_n_of_days": ("departure", "during"),
    "hday_dept_post": ("departure", "post"),
}
_LENGTH_COLUMN = re.compile(r"^(q|d)holndays_(\d+)$")
_BUCKET_COLUMN = re.compile(r"^adv_days_(\d+)$")
_HOLIDAY_COLUMN = re.compile(r"^hday_dept_(" + "|".join(HOLIDAY_NAMES) + r")$")
_ROUTE_COLUMNS: Final[tuple[str, ...]] = (
    "nairlines_a_pair",
    "nairlines_adj_pair",
    "nairlines_airp_o",
)


def logger() -> logging.Logger:
    return logging.getLogger("features")


@dataclass(frozen=True)
class HolidayWindow:
    eve: int = 0
    during: int = 0
    post: int = 0
    holiday_name: str | None = None

    def flag(self, window: str) -> int:
        return getattr(self, window)


@dataclass(frozen=True)
class FeatureMatrix:
    columns: tuple[str, ...]
    values: np.ndarray
    rows_dropped: int = 0
    drop_reasons: dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        if len(set(self.columns)) != len(self.columns):
            raise ValidationError(f"duplicated feature columns: {self.columns}")
        if self.values.ndim != 2 or self.values.shape[1] != len(self.columns):
            raise ValidationError("feature values do not match the column list")
        if np.isnan(self.values).any():
            raise ValidationError("feature matrix contains missing values")

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.columns.index(name)]


def adv_days(quotation_date: date, departure_date: date) -> int:
    """Calendar days between quotation/purchase and departure."""
    days = (departure_date - quotation_date).days
    if days < 0:
        raise ValidationError(
            f"departure {departure_date} precedes quotation {quotation_date}"
        )
    return days


def adv_bucket_dummies(
    days: int, thresholds: Sequence[int] = DEFAULT_ADV_THRESHOLDS
) -> tuple[int, ...]:
    """One-hot over advance-purchase buckets.

    Each value falls in the bucket of the largest threshold <= days; anything
    below the first threshold is the all-zero baseline.
    """
    dummies = [0] * len(thresholds)
    idx = bisect.bisect_right(thresholds, days) - 1
    if idx >= 0:
        dummies[idx] = 1
    return tuple(dummies)


def holiday_windows(
    day: date, calendar: HolidayCalendar, config: HolidayWindowConfig
) -> HolidayWindow:
    """Flags `day` as eve, during or post of the nearest holiday.

    Windows are [start - eve_days, start), [start, start + length) and
    [start + length, start + length + post_days). When several holidays claim
    the date the nearest one wins, measured in days to its start (eve), zero
    (during) or days since its last day (post); ties go to the earlier
    calendar entry. Excluded holidays never match.
    """
    if not calendar.covers(day):
        raise ValidationError(
            f"{day} is outside the calendar coverage "
            f"{calendar.coverage_start} .. {calendar.coverage_end}"
        )
    d = day.toordinal()
    best: tuple[int, str, str] | None = None
    for holiday in calendar.active(length=config.holiday_length_filter):
        start = holiday.start_date.toordinal()
        end = start + holiday.length_days
        if start <= d < end:
            candidate = (0, "during", holiday.name)
        elif start - config.eve_days <= d < start:
            candidate = (start - d, "eve", holiday.name)
        elif end <= d < end + config.post_days:
            candidate = (d - end + 1, "post", holiday.name)
        else:
            continue
        if best is None or candidate[0] < best[0]:
            best = candidate
    if best is None:
        return HolidayWindow()
    _, window, name = best
    return HolidayWindow(**{window: 1}, holiday_name=name)


def _in_named_holiday(day: date, calendar: HolidayCalendar, name: str) -> int:
    return int(any(h.start_date <= day < h.end_date for h in calendar.named(name)))


class _Missing(Exception):
    def __init__(self, reason: str):
        self.reason = reason


def _column_builders(
    spec: ModelSpec, calendar: HolidayCalendar, exogenous: ExogenousSeries
) -> list[Callable[[FareQuote], float]]:
    windows = spec.windows

    @lru_cache(maxsize=None)
    def window(day: date, length: int | None) -> HolidayWindow:
        config = windows if length is None else replace(windows, holiday_length_filter=length)
        return holiday_windows(day, calendar, config)

    @lru_cache(maxsize=None)
    def named(day: date, name: str) -> int:
        return _in_named_holiday(day, calendar, name)

    def on_date(q: FareQuote, which: str) -> date:
        return q.quotation_date if which == "quotation" else q.departure_date

    def usd(q: FareQuote) -> float:
        try:
            return exogenous.usd[q.quotation_date]
        except KeyError:
            raise _Missing("missing usd") from None

    def conn_pax(q: FareQuote) -> float:
        try:
            return exogenous.conn_pax[q.departure_date]
        except KeyError:
            raise _Missing("missing conn_pax") from None

    def route_count(position: int) -> Callable[[FareQuote], float]:
        def build(q: FareQuote) -> float:
            key = (q.departure_date, q.origin_airport, q.destination_airport)
            try:
                return float(exogenous.route_counts[key][position])
            except KeyError:
                raise _Missing("missing route counts") from None

        return build

    builders = []
    for name in spec.regressors:
        if name in _WINDOW_COLUMNS:
            which, flag = _WINDOW_COLUMNS[name]
            builders.append(
                lambda q, which=which, flag=flag: window(on_date(q, which), None).flag(flag)
            )
        elif m := _LENGTH_COLUMN.match(name):
            which = "quotation" if m.group(1) == "q" else "departure"
            length = int(m.group(2))
            builders.append(
                lambda q, which=which, length=length: window(on_date(q, which), length).during
            )
        elif m := _HOLIDAY_COLUMN.match(name):
            builders.append(lambda q, h=m.group(1): named(q.departure_date, h))
        elif name == "adv_days":
            builders.append(lambda q: adv_days(q.quotation_date, q.departure_date))
        elif m := _BUCKET_COLUMN.match(name):
            threshold = int(m.group(1))
            if threshold not in spec.adv_thresholds:
                raise ValidationError(
                    f"{name}: {threshold} is not one of the bucket thresholds {spec.adv_thresholds}"
                )
            position = spec.adv_thresholds.index(threshold)
            builders.append(
                lambda q, p=position: adv_bucket_dummies(
                    adv_days(q.quotation_date, q.departure_date), spec.adv_thresholds
                )[p]
            )
        elif name == "nstop":
            builders.append(lambda q: int(q.stops == 0))
        elif name == "usd":
            builders.append(usd)
        elif name == "conn_pax":
            builders.append(conn_pax)
        elif name == "fin_crisis":
            builders.append(lambda q: exogenous.in_period("fin_crisis", q.quotation_date))
        elif name in ("delay", "azul"):
            builders.append(lambda q, p=name: exogenous.in_period(p, q.departure_date))
        elif name in _ROUTE_COLUMNS:
            builders.append(route_count(_ROUTE_COLUMNS.index(name)))
        else:
            raise ValidationError(f"unknown regressor {name!r}")
    return builders


def bucket_names(thresholds: Sequence[int] = DEFAULT_ADV_THRESHOLDS) -> tuple[str, ...]:
    return tuple(f"adv_days_{t:02d}" for t in thresholds)


def dependent_value(price: float, depvar: str) -> float:
    return 100.0 * math.log(price) if depvar == "log100" else price


def build_features(
    quotes: Sequence[FareQuote],
    calendar: HolidayCalendar,
    exogenous: ExogenousSeries,
    spec: ModelSpec,
) -> tuple[FeatureMatrix, list[PanelObservation]]:
    """Builds the regressor matrix and the estimation rows for one model.

    Columns follow `spec.regressors` exactly. Rows whose exogenous joins fail
    are dropped (listwise) and tallied per reason on the returned matrix.
    """
    builders = _column_builders(spec, calendar, exogenous)
    rows: list[tuple[float, ...]] = []
    observations: list[PanelObservation] = []
    reasons: Counter = Counter()
    dropped = 0

    for q in quotes:
        try:
            x = tuple(float(build(q)) for build in builders)
        except _Missing as e:
            dropped += 1
            reasons[e.reason] += 1
            continue
        rows.append(x)
        observations.append(
            PanelObservation(
                y=dependent_value(q.price, spec.depvar),
                x=x,
                entity_key=entity_key(
                    q.airline,
                    q.origin_airport,
                    q.destination_airport,
                    directed=spec.directed_pairs,
                ),
                quote_period_key=period_key(q.quotation_date, spec.time_granularity),
                depart_period_key=period_key(q.departure_date, spec.time_granularity),
                origin=q.origin_airport,
                stops=q.stops,
                price=q.price,
            )
        )

    if not observations:
        raise ValidationError(
            f"model {spec.name}: no observations left after feature assembly "
            f"({dropped} dropped: {dict(reasons)})"
        )
    if dropped:
        logger().warning(
            f"build_features. {spec.name}: dropped {dropped} rows with unmatched joins {dict(reasons)}"
        )
    matrix = FeatureMatrix(
        columns=spec.regressors,
        values=np.asarray(rows, dtype=np.float64).reshape(len(rows), len(builders)),
        rows_dropped=dropped,
        drop_reasons=dict(sorted(reasons.items())),
    )
    logger().info(
        f"build_features. {spec.name}: {matrix.n_rows} observations x {len(matrix.columns)} columns"
    )
    return matrix, observations

