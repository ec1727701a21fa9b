"""Domain types shared by the ingest, features, estimator and report modules."""

from __future__ import annotations

from dataclasses import dataclass, field
from datetime import date
from typing import TYPE_CHECKING, Final, Mapping, NamedTuple

import numpy as np

from .errors import ValidationError

if TYPE_CHECKING:
    from .estimator import FEDiagnostics

FE_DIMENSIONS: Final[tuple[str, ...]] = ("entity", "quote_period", "depart_period")
GRANULARITIES: Final[tuple[str, ...]] = ("day", "month")
DEPVARS: Final[tuple[str, ...]] = ("raw", "log100")
SE_TYPES: Final[tuple[str, ...]] = ("classical", "robust")

HOLIDAY_NAMES: Final[tuple[str, ...]] = (
    "9jul",
    "anivsp",
    "anonovo",
    "aparecida",
    "chorpus",
    "consnegra",
    "finados",
    "independ",
    "natal",
    "pascoa",
    "tiradent",
    "trabalho",
)

DEFAULT_ADV_THRESHOLDS: Final[tuple[int, ...]] = (3, 5, 7, 10, 30, 45, 60)

# Base-case regressor set, in the order the results are usually tabulated.
BASE_CASE_REGRESSORS: Final[tuple[str, ...]] = (
    "hday_qut_eve",
    "hday_quote_n_of_days",
    "hday_qut_post",
    "hday_dept_eve",
    "hday_dept_n_of_days",
    "hday_dept_post",
    "usd",
    "adv_days",
    "nstop",
    "fin_crisis",
    "delay",
    "azul",
    "conn_pax",
    "nairlines_a_pair",
    "nairlines_adj_pair",
    "nairlines_airp_o",
)


@dataclass(frozen=True, slots=True)
class FareQuote:
    """One raw price observation of airline i, airport-pair k, quoted on q for departure d."""

    airline: str
    origin_airport: str
    destination_airport: str
    quotation_date: date
    departure_date: date
    stops: int
    price: float
    is_domestic: bool

    def __post_init__(self):
        if not self.airline or not self.origin_airport or not self.destination_airport:
            raise ValidationError("airline, origin and destination must be non-empty")
        if self.departure_date < self.quotation_date:
            raise ValidationError(
                f"departure {self.departure_date} precedes quotation {self.quotation_date}"
            )
        if not self.price > 0:
            raise ValidationError(f"price must be positive, got {self.price}")
        if self.stops < 0:
            raise ValidationError(f"stops must be >= 0, got {self.stops}")

    @property
    def group_key(self) -> tuple[str, str, str, date, date]:
        return (
            self.airline,
            self.origin_airport,
            self.destination_airport,
            self.quotation_date,
            self.departure_date,
        )


@dataclass(frozen=True, slots=True)
class HolidaySpec:
    name: str
    start_date: date
    length_days: int
    excluded: bool = False

    def __post_init__(self):
        if not self.name:
            raise ValidationError("holiday name must be non-empty")
        if self.length_days < 1:
            raise ValidationError(
                f"holiday {self.name} {self.start_date}: length_days must be >= 1"
            )

    @property
    def end_date(self) -> date:
        """First day after the holiday."""
        return date.fromordinal(self.start_date.toordinal() + self.length_days)


class DateRange(NamedTuple):
    """Inclusive date range; `end=None` leaves it open."""

    start: date
    end: date | None = None

    def contains(self, day: date) -> bool:
        return day >= self.start and (self.end is None or day <= self.end)


@dataclass(frozen=True)
class ExogenousSeries:
    """Date-indexed shifters joined onto the quotes.

    `usd` and `conn_pax` are keyed by date; `route_counts` by
    (date, origin, destination) holding the three nairlines counts
    (a_pair, adj_pair, airp_o). `periods` maps fin_crisis, delay and azul to
    their date ranges.
    """

    usd: Mapping[date, float]
    conn_pax: Mapping[date, float]
    route_counts: Mapping[tuple[date, str, str], tuple[int, int, int]]
    periods: Mapping[str, tuple[DateRange, ...]] = field(
        default_factory=lambda: {"fin_crisis": (DateRange(date(2008, 10, 1)),)}
    )

    def __post_init__(self):
        bad = [d for d, v in self.usd.items() if not v > 0]
        if bad:
            raise ValidationError(f"usd must be positive; offending dates {bad[:5]}")
        if any(v < 0 for v in self.conn_pax.values()):
            raise ValidationError("conn_pax must be non-negative")
        if any(c < 0 for counts in self.route_counts.values() for c in counts):
            raise ValidationError("nairlines counts must be non-negative")
        for name, ranges in self.periods.items():
            for r in ranges:
                if r.end is not None and r.end < r.start:
                    raise ValidationError(f"period {name}: {r.start} is after {r.end}")

    def in_period(self, name: str, day: date) -> int:
        return int(any(r.contains(day) for r in self.periods.get(name, ())))


class PanelObservation(NamedTuple):
    """One estimation row: y, the regressor vector x and the fixed-effect keys.

    `origin` and `stops` are kept for subset filtering at fit time.
    """

    y: float
    x: tuple[float, ...]
    entity_key: str
    quote_period_key: str
    depart_period_key: str
    origin: str
    stops: int
    price: float


@dataclass(frozen=True)
class HolidayWindowConfig:
    eve_days: int = 1
    post_days: int = 1
    holiday_length_filter: int | None = None

    def __post_init__(self):
        if self.eve_days < 1 or self.post_days < 1:
            raise ValidationError("eve_days and post_days must be >= 1")
        if self.holiday_length_filter is not None and self.holiday_length_filter < 1:
            raise ValidationError("holiday_length_filter must be >= 1")


@dataclass(frozen=True)
class ModelSpec:
    """Configuration of one regression (one column group of a results table)."""

    name: str = "price"
    regressors: tuple[str, ...] = BASE_CASE_REGRESSORS
    fe_dimensions: tuple[str, ...] = FE_DIMENSIONS
    time_granularity: str = "month"
    airports: frozenset[str] | None = None
    stops: int | None = None
    windows: HolidayWindowConfig = field(default_factory=HolidayWindowConfig)
    adv_thresholds: tuple[int, ...] = DEFAULT_ADV_THRESHOLDS
    depvar: str = "log100"
    directed_pairs: bool = True

    def __post_init__(self):
        dims = tuple(self.fe_dimensions)
        unknown = set(dims) - set(FE_DIMENSIONS)
        if unknown:
            raise ValidationError(f"unknown fixed-effect dimensions: {sorted(unknown)}")
        if not dims:
            raise ValidationError("at least one fixed-effect dimension is required")
        # sweep order is always entity -> quote -> depart
        object.__setattr__(
            self, "fe_dimensions", tuple(d for d in FE_DIMENSIONS if d in dims)
        )
        object.__setattr__(self, "regressors", tuple(self.regressors))
        if not self.regressors:
            raise ValidationError(f"model {self.name}: regressor list is empty")
        if len(set(self.regressors)) != len(self.regressors):
            raise ValidationError(f"model {self.name}: duplicated regressor names")
        if self.time_granularity not in GRANULARITIES:
            raise ValidationError(f"time_granularity must be one of {GRANULARITIES}")
        if self.depvar not in DEPVARS:
            raise ValidationError(f"depvar must be one of {DEPVARS}")
        thresholds = tuple(int(t) for t in self.adv_thresholds)
        if not thresholds or thresholds[0] < 1 or any(
            b <= a for a, b in zip(thresholds, thresholds[1:])
        ):
            raise ValidationError(
                f"adv_thresholds must be positive and strictly increasing, got {thresholds}"
            )
        object.__setattr__(self, "adv_thresholds", thresholds)
        if self.stops is not None and self.stops < 0:
            raise ValidationError("stops filter must be >= 0")
        if self.airports is not None:
            object.__setattr__(
                self, "airports", frozenset(a.upper() for a in self.airports)
            )

    def selects(self, origin: str, stops: int) -> bool:
        if self.airports is not None and origin not in self.airports:
            return False
        return self.stops is None or stops == self.stops


class CoefficientRow(NamedTuple):
    name: str
    coefficient: float
    std_error: float
    t_stat: float
    p_value: float
    stars: str


class DroppedColumn(NamedTuple):
    name: str
    reason: str


@dataclass(frozen=True)
class FitResult:
    name: str
    coefficients: tuple[CoefficientRow, ...]
    n_obs: int
    df_residual: int
    adj_r2: float
    r2: float
    within_r2: float
    diagnostics: "FEDiagnostics"
    dropped: tuple[DroppedColumn, ...]
    se_type: str
    iterations: int
    spec: ModelSpec
    residuals: np.ndarray | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if self.df_residual < 1:
            raise ValidationError("df_residual must be >= 1")
        if self.adj_r2 > 1 + 1e-12:
            raise ValidationError("adjusted R-squared cannot exceed 1")

    @property
    def fe_levels(self) -> dict[str, int]:
        return dict(self.diagnostics.levels)

    def coefficient(self, name: str) -> CoefficientRow | None:
        for row in self.coefficients:
            if row.name == name:
                return row
        return None

    def is_dropped(self, name: str) -> bool:
        return any(d.name == name for d in self.dropped)


def entity_key(airline: str, origin: str, destination: str, *, directed: bool = True) -> str:
    """Airline x airport-pair key. Undirected keys sort the pair."""
    if not airline or not origin or not destination:
        raise ValidationError(
            f"entity_key needs non-empty fields, got ({airline!r}, {origin!r}, {destination!r})"
        )
    if "|" in airline or any(c in origin + destination for c in "|>-"):
        raise ValidationError("entity_key fields cannot contain '|', '>' or '-'")
    if directed:
        return f"{airline}|{origin}>{destination}"
    a, b = sorted((origin, destination))
    return f"{airline}|{a}-{b}"


def period_key(day: date, granularity: str) -> str:
    if granularity == "month":
        return f"{day.year:04d}-{day.month:02d}"
    if granularity == "day":
        return day.isoformat()
    raise ValidationError(f"granularity must be one of {GRANULARITIES}, got {granularity!r}")
