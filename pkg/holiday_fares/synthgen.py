"""Synthetic fare panels drawn from a known data-generating process.

Prices follow y = 100 ln(base) + x'beta + lambda_entity + mu_quote + mu_depart + u
with normal effects and noise, then price = exp(y / 100). Regressors are built
by the same feature code the real pipeline uses, so a fit on the written files
should recover the planted coefficients.
"""

import itertools
import json
import logging
import os

from dataclasses import dataclass, field, replace
from datetime import date, timedelta
from importlib import resources
from typing import Final, NamedTuple, Sequence

import numpy as np
import pandas as pd

from .errors import ValidationError
from .estimator import absorbed_columns, demean
from .exogenous import write_periods
from .features import build_features
from .holidays import HolidayCalendar, load_calendar, write_calendar
from .ingest import write_quotes
from .model import (
    FE_DIMENSIONS,
    DateRange,
    ExogenousSeries,
    FareQuote,
    ModelSpec,
    PanelObservation,
)

# Planted values mirror the signs and sizes of the published base case.
BASE_CASE_COEFFICIENTS: Final[dict[str, float]] = {
    "hday_qut_eve": -2.589,
    "hday_quote_n_of_days": -0.780,
    "hday_qut_post": -3.608,
    "hday_dept_eve": 12.119,
    "hday_dept_n_of_days": 1.388,
    "hday_dept_post": 7.200,
    "usd": 35.849,
    "adv_days": -0.317,
    "nstop": -30.891,
    "fin_crisis": -2.378,
    "delay": 12.554,
    "azul": -2.905,
    "conn_pax": -38.506,
    "nairlines_a_pair": -3.582,
    "nairlines_adj_pair": -0.103,
    "nairlines_airp_o": -1.210,
}

_AIRLINES: Final[tuple[str, ...]] = ("TAM", "GOL", "AZU", "WEB", "OCE", "PTB")
_ORIGINS: Final[tuple[str, ...]] = ("CGH", "GRU")
_DESTINATIONS: Final[tuple[str, ...]] = (
    "SDU", "BSB", "CNF", "POA", "SSA", "REC", "CWB", "FOR", "BEL", "FLN", "GYN", "VIX",
)


def logger() -> logging.Logger:
    return logging.getLogger("synthgen")


def bundled_calendar() -> HolidayCalendar:
    path = resources.files("holiday_fares") / "data" / "holidays_sao_paulo.json5"
    with resources.as_file(path) as p:
        return load_calendar(str(p))


@dataclass(frozen=True)
class DGPSpec:
    seed: int
    coefficients: dict[str, float] = field(default_factory=lambda: dict(BASE_CASE_COEFFICIENTS))
    n_entities: int = 24
    n_quote_periods: int = 12
    n_depart_periods: int = 15
    sigma_entity: float = 15.0
    sigma_quote: float = 5.0
    sigma_depart: float = 8.0
    sigma_u: float = 20.0
    n_rows: int = 5_000
    start: date = date(2008, 5, 5)
    base_price: float = 400.0
    max_adv_days: int = 90
    calendar: HolidayCalendar | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.seed is None:
            raise ValidationError("a synthetic panel needs an explicit seed")
        sigmas = (self.sigma_entity, self.sigma_quote, self.sigma_depart, self.sigma_u)
        if any(s < 0 for s in sigmas):
            raise ValidationError("standard deviations must be >= 0")
        if min(self.n_entities, self.n_quote_periods, self.n_depart_periods) < 1:
            raise ValidationError("entity and period counts must be >= 1")
        if self.n_depart_periods < self.n_quote_periods:
            raise ValidationError("departure periods must span at least the quotation periods")
        capacity = len(_AIRLINES) * len(_ORIGINS) * len(_DESTINATIONS)
        if self.n_entities > capacity:
            raise ValidationError(f"at most {capacity} airline x route entities are available")
        if self.n_rows < 10 * len(self.coefficients):
            raise ValidationError(
                f"n_rows must be at least 10 x {len(self.coefficients)} coefficients"
            )
        if self.base_price <= 0 or self.max_adv_days < 0:
            raise ValidationError("base_price must be positive and max_adv_days >= 0")

    @property
    def spec(self) -> ModelSpec:
        return ModelSpec(name="price", regressors=tuple(self.coefficients))


class SyntheticPanel(NamedTuple):
    quotes: list[FareQuote]
    exogenous: ExogenousSeries
    true_beta: dict[str, float]
    calendar: HolidayCalendar


def _month_first(day: date, offset: int) -> date:
    months = day.year * 12 + day.month - 1 + offset
    return date(months // 12, months % 12 + 1, 1)


def _mid_month(day: date) -> date:
    return date(day.year, day.month, 16)


def _month_index(ordinals: np.ndarray, origin: date) -> np.ndarray:
    days = [date.fromordinal(int(o)) for o in ordinals]
    base = origin.year * 12 + origin.month
    return np.array([d.year * 12 + d.month - base for d in days], dtype=np.int64)


def _draw_exogenous(
    rng: np.random.Generator, first: date, last: date, routes: Sequence[tuple[str, str]]
) -> ExogenousSeries:
    days = [first + timedelta(days=i) for i in range((last - first).days + 1)]
    usd = np.maximum(1.7 + np.cumsum(rng.normal(0.0, 0.01, len(days))), 0.5)
    conn_pax = rng.uniform(0.1, 0.4, len(days))
    route_counts = {}
    for day in days:
        for origin, destination in routes:
            a_pair = int(rng.integers(1, 6))
            route_counts[(day, origin, destination)] = (
                a_pair,
                a_pair + int(rng.integers(0, 3)),
                int(rng.integers(3, 9)),
            )
    # period boundaries sit mid-month so month effects cannot absorb them
    span = (last - first).days
    periods = {
        "fin_crisis": (DateRange(_mid_month(first + timedelta(days=int(span * 0.30)))),),
        "delay": (
            DateRange(
                _mid_month(first + timedelta(days=int(span * 0.15))),
                _mid_month(first + timedelta(days=int(span * 0.40))),
            ),
        ),
        "azul": (DateRange(_mid_month(first + timedelta(days=int(span * 0.55)))),),
    }
    return ExogenousSeries(
        usd=dict(zip(days, usd.tolist())),
        conn_pax=dict(zip(days, conn_pax.tolist())),
        route_counts=route_counts,
        periods=periods,
    )


def generate(dgp: DGPSpec) -> SyntheticPanel:
    """Draws quotes and exogenous series and plants `dgp.coefficients`.

    Fully determined by `dgp.seed`. Fails if any generated regressor has no
    variation left once the fixed effects are swept out.
    """
    rng = np.random.default_rng(dgp.seed)
    calendar = dgp.calendar or bundled_calendar()

    entities = list(itertools.product(_AIRLINES, _DESTINATIONS, _ORIGINS))[: dgp.n_entities]
    quote_first = _month_first(dgp.start, 0)
    quote_end = _month_first(dgp.start, dgp.n_quote_periods)
    depart_end = _month_first(dgp.start, dgp.n_depart_periods)
    last_day = depart_end - timedelta(days=1)
    if not (calendar.covers(quote_first) and calendar.covers(last_day)):
        raise ValidationError(
            f"calendar coverage {calendar.coverage_start} .. {calendar.coverage_end} "
            f"does not span {quote_first} .. {last_day}"
        )

    # oversample, then keep the first n_rows distinct (entity, q, d) groups
    draws = 2 * dgp.n_rows
    entity = rng.integers(0, dgp.n_entities, draws)
    q_ord = quote_first.toordinal() + rng.integers(0, (quote_end - quote_first).days, draws)
    upper = np.minimum(dgp.max_adv_days, last_day.toordinal() - q_ord)
    d_ord = q_ord + rng.integers(0, upper + 1)
    stops = rng.integers(0, 3, draws)

    frame = pd.DataFrame({"entity": entity, "q": q_ord, "d": d_ord, "stops": stops})
    frame = frame.drop_duplicates(subset=["entity", "q", "d"], keep="first").head(dgp.n_rows)
    if len(frame) < dgp.n_rows:
        raise ValidationError(
            f"only {len(frame)} distinct quote groups fit in the configured panel; "
            f"raise the period or entity counts"
        )

    routes = sorted({(origin, destination) for _, destination, origin in entities})
    exogenous = _draw_exogenous(rng, quote_first, last_day, routes)

    quotes = []
    for e, q, d, s in zip(frame["entity"], frame["q"], frame["d"], frame["stops"]):
        airline, destination, origin = entities[e]
        quotes.append(
            FareQuote(
                airline=airline,
                origin_airport=origin,
                destination_airport=destination,
                quotation_date=date.fromordinal(int(q)),
                departure_date=date.fromordinal(int(d)),
                stops=int(s),
                price=dgp.base_price,
                is_domestic=True,
            )
        )

    spec = dgp.spec
    matrix, _ = build_features(quotes, calendar, exogenous, spec)
    if matrix.rows_dropped:
        raise ValidationError(f"generated quotes failed exogenous joins: {matrix.drop_reasons}")

    lam = rng.normal(0.0, dgp.sigma_entity, dgp.n_entities)
    mu_q = rng.normal(0.0, dgp.sigma_quote, dgp.n_quote_periods)
    mu_d = rng.normal(0.0, dgp.sigma_depart, dgp.n_depart_periods)
    noise = rng.normal(0.0, dgp.sigma_u, len(quotes))

    beta = np.array([dgp.coefficients[name] for name in spec.regressors])
    q_period = _month_index(frame["q"].to_numpy(), quote_first)
    d_period = _month_index(frame["d"].to_numpy(), quote_first)
    entity_codes = frame["entity"].to_numpy()

    groups = [entity_codes, q_period, d_period]
    y_t, X_t, _ = demean(np.zeros(len(quotes)), matrix.values, groups)
    absorbed = absorbed_columns(y_t, matrix.values, X_t, groups).columns
    flat = [spec.regressors[j] for j in absorbed]
    if flat:
        raise ValidationError(f"generated regressors without within variation: {flat}")

    y = (
        100.0 * np.log(dgp.base_price)
        + matrix.values @ beta
        + lam[entity_codes]
        + mu_q[q_period]
        + mu_d[d_period]
        + noise
    )
    prices = np.exp(y / 100.0)
    quotes = [replace(quote, price=float(p)) for quote, p in zip(quotes, prices)]
    logger().info(
        f"generate. seed {dgp.seed}: {len(quotes)} quotes, {dgp.n_entities} entities, "
        f"{len(spec.regressors)} planted coefficients"
    )
    return SyntheticPanel(
        quotes=quotes,
        exogenous=exogenous,
        true_beta=dict(zip(spec.regressors, beta.tolist())),
        calendar=calendar,
    )


class PanelArrays(NamedTuple):
    y: np.ndarray
    X: np.ndarray
    groups: list[np.ndarray]
    beta: np.ndarray


def draw_panel_arrays(
    seed: int,
    *,
    n: int = 500,
    k: int = 3,
    levels: Sequence[int] = (20, 8),
    beta: Sequence[float] | None = None,
    sigma_u: float = 1.0,
    sigma_fe: float = 1.0,
) -> PanelArrays:
    """Estimator-level fixture: regressors correlated with crossed fixed effects."""
    rng = np.random.default_rng(seed)
    beta = np.asarray(beta if beta is not None else rng.normal(0.0, 2.0, k), dtype=np.float64)
    groups = [rng.integers(0, L, n) for L in levels]
    X = rng.normal(size=(n, k))
    y = X @ beta + sigma_u * rng.normal(size=n)
    for codes, L in zip(groups, levels):
        effect = rng.normal(0.0, sigma_fe, L)
        # regressors load on the effects so ignoring them would bias the slopes
        X += 0.5 * effect[codes][:, None] * rng.uniform(0.5, 1.5, k)
        y = y + effect[codes] + 0.5 * effect[codes] * (rng.uniform(0.5, 1.5, k) @ beta)
    return PanelArrays(y=y, X=X, groups=groups, beta=beta)


def disconnected_fixture(seed: int = 0, *, k: int = 2) -> PanelArrays:
    """60 rows, 5 entities x 4 periods split into two disconnected blocks.

    Entities 0-2 only meet periods 0-1 and entities 3-4 only meet periods 2-3,
    so the bipartite entity/period graph has two components.
    """
    rng = np.random.default_rng(seed)
    n = 60
    i = np.arange(n)
    block_a = i < 36
    entity = np.where(block_a, i % 3, 3 + i % 2)
    period = np.where(block_a, (i // 3) % 2, 2 + (i // 2) % 2)
    beta = rng.normal(0.0, 2.0, k)
    X = rng.normal(size=(n, k))
    y = X @ beta + rng.normal(0.0, 1.0, 5)[entity] + rng.normal(0.0, 1.0, 4)[period]
    y = y + rng.normal(size=n)
    return PanelArrays(y=y, X=X, groups=[entity, period], beta=beta)


def write_synthetic(panel: SyntheticPanel, dgp: DGPSpec, directory: str) -> dict[str, str]:
    """Writes every input file the pipeline reads, the true coefficients and a
    config that runs ingest and fit on them.

    Returns:
        Mapping of file role to written path.
    """
    os.makedirs(directory, exist_ok=True)
    paths = {
        "quotes": os.path.join(directory, "quotes.csv"),
        "series": os.path.join(directory, "series.csv"),
        "routes": os.path.join(directory, "routes.csv"),
        "periods": os.path.join(directory, "periods.json"),
        "calendar": os.path.join(directory, "holidays.json"),
        "truth": os.path.join(directory, "truth.json"),
        "config": os.path.join(directory, "run.json5"),
    }
    write_quotes(panel.quotes, paths["quotes"])

    exogenous = panel.exogenous
    days = sorted(exogenous.usd)
    pd.DataFrame(
        {
            "date": [d.isoformat() for d in days],
            "usd": [exogenous.usd[d] for d in days],
            "conn_pax": [exogenous.conn_pax[d] for d in days],
        }
    ).to_csv(paths["series"], index=False, lineterminator="\n", float_format="%.17g")
    keys = sorted(exogenous.route_counts)
    pd.DataFrame(
        {
            "date": [k[0].isoformat() for k in keys],
            "origin": [k[1] for k in keys],
            "destination": [k[2] for k in keys],
            "nairlines_a_pair": [exogenous.route_counts[k][0] for k in keys],
            "nairlines_adj_pair": [exogenous.route_counts[k][1] for k in keys],
            "nairlines_airp_o": [exogenous.route_counts[k][2] for k in keys],
        }
    ).to_csv(paths["routes"], index=False, lineterminator="\n")
    write_periods(dict(exogenous.periods), paths["periods"])
    write_calendar(panel.calendar, paths["calendar"])

    with open(paths["truth"], "w", encoding="utf-8") as f:
        json.dump(
            {
                "seed": dgp.seed,
                "n_rows": dgp.n_rows,
                "sigma": {
                    "entity": dgp.sigma_entity,
                    "quote": dgp.sigma_quote,
                    "depart": dgp.sigma_depart,
                    "u": dgp.sigma_u,
                },
                "coefficients": panel.true_beta,
            },
            f,
            indent=4,
        )
        f.write("\n")

    with open(paths["config"], "w", encoding="utf-8") as f:
        json.dump(
            {
                "quotes": "quotes.csv",
                "calendar": "holidays.json",
                "exogenous": {
                    "series": "series.csv",
                    "routes": "routes.csv",
                    "periods": "periods.json",
                },
                "output_directory": "output",
                "airports": ["CGH", "GRU"],
                "model": {"depvar": "log100", "granularity": "month"},
                "tables": [
                    {
                        "title": "Synthetic base case",
                        "models": [{"name": "price", "regressors": list(panel.true_beta)}],
                    }
                ],
            },
            f,
            indent=4,
        )
        f.write("\n")
    logger().info(f"write_synthetic. wrote {len(paths)} files to {directory}")
    return paths


def to_observations(panel: PanelArrays) -> tuple[list[PanelObservation], ModelSpec]:
    """Wraps fixture arrays as estimation rows plus the matching ModelSpec."""
    dims = FE_DIMENSIONS[: len(panel.groups)]
    keys = [[f"{prefix}{c}" for c in codes] for prefix, codes in zip("eqd", panel.groups)]
    while len(keys) < len(FE_DIMENSIONS):
        keys.append(["-"] * len(panel.y))
    k = panel.X.shape[1]
    observations = [
        PanelObservation(
            y=float(y),
            x=tuple(float(v) for v in x),
            entity_key=e,
            quote_period_key=q,
            depart_period_key=d,
            origin="GRU",
            stops=0,
            price=1.0,
        )
        for y, x, e, q, d in zip(panel.y, panel.X, *keys)
    ]
    spec = ModelSpec(name="fixture", regressors=tuple(f"x{j}" for j in range(k)), fe_dimensions=dims)
    return observations, spec
