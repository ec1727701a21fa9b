import logging
import os

from dataclasses import dataclass, field, replace
from typing import Any, Final, Mapping

import json5

from .errors import ParseError, ValidationError
from .estimator import DEFAULT_MAX_ITER, DEFAULT_TOL
from .ingest import DEFAULT_AIRPORTS
from .model import (
    BASE_CASE_REGRESSORS,
    DEFAULT_ADV_THRESHOLDS,
    FE_DIMENSIONS,
    HolidayWindowConfig,
    ModelSpec,
)
from .report import DEFAULT_NOTES, FORMATS
from .synthgen import DGPSpec

_TOP_LEVEL_KEYS: Final[frozenset[str]] = frozenset(
    {
        "quotes",
        "delimiter",
        "calendar",
        "exogenous",
        "output_directory",
        "airports",
        "directed_pairs",
        "estimation",
        "model",
        "tables",
        "synth",
        "format",
    }
)
_MODEL_KEYS: Final[frozenset[str]] = frozenset(
    {
        "name",
        "regressors",
        "airports",
        "stops",
        "depvar",
        "granularity",
        "fe_dimensions",
        "eve_days",
        "post_days",
        "adv_thresholds",
        "holiday_length",
    }
)
_SYNTH_KEYS: Final[frozenset[str]] = frozenset(
    {
        "seed",
        "n_rows",
        "n_entities",
        "n_quote_periods",
        "n_depart_periods",
        "sigma_entity",
        "sigma_quote",
        "sigma_depart",
        "sigma_u",
        "coefficients",
        "base_price",
        "max_adv_days",
    }
)


def logger() -> logging.Logger:
    return logging.getLogger("config")


@dataclass(frozen=True)
class TableSpec:
    title: str
    models: tuple[ModelSpec, ...]
    notes: tuple[str, ...] = DEFAULT_NOTES


@dataclass(frozen=True)
class RunConfig:
    """Everything one CLI invocation needs. Paths are already resolved."""

    quotes: str | None = None
    delimiter: str = ","
    calendar: str | None = None
    series: str | None = None
    routes: str | None = None
    periods: str | None = None
    output_directory: str = "output"
    airports: frozenset[str] | None = DEFAULT_AIRPORTS
    directed_pairs: bool = True
    tol: float = DEFAULT_TOL
    max_iter: int = DEFAULT_MAX_ITER
    robust_se: bool = False
    fmt: str = "text"
    tables: tuple[TableSpec, ...] = field(default_factory=tuple)
    dgp: DGPSpec | None = None

    def __post_init__(self):
        if self.delimiter not in (",", "\t"):
            raise ValidationError(f"delimiter must be ',' or a tab, got {self.delimiter!r}")
        if self.fmt not in FORMATS:
            raise ValidationError(f"format must be one of {FORMATS}, got {self.fmt!r}")
        if self.tol < 0:
            raise ValidationError(f"tol must be >= 0, got {self.tol}")
        if self.max_iter < 1:
            raise ValidationError("max_iter must be >= 1")

    def require(self, *names: str) -> None:
        """Fails unless every named path is configured and exists."""
        for name in names:
            path = getattr(self, name)
            if path is None:
                raise ValidationError(f"config does not set {name}")
            if not os.path.exists(path):
                raise ValidationError(f"{name} file not found: {path}")


def default_tables(spec: ModelSpec | None = None) -> tuple[TableSpec, ...]:
    spec = spec or ModelSpec(name="GRU and CGH price", regressors=BASE_CASE_REGRESSORS)
    return (TableSpec(title="Base case", models=(spec,)),)


def _warn_unknown(section: str, record: Mapping, known: frozenset[str]) -> None:
    unknown = sorted(set(record) - known)
    if unknown:
        logger().warning(f"load_config. ignoring unknown {section} keys {unknown}")


def _model_spec(
    record: Mapping[str, Any], defaults: Mapping[str, Any], *, directed: bool, where: str
) -> ModelSpec:
    _warn_unknown(where, record, _MODEL_KEYS)
    merged = {**defaults, **record}
    try:
        airports = merged.get("airports")
        return ModelSpec(
            name=str(merged.get("name", "price")),
            regressors=tuple(merged.get("regressors", BASE_CASE_REGRESSORS)),
            fe_dimensions=tuple(merged.get("fe_dimensions", FE_DIMENSIONS)),
            time_granularity=merged.get("granularity", "month"),
            airports=frozenset(airports) if airports is not None else None,
            stops=merged.get("stops"),
            windows=HolidayWindowConfig(
                eve_days=int(merged.get("eve_days", 1)),
                post_days=int(merged.get("post_days", 1)),
                holiday_length_filter=merged.get("holiday_length"),
            ),
            adv_thresholds=tuple(merged.get("adv_thresholds", DEFAULT_ADV_THRESHOLDS)),
            depvar=merged.get("depvar", "log100"),
            directed_pairs=directed,
        )
    except (TypeError, ValueError) as e:
        raise ValidationError(f"{where}: {e}") from e


def _dgp(record: Mapping[str, Any]) -> DGPSpec:
    _warn_unknown("synth", record, _SYNTH_KEYS)
    if "seed" not in record:
        raise ValidationError("synth needs a seed")
    try:
        return DGPSpec(**{k: v for k, v in record.items() if k in _SYNTH_KEYS})
    except TypeError as e:
        raise ValidationError(f"synth: {e}") from e


def config_from_record(record: Mapping[str, Any], *, base_dir: str = ".") -> RunConfig:
    """Builds a RunConfig from a parsed config file.

    Relative paths are resolved against `base_dir`, normally the directory
    holding the config file.
    """
    _warn_unknown("top-level", record, _TOP_LEVEL_KEYS)

    def resolve(path: str | None) -> str | None:
        return None if path is None else os.path.normpath(os.path.join(base_dir, path))

    exogenous = record.get("exogenous") or {}
    estimation = record.get("estimation") or {}
    defaults = record.get("model") or {}
    directed = bool(record.get("directed_pairs", True))
    airports = record.get("airports", sorted(DEFAULT_AIRPORTS))

    tables = []
    for i, table in enumerate(record.get("tables") or []):
        models = table.get("models") or []
        # a table-level model block overrides the shared defaults for its models
        table_defaults = {**defaults, **(table.get("model") or {})}
        _warn_unknown(f"table #{i + 1} model", table.get("model") or {}, _MODEL_KEYS)
        if not models:
            raise ValidationError(f"table #{i + 1} lists no models")
        tables.append(
            TableSpec(
                title=str(table.get("title", f"Table {i + 1}")),
                models=tuple(
                    _model_spec(
                        m, table_defaults, directed=directed, where=f"table #{i + 1} model #{j + 1}"
                    )
                    for j, m in enumerate(models)
                ),
                notes=tuple(table.get("notes", DEFAULT_NOTES)),
            )
        )
    if not tables:
        base = _model_spec(
            {"name": "GRU and CGH price"}, defaults, directed=directed, where="model"
        )
        tables = list(default_tables(base))

    try:
        return RunConfig(
            quotes=resolve(record.get("quotes")),
            delimiter=record.get("delimiter", ","),
            calendar=resolve(record.get("calendar")),
            series=resolve(exogenous.get("series")),
            routes=resolve(exogenous.get("routes")),
            periods=resolve(exogenous.get("periods")),
            output_directory=resolve(record.get("output_directory", "output")),
            airports=frozenset(a.upper() for a in airports) if airports is not None else None,
            directed_pairs=directed,
            tol=float(estimation.get("tol", DEFAULT_TOL)),
            max_iter=int(estimation.get("max_iter", DEFAULT_MAX_ITER)),
            robust_se=bool(estimation.get("robust_se", False)),
            fmt=record.get("format", "text"),
            tables=tuple(tables),
            dgp=_dgp(record["synth"]) if record.get("synth") else None,
        )
    except (TypeError, ValueError) as e:
        raise ValidationError(f"config: {e}") from e


def load_config(path: str | None) -> RunConfig:
    if path is None:
        return RunConfig(tables=default_tables())
    if not os.path.exists(path):
        raise ValidationError(f"config file not found: {path}")
    with open(path, "r", encoding="utf-8") as f:
        try:
            record = json5.load(f)
        except ValueError as e:
            raise ParseError(f"{path}: {e}") from e
    if not isinstance(record, dict):
        raise ParseError(f"{path}: expected an object at the top level")
    config = config_from_record(record, base_dir=os.path.dirname(os.path.abspath(path)))
    logger().info(
        f"load_config. {path}: {len(config.tables)} tables, "
        f"{sum(len(t.models) for t in config.tables)} models"
    )
    return config


def apply_overrides(
    config: RunConfig,
    *,
    robust_se: bool | None = None,
    granularity: str | None = None,
    depvar: str | None = None,
    fmt: str | None = None,
    seed: int | None = None,
    tol: float | None = None,
    output_directory: str | None = None,
) -> RunConfig:
    """Command-line flags win over the file. Granularity and depvar apply to every model."""
    changes: dict[str, Any] = {}
    if robust_se:
        changes["robust_se"] = True
    if fmt is not None:
        changes["fmt"] = fmt
    if tol is not None:
        changes["tol"] = tol
    if output_directory is not None:
        changes["output_directory"] = output_directory
    if granularity is not None or depvar is not None:
        model_changes = {}
        if granularity is not None:
            model_changes["time_granularity"] = granularity
        if depvar is not None:
            model_changes["depvar"] = depvar
        changes["tables"] = tuple(
            replace(table, models=tuple(replace(m, **model_changes) for m in table.models))
            for table in config.tables
        )
    if seed is not None:
        changes["dgp"] = replace(config.dgp, seed=seed) if config.dgp else DGPSpec(seed=seed)
    return replace(config, **changes) if changes else config
