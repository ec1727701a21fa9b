"""Regression tables and machine-readable result records."""

import io
import json
import logging
import os

from dataclasses import dataclass
from typing import Callable, Final, Sequence

import json5
import pandas as pd

from . import __version__
from .errors import ParseError, RenderError
from .estimator import FEDiagnostics
from .model import (
    CoefficientRow,
    DroppedColumn,
    FitResult,
    HolidayWindowConfig,
    ModelSpec,
)

FORMATS: Final[tuple[str, ...]] = ("text", "delim", "markup")
DEFAULT_NOTES: Final[tuple[str, ...]] = (
    "Standard errors in second column",
    "* p<0.05, ** p<0.01, *** p<0.001",
)
FOOTERS: Final[dict[str, Callable[[FitResult], str]]] = {
    "Observations": lambda fit: str(fit.n_obs),
    "Adjusted R-squared": lambda fit: f"{fit.adj_r2:.3f}",
    "R-squared": lambda fit: f"{fit.r2:.3f}",
    "Within R-squared": lambda fit: f"{fit.within_r2:.3f}",
    "Residual df": lambda fit: str(fit.df_residual),
}
TOOL_NAME: Final[str] = "holiday-fares"


def logger() -> logging.Logger:
    return logging.getLogger("report")


@dataclass(frozen=True)
class TableLayout:
    """Column groups (one per fit, in order), row order and table furniture."""

    groups: tuple[str, ...]
    rows: tuple[str, ...]
    footer: tuple[str, ...] = ("Observations", "Adjusted R-squared")
    notes: tuple[str, ...] = DEFAULT_NOTES
    title: str = ""

    def __post_init__(self):
        for name in ("groups", "rows", "footer", "notes"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        if not self.groups:
            raise RenderError("a table needs at least one column group")
        if not self.rows:
            raise RenderError("a table needs at least one row")
        if len(set(self.rows)) != len(self.rows):
            raise RenderError(f"duplicated table rows: {self.rows}")
        unknown = [f for f in self.footer if f not in FOOTERS]
        if unknown:
            raise RenderError(f"unknown footer rows {unknown}; choose from {list(FOOTERS)}")


def default_layout(
    fits: Sequence[FitResult], *, title: str = "", notes: Sequence[str] = DEFAULT_NOTES
) -> TableLayout:
    rows: list[str] = []
    for fit in fits:
        rows.extend(name for name in fit.spec.regressors if name not in rows)
    return TableLayout(
        groups=tuple(fit.name for fit in fits), rows=tuple(rows), notes=tuple(notes), title=title
    )


def format_number(value: float) -> str:
    text = f"{value:.3f}"
    return "0.000" if text == "-0.000" else text


def _grid(fits: Sequence[FitResult], layout: TableLayout) -> tuple[list[list[str]], int, int]:
    if not fits:
        raise RenderError("render_table needs at least one fit")
    if len(fits) != len(layout.groups):
        raise RenderError(
            f"layout has {len(layout.groups)} column groups but {len(fits)} fits were given"
        )
    for row in layout.rows:
        if not any(row in fit.spec.regressors for fit in fits):
            raise RenderError(f"row {row!r} is not supplied by any fit")

    header = [""]
    for group in layout.groups:
        header += [group, ""]
    grid = [header]
    for row in layout.rows:
        line = [row.replace("_", " ")]
        for fit in fits:
            coefficient = fit.coefficient(row)
            if coefficient is None:
                # not in this model, or dropped as collinear
                line += ["", ""]
            else:
                line += [
                    format_number(coefficient.coefficient) + coefficient.stars,
                    format_number(coefficient.std_error),
                ]
        grid.append(line)
    body_end = len(grid)
    for label in layout.footer:
        line = [label]
        for fit in fits:
            line += [FOOTERS[label](fit), ""]
        grid.append(line)
    return grid, 1, body_end


def _text(grid: list[list[str]], header_end: int, body_end: int, layout: TableLayout) -> str:
    widths = [max(len(line[j]) for line in grid) for j in range(len(grid[0]))]
    width = sum(widths) + 2 * (len(widths) - 1)

    def line(cells: list[str]) -> str:
        parts = [cells[0].ljust(widths[0])]
        parts += [cell.rjust(w) for cell, w in zip(cells[1:], widths[1:])]
        return "  ".join(parts).rstrip()

    rule = "-" * width
    out = []
    if layout.title:
        out.append(layout.title)
    out.append(rule)
    out += [line(cells) for cells in grid[:header_end]]
    out.append(rule)
    out += [line(cells) for cells in grid[header_end:body_end]]
    out.append(rule)
    out += [line(cells) for cells in grid[body_end:]]
    out.append(rule)
    out += list(layout.notes)
    return "\n".join(out) + "\n"


def _delim(grid: list[list[str]], layout: TableLayout) -> str:
    rows = grid + [[note] + [""] * (len(grid[0]) - 1) for note in layout.notes]
    buffer = io.StringIO()
    pd.DataFrame(rows).to_csv(buffer, sep="\t", header=False, index=False, lineterminator="\n")
    return buffer.getvalue()


def _markup(grid: list[list[str]], header_end: int, layout: TableLayout) -> str:
    def line(cells: list[str]) -> str:
        return "| " + " | ".join(c.replace("|", "\\|") for c in cells) + " |"

    out = []
    if layout.title:
        out += [f"**{layout.title}**", ""]
    out += [line(cells) for cells in grid[:header_end]]
    out.append("|" + "|".join([":---"] + ["---:"] * (len(grid[0]) - 1)) + "|")
    out += [line(cells) for cells in grid[header_end:]]
    if layout.notes:
        out.append("")
        out += [f"{note}  " for note in layout.notes[:-1]] + [layout.notes[-1]]
    return "\n".join(out) + "\n"


def render_table(fits: Sequence[FitResult], layout: TableLayout, fmt: str = "text") -> str:
    """Renders fits side by side, coefficient and standard error per group.

    Coefficients carry 3 decimals and their star suffix. A row that a fit does
    not estimate (absent from its model, or dropped) is left blank; a row that
    no fit supplies raises RenderError.
    """
    if fmt not in FORMATS:
        raise RenderError(f"format must be one of {FORMATS}, got {fmt!r}")
    grid, header_end, body_end = _grid(fits, layout)
    if fmt == "text":
        return _text(grid, header_end, body_end, layout)
    if fmt == "delim":
        return _delim(grid, layout)
    return _markup(grid, header_end, layout)


class TableWriter:

    EXTENSIONS: Final[dict[str, str]] = {"text": ".txt", "delim": ".tsv", "markup": ".md"}

    def write(self, *, fits, layout, directory, stem, fmt="text"):
        path = os.path.join(directory, stem + self.EXTENSIONS[fmt])
        content = render_table(fits, layout, fmt)
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            f.write(content)
        return path


def _spec_record(spec: ModelSpec) -> dict:
    return {
        "name": spec.name,
        "regressors": list(spec.regressors),
        "fe_dimensions": list(spec.fe_dimensions),
        "time_granularity": spec.time_granularity,
        "airports": sorted(spec.airports) if spec.airports is not None else None,
        "stops": spec.stops,
        "windows": {
            "eve_days": spec.windows.eve_days,
            "post_days": spec.windows.post_days,
            "holiday_length_filter": spec.windows.holiday_length_filter,
        },
        "adv_thresholds": list(spec.adv_thresholds),
        "depvar": spec.depvar,
        "directed_pairs": spec.directed_pairs,
    }


def export_results(fit: FitResult) -> dict:
    """Full-precision record of one fit, including the echoed ModelSpec."""
    return {
        "tool": TOOL_NAME,
        "version": __version__,
        "name": fit.name,
        "n_obs": fit.n_obs,
        "df_residual": fit.df_residual,
        "adj_r2": fit.adj_r2,
        "r2": fit.r2,
        "within_r2": fit.within_r2,
        "se_type": fit.se_type,
        "iterations": fit.iterations,
        "coefficients": [row._asdict() for row in fit.coefficients],
        "dropped": [d._asdict() for d in fit.dropped],
        "diagnostics": {
            "levels": dict(fit.diagnostics.levels),
            "absorbed": fit.diagnostics.absorbed,
            "components": fit.diagnostics.components,
            "singletons": fit.diagnostics.singletons,
        },
        "spec": _spec_record(fit.spec),
    }


def load_results(record: dict) -> FitResult:
    try:
        spec = record["spec"]
        windows = spec["windows"]
        diagnostics = record["diagnostics"]
        return FitResult(
            name=record["name"],
            coefficients=tuple(
                CoefficientRow(
                    name=row["name"],
                    coefficient=float(row["coefficient"]),
                    std_error=float(row["std_error"]),
                    t_stat=float(row["t_stat"]),
                    p_value=float(row["p_value"]),
                    stars=row["stars"],
                )
                for row in record["coefficients"]
            ),
            n_obs=int(record["n_obs"]),
            df_residual=int(record["df_residual"]),
            adj_r2=float(record["adj_r2"]),
            r2=float(record["r2"]),
            within_r2=float(record["within_r2"]),
            diagnostics=FEDiagnostics(
                levels={k: int(v) for k, v in diagnostics["levels"].items()},
                absorbed=int(diagnostics["absorbed"]),
                components=int(diagnostics["components"]),
                singletons=int(diagnostics["singletons"]),
            ),
            dropped=tuple(DroppedColumn(d["name"], d["reason"]) for d in record["dropped"]),
            se_type=record["se_type"],
            iterations=int(record["iterations"]),
            spec=ModelSpec(
                name=spec["name"],
                regressors=tuple(spec["regressors"]),
                fe_dimensions=tuple(spec["fe_dimensions"]),
                time_granularity=spec["time_granularity"],
                airports=frozenset(spec["airports"]) if spec["airports"] is not None else None,
                stops=spec["stops"],
                windows=HolidayWindowConfig(
                    eve_days=windows["eve_days"],
                    post_days=windows["post_days"],
                    holiday_length_filter=windows["holiday_length_filter"],
                ),
                adv_thresholds=tuple(spec["adv_thresholds"]),
                depvar=spec["depvar"],
                directed_pairs=spec["directed_pairs"],
            ),
        )
    except (KeyError, TypeError) as e:
        raise ParseError(f"results record is missing {e}") from e


def write_results(fits: Sequence[FitResult], path: str, *, tables: Sequence[str] = ()) -> str:
    """Writes every fit of a run as one JSON document, in fit order."""
    record = {
        "tool": TOOL_NAME,
        "version": __version__,
        "tables": list(tables),
        "results": [export_results(fit) for fit in fits],
    }
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        json.dump(record, f, indent=4)
        f.write("\n")
    logger().info(f"write_results. {len(fits)} fits to {path}")
    return path


def read_results(path: str) -> list[FitResult]:
    with open(path, "r", encoding="utf-8") as f:
        try:
            record = json5.load(f)
        except ValueError as e:
            raise ParseError(f"{path}: {e}") from e
    return [load_results(item) for item in record.get("results", [])]
