import json
import logging
import os

from datetime import date
from typing import Iterable, Sequence

import json5

from .errors import ParseError, ValidationError
from .model import HolidaySpec


def logger() -> logging.Logger:
    return logging.getLogger("holidays")


class HolidayCalendar:
    """Ordered list of holidays plus the date span it is known to cover.

    Entry order matters only as the final tie-break between two holidays whose
    windows are equally near a date.
    """

    def __init__(
        self,
        holidays: Iterable[HolidaySpec],
        *,
        coverage_start: date | None = None,
        coverage_end: date | None = None,
    ):
        self.holidays: tuple[HolidaySpec, ...] = tuple(holidays)
        if not self.holidays and (coverage_start is None or coverage_end is None):
            raise ValidationError("an empty calendar needs an explicit coverage span")

        seen = set()
        for h in self.holidays:
            key = (h.name, h.start_date.year)
            if key in seen:
                raise ValidationError(
                    f"holiday {h.name} appears twice in {h.start_date.year}"
                )
            seen.add(key)

        self.coverage_start = coverage_start or date(
            min(h.start_date.year for h in self.holidays), 1, 1
        )
        self.coverage_end = coverage_end or date(
            max(date.fromordinal(h.end_date.toordinal() - 1).year for h in self.holidays),
            12,
            31,
        )
        if self.coverage_end < self.coverage_start:
            raise ValidationError("calendar coverage end precedes its start")

    def __len__(self) -> int:
        return len(self.holidays)

    def __iter__(self):
        return iter(self.holidays)

    def covers(self, day: date) -> bool:
        return self.coverage_start <= day <= self.coverage_end

    def active(self, *, length: int | None = None) -> tuple[HolidaySpec, ...]:
        """Holidays not flagged as excluded, optionally only those of a given length."""
        return tuple(
            h
            for h in self.holidays
            if not h.excluded and (length is None or h.length_days == length)
        )

    def named(self, name: str) -> tuple[HolidaySpec, ...]:
        return tuple(h for h in self.holidays if h.name == name and not h.excluded)

    def to_record(self) -> dict:
        return {
            "coverage": {
                "start": self.coverage_start.isoformat(),
                "end": self.coverage_end.isoformat(),
            },
            "holidays": [
                {
                    "name": h.name,
                    "start_date": h.start_date.isoformat(),
                    "length_days": h.length_days,
                    "excluded": h.excluded,
                }
                for h in self.holidays
            ],
        }


def _parse_date(value: str, where: str) -> date:
    try:
        return date.fromisoformat(value)
    except (TypeError, ValueError) as e:
        raise ParseError(f"{where}: malformed date {value!r}") from e


def calendar_from_record(record: dict, *, source: str = "calendar") -> HolidayCalendar:
    entries: Sequence[dict] = record.get("holidays", [])
    holidays = []
    for i, item in enumerate(entries):
        where = f"{source} holiday #{i + 1}"
        try:
            holidays.append(
                HolidaySpec(
                    name=str(item["name"]),
                    start_date=_parse_date(item["start_date"], where),
                    length_days=int(item["length_days"]),
                    excluded=bool(item.get("excluded", False)),
                )
            )
        except KeyError as e:
            raise ParseError(f"{where}: missing field {e}") from e
    coverage = record.get("coverage") or {}
    return HolidayCalendar(
        holidays,
        coverage_start=_parse_date(coverage["start"], source) if "start" in coverage else None,
        coverage_end=_parse_date(coverage["end"], source) if "end" in coverage else None,
    )


def load_calendar(path: str) -> HolidayCalendar:
    if not os.path.exists(path):
        raise ValidationError(f"holiday calendar not found: {path}")
    with open(path, "r", encoding="utf-8") as f:
        try:
            record = json5.load(f)
        except ValueError as e:
            raise ParseError(f"{path}: {e}") from e
    calendar = calendar_from_record(record, source=path)
    logger().info(
        f"load_calendar. {len(calendar)} holidays covering "
        f"{calendar.coverage_start} .. {calendar.coverage_end}"
    )
    return calendar


def write_calendar(calendar: HolidayCalendar, path: str) -> str:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(calendar.to_record(), f, indent=4)
        f.write("\n")
    return path
