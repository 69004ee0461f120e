"""Pollutant concentration -> AQI -> grade mapping with colors and advice.

The breakpoint table ships as a versioned data file (EPA Technical Assistance
Document values) so revisions swap cleanly. The label space is the five
grades Good .. Very Unhealthy; AQI above 200 clamps into Very Unhealthy.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from importlib import resources

_DEFAULT_TABLE_RESOURCE = "aqi_breakpoints.txt"


class AqiError(Exception):
    """Base class for AQI computation failures."""


class UnknownPollutant(AqiError):
    pass


class NegativeConcentration(AqiError):
    pass


class AqiGrade(enum.Enum):
    """The five air-quality grades, ordered by severity."""

    GOOD = 0
    MODERATE = 1
    UNHEALTHY_SENSITIVE = 2
    UNHEALTHY = 3
    VERY_UNHEALTHY = 4

    @property
    def severity(self) -> int:
        return self.value

    @property
    def label(self) -> str:
        return _LABELS[self]

    @property
    def color(self) -> str:
        return _COLORS[self]

    @property
    def advice(self) -> str:
        return _ADVICE[self]

    @property
    def aqi_band(self) -> tuple[int, int | None]:
        """Inclusive AQI band; the top band is open-ended (hi is None)."""
        return _BANDS[self]

    @classmethod
    def from_label(cls, label: str) -> "AqiGrade":
        try:
            return _LABEL_TO_GRADE[label]
        except KeyError:
            raise ValueError(f"unknown grade label: {label!r}") from None


GRADES = tuple(AqiGrade)

_LABELS = {
    AqiGrade.GOOD: "Good",
    AqiGrade.MODERATE: "Moderate",
    AqiGrade.UNHEALTHY_SENSITIVE: "Unhealthy for Sensitive Groups",
    AqiGrade.UNHEALTHY: "Unhealthy",
    AqiGrade.VERY_UNHEALTHY: "Very Unhealthy",
}
_LABEL_TO_GRADE = {label: grade for grade, label in _LABELS.items()}

_COLORS = {
    AqiGrade.GOOD: "#00E400",
    AqiGrade.MODERATE: "#FFFF00",
    AqiGrade.UNHEALTHY_SENSITIVE: "#FF7E00",
    AqiGrade.UNHEALTHY: "#FF0000",
    AqiGrade.VERY_UNHEALTHY: "#8F3F97",
}

_ADVICE = {
    AqiGrade.GOOD: "Air quality is satisfactory; enjoy normal outdoor activities.",
    AqiGrade.MODERATE: (
        "Air quality is acceptable; unusually sensitive people should consider "
        "reducing prolonged outdoor exertion."
    ),
    AqiGrade.UNHEALTHY_SENSITIVE: (
        "Members of sensitive groups may experience health effects; sensitive "
        "groups should limit prolonged outdoor exertion."
    ),
    AqiGrade.UNHEALTHY: (
        "Everyone may begin to experience health effects; limit prolonged "
        "outdoor exertion and consider moving activities indoors."
    ),
    AqiGrade.VERY_UNHEALTHY: (
        "Health alert: everyone may experience serious health effects; avoid "
        "outdoor exertion and stay indoors with filtered air if possible."
    ),
}

_BANDS = {
    AqiGrade.GOOD: (0, 50),
    AqiGrade.MODERATE: (51, 100),
    AqiGrade.UNHEALTHY_SENSITIVE: (101, 150),
    AqiGrade.UNHEALTHY: (151, 200),
    AqiGrade.VERY_UNHEALTHY: (201, None),
}

POLLUTANTS = ("pm25", "pm10", "o3", "co", "no2")


@dataclass(frozen=True)
class PollutantRecord:
    """Ready-to-index concentrations; averaging periods applied upstream."""

    pm25: float | None = None
    pm10: float | None = None
    o3: float | None = None
    co: float | None = None
    no2: float | None = None

    def __post_init__(self):
        present = self.items()
        if not present:
            raise ValueError("at least one pollutant must be present")
        for name, value in present:
            if not math.isfinite(value):
                raise ValueError(f"{name} must be finite")
            if value < 0:
                raise NegativeConcentration(f"{name} concentration is negative")

    def items(self) -> list[tuple[str, float]]:
        return [
            (name, float(getattr(self, name)))
            for name in POLLUTANTS
            if getattr(self, name) is not None
        ]


@dataclass(frozen=True)
class BreakpointRow:
    conc_lo: float
    conc_hi: float
    aqi_lo: float
    aqi_hi: float


@dataclass(frozen=True)
class BreakpointTable:
    """Per-pollutant breakpoint rows plus the truncation precision applied to
    incoming concentrations before lookup."""

    version: str
    rows: dict[str, tuple[BreakpointRow, ...]]
    decimals: dict[str, int]

    def __post_init__(self):
        for pollutant, rows in self.rows.items():
            step = 10.0 ** -self.decimals.get(pollutant, 0)
            prev = None
            for row in rows:
                if row.conc_lo > row.conc_hi or row.aqi_lo > row.aqi_hi:
                    raise ValueError(f"inverted breakpoint row for {pollutant}: {row}")
                if prev is not None and not (
                    prev.conc_hi < row.conc_lo <= prev.conc_hi + step * 1.5
                ):
                    raise ValueError(
                        f"rows for {pollutant} must be ascending and contiguous"
                    )
                prev = row

    @classmethod
    def parse(cls, text: str) -> "BreakpointTable":
        version = "unversioned"
        rows: dict[str, list[BreakpointRow]] = {}
        decimals: dict[str, int] = {}
        for raw in text.splitlines():
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            fields = line.split()
            if fields[0] == "version":
                version = fields[1]
            elif fields[0] == "decimals":
                decimals[fields[1]] = int(fields[2])
            elif fields[0] == "row":
                rows.setdefault(fields[1], []).append(
                    BreakpointRow(*(float(v) for v in fields[2:6]))
                )
            else:
                raise ValueError(f"unrecognized breakpoint line: {raw!r}")
        return cls(version, {k: tuple(v) for k, v in rows.items()}, decimals)

    @classmethod
    def load(cls, path) -> "BreakpointTable":
        with open(path, encoding="utf-8") as fh:
            return cls.parse(fh.read())


_default_table: BreakpointTable | None = None


def default_table() -> BreakpointTable:
    global _default_table
    if _default_table is None:
        text = (
            resources.files("skycast.data")
            .joinpath(_DEFAULT_TABLE_RESOURCE)
            .read_text(encoding="utf-8")
        )
        _default_table = BreakpointTable.parse(text)
    return _default_table


def _truncate(value: float, decimals: int) -> float:
    scale = 10.0**decimals
    return math.floor(value * scale + 1e-9) / scale


def sub_index(pollutant: str, conc: float, table: BreakpointTable | None = None) -> float:
    """EPA linear interpolation of one pollutant's AQI contribution.

    Concentrations are truncated to the table's precision first;
    concentrations above the top row clamp to the top row's aqi_hi.
    """
    table = table or default_table()
    if pollutant not in table.rows:
        raise UnknownPollutant(f"no breakpoints for pollutant {pollutant!r}")
    if conc < 0:
        raise NegativeConcentration(f"{pollutant} concentration is negative")
    t = _truncate(conc, table.decimals.get(pollutant, 0))
    rows = table.rows[pollutant]
    for row in rows:
        if t <= row.conc_hi:
            if t < row.conc_lo:  # truncation landed in an inter-row gap
                return float(row.aqi_lo)
            span = row.conc_hi - row.conc_lo
            if span == 0:
                return float(row.aqi_lo)
            return row.aqi_lo + (row.aqi_hi - row.aqi_lo) * (t - row.conc_lo) / span
    return float(rows[-1].aqi_hi)


def composite_aqi(rec: PollutantRecord, table: BreakpointTable | None = None) -> float:
    """Maximum sub-index over the pollutants present in the record."""
    return max(sub_index(name, value, table) for name, value in rec.items())


def grade_of_aqi(aqi: float) -> AqiGrade:
    """Band an AQI value into the five grades (rounded half-up first).

    Values above 200 clamp into Very Unhealthy to match the 5-grade label
    space.
    """
    if aqi < 0:
        raise ValueError("AQI must be >= 0")
    n = math.floor(aqi + 0.5)
    if n <= 50:
        return AqiGrade.GOOD
    if n <= 100:
        return AqiGrade.MODERATE
    if n <= 150:
        return AqiGrade.UNHEALTHY_SENSITIVE
    if n <= 200:
        return AqiGrade.UNHEALTHY
    return AqiGrade.VERY_UNHEALTHY


@dataclass(frozen=True)
class Recommendation:
    grade: AqiGrade
    color: str
    advice: str


def recommendation_of_grade(grade: AqiGrade) -> Recommendation:
    """EPA color code plus a short health recommendation for a grade."""
    return Recommendation(grade=grade, color=grade.color, advice=grade.advice)
