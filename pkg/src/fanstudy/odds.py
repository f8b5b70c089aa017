"""Decimal betting odds: margin removal, ex-ante expectations, surprises."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

from .errors import InvalidOdds, ParseError

__all__ = [
    "OddsTriple",
    "ProbabilityTriple",
    "ExpectationLabel",
    "devig",
    "classify_expectation",
    "surprise_flag",
    "parse_odds_csv",
    "read_odds_csv",
    "EXPECTED_VICTORY",
    "EXPECTED_DEFEAT",
    "NO_EXPECTATION",
]

EXPECTED_VICTORY = "expected_victory"
EXPECTED_DEFEAT = "expected_defeat"
NO_EXPECTATION = "no_expectation"

ODDS_HEADER = ["event_id", "odds_win", "odds_draw", "odds_loss"]


@dataclass(frozen=True)
class OddsTriple:
    """Decimal odds from the perspective of the fan-token team."""

    odds_win: float
    odds_draw: float
    odds_loss: float

    def __post_init__(self):
        for name in ("odds_win", "odds_draw", "odds_loss"):
            value = getattr(self, name)
            if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 1.0):
                raise InvalidOdds(f"{name} must be finite decimal odds > 1.0, got {value!r}")


@dataclass(frozen=True)
class ProbabilityTriple:
    p_win: float
    p_draw: float
    p_loss: float
    overround: float = 0.0


@dataclass(frozen=True)
class ExpectationLabel:
    label: str
    margin: float  # percentage points, p_win - p_loss


def devig(odds: OddsTriple) -> ProbabilityTriple:
    """Proportional margin removal: each implied probability over their sum."""
    raw = (1.0 / odds.odds_win, 1.0 / odds.odds_draw, 1.0 / odds.odds_loss)
    book = math.fsum(raw)
    return ProbabilityTriple(raw[0] / book, raw[1] / book, raw[2] / book, book - 1.0)


def classify_expectation(probs: ProbabilityTriple, threshold: float = 30.0) -> ExpectationLabel:
    margin = (probs.p_win - probs.p_loss) * 100.0
    if margin > threshold:
        return ExpectationLabel(EXPECTED_VICTORY, margin)
    if margin < -threshold:
        return ExpectationLabel(EXPECTED_DEFEAT, margin)
    return ExpectationLabel(NO_EXPECTATION, margin)


def surprise_flag(expectation: ExpectationLabel, actual: str) -> bool:
    """True when the result contradicts the favoured side; draws never count."""
    label = expectation.label if isinstance(expectation, ExpectationLabel) else expectation
    return (label == EXPECTED_VICTORY and actual == "defeat") or (
        label == EXPECTED_DEFEAT and actual == "victory"
    )


def parse_odds_csv(text: str):
    """Parse an odds CSV into ``{event_id: (OddsTriple, provenance)}``.

    An optional trailing ``provenance`` column is carried through; rows
    without it get an empty string.
    """
    reader = csv.reader(io.StringIO(text))
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise ParseError(1, "empty document") from None
    if header not in (ODDS_HEADER, ODDS_HEADER + ["provenance"]):
        raise ParseError(1, f"unexpected odds header {','.join(header)!r}")
    out = {}
    for line_no, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != len(header):
            raise ParseError(line_no, f"expected {len(header)} fields, got {len(row)}")
        try:
            triple = OddsTriple(float(row[1]), float(row[2]), float(row[3]))
        except ValueError as exc:
            if isinstance(exc, InvalidOdds):
                raise
            raise ParseError(line_no, str(exc)) from None
        event_id = row[0].strip()
        if event_id in out:
            raise ParseError(line_no, f"duplicate event_id {event_id}")
        out[event_id] = (triple, row[4].strip() if len(row) > 4 else "")
    return out


def read_odds_csv(path):
    from pathlib import Path

    return parse_odds_csv(Path(path).read_text(encoding="utf-8"))
