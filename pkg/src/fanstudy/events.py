"""Event windows, CAR / CAV accumulation and cross-event aggregation.

Two event shapes share one engine:

* :class:`MatchEvent` - one football match at minute frequency, with
  windows from pre-match through post-match anchored on kickoff and the
  actual full-time instant.
* :class:`DailyEvent` - one token around a tournament start date at daily
  frequency, with windows given as inclusive day offsets.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    AllZeros,
    DegenerateRegressor,
    EmptyInput,
    InsufficientCoverage,
    InvalidEvent,
    SpanNotCovered,
    TooFewObservations,
    ZeroVariance,
)
from .inference import boehmer_test, positive_share, standardize_car, t_test_cross_sectional, wilcoxon_signed_rank
from .models import EstimationWindow, ModelKind, abnormal_series, fit_model
from .timeseries import FREQUENCIES, format_instant, log_returns, log_volume, to_instant

__all__ = [
    "STAGES",
    "OUTCOMES",
    "MATCH_WINDOWS",
    "DAILY_WINDOWS",
    "MatchEvent",
    "DailyEvent",
    "EventWindow",
    "WindowConfig",
    "EventOutcomeRow",
    "ChannelStats",
    "StudyRow",
    "StudyTable",
    "CaarResult",
    "Dataset",
    "resolve_windows",
    "car",
    "cav",
    "caar",
    "run_event_study",
    "load_matches",
    "parse_matches",
    "dump_matches",
    "daily_events",
]

STAGES = ("group1", "group2", "group3", "round_of_16", "quarter_final", "semi_final", "final")
GROUP_STAGES = frozenset(STAGES[:3])
OUTCOMES = ("victory", "draw", "defeat")
MATCH_WINDOWS = (
    "pre_match",
    "first_half",
    "half_time",
    "second_half",
    "regular_match",
    "full_match",
    "post_match",
)
DAILY_WINDOWS = ((-120, -1), (-60, -1), (-30, -1), (0, 26), (27, 56))

MINUTE = np.timedelta64(60, "s")


def _id_key(event_id):
    return (0, int(event_id), "") if str(event_id).isdigit() else (1, 0, str(event_id))


@dataclass(frozen=True)
class MatchEvent:
    """One match from the fan-token team's side.

    ``second_half_end`` is the end of the regulation second half; it equals
    ``full_time_end`` unless the match went to extra time. ``penalty_score``
    is ``(for, against)`` for shoot-outs.
    """

    event_id: str
    token_id: str
    opponent: str
    stage: str
    kickoff: np.datetime64
    first_half_end: np.datetime64
    second_half_start: np.datetime64
    full_time_end: np.datetime64
    went_to_penalties: bool = False
    score_for: int = 0
    score_against: int = 0
    outcome: str = "draw"
    second_half_end: np.datetime64 | None = None
    penalty_score: tuple | None = None

    def __post_init__(self):
        object.__setattr__(self, "event_id", str(self.event_id))
        for name in ("kickoff", "first_half_end", "second_half_start", "full_time_end"):
            object.__setattr__(self, name, to_instant(getattr(self, name)))
        end = self.full_time_end if self.second_half_end is None else to_instant(self.second_half_end)
        object.__setattr__(self, "second_half_end", end)
        if self.stage not in STAGES:
            raise InvalidEvent(f"event {self.event_id}: unknown stage {self.stage!r}")
        if self.outcome not in OUTCOMES:
            raise InvalidEvent(f"event {self.event_id}: unknown outcome {self.outcome!r}")
        if not (self.kickoff < self.first_half_end < self.second_half_start < self.second_half_end <= self.full_time_end):
            raise InvalidEvent(f"event {self.event_id}: segment boundaries out of order")
        if self.went_to_penalties:
            if self.score_for != self.score_against or self.outcome == "draw":
                raise InvalidEvent(f"event {self.event_id}: a shoot-out needs a level score and a decisive outcome")
            if self.penalty_score is not None:
                pf, pa = self.penalty_score
                if pf == pa or (pf > pa) != (self.outcome == "victory"):
                    raise InvalidEvent(f"event {self.event_id}: penalty score contradicts outcome")
        else:
            expected = (
                "victory" if self.score_for > self.score_against
                else "defeat" if self.score_for < self.score_against
                else "draw"
            )
            if expected != self.outcome:
                raise InvalidEvent(f"event {self.event_id}: outcome {self.outcome} contradicts score")

    @property
    def anchor(self):
        return self.kickoff

    @property
    def knockout(self):
        return self.stage not in GROUP_STAGES

    @property
    def high_stake(self):
        return self.knockout

    def span(self, config=None):
        config = config or WindowConfig()
        return (
            self.kickoff - config.pre_minutes * MINUTE,
            self.full_time_end + config.post_minutes * MINUTE,
        )


@dataclass(frozen=True)
class DailyEvent:
    """A token observed around a common anchor day (e.g. tournament start)."""

    event_id: str
    token_id: str
    anchor: np.datetime64
    windows: tuple = DAILY_WINDOWS

    def __post_init__(self):
        object.__setattr__(self, "event_id", str(self.event_id))
        object.__setattr__(self, "anchor", to_instant(self.anchor))
        object.__setattr__(self, "windows", tuple((int(a), int(b)) for a, b in self.windows))
        for a, b in self.windows:
            if a > b:
                raise InvalidEvent(f"daily window {a}..{b} is empty")

    def span(self, config=None):
        day = FREQUENCIES["day"]
        first = min(a for a, _ in self.windows)
        last = max(b for _, b in self.windows)
        return self.anchor + first * day, self.anchor + (last + 1) * day


def daily_events(token_ids, anchor, windows=DAILY_WINDOWS):
    return [DailyEvent(t, t, anchor, windows) for t in token_ids]


@dataclass(frozen=True)
class WindowConfig:
    pre_minutes: int = 60
    post_minutes: int = 60
    regular_includes_half_time: bool = True


@dataclass(frozen=True)
class EventWindow:
    """Half-open ``[start, end)`` window, minus any ``exclude`` sub-spans."""

    label: str
    start: np.datetime64
    end: np.datetime64
    exclude: tuple = ()

    def __post_init__(self):
        if not self.start < self.end:
            raise InvalidEvent(f"window {self.label}: start must precede end")

    def mask(self, timestamps):
        m = (timestamps >= self.start) & (timestamps < self.end)
        for a, b in self.exclude:
            m &= ~((timestamps >= a) & (timestamps < b))
        return m

    def n_bars(self, step):
        total = (self.end - self.start) // step
        return int(total - sum((b - a) // step for a, b in self.exclude))


def resolve_windows(event, config: WindowConfig | None = None):
    """Event windows in reporting order.

    Daily events yield one window per ``(first_day, last_day)`` pair, labelled
    ``"a to b"``.
    """
    if isinstance(event, DailyEvent):
        day = FREQUENCIES["day"]
        return [
            EventWindow(f"{a} to {b}", event.anchor + a * day, event.anchor + (b + 1) * day)
            for a, b in event.windows
        ]
    config = config or WindowConfig()
    k, lam = event.kickoff, event.full_time_end
    reg_end = min(lam, event.second_half_end)
    half_time = (event.first_half_end, event.second_half_start)
    return [
        EventWindow("pre_match", k - config.pre_minutes * MINUTE, k),
        EventWindow("first_half", k, event.first_half_end),
        EventWindow("half_time", *half_time),
        EventWindow("second_half", event.second_half_start, reg_end),
        EventWindow("regular_match", k, reg_end, () if config.regular_includes_half_time else (half_time,)),
        EventWindow("full_match", k, lam),
        EventWindow("post_match", lam, lam + config.post_minutes * MINUTE),
    ]


def _accumulate(abnormal, window, values):
    ts = abnormal.timestamps
    step = ts[1] - ts[0] if len(ts) > 1 else None
    if len(ts) == 0 or window.start < ts[0] or (step is not None and window.end > ts[-1] + step):
        raise SpanNotCovered(
            f"event {abnormal.event_id}: window {window.label} "
            f"[{format_instant(window.start)}, {format_instant(window.end)}) outside abnormal series"
        )
    return float(np.sum(values[window.mask(ts)]))


def car(abnormal, window: EventWindow) -> float:
    """Sum of abnormal returns stamped in the window (percent-log)."""
    return _accumulate(abnormal, window, abnormal.abnormal_return)


def cav(abnormal, window: EventWindow) -> float:
    """Sum of abnormal log-volumes stamped in the window."""
    return _accumulate(abnormal, window, abnormal.abnormal_log_volume)


@dataclass(frozen=True)
class CaarResult:
    caar: float
    se: float
    n: int
    degenerate: bool


def caar(cars) -> CaarResult:
    """Cross-event mean with standard error ``sd / sqrt(N)``.

    A single event gives an undefined SE (NaN) and is flagged degenerate.
    """
    values = np.asarray(cars, dtype=float).ravel()
    if values.size == 0:
        raise EmptyInput("no CARs to aggregate")
    mean = float(np.mean(values))
    if values.size == 1:
        return CaarResult(mean, math.nan, 1, True)
    if np.all(values == values[0]):
        return CaarResult(float(values[0]), 0.0, values.size, False)
    return CaarResult(mean, float(np.std(values, ddof=1)) / math.sqrt(values.size), values.size, False)


@dataclass(frozen=True)
class EventOutcomeRow:
    event_id: str
    token_id: str
    window: str
    car: float
    cav: float
    n_bars: int
    scar: float = math.nan
    scav: float = math.nan


@dataclass(frozen=True)
class ChannelStats:
    mean: float
    se: float
    t_stat: float
    t_p: float
    z_stat: float
    z_p: float
    pos_share: float
    boehmer_stat: float
    boehmer_p: float
    n: int


@dataclass(frozen=True)
class StudyRow:
    window: str
    model: str
    returns: ChannelStats
    volume: ChannelStats

    @property
    def caar(self):
        return self.returns.mean

    @property
    def caar_se(self):
        return self.returns.se

    @property
    def t_stat(self):
        return self.returns.t_stat

    @property
    def z_stat(self):
        return self.returns.z_stat

    @property
    def pos_share(self):
        return self.returns.pos_share

    @property
    def cav_mean(self):
        return self.volume.mean

    @property
    def cav_se(self):
        return self.volume.se


@dataclass
class StudyTable:
    frequency: str
    model: str
    rows: list
    outcomes: list = field(default_factory=list)
    excluded: list = field(default_factory=list)

    def row(self, window):
        for r in self.rows:
            if r.window == window:
                return r
        raise KeyError(window)

    def outcome(self, event_id, window):
        for o in self.outcomes:
            if o.event_id == str(event_id) and o.window == window:
                return o
        raise KeyError((event_id, window))


@dataclass
class Dataset:
    """Regularized bars keyed by asset id, plus the events to study."""

    bars: dict
    events: list
    odds: dict = field(default_factory=dict)
    _cache: dict = field(default_factory=dict, init=False, repr=False)

    def returns(self, asset_id):
        key = ("r", asset_id)
        if key not in self._cache:
            self._cache[key] = log_returns(self.bars[asset_id])
        return self._cache[key]

    def volumes(self, asset_id, shift=1.0):
        key = ("v", asset_id, shift)
        if key not in self._cache:
            self._cache[key] = log_volume(self.bars[asset_id], shift)
        return self._cache[key]


def _safe(test, values):
    try:
        res = test(values)
    except (ZeroVariance, TooFewObservations, AllZeros, EmptyInput):
        return math.nan, math.nan
    return res.statistic, res.p_value


def _channel(values, standardized):
    agg = caar(values)
    t, tp = _safe(t_test_cross_sectional, values)
    z, zp = _safe(wilcoxon_signed_rank, values)
    std = [s for s in standardized if math.isfinite(s)]
    b, bp = _safe(boehmer_test, std) if len(std) == len(standardized) else (math.nan, math.nan)
    return ChannelStats(agg.caar, agg.se, t, tp, z, zp, positive_share(values), b, bp, agg.n)


def _event_outcomes(event, dataset, kind, estimation, config, shift):
    token = event.token_id
    if token not in dataset.bars:
        raise InsufficientCoverage(f"no bars for token {token}")
    r, v = dataset.returns(token), dataset.volumes(token, shift)
    ref_r = ref_v = None
    if kind.is_market:
        ref_r, ref_v = dataset.returns(kind.reference), dataset.volumes(kind.reference, shift)
    fit_r = fit_model(r, ref_r, estimation, event.anchor, kind)
    fit_v = fit_model(v, ref_v, estimation, event.anchor, kind)
    ab = abnormal_series(event, r, v, fit_r, fit_v, ref_r, ref_v, span=event.span(config))
    step = FREQUENCIES[r.frequency]
    rows = []
    for w in resolve_windows(event, config):
        m = w.mask(ab.timestamps)
        L = w.n_bars(step)
        c_r, c_v = car(ab, w), cav(ab, w)
        dev_r = dev_v = None
        if kind.is_market:
            dev_r = float(np.sum(ab.reference_return[m] - fit_r.reference_mean))
            dev_v = float(np.sum(ab.reference_log_volume[m] - fit_v.reference_mean))
        s_r = standardize_car(c_r, fit_r.residual_stddev, L, fit_r.n_obs, dev_r, fit_r.reference_ssd)
        s_v = standardize_car(c_v, fit_v.residual_stddev, L, fit_v.n_obs, dev_v, fit_v.reference_ssd)
        rows.append(EventOutcomeRow(event.event_id, token, w.label, c_r, c_v, L, s_r, s_v))
    return rows


def run_event_study(
    dataset: Dataset,
    model_kind: ModelKind,
    frequency: str = "minute",
    window_spec: WindowConfig | None = None,
    estimation: EstimationWindow | None = None,
    volume_shift: float = 1.0,
    jobs: int = 1,
) -> StudyTable:
    """Per-event CAR/CAV for every window, aggregated across events.

    Events that cannot be fitted (coverage, degenerate regressor, span not
    covered) are listed in ``StudyTable.excluded`` with the reason. Rows come
    out in window order; aggregation folds events in event-id order.
    """
    if estimation is None:
        estimation = EstimationWindow() if frequency == "minute" else EstimationWindow.daily()
    config = window_spec or WindowConfig()
    if model_kind.is_market and model_kind.reference not in dataset.bars:
        raise KeyError(f"reference series {model_kind.reference!r} missing from dataset")
    for asset, series in dataset.bars.items():
        if series.frequency != frequency:
            raise ValueError(f"{asset} bars are {series.frequency}, study is {frequency}")

    events = sorted(dataset.events, key=lambda e: _id_key(e.event_id))

    def work(event):
        try:
            return _event_outcomes(event, dataset, model_kind, estimation, config, volume_shift), None
        except (InsufficientCoverage, DegenerateRegressor, SpanNotCovered) as exc:
            return None, f"{type(exc).__name__}: {exc}"

    if jobs > 1:
        # warm the shared cache so worker threads only read it
        for asset in {e.token_id for e in events} | ({model_kind.reference} if model_kind.is_market else set()):
            if asset in dataset.bars:
                dataset.returns(asset)
                dataset.volumes(asset, volume_shift)
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(work, events))
    else:
        results = [work(e) for e in events]

    outcomes, excluded = [], []
    for event, (rows, reason) in zip(events, results):
        if rows is None:
            excluded.append((event.event_id, reason))
        else:
            outcomes.extend(rows)
    if not outcomes:
        raise EmptyInput("every event was excluded: " + "; ".join(r for _, r in excluded))

    labels = list(dict.fromkeys(o.window for o in outcomes))
    rows = []
    for label in labels:
        sel = [o for o in outcomes if o.window == label]
        rows.append(
            StudyRow(
                label,
                str(model_kind),
                _channel([o.car for o in sel], [o.scar for o in sel]),
                _channel([o.cav for o in sel], [o.scav for o in sel]),
            )
        )
    return StudyTable(frequency, str(model_kind), rows, outcomes, excluded)


def _penalties_field(obj):
    pen = obj.get("penalties", False)
    if isinstance(pen, (list, tuple)):
        return True, (int(pen[0]), int(pen[1]))
    return bool(pen), None


def parse_matches(doc):
    """Build :class:`MatchEvent` objects from the schedule JSON array.

    ``penalties`` is ``false``/``true`` or a ``[for, against]`` shoot-out
    score. ``second_half_end_utc`` is optional (defaults to full time).
    """
    if isinstance(doc, str):
        doc = json.loads(doc)
    events = []
    for obj in doc:
        went, pen_score = _penalties_field(obj)
        events.append(
            MatchEvent(
                event_id=str(obj["event_id"]),
                token_id=obj["token_id"],
                opponent=obj["opponent"],
                stage=obj["stage"],
                kickoff=obj["kickoff_utc"],
                first_half_end=obj["first_half_end_utc"],
                second_half_start=obj["second_half_start_utc"],
                full_time_end=obj["full_time_end_utc"],
                went_to_penalties=went,
                score_for=int(obj["score_for"]),
                score_against=int(obj["score_against"]),
                outcome=obj["outcome"],
                second_half_end=obj.get("second_half_end_utc"),
                penalty_score=pen_score,
            )
        )
    return events


def load_matches(path):
    return parse_matches(json.loads(Path(path).read_text(encoding="utf-8")))


def dump_matches(events):
    """Serialize events to the schedule JSON text (stable key order)."""
    out = []
    for e in events:
        obj = {
            "event_id": e.event_id,
            "token_id": e.token_id,
            "opponent": e.opponent,
            "stage": e.stage,
            "kickoff_utc": format_instant(e.kickoff),
            "first_half_end_utc": format_instant(e.first_half_end),
            "second_half_start_utc": format_instant(e.second_half_start),
            "full_time_end_utc": format_instant(e.full_time_end),
            "penalties": list(e.penalty_score) if e.penalty_score else e.went_to_penalties,
            "score_for": e.score_for,
            "score_against": e.score_against,
            "outcome": e.outcome,
        }
        if e.second_half_end != e.full_time_end:
            obj["second_half_end_utc"] = format_instant(e.second_half_end)
        out.append(obj)
    return json.dumps(out, indent=2) + "\n"
