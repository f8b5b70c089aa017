"""Seeded synthetic tournaments for end-to-end oracle checks.

Token returns follow ``R_i = alpha + beta * R_m + noise`` against the first
reference asset, plus per-bar shocks scheduled by event-window label. Log
volumes follow the same form on ``ln(volume + 1)``. With zero noise and no
shocks every expectation model is exact as long as ``beta = 0``: the
constant-mean model is then correct by construction, and market models
recover a zero slope against any varying reference.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .events import DAILY_WINDOWS, Dataset, MatchEvent, daily_events, dump_matches, resolve_windows
from .timeseries import FREQUENCIES, BarSeries, emit_bar_csv, to_instant

__all__ = ["SyntheticSpec", "SyntheticData", "build_synthetic", "generate_synthetic"]

MINUTE = FREQUENCIES["minute"]
DAY = FREQUENCIES["day"]


@dataclass(frozen=True)
class SyntheticSpec:
    n_events: int = 21
    tokens: tuple = ("ARG", "BFT", "POR", "SNFT")
    references: tuple = ("BTC", "CHZ")
    alpha: float = 0.001  # percent-log per bar
    beta: float = 0.0
    volume_alpha: float = 4.0
    volume_beta: float = 0.0
    noise: float = 0.0
    volume_noise: float = 0.0
    shocks: dict = field(default_factory=dict)  # window label -> return shock per bar
    volume_shocks: dict = field(default_factory=dict)
    gap_rate: float = 0.0
    start: str = "2022-11-20T00:00:00Z"
    daily: bool = True
    daily_alpha: float = 0.05
    daily_beta: float = 0.0
    daily_noise: float = 0.0
    daily_shock: float = 0.0  # abnormal return per day over the daily event span
    seed: int = 0

    def __post_init__(self):
        if self.n_events < 1:
            raise ValueError("n_events must be positive")
        if not 0.0 <= self.gap_rate < 0.5:
            raise ValueError("gap_rate must be in [0, 0.5)")
        object.__setattr__(self, "tokens", tuple(self.tokens))
        object.__setattr__(self, "references", tuple(self.references))


@dataclass
class SyntheticData:
    spec: SyntheticSpec
    minute: Dataset
    daily: Dataset | None
    odds: dict


_STAGE_PLAN = ("group1", "group2", "group3")


def _stage(k, n):
    # group rounds for the first ~57% of events, knockouts after
    n_group = max(1, round(n * 12 / 21))
    if k < n_group:
        return _STAGE_PLAN[min(2, k * 3 // n_group)]
    rest = n - n_group
    j = k - n_group
    knockout = ("round_of_16", "quarter_final", "semi_final", "final")
    if rest <= 1:
        return "final"
    return knockout[min(3, j * 4 // rest)] if j < rest - 1 else "final"


def _schedule(spec, rng):
    start = to_instant(spec.start)
    events = []
    for k in range(spec.n_events):
        token = spec.tokens[k % len(spec.tokens)]
        stage = _stage(k, spec.n_events)
        hour = (15, 19)[k % 2]
        kickoff = start + np.timedelta64(k + 2, "D").astype("timedelta64[s]") + hour * 60 * MINUTE
        fh_end = kickoff + int(45 + rng.integers(1, 8)) * MINUTE
        sh_start = fh_end + int(15 + rng.integers(0, 3)) * MINUTE
        sh_end = sh_start + int(45 + rng.integers(2, 11)) * MINUTE
        # outcomes cycle so every stage mixes results and all designs are estimable
        group = stage in _STAGE_PLAN
        outcome = ("victory", "defeat", "draw")[k % 3] if group else ("defeat", "victory", "draw")[k % 3]
        goals = int(rng.integers(0, 4))
        extra = not group and outcome == "draw"
        penalties = None
        if extra:
            # knockout draws go to extra time and a shoot-out
            outcome = ("victory", "defeat")[k % 2]
            lam = sh_end + (35 + int(rng.integers(2, 8))) * MINUTE + 12 * MINUTE
            penalties = (4, 2) if outcome == "victory" else (2, 4)
            score = (goals, goals)
        else:
            lam = sh_end
            other = int(rng.integers(0, 3))
            score = {"victory": (other + 1, other), "draw": (other, other), "defeat": (other, other + 1)}[outcome]
        events.append(
            MatchEvent(
                str(k + 1), token, f"Opponent {k + 1}", stage, kickoff, fh_end, sh_start, lam,
                went_to_penalties=penalties is not None, score_for=score[0], score_against=score[1],
                outcome=outcome, second_half_end=sh_end, penalty_score=penalties,
            )
        )
    return events


def _odds(events, rng):
    out = {}
    for e in events:
        # fair probabilities with a 5% margin; the favourite varies by match
        p_win = 0.08 + 0.67 * float(rng.random())
        p_draw = 0.22
        probs = (p_win, p_draw, 1.0 - p_win - p_draw)
        out[e.event_id] = tuple(round(1.0 / (p * 1.05), 2) for p in probs)
    return out


def _prices(returns, p0):
    return p0 * np.exp(np.concatenate([[0.0], np.cumsum(returns)]) / 100.0)


def _series(asset, freq, ts, returns, logvol, p0, gap_mask=None):
    close = _prices(returns, p0)
    volume = np.maximum(np.exp(logvol) - 1.0, 0.0)
    if gap_mask is not None:
        keep = ~gap_mask
        return BarSeries(asset, freq, ts[keep], close[keep], volume[keep])
    return BarSeries(asset, freq, ts, close, volume)


def _minute_bars(spec, events, rng):
    first = min(e.kickoff for e in events) - 1600 * MINUTE
    last = max(e.full_time_end for e in events) + 120 * MINUTE
    ts = np.arange(first, last + MINUTE, MINUTE).astype("datetime64[s]")
    n = len(ts)
    ret_ts = ts[1:]

    ref_r = {ref: rng.normal(0.0, 0.1, n - 1) for ref in spec.references}
    ref_v = {ref: 6.0 + 0.5 * rng.standard_normal(n) for ref in spec.references}
    market_r = ref_r[spec.references[0]]
    market_v = ref_v[spec.references[0]]

    bars = {}
    for i, ref in enumerate(spec.references):
        bars[ref] = _series(ref, "minute", ts, ref_r[ref], ref_v[ref], 100.0 * (i + 1))

    for j, token in enumerate(spec.tokens):
        r = spec.alpha + spec.beta * market_r
        v = spec.volume_alpha + spec.volume_beta * market_v
        if spec.noise:
            r = r + rng.normal(0.0, spec.noise, n - 1)
        if spec.volume_noise:
            v = v + rng.normal(0.0, spec.volume_noise, n)
        r = np.array(r, float)
        v = np.array(v, float)
        for e in (e for e in events if e.token_id == token):
            for w in resolve_windows(e):
                if w.label in spec.shocks:
                    r[w.mask(ret_ts)] += spec.shocks[w.label]
                if w.label in spec.volume_shocks:
                    v[w.mask(ts)] += spec.volume_shocks[w.label]
        gaps = None
        if spec.gap_rate:
            gaps = rng.random(n) < spec.gap_rate
            gaps[0] = False
        bars[token] = _series(token, "minute", ts, r, v, 1.0 + j, gaps)
    return bars


def _daily_bars(spec, rng):
    anchor = to_instant(spec.start)
    first = anchor - 340 * DAY
    last = anchor + 60 * DAY
    ts = np.arange(first, last + DAY, DAY).astype("datetime64[s]")
    n = len(ts)
    ret_ts = ts[1:]
    lo = anchor + min(a for a, _ in DAILY_WINDOWS) * DAY
    hi = anchor + (max(b for _, b in DAILY_WINDOWS) + 1) * DAY
    in_span = (ret_ts >= lo) & (ret_ts < hi)

    ref_r = {ref: rng.normal(0.0, 2.0, n - 1) for ref in spec.references}
    ref_v = {ref: 15.0 + 0.3 * rng.standard_normal(n) for ref in spec.references}
    bars = {ref: _series(ref, "day", ts, ref_r[ref], ref_v[ref], 100.0 * (i + 1)) for i, ref in enumerate(spec.references)}
    market = ref_r[spec.references[0]]
    for j, token in enumerate(spec.tokens):
        r = spec.daily_alpha + spec.daily_beta * market
        if spec.daily_noise:
            r = r + rng.normal(0.0, spec.daily_noise, n - 1)
        r = np.array(r, float) + np.where(in_span, spec.daily_shock, 0.0)
        v = np.full(n, 10.0)
        bars[token] = _series(token, "day", ts, r, v, 1.0 + j)
    return bars


def build_synthetic(spec: SyntheticSpec) -> SyntheticData:
    """Generate the dataset in memory (bars are raw, i.e. not yet regularized)."""
    rng = np.random.default_rng(spec.seed)
    events = _schedule(spec, rng)
    odds = _odds(events, rng)
    minute = Dataset(_minute_bars(spec, events, rng), events)
    daily = None
    if spec.daily:
        daily = Dataset(_daily_bars(spec, rng), daily_events(spec.tokens, to_instant(spec.start)))
    return SyntheticData(spec, minute, daily, odds)


def _spec_json(spec):
    return json.dumps(asdict(spec), indent=2, sort_keys=True) + "\n"


def generate_synthetic(spec: SyntheticSpec, out_dir) -> dict:
    """Write bars, match schedule and odds under ``out_dir``; returns the paths.

    Layout: ``bars/<asset>_minute.csv``, ``bars/<asset>_day.csv``,
    ``matches.json``, ``odds.csv``, ``synthetic_spec.json``. The same spec
    always yields byte-identical files.
    """
    data = build_synthetic(spec)
    out = Path(out_dir)
    (out / "bars").mkdir(parents=True, exist_ok=True)
    written = {}

    def put(rel, text):
        path = out / rel
        path.write_text(text, encoding="utf-8", newline="\n")
        written[rel] = path

    for asset, series in data.minute.bars.items():
        put(f"bars/{asset}_minute.csv", emit_bar_csv(series))
    if data.daily is not None:
        for asset, series in data.daily.bars.items():
            put(f"bars/{asset}_day.csv", emit_bar_csv(series))
    put("matches.json", dump_matches(data.minute.events))
    lines = ["event_id,odds_win,odds_draw,odds_loss,provenance"]
    for eid, (w, d, l) in data.odds.items():
        lines.append(f"{eid},{w!r},{d!r},{l!r},synthetic")
    put("odds.csv", "\n".join(lines) + "\n")
    put("synthetic_spec.json", _spec_json(spec))
    return written
