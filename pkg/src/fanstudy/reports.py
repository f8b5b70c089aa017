"""Table and figure emitters mirroring the published exhibits.

Every emitter is a pure function from results to text; file handling lives
in :mod:`fanstudy.cli`. Output is byte-deterministic for identical inputs.
"""

from __future__ import annotations

import csv
import io
import math

import numpy as np

from .errors import EmptyInput
from .events import MATCH_WINDOWS
from .timeseries import format_instant

__all__ = [
    "stars",
    "study_table_rows",
    "emit_study_table",
    "parse_study_csv",
    "emit_daily_table",
    "emit_outcomes_csv",
    "parse_outcomes_csv",
    "emit_regression_csv",
    "parse_regression_csv",
    "emit_regression_table",
    "emit_odds_table",
    "cumulative_return_plot",
]

ROMAN = ("i", "ii", "iii", "iv", "v", "vi", "vii", "viii", "ix", "x")
PANEL_LETTERS = "abcdefghij"

WINDOW_TITLES = {
    "pre_match": "Pre-match (-60 to 0)",
    "first_half": "First half (0 to 45)",
    "half_time": "Half time (45 to 60)",
    "second_half": "Second half (60 to 105)",
    "regular_match": "Regular match (0 to 105)",
    "full_match": "Full match (0 to λ)",
    "post_match": "Post match (λ to λ+60)",
}

STUDY_COLUMNS = (
    "panel", "model", "row", "window", "n",
    "car", "car_se", "car_t", "car_t_p", "car_t_stars", "car_z", "car_z_p", "car_z_stars", "car_pos",
    "car_boehmer", "car_boehmer_p",
    "cav", "cav_se", "cav_t", "cav_t_p", "cav_t_stars", "cav_z", "cav_z_p", "cav_z_stars", "cav_pos",
    "cav_boehmer", "cav_boehmer_p",
)
_FLOAT_DIGITS = {
    "car": 3, "car_se": 3, "cav": 3, "cav_se": 3,
    "car_t": 2, "car_z": 2, "cav_t": 2, "cav_z": 2, "car_boehmer": 2, "cav_boehmer": 2,
    "car_t_p": 4, "car_z_p": 4, "cav_t_p": 4, "cav_z_p": 4, "car_boehmer_p": 4, "cav_boehmer_p": 4,
    "car_pos": 4, "cav_pos": 4,
}


def stars(p):
    """``***`` for p < 0.01, ``**`` for p < 0.05, ``*`` for p < 0.10."""
    if p is None or not math.isfinite(p):
        return ""
    if p < 0.01:
        return "***"
    if p < 0.05:
        return "**"
    if p < 0.10:
        return "*"
    return ""


def _fmt(value, digits):
    if value is None or (isinstance(value, float) and not math.isfinite(value)):
        return "nan"
    out = f"{value:.{digits}f}"
    return "0." + "0" * digits if out == "-0." + "0" * digits else out


def _panel_title(model):
    if model == "constant_mean":
        return "Constant Mean Return"
    if model.startswith("market_model:"):
        return f"Market Model ({model.split(':', 1)[1]})"
    return model


def _as_tables(tables):
    return [tables] if hasattr(tables, "rows") else list(tables)


def _ordered_rows(table):
    order = {w: i for i, w in enumerate(MATCH_WINDOWS)}
    return sorted(table.rows, key=lambda r: order.get(r.window, len(order)))


def study_table_rows(tables):
    """Flatten study tables (one per model panel) into CSV-ready dicts."""
    out = []
    for p, table in enumerate(_as_tables(tables)):
        rows = _ordered_rows(table) if table.frequency == "minute" else list(table.rows)
        for i, row in enumerate(rows):
            rec = {"panel": PANEL_LETTERS[p], "model": row.model, "row": ROMAN[i], "window": row.window,
                   "n": row.returns.n}
            for prefix, ch in (("car", row.returns), ("cav", row.volume)):
                rec.update({
                    prefix: ch.mean, f"{prefix}_se": ch.se,
                    f"{prefix}_t": ch.t_stat, f"{prefix}_t_p": ch.t_p, f"{prefix}_t_stars": stars(ch.t_p),
                    f"{prefix}_z": ch.z_stat, f"{prefix}_z_p": ch.z_p, f"{prefix}_z_stars": stars(ch.z_p),
                    f"{prefix}_pos": ch.pos_share,
                    f"{prefix}_boehmer": ch.boehmer_stat, f"{prefix}_boehmer_p": ch.boehmer_p,
                })
            out.append(rec)
    return out


def _csv_text(columns, records, digits=None):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for rec in records:
        line = []
        for col in columns:
            v = rec[col]
            if isinstance(v, bool):
                line.append("true" if v else "false")
            elif isinstance(v, float):
                line.append(_fmt(v, digits[col]) if digits and col in digits else repr(v))
            else:
                line.append(v)
        writer.writerow(line)
    return buf.getvalue()


def _md_table(header, body):
    lines = ["| " + " | ".join(header) + " |", "|" + "|".join(["---"] * len(header)) + "|"]
    lines += ["| " + " | ".join(row) + " |" for row in body]
    return "\n".join(lines) + "\n"


def _pct(v):
    return "nan" if not math.isfinite(v) else f"{_fmt(v, 3)}%"


def _stat(v, p, mark=None):
    # ``mark`` wins over ``p`` so tables re-read from rounded CSVs keep their stars
    if not math.isfinite(v):
        return "nan"
    return f"{_fmt(v, 2)}{stars(p) if mark is None else mark}"


def _starred(r, key):
    return _stat(r[key], r[f"{key}_p"], r.get(f"{key}_stars"))


def _share(v):
    return "nan" if not math.isfinite(v) else f"{v * 100:.0f}%"


def emit_study_table(tables, fmt="csv"):
    """Render study tables (panels (a), (b), ... in the given order).

    ``csv`` prints means/SEs to 3 decimals, statistics to 2, p-values and
    positive shares to 4, with star columns alongside. ``markdown`` follows
    the published layout: percent CARs, starred t/z, Pos. as whole percent.
    """
    records = study_table_rows(tables)
    if not records:
        raise EmptyInput("empty study table")
    if fmt == "csv":
        return _csv_text(STUDY_COLUMNS, records, _FLOAT_DIGITS)
    if fmt != "markdown":
        raise ValueError(f"unknown format {fmt!r}")
    return _study_markdown(records)


def _study_markdown(records):
    header = ["Period", "CARs", "SE", "t-test", "z-test", "Pos.", "CAVs", "SE", "t-test", "z-test", "Pos."]
    body = [["", "**Returns**", "", "", "", "", "**Trading volume**", "", "", "", ""]]
    panel = None
    for r in records:
        if r["panel"] != panel:
            panel = r["panel"]
            body.append([f"**({panel}) {_panel_title(r['model'])}**"] + [""] * 10)
        title = WINDOW_TITLES.get(r["window"], r["window"])
        body.append([
            f"({r['row']}) {title}",
            _pct(r["car"]), _pct(r["car_se"]), _starred(r, "car_t"), _starred(r, "car_z"),
            _share(r["car_pos"]),
            _fmt(r["cav"], 3), _fmt(r["cav_se"], 3), _starred(r, "cav_t"), _starred(r, "cav_z"),
            _share(r["cav_pos"]),
        ])
    return _md_table(header, body)


def _parse_value(col, text):
    if col in ("panel", "model", "row", "window") or col.endswith("_stars"):
        return text
    if col == "n":
        return int(text)
    return float(text)


def parse_study_csv(text):
    """Inverse of the CSV form of :func:`emit_study_table` (to printed precision)."""
    reader = csv.DictReader(io.StringIO(text))
    if tuple(reader.fieldnames or ()) != STUDY_COLUMNS:
        raise ValueError("not a study-table CSV")
    return [{k: _parse_value(k, v) for k, v in row.items()} for row in reader]


def emit_daily_table(records, fmt="markdown"):
    """Daily-study layout: one row per day window, returns only."""
    if hasattr(records, "rows") or (records and hasattr(records[0], "rows")):
        records = study_table_rows(records)
    if not records:
        raise EmptyInput("empty daily table")
    if fmt == "csv":
        return _csv_text(STUDY_COLUMNS, records, _FLOAT_DIGITS)
    header = ["Days to the event (t = 0)", "CARs", "Std. Err.", "t-test", "z-test", "Pos."]
    body = [
        [r["window"], _pct(r["car"]), _pct(r["car_se"]), _starred(r, "car_t"),
         _starred(r, "car_z"), _share(r["car_pos"])]
        for r in records
    ]
    n = records[0]["n"]
    return _md_table(header, body) + f"\nN = {n}. {_panel_title(records[0]['model'])}.\n"


OUTCOME_COLUMNS = ("model", "event_id", "token_id", "window", "n_bars", "car", "cav", "scar", "scav")


def emit_outcomes_csv(tables):
    """Per-event CAR/CAV rows at full precision (input for the regressions)."""
    recs = []
    for table in _as_tables(tables):
        for o in table.outcomes:
            recs.append(dict(model=table.model, event_id=o.event_id, token_id=o.token_id, window=o.window,
                             n_bars=str(o.n_bars), car=o.car, cav=o.cav, scar=o.scar, scav=o.scav))
    return _csv_text(OUTCOME_COLUMNS, recs)


def parse_outcomes_csv(text, model=None):
    from .events import EventOutcomeRow

    out = []
    for row in csv.DictReader(io.StringIO(text)):
        if model is not None and row["model"] != model:
            continue
        out.append(EventOutcomeRow(row["event_id"], row["token_id"], row["window"], float(row["car"]),
                                   float(row["cav"]), int(row["n_bars"]), float(row["scar"]), float(row["scav"])))
    return out


def emit_regression_csv(results):
    from .determinants import REGRESSION_COLUMNS, regression_rows

    recs = regression_rows(results)
    for r in recs:
        r["n"] = str(r["n"])
    return _csv_text(REGRESSION_COLUMNS, recs)


def parse_regression_csv(text):
    rows = []
    for row in csv.DictReader(io.StringIO(text)):
        rec = dict(row)
        for k in ("coefficient", "std_error", "p_value", "r2", "adj_or_pseudo_r2"):
            rec[k] = float(rec[k])
        rec["n"] = int(rec["n"])
        rec["converged"] = rec["converged"] == "true"
        rows.append(rec)
    return rows


REGRESSION_TERMS = (
    ("victory", "Victory"),
    ("victory_low", "Victory (Low-Stake)"),
    ("victory_high", "Victory (High-Stake)"),
    ("defeat", "Defeat"),
    ("defeat_low", "Defeat (Low-Stake)"),
    ("defeat_high", "Defeat (High-Stake)"),
    ("defeat_x_knockout", "Defeat & Knockout"),
)


def emit_regression_table(rows, digits=4):
    """Determinants layout: outcome terms by models (a)-(j), then fit rows.

    ``rows`` are dicts as produced by :func:`parse_regression_csv`.
    """
    if not rows:
        raise EmptyInput("no regression rows")
    models = list(dict.fromkeys(r["spec"] for r in rows))
    by = {(r["spec"], r["term"]): r for r in rows}
    first = {m: next(r for r in rows if r["spec"] == m) for m in models}
    header = [""] + [f"({m})" for m in models]
    body = [[""] + ["Coef. (SE)"] * len(models), ["**Outcome**"] + [""] * len(models)]
    for i, (term, title) in enumerate(REGRESSION_TERMS):
        line = [f"({ROMAN[i]}) {title}"]
        for m in models:
            r = by.get((m, term))
            line.append("" if r is None else f"{_fmt(r['coefficient'], digits)}{stars(r['p_value'])} ({_fmt(r['std_error'], digits)})")
        body.append(line)
    body.append(["R²"] + [_fmt(first[m]["r2"], digits) for m in models])
    body.append(["Adj. R² [pseudo R²]"] + [
        _fmt(first[m]["adj_or_pseudo_r2"], digits) if first[m]["estimator"] == "ols"
        else f"[{_fmt(first[m]['adj_or_pseudo_r2'], digits)}]"
        for m in models
    ])
    body.append(["Controls"] + [
        "Yes" if any(k[0] == m and (k[1].startswith("stage_") or k[1].startswith("token_")) for k in by) else "No"
        for m in models
    ])
    body.append(["Method"] + [first[m]["estimator"].upper() for m in models])
    n = sorted({first[m]["n"] for m in models if first[m]["n"]})
    return _md_table(header, body) + f"\nN = {', '.join(map(str, n))}.\n"


ODDS_COLUMNS = (
    "event_id", "date", "time", "token_id", "opponent", "stage", "outcome", "score",
    "p_win", "p_draw", "p_loss", "overround", "margin_pp", "expectation", "surprise", "provenance",
)


def _score(e):
    s = f"{e.score_for}:{e.score_against}"
    if e.penalty_score:
        s += f" ({e.penalty_score[0]}:{e.penalty_score[1]})"
    return s


def odds_rows(events, odds, threshold=30.0):
    from .odds import classify_expectation, devig, surprise_flag

    out = []
    for e in events:
        rec = {"event_id": e.event_id, "date": format_instant(e.kickoff)[:10], "time": format_instant(e.kickoff)[11:16],
               "token_id": e.token_id, "opponent": e.opponent, "stage": e.stage, "outcome": e.outcome,
               "score": _score(e)}
        if e.event_id in odds:
            triple, provenance = odds[e.event_id]
            probs = devig(triple)
            label = classify_expectation(probs, threshold)
            rec.update(p_win=probs.p_win, p_draw=probs.p_draw, p_loss=probs.p_loss, overround=probs.overround,
                       margin_pp=label.margin, expectation=label.label, surprise=surprise_flag(label, e.outcome),
                       provenance=provenance)
        else:
            rec.update(p_win=math.nan, p_draw=math.nan, p_loss=math.nan, overround=math.nan, margin_pp=math.nan,
                       expectation="", surprise=False, provenance="missing")
        out.append(rec)
    return out


def emit_odds_table(records, fmt="csv"):
    """Match overview with de-vigged probabilities; ``^S`` marks surprises."""
    if fmt == "csv":
        digits = {k: 6 for k in ("p_win", "p_draw", "p_loss", "overround", "margin_pp")}
        return _csv_text(ODDS_COLUMNS, records, digits)
    header = ["ID", "Date", "Time", "Match", "Match Stage", "Outcome", "Score", "P(win)", "P(draw)", "P(loss)", "Expectation"]
    body = []
    for r in records:
        outcome = r["outcome"].capitalize() + (" ^S" if r["surprise"] in (True, "true") else "")
        body.append([
            r["event_id"], r["date"], r["time"], f"{r['token_id']} vs. {r['opponent']}", r["stage"], outcome, r["score"],
            _pct(float(r["p_win"]) * 100), _pct(float(r["p_draw"]) * 100), _pct(float(r["p_loss"]) * 100),
            r["expectation"],
        ])
    return _md_table(header, body)


def parse_odds_table_csv(text):
    return list(csv.DictReader(io.StringIO(text)))


_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f")


def cumulative_return_plot(series_set, max_points=2000, title="Cumulative fan token returns"):
    """Cumulative log returns per asset as ``(csv_text, svg_text)``.

    All series must share one timestamp grid. The CSV carries every point;
    the SVG polyline is thinned to at most ``max_points`` vertices per line.
    """
    series_set = list(series_set)
    if not series_set or any(len(s) == 0 for s in series_set):
        raise EmptyInput("need at least one non-empty return series")
    ts = series_set[0].timestamps
    for s in series_set[1:]:
        if len(s) != len(ts) or np.any(s.timestamps != ts):
            raise ValueError("series are not aligned to a common grid")
    names = [s.asset_id for s in series_set]
    cum = np.column_stack([np.cumsum(s.values) for s in series_set])

    buf = io.StringIO()
    buf.write("timestamp," + ",".join(names) + "\n")
    stamps = np.datetime_as_string(ts, unit="s")
    for i in range(len(ts)):
        buf.write(stamps[i] + "Z," + ",".join(repr(float(v)) for v in cum[i]) + "\n")
    return buf.getvalue(), _svg(stamps, names, cum, max_points, title)


def _svg(stamps, names, cum, max_points, title):
    width, height = 800, 420
    left, right, top, bottom = 70, 130, 40, 60
    pw, ph = width - left - right, height - top - bottom
    n = cum.shape[0]
    idx = np.unique(np.linspace(0, n - 1, min(n, max_points)).round().astype(int))
    lo, hi = float(cum.min()), float(cum.max())
    if hi - lo < 1e-12:
        lo, hi = lo - 1.0, hi + 1.0
    span = hi - lo

    def x(i):
        return left + (pw * i / (n - 1) if n > 1 else pw / 2)

    def y(v):
        return top + ph * (hi - v) / span

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2:.1f}" y="22" text-anchor="middle" font-family="sans-serif" font-size="15">{title}</text>',
        f'<line x1="{left}" y1="{top + ph}" x2="{left + pw}" y2="{top + ph}" stroke="black"/>',
        f'<line x1="{left}" y1="{top}" x2="{left}" y2="{top + ph}" stroke="black"/>',
    ]
    for k in range(5):
        v = lo + span * k / 4
        yy = y(v)
        out.append(f'<line x1="{left - 4}" y1="{yy:.2f}" x2="{left}" y2="{yy:.2f}" stroke="black"/>')
        out.append(f'<text x="{left - 7}" y="{yy + 4:.2f}" text-anchor="end" font-family="sans-serif" font-size="11">{v:.1f}</text>')
    if lo < 0 < hi:
        out.append(f'<line x1="{left}" y1="{y(0.0):.2f}" x2="{left + pw}" y2="{y(0.0):.2f}" stroke="#bbbbbb" stroke-dasharray="4 3"/>')
    for i in sorted({0, n - 1}):
        out.append(f'<text x="{x(i):.2f}" y="{top + ph + 18}" text-anchor="middle" font-family="sans-serif" font-size="11">{stamps[i][:10]}</text>')
    out.append(f'<text x="{left + pw / 2:.1f}" y="{height - 15}" text-anchor="middle" font-family="sans-serif" font-size="12">Time (UTC)</text>')
    out.append(
        f'<text x="18" y="{top + ph / 2:.1f}" text-anchor="middle" font-family="sans-serif" font-size="12" '
        f'transform="rotate(-90 18 {top + ph / 2:.1f})">Cumulative log return (%)</text>'
    )
    for j, name in enumerate(names):
        color = _COLORS[j % len(_COLORS)]
        pts = " ".join(f"{x(i):.2f},{y(cum[i, j]):.2f}" for i in idx)
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.2" points="{pts}"/>')
        ly = top + 15 + 18 * j
        out.append(f'<line x1="{left + pw + 12}" y1="{ly}" x2="{left + pw + 32}" y2="{ly}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{left + pw + 38}" y="{ly + 4}" font-family="sans-serif" font-size="12">{name}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
