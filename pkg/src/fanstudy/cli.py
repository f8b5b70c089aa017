"""Batch command line: ``fanstudy <command> [--config FILE] [--key value ...]``.

Commands write data files into the output directory and diagnostics to
stderr. The exit status is 0 only when the command finished without error.
"""

from __future__ import annotations

import argparse
import contextlib
import dataclasses
import hashlib
import json
import logging
import os
import platform
import sys
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .determinants import MMConfig, run_determinants, table_specs
from .errors import FanStudyError
from .events import WindowConfig, daily_events, load_matches, run_event_study
from .loaders import bar_files, build_dataset, common_grid, load_bars
from .models import EstimationWindow, ModelKind
from .odds import read_odds_csv
from .reports import (
    _study_markdown,
    emit_daily_table,
    emit_odds_table,
    emit_outcomes_csv,
    emit_regression_csv,
    emit_regression_table,
    emit_study_table,
    cumulative_return_plot,
    odds_rows,
    parse_odds_table_csv,
    parse_outcomes_csv,
    parse_regression_csv,
    parse_study_csv,
)
from .synthetic import SyntheticSpec, generate_synthetic
from .timeseries import emit_bar_csv, format_instant, log_returns

log = logging.getLogger("fanstudy")

LOCK_NAME = ".fanstudy.lock"


@dataclasses.dataclass
class RunConfig:
    bars_dir: str = "bars"
    matches: str = "matches.json"
    odds: str = "odds.csv"
    output_dir: str = "results"
    models: str = "constant_mean,market_model:BTC,market_model:CHZ"
    volume_shift: float = 1.0
    odds_threshold: float = 30.0
    estimation_start: int = -1500
    estimation_end: int = -61
    min_coverage: float = 0.8
    drop_gaps: bool = False
    regular_includes_half_time: bool = True
    pre_minutes: int = 60
    post_minutes: int = 60
    daily_anchor: str = "2022-11-20T00:00:00Z"
    daily_tokens: str = "ARG,BFT,POR,SNFT"
    daily_model: str = "market_model:BTC"
    daily_estimation_length: int = 200
    daily_estimation_end: int = -121
    determinants_model: str = "constant_mean"
    mm_subsamples: int = 500
    seed: int = 0
    jobs: int = 1

    PATH_KEYS = ("bars_dir", "matches", "odds", "output_dir")

    def model_kinds(self):
        return [ModelKind.parse(m) for m in self.models.split(",") if m.strip()]

    def estimation(self):
        return EstimationWindow(self.estimation_start, self.estimation_end, self.min_coverage, self.drop_gaps)

    def windows(self):
        return WindowConfig(self.pre_minutes, self.post_minutes, self.regular_includes_half_time)

    def as_dict(self):
        return dataclasses.asdict(self)


def _coerce(field, text):
    if field.type in (bool, "bool"):
        low = str(text).strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"{field.name}: expected a boolean, got {text!r}")
    if field.type in (int, "int"):
        return int(text)
    if field.type in (float, "float"):
        return float(text)
    return str(text).strip()


def read_config_file(path):
    """Parse ``key = value`` lines; ``#`` starts a comment. Paths resolve relative to the file."""
    fields = {f.name: f for f in dataclasses.fields(RunConfig)}
    base = Path(path).resolve().parent
    values = {}
    for no, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep or key not in fields:
            raise ValueError(f"{path}:{no}: unknown or malformed entry {raw!r}")
        values[key] = _coerce(fields[key], value.strip())
        if key in RunConfig.PATH_KEYS and not Path(values[key]).is_absolute():
            values[key] = str(base / values[key])
    return values


def build_config(args):
    values = read_config_file(args.config) if getattr(args, "config", None) else {}
    for f in dataclasses.fields(RunConfig):
        flag = getattr(args, f.name, None)
        if flag is not None:
            values[f.name] = _coerce(f, flag)
    return RunConfig(**values)


@contextlib.contextmanager
def output_lock(out_dir):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    lock = out / LOCK_NAME
    try:
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise FanStudyError(f"{out} is locked by another run (remove {lock} if stale)") from None
    try:
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        yield out
    finally:
        lock.unlink(missing_ok=True)


def _digest(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _write(out, name, text, produced):
    (out / name).write_text(text, encoding="utf-8", newline="\n")
    produced.append(name)


def _update_summary(out, command, config, inputs, produced, extra=None):
    path = out / "summary.json"
    summary = json.loads(path.read_text(encoding="utf-8")) if path.exists() else {}
    summary["versions"] = {
        "fanstudy": __version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "python": platform.python_version(),
    }
    cfg = config.as_dict() if config is not None else {}
    for key in RunConfig.PATH_KEYS:
        if key in cfg:
            cfg[key] = Path(cfg[key]).name
    entry = {
        "config": cfg,
        "inputs": {Path(p).name: _digest(p) for p in sorted(inputs, key=lambda p: Path(p).name)},
        "outputs": sorted(produced),
    }
    if extra:
        entry.update(extra)
    summary.setdefault("runs", {})[command] = entry
    path.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8", newline="\n")


def _require(path, what):
    if not Path(path).exists():
        raise FileNotFoundError(f"{what} not found: {path}")
    return path


# --- commands ---------------------------------------------------------------


def cmd_ingest(cfg, args, out):
    produced = []
    raw = load_bars(_require(cfg.bars_dir, "bars directory"), args.frequency)
    if not raw:
        raise FileNotFoundError(f"no *_{args.frequency}.csv files in {cfg.bars_dir}")
    start, end = common_grid(raw)
    ds = build_dataset(raw, [], start, end)
    (out / "regularized").mkdir(exist_ok=True)
    lines = ["asset,frequency,n_raw,first,last,grid_start,grid_end,n_grid,n_gap_filled"]
    for asset in sorted(ds.bars):
        r, s = raw[asset], ds.bars[asset]
        lines.append(
            f"{asset},{args.frequency},{len(r)},{format_instant(r.timestamps[0])},{format_instant(r.timestamps[-1])},"
            f"{format_instant(start)},{format_instant(end)},{len(s)},{int(s.gap_filled.sum())}"
        )
        _write(out, f"regularized/{asset}_{args.frequency}.csv", emit_bar_csv(s), produced)
    _write(out, f"ingest_{args.frequency}.csv", "\n".join(lines) + "\n", produced)
    inputs = list(bar_files(cfg.bars_dir, args.frequency).values())
    _update_summary(out, f"ingest_{args.frequency}", cfg, inputs, produced)


def _minute_dataset(cfg):
    events = load_matches(_require(cfg.matches, "match schedule"))
    assets = sorted({e.token_id for e in events} | {k.reference for k in cfg.model_kinds() if k.is_market})
    raw = load_bars(_require(cfg.bars_dir, "bars directory"), "minute", assets)
    inputs = [cfg.matches] + [bar_files(cfg.bars_dir, "minute")[a] for a in assets]
    return build_dataset(raw, events), inputs


def _excluded_csv(tables):
    lines = ["model,event_id,reason"]
    for t in tables:
        for eid, reason in t.excluded:
            lines.append(f"{t.model},{eid},\"{reason.replace(chr(34), chr(39))}\"")
    return "\n".join(lines) + "\n"


def cmd_event_study(cfg, args, out):
    produced = []
    ds, inputs = _minute_dataset(cfg)
    tables = []
    for kind in cfg.model_kinds():
        tables.append(
            run_event_study(ds, kind, "minute", cfg.windows(), cfg.estimation(), cfg.volume_shift, cfg.jobs)
        )
        for eid, reason in tables[-1].excluded:
            log.warning("model %s: event %s excluded (%s)", kind, eid, reason)
    _write(out, "table2.csv", emit_study_table(tables, "csv"), produced)
    _write(out, "event_outcomes.csv", emit_outcomes_csv(tables), produced)
    _write(out, "excluded.csv", _excluded_csv(tables), produced)
    _update_summary(out, "event-study", cfg, inputs, produced,
                    {"excluded": sorted(f"{t.model}:{e}" for t in tables for e, _ in t.excluded)})


def cmd_daily_study(cfg, args, out):
    produced = []
    kind = ModelKind.parse(cfg.daily_model)
    tokens = [t.strip() for t in cfg.daily_tokens.split(",") if t.strip()]
    assets = sorted(set(tokens) | ({kind.reference} if kind.is_market else set()))
    raw = load_bars(_require(cfg.bars_dir, "bars directory"), "day", assets)
    ds = build_dataset(raw, daily_events(tokens, cfg.daily_anchor))
    est = EstimationWindow.daily(cfg.daily_estimation_length, cfg.daily_estimation_end,
                                 min_coverage=cfg.min_coverage, drop_gaps=cfg.drop_gaps)
    table = run_event_study(ds, kind, "day", None, est, cfg.volume_shift, cfg.jobs)
    _write(out, "table5.csv", emit_daily_table([table], "csv"), produced)
    _write(out, "daily_outcomes.csv", emit_outcomes_csv([table]), produced)
    inputs = [bar_files(cfg.bars_dir, "day")[a] for a in assets]
    _update_summary(out, "daily-study", cfg, inputs, produced)


def cmd_classify_odds(cfg, args, out):
    produced = []
    events = load_matches(_require(cfg.matches, "match schedule"))
    odds = read_odds_csv(_require(cfg.odds, "odds file"))
    for e in events:
        if e.event_id not in odds:
            log.warning("no odds for event %s", e.event_id)
    _write(out, "table1.csv", emit_odds_table(odds_rows(events, odds, cfg.odds_threshold), "csv"), produced)
    _update_summary(out, "classify-odds", cfg, [cfg.matches, cfg.odds], produced)


def cmd_determinants(cfg, args, out):
    produced = []
    events = load_matches(_require(cfg.matches, "match schedule"))
    src = _require(out / "event_outcomes.csv", "event outcomes (run event-study first)")
    outcomes = parse_outcomes_csv(src.read_text(encoding="utf-8"), model=cfg.determinants_model)
    if not outcomes:
        raise FanStudyError(f"no outcomes for model {cfg.determinants_model} in {src}")
    mm = MMConfig(n_subsamples=cfg.mm_subsamples, seed=cfg.seed)
    for name, dep in (("table3.csv", "CAR_full_match"), ("table4.csv", "CAV_full_match")):
        results = run_determinants(outcomes, events, table_specs(dep), mm)
        for spec, res in results:
            if isinstance(res, Exception):
                log.warning("%s model (%s) not fitted: %s", dep, spec.name, res)
            elif not res.converged:
                log.warning("%s model (%s): MM scale collapsed to an exact fit; inference left blank", dep, spec.name)
        _write(out, name, emit_regression_csv(results), produced)
    _update_summary(out, "determinants", cfg, [cfg.matches, src], produced)


def cmd_plot(cfg, args, out):
    produced = []
    events = load_matches(_require(cfg.matches, "match schedule"))
    tokens = list(dict.fromkeys(e.token_id for e in events))
    raw = load_bars(_require(cfg.bars_dir, "bars directory"), "minute", tokens)
    ds = build_dataset(raw, events)
    data_csv, svg = cumulative_return_plot([log_returns(ds.bars[t]) for t in tokens])
    _write(out, "figure1.csv", data_csv, produced)
    _write(out, "figure1.svg", svg, produced)
    _update_summary(out, "plot", cfg, [bar_files(cfg.bars_dir, "minute")[t] for t in tokens], produced)


def _parse_shocks(items):
    out = {}
    for item in items or ():
        label, sep, value = item.partition("=")
        if not sep:
            raise ValueError(f"shock must be label=value, got {item!r}")
        out[label.strip()] = float(value)
    return out


def cmd_synth(cfg, args, out):
    spec = SyntheticSpec(
        n_events=args.n_events, alpha=args.alpha, beta=args.beta, noise=args.noise,
        volume_noise=args.volume_noise, shocks=_parse_shocks(args.shock),
        volume_shocks=_parse_shocks(args.volume_shock), gap_rate=args.gap_rate,
        daily_shock=args.daily_shock, daily_noise=args.daily_noise, seed=cfg.seed,
    )
    written = generate_synthetic(spec, out)
    cfg_text = "\n".join([
        "# generated by `fanstudy synth`",
        "bars_dir = bars",
        "matches = matches.json",
        "odds = odds.csv",
        "output_dir = results",
        f"seed = {cfg.seed}",
    ]) + "\n"
    (out / "fanstudy.cfg").write_text(cfg_text, encoding="utf-8", newline="\n")
    log.info("wrote %d files to %s", len(written) + 1, out)


def cmd_report(cfg, args, out):
    produced = []
    sections = []
    sources = []

    def read(name):
        path = out / name
        if not path.exists():
            log.warning("%s missing; section skipped", name)
            return None
        sources.append(path)
        return path.read_text(encoding="utf-8")

    text = read("table1.csv")
    if text is not None:
        md = emit_odds_table(parse_odds_table_csv(text), "markdown")
        _write(out, "table1.md", md, produced)
        sections.append(("Table 1. Matches, de-vigged odds and surprises", md))
    text = read("table2.csv")
    if text is not None:
        md = _study_markdown(parse_study_csv(text))
        _write(out, "table2.md", md, produced)
        sections.append(("Table 2. Cumulative abnormal returns and volumes by match window", md))
    for name, title, digits in (
        ("table3", "Table 3. Determinants of full-match CARs (OLS and MM)", 4),
        ("table4", "Table 4. Determinants of full-match CAVs (OLS and MM)", 3),
    ):
        text = read(f"{name}.csv")
        if text is not None:
            md = emit_regression_table(parse_regression_csv(text), digits)
            _write(out, f"{name}.md", md, produced)
            sections.append((title, md))
    text = read("table5.csv")
    if text is not None:
        md = emit_daily_table(parse_study_csv(text), "markdown")
        _write(out, "table5.md", md, produced)
        sections.append(("Table 5. Daily cumulative abnormal returns around the tournament", md))
    if not sections:
        raise FanStudyError(f"no result files to report in {out}")
    body = "\n".join(f"## {title}\n\n{md}" for title, md in sections)
    _write(out, "report.md", "# Event-study report\n\n" + body, produced)
    _update_summary(out, "report", None, sources, produced)


COMMANDS = {
    "ingest": (cmd_ingest, "validate and regularize bar files"),
    "event-study": (cmd_event_study, "minute-frequency match event study (all model panels)"),
    "daily-study": (cmd_daily_study, "daily-frequency study around the tournament start"),
    "classify-odds": (cmd_classify_odds, "de-vig odds, classify expectations, flag surprises"),
    "determinants": (cmd_determinants, "OLS / MM regressions of full-match CARs and CAVs"),
    "plot": (cmd_plot, "cumulative return data and SVG chart"),
    "synth": (cmd_synth, "write a seeded synthetic dataset"),
    "report": (cmd_report, "render markdown tables from existing result files"),
}


def build_parser():
    parser = argparse.ArgumentParser(prog="fanstudy", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="flat key = value config file")
        for f in dataclasses.fields(RunConfig):
            p.add_argument(f"--{f.name.replace('_', '-')}", dest=f.name, default=None, metavar="VALUE")
        if name == "ingest":
            p.add_argument("--frequency", choices=("minute", "day"), default="minute")
        if name == "synth":
            p.add_argument("--n-events", type=int, default=21)
            p.add_argument("--alpha", type=float, default=0.001)
            p.add_argument("--beta", type=float, default=0.0)
            p.add_argument("--noise", type=float, default=0.0)
            p.add_argument("--volume-noise", type=float, default=0.0)
            p.add_argument("--shock", action="append", metavar="LABEL=VALUE")
            p.add_argument("--volume-shock", action="append", metavar="LABEL=VALUE")
            p.add_argument("--gap-rate", type=float, default=0.0)
            p.add_argument("--daily-shock", type=float, default=0.0)
            p.add_argument("--daily-noise", type=float, default=0.0)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        cfg = build_config(args)
        func = COMMANDS[args.command][0]
        with output_lock(cfg.output_dir) as out:
            func(cfg, args, out)
    except (FanStudyError, OSError, ValueError, KeyError) as exc:
        log.error("%s: %s", type(exc).__name__, exc)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
