"""Read a directory of bar files and assemble a regularized :class:`Dataset`."""

from __future__ import annotations

from importlib.resources import files
from pathlib import Path

import numpy as np

from .events import Dataset, parse_matches
from .odds import parse_odds_csv
from .timeseries import read_bar_csv, regularize

__all__ = ["bar_files", "load_bars", "common_grid", "build_dataset", "load_dataset", "wc2022_matches", "wc2022_odds"]


def bar_files(bars_dir, frequency):
    """``{asset_id: path}`` for files named ``<asset>_<frequency>.csv``."""
    suffix = f"_{frequency}.csv"
    found = {}
    for path in sorted(Path(bars_dir).glob(f"*{suffix}")):
        found[path.name[: -len(suffix)]] = path
    return found


def load_bars(bars_dir, frequency, assets=None):
    files = bar_files(bars_dir, frequency)
    if assets is not None:
        missing = sorted(set(assets) - set(files))
        if missing:
            raise FileNotFoundError(f"no {frequency} bar file for {', '.join(missing)} in {bars_dir}")
        files = {a: files[a] for a in assets}
    return {asset: read_bar_csv(path, frequency, asset) for asset, path in files.items()}


def common_grid(raw):
    """``(start, end)`` covering every series: latest first bar to latest last bar."""
    nonempty = [s for s in raw.values() if len(s)]
    if not nonempty:
        raise ValueError("no bars loaded")
    start = max(s.timestamps[0] for s in nonempty)
    end = max(s.timestamps[-1] for s in nonempty)
    return np.datetime64(start, "s"), np.datetime64(end, "s")


def build_dataset(raw, events, start=None, end=None, odds=None):
    if start is None or end is None:
        g0, g1 = common_grid(raw)
        start = g0 if start is None else start
        end = g1 if end is None else end
    bars = {asset: regularize(series, start, end) for asset, series in raw.items()}
    return Dataset(bars, list(events), dict(odds or {}))


def load_dataset(bars_dir, events, frequency="minute", assets=None, odds=None):
    return build_dataset(load_bars(bars_dir, frequency, assets), events, odds=odds)


def wc2022_matches():
    """The 21 tournament matches bundled with the package.

    Kickoffs and results are the published ones; half and full-time
    boundaries are nominal and should be replaced with observed ones.
    """
    return parse_matches((files("fanstudy") / "data" / "wc2022_matches.json").read_text(encoding="utf-8"))


def wc2022_odds():
    """Bundled decimal odds ``{event_id: (OddsTriple, provenance)}``.

    Only event 1 carries published odds; other rows are marked ``illustrative``.
    """
    return parse_odds_csv((files("fanstudy") / "data" / "wc2022_odds.csv").read_text(encoding="utf-8"))
