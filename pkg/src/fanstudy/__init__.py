"""Event-study toolkit for fan token returns and volumes around football matches.

The pipeline runs from raw bars to published-style tables:

>>> from fanstudy import build_synthetic, SyntheticSpec, run_event_study, ModelKind
>>> data = build_synthetic(SyntheticSpec(n_events=4, daily=False))
>>> from fanstudy.loaders import build_dataset
>>> ds = build_dataset(data.minute.bars, data.minute.events)
>>> table = run_event_study(ds, ModelKind.constant_mean())
>>> round(table.row("full_match").caar, 6)
0.0
"""

__version__ = "0.1.0"

from .errors import *  # noqa: E402,F401,F403
from .timeseries import (  # noqa: E402
    BarSeries,
    LogVolumeSeries,
    ReturnSeries,
    log_returns,
    log_volume,
    parse_bar_csv,
    read_bar_csv,
    regularize,
)
from .models import EstimationWindow, ModelFit, ModelKind, abnormal_series, fit_model  # noqa: E402
from .events import (  # noqa: E402
    Dataset,
    EventWindow,
    MatchEvent,
    StudyTable,
    WindowConfig,
    caar,
    car,
    cav,
    daily_events,
    load_matches,
    resolve_windows,
    run_event_study,
)
from .inference import boehmer_test, t_test_cross_sectional, wilcoxon_signed_rank  # noqa: E402
from .odds import OddsTriple, classify_expectation, devig, surprise_flag  # noqa: E402
from .determinants import MMConfig, RegressionSpec, fit_mm, fit_ols, run_determinants  # noqa: E402
from .synthetic import SyntheticSpec, build_synthetic, generate_synthetic  # noqa: E402
