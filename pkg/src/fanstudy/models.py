"""Expected-return / expected-log-volume models and abnormal series.

The same machinery serves both channels: a constant-mean model, or a
single-factor market model against a reference asset, fitted over an
estimation window expressed in bar offsets from an event anchor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateRegressor, InsufficientCoverage, SpanNotCovered
from .timeseries import FREQUENCIES, to_instant

__all__ = [
    "ModelKind",
    "EstimationWindow",
    "ModelFit",
    "AbnormalSeries",
    "fit_model",
    "abnormal_values",
    "abnormal_series",
]

CONSTANT_MEAN = "constant_mean"
MARKET_MODEL = "market_model"


@dataclass(frozen=True)
class ModelKind:
    variant: str = CONSTANT_MEAN
    reference: str | None = None

    def __post_init__(self):
        if self.variant == CONSTANT_MEAN:
            if self.reference is not None:
                raise ValueError("constant_mean takes no reference asset")
        elif self.variant == MARKET_MODEL:
            if not self.reference:
                raise ValueError("market_model requires a reference asset id")
        else:
            raise ValueError(f"unknown model variant {self.variant!r}")

    @classmethod
    def constant_mean(cls):
        return cls(CONSTANT_MEAN)

    @classmethod
    def market_model(cls, reference):
        return cls(MARKET_MODEL, reference)

    @classmethod
    def parse(cls, text):
        """Parse ``constant_mean`` or ``market_model:<asset>``."""
        text = text.strip()
        if text == CONSTANT_MEAN:
            return cls.constant_mean()
        variant, _, ref = text.partition(":")
        if variant == MARKET_MODEL and ref:
            return cls.market_model(ref)
        raise ValueError(f"cannot parse model kind {text!r}")

    @property
    def is_market(self):
        return self.variant == MARKET_MODEL

    @property
    def n_params(self):
        return 2 if self.is_market else 1

    def __str__(self):
        return f"{MARKET_MODEL}:{self.reference}" if self.is_market else CONSTANT_MEAN


@dataclass(frozen=True)
class EstimationWindow:
    """Bar offsets ``[start_offset, end_offset]`` (inclusive) around the anchor.

    ``exclude`` holds half-open ``(start, end)`` instant pairs masked out of the
    fit (e.g. an earlier event of the same asset). With ``drop_gaps`` the
    gap-filled bars are left out of the regression as well as the coverage count.
    """

    start_offset: int = -1500
    end_offset: int = -61
    min_coverage: float = 0.8
    drop_gaps: bool = False
    exclude: tuple = ()

    def __post_init__(self):
        if not self.start_offset < self.end_offset < 0:
            raise ValueError("need start_offset < end_offset < 0")
        if not 0.0 <= self.min_coverage <= 1.0:
            raise ValueError("min_coverage must be in [0, 1]")
        object.__setattr__(
            self, "exclude", tuple((to_instant(a), to_instant(b)) for a, b in self.exclude)
        )

    @classmethod
    def daily(cls, length=200, last_offset=-121, **kwargs):
        """Daily-study default: ``length`` days ending the day before day -120."""
        return cls(last_offset - length + 1, last_offset, **kwargs)

    @property
    def length(self):
        return self.end_offset - self.start_offset + 1

    def grid(self, anchor, frequency):
        step = FREQUENCIES[frequency]
        anchor = to_instant(anchor)
        offsets = np.arange(self.start_offset, self.end_offset + 1)
        return anchor + offsets * step

    def excluded(self, timestamps):
        mask = np.zeros(len(timestamps), bool)
        for a, b in self.exclude:
            mask |= (timestamps >= a) & (timestamps < b)
        return mask


@dataclass(frozen=True)
class ModelFit:
    alpha: float
    beta: float
    residual_stddev: float
    n_obs: int
    kind: ModelKind
    # estimation-window moments of the regressor, kept for forecast-error variance
    reference_mean: float = 0.0
    reference_ssd: float = 0.0

    def expected(self, reference_values=None):
        if not self.kind.is_market:
            return self.alpha
        return self.alpha + self.beta * np.asarray(reference_values, float)


def _aligned(series, timestamps):
    idx, present = series.locate(timestamps)
    return series.values[idx], series.observed[idx], present


def fit_model(dependent, reference, window: EstimationWindow, anchor, kind: ModelKind) -> ModelFit:
    """Fit ``kind`` to ``dependent`` over ``window`` anchored at ``anchor``.

    Constant mean: ``alpha`` is the sample mean and ``beta`` is exactly 0.
    Market model: OLS of dependent on reference with an intercept. The
    residual scale is ``sqrt(SSR / (n - k))`` with k = 1 or 2.
    """
    if kind.is_market:
        if reference is None:
            raise ValueError(f"{kind} needs a reference series")
        if reference.asset_id and reference.asset_id != kind.reference:
            raise ValueError(f"reference series is {reference.asset_id!r}, model expects {kind.reference!r}")
        if dependent.asset_id and dependent.asset_id == kind.reference:
            raise ValueError("market model reference must differ from the subject asset")

    grid = window.grid(anchor, dependent.frequency)
    y, observed, usable = _aligned(dependent, grid)
    if kind.is_market:
        x, ref_observed, ref_present = _aligned(reference, grid)
        usable = usable & ref_present
        observed = observed & ref_observed
    usable &= ~window.excluded(grid)
    coverage = np.count_nonzero(usable & observed) / len(grid)
    if window.drop_gaps:
        usable &= observed
    n = int(np.count_nonzero(usable))
    k = kind.n_params
    if coverage < window.min_coverage or n < k + 1:
        raise InsufficientCoverage(
            f"{dependent.asset_id} @ {anchor}: coverage {coverage:.3f} "
            f"(min {window.min_coverage}), {n} usable observations"
        )
    y = y[usable]

    if not kind.is_market:
        alpha = float(np.mean(y))
        resid = y - alpha
        return ModelFit(alpha, 0.0, math.sqrt(float(resid @ resid) / (n - 1)), n, kind)

    x = x[usable]
    if np.all(x == x[0]):
        raise DegenerateRegressor(f"reference {kind.reference} is constant over the estimation window")
    x_mean = float(np.mean(x))
    y_mean = float(np.mean(y))
    dx = x - x_mean
    sxx = float(dx @ dx)
    beta = float(dx @ (y - y_mean)) / sxx
    alpha = y_mean - beta * x_mean
    resid = y - alpha - beta * x
    return ModelFit(alpha, beta, math.sqrt(float(resid @ resid) / (n - 2)), n, kind, x_mean, sxx)


def abnormal_values(fit: ModelFit, timestamps, dependent, reference=None):
    """Observed minus fitted at ``timestamps``; raises if any are missing."""
    y, _, present = _aligned(dependent, timestamps)
    if fit.kind.is_market:
        x, _, ref_present = _aligned(reference, timestamps)
        present = present & ref_present
    else:
        x = np.zeros(len(timestamps))
    if not np.all(present):
        first = np.asarray(timestamps)[~present][0]
        raise SpanNotCovered(f"{dependent.asset_id}: no data at {first}")
    return y - fit.expected(x), x


@dataclass(frozen=True, eq=False)
class AbnormalSeries:
    event_id: str
    timestamps: np.ndarray
    abnormal_return: np.ndarray
    abnormal_log_volume: np.ndarray
    fit_return: ModelFit
    fit_volume: ModelFit
    # regressor values over the span (zeros for constant mean)
    reference_return: np.ndarray = field(default=None, repr=False)
    reference_log_volume: np.ndarray = field(default=None, repr=False)

    @property
    def points(self):
        return list(zip(self.timestamps, self.abnormal_return.tolist(), self.abnormal_log_volume.tolist()))


def abnormal_series(
    event,
    returns,
    volumes,
    fit_return: ModelFit,
    fit_volume: ModelFit,
    reference_returns=None,
    reference_volumes=None,
    span=None,
) -> AbnormalSeries:
    """Abnormal return and log-volume over the full event span.

    ``event`` supplies ``event_id`` and, unless ``span`` is given, ``span()``
    as a half-open ``(start, end)`` pair. Every bar in the span must be
    present in the inputs.
    """
    start, end = span if span is not None else event.span()
    step = FREQUENCIES[returns.frequency]
    timestamps = np.arange(start, end, step).astype("datetime64[s]")
    ar, ref_r = abnormal_values(fit_return, timestamps, returns, reference_returns)
    av, ref_v = abnormal_values(fit_volume, timestamps, volumes, reference_volumes)
    for arr in (timestamps, ar, av, ref_r, ref_v):
        arr.setflags(write=False)
    return AbnormalSeries(event.event_id, timestamps, ar, av, fit_return, fit_volume, ref_r, ref_v)
