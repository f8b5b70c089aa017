"""Cross-sectional regressions of full-match CARs / CAVs on match dummies.

OLS with classical standard errors, and a two-stage MM-estimator: an
S-estimate from random elemental subsets (Tukey bisquare, 50% breakdown)
followed by a bisquare M-step at the fixed S-scale (95% efficiency).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, optimize, stats

from .errors import EmptyInput, NoConvergence, RankDeficient, TooFewObservations

__all__ = [
    "FORMS",
    "RegressionSpec",
    "DesignMatrix",
    "RegressionResult",
    "MMConfig",
    "TABLE_MODELS",
    "table_specs",
    "build_design_matrix",
    "fit_ols",
    "fit_mm",
    "bisquare_rho",
    "m_scale",
    "run_determinants",
    "regression_rows",
]

FORMS = (
    "eq4_outcome",
    "eq5_outcome_controls",
    "eq6_stake_split",
    "eq7_knockout_interaction",
    "eq8_knockout_controls",
)
DEPENDENTS = ("CAR_full_match", "CAV_full_match")
TABLE_MODELS = "abcdefghij"

STAGE_FAMILIES = {
    "group1": "group",
    "group2": "group",
    "group3": "group",
    "round_of_16": "round_of_16",
    "quarter_final": "quarter_final",
    "semi_final": "semi_final",
    "final": "final",
}


@dataclass(frozen=True)
class RegressionSpec:
    dependent: str = "CAR_full_match"
    form: str = "eq4_outcome"
    estimator: str = "ols"
    name: str = ""
    token_reference: str = "SNFT"
    stage_reference: str = "semi_final"

    def __post_init__(self):
        if self.dependent not in DEPENDENTS:
            raise ValueError(f"unknown dependent {self.dependent!r}")
        if self.form not in FORMS:
            raise ValueError(f"unknown form {self.form!r}")
        if self.estimator not in ("ols", "mm"):
            raise ValueError(f"unknown estimator {self.estimator!r}")

    @property
    def controls(self):
        return self.form in ("eq5_outcome_controls", "eq8_knockout_controls")


def table_specs(dependent="CAR_full_match"):
    """The ten determinant models (a)-(j): five forms under OLS, then MM."""
    out = []
    for i, (estimator, form) in enumerate((e, f) for e in ("ols", "mm") for f in FORMS):
        out.append(RegressionSpec(dependent, form, estimator, TABLE_MODELS[i]))
    return out


@dataclass(frozen=True, eq=False)
class DesignMatrix:
    X: np.ndarray
    columns: tuple
    event_ids: tuple

    @property
    def shape(self):
        return self.X.shape

    def column(self, name):
        return self.X[:, self.columns.index(name)]


def _unpack(item):
    return item[0] if isinstance(item, tuple) else item


def build_design_matrix(events, spec: RegressionSpec) -> DesignMatrix:
    """Rows of intercept plus dummies for each event.

    ``events`` holds :class:`MatchEvent` objects or ``(event, expectation)``
    pairs; expectations do not enter the design. Draws, the reference token
    and the reference stage get no column. Control families absent from the
    sample are omitted; an outcome column that is constant raises
    :class:`RankDeficient`.
    """
    events = [_unpack(e) for e in events]
    if not events:
        raise EmptyInput("no events")
    win = np.array([e.outcome == "victory" for e in events], float)
    loss = np.array([e.outcome == "defeat" for e in events], float)
    high = np.array([e.high_stake for e in events], float)
    knockout = np.array([e.knockout for e in events], float)
    n = len(events)

    cols = {"intercept": np.ones(n)}
    if spec.form == "eq6_stake_split":
        cols["victory_low"] = win * (1 - high)
        cols["victory_high"] = win * high
        cols["defeat_low"] = loss * (1 - high)
        cols["defeat_high"] = loss * high
    else:
        cols["victory"] = win
        cols["defeat"] = loss
        if spec.form in ("eq7_knockout_interaction", "eq8_knockout_controls"):
            cols["defeat_x_knockout"] = loss * knockout
    outcome_cols = [c for c in cols if c != "intercept"]

    if spec.controls:
        families = [STAGE_FAMILIES[e.stage] for e in events]
        ref_family = STAGE_FAMILIES[spec.stage_reference]
        for fam in dict.fromkeys(STAGE_FAMILIES.values()):
            if fam != ref_family and fam in families:
                cols[f"stage_{fam}"] = np.array([f == fam for f in families], float)
        for token in sorted({e.token_id for e in events}):
            if token != spec.token_reference:
                cols[f"token_{token}"] = np.array([e.token_id == token for e in events], float)

    for name in outcome_cols:
        if np.all(cols[name] == cols[name][0]):
            raise RankDeficient(f"column {name!r} is constant across the sample")
    X = np.column_stack(list(cols.values()))
    design = DesignMatrix(X, tuple(cols), tuple(e.event_id for e in events))
    _check_rank(design)
    return design


def _check_rank(design):
    X = design.X
    rank = np.linalg.matrix_rank(X)
    if rank < X.shape[1]:
        raise RankDeficient(f"design has rank {rank} < {X.shape[1]} columns {list(design.columns)}")


@dataclass(frozen=True, eq=False)
class RegressionResult:
    terms: tuple
    coef: np.ndarray
    std_errors: np.ndarray
    p_values: np.ndarray
    r_squared: float
    adj_r_squared: float
    pseudo_r_squared: float
    n_obs: int
    estimator: str
    converged: bool = True
    iterations: int = 0
    scale: float = math.nan
    residuals: np.ndarray = field(default=None, repr=False)
    weights: np.ndarray = field(default=None, repr=False)

    def coefficient(self, term):
        return float(self.coef[self.terms.index(term)])

    def std_error(self, term):
        return float(self.std_errors[self.terms.index(term)])

    def p_value(self, term):
        return float(self.p_values[self.terms.index(term)])

    @property
    def adj_or_pseudo_r2(self):
        return self.adj_r_squared if self.estimator == "ols" else self.pseudo_r_squared


def _design_arrays(X, y):
    if isinstance(X, DesignMatrix):
        terms, X = X.columns, X.X
    else:
        X = np.asarray(X, float)
        terms = tuple(f"x{j}" for j in range(X.shape[1]))
    y = np.asarray(y, float).ravel()
    if X.ndim != 2 or X.shape[0] != y.size:
        raise ValueError("X must be (n, k) and y length n")
    n, k = X.shape
    if n <= k:
        raise TooFewObservations(f"need n > k, got n={n}, k={k}")
    if np.linalg.matrix_rank(X) < k:
        raise RankDeficient(f"design matrix is rank deficient ({k} columns)")
    return terms, X, y


def _lstsq(X, y):
    return linalg.lstsq(X, y, lapack_driver="gelsy")[0]


def fit_ols(X, y) -> RegressionResult:
    """Least squares with classical (homoskedastic) standard errors."""
    terms, X, y = _design_arrays(X, y)
    n, k = X.shape
    q, r = np.linalg.qr(X)
    coef = linalg.solve_triangular(r, q.T @ y)
    resid = y - X @ coef
    ssr = float(resid @ resid)
    dev = y - y.mean()
    sst = float(dev @ dev)
    s2 = ssr / (n - k)
    r_inv = linalg.solve_triangular(r, np.eye(k))
    se = np.sqrt(s2 * np.sum(r_inv**2, axis=1))
    with np.errstate(divide="ignore", invalid="ignore"):
        tvals = coef / se
    p = 2 * stats.t.sf(np.abs(tvals), n - k)
    if sst > 0:
        r2 = min(1.0, max(0.0, 1.0 - ssr / sst))
        adj = 1.0 - (1.0 - r2) * (n - 1) / (n - k)
    else:
        r2 = adj = math.nan
    return RegressionResult(terms, coef, se, p, r2, adj, math.nan, n, "ols", True, 0, math.sqrt(s2), resid)


# --- robust machinery -----------------------------------------------------


def bisquare_rho(u, c):
    """Tukey bisquare rho normalised to a maximum of 1."""
    t = np.minimum((np.asarray(u, float) / c) ** 2, 1.0)
    return 1.0 - (1.0 - t) ** 3


def _bisquare_weight(u, c):
    t = (np.asarray(u, float) / c) ** 2
    return np.where(t < 1.0, (1.0 - t) ** 2, 0.0)


def _bisquare_psi(u, c):
    return u * _bisquare_weight(u, c)


def _bisquare_dpsi(u, c):
    t = (np.asarray(u, float) / c) ** 2
    return np.where(t < 1.0, (1.0 - t) * (1.0 - 5.0 * t), 0.0)


def m_scale(resid, c=1.5476, b=0.5, tol=1e-12, max_iter=500, initial=None):
    """Solve ``mean(rho(r / s)) = b`` for the scale ``s``.

    The left side falls monotonically in ``s``, so the root is bracketed by
    doubling or halving a start value and then found with Brent's method.
    Returns 0 when at most a fraction ``b`` of the residuals are non-zero.
    """
    r = np.abs(np.asarray(resid, float))
    if np.count_nonzero(r) <= b * r.size:
        return 0.0
    r2 = (r / c) ** 2
    nb = r.size * b

    def excess(s):
        t = np.minimum(r2 / (s * s), 1.0)
        return float(np.sum(1.0 - (1.0 - t) ** 3)) - nb

    s = initial or float(np.median(r)) / 0.6745 or float(np.mean(r))
    g = excess(s)
    if g == 0:
        return s
    lo = hi = s
    if g > 0:
        while excess(hi) > 0:
            lo, hi = hi, hi * 2.0
    else:
        while excess(lo) < 0:
            lo, hi = lo / 2.0, lo
    return optimize.brentq(excess, lo, hi, xtol=np.finfo(float).tiny, rtol=max(tol, 1e-15), maxiter=max_iter)


@dataclass(frozen=True)
class MMConfig:
    efficiency_constant: float = 4.685
    s_constant: float = 1.5476
    breakdown: float = 0.5
    tol: float = 1e-8
    max_iter: int = 200
    n_subsamples: int = 500
    seed: int = 0
    refine_steps: int = 2
    n_best: int = 5


def _wls(X, y, w):
    sw = np.sqrt(w)
    return _lstsq(X * sw[:, None], y * sw)


def _s_refine(X, y, beta, cfg, steps, scale=None, tol=1e-12):
    """Concentration steps: reweight at the current M-scale, refit."""
    for _ in range(steps):
        r = y - X @ beta
        scale = m_scale(r, cfg.s_constant, cfg.breakdown, tol=tol, initial=scale)
        if scale == 0:
            break
        w = _bisquare_weight(r / scale, cfg.s_constant)
        if np.count_nonzero(w) < X.shape[1]:
            break
        beta = _wls(X, y, w)
    r = y - X @ beta
    return beta, m_scale(r, cfg.s_constant, cfg.breakdown, tol=tol, initial=scale)


def _s_estimate(X, y, cfg):
    n, p = X.shape
    rng = np.random.default_rng(cfg.seed)
    candidates = []
    for idx in range(cfg.n_subsamples):
        rows = np.sort(rng.choice(n, size=p, replace=False))
        Xs = X[rows]
        if np.linalg.matrix_rank(Xs) < p:
            continue
        beta = np.linalg.solve(Xs, y[rows])
        # screening only ranks candidates, so a loose scale tolerance suffices
        beta, scale = _s_refine(X, y, beta, cfg, cfg.refine_steps, tol=1e-6)
        candidates.append((scale, idx, beta))
    if not candidates:
        # elemental subsets of a dummy design are often singular; fall back to LS start
        beta = _lstsq(X, y)
        candidates.append((m_scale(y - X @ beta, cfg.s_constant, cfg.breakdown), 0, beta))
    candidates.sort(key=lambda c: (c[0], c[1]))
    best = None
    for scale, idx, beta in candidates[: cfg.n_best]:
        if scale > 0:
            scale = m_scale(y - X @ beta, cfg.s_constant, cfg.breakdown, initial=scale)
        if scale == 0:
            beta_f, scale_f = beta, 0.0
        else:
            beta_f, scale_f = beta, scale
            for _ in range(cfg.max_iter):
                beta_new, scale_new = _s_refine(X, y, beta_f, cfg, 1, scale_f)
                done = scale_new >= scale_f * (1 - 1e-12)
                if scale_new <= scale_f:
                    beta_f, scale_f = beta_new, scale_new
                if done or scale_f == 0:
                    break
        if best is None or (scale_f, idx) < (best[0], best[1]):
            best = (scale_f, idx, beta_f)
    return best[2], best[0]


def _robust_location(y, scale, c, tol, max_iter):
    mu = float(np.median(y))
    for _ in range(max_iter):
        w = _bisquare_weight((y - mu) / scale, c)
        if w.sum() == 0:
            break
        mu_new = float(np.sum(w * y) / w.sum())
        if abs(mu_new - mu) < tol:
            return mu_new
        mu = mu_new
    return mu


def fit_mm(X, y, config: MMConfig | None = None) -> RegressionResult:
    """MM regression (S-start, bisquare M-step at fixed scale).

    Rows are put in a canonical order before subsampling, so the result does
    not depend on input row order and is reproducible for a given seed. An
    exactly linear ``y`` returns the least-squares fit with scale 0. If the
    S-scale is 0 while ``y`` is not exactly linear, the result carries NaN
    standard errors and ``converged=False``.
    Raises :class:`NoConvergence` if the M-step exceeds ``max_iter``.
    """
    cfg = config or MMConfig()
    terms, X, y = _design_arrays(X, y)
    n, p = X.shape

    order = np.lexsort(np.column_stack([X, y]).T[::-1])
    Xo, yo = X[order], y[order]
    inverse = np.empty(n, int)
    inverse[order] = np.arange(n)

    ls = _lstsq(Xo, yo)
    r_ls = yo - Xo @ ls
    if np.max(np.abs(r_ls)) <= 1e-12 * max(1.0, float(np.max(np.abs(yo)))):
        zeros = np.zeros(p)
        return RegressionResult(
            terms, ls, zeros, np.where(ls == 0, 1.0, 0.0), 1.0, math.nan, 1.0, n, "mm",
            True, 0, 0.0, r_ls[inverse], np.ones(n),
        )

    beta, scale = _s_estimate(Xo, yo, cfg)
    spread = float(np.median(np.abs(yo - np.median(yo)))) or float(np.max(np.abs(yo - yo.mean())))
    if scale <= 1e-10 * spread:
        scale = 0.0
    c1 = cfg.efficiency_constant
    iterations = 0
    if scale == 0:
        # majority exact fit: keep the points it passes through
        w = (np.abs(yo - Xo @ beta) <= 1e-9 * spread).astype(float)
        beta = _wls(Xo, yo, w)
    else:
        change = math.inf
        while change >= cfg.tol:
            if iterations >= cfg.max_iter:
                raise NoConvergence(iterations, change)
            w = _bisquare_weight((yo - Xo @ beta) / scale, c1)
            if np.linalg.matrix_rank(Xo[w > 0]) < p:
                raise RankDeficient("M-step weights leave a rank-deficient design")
            beta_new = _wls(Xo, yo, w)
            change = float(np.max(np.abs(beta_new - beta)))
            beta = beta_new
            iterations += 1
        w = _bisquare_weight((yo - Xo @ beta) / scale, c1)

    resid = yo - Xo @ beta
    if scale > 0:
        u = resid / scale
        psi = _bisquare_psi(u, c1)
        dpsi = _bisquare_dpsi(u, c1)
        kappa = float(np.mean(psi**2)) / float(np.mean(dpsi)) ** 2
        cov = scale**2 * kappa * n / (n - p) * np.linalg.inv(Xo.T @ Xo)
        se = np.sqrt(np.diag(cov))
        mu = _robust_location(yo, scale, c1, cfg.tol, cfg.max_iter)
        rho_fit = float(np.sum(bisquare_rho(u, c1)))
        rho_null = float(np.sum(bisquare_rho((yo - mu) / scale, c1)))
        pseudo = 1.0 - rho_fit / rho_null if rho_null > 0 else 1.0
        wm = float(np.sum(w * yo) / np.sum(w))
        sst_w = float(np.sum(w * (yo - wm) ** 2))
        r2w = 1.0 - float(np.sum(w * resid**2)) / sst_w if sst_w > 0 else math.nan
    else:
        # S-scale collapsed on data that is not exactly linear: more than half
        # the rows sit on one hyperplane (typical when p is close to n / 2).
        # Coefficients of that fit are kept; inference is undefined.
        se = np.full(p, math.nan)
        pseudo = r2w = math.nan
    with np.errstate(divide="ignore", invalid="ignore"):
        tvals = beta / se
    pvals = 2 * stats.t.sf(np.abs(tvals), n - p)
    r2w = r2w if math.isnan(r2w) else max(0.0, min(1.0, r2w))
    return RegressionResult(
        terms, beta, se, pvals, r2w, math.nan, pseudo, n, "mm",
        scale > 0, iterations, scale, resid[inverse], w[inverse],
    )


# --- study driver ---------------------------------------------------------


def run_determinants(outcomes, events, specs=None, mm_config=None, car_scale=0.01):
    """Fit each spec on full-match outcomes.

    ``outcomes`` are :class:`EventOutcomeRow` objects (only ``full_match``
    rows are used); CARs are multiplied by ``car_scale`` (percent-log to
    fractions), CAVs are used as-is. Returns ``[(spec, result)]``; a spec that
    cannot be fitted carries the exception instead of a result.
    """
    specs = specs or table_specs("CAR_full_match")
    full = {o.event_id: o for o in outcomes if o.window == "full_match"}
    events = [_unpack(e) for e in events if _unpack(e).event_id in full]
    if not events:
        raise EmptyInput("no full_match outcomes for the given events")
    out = []
    for spec in specs:
        if spec.dependent == "CAR_full_match":
            y = np.array([full[e.event_id].car * car_scale for e in events])
        else:
            y = np.array([full[e.event_id].cav for e in events])
        try:
            design = build_design_matrix(events, spec)
            res = fit_ols(design, y) if spec.estimator == "ols" else fit_mm(design, y, mm_config)
        except (RankDeficient, TooFewObservations, NoConvergence) as exc:
            res = exc
        out.append((spec, res))
    return out


REGRESSION_COLUMNS = (
    "spec", "estimator", "term", "coefficient", "std_error", "p_value",
    "r2", "adj_or_pseudo_r2", "n", "converged",
)


def regression_rows(results):
    """Flatten ``[(spec, result)]`` into dicts keyed by :data:`REGRESSION_COLUMNS`."""
    rows = []
    for spec, res in results:
        label = spec.name or f"{spec.dependent}:{spec.form}"
        if isinstance(res, Exception):
            rows.append(dict(spec=label, estimator=spec.estimator, term="", coefficient=math.nan,
                             std_error=math.nan, p_value=math.nan, r2=math.nan,
                             adj_or_pseudo_r2=math.nan, n=0, converged=False))
            continue
        for j, term in enumerate(res.terms):
            rows.append(dict(
                spec=label, estimator=res.estimator, term=term,
                coefficient=float(res.coef[j]), std_error=float(res.std_errors[j]),
                p_value=float(res.p_values[j]), r2=res.r_squared,
                adj_or_pseudo_r2=res.adj_or_pseudo_r2, n=res.n_obs, converged=res.converged,
            ))
    return rows
