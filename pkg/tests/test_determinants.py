import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fanstudy.determinants import (
    MMConfig,
    RegressionSpec,
    bisquare_rho,
    build_design_matrix,
    fit_mm,
    fit_ols,
    m_scale,
    regression_rows,
    run_determinants,
    table_specs,
)
from fanstudy.errors import RankDeficient, TooFewObservations
from fanstudy.events import EventOutcomeRow, MatchEvent
from fanstudy.loaders import wc2022_matches
from fanstudy.timeseries import to_instant

MIN = np.timedelta64(60, "s")


def ev(i, outcome="victory", stage="group1", token="ARG"):
    k = to_instant("2022-11-20T10:00:00Z") + i * 1440 * MIN
    score = {"victory": (1, 0), "draw": (0, 0), "defeat": (0, 1)}[outcome]
    return MatchEvent(str(i), token, "X", stage, k, k + 48 * MIN, k + 63 * MIN, k + 112 * MIN,
                      score_for=score[0], score_against=score[1], outcome=outcome)


def pinv_oracle(X, y):
    return np.linalg.pinv(X.T @ X) @ X.T @ y


def line_fixture(rng, n=100, noise=0.5):
    x = rng.normal(size=n)
    X = np.column_stack([np.ones(n), x])
    return X, 1.0 + 2.0 * x + rng.normal(0, noise, n)


class TestDesign:
    def test_eq4_rows(self):
        events = [ev(1, "victory"), ev(2, "draw"), ev(3, "defeat")]
        d = build_design_matrix(events, RegressionSpec(form="eq4_outcome"))
        assert d.columns == ("intercept", "victory", "defeat")
        assert d.X.tolist() == [[1, 1, 0], [1, 0, 0], [1, 0, 1]]

    def test_eq7_interaction(self):
        events = [ev(1, "victory"), ev(2, "draw"), ev(3, "defeat", "round_of_16"), ev(4, "defeat")]
        d = build_design_matrix(events, RegressionSpec(form="eq7_knockout_interaction"))
        assert d.X[2].tolist() == [1, 0, 1, 1]
        knockout = np.array([e.knockout for e in events], float)
        assert np.array_equal(d.column("defeat_x_knockout"), d.column("defeat") * knockout)

    def test_eq6_stake_split(self):
        events = [ev(1, "victory"), ev(2, "victory", "final"), ev(3, "defeat"), ev(4, "defeat", "quarter_final"),
                  ev(5, "draw")]
        d = build_design_matrix(events, RegressionSpec(form="eq6_stake_split"))
        assert d.columns == ("intercept", "victory_low", "victory_high", "defeat_low", "defeat_high")
        assert np.array_equal(d.X[:, 1:].sum(axis=1), [1, 1, 1, 1, 0])

    def test_controls_skip_references(self):
        d = build_design_matrix(wc2022_matches(), RegressionSpec(form="eq5_outcome_controls"))
        assert "stage_semi_final" not in d.columns and "token_SNFT" not in d.columns
        assert {"stage_group", "stage_round_of_16", "stage_quarter_final", "stage_final",
                "token_ARG", "token_BFT", "token_POR"} <= set(d.columns)
        assert set(np.unique(d.X)) <= {0.0, 1.0}

    def test_constant_outcome_column(self):
        with pytest.raises(RankDeficient):
            build_design_matrix([ev(1), ev(2), ev(3, "draw")], RegressionSpec(form="eq4_outcome"))
        with pytest.raises(RankDeficient):
            # no defeats in the sample: the defeat column is all zero
            build_design_matrix([ev(1), ev(2, "draw")], RegressionSpec(form="eq4_outcome"))

    def test_table_specs(self):
        specs = table_specs("CAV_full_match")
        assert [s.name for s in specs] == list("abcdefghij")
        assert [s.estimator for s in specs] == ["ols"] * 5 + ["mm"] * 5
        assert [s.controls for s in specs[:5]] == [False, True, False, False, True]


class TestOls:
    def test_pinv_oracle(self, rng):
        for _ in range(50):
            n, k = int(rng.integers(8, 30)), int(rng.integers(2, 6))
            X = np.column_stack([np.ones(n), rng.normal(size=(n, k - 1))])
            y = rng.normal(size=n)
            assert np.max(np.abs(fit_ols(X, y).coef - pinv_oracle(X, y))) < 1e-10

    def test_group_means(self, rng):
        outcomes = ["victory"] * 9 + ["draw"] * 5 + ["defeat"] * 7
        events = [ev(i, o) for i, o in enumerate(outcomes)]
        y = rng.normal(size=21)
        res = fit_ols(build_design_matrix(events, RegressionSpec()), y)
        mean = {o: y[[i for i, e in enumerate(outcomes) if e == o]].mean() for o in set(outcomes)}
        assert abs(res.coefficient("victory") - (mean["victory"] - mean["draw"])) < 1e-12
        assert abs(res.coefficient("defeat") - (mean["defeat"] - mean["draw"])) < 1e-12

    def test_exact_linear(self, rng):
        X = np.column_stack([np.ones(12), rng.normal(size=(12, 2))])
        res = fit_ols(X, X @ np.array([0.5, -1.0, 2.0]))
        assert np.allclose(res.residuals, 0, atol=1e-12) and res.r_squared == 1.0

    def test_orthogonal_residuals(self, rng):
        X = np.column_stack([np.ones(30), rng.normal(size=(30, 3))])
        res = fit_ols(X, rng.normal(size=30))
        assert np.max(np.abs(X.T @ res.residuals)) < 1e-9
        assert 0 <= res.r_squared <= 1

    def test_classical_se(self, rng):
        X = np.column_stack([np.ones(25), rng.normal(size=25)])
        y = rng.normal(size=25)
        res = fit_ols(X, y)
        s2 = res.residuals @ res.residuals / 23
        assert np.allclose(res.std_errors, np.sqrt(np.diag(s2 * np.linalg.inv(X.T @ X))), rtol=1e-10)

    def test_shift_moves_intercept_only(self, rng):
        X = np.column_stack([np.ones(20), rng.normal(size=(20, 2))])
        y = rng.normal(size=20)
        a, b = fit_ols(X, y), fit_ols(X, y + 7.5)
        assert np.max(np.abs(a.coef[1:] - b.coef[1:])) < 1e-10
        assert abs(b.coef[0] - a.coef[0] - 7.5) < 1e-10

    def test_errors(self):
        with pytest.raises(TooFewObservations):
            fit_ols(np.ones((2, 2)), [1, 2])
        with pytest.raises(RankDeficient):
            fit_ols(np.column_stack([np.ones(5), np.ones(5)]), np.arange(5.0))


class TestRobustPieces:
    def test_rho(self):
        assert bisquare_rho(0.0, 1.5) == 0.0
        assert bisquare_rho(10.0, 1.5) == 1.0
        assert bisquare_rho(0.75, 1.5) == pytest.approx(1 - (1 - 0.25) ** 3)

    def test_m_scale_solves_equation(self, rng):
        r = rng.normal(size=200)
        s = m_scale(r)
        assert np.mean(bisquare_rho(r / s, 1.5476)) == pytest.approx(0.5, abs=1e-10)

    def test_m_scale_consistent_at_normal(self):
        # c = 1.5476 with b = 0.5 makes the scale consistent for N(0, 1)
        from scipy import stats

        r = stats.norm.ppf((np.arange(20000) + 0.5) / 20000)
        assert m_scale(r) == pytest.approx(1.0, abs=2e-3)

    def test_m_scale_majority_zero(self):
        assert m_scale([0, 0, 0, 1, 2]) == 0.0


class TestMM:
    def test_exact_linear_fast_path(self, rng):
        X = np.column_stack([np.ones(15), rng.normal(size=15)])
        y = X @ np.array([1.0, -3.0])
        res = fit_mm(X, y)
        assert res.scale == 0.0 and res.converged
        assert np.allclose(res.coef, [1.0, -3.0], atol=1e-12)
        assert np.allclose(res.coef, fit_ols(X, y).coef, atol=1e-12)

    def test_clean_within_noise_se(self, rng):
        X, y = line_fixture(rng, 60)
        mm, ols = fit_mm(X, y), fit_ols(X, y)
        assert np.all(np.abs(mm.coef - ols.coef) < 3 * ols.std_errors)
        assert mm.converged and mm.iterations > 0

    def test_tiny_noise_matches_ols(self, rng):
        X, y = line_fixture(rng, 100, noise=1e-7)
        assert np.max(np.abs(fit_mm(X, y).coef - fit_ols(X, y).coef)) < 1e-6

    def test_single_gross_outlier(self, rng):
        X, y = line_fixture(rng, 50)
        clean = fit_ols(X, y).coef[1]
        y[np.argmax(X[:, 1])] -= 40.0  # > 10 sigma at a high-leverage row
        dirty = fit_ols(X, y).coef[1]
        robust = fit_mm(X, y).coef[1]
        assert abs(robust - clean) < 0.1
        assert abs(dirty - clean) > 3 * abs(robust - clean)

    def test_row_order_invariance(self, rng):
        X, y = line_fixture(rng, 40)
        y[:6] += 15
        perm = rng.permutation(40)
        a, b = fit_mm(X, y), fit_mm(X[perm], y[perm])
        assert np.array_equal(a.coef, b.coef) and a.scale == b.scale
        assert np.array_equal(a.residuals[perm], b.residuals)

    def test_bit_reproducible(self, rng):
        X, y = line_fixture(rng, 40)
        y[:6] += 15
        a, b = fit_mm(X, y, MMConfig(seed=7)), fit_mm(X, y, MMConfig(seed=7))
        assert a.coef.tobytes() == b.coef.tobytes() and a.std_errors.tobytes() == b.std_errors.tobytes()

    def test_shift_moves_intercept_only(self, rng):
        X, y = line_fixture(rng, 40)
        a, b = fit_mm(X, y), fit_mm(X, y + 100.0)
        assert abs(a.coef[1] - b.coef[1]) < 1e-10
        assert abs(b.coef[0] - a.coef[0] - 100.0) < 1e-10

    def test_pseudo_r2_range(self, rng):
        X, y = line_fixture(rng, 40)
        res = fit_mm(X, y)
        assert 0 <= res.pseudo_r_squared <= 1 and 0 <= res.r_squared <= 1
        assert res.adj_or_pseudo_r2 == res.pseudo_r_squared

    def test_no_convergence(self, rng):
        from fanstudy.errors import NoConvergence

        X, y = line_fixture(rng, 40)
        y[:8] += 10
        with pytest.raises(NoConvergence):
            fit_mm(X, y, MMConfig(max_iter=1, tol=1e-300))

    def test_majority_exact_fit_flagged(self):
        # 11 of 15 rows on one line: the S-scale is 0 but y is not exactly linear
        x = np.arange(15.0)
        y = 2.0 * x
        y[11:] += np.array([5.0, -7.0, 9.0, 4.0])
        res = fit_mm(np.column_stack([np.ones(15), x]), y)
        assert res.scale == 0.0 and not res.converged
        assert np.allclose(res.coef, [0.0, 2.0], atol=1e-9)
        assert np.all(np.isnan(res.std_errors))


def _outcomes(events, cars):
    return [EventOutcomeRow(e.event_id, e.token_id, "full_match", c, 2 * c, 112) for e, c in zip(events, cars)]


def test_run_determinants_recovers_construction():
    events = wc2022_matches()
    a, b_win, b_loss = 1.0, 2.0, -3.0
    cars = [a + b_win * (e.outcome == "victory") + b_loss * (e.outcome == "defeat") for e in events]
    results = run_determinants(_outcomes(events, cars), events, table_specs("CAR_full_match"), MMConfig(n_subsamples=50))
    by = {spec.name: res for spec, res in results}
    for name in "abdfgi":
        res = by[name]
        assert not isinstance(res, Exception), name
        assert res.coefficient("victory") == pytest.approx(b_win * 0.01, abs=1e-10)
        assert res.coefficient("defeat") == pytest.approx(b_loss * 0.01, abs=1e-10)
    assert by["c"].coefficient("defeat_high") == pytest.approx(b_loss * 0.01, abs=1e-10)
    rows = regression_rows(results)
    assert {r["spec"] for r in rows} == set("abcdefghij")


def test_run_determinants_cav_unscaled():
    events = wc2022_matches()
    cars = [float(e.outcome == "victory") for e in events]
    spec = RegressionSpec("CAV_full_match", "eq4_outcome", "ols", "a")
    [(_, res)] = run_determinants(_outcomes(events, cars), events, [spec])
    assert res.coefficient("victory") == pytest.approx(2.0, abs=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_ols_oracle_property(seed):
    rng = np.random.default_rng(seed)
    n, k = int(rng.integers(6, 25)), int(rng.integers(1, 5))
    X = np.column_stack([np.ones(n), rng.normal(size=(n, k))])
    y = rng.normal(size=n) * 10 ** rng.uniform(-3, 3)
    coef = fit_ols(X, y).coef
    assert np.all(np.abs(coef - pinv_oracle(X, y)) <= 1e-10 * max(1.0, float(np.max(np.abs(coef)))))
