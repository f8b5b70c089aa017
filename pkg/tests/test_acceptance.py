"""Acceptance criteria, one test each, each printing a PASS/FAIL line."""

import itertools
import time
from pathlib import Path

import numpy as np
import pytest
from scipy import stats

from fanstudy.determinants import MMConfig, RegressionSpec, build_design_matrix, fit_mm, fit_ols
from fanstudy.events import DAILY_WINDOWS, resolve_windows, run_event_study
from fanstudy.inference import t_from_summary, wilcoxon_signed_rank
from fanstudy.loaders import build_dataset, wc2022_matches
from fanstudy.models import EstimationWindow, ModelKind
from fanstudy.odds import OddsTriple, classify_expectation, devig, surprise_flag
from fanstudy.reports import stars
from fanstudy.synthetic import SyntheticSpec, build_synthetic

from test_reports_cli import GOLDEN, mask_numbers, run_pipeline

MIN = np.timedelta64(60, "s")
MODELS = ("constant_mean", "market_model:BTC", "market_model:CHZ")


@pytest.fixture
def verdict(capsys):
    def emit(number, name, ok, detail=""):
        with capsys.disabled():
            print(f"\nACCEPTANCE {number:>2} {'PASS' if ok else 'FAIL'}  {name}  {detail}")
        assert ok, detail
    return emit


def test_01_devig_worked_example(verdict):
    odds = OddsTriple(1.12, 9.21, 25.52)
    start = time.perf_counter()
    probs = devig(odds)
    label = classify_expectation(probs)
    surprise = surprise_flag(label, "defeat")
    elapsed = time.perf_counter() - start
    printed = {"overround": 4.1, "p_win": 85.8, "p_draw": 10.4, "p_loss": 3.8}
    got = {"overround": probs.overround * 100, "p_win": probs.p_win * 100,
           "p_draw": probs.p_draw * 100, "p_loss": probs.p_loss * 100}
    worst = max(abs(got[k] - printed[k]) for k in printed)
    match_1 = [e for e in wc2022_matches() if e.event_id == "1"][0]
    ok = (worst <= 0.05 and label.label == "expected_victory" and surprise
          and match_1.outcome == "defeat" and elapsed < 1e-3)
    verdict(1, "de-vig worked example", ok,
            f"max |dev| {worst:.4f} pp (tol 0.05), label {label.label}, surprise {surprise}, "
            f"{elapsed * 1e6:.0f} us (tol 1000)")


def test_02_printed_t_and_stars(verdict):
    t = t_from_summary(-7.952, 2.598)
    star_ok = (stars(0.009) == "***" and stars(0.01) == "**" and stars(0.049) == "**"
               and stars(0.05) == "*" and stars(0.099) == "*" and stars(0.10) == "")
    ok = round(t, 2) == -3.06 and star_ok
    verdict(2, "printed CAAR/SE pair and star thresholds", ok, f"t = {t:.4f} (target -3.06), stars ok {star_ok}")


def test_03_null_oracle(verdict):
    start = time.perf_counter()
    data = build_synthetic(SyntheticSpec(daily=False))
    ds = build_dataset(data.minute.bars, data.minute.events)
    tables = [run_event_study(ds, ModelKind.parse(m)) for m in MODELS]
    elapsed = time.perf_counter() - start
    worst = max(max(abs(r.caar), abs(r.cav_mean)) for t in tables for r in t.rows)
    n_rows = sum(len(t.rows) for t in tables)
    ok = worst < 1e-9 and n_rows == 21 and all(not t.excluded for t in tables) and elapsed < 5.0
    verdict(3, "end-to-end null oracle", ok,
            f"max |CAAR|,|CAV| {worst:.2e} (tol 1e-9) over {n_rows} rows, {elapsed:.2f} s (tol 5)")


def test_04_shock_recovery(verdict):
    data = build_synthetic(SyntheticSpec(shocks={"second_half": 5.0}, daily=False))
    ds = build_dataset(data.minute.bars, data.minute.events)
    table = run_event_study(ds, ModelKind.constant_mean())
    worst_shock = worst_zero = worst_add = 0.0
    for e in ds.events:
        w = {x.label: x for x in resolve_windows(e)}
        car = {label: table.outcome(e.event_id, label).car for label in w}
        worst_shock = max(worst_shock, abs(car["second_half"] - 5.0 * w["second_half"].n_bars(MIN)))
        for label in ("pre_match", "first_half", "half_time", "post_match"):
            worst_zero = max(worst_zero, abs(car[label]))
        worst_add = max(worst_add, abs(car["first_half"] + car["half_time"] + car["second_half"]
                                       - car["regular_match"]))
    ok = worst_shock < 1e-9 and worst_zero < 1e-9 and worst_add < 1e-9
    verdict(4, "shock recovery", ok,
            f"shock err {worst_shock:.2e}, disjoint {worst_zero:.2e}, additivity {worst_add:.2e} (tol 1e-9)")


def test_05_ols_oracle(verdict):
    rng = np.random.default_rng(5)
    worst = 0.0
    for _ in range(50):
        n, k = int(rng.integers(8, 30)), int(rng.integers(2, 6))
        X = np.column_stack([np.ones(n), rng.normal(size=(n, k - 1))])
        y = rng.normal(size=n)
        normal_eq = np.linalg.solve(X.T @ X, X.T @ y)
        worst = max(worst, float(np.max(np.abs(fit_ols(X, y).coef - normal_eq))))

    events = wc2022_matches()
    y = rng.normal(size=len(events))
    d = build_design_matrix(events, RegressionSpec(form="eq4_outcome"))
    coef = fit_ols(d.X, y).coef
    outcome = np.array([e.outcome for e in events])
    base = y[outcome == "draw"].mean()
    group = np.array([base, y[outcome == "victory"].mean() - base, y[outcome == "defeat"].mean() - base])
    eq4 = float(np.max(np.abs(coef - group)))
    ok = worst < 1e-10 and eq4 < 1e-12
    verdict(5, "OLS oracle", ok, f"normal-equation max dev {worst:.2e} (tol 1e-10), group-mean dev {eq4:.2e}")


def _brute_p(values):
    ranks = stats.rankdata(np.abs(values))
    observed = ranks[values > 0].sum()
    sums = [sum(r for r, s in zip(ranks, signs) if s) for signs in itertools.product((0, 1), repeat=len(values))]
    le = sum(s <= observed for s in sums)
    ge = sum(s >= observed for s in sums)
    return min(1.0, 2.0 * min(le, ge) / 2 ** len(values))


def test_06_wilcoxon_oracle(verdict):
    rng = np.random.default_rng(6)
    mismatches = checked = 0
    for n in range(1, 11):
        for _ in range(20):
            v = rng.normal(rng.normal(0, 0.7), 1, n)
            if rng.random() < 0.3:
                v = np.round(v, 0) + np.sign(v) * 0.5  # ties in |v|
            checked += 1
            mismatches += wilcoxon_signed_rank(v).p_value != _brute_p(v)
    gap = 0.0
    for _ in range(200):
        v = rng.normal(rng.normal(0, 0.5), 1, 20)
        gap = max(gap, abs(wilcoxon_signed_rank(v).p_value - wilcoxon_signed_rank(v, exact_cutoff=0).p_value))
    ok = mismatches == 0 and gap < 0.01
    verdict(6, "Wilcoxon oracle", ok,
            f"{mismatches}/{checked} exact mismatches, max normal gap at n=20 {gap:.4f} (tol 0.01)")


def test_07_mm_robustness(verdict):
    rng = np.random.default_rng(7)
    n = 100
    x = rng.normal(size=n)
    X = np.column_stack([np.ones(n), x])
    y = 1.0 + 2.0 * x + rng.normal(0, 0.5, n)
    clean = fit_ols(X, y).coef[1]
    dirty_y = y.copy()
    hit = np.argsort(x)[-20:]  # 20% gross outliers on the high-x rows
    dirty_y[hit] -= 30.0
    ols_dev = abs(fit_ols(X, dirty_y).coef[1] - clean)
    mm = fit_mm(X, dirty_y, MMConfig(seed=11))
    mm_dev = abs(mm.coef[1] - clean)
    ratio = mm_dev / ols_dev

    exact = fit_mm(X, 1.0 + 2.0 * x)
    y_tiny = 1.0 + 2.0 * x + rng.normal(0, 1e-7, n)
    tiny_gap = float(np.max(np.abs(fit_mm(X, y_tiny).coef - fit_ols(X, y_tiny).coef)))
    exact_gap = float(np.max(np.abs(exact.coef - np.array([1.0, 2.0]))))
    again = fit_mm(X, dirty_y, MMConfig(seed=11))
    bits = again.coef.tobytes() == mm.coef.tobytes() and again.std_errors.tobytes() == mm.std_errors.tobytes()
    ok = ratio < 0.2 and exact_gap < 1e-6 and tiny_gap < 1e-6 and bits
    verdict(7, "MM robustness", ok,
            f"|MM-clean|/|OLS-clean| = {ratio:.4f} (tol 0.2), clean gap {max(exact_gap, tiny_gap):.2e} "
            f"(tol 1e-6), bit-identical {bits}")


def test_08_daily_arithmetic(verdict):
    a = 0.37
    data = build_synthetic(SyntheticSpec(n_events=1, daily_shock=a, daily_noise=0.0))
    ds = build_dataset(data.daily.bars, data.daily.events)
    est = EstimationWindow.daily()
    table = run_event_study(ds, ModelKind.market_model("BTC"), frequency="day", estimation=est)
    lengths = {f"{lo}..{hi}": hi - lo + 1 for lo, hi in DAILY_WINDOWS}
    worst = 0.0
    seen = set()
    for o in table.outcomes:
        seen.add(o.window)
        worst = max(worst, abs(o.car - o.n_bars * a))
    bars_ok = sorted(o.n_bars for o in table.outcomes if o.token_id == "ARG") == sorted(lengths.values())
    ok = (worst < 1e-9 and bars_ok and len(seen) == 5 and est.end_offset - est.start_offset + 1 == 200)
    verdict(8, "daily-mode arithmetic", ok,
            f"max |CAR - L*a| {worst:.2e} (tol 1e-9), windows {sorted(lengths)}, estimation "
            f"{est.end_offset - est.start_offset + 1} days")


@pytest.fixture(scope="module")
def pipeline_runs(tmp_path_factory):
    return run_pipeline(tmp_path_factory.mktemp("acc_a")), run_pipeline(tmp_path_factory.mktemp("acc_b"))


def test_09_determinism(verdict, pipeline_runs):
    a, b = pipeline_runs
    files = sorted(p.name for p in a.iterdir() if p.suffix in (".csv", ".svg", ".json"))
    differ = [f for f in files if (a / f).read_bytes() != (b / f).read_bytes()]
    ok = not differ and len(files) >= 10
    verdict(9, "determinism", ok, f"{len(files)} CSV/SVG/JSON files compared, differing: {differ or 'none'}")


def test_10_report_layout(verdict, pipeline_runs):
    report = (pipeline_runs[0] / "report.md").read_text(encoding="utf-8")
    golden = Path(GOLDEN).read_text(encoding="utf-8")
    masked = mask_numbers(report)
    diff = [i for i, (u, v) in enumerate(itertools.zip_longest(masked.splitlines(), golden.splitlines())) if u != v]
    ok = not diff
    verdict(10, "report layout vs golden", ok, f"{len(golden.splitlines())} lines, first differing line: "
            f"{diff[0] + 1 if diff else 'none'}")
