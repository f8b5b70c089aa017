import csv
import io
import json
import re
from pathlib import Path

import numpy as np
import pytest

from fanstudy.cli import LOCK_NAME, main, read_config_file
from fanstudy.events import load_matches
from fanstudy.loaders import build_dataset, load_bars
from fanstudy.reports import (
    cumulative_return_plot,
    parse_outcomes_csv,
    parse_study_csv,
    stars,
)
from fanstudy.timeseries import log_returns

GOLDEN = Path(__file__).parent / "golden" / "report_structure.md"

SYNTH = ["--seed", "3", "--noise", "0.05", "--volume-noise", "0.2", "--shock", "second_half=0.02",
         "--daily-noise", "1.0", "--daily-shock", "0.3"]
PIPELINE = ["event-study", "daily-study", "classify-odds", "determinants", "plot", "report"]


def run_pipeline(root):
    """Synthesize a dataset under ``root`` and run every analysis command on it."""
    assert main(["synth", "--output-dir", str(root), *SYNTH]) == 0
    cfg = str(root / "fanstudy.cfg")
    for command in PIPELINE:
        assert main([command, "--config", cfg, "--mm-subsamples", "100"]) == 0, command
    return root / "results"


_NUMBER = re.compile(r"-?\d+\.\d+%?\*{0,3}|-?\d+%|\bnan\b")


def mask_numbers(text):
    """Blank out every decimal figure (with its stars) so only the layout remains."""
    return _NUMBER.sub("x", text)


@pytest.fixture(scope="module")
def results(tmp_path_factory):
    return run_pipeline(tmp_path_factory.mktemp("run_a"))


def test_outputs_present(results):
    names = {p.name for p in results.iterdir()}
    expected = {f"table{i}.{ext}" for i in range(1, 6) for ext in ("csv", "md")}
    expected |= {"event_outcomes.csv", "daily_outcomes.csv", "excluded.csv", "figure1.csv", "figure1.svg",
                 "report.md", "summary.json"}
    assert names == expected
    assert not (results / LOCK_NAME).exists()


def test_summary(results):
    summary = json.loads((results / "summary.json").read_text())
    assert set(summary["runs"]) == set(PIPELINE)
    assert set(summary["versions"]) == {"fanstudy", "numpy", "scipy", "python"}
    run = summary["runs"]["event-study"]
    assert run["outputs"] == ["event_outcomes.csv", "excluded.csv", "table2.csv"]
    assert run["config"]["bars_dir"] == "bars" and run["excluded"] == []
    assert all(len(h) == 64 for h in run["inputs"].values())
    assert "ARG_minute.csv" in run["inputs"]


def test_determinism(results, tmp_path):
    again = run_pipeline(tmp_path / "run_b")
    for path in sorted(results.iterdir()):
        assert path.read_bytes() == (again / path.name).read_bytes(), path.name


def test_report_golden(results):
    masked = mask_numbers((results / "report.md").read_text(encoding="utf-8"))
    assert masked == GOLDEN.read_text(encoding="utf-8")


def test_report_table_shapes(results):
    t2 = (results / "table2.md").read_text().splitlines()
    labels = [line.split("|")[1].strip() for line in t2 if line.startswith("| (")]
    assert len(labels) == 21 and labels[:2] == ["(i) Pre-match (-60 to 0)", "(ii) First half (0 to 45)"]
    panels = [line.split("|")[1].strip() for line in t2 if line.startswith("| **(")]
    assert panels == ["**(a) Constant Mean Return**", "**(b) Market Model (BTC)**", "**(c) Market Model (CHZ)**"]
    t5 = (results / "table5.md").read_text().splitlines()
    assert [line.split("|")[1].strip() for line in t5[2:7]] == [
        "-120 to -1", "-60 to -1", "-30 to -1", "0 to 26", "27 to 56"]
    for name in ("table3.md", "table4.md"):
        header = (results / name).read_text().splitlines()[0]
        assert [c.strip() for c in header.strip("|").split("|")][1:] == [f"({c})" for c in "abcdefghij"]


def test_stars_in_markdown_follow_csv(results):
    rows = parse_study_csv((results / "table2.csv").read_text())
    md = (results / "table2.md").read_text()
    for r in rows:
        assert stars(r["car_t_p"]) in ("", "*", "**", "***")
    second = [r for r in rows if r["window"] == "second_half"][0]
    assert f"{second['car_t']:.2f}{stars(second['car_t_p'])}" in md


def test_study_csv_round_trip(results):
    text = (results / "table2.csv").read_text()
    rows = parse_study_csv(text)
    assert len(rows) == 21
    # every CSV field survives the float parse
    raw = list(csv.DictReader(io.StringIO(text)))
    for parsed, original in zip(rows, raw):
        assert parsed["window"] == original["window"]
        assert parsed["car"] == float(original["car"])


def test_outcomes_feed_determinants(results):
    outcomes = parse_outcomes_csv((results / "event_outcomes.csv").read_text(), model="constant_mean")
    assert len(outcomes) == 21 * 7


def test_figure_prefix_sum_oracle(results, tmp_path):
    root = results.parent
    events = load_matches(root / "matches.json")
    raw = load_bars(root / "bars", "minute", ["ARG", "BFT", "POR", "SNFT"])
    ds = build_dataset(raw, events)
    rows = list(csv.reader(io.StringIO((results / "figure1.csv").read_text())))
    assert rows[0] == ["timestamp", "ARG", "BFT", "POR", "SNFT"]
    for j, token in enumerate(rows[0][1:], start=1):
        r = log_returns(ds.bars[token])
        running = 0.0
        for i in (0, 1, len(r) // 2, len(r) - 1):
            running = float(np.sum(r.values[: i + 1]))
            assert abs(float(rows[i + 1][j]) - running) < 1e-9
    svg = (results / "figure1.svg").read_text()
    assert svg.startswith("<svg") and svg.count("<polyline") == 4


def test_plot_rejects_misaligned():
    from fanstudy.timeseries import ReturnSeries

    t = np.array(["2022-11-20T00:00:00", "2022-11-20T00:01:00"], "datetime64[s]")
    a = ReturnSeries("A", "minute", t, np.array([1.0, 2.0]), np.ones(2, bool))
    b = ReturnSeries("B", "minute", t + np.timedelta64(60, "s"), np.array([1.0, 2.0]), np.ones(2, bool))
    with pytest.raises(ValueError):
        cumulative_return_plot([a, b])


class TestCommandLine:
    def test_lock_blocks_second_run(self, results):
        (results / LOCK_NAME).write_text("123")
        try:
            assert main(["report", "--output-dir", str(results)]) == 1
        finally:
            (results / LOCK_NAME).unlink()

    def test_report_skips_missing(self, tmp_path, results):
        out = tmp_path / "partial"
        out.mkdir()
        (out / "table1.csv").write_bytes((results / "table1.csv").read_bytes())
        assert main(["report", "--output-dir", str(out)]) == 0
        report = (out / "report.md").read_text()
        assert "Table 1" in report and "Table 2" not in report
        assert not (out / "table2.md").exists()

    def test_report_without_inputs_fails(self, tmp_path):
        assert main(["report", "--output-dir", str(tmp_path / "empty")]) == 1

    def test_missing_inputs_fail(self, tmp_path):
        args = ["event-study", "--bars-dir", str(tmp_path / "nope"), "--matches", str(tmp_path / "m.json"),
                "--output-dir", str(tmp_path / "out")]
        assert main(args) == 1

    def test_config_file_and_override(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("# comment\nbars_dir = data/bars\nodds_threshold = 25\ndrop_gaps = true\n")
        values = read_config_file(cfg)
        assert Path(values["bars_dir"]) == tmp_path.resolve() / "data" / "bars"
        assert values["odds_threshold"] == 25.0 and values["drop_gaps"] is True
        cfg.write_text("no_such_key = 1\n")
        with pytest.raises(ValueError):
            read_config_file(cfg)

    def test_threshold_override_changes_labels(self, tmp_path, results):
        root = results.parent
        out = tmp_path / "odds"
        base = ["classify-odds", "--config", str(root / "fanstudy.cfg"), "--output-dir", str(out)]
        assert main(base + ["--odds-threshold", "99"]) == 0
        text = (out / "table1.csv").read_text()
        assert "expected_victory" not in text and "expected_defeat" not in text

    def test_one_panel_per_model(self, results):
        rows = parse_study_csv((results / "table2.csv").read_text())
        assert sorted({r["model"] for r in rows}) == ["constant_mean", "market_model:BTC", "market_model:CHZ"]
