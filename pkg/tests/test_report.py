import json

import pytest

from robust_transducer.report import build_rows, load_runs, markdown_table, write_report
from robust_transducer.training import write_history


def make_run(root, name, loss, ctype, pct, dev, test):
    d = root / name
    d.mkdir()
    summary = {"loss": loss, "corruption_type": ctype, "corruption_pct": pct, "dev_wer": dev, "test_wer": test}
    (d / "summary.json").write_text(json.dumps(summary))
    hist = [
        {"epoch": 1, "train_loss": 3.0, "dev_wer": 0.9, "sub": 5, "ins": 1, "del": 2, "current_penalty": None},
        {"epoch": 2, "train_loss": 1.0, "dev_wer": dev, "sub": 1, "ins": 0, "del": 1, "current_penalty": None},
    ]
    write_history(d / "metrics.csv", hist)


@pytest.fixture
def runs(tmp_path):
    make_run(tmp_path, "rnnt_clean", "rnnt", "none", 0.0, 0.05, 0.068)
    make_run(tmp_path, "rnnt_del", "rnnt", "del", 50.0, 0.70, 0.814)
    make_run(tmp_path, "star_del", "star", "del", 50.0, 0.08, 0.110)
    make_run(tmp_path, "bypass_ins", "bypass", "ins", 50.0, 0.1, 0.1)
    return tmp_path


def test_rows_compute_werd_and_werdr(runs):
    rows, warnings = build_rows(load_runs(runs))
    by = {r["run"]: r for r in rows}
    assert by["rnnt_clean"]["werd"] is None
    assert by["rnnt_del"]["werd"] == pytest.approx(0.746)
    assert by["star_del"]["werd"] == pytest.approx(0.042)
    assert by["star_del"]["werdr"] == pytest.approx(0.944, abs=5e-4)
    assert by["bypass_ins"]["werdr"] is None
    assert any("bypass_ins" in w for w in warnings)
    assert rows[0]["run"] == "rnnt_clean"


def test_missing_clean_run_warns(tmp_path):
    make_run(tmp_path, "star_del", "star", "del", 50.0, 0.1, 0.1)
    rows, warnings = build_rows(load_runs(tmp_path))
    assert rows[0]["werd"] is None and warnings


def test_markdown_table(runs):
    rows, _ = build_rows(load_runs(runs))
    md = markdown_table(rows)
    assert md.splitlines()[0].startswith("| run | loss |")
    assert "| star_del | star | DEL 50% | 8.0 | 11.0 | 4.2 | 94.4% |" in md


def test_write_report_produces_files(runs, tmp_path):
    out = tmp_path / "out"
    res = write_report(runs, out)
    for key in ("csv", "markdown", "curves", "summary"):
        assert (out / res["paths"][key].split("/")[-1]).exists()
    assert (out / "learning_curves.png").read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"
    csv_lines = (out / "report.csv").read_text().splitlines()
    assert csv_lines[0] == "loss,corruption_type,corruption_pct,dev_wer,test_wer,werd,werdr"
    assert len(csv_lines) == 5
    again = write_report(runs, tmp_path / "out2")
    assert (tmp_path / "out2" / "wer_summary.png").read_bytes() == (out / "wer_summary.png").read_bytes()
    assert again["rows"] == res["rows"]


def test_report_without_figures(runs, tmp_path):
    res = write_report(runs, tmp_path / "o", figures=False)
    assert set(res["paths"]) == {"csv", "markdown"}
