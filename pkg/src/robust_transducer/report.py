"""Aggregate training runs into WER / WERD / WERDR tables and figures."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

from .metrics import REPORT_COLUMNS, report_csv, werd, werdr
from .training import read_history

log = logging.getLogger(__name__)

SUMMARY_FILE = "summary.json"
HISTORY_FILE = "metrics.csv"


@dataclass
class RunRecord:
    name: str
    summary: dict
    history: list[dict]

    @property
    def loss(self) -> str:
        return self.summary["loss"]

    @property
    def corruption(self) -> tuple[str, float]:
        return self.summary.get("corruption_type", "none"), float(self.summary.get("corruption_pct", 0.0))


def load_runs(runs_dir: str | Path) -> list[RunRecord]:
    """Every subdirectory (or the directory itself) holding a run summary."""
    root = Path(runs_dir)
    candidates = sorted(p.parent for p in root.glob(f"*/{SUMMARY_FILE}"))
    if (root / SUMMARY_FILE).exists():
        candidates.insert(0, root)
    runs = []
    for d in candidates:
        summary = json.loads((d / SUMMARY_FILE).read_text(encoding="utf-8"))
        hist = read_history(d / HISTORY_FILE) if (d / HISTORY_FILE).exists() else []
        runs.append(RunRecord(d.name, summary, hist))
    return runs


def build_rows(runs: list[RunRecord], metric: str = "test_wer") -> tuple[list[dict], list[str]]:
    """Report rows plus warnings for cells that could not be computed.

    WERD is measured against the clean RNN-T run; WERDR compares each
    non-RNN-T run with the RNN-T run on the same corruption.
    """
    warnings: list[str] = []
    clean = [r for r in runs if r.loss == "rnnt" and r.corruption[0] == "none"]
    original = clean[0].summary.get(metric) if clean else None
    baselines = {r.corruption: r for r in runs if r.loss == "rnnt" and r.corruption[0] != "none"}

    rows = []
    for r in runs:
        ctype, pct = r.corruption
        row = {
            "run": r.name,
            "loss": r.loss,
            "corruption_type": ctype,
            "corruption_pct": pct,
            "dev_wer": r.summary.get("dev_wer"),
            "test_wer": r.summary.get("test_wer"),
            "werd": None,
            "werdr": None,
        }
        value = r.summary.get(metric)
        if ctype != "none" and value is not None:
            if original is None:
                warnings.append(f"{r.name}: no clean rnnt run, WERD left empty")
            else:
                row["werd"] = werd(value, original)
        if ctype != "none" and r.loss != "rnnt" and row["werd"] is not None:
            base = baselines.get(r.corruption)
            if base is None or base.summary.get(metric) is None:
                warnings.append(f"{r.name}: no rnnt baseline for {ctype} {pct:g}%, WERDR left empty")
            else:
                try:
                    row["werdr"] = werdr(werd(base.summary[metric], original), row["werd"])
                except ZeroDivisionError:
                    warnings.append(f"{r.name}: baseline degradation is zero, WERDR left empty")
        rows.append(row)
    rows.sort(key=lambda x: (x["corruption_type"] != "none", x["corruption_type"], x["corruption_pct"], x["loss"] != "rnnt", x["run"]))
    return rows, warnings


def _pct(x) -> str:
    return "" if x is None else f"{100 * x:.1f}"


def markdown_table(rows: list[dict]) -> str:
    head = "| run | loss | corruption | dev WER % | test WER % | WERD ↓ | WERDR ↑ |"
    lines = [head, "|" + "---|" * 7]
    for r in rows:
        corr = "–" if r["corruption_type"] == "none" else f"{r['corruption_type'].upper()} {r['corruption_pct']:g}%"
        werdr_cell = "" if r["werdr"] is None else f"{100 * r['werdr']:.1f}%"
        lines.append(
            f"| {r['run']} | {r['loss']} | {corr} | {_pct(r['dev_wer'])} | {_pct(r['test_wer'])} "
            f"| {_pct(r['werd'])} | {werdr_cell} |"
        )
    return "\n".join(lines) + "\n"


def write_report(runs_dir: str | Path, out_dir: str | Path | None = None, figures: bool = True) -> dict:
    """Write ``report.csv``, ``report.md`` and figures; returns the written paths."""
    runs = load_runs(runs_dir)
    out = Path(out_dir) if out_dir is not None else Path(runs_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows, warnings = build_rows(runs)
    for w in warnings:
        log.info(w)
    paths = {"csv": out / "report.csv", "markdown": out / "report.md"}
    paths["csv"].write_text(report_csv(rows), encoding="utf-8")
    paths["markdown"].write_text(markdown_table(rows), encoding="utf-8")
    if figures and runs:
        from .plotting import plot_learning_curves, plot_wer_summary

        paths["curves"] = plot_learning_curves(runs, out / "learning_curves.png")
        paths["summary"] = plot_wer_summary(rows, out / "wer_summary.png")
    return {"paths": {k: str(v) for k, v in paths.items()}, "rows": rows, "warnings": warnings}


__all__ = ["REPORT_COLUMNS", "RunRecord", "build_rows", "load_runs", "markdown_table", "write_report"]
