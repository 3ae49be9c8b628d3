"""Word-level Levenshtein alignment, WER, WERD and WERDR."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Iterable, Sequence

from .errors import EmptyReference


@dataclass(frozen=True)
class EditCounts:
    sub: int = 0
    ins: int = 0
    dele: int = 0
    correct_ref_len: int = 0

    @property
    def errors(self) -> int:
        return self.sub + self.ins + self.dele

    def __add__(self, other: "EditCounts") -> "EditCounts":
        return EditCounts(
            self.sub + other.sub,
            self.ins + other.ins,
            self.dele + other.dele,
            self.correct_ref_len + other.correct_ref_len,
        )


def align(reference: Sequence[str], hypothesis: Sequence[str]) -> EditCounts:
    """Minimal unit-cost edit counts turning ``reference`` into ``hypothesis``.

    Among optimal scripts the backtrace prefers substitution (or match), then
    insertion, then deletion.
    """
    n, m = len(reference), len(hypothesis)
    d = [[0] * (m + 1) for _ in range(n + 1)]
    for i in range(n + 1):
        d[i][0] = i
    for j in range(m + 1):
        d[0][j] = j
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            cost = 0 if reference[i - 1] == hypothesis[j - 1] else 1
            d[i][j] = min(d[i - 1][j - 1] + cost, d[i][j - 1] + 1, d[i - 1][j] + 1)
    sub = ins = dele = 0
    i, j = n, m
    while i > 0 or j > 0:
        if i > 0 and j > 0:
            cost = 0 if reference[i - 1] == hypothesis[j - 1] else 1
            if d[i][j] == d[i - 1][j - 1] + cost:
                sub += cost
                i, j = i - 1, j - 1
                continue
        if j > 0 and d[i][j] == d[i][j - 1] + 1:
            ins += 1
            j -= 1
            continue
        dele += 1
        i -= 1
    return EditCounts(sub, ins, dele, n)


def pool(counts: Iterable[EditCounts]) -> EditCounts:
    total = EditCounts()
    for c in counts:
        total = total + c
    return total


def wer(counts: EditCounts | Iterable[EditCounts]) -> float:
    """Corpus WER from pooled counts (not the mean of per-utterance WERs)."""
    c = counts if isinstance(counts, EditCounts) else pool(counts)
    if c.correct_ref_len <= 0:
        raise EmptyReference("reference has no words")
    return c.errors / c.correct_ref_len


def werd(wer_modified: float, wer_original: float) -> float:
    return wer_modified - wer_original


def werdr(werd_baseline: float, werd_proposed: float) -> float:
    if werd_baseline == 0:
        raise ZeroDivisionError("baseline degradation is zero")
    return (werd_baseline - werd_proposed) / werd_baseline


REPORT_COLUMNS = ("loss", "corruption_type", "corruption_pct", "dev_wer", "test_wer", "werd", "werdr")


def report_csv(rows: Iterable[dict]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=REPORT_COLUMNS, lineterminator="\n", extrasaction="ignore")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: _fmt(row.get(k)) for k in REPORT_COLUMNS})
    return buf.getvalue()


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return f"{x:.6f}"
    return str(x)
