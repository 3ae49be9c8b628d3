import itertools

import pytest
from conftest import achievable_scripts

from robust_transducer.errors import EmptyReference
from robust_transducer.metrics import EditCounts, align, pool, report_csv, wer, werd, werdr


def all_lists(alphabet, max_len):
    for n in range(max_len + 1):
        yield from itertools.product(alphabet, repeat=n)


def check_pair(ref, hyp):
    c = align(list(ref), list(hyp))
    scripts = achievable_scripts(ref, hyp)
    best = min(sum(t) for t in scripts)
    assert c.errors == best
    assert (c.sub, c.ins, c.dele) in scripts
    assert c.correct_ref_len == len(ref)


def test_align_matches_exhaustive_scripts_binary_alphabet():
    lists = list(all_lists("ab", 6))
    for ref in lists:
        for hyp in lists:
            check_pair(ref, hyp)


def test_align_matches_exhaustive_scripts_ternary_sample():
    lists = list(all_lists("abc", 4))
    for ref in lists:
        for hyp in lists:
            check_pair(ref, hyp)


def test_align_known_cases():
    assert align("a b c".split(), "a c".split()) == EditCounts(0, 0, 1, 3)
    assert align("a b".split(), "a x b".split()) == EditCounts(0, 1, 0, 2)
    assert align("a b".split(), "a x".split()) == EditCounts(1, 0, 0, 2)
    assert align([], ["a", "b"]) == EditCounts(0, 2, 0, 0)


def test_wer_is_pooled():
    counts = [EditCounts(1, 0, 0, 1), EditCounts(0, 0, 0, 9)]
    # pooled: 1 / 10, whereas the mean of per-utterance WERs would be 0.5
    assert wer(counts) == pytest.approx(0.1)
    assert pool(counts) == EditCounts(1, 0, 0, 10)


def test_wer_empty_reference():
    with pytest.raises(EmptyReference):
        wer(EditCounts(0, 3, 0, 0))
    with pytest.raises(EmptyReference):
        wer([])


def test_werd_werdr_table_arithmetic():
    assert werd(10.3, 6.8) == pytest.approx(3.5)
    assert werdr(3.5, 0.8) == pytest.approx(0.771, abs=0.0015)
    assert werdr(74.6, 4.2) == pytest.approx(0.944, abs=0.0005)
    with pytest.raises(ZeroDivisionError):
        werdr(0.0, 1.0)


def test_werdr_can_be_negative():
    assert werdr(2.0, 3.0) == pytest.approx(-0.5)


def test_report_csv_columns():
    text = report_csv([{"loss": "star", "corruption_type": "del", "corruption_pct": 50.0, "dev_wer": 0.1, "test_wer": None, "werd": 0.05, "werdr": None, "run": "x"}])
    assert text.splitlines() == [
        "loss,corruption_type,corruption_pct,dev_wer,test_wer,werd,werdr",
        "star,del,50.000000,0.100000,,0.050000,",
    ]
