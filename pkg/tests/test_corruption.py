import math

import numpy as np
import pytest

from robust_transducer.corruption import (
    CorruptionSpec,
    Utterance,
    corpus_vocabulary,
    corrupt_corpus,
    corrupt_deletions,
    corrupt_insertions,
    corrupt_substitutions,
    generate_corpus,
    is_selected,
    make_vocabulary,
    read_corpus,
    utterance_rng,
    write_corpus,
)
from robust_transducer.metrics import align


@pytest.fixture(scope="module")
def corpus():
    return generate_corpus(20, 1500, 5, 12, seed=3)


def within(observed, n, p, sigmas=4.0):
    return abs(observed - n * p) <= sigmas * math.sqrt(n * p * (1 - p))


def test_generate_corpus_shape(corpus):
    assert len(corpus) == 1500
    assert corpus[0].id == "utt00000"
    assert all(5 <= len(u.true_words) <= 12 for u in corpus)
    assert all(u.true_words == u.target_words for u in corpus)
    assert corpus_vocabulary(corpus) == make_vocabulary(20)
    # no immediate repeats
    assert all(a != b for u in corpus for a, b in zip(u.true_words, u.true_words[1:]))


def test_generate_is_seeded_and_jobs_invariant():
    a = generate_corpus(10, 50, 1, 6, seed=11)
    assert a == generate_corpus(10, 50, 1, 6, seed=11, jobs=3)
    assert a != generate_corpus(10, 50, 1, 6, seed=12)


def test_deletion_rate(corpus):
    spec = CorruptionSpec("del", 0.3, seed=1)
    out = corrupt_corpus(corpus, spec)
    n = sum(len(u.true_words) for u in corpus)
    kept = sum(len(u.target_words) for u in out)
    assert within(n - kept, n, 0.3)
    # deletions keep order: the target is a subsequence of the truth
    for u in out[:200]:
        it = iter(u.true_words)
        assert all(w in it for w in u.target_words)


def test_substitution_rate(corpus):
    spec = CorruptionSpec("sub", 0.2, seed=1)
    out = corrupt_corpus(corpus, spec)
    n = sum(len(u.true_words) for u in corpus)
    changed = sum(a != b for u in out for a, b in zip(u.true_words, u.target_words))
    assert all(len(u.true_words) == len(u.target_words) for u in out)
    assert within(changed, n, 0.2)


def test_insertion_rate(corpus):
    spec = CorruptionSpec("ins", 0.25, seed=1)
    out = corrupt_corpus(corpus, spec)
    n = sum(len(u.true_words) for u in corpus)
    added = sum(len(u.target_words) - len(u.true_words) for u in out)
    assert within(added, n, 0.25)
    for u in out[:200]:
        c = align(list(u.true_words), list(u.target_words))
        assert c.sub == 0 and c.dele == 0


def test_mixed_selection(corpus):
    spec = CorruptionSpec("mixed", utterance_fraction=0.4, per_type_p=0.15, seed=2)
    vocab = corpus_vocabulary(corpus)
    out = corrupt_corpus(corpus, spec, vocab)
    selected = [is_selected(u, spec) for u in corpus]
    assert within(sum(selected), len(corpus), 0.4)
    for u, o, s in zip(corpus, out, selected):
        if not s:
            assert o == u


def test_mixed_stage_probabilities_can_differ(corpus):
    spec = CorruptionSpec("mixed", utterance_fraction=1.0, per_type_p=(0.0, 0.0, 0.3), seed=2)
    out = corrupt_corpus(corpus, spec)
    assert all(len(o.target_words) >= len(o.true_words) for o in out)


def test_zero_probability_is_identity(corpus):
    for kind in ("del", "sub", "ins"):
        assert corrupt_corpus(corpus[:50], CorruptionSpec(kind, 0.0)) == corpus[:50]


def test_order_and_jobs_invariance(corpus):
    spec = CorruptionSpec("mixed", utterance_fraction=0.5, seed=4)
    vocab = corpus_vocabulary(corpus)
    forward = corrupt_corpus(corpus, spec, vocab)
    backward = corrupt_corpus(corpus[::-1], spec, vocab, jobs=4)
    assert forward == backward[::-1]


def test_substitution_never_keeps_the_word():
    utt = Utterance.clean("u", ["a"] * 200)
    out = corrupt_substitutions(utt, 1.0, ["a", "b", "c"], np.random.default_rng(0))
    assert set(out.target_words) == {"b", "c"}


def test_single_word_edges():
    rng = np.random.default_rng(0)
    empty = Utterance.clean("e", [])
    assert corrupt_deletions(empty, 0.9, rng) == empty
    assert corrupt_insertions(empty, 1.0, ["x"], rng) == empty
    one = Utterance.clean("o", ["a"])
    assert corrupt_insertions(one, 1.0, ["x"], rng).target_words == ("x", "a")
    with pytest.raises(ValueError):
        corrupt_insertions(empty, 0.5, [], rng)
    with pytest.raises(ValueError):
        CorruptionSpec("swap", 0.1)
    with pytest.raises(ValueError):
        CorruptionSpec("del", 1.5)


def test_streams_are_distinct_per_stage():
    a = utterance_rng(0, "x", "del").random(4)
    b = utterance_rng(0, "x", "ins").random(4)
    assert not np.array_equal(a, b)
    assert np.array_equal(a, utterance_rng(0, "x", "del").random(4))


def test_corpus_roundtrip(tmp_path):
    utts = [Utterance("ü1", ("a", "b"), ("a",)), Utterance.clean("u2", [])]
    p = tmp_path / "c.jsonl"
    write_corpus(p, utts)
    assert read_corpus(p) == utts
    assert p.read_text(encoding="utf-8").splitlines()[0] == '{"id": "ü1", "true_words": ["a", "b"], "target_words": ["a"]}'


@pytest.fixture(scope="module")
def big_corpus():
    # about 10^5 words
    return generate_corpus(20, 12000, 5, 12, seed=8)


def test_deletion_fraction_on_1e5_words(big_corpus):
    out = corrupt_corpus(big_corpus, CorruptionSpec("del", 0.2, seed=0))
    n = sum(len(u.true_words) for u in big_corpus)
    assert n >= 100_000
    deleted = n - sum(len(u.target_words) for u in out)
    assert abs(deleted / n - 0.2) < 0.01


def test_substituted_fraction_on_1e5_words(big_corpus):
    out = corrupt_corpus(big_corpus, CorruptionSpec("sub", 0.2, seed=0))
    n = sum(len(u.true_words) for u in big_corpus)
    changed = sum(a != b for u in out for a, b in zip(u.true_words, u.target_words))
    assert abs(changed / n - 0.2) < 0.01


def test_inserted_ratio_on_1e5_words(big_corpus):
    out = corrupt_corpus(big_corpus, CorruptionSpec("ins", 0.2, seed=0))
    n = sum(len(u.true_words) for u in big_corpus)
    added = sum(len(u.target_words) for u in out) - n
    assert abs(added / n - 0.2) < 0.01


def test_mixed_selection_on_1e4_utterances(big_corpus):
    spec = CorruptionSpec("mixed", utterance_fraction=0.5, per_type_p=0.15, seed=0)
    picked = sum(is_selected(u, spec) for u in big_corpus[:10_000])
    assert abs(picked / 10_000 - 0.5) < 0.02


def test_delete_everything(corpus):
    out = corrupt_corpus(corpus[:20], CorruptionSpec("del", 1.0))
    assert all(u.target_words == () for u in out)
    assert [u.true_words for u in out] == [u.true_words for u in corpus[:20]]


def test_mixed_reduces_to_single_type(corpus):
    vocab = corpus_vocabulary(corpus)
    for i, kind in enumerate(("del", "sub", "ins")):
        probs = [0.0, 0.0, 0.0]
        probs[i] = 0.3
        mixed = corrupt_corpus(corpus, CorruptionSpec("mixed", utterance_fraction=1.0, per_type_p=tuple(probs), seed=6), vocab)
        single = corrupt_corpus(corpus, CorruptionSpec(kind, 0.3, seed=6), vocab)
        assert mixed == single


def test_mixed_fraction_zero_is_identity(corpus):
    assert corrupt_corpus(corpus, CorruptionSpec("mixed", utterance_fraction=0.0)) == corpus
