"""Seeded corruption of target transcripts.

Randomness comes from numpy's PCG64 generator. Every utterance gets its own
stream derived from ``(seed, blake2b-64(utterance id), stage)`` through
:class:`numpy.random.SeedSequence`, so results do not depend on corpus order
or on how the corpus is split across workers.
"""

from __future__ import annotations

import hashlib
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

KINDS = ("del", "sub", "ins", "mixed")
_STAGE_KEYS = {"select": 0, "del": 1, "sub": 2, "ins": 3, "frames": 4}


@dataclass(frozen=True)
class Utterance:
    id: str
    true_words: tuple[str, ...]
    target_words: tuple[str, ...]

    @classmethod
    def clean(cls, id: str, words: Sequence[str]) -> "Utterance":
        words = tuple(words)
        return cls(id, words, words)

    def to_json(self) -> str:
        return json.dumps(
            {"id": self.id, "true_words": list(self.true_words), "target_words": list(self.target_words)},
            ensure_ascii=False,
        )

    @classmethod
    def from_json(cls, line: str) -> "Utterance":
        obj = json.loads(line)
        return cls(obj["id"], tuple(obj["true_words"]), tuple(obj["target_words"]))


@dataclass(frozen=True)
class CorruptionSpec:
    kind: str
    p_m: float = 0.0
    utterance_fraction: float = 1.0
    # one probability for all mixed stages, or a (del, sub, ins) triple
    per_type_p: float | tuple[float, float, float] = 0.15
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown corruption kind {self.kind!r}")
        probs = [self.p_m, self.utterance_fraction, *self.stage_probs()]
        if any(not 0.0 <= p <= 1.0 for p in probs):
            raise ValueError("probabilities must lie in [0, 1]")

    def stage_probs(self) -> tuple[float, float, float]:
        if isinstance(self.per_type_p, (tuple, list)):
            d, s, i = self.per_type_p
            return float(d), float(s), float(i)
        p = float(self.per_type_p)
        return p, p, p


def utterance_rng(seed: int, utt_id: str, stage: str) -> np.random.Generator:
    digest = hashlib.blake2b(utt_id.encode("utf-8"), digest_size=8).digest()
    key = int.from_bytes(digest, "little")
    ss = np.random.SeedSequence([seed & 0xFFFFFFFFFFFFFFFF, key, _STAGE_KEYS[stage]])
    return np.random.Generator(np.random.PCG64(ss))


def corrupt_deletions(utt: Utterance, p_m: float, rng: np.random.Generator) -> Utterance:
    words = utt.target_words
    if p_m <= 0 or not words:
        return utt
    drop = rng.random(len(words)) < p_m
    return replace(utt, target_words=tuple(w for w, d in zip(words, drop) if not d))


def corrupt_substitutions(
    utt: Utterance, p_m: float, vocab: Sequence[str], rng: np.random.Generator
) -> Utterance:
    """Replace each word with probability ``p_m`` by a different vocabulary word."""
    if not vocab:
        raise ValueError("substitution needs a non-empty vocabulary")
    words = utt.target_words
    if p_m <= 0 or not words:
        return utt
    hit = rng.random(len(words)) < p_m
    draws = rng.random(len(words))
    out = []
    for w, h, r in zip(words, hit, draws):
        if not h:
            out.append(w)
            continue
        pool = [v for v in vocab if v != w] or list(vocab)
        out.append(pool[int(r * len(pool))])
    return replace(utt, target_words=tuple(out))


def corrupt_insertions(
    utt: Utterance, p_m: float, vocab: Sequence[str], rng: np.random.Generator
) -> Utterance:
    """Insert a uniform vocabulary word in front of each word with probability ``p_m``.

    One coin per word position (position 0 included), so the expected number
    of inserted words is ``p_m * L``. Empty targets stay empty.
    """
    if not vocab:
        raise ValueError("insertion needs a non-empty vocabulary")
    words = utt.target_words
    if p_m <= 0 or not words:
        return utt
    hit = rng.random(len(words)) < p_m
    picks = rng.integers(0, len(vocab), size=len(words))
    out = []
    for w, h, k in zip(words, hit, picks):
        if h:
            out.append(vocab[int(k)])
        out.append(w)
    return replace(utt, target_words=tuple(out))


def corrupt_utterance(utt: Utterance, spec: CorruptionSpec, vocab: Sequence[str]) -> Utterance:
    if spec.kind == "del":
        return corrupt_deletions(utt, spec.p_m, utterance_rng(spec.seed, utt.id, "del"))
    if spec.kind == "sub":
        return corrupt_substitutions(utt, spec.p_m, vocab, utterance_rng(spec.seed, utt.id, "sub"))
    if spec.kind == "ins":
        return corrupt_insertions(utt, spec.p_m, vocab, utterance_rng(spec.seed, utt.id, "ins"))
    if not is_selected(utt, spec):
        return utt
    p_del, p_sub, p_ins = spec.stage_probs()
    utt = corrupt_deletions(utt, p_del, utterance_rng(spec.seed, utt.id, "del"))
    utt = corrupt_substitutions(utt, p_sub, vocab, utterance_rng(spec.seed, utt.id, "sub"))
    return corrupt_insertions(utt, p_ins, vocab, utterance_rng(spec.seed, utt.id, "ins"))


def is_selected(utt: Utterance, spec: CorruptionSpec) -> bool:
    """Whether the mixed protocol picks this utterance for corruption."""
    return bool(utterance_rng(spec.seed, utt.id, "select").random() < spec.utterance_fraction)


def corrupt_mixed(corpus: Iterable[Utterance], spec: CorruptionSpec, vocab: Sequence[str]) -> list[Utterance]:
    if spec.kind != "mixed":
        raise ValueError("corrupt_mixed needs a spec with kind='mixed'")
    return [corrupt_utterance(u, spec, vocab) for u in corpus]


def corrupt_corpus(
    corpus: Iterable[Utterance], spec: CorruptionSpec, vocab: Sequence[str] | None = None, jobs: int = 1
) -> list[Utterance]:
    corpus = list(corpus)
    if vocab is None:
        vocab = corpus_vocabulary(corpus)
    return parallel_map(lambda u: corrupt_utterance(u, spec, vocab), corpus, jobs)


def corpus_vocabulary(corpus: Iterable[Utterance]) -> list[str]:
    """Sorted set of words appearing in the true transcripts."""
    return sorted({w for u in corpus for w in u.true_words})


def read_corpus(path: str | Path) -> list[Utterance]:
    with open(path, encoding="utf-8") as f:
        return [Utterance.from_json(line) for line in f if line.strip()]


def write_corpus(path: str | Path, corpus: Iterable[Utterance]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for utt in corpus:
            f.write(utt.to_json() + "\n")


def make_vocabulary(size: int) -> list[str]:
    width = max(2, len(str(size - 1)))
    return [f"w{i:0{width}d}" for i in range(size)]


def generate_corpus(
    vocab_size: int, utterances: int, min_words: int, max_words: int, seed: int, jobs: int = 1
) -> list[Utterance]:
    """Clean corpus with uniform lengths in ``[min_words, max_words]``.

    Each word is drawn uniformly from the vocabulary minus the previous word:
    with frame-local features and a last-token predictor, an immediate repeat
    is indistinguishable from the frames right after the first emission.
    Utterance ``i`` uses its own stream derived from ``(seed, i)``.
    """
    if vocab_size < 1 or utterances < 0 or not 0 <= min_words <= max_words:
        raise ValueError("need vocab_size >= 1, utterances >= 0, 0 <= min_words <= max_words")
    vocab = make_vocabulary(vocab_size)
    width = max(5, len(str(utterances)))

    def one(i: int) -> Utterance:
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, 0x6E4, i])))
        n = int(rng.integers(min_words, max_words + 1))
        ids: list[int] = []
        for _ in range(n):
            if ids and vocab_size > 1:
                k = int(rng.integers(0, vocab_size - 1))
                ids.append(k + (k >= ids[-1]))
            else:
                ids.append(int(rng.integers(0, vocab_size)))
        return Utterance.clean(f"utt{i:0{width}d}", [vocab[k] for k in ids])

    return parallel_map(one, range(utterances), jobs)


def parallel_map(fn, items, jobs: int = 1) -> list:
    """Ordered map; ``jobs > 1`` uses a thread pool, results are identical either way."""
    items = list(items)
    if jobs > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]
