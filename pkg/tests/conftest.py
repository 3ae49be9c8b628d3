"""Shared oracles. These deliberately avoid the package's automaton code."""

import math
from functools import lru_cache

import numpy as np
import pytest


def log_softmax(x):
    m = x.max(axis=-1, keepdims=True)
    return x - m - np.log(np.exp(x - m).sum(axis=-1, keepdims=True))


def random_joint(rng, T, U, V, scale=2.0):
    return log_softmax(scale * rng.standard_normal((T, U + 1, V + 1)))


def oracle_mode(row, target_unit, mode):
    V = len(row) - 1
    labels = list(range(V))
    if mode == "constant":
        return 0.0
    if mode == "mean":
        return sum(row[v] for v in labels) / V
    if mode == "max":
        return max(row[v] for v in labels)
    rest = [row[v] for v in labels if v != target_unit]
    if mode == "maxexcl":
        return max(rest)
    return math.log(sum(math.exp(x) for x in rest))


def oracle_alignment_scores(joint, target, kind, sf_weight=0.0, st_penalty=0.0, mode="constant"):
    """Every alignment score on the T x (U+1) grid, by explicit recursion."""
    T, W, V1 = joint.shape
    U, V = W - 1, V1 - 1
    skip_frames = kind in ("star", "trt")
    skip_tokens = kind in ("bypass", "trt")
    scores = []

    def walk(t, u, acc):
        if t == T - 1 and u == U:
            scores.append(acc + joint[t, u, V])
        if t < T - 1:
            walk(t + 1, u, acc + joint[t, u, V])
            if skip_frames:
                walk(t + 1, u, acc + sf_weight)
        if u < U:
            walk(t, u + 1, acc + joint[t, u, target[u]])
            if skip_tokens:
                walk(t, u + 1, acc + st_penalty + oracle_mode(joint[t, u], target[u], mode))

    walk(0, 0, 0.0)
    return scores


def oracle_loss(joint, target, kind, sf_weight=0.0, st_penalty=0.0, mode="constant"):
    s = np.array(oracle_alignment_scores(joint, target, kind, sf_weight, st_penalty, mode))
    m = s.max()
    return -float(m + np.log(np.exp(s - m).sum()))


def achievable_scripts(ref, hyp):
    """Every (sub, ins, del) triple some edit script reaches, keyed by cost."""

    @lru_cache(maxsize=None)
    def go(i, j):
        if i == len(ref) and j == len(hyp):
            return frozenset({(0, 0, 0)})
        out = set()
        if i < len(ref) and j < len(hyp):
            s = int(ref[i] != hyp[j])
            out |= {(a + s, b, c) for a, b, c in go(i + 1, j + 1)}
        if j < len(hyp):
            out |= {(a, b + 1, c) for a, b, c in go(i, j + 1)}
        if i < len(ref):
            out |= {(a, b, c + 1) for a, b, c in go(i + 1, j)}
        return frozenset(out)

    return go(0, 0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# acceptance verdicts, printed once at the end of the session
ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[k])
