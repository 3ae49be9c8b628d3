"""Acyclic weighted automata in the log semiring.

Arcs carry a ``(unit, unit_position, frame)`` label triple and a log-domain
weight. Every graph has a single start state (0) and a single final state with
no outgoing arcs. Scoring is done in topological order with log-sum-exp
accumulation; negative infinity is carried as the finite sentinel
:data:`NEG_INF` so that differences of two "impossible" scores never produce NaN.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import CyclicGraph, NoPath, TooManyPaths

NEG_INF = -1e30
# anything at or below this is reported as -inf
NEG_INF_CUTOFF = -1e29
SENTINEL = -1


def is_neg_inf(x: float) -> bool:
    return x <= NEG_INF_CUTOFF


def clamp_weight(w: float) -> float:
    """Map ``-inf`` (and anything below the sentinel) onto the sentinel."""
    if math.isnan(w):
        raise ValueError("arc weight is NaN")
    return NEG_INF if w <= NEG_INF else float(w)


def report_score(x: float) -> float:
    return -math.inf if is_neg_inf(x) else x


def log_add(a: float, b: float) -> float:
    if a < b:
        a, b = b, a
    if is_neg_inf(b):
        return a
    return a + math.log1p(math.exp(b - a))


@dataclass(frozen=True, order=True)
class ArcLabel:
    unit: int
    unit_position: int = SENTINEL
    frame: int = SENTINEL

    def as_tuple(self) -> tuple[int, int, int]:
        return (self.unit, self.unit_position, self.frame)


@dataclass(frozen=True)
class Arc:
    src: int
    dst: int
    label: ArcLabel
    weight: float = 0.0

    def sort_key(self):
        return (self.src, self.dst, self.label.unit, self.label.unit_position, self.label.frame)


class Wfsa:
    """Immutable acyclic automaton with one start (state 0) and one final state.

    Arcs are kept sorted by ``(src, dst, unit, unit_position, frame)``, which
    makes iteration order, DOT output and tie-breaks reproducible.
    ``vocab_size`` is optional metadata used only to pretty-print the special
    symbols in :func:`to_dot`.
    """

    __slots__ = ("num_states", "final_state", "arcs", "vocab_size", "_out", "_in")

    def __init__(
        self,
        num_states: int,
        final_state: int,
        arcs: Iterable[Arc],
        vocab_size: int | None = None,
    ):
        if num_states < 1:
            raise ValueError("an automaton needs at least one state")
        if not 0 <= final_state < num_states:
            raise ValueError(f"final state {final_state} out of range")
        cleaned = []
        for arc in arcs:
            if not (0 <= arc.src < num_states and 0 <= arc.dst < num_states):
                raise ValueError(f"arc {arc} references a missing state")
            if arc.src == final_state:
                raise ValueError("the final state must not have outgoing arcs")
            cleaned.append(Arc(arc.src, arc.dst, arc.label, clamp_weight(arc.weight)))
        cleaned.sort(key=Arc.sort_key)
        self.num_states = num_states
        self.final_state = final_state
        self.arcs: tuple[Arc, ...] = tuple(cleaned)
        self.vocab_size = vocab_size
        out: list[list[int]] = [[] for _ in range(num_states)]
        inc: list[list[int]] = [[] for _ in range(num_states)]
        for i, arc in enumerate(self.arcs):
            out[arc.src].append(i)
            inc[arc.dst].append(i)
        self._out = tuple(tuple(x) for x in out)
        self._in = tuple(tuple(x) for x in inc)

    start = 0

    @property
    def num_arcs(self) -> int:
        return len(self.arcs)

    def out_arcs(self, state: int) -> tuple[int, ...]:
        """Indices of arcs leaving ``state``."""
        return self._out[state]

    def in_arcs(self, state: int) -> tuple[int, ...]:
        return self._in[state]

    @property
    def weights(self) -> np.ndarray:
        return np.array([a.weight for a in self.arcs], dtype=np.float64)

    def with_weights(self, weights: Sequence[float]) -> "Wfsa":
        if len(weights) != len(self.arcs):
            raise ValueError(f"expected {len(self.arcs)} weights, got {len(weights)}")
        arcs = [Arc(a.src, a.dst, a.label, float(w)) for a, w in zip(self.arcs, weights)]
        return Wfsa(self.num_states, self.final_state, arcs, self.vocab_size)

    def without_arcs(self, keep) -> "Wfsa":
        """Copy keeping only arcs for which ``keep(arc)`` is true."""
        return Wfsa(
            self.num_states,
            self.final_state,
            [a for a in self.arcs if keep(a)],
            self.vocab_size,
        )

    def __repr__(self) -> str:
        return f"Wfsa(num_states={self.num_states}, final_state={self.final_state}, num_arcs={len(self.arcs)})"


def topo_order(wfsa: Wfsa) -> list[int]:
    """Kahn's algorithm; ready states are taken in increasing id order."""
    indeg = [len(wfsa.in_arcs(s)) for s in range(wfsa.num_states)]
    ready = deque(s for s in range(wfsa.num_states) if indeg[s] == 0)
    order = []
    while ready:
        s = ready.popleft()
        order.append(s)
        for i in wfsa.out_arcs(s):
            d = wfsa.arcs[i].dst
            indeg[d] -= 1
            if indeg[d] == 0:
                ready.append(d)
    if len(order) != wfsa.num_states:
        raise CyclicGraph(f"{wfsa.num_states - len(order)} states lie on a cycle")
    return order


def forward_scores(wfsa: Wfsa) -> np.ndarray:
    """Per-state prefix scores (alpha) in sentinel form."""
    alpha = np.full(wfsa.num_states, NEG_INF)
    alpha[wfsa.start] = 0.0
    arcs = wfsa.arcs
    for s in topo_order(wfsa):
        a_s = alpha[s]
        if is_neg_inf(a_s):
            continue
        for i in wfsa.out_arcs(s):
            arc = arcs[i]
            alpha[arc.dst] = log_add(alpha[arc.dst], a_s + arc.weight)
    return alpha


def forward_log_score(wfsa: Wfsa) -> float:
    """Log of the total weight of all start-to-final paths.

    Returns ``-inf`` when the final state is unreachable (or every path has a
    sentinel weight); use :func:`arc_posteriors` if that should be an error.
    """
    return report_score(float(forward_scores(wfsa)[wfsa.final_state]))


def backward_log_score(wfsa: Wfsa) -> np.ndarray:
    """Per-state suffix scores (beta); ``-inf`` marks dead ends."""
    return np.array([report_score(x) for x in _backward(wfsa)])


def _backward(wfsa: Wfsa) -> np.ndarray:
    beta = np.full(wfsa.num_states, NEG_INF)
    beta[wfsa.final_state] = 0.0
    arcs = wfsa.arcs
    for s in reversed(topo_order(wfsa)):
        acc = beta[s]
        for i in wfsa.out_arcs(s):
            arc = arcs[i]
            acc = log_add(acc, arc.weight + beta[arc.dst])
        beta[s] = acc
    return beta


def arc_posteriors(wfsa: Wfsa) -> np.ndarray:
    """Occupancy of each arc, which is also d(log total)/d(arc weight)."""
    alpha = forward_scores(wfsa)
    beta = _backward(wfsa)
    total = alpha[wfsa.final_state]
    if is_neg_inf(total):
        raise NoPath("final state is unreachable")
    post = np.zeros(len(wfsa.arcs))
    for i, arc in enumerate(wfsa.arcs):
        x = alpha[arc.src] + arc.weight + beta[arc.dst] - total
        post[i] = 0.0 if is_neg_inf(x) else math.exp(x)
    return post


def connect(wfsa: Wfsa) -> Wfsa:
    """Drop states that are not on any start-to-final path.

    Surviving states keep their relative order, so the start stays 0. If the
    final state is unreachable the result is the empty two-state automaton.
    """
    n = wfsa.num_states
    acc = [False] * n
    acc[wfsa.start] = True
    stack = [wfsa.start]
    while stack:
        s = stack.pop()
        for i in wfsa.out_arcs(s):
            d = wfsa.arcs[i].dst
            if not acc[d]:
                acc[d] = True
                stack.append(d)
    coacc = [False] * n
    coacc[wfsa.final_state] = True
    stack = [wfsa.final_state]
    while stack:
        s = stack.pop()
        for i in wfsa.in_arcs(s):
            src = wfsa.arcs[i].src
            if not coacc[src]:
                coacc[src] = True
                stack.append(src)
    if not (acc[wfsa.final_state] and coacc[wfsa.start]):
        return Wfsa(2, 1, [], wfsa.vocab_size)
    keep = [s for s in range(n) if acc[s] and coacc[s]]
    remap = {s: i for i, s in enumerate(keep)}
    arcs = [
        Arc(remap[a.src], remap[a.dst], a.label, a.weight)
        for a in wfsa.arcs
        if a.src in remap and a.dst in remap
    ]
    return Wfsa(len(keep), remap[wfsa.final_state], arcs, wfsa.vocab_size)


def compose(unit_schema: Wfsa, temporal_schema: Wfsa) -> Wfsa:
    """Compose a unit schema with a temporal schema, matching on ``unit``.

    The result label takes ``unit_position`` from the unit-schema arc and
    ``frame`` from the temporal-schema arc; weights add. The result is not
    trimmed, call :func:`connect` afterwards.
    """
    by_unit: dict[int, list[Arc]] = {}
    index: dict[tuple[int, int], int] = {(unit_schema.start, temporal_schema.start): 0}
    queue = deque([(unit_schema.start, temporal_schema.start)])
    arcs: list[Arc] = []
    final_pair = (unit_schema.final_state, temporal_schema.final_state)
    while queue:
        pair = queue.popleft()
        a_state, b_state = pair
        by_unit.clear()
        for j in temporal_schema.out_arcs(b_state):
            b = temporal_schema.arcs[j]
            by_unit.setdefault(b.label.unit, []).append(b)
        for i in unit_schema.out_arcs(a_state):
            a = unit_schema.arcs[i]
            for b in by_unit.get(a.label.unit, ()):
                dst = (a.dst, b.dst)
                if dst not in index:
                    index[dst] = len(index)
                    queue.append(dst)
                label = ArcLabel(a.label.unit, a.label.unit_position, b.label.frame)
                arcs.append(Arc(index[pair], index[dst], label, a.weight + b.weight))
    if final_pair not in index:
        index[final_pair] = len(index)
    final = index[final_pair]
    # the final pair has no outgoing arcs: both components are final there
    vocab = unit_schema.vocab_size if unit_schema.vocab_size is not None else temporal_schema.vocab_size
    return Wfsa(len(index), final, arcs, vocab)


def enumerate_paths(wfsa: Wfsa, max_paths: int = 5000) -> list[tuple[tuple[int, ...], float]]:
    """Every start-to-final path as ``(arc indices, summed weight)``.

    Brute-force oracle; raises :class:`TooManyPaths` past ``max_paths``.
    """
    topo_order(wfsa)  # rejects cycles before recursing
    paths: list[tuple[tuple[int, ...], float]] = []
    stack: list[tuple[int, tuple[int, ...], float]] = [(wfsa.start, (), 0.0)]
    while stack:
        state, prefix, w = stack.pop()
        if state == wfsa.final_state:
            paths.append((prefix, w))
            if len(paths) > max_paths:
                raise TooManyPaths(f"more than {max_paths} paths")
            continue
        for i in reversed(wfsa.out_arcs(state)):
            stack.append((wfsa.arcs[i].dst, prefix + (i,), w + wfsa.arcs[i].weight))
    return paths


def logsumexp_paths(paths: Sequence[tuple[tuple[int, ...], float]]) -> float:
    if not paths:
        return -math.inf
    w = np.array([p[1] for p in paths])
    m = w.max()
    if is_neg_inf(m):
        return -math.inf
    return float(m + np.log(np.exp(w - m).sum()))


def canonical_form(wfsa: Wfsa) -> tuple[tuple[int, ...], list[tuple[int, int, int, int, int]], list[float]]:
    """Renumber states canonically and return (header, arc list, weights).

    States are numbered in a topological order produced by Kahn's algorithm
    with a FIFO queue, visiting outgoing arcs sorted by label. For graphs whose
    outgoing labels are distinct per state (all lattices built here), two
    label-isomorphic graphs get identical forms.
    """
    indeg = [len(wfsa.in_arcs(s)) for s in range(wfsa.num_states)]
    queue = deque(s for s in range(wfsa.num_states) if indeg[s] == 0 and s == wfsa.start)
    rank: dict[int, int] = {}
    while queue:
        s = queue.popleft()
        rank[s] = len(rank)
        for i in sorted(wfsa.out_arcs(s), key=lambda i: wfsa.arcs[i].label.as_tuple()):
            d = wfsa.arcs[i].dst
            indeg[d] -= 1
            if indeg[d] == 0:
                queue.append(d)
    if len(rank) != wfsa.num_states:
        raise CyclicGraph("graph is cyclic or has states unreachable in topological sweep")
    rows = []
    for a in wfsa.arcs:
        rows.append((rank[a.src], rank[a.dst], *a.label.as_tuple(), a.weight))
    rows.sort()
    header = (wfsa.num_states, rank[wfsa.final_state], len(rows))
    return header, [r[:5] for r in rows], [r[5] for r in rows]


def canonical_bytes(wfsa: Wfsa) -> bytes:
    header, arcs, _ = canonical_form(wfsa)
    lines = [" ".join(map(str, header))] + [" ".join(map(str, a)) for a in arcs]
    return ("\n".join(lines) + "\n").encode()


def isomorphic(a: Wfsa, b: Wfsa) -> bool:
    """Label-respecting structural equality via canonical forms (weights ignored)."""
    return canonical_bytes(a) == canonical_bytes(b)


def _unit_name(unit: int, vocab_size: int | None) -> str:
    if vocab_size is not None:
        special = {vocab_size: "<b>", vocab_size + 1: "<sf>", vocab_size + 2: "<st>"}
        if unit in special:
            return special[unit]
    return str(unit)


def _field(x: int) -> str:
    return "-" if x == SENTINEL else str(x)


def _weight_str(w: float) -> str:
    return "-inf" if is_neg_inf(w) else f"{w:.6g}"


def to_dot(wfsa: Wfsa, name: str = "wfsa") -> str:
    """Graphviz text; arcs are labelled ``(unit,pos):frame/weight``."""
    lines = [
        f"digraph {name} {{",
        "  rankdir=LR;",
        "  node [shape=circle];",
    ]
    for s in range(wfsa.num_states):
        if s == wfsa.final_state:
            lines.append(f"  {s} [shape=doublecircle];")
        elif s == wfsa.start:
            lines.append(f"  {s} [style=bold];")
        else:
            lines.append(f"  {s};")
    for a in wfsa.arcs:
        lab = a.label
        text = (
            f"({_unit_name(lab.unit, wfsa.vocab_size)},{_field(lab.unit_position)})"
            f":{_field(lab.frame)}/{_weight_str(a.weight)}"
        )
        text = text.replace("\\", "\\\\").replace('"', '\\"')
        lines.append(f'  {a.src} -> {a.dst} [label="{text}"];')
    lines.append("}")
    return "\n".join(lines) + "\n"
