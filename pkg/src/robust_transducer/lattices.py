"""Unit schemas, temporal schemas and direct grids for the transducer family.

Extended vocabulary layout for a base vocabulary of size ``V``: tokens are
``0..V-1``, then ``BLANK = V``, ``SKIP_FRAME = V + 1``, ``SKIP_TOKEN = V + 2``.

Grid states are row-major, ``id = t * (U + 1) + u``, with the final state
at ``T * (U + 1)``.
"""

from __future__ import annotations

import enum
from typing import Sequence

from .errors import InvalidTarget
from .fsa import Arc, ArcLabel, Wfsa


class LossKind(str, enum.Enum):
    RNNT = "rnnt"
    STAR = "star"
    BYPASS = "bypass"
    TRT = "trt"

    @property
    def skip_frames(self) -> bool:
        return self in (LossKind.STAR, LossKind.TRT)

    @property
    def skip_tokens(self) -> bool:
        return self in (LossKind.BYPASS, LossKind.TRT)

    def __str__(self) -> str:
        return self.value


def blank_id(vocab_size: int) -> int:
    return vocab_size


def skip_frame_id(vocab_size: int) -> int:
    return vocab_size + 1


def skip_token_id(vocab_size: int) -> int:
    return vocab_size + 2


def check_target(target: Sequence[int], vocab_size: int) -> tuple[int, ...]:
    if vocab_size < 1:
        raise ValueError("vocabulary must contain at least one token")
    units = tuple(int(x) for x in target)
    for u in units:
        if not 0 <= u < vocab_size:
            raise InvalidTarget(f"target unit {u} outside [0, {vocab_size - 1}]")
    return units


def build_unit_schema(target: Sequence[int], kind: LossKind | str, vocab_size: int) -> Wfsa:
    kind = LossKind(kind)
    units = check_target(target, vocab_size)
    U = len(units)
    blank, sf, st = blank_id(vocab_size), skip_frame_id(vocab_size), skip_token_id(vocab_size)
    final = U + 1
    arcs = []
    for u in range(U + 1):
        arcs.append(Arc(u, u, ArcLabel(blank, u)))
        if kind.skip_frames:
            arcs.append(Arc(u, u, ArcLabel(sf, u)))
        if u < U:
            arcs.append(Arc(u, u + 1, ArcLabel(units[u], u)))
            if kind.skip_tokens:
                arcs.append(Arc(u, u + 1, ArcLabel(st, u)))
    arcs.append(Arc(U, final, ArcLabel(blank, U)))
    # self-loops make schemas cyclic: they are composed, never scored directly
    return Wfsa(U + 2, final, arcs, vocab_size)


def build_temporal_schema(T: int, vocab_size: int, kind: LossKind | str) -> Wfsa:
    kind = LossKind(kind)
    if T < 1:
        raise ValueError("temporal schema needs at least one frame")
    blank, sf, st = blank_id(vocab_size), skip_frame_id(vocab_size), skip_token_id(vocab_size)
    arcs = []
    for t in range(T):
        for v in range(vocab_size):
            arcs.append(Arc(t, t, ArcLabel(v, frame=t)))
        if kind.skip_tokens:
            arcs.append(Arc(t, t, ArcLabel(st, frame=t)))
        arcs.append(Arc(t, t + 1, ArcLabel(blank, frame=t)))
        if kind.skip_frames:
            arcs.append(Arc(t, t + 1, ArcLabel(sf, frame=t)))
    return Wfsa(T + 1, T, arcs, vocab_size)


def build_grid(target: Sequence[int], T: int, kind: LossKind | str, vocab_size: int) -> Wfsa:
    """Build the trimmed alignment lattice directly."""
    kind = LossKind(kind)
    units = check_target(target, vocab_size)
    if T < 1:
        raise ValueError("grid needs at least one frame")
    U = len(units)
    blank, sf, st = blank_id(vocab_size), skip_frame_id(vocab_size), skip_token_id(vocab_size)
    width = U + 1
    final = T * width
    arcs = []
    for t in range(T):
        for u in range(width):
            s = t * width + u
            if t < T - 1:
                arcs.append(Arc(s, s + width, ArcLabel(blank, u, t)))
                if kind.skip_frames:
                    arcs.append(Arc(s, s + width, ArcLabel(sf, u, t)))
            if u < U:
                arcs.append(Arc(s, s + 1, ArcLabel(units[u], u, t)))
                if kind.skip_tokens:
                    arcs.append(Arc(s, s + 1, ArcLabel(st, u, t)))
    arcs.append(Arc(final - 1, final, ArcLabel(blank, U, T - 1)))
    return Wfsa(final + 1, final, arcs, vocab_size)
