from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Protocol

import numpy as np


class TransducerModel(Protocol):
    blank_id: int

    def predict(self, token: int) -> np.ndarray: ...

    def joint(self, enc: np.ndarray, pred: np.ndarray) -> np.ndarray: ...


@dataclass(frozen=True)
class DecoderBudget:
    max_symbols_per_frame: int = 10

    def __post_init__(self):
        if self.max_symbols_per_frame < 1:
            raise ValueError("max_symbols_per_frame must be >= 1")


@dataclass
class DecodeStats:
    frames: int = 0
    cap_hits: int = 0


def greedy_decode(
    encoder_outputs: Iterable[np.ndarray],
    model: TransducerModel,
    budget: DecoderBudget = DecoderBudget(),
    stats: DecodeStats | None = None,
) -> list[int]:
    """Frame-synchronous greedy search.

    Blank doubles as the start symbol and is never fed to the predictor; a
    frame is left on blank or after ``budget.max_symbols_per_frame`` emissions.
    Ties in the argmax go to the lowest index.
    """
    blank = model.blank_id
    pred = model.predict(blank)
    hyp: list[int] = []
    for enc in encoder_outputs:
        if stats is not None:
            stats.frames += 1
        for _ in range(budget.max_symbols_per_frame):
            k = int(np.argmax(model.joint(enc, pred)))
            if k == blank:
                break
            hyp.append(k)
            pred = model.predict(k)
        else:
            if stats is not None:
                stats.cap_hits += 1
    return hyp
