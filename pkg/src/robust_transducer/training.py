"""SGD training of the toy transducer with any loss from :mod:`.loss`."""

from __future__ import annotations

import csv
import hashlib
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .corruption import Utterance
from .decoding import DecoderBudget, DecodeStats, greedy_decode
from .errors import NonFiniteLoss
from .loss import LossConfig, PenaltySchedule, batch_loss, schedule_step
from .metrics import EditCounts, align, pool, wer
from .model import (
    PARAM_NAMES,
    SynthesisSpec,
    ToyModelParams,
    ToyTransducer,
    backward_batch,
    forward_batch,
    synthesize_frames,
)

log = logging.getLogger(__name__)

HISTORY_COLUMNS = ("epoch", "train_loss", "dev_wer", "sub", "ins", "del", "current_penalty")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 50
    learning_rate: float = 0.05
    momentum: float = 0.9
    batch_size: int = 32
    loss: LossConfig = LossConfig()
    schedule: PenaltySchedule | None = None
    eval_every: int = 1
    seed: int = 0
    hidden: int = 32
    jobs: int = 1
    # global gradient-norm cap; None disables it
    clip_norm: float | None = 1.0

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1 or self.eval_every < 1:
            raise ValueError("batch_size and eval_every must be >= 1")
        if self.clip_norm is not None and not self.clip_norm > 0:
            raise ValueError("clip_norm must be positive (or None)")


@dataclass
class EvalResult:
    counts: EditCounts
    hypotheses: list[list[str]]
    cap_hits: int = 0

    @property
    def wer(self) -> float:
        return wer(self.counts)


@dataclass
class TrainResult:
    params: ToyModelParams
    history: list[dict]
    dev: EvalResult | None = None
    test: EvalResult | None = None
    split_sizes: dict = field(default_factory=dict)


def split_of(utt_id: str) -> str:
    """Stable train/dev/test assignment (80/10/10) from the utterance id."""
    b = hashlib.blake2b(utt_id.encode("utf-8"), digest_size=8).digest()[0] % 10
    return "dev" if b == 0 else "test" if b == 1 else "train"


def split_corpus(corpus: Sequence[Utterance]) -> tuple[list[Utterance], list[Utterance], list[Utterance]]:
    parts: dict[str, list[Utterance]] = {"train": [], "dev": [], "test": []}
    for u in corpus:
        parts[split_of(u.id)].append(u)
    return parts["train"], parts["dev"], parts["test"]


def evaluate(
    params: ToyModelParams,
    synthesis: SynthesisSpec,
    utterances: Sequence[Utterance],
    budget: DecoderBudget = DecoderBudget(),
) -> EvalResult:
    """Greedy-decode each utterance and align against its true words."""
    model = ToyTransducer(params)
    stats = DecodeStats()
    counts, hyps = [], []
    for utt in utterances:
        enc = model.encode(synthesize_frames(utt, synthesis))
        hyp = synthesis.decode(greedy_decode(enc, model, budget, stats))
        hyps.append(hyp)
        counts.append(align(list(utt.true_words), hyp))
    return EvalResult(pool(counts), hyps, stats.cap_hits)


class _Batch:
    def __init__(self, utts: Sequence[Utterance], synthesis: SynthesisSpec, frames_cache: dict):
        self.ids = [u.id for u in utts]
        frames = [frames_cache[u.id] for u in utts]
        targets = [synthesis.encode(u.target_words) for u in utts]
        self.T = [f.shape[0] for f in frames]
        self.U = [len(t) for t in targets]
        self.targets = targets
        B, Tm, Um = len(utts), max(self.T), max(self.U)
        d = synthesis.feature_dim
        self.frames = np.zeros((B, Tm, d))
        blank = len(synthesis.vocab)
        self.prev = np.full((B, Um + 1), blank, dtype=np.int64)
        for i, (f, t) in enumerate(zip(frames, targets)):
            self.frames[i, : f.shape[0]] = f
            self.prev[i, 1 : len(t) + 1] = t


def batch_gradient(
    params: ToyModelParams,
    batch: _Batch,
    loss_config: LossConfig,
    penalty: float | None,
    jobs: int = 1,
) -> tuple[list[float], ToyModelParams]:
    """Per-item losses and the gradient of their mean."""
    logp, cache = forward_batch(params, batch.frames, batch.prev)
    items = [(logp[i], batch.targets[i], batch.T[i], batch.U[i]) for i in range(len(batch.ids))]
    results, _ = batch_loss(items, loss_config, penalty, jobs=jobs)
    losses = [r.loss for r in results]
    for uid, value in zip(batch.ids, losses):
        if not math.isfinite(value):
            raise NonFiniteLoss(uid, value)
    grad = np.stack([r.grad for r in results]) / len(results)
    return losses, backward_batch(params, cache, grad)


def train(
    corpus: Sequence[Utterance],
    synthesis: SynthesisSpec,
    config: TrainConfig,
    on_epoch: Callable[[dict], None] | None = None,
) -> TrainResult:
    """Train on the corpus' train split; evaluate greedy WER on dev against true words."""
    if not corpus:
        raise ValueError("cannot train on an empty corpus")
    train_set, dev_set, test_set = split_corpus(corpus)
    if not train_set:
        train_set = list(corpus)
    frames_cache = {u.id: synthesize_frames(u, synthesis) for u in corpus}
    train_set = [u for u in train_set if frames_cache[u.id].shape[0] > 0]
    if not train_set:
        raise ValueError("no utterance with frames to train on")

    params = ToyModelParams.init(len(synthesis.vocab), synthesis.feature_dim, config.hidden, config.seed)
    velocity = ToyModelParams.zeros_like(params)
    lcfg = config.loss
    schedule = config.schedule if lcfg.kind.skip_tokens else None
    penalty = float(schedule.initial_weight if schedule is not None else lcfg.skip_token_penalty)

    history = []
    for epoch in range(1, config.epochs + 1):
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([config.seed, 0x7EA1, epoch])))
        order = rng.permutation(len(train_set))
        epoch_losses = []
        for start in range(0, len(order), config.batch_size):
            batch = _Batch([train_set[i] for i in order[start : start + config.batch_size]], synthesis, frames_cache)
            losses, grads = batch_gradient(params, batch, lcfg, penalty, config.jobs)
            epoch_losses.extend(losses)
            if config.clip_norm is not None:
                norm = math.sqrt(sum(float((a * a).sum()) for a in grads.arrays()))
                if norm > config.clip_norm:
                    for a in grads.arrays():
                        a *= config.clip_norm / norm
            for name in PARAM_NAMES:
                v = getattr(velocity, name)
                v *= config.momentum
                v -= config.learning_rate * getattr(grads, name)
                getattr(params, name)[...] += v
            if not params.all_finite():
                raise NonFiniteLoss(batch.ids[0], math.nan)
        row = {
            "epoch": epoch,
            "train_loss": float(np.mean(epoch_losses)),
            "dev_wer": None,
            "sub": None,
            "ins": None,
            "del": None,
            "current_penalty": penalty if lcfg.kind.skip_tokens else None,
        }
        if dev_set and (epoch % config.eval_every == 0 or epoch == config.epochs):
            ev = evaluate(params, synthesis, dev_set)
            row.update(dev_wer=ev.wer, sub=ev.counts.sub, ins=ev.counts.ins, **{"del": ev.counts.dele})
        history.append(row)
        log.info("epoch %d loss %.4f dev_wer %s penalty %s", epoch, row["train_loss"], row["dev_wer"], row["current_penalty"])
        if on_epoch is not None:
            on_epoch(row)
        if schedule is not None:
            penalty = schedule_step(penalty, schedule, epoch)

    dev = evaluate(params, synthesis, dev_set) if dev_set else None
    test = evaluate(params, synthesis, test_set) if test_set else None
    return TrainResult(
        params,
        history,
        dev,
        test,
        {"train": len(train_set), "dev": len(dev_set), "test": len(test_set)},
    )


def _cell(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return repr(round(x, 10))
    return str(x)


def write_history(path: str | Path, history: Sequence[dict]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(HISTORY_COLUMNS)
        for row in history:
            w.writerow([_cell(row.get(c)) for c in HISTORY_COLUMNS])


def read_history(path: str | Path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as f:
        rows = []
        for r in csv.DictReader(f):
            rows.append({k: (float(v) if v not in ("", None) else None) for k, v in r.items()})
        return rows
