"""Lattice weights, losses and gradients for RNN-T, Star-T, Bypass-T and TRT.

Two independent routes compute the same quantity:

* :func:`loss_and_grad` works on dense ``T x (U+1)`` grids with a compiled
  forward-backward pass. This is what training uses.
* :func:`loss_and_grad_reference` builds the explicit :class:`~.fsa.Wfsa`
  lattice, populates it with :func:`populate_weights` and scores it with the
  generic automaton code in :mod:`.fsa`.

Joint log-probabilities are laid out as ``joint[t, u, v]`` with ``v == V``
being blank.
"""

from __future__ import annotations

import enum
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numba
import numpy as np

from .errors import DegenerateVocabulary, NoPath, ShapeMismatch
from .fsa import NEG_INF, NEG_INF_CUTOFF, Wfsa, arc_posteriors, clamp_weight, forward_log_score
from .lattices import LossKind, blank_id, build_grid, check_target, skip_frame_id, skip_token_id


class SkipTokenMode(str, enum.Enum):
    CONSTANT = "constant"
    MEAN = "mean"
    MAX = "max"
    MAXEXCL = "maxexcl"
    SUMEXCL = "sumexcl"

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class LossConfig:
    """Loss kind and skip-arc parameters.

    ``skip_token_penalty`` is used when no scheduled penalty is passed to the
    loss functions. Fields that do not apply to ``kind`` are ignored.
    """

    kind: LossKind = LossKind.RNNT
    skip_frame_weight: float = 0.0
    skip_token_penalty: float = -20.0
    skip_token_mode: SkipTokenMode = SkipTokenMode.SUMEXCL
    check_normalized: bool = True

    def __post_init__(self):
        object.__setattr__(self, "kind", LossKind(self.kind))
        object.__setattr__(self, "skip_token_mode", SkipTokenMode(self.skip_token_mode))


@dataclass(frozen=True)
class PenaltySchedule:
    initial_weight: float = -20.0
    decay: float = 0.9
    max_weight: float = -6.0
    start_epoch: int = 3

    def __post_init__(self):
        if not 0.0 < self.decay < 1.0:
            raise ValueError(f"decay must be in (0, 1), got {self.decay}")
        if not self.initial_weight <= self.max_weight <= 0.0:
            raise ValueError("need initial_weight <= max_weight <= 0")


@dataclass
class LossResult:
    loss: float
    grad: np.ndarray = field(repr=False)


def schedule_step(weight: float, schedule: PenaltySchedule, completed_epoch: int) -> float:
    """Penalty to use after ``completed_epoch`` (1-based) has finished."""
    if weight > 0:
        raise ValueError("penalty weight must be <= 0")
    if completed_epoch < schedule.start_epoch:
        return weight
    return min(schedule.max_weight, weight * schedule.decay)


def penalty_trajectory(schedule: PenaltySchedule, epochs: int) -> list[float]:
    """Weight after each of ``epochs`` completed epochs."""
    w = schedule.initial_weight
    out = []
    for e in range(1, epochs + 1):
        w = schedule_step(w, schedule, e)
        out.append(w)
    return out


# --- skip-token scoring -----------------------------------------------------


def _exclusion_mask(V: int, target_unit: int | None, mode: SkipTokenMode) -> np.ndarray:
    mask = np.ones(V + 1, dtype=bool)
    mask[V] = False
    if mode in (SkipTokenMode.MAXEXCL, SkipTokenMode.SUMEXCL) and target_unit is not None:
        mask[target_unit] = False
    return mask


def mode_value(row: np.ndarray, target_unit: int, mode: SkipTokenMode | str) -> float:
    """Joint-derived part of a skip-token arc weight for one ``(t, u)`` row."""
    return mode_value_and_grad(row, target_unit, mode)[0]


def mode_value_and_grad(row, target_unit: int, mode) -> tuple[float, np.ndarray]:
    mode = SkipTokenMode(mode)
    row = np.asarray(row, dtype=np.float64)
    V = row.shape[0] - 1
    grad = np.zeros_like(row)
    if mode is SkipTokenMode.CONSTANT:
        return 0.0, grad
    mask = _exclusion_mask(V, target_unit, mode)
    idx = np.flatnonzero(mask)
    if idx.size == 0:
        raise DegenerateVocabulary(f"mode {mode} leaves no entries with V={V}")
    vals = row[idx]
    if mode is SkipTokenMode.MEAN:
        grad[idx] = 1.0 / idx.size
        return float(vals.mean()), grad
    if mode in (SkipTokenMode.MAX, SkipTokenMode.MAXEXCL):
        k = int(np.argmax(vals))
        grad[idx[k]] = 1.0
        return float(vals[k]), grad
    m = vals.max()
    if m <= NEG_INF_CUTOFF:
        return NEG_INF, grad
    e = np.exp(vals - m)
    s = e.sum()
    grad[idx] = e / s
    return float(m + math.log(s)), grad


def _mode_values(joint: np.ndarray, units: np.ndarray, mode: SkipTokenMode) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised :func:`mode_value_and_grad` over all ``(t, u < U)`` cells."""
    T, W, V1 = joint.shape
    U = W - 1
    V = V1 - 1
    rows = joint[:, :U, :]
    dvals = np.zeros((T, U, V1))
    if mode is SkipTokenMode.CONSTANT or U == 0:
        return np.zeros((T, U)), dvals
    mask = np.ones((U, V1), dtype=bool)
    mask[:, V] = False
    if mode in (SkipTokenMode.MAXEXCL, SkipTokenMode.SUMEXCL):
        mask[np.arange(U), units] = False
    if not mask.any(axis=1).all():
        raise DegenerateVocabulary(f"mode {mode} leaves no entries with V={V}")
    if mode is SkipTokenMode.MEAN:
        n = mask.sum(axis=1)
        vals = np.where(mask[None], rows, 0.0).sum(axis=2) / n[None]
        dvals[:] = (mask / n[:, None])[None]
        return vals, dvals
    masked = np.where(mask[None], rows, -np.inf)
    if mode in (SkipTokenMode.MAX, SkipTokenMode.MAXEXCL):
        k = np.argmax(masked, axis=2)
        vals = np.take_along_axis(rows, k[..., None], axis=2)[..., 0]
        np.put_along_axis(dvals, k[..., None], 1.0, axis=2)
        return vals, dvals
    m = masked.max(axis=2, keepdims=True)
    e = np.exp(masked - m)
    s = e.sum(axis=2, keepdims=True)
    vals = (m + np.log(s))[..., 0]
    dvals = e / s
    return vals, dvals


# --- validation -------------------------------------------------------------


def _check_joint(joint: np.ndarray, U: int, check_normalized: bool) -> np.ndarray:
    joint = np.asarray(joint, dtype=np.float64)
    if joint.ndim != 3 or joint.shape[0] < 1 or joint.shape[1] != U + 1 or joint.shape[2] < 2:
        raise ShapeMismatch(f"joint shape {joint.shape} does not fit a target of length {U}")
    if check_normalized:
        m = joint.max(axis=2, keepdims=True)
        lse = (m + np.log(np.exp(joint - m).sum(axis=2, keepdims=True)))[..., 0]
        bad = np.abs(lse) > 1e-3
        if bad.any():
            t, u = np.argwhere(bad)[0]
            raise ValueError(f"joint row ({t}, {u}) is not log-normalised (logsumexp={lse[t, u]:.4g})")
    return joint


def _penalty(config: LossConfig, current_penalty: float | None) -> float:
    return config.skip_token_penalty if current_penalty is None else current_penalty


# --- reference route: explicit automata ---------------------------------------


def populate_weights(
    lattice: Wfsa,
    joint: np.ndarray,
    target: Sequence[int],
    config: LossConfig,
    current_penalty: float | None = None,
) -> Wfsa:
    """Attach joint log-probabilities and skip-arc scores to ``lattice``."""
    joint = np.asarray(joint, dtype=np.float64)
    V = joint.shape[-1] - 1
    units = check_target(target, V)
    if lattice.vocab_size is not None and lattice.vocab_size != V:
        raise ShapeMismatch(f"lattice built for V={lattice.vocab_size}, joint has V={V}")
    if joint.ndim != 3 or joint.shape[1] != len(units) + 1:
        raise ShapeMismatch(f"joint shape {joint.shape} does not fit a target of length {len(units)}")
    T = joint.shape[0]
    blank, sf, st = blank_id(V), skip_frame_id(V), skip_token_id(V)
    penalty = _penalty(config, current_penalty)
    weights = []
    for arc in lattice.arcs:
        unit, u, t = arc.label.as_tuple()
        if not (0 <= t < T and 0 <= u <= len(units)):
            raise ShapeMismatch(f"arc label {arc.label} outside joint shape {joint.shape}")
        if unit == sf:
            w = config.skip_frame_weight
        elif unit == st:
            w = clamp_weight(penalty) + mode_value(joint[t, u], units[u], config.skip_token_mode)
        elif unit == blank:
            w = joint[t, u, V]
        else:
            w = joint[t, u, unit]
        weights.append(clamp_weight(w))
    return lattice.with_weights(weights)


def loss_and_grad_reference(
    joint: np.ndarray,
    target: Sequence[int],
    config: LossConfig,
    current_penalty: float | None = None,
) -> LossResult:
    """Loss and gradient through an explicit lattice; slow, used as a cross-check."""
    joint = _check_joint(joint, len(target), config.check_normalized)
    V = joint.shape[2] - 1
    units = check_target(target, V)
    lattice = populate_weights(build_grid(units, joint.shape[0], config.kind, V), joint, units, config, current_penalty)
    total = forward_log_score(lattice)
    if total == -math.inf:
        raise NoPath("every alignment has zero probability")
    post = arc_posteriors(lattice)
    grad = np.zeros_like(joint)
    sf, st = skip_frame_id(V), skip_token_id(V)
    for p, arc in zip(post, lattice.arcs):
        unit, u, t = arc.label.as_tuple()
        if unit == sf:
            continue
        if unit == st:
            _, d = mode_value_and_grad(joint[t, u], units[u], config.skip_token_mode)
            grad[t, u] -= p * d
        else:
            grad[t, u, unit] -= p
    return LossResult(-total, grad)


# --- dense route ------------------------------------------------------------


@numba.njit(cache=True, inline="always")
def _log_add(a, b):
    if a < b:
        a, b = b, a
    if b <= NEG_INF_CUTOFF:
        return a
    return a + math.log1p(math.exp(b - a))


@numba.njit(cache=True, inline="always")
def _occupancy(x):
    if x <= NEG_INF_CUTOFF:
        return 0.0
    return math.exp(x)


@numba.njit(cache=True, nogil=True)
def _grid_forward_backward(blank, label, skip_frame, skip_token):
    """Forward-backward over a ``T x (U+1)`` grid with parallel skip arcs.

    ``blank`` and ``skip_frame`` are ``T x (U+1)``; ``label`` and ``skip_token``
    are ``T x U``. Disabled arcs carry the sentinel weight. Returns the log total
    and the occupancy of every arc family, laid out like the inputs; the final
    blank arc is reported at ``blank[T-1, U]``.
    """
    T, W = blank.shape
    U = W - 1
    horiz = np.full((T, W), NEG_INF)
    vert = np.full((T, W), NEG_INF)
    for t in range(T - 1):
        for u in range(W):
            horiz[t, u] = _log_add(blank[t, u], skip_frame[t, u])
    for t in range(T):
        for u in range(U):
            vert[t, u] = _log_add(label[t, u], skip_token[t, u])

    alpha = np.full((T, W), NEG_INF)
    for t in range(T):
        for u in range(W):
            if t == 0 and u == 0:
                alpha[t, u] = 0.0
                continue
            acc = NEG_INF
            if t > 0:
                acc = _log_add(acc, alpha[t - 1, u] + horiz[t - 1, u])
            if u > 0:
                acc = _log_add(acc, alpha[t, u - 1] + vert[t, u - 1])
            alpha[t, u] = acc
    total = alpha[T - 1, U] + blank[T - 1, U]

    beta = np.full((T, W), NEG_INF)
    for t in range(T - 1, -1, -1):
        for u in range(U, -1, -1):
            if t == T - 1 and u == U:
                beta[t, u] = blank[t, u]
                continue
            acc = NEG_INF
            if t < T - 1:
                acc = _log_add(acc, horiz[t, u] + beta[t + 1, u])
            if u < U:
                acc = _log_add(acc, vert[t, u] + beta[t, u + 1])
            beta[t, u] = acc

    p_blank = np.zeros((T, W))
    p_sf = np.zeros((T, W))
    p_label = np.zeros((T, U))
    p_st = np.zeros((T, U))
    if total <= NEG_INF_CUTOFF:
        return total, p_blank, p_sf, p_label, p_st
    for t in range(T):
        for u in range(W):
            a = alpha[t, u] - total
            if t < T - 1:
                p_blank[t, u] = _occupancy(a + blank[t, u] + beta[t + 1, u])
                p_sf[t, u] = _occupancy(a + skip_frame[t, u] + beta[t + 1, u])
            if u < U:
                p_label[t, u] = _occupancy(a + label[t, u] + beta[t, u + 1])
                p_st[t, u] = _occupancy(a + skip_token[t, u] + beta[t, u + 1])
    p_blank[T - 1, U] = _occupancy(alpha[T - 1, U] + blank[T - 1, U] - total)
    return total, p_blank, p_sf, p_label, p_st


def _arc_weights(joint, units, config, penalty):
    T, W, V1 = joint.shape
    U = W - 1
    V = V1 - 1
    blank = np.maximum(joint[:, :, V], NEG_INF)
    label = np.maximum(joint[:, np.arange(U), units], NEG_INF) if U else np.zeros((T, 0))
    if config.kind.skip_frames:
        sf = np.full((T, W), clamp_weight(config.skip_frame_weight))
    else:
        sf = np.full((T, W), NEG_INF)
    dmode = None
    if config.kind.skip_tokens and U:
        vals, dmode = _mode_values(joint, units, config.skip_token_mode)
        st = np.maximum(clamp_weight(penalty) + vals, NEG_INF)
    else:
        st = np.full((T, U), NEG_INF)
    return blank, label, sf, st, dmode


def loss_and_grad(
    joint: np.ndarray,
    target: Sequence[int],
    config: LossConfig,
    current_penalty: float | None = None,
) -> LossResult:
    """Negative log total score of the populated lattice and its gradient.

    ``current_penalty`` overrides ``config.skip_token_penalty`` (this is where
    the scheduled value goes). The gradient has the shape of ``joint``; entries
    no arc reads get exactly zero.
    """
    joint = _check_joint(joint, len(target), config.check_normalized)
    V = joint.shape[2] - 1
    units = np.asarray(check_target(target, V), dtype=np.int64)
    return _dense(joint, units, config, _penalty(config, current_penalty))


def _dense(joint, units, config, penalty) -> LossResult:
    T, W, V1 = joint.shape
    U = W - 1
    V = V1 - 1
    blank, label, sf, st, dmode = _arc_weights(joint, units, config, penalty)
    total, p_blank, _, p_label, p_st = _grid_forward_backward(blank, label, sf, st)
    if total <= NEG_INF_CUTOFF:
        raise NoPath("every alignment has zero probability")
    grad = np.zeros_like(joint)
    grad[:, :, V] = -p_blank
    if U:
        grad[:, np.arange(U), units] -= p_label
        if dmode is not None:
            grad[:, :U, :] -= p_st[..., None] * dmode
    return LossResult(-float(total), grad)


@dataclass
class BatchItem:
    joint: np.ndarray
    target: Sequence[int]
    frames: int
    units: int


def batch_loss(
    batch: Sequence[BatchItem | tuple],
    config: LossConfig,
    current_penalty: float | None = None,
    jobs: int = 1,
) -> tuple[list[LossResult], float]:
    """Score padded items on their valid regions.

    Each item is ``(joint, target, T, U)`` where ``joint`` may be padded past
    ``T`` frames and ``U + 1`` positions. Gradients have the padded shape with
    zeros outside the valid region. Returns per-item results and the mean loss.
    """
    items = [b if isinstance(b, BatchItem) else BatchItem(*b) for b in batch]
    penalty = _penalty(config, current_penalty)

    def one(item: BatchItem) -> LossResult:
        joint = np.asarray(item.joint, dtype=np.float64)
        T, U = item.frames, item.units
        if joint.ndim != 3 or T < 1 or T > joint.shape[0] or U + 1 > joint.shape[1] or len(item.target) < U:
            raise ShapeMismatch(f"item (T={T}, U={U}) does not fit joint shape {joint.shape}")
        V = joint.shape[2] - 1
        units = np.asarray(check_target(list(item.target)[:U], V), dtype=np.int64)
        valid = _check_joint(joint[:T, : U + 1], U, config.check_normalized)
        res = _dense(valid, units, config, penalty)
        grad = np.zeros_like(joint)
        grad[:T, : U + 1] = res.grad
        return LossResult(res.loss, grad)

    if jobs > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(one, items))
    else:
        results = [one(it) for it in items]
    mean = float(np.mean([r.loss for r in results])) if results else 0.0
    return results, mean
