"""A tiny transducer with hand-written gradients.

Features are synthesized from the true words: every word owns ``k`` fixed
codebook frames, plus Gaussian noise. The model is

    e_t = relu(x_t @ enc_w + enc_b)
    p_u = embed[y_{u-1}]            (y_{-1} = blank, stateless predictor)
    joint[t, u] = log_softmax(relu(e_t + p_u) @ proj_w + proj_b)
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Sequence

import numpy as np

from .corruption import Utterance, utterance_rng

PARAM_NAMES = ("enc_w", "enc_b", "embed", "proj_w", "proj_b")
CHECKPOINT_MAGIC = "robust-transducer-toy/1"


@dataclass(frozen=True)
class SynthesisSpec:
    vocab: tuple[str, ...]
    frames_per_word: int = 4
    feature_dim: int = 16
    noise_std: float = 0.1
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "vocab", tuple(self.vocab))
        if len(set(self.vocab)) != len(self.vocab) or not self.vocab:
            raise ValueError("vocabulary must be non-empty and without duplicates")

    @cached_property
    def codebook(self) -> np.ndarray:
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([self.seed, 0xC0DE])))
        return rng.standard_normal((len(self.vocab), self.frames_per_word, self.feature_dim))

    @cached_property
    def word_index(self) -> dict[str, int]:
        return {w: i for i, w in enumerate(self.vocab)}

    def encode(self, words: Sequence[str]) -> list[int]:
        try:
            return [self.word_index[w] for w in words]
        except KeyError as exc:
            raise ValueError(f"word {exc.args[0]!r} is not in the vocabulary") from None

    def decode(self, ids: Sequence[int]) -> list[str]:
        return [self.vocab[i] for i in ids]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["vocab"] = list(self.vocab)
        return d


def synthesize_frames(utt: Utterance, spec: SynthesisSpec) -> np.ndarray:
    """``(k * len(true_words), d)`` features; only the true words are used."""
    ids = spec.encode(utt.true_words)
    if not ids:
        return np.zeros((0, spec.feature_dim))
    frames = spec.codebook[ids].reshape(-1, spec.feature_dim)
    if spec.noise_std > 0:
        rng = utterance_rng(spec.seed, utt.id, "frames")
        frames = frames + spec.noise_std * rng.standard_normal(frames.shape)
    return frames


@dataclass
class ToyModelParams:
    enc_w: np.ndarray
    enc_b: np.ndarray
    embed: np.ndarray
    proj_w: np.ndarray
    proj_b: np.ndarray

    @classmethod
    def init(cls, vocab_size: int, feature_dim: int = 16, hidden: int = 32, seed: int = 0, std: float = 0.1):
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, 0x1A17])))
        V1 = vocab_size + 1
        return cls(
            enc_w=std * rng.standard_normal((feature_dim, hidden)),
            enc_b=np.zeros(hidden),
            embed=std * rng.standard_normal((V1, hidden)),
            proj_w=std * rng.standard_normal((hidden, V1)),
            proj_b=np.zeros(V1),
        )

    @classmethod
    def zeros_like(cls, other: "ToyModelParams") -> "ToyModelParams":
        return cls(*(np.zeros_like(getattr(other, n)) for n in PARAM_NAMES))

    @property
    def vocab_size(self) -> int:
        return self.proj_b.shape[0] - 1

    @property
    def blank(self) -> int:
        return self.vocab_size

    def arrays(self) -> list[np.ndarray]:
        return [getattr(self, n) for n in PARAM_NAMES]

    def num_params(self) -> int:
        return sum(a.size for a in self.arrays())

    def copy(self) -> "ToyModelParams":
        return ToyModelParams(*(a.copy() for a in self.arrays()))

    def all_finite(self) -> bool:
        return all(np.isfinite(a).all() for a in self.arrays())


@dataclass
class JointCache:
    frames: np.ndarray
    prev: np.ndarray
    enc_pre: np.ndarray
    hidden_pre: np.ndarray
    hidden: np.ndarray
    logp: np.ndarray = field(repr=False)


def prev_tokens(target_ids: Sequence[int], blank: int) -> np.ndarray:
    return np.asarray([blank, *target_ids], dtype=np.int64)


def encode_frames(params: ToyModelParams, frames: np.ndarray) -> np.ndarray:
    return np.maximum(frames @ params.enc_w + params.enc_b, 0.0)


def forward_batch(params: ToyModelParams, frames: np.ndarray, prev: np.ndarray) -> tuple[np.ndarray, JointCache]:
    """Joint log-probs for padded ``frames (B, T, d)`` and ``prev (B, U+1)``."""
    enc_pre = frames @ params.enc_w + params.enc_b
    e = np.maximum(enc_pre, 0.0)
    p = params.embed[prev]
    hidden_pre = e[:, :, None, :] + p[:, None, :, :]
    hidden = np.maximum(hidden_pre, 0.0)
    logits = hidden @ params.proj_w + params.proj_b
    m = logits.max(axis=-1, keepdims=True)
    logp = logits - m - np.log(np.exp(logits - m).sum(axis=-1, keepdims=True))
    return logp, JointCache(frames, prev, enc_pre, hidden_pre, hidden, logp)


def backward_batch(params: ToyModelParams, cache: JointCache, joint_grad: np.ndarray) -> ToyModelParams:
    """Parameter gradients given d(loss)/d(joint log-probs)."""
    g = joint_grad
    dlogits = g - np.exp(cache.logp) * g.sum(axis=-1, keepdims=True)
    h = cache.hidden.shape[-1]
    V1 = dlogits.shape[-1]
    d_proj_w = cache.hidden.reshape(-1, h).T @ dlogits.reshape(-1, V1)
    d_proj_b = dlogits.reshape(-1, V1).sum(axis=0)
    dh = dlogits @ params.proj_w.T
    dh *= cache.hidden_pre > 0
    de = dh.sum(axis=2)
    dp = dh.sum(axis=1)
    d_embed = np.zeros_like(params.embed)
    np.add.at(d_embed, cache.prev.reshape(-1), dp.reshape(-1, h))
    de *= cache.enc_pre > 0
    d = cache.frames.shape[-1]
    d_enc_w = cache.frames.reshape(-1, d).T @ de.reshape(-1, h)
    d_enc_b = de.reshape(-1, h).sum(axis=0)
    return ToyModelParams(d_enc_w, d_enc_b, d_embed, d_proj_w, d_proj_b)


def forward_joint(params: ToyModelParams, frames: np.ndarray, target_ids: Sequence[int]) -> np.ndarray:
    """``(T, U+1, V+1)`` joint log-probabilities for one utterance."""
    prev = prev_tokens(target_ids, params.blank)[None]
    logp, _ = forward_batch(params, np.asarray(frames, dtype=np.float64)[None], prev)
    return logp[0]


def backward_params(
    params: ToyModelParams, frames: np.ndarray, target_ids: Sequence[int], joint_grad: np.ndarray
) -> ToyModelParams:
    prev = prev_tokens(target_ids, params.blank)[None]
    _, cache = forward_batch(params, np.asarray(frames, dtype=np.float64)[None], prev)
    return backward_batch(params, cache, np.asarray(joint_grad)[None])


class ToyTransducer:
    """Adapter exposing the toy parameters to :func:`~.decoding.greedy_decode`."""

    def __init__(self, params: ToyModelParams):
        self.params = params
        self.blank_id = params.blank

    def encode(self, frames: np.ndarray) -> np.ndarray:
        return encode_frames(self.params, frames)

    def predict(self, token: int) -> np.ndarray:
        return self.params.embed[token]

    def joint(self, enc: np.ndarray, pred: np.ndarray) -> np.ndarray:
        return np.maximum(enc + pred, 0.0) @ self.params.proj_w + self.params.proj_b


# --- checkpoints ------------------------------------------------------------
# layout: 8-byte little-endian header length, UTF-8 JSON header, then every
# parameter as little-endian float64 in PARAM_NAMES order.


def save_checkpoint(path: str | Path, params: ToyModelParams, synthesis: SynthesisSpec, extra: dict | None = None) -> None:
    header = {
        "format": CHECKPOINT_MAGIC,
        "params": [{"name": n, "shape": list(getattr(params, n).shape)} for n in PARAM_NAMES],
        "synthesis": synthesis.to_dict(),
    }
    if extra:
        header["extra"] = extra
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(struct.pack("<Q", len(blob)))
        f.write(blob)
        for n in PARAM_NAMES:
            f.write(np.ascontiguousarray(getattr(params, n), dtype="<f8").tobytes())


def load_checkpoint(path: str | Path) -> tuple[ToyModelParams, SynthesisSpec, dict]:
    raw = Path(path).read_bytes()
    (n,) = struct.unpack_from("<Q", raw, 0)
    header = json.loads(raw[8 : 8 + n].decode("utf-8"))
    if header.get("format") != CHECKPOINT_MAGIC:
        raise ValueError(f"{path} is not a toy transducer checkpoint")
    offset = 8 + n
    arrays = {}
    for entry in header["params"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        arrays[entry["name"]] = np.frombuffer(raw, dtype="<f8", count=count, offset=offset).reshape(shape).astype(np.float64)
        offset += 8 * count
    if offset != len(raw):
        raise ValueError(f"{path}: trailing bytes after parameters")
    syn = header["synthesis"]
    synthesis = SynthesisSpec(
        vocab=tuple(syn["vocab"]),
        frames_per_word=syn["frames_per_word"],
        feature_dim=syn["feature_dim"],
        noise_std=syn["noise_std"],
        seed=syn["seed"],
    )
    return ToyModelParams(**arrays), synthesis, header.get("extra", {})
