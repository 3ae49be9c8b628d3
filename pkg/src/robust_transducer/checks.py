"""Randomised verification suites for the loss family.

Each suite draws small random lattices, compares the compiled loss against an
independent computation and reports the worst deviation seen.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .fsa import enumerate_paths, logsumexp_paths
from .lattices import LossKind, build_grid
from .loss import LossConfig, SkipTokenMode, loss_and_grad, populate_weights

KINDS = tuple(LossKind)
MODES = tuple(SkipTokenMode)


@dataclass
class SuiteResult:
    name: str
    instances: int
    max_deviation: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.instances > 0 and self.max_deviation < self.tolerance

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status} {self.name}: {self.instances} instances, max deviation {self.max_deviation:.3e} (tol {self.tolerance:.0e})"


def random_joint(rng: np.random.Generator, T: int, U: int, V: int, scale: float = 2.0) -> np.ndarray:
    x = scale * rng.standard_normal((T, U + 1, V + 1))
    m = x.max(axis=-1, keepdims=True)
    return x - m - np.log(np.exp(x - m).sum(axis=-1, keepdims=True))


def random_instance(rng: np.random.Generator, max_t: int, max_u: int, max_v: int, min_v: int = 1):
    T = int(rng.integers(1, max_t + 1))
    U = int(rng.integers(0, max_u + 1))
    V = int(rng.integers(min_v, max(min_v, max_v) + 1))
    target = [int(x) for x in rng.integers(0, V, size=U)]
    return random_joint(rng, T, U, V), target


def random_config(rng: np.random.Generator, kind: LossKind, mode: SkipTokenMode, normalized: bool = True) -> LossConfig:
    return LossConfig(
        kind=kind,
        skip_frame_weight=float(rng.uniform(-3.0, 0.5)),
        skip_token_penalty=float(rng.uniform(-4.0, 0.0)),
        skip_token_mode=mode,
        check_normalized=normalized,
    )


def _combos():
    return itertools.cycle(itertools.product(KINDS, MODES))


def _needs_two(mode: SkipTokenMode) -> int:
    return 2 if mode in (SkipTokenMode.MAXEXCL, SkipTokenMode.SUMEXCL) else 1


def oracle_suite(trials: int = 1000, max_t: int = 4, max_u: int = 3, max_v: int = 3, seed: int = 0) -> SuiteResult:
    """Compiled loss vs brute-force path enumeration on the explicit lattice."""
    rng = np.random.default_rng([seed, 1])
    worst = 0.0
    combos = _combos()
    for _ in range(trials):
        kind, mode = next(combos)
        joint, target = random_instance(rng, max_t, max_u, max_v, _needs_two(mode))
        cfg = random_config(rng, kind, mode)
        fast = loss_and_grad(joint, target, cfg).loss
        lattice = populate_weights(build_grid(target, joint.shape[0], kind, joint.shape[2] - 1), joint, target, cfg)
        brute = -logsumexp_paths(enumerate_paths(lattice, max_paths=100_000))
        worst = max(worst, abs(fast - brute))
    return SuiteResult("oracle equivalence", trials, worst, 1e-8)


def relative_error(a: np.ndarray, b: np.ndarray, floor: float = 1e-3) -> np.ndarray:
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)


def finite_difference_grad(f, x: np.ndarray, step: float = 1e-5) -> np.ndarray:
    g = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        orig = x[idx]
        x[idx] = orig + step
        fp = f(x)
        x[idx] = orig - step
        fm = f(x)
        x[idx] = orig
        g[idx] = (fp - fm) / (2 * step)
    return g


def gradient_suite(
    trials: int = 200,
    max_t: int = 3,
    max_u: int = 2,
    max_v: int = 3,
    seed: int = 0,
    step: float = 1e-5,
    grad_sign: float = 1.0,
) -> SuiteResult:
    """Analytic joint gradients vs central differences.

    ``grad_sign`` exists to exercise the failure path; anything but 1 breaks
    the analytic gradient on purpose.
    """
    rng = np.random.default_rng([seed, 2])
    worst = 0.0
    combos = _combos()
    for _ in range(trials):
        kind, mode = next(combos)
        joint, target = random_instance(rng, max_t, max_u, max_v, _needs_two(mode))
        cfg = random_config(rng, kind, mode, normalized=False)
        grad = grad_sign * loss_and_grad(joint, target, cfg).grad
        fd = finite_difference_grad(lambda j: loss_and_grad(j, target, cfg).loss, joint.copy(), step)
        worst = max(worst, float(relative_error(grad, fd).max()))
    return SuiteResult("gradient vs finite differences", trials, worst, 1e-4)


DEGENERATIONS = (
    # (kind, skip_frame -inf?, skip_token -inf?, equivalent kind)
    (LossKind.STAR, True, False, LossKind.RNNT),
    (LossKind.BYPASS, False, True, LossKind.RNNT),
    (LossKind.TRT, True, True, LossKind.RNNT),
    (LossKind.TRT, True, False, LossKind.BYPASS),
    (LossKind.TRT, False, True, LossKind.STAR),
)


def degeneration_suite(trials: int = 100, max_t: int = 4, max_u: int = 3, max_v: int = 3, seed: int = 0) -> SuiteResult:
    """Disabling skip arcs with -inf must reproduce the simpler loss exactly."""
    rng = np.random.default_rng([seed, 3])
    worst = 0.0
    count = 0
    for kind, no_frame, no_token, other in DEGENERATIONS:
        for i in range(trials):
            mode = MODES[i % len(MODES)]
            joint, target = random_instance(rng, max_t, max_u, max_v, _needs_two(mode))
            base = random_config(rng, kind, mode)
            sf = -math.inf if no_frame else base.skip_frame_weight
            st = -math.inf if no_token else base.skip_token_penalty
            a = loss_and_grad(joint, target, LossConfig(kind, sf, st, mode))
            b = loss_and_grad(joint, target, LossConfig(other, base.skip_frame_weight, base.skip_token_penalty, mode))
            worst = max(worst, abs(a.loss - b.loss), float(np.abs(a.grad - b.grad).max()))
            count += 1
    return SuiteResult("degeneration identities", count, worst, 1e-8)
