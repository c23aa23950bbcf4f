"""Margin loss, SPSA with momentum, and accuracy metrics."""

from __future__ import annotations

import math
from collections.abc import Callable
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.stats import binom

from . import mps, tree
from .noise import NoiseSpec

EVAL_CHUNK = 256
INIT_DISTRIBUTION = "normal(0,1)"


@dataclass(frozen=True)
class Hyperparams:
    """Loss and optimizer constants.

    ``perturbation_*`` define the finite-difference radius
    ``a / (k + 1 + A)**s`` and ``step_*`` the step size ``b / (k + 1)**t``
    at epoch ``k``.
    """

    margin: float = 0.234
    exponent: float = 5.59
    perturbation_scale: float = 28.0
    perturbation_offset: float = 74.1
    perturbation_decay: float = 4.13
    step_scale: float = 33.0
    step_decay: float = 0.658
    momentum: float = 0.882
    batch_size: int = 222
    epochs: int = 30

    def __post_init__(self) -> None:
        problems = []
        if not self.exponent > 0:
            problems.append("exponent must be > 0")
        if self.batch_size < 1:
            problems.append("batch_size must be >= 1")
        if self.epochs < 0:
            problems.append("epochs must be >= 0")
        if not 0 <= self.momentum < 1:
            problems.append("momentum must lie in [0, 1)")
        if not (self.perturbation_scale > 0 and self.step_scale > 0):
            problems.append("perturbation_scale and step_scale must be > 0")
        if self.perturbation_decay < 0 or self.step_decay < 0 or self.perturbation_offset < 0:
            problems.append("decay exponents and offset must be >= 0")
        if not 0 <= self.margin <= 1:
            problems.append("margin must lie in [0, 1]")
        if problems:
            raise ValueError("; ".join(problems))

    def to_dict(self) -> dict:
        return asdict(self)


PUBLISHED_HYPERPARAMS = Hyperparams()


def predict_proba(
    topology,
    params: np.ndarray,
    enc: np.ndarray,
    noise: NoiseSpec | None = None,
    threads: int = 1,
) -> np.ndarray:
    """Label distributions for a batch of encodings, shape ``(batch, 2)``.

    Work is split into fixed-size chunks so the result does not depend on
    ``threads``.
    """
    if topology.kind == "tree":
        fn = tree.evaluate_discriminative
    elif topology.kind == "mps":
        fn = mps.evaluate_discriminative_mps
    else:
        raise ValueError(f"unknown architecture {topology.kind!r}")
    enc = np.asarray(enc, dtype=float)
    if len(enc) == 0:
        return np.zeros((0, 2))
    chunks = [enc[i : i + EVAL_CHUNK] for i in range(0, len(enc), EVAL_CHUNK)]

    def run(chunk):
        return fn(topology, params, chunk, noise)

    if threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(run, chunks))
    else:
        parts = [run(c) for c in chunks]
    return np.concatenate(parts)


def example_losses(probs: np.ndarray, labels: np.ndarray, margin: float, exponent: float) -> np.ndarray:
    """``max(p_largest_false - p_true + margin, 0) ** exponent`` per example."""
    probs = np.asarray(probs, dtype=float)
    labels = np.asarray(labels, dtype=np.int64)
    rows = np.arange(len(labels))
    p_true = probs[rows, labels]
    others = probs.copy()
    others[rows, labels] = -np.inf
    p_false = others.max(axis=1)
    return np.maximum(p_false - p_true + margin, 0.0) ** exponent


def per_example_loss(topology, params, enc, label: int, hp: Hyperparams, noise=None) -> float:
    probs = predict_proba(topology, params, np.asarray(enc)[None], noise)
    return float(example_losses(probs, [label], hp.margin, hp.exponent)[0])


def batch_loss(topology, params, enc, labels, hp: Hyperparams, noise=None, threads: int = 1) -> float:
    """Mean per-example loss over the batch."""
    if len(labels) == 0:
        raise ValueError("batch is empty")
    probs = predict_proba(topology, params, enc, noise, threads)
    return float(np.mean(example_losses(probs, labels, hp.margin, hp.exponent)))


def spsa_schedules(k: int, hp: Hyperparams) -> tuple[float, float]:
    """Perturbation radius and step size for epoch ``k``."""
    if k < 0:
        raise ValueError("epoch index must be non-negative")
    alpha = hp.perturbation_scale / (k + 1 + hp.perturbation_offset) ** hp.perturbation_decay
    beta = hp.step_scale / (k + 1) ** hp.step_decay
    return alpha, beta


@dataclass
class OptimizerState:
    params: np.ndarray
    velocity: np.ndarray
    epoch: int = 0

    def __post_init__(self) -> None:
        if np.shape(self.params) != np.shape(self.velocity):
            raise ValueError("params and velocity must have the same length")


def spsa_step(
    state: OptimizerState,
    loss: Callable[[np.ndarray], float],
    hp: Hyperparams,
    rng: np.random.Generator,
) -> OptimizerState:
    """One SPSA update with momentum on the mini-batch loss ``loss``."""
    alpha, beta = spsa_schedules(state.epoch, hp)
    if alpha == 0:
        raise ZeroDivisionError("perturbation radius underflowed to zero")
    delta = rng.integers(0, 2, size=state.params.shape) * 2.0 - 1.0
    g = (loss(state.params + alpha * delta) - loss(state.params - alpha * delta)) / (2 * alpha)
    velocity = hp.momentum * state.velocity - g * beta * delta
    return OptimizerState(state.params + velocity, velocity, state.epoch)


def test_accuracy(topology, params, enc, labels, noise=None, threads: int = 1) -> float:
    """Fraction of examples whose most probable label is correct."""
    if len(labels) == 0:
        raise ValueError("test set is empty")
    probs = predict_proba(topology, params, enc, noise, threads)
    return float(np.mean(tree.predict_label(probs) == np.asarray(labels)))


test_accuracy.__test__ = False  # not a pytest test


def success_probabilities(topology, params, enc, labels, noise=None, threads: int = 1) -> np.ndarray:
    """Single-shot probability of the correct label for each example."""
    probs = predict_proba(topology, params, enc, noise, threads)
    return probs[np.arange(len(labels)), np.asarray(labels, dtype=np.int64)]


def majority_vote_success(p: float, repetitions: int) -> float:
    """Probability that more than half of ``repetitions`` independent shots succeed."""
    if repetitions < 1 or repetitions % 2 == 0:
        raise ValueError("repetitions must be a positive odd integer")
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must lie in [0, 1]")
    return float(binom.sf(repetitions // 2, repetitions, p))


@dataclass
class EpochMetrics:
    epoch: int
    train_loss: float
    validation_accuracy: float | None
    test_accuracy: float | None


@dataclass
class TrainResult:
    params: np.ndarray
    history: list[EpochMetrics] = field(default_factory=list)
    init_distribution: str = INIT_DISTRIBUTION


def init_params(topology, rng: np.random.Generator) -> np.ndarray:
    return rng.standard_normal(tree.parameter_count(topology))


def train(
    topology,
    train_enc: np.ndarray,
    train_labels: np.ndarray,
    hp: Hyperparams,
    seed: int,
    noise: NoiseSpec | None = None,
    init: np.ndarray | None = None,
    validation: tuple[np.ndarray, np.ndarray] | None = None,
    test: tuple[np.ndarray, np.ndarray] | None = None,
    threads: int = 1,
    log: Callable[[EpochMetrics], None] | None = None,
) -> TrainResult:
    """Run ``hp.epochs`` epochs of mini-batch SPSA.

    Each epoch reshuffles the training set into batches of ``hp.batch_size``
    (the last batch may be short).  Metrics are recorded before training
    (epoch 0) and after every epoch.
    """
    train_labels = np.asarray(train_labels)
    if len(train_labels) == 0:
        raise ValueError("training set is empty")
    rng = np.random.default_rng(seed)
    params = init_params(topology, rng) if init is None else np.array(init, dtype=float)
    state = OptimizerState(params, np.zeros_like(params), 0)
    result = TrainResult(params)

    def record(epoch: int) -> None:
        m = EpochMetrics(
            epoch,
            batch_loss(topology, state.params, train_enc, train_labels, hp, noise, threads),
            None if validation is None else test_accuracy(topology, state.params, *validation, noise, threads),
            None if test is None else test_accuracy(topology, state.params, *test, noise, threads),
        )
        result.history.append(m)
        if log is not None:
            log(m)

    record(0)
    n = len(train_labels)
    for k in range(hp.epochs):
        state.epoch = k
        order = rng.permutation(n)
        for start in range(0, n, hp.batch_size):
            idx = order[start : start + hp.batch_size]
            enc_b, lab_b = train_enc[idx], train_labels[idx]

            def loss(p, enc_b=enc_b, lab_b=lab_b):
                return batch_loss(topology, p, enc_b, lab_b, hp, noise, threads)

            state = spsa_step(state, loss, hp, rng)
        if not np.all(np.isfinite(state.params)):
            raise FloatingPointError(f"parameters diverged in epoch {k}")
        record(k + 1)
    result.params = state.params
    return result
