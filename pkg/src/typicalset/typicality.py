"""Typical-set scoring, membership testing, epsilon calibration, and
empirical error-rate estimation for a single density model.

A length-n sequence is typical when its average negative log-density sits
strictly within epsilon of the model's differential entropy.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .density import MixtureModel, SampleBatch, _as_points, log_density_batch, sample
from .rng import derive_seed

__all__ = [
    "TypicalityConfig",
    "TestOutcome",
    "ErrorRates",
    "typicality_score",
    "sequence_scores",
    "is_typical",
    "calibrate_epsilon",
    "estimate_error_rates",
    "export_outcomes",
]


@dataclass(frozen=True)
class TypicalityConfig:
    """One typical set: a radius epsilon, a sequence length n, and the
    entropy value the score is centered on."""

    epsilon: float
    n: int
    entropy: float

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if int(self.n) < 1:
            raise ValueError("n must be >= 1")
        object.__setattr__(self, "n", int(self.n))
        if not np.isfinite(self.entropy):
            raise ValueError("entropy must be finite")


@dataclass(frozen=True)
class TestOutcome:
    """Result of one membership test. accepted <=> score < config.epsilon."""

    score: float
    accepted: bool
    config: TypicalityConfig

    def __post_init__(self):
        if self.accepted != (self.score < self.config.epsilon):
            raise ValueError("accepted flag inconsistent with score and epsilon")


@dataclass(frozen=True)
class ErrorRates:
    """Empirical type-I (alpha) and type-II (beta) rates with binomial
    standard errors."""

    alpha: float
    beta: float
    trials: int
    alpha_stderr: float
    beta_stderr: float

    def __post_init__(self):
        for name in ("alpha", "beta"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.trials < 1:
            raise ValueError("trials must be positive")


def _binomial_stderr(p: float, trials: int) -> float:
    return float(np.sqrt(p * (1.0 - p) / trials))


def typicality_score(model: MixtureModel, entropy: float, xs) -> float:
    """|average negative log-density of the sequence minus entropy|, nats."""
    pts = _as_points(model, xs)
    if pts.shape[0] < 1:
        raise ValueError("sequence must contain at least one point")
    avg_nll = -float(np.mean(log_density_batch(model, pts)))
    return abs(avg_nll - float(entropy))


def sequence_scores(model: MixtureModel, entropy: float, sequences) -> np.ndarray:
    """Typicality scores for a stack of sequences.

    ``sequences`` is an (S, n, d) array; returns (S,) scores. Equivalent
    to calling :func:`typicality_score` per sequence, vectorized.
    """
    seqs = np.asarray(sequences, dtype=np.float64)
    if seqs.ndim != 3:
        raise ValueError("sequences must have shape (S, n, d)")
    s, n, d = seqs.shape
    flat = seqs.reshape(s * n, d)
    nll = -log_density_batch(model, flat).reshape(s, n)
    return np.abs(nll.mean(axis=1) - float(entropy))


def is_typical(model: MixtureModel, config: TypicalityConfig, xs) -> TestOutcome:
    """Strict membership test: accepted iff score < config.epsilon.

    The sequence length must equal config.n.
    """
    pts = _as_points(model, xs)
    if pts.shape[0] != config.n:
        raise ValueError(f"expected a length-{config.n} sequence, got {pts.shape[0]}")
    score = typicality_score(model, config.entropy, pts)
    return TestOutcome(score=score, accepted=score < config.epsilon, config=config)


def calibrate_epsilon(
    model: MixtureModel,
    entropy: float,
    n: int,
    target_coverage: float,
    num_sequences: int = 20_000,
    seed: int = 0,
) -> float:
    """Empirical coverage quantile of the typicality score.

    Draws ``num_sequences`` fresh length-n sequences from the model (stream
    ``(seed, "calibration")``) and returns the ``target_coverage`` quantile
    of their scores, so that held-out acceptance under the strict test
    approximates the target.
    """
    if not 0.0 < target_coverage <= 1.0:
        raise ValueError("target_coverage must lie in (0, 1]")
    if num_sequences < 1000:
        raise ValueError("num_sequences must be >= 1000")
    if n < 1:
        raise ValueError("n must be >= 1")
    batch = sample(model, num_sequences * n, derive_seed(seed, "calibration"))
    seqs = batch.data.reshape(num_sequences, n, model.dim)
    scores = sequence_scores(model, entropy, seqs)
    return float(np.quantile(scores, target_coverage))


def estimate_error_rates(
    null_model: MixtureModel,
    config: TypicalityConfig,
    alt_model: MixtureModel,
    trials: int,
    seed: int,
) -> ErrorRates:
    """Estimate alpha (null sequences rejected) and beta (alternative
    sequences accepted) by direct simulation.

    Null sequences come from stream ``(seed, "null")`` and alternative
    sequences from ``(seed, "alt")``.
    """
    if trials < 100:
        raise ValueError("trials must be >= 100")
    if null_model.dim != alt_model.dim:
        raise ValueError("null and alternative models must share one dimension")
    n = config.n

    null_batch = sample(null_model, trials * n, derive_seed(seed, "null"))
    null_scores = sequence_scores(
        null_model, config.entropy, null_batch.data.reshape(trials, n, null_model.dim)
    )
    alpha = float(np.mean(null_scores >= config.epsilon))

    alt_batch = sample(alt_model, trials * n, derive_seed(seed, "alt"))
    alt_scores = sequence_scores(
        null_model, config.entropy, alt_batch.data.reshape(trials, n, alt_model.dim)
    )
    beta = float(np.mean(alt_scores < config.epsilon))

    return ErrorRates(
        alpha=alpha,
        beta=beta,
        trials=int(trials),
        alpha_stderr=_binomial_stderr(alpha, trials),
        beta_stderr=_binomial_stderr(beta, trials),
    )


def export_outcomes(path, outcomes: Iterable[TestOutcome]) -> None:
    """Write outcomes as CSV with header sequence_id,score,epsilon,accepted."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["sequence_id", "score", "epsilon", "accepted"])
        for i, outcome in enumerate(outcomes):
            writer.writerow(
                [
                    i,
                    repr(float(outcome.score)),
                    repr(float(outcome.config.epsilon)),
                    "true" if outcome.accepted else "false",
                ]
            )
