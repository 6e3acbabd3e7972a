"""Numeric evaluators for the typical-set error bounds and feasibility
conditions, plus low-dimensional Monte-Carlo and quadrature validators.

Everything here is a pure function of its inputs: identical arguments give
identical outputs. The checkers that assume a large sequence length emit a
UserWarning when called with n < 10.
"""

from __future__ import annotations

import math
import warnings
from typing import NamedTuple

import numpy as np

from .density import (
    MixtureModel,
    _as_points,
    closed_form_kl_gaussian,
    gaussian_entropy,
    log_density_batch,
    sample,
)
from .grids import GridResolutionError, midpoint_grid, model_box
from .rng import derive_seed

__all__ = [
    "Theorem2Result",
    "Lemma0Result",
    "theorem1_beta_bound",
    "theorem2_conditions",
    "theorem3_threshold",
    "theorem3_condition",
    "rel_entropy_typicality_score",
    "validate_lemma0_mc",
    "estimate_volume_ratio",
    "estimate_volume_ratio_mc",
]

_SMALL_N_CUTOFF = 10


class Theorem2Result(NamedTuple):
    """Outcome of the two ensemble-feasibility inequalities.

    d_threshold is the per-member KL ceiling from the second inequality;
    NaN marks it undefined (log argument not positive), in which case
    condition2 is False.
    """

    condition1: bool
    condition2: bool
    d_threshold: float


class Lemma0Result(NamedTuple):
    """Monte-Carlo check of the cross-typicality probability bound."""

    estimated_prob: float
    bound: float
    holds: bool


def _warn_small_n(n: int, what: str) -> None:
    if n < _SMALL_N_CUTOFF:
        warnings.warn(
            f"{what} assumes n sufficiently large; n={n} is small, treat the result as indicative",
            UserWarning,
            stacklevel=3,
        )


def theorem1_beta_bound(n: int, epsilon: float, kl_alt_p: float, h_alt: float, h_p: float) -> float:
    """Type-II error bound for one named alternative.

        exp(-n (D + h_alt - h_p - 3 eps)) + 3 eps

    where D = D_KL(alternative || null). The raw value is returned even
    when it exceeds 1; a vacuous bound additionally triggers a UserWarning.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    if kl_alt_p < 0:
        raise ValueError("kl_alt_p must be nonnegative")
    value = math.exp(-n * (kl_alt_p + h_alt - h_p - 3.0 * epsilon)) + 3.0 * epsilon
    if value >= 1.0:
        warnings.warn(
            f"beta bound {value:.6g} is vacuous (>= 1)", UserWarning, stacklevel=2
        )
    return value


def theorem2_conditions(n: int, epsilon: float, K: int, d_k) -> Theorem2Result:
    """Evaluate the two feasibility inequalities for a size-K ensemble.

    condition1:  (1 / 4 eps) * log((1 - 2 eps) / ((K-1)/K + eps)) > n
    condition2:  every d in d_k is strictly below

        d_threshold = (1/n) * log((1 - 2 eps)/eps * exp(-4 n eps)
                                  - (K-1)/(eps K)) + 3 eps

    An unsatisfiable threshold (log argument <= 0) yields condition2 False
    with d_threshold = NaN.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if not 0.0 < epsilon < 0.5:
        raise ValueError("epsilon must lie in (0, 0.5)")
    if K < 1:
        raise ValueError("K must be >= 1")
    _warn_small_n(n, "the ensemble feasibility check")

    left = math.log((1.0 - 2.0 * epsilon) / ((K - 1) / K + epsilon)) / (4.0 * epsilon)
    condition1 = left > n

    inner = (1.0 - 2.0 * epsilon) / epsilon * math.exp(-4.0 * n * epsilon) - (K - 1) / (epsilon * K)
    if inner <= 0.0:
        return Theorem2Result(condition1=condition1, condition2=False, d_threshold=float("nan"))
    d_threshold = math.log(inner) / n + 3.0 * epsilon
    d_values = np.atleast_1d(np.asarray(d_k, dtype=np.float64))
    condition2 = bool(np.all(d_values < d_threshold))
    return Theorem2Result(condition1=condition1, condition2=condition2, d_threshold=d_threshold)


def theorem3_threshold(n: int, epsilon: float, r: float, h_a: float, h_b: float) -> float:
    """KL threshold above which two typical sets overlap on less than a
    fraction r of the first set's volume.

        h_b - h_a - 3 eps + (1/n) * log(1 / (r (1 - eps) exp(-2 n eps) - 2 eps))

    NaN when the inner quantity is not positive (condition unsatisfiable).
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    if not 0.0 < r <= 1.0:
        raise ValueError("r must lie in (0, 1]")
    inner = r * (1.0 - epsilon) * math.exp(-2.0 * n * epsilon) - 2.0 * epsilon
    if inner <= 0.0:
        return float("nan")
    return h_b - h_a - 3.0 * epsilon + math.log(1.0 / inner) / n


def theorem3_condition(
    n: int, epsilon: float, r: float, kl_ab: float, h_a: float, h_b: float
) -> bool:
    """Whether D_KL(q_a || q_b) clears the volume-ratio threshold.

    False when the threshold is unsatisfiable at these (n, epsilon, r).
    """
    _warn_small_n(n, "the volume-ratio condition")
    threshold = theorem3_threshold(n, epsilon, r, h_a, h_b)
    if math.isnan(threshold):
        return False
    return kl_ab > threshold


def rel_entropy_typicality_score(
    q_a: MixtureModel,
    q_b: MixtureModel,
    xs,
    kl: float | None = None,
) -> float:
    """Distance of a sequence's empirical log-ratio from the divergence.

        | (1/n) sum_i log(q_a(x_i) / q_b(x_i)) - D |

    D defaults to the closed-form KL when both models are
    single-component; otherwise it must be supplied.
    """
    if q_a.dim != q_b.dim:
        raise ValueError("models must share one dimension")
    pts = _as_points(q_a, xs)
    if pts.shape[0] < 1:
        raise ValueError("sequence must contain at least one point")
    if kl is None:
        if q_a.num_components == 1 and q_b.num_components == 1:
            kl = closed_form_kl_gaussian(q_a.components[0], q_b.components[0])
        else:
            raise ValueError("kl must be supplied for multi-component models")
    log_ratio = log_density_batch(q_a, pts) - log_density_batch(q_b, pts)
    return abs(float(np.mean(log_ratio)) - float(kl))


def _require_1d_single(model: MixtureModel, name: str) -> None:
    if model.dim != 1 or model.num_components != 1:
        raise ValueError(f"{name} must be a 1-D single-component model")


def validate_lemma0_mc(
    q_a: MixtureModel,
    q_b: MixtureModel,
    n: int,
    epsilon: float,
    trials: int = 10_000,
    seed: int = 0,
) -> Lemma0Result:
    """Monte-Carlo check that q_a's mass on q_b's typical set respects

        q_a(T_b) < exp(-n (D + h_a - h_b - 3 eps)) + 3 eps

    with D = D_KL(q_a || q_b) in closed form. The left side is estimated
    as the fraction of length-n sequences from q_a (stream
    ``(seed, "lemma0")``) whose typicality score under q_b is strictly
    below epsilon; holds = estimate + 3 binomial standard errors <= bound.
    """
    _require_1d_single(q_a, "q_a")
    _require_1d_single(q_b, "q_b")
    if trials < 10_000:
        raise ValueError("trials must be >= 10000")
    if n < 1:
        raise ValueError("n must be >= 1")
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    d = closed_form_kl_gaussian(q_a.components[0], q_b.components[0])
    h_a = gaussian_entropy(q_a.components[0])
    h_b = gaussian_entropy(q_b.components[0])

    batch = sample(q_a, trials * n, derive_seed(seed, "lemma0"))
    nll_b = -log_density_batch(q_b, batch.data).reshape(trials, n)
    scores = np.abs(nll_b.mean(axis=1) - h_b)
    estimate = float(np.mean(scores < epsilon))
    stderr = math.sqrt(estimate * (1.0 - estimate) / trials)
    bound = math.exp(-n * (d + h_a - h_b - 3.0 * epsilon)) + 3.0 * epsilon
    return Lemma0Result(
        estimated_prob=estimate,
        bound=bound,
        holds=(estimate + 3.0 * stderr) <= bound,
    )


def _entropy_for_membership(model: MixtureModel, given: float | None, name: str) -> float:
    if given is not None:
        return float(given)
    if model.num_components == 1:
        return gaussian_entropy(model.components[0])
    raise ValueError(f"{name} entropy must be supplied for multi-component models")


def estimate_volume_ratio(
    q_a: MixtureModel,
    q_b: MixtureModel,
    epsilon: float,
    grid_resolution: int = 2048,
    h_a: float | None = None,
    h_b: float | None = None,
) -> float:
    """Grid-quadrature Vol(T_a intersect T_b) / Vol(T_a) at n = 1, d <= 2.

    Membership uses single-point typicality with entropies in closed form
    for single-component models (or supplied). The bounding box extends 10
    max standard deviations beyond the outermost means. A grid on which
    T_a captures no cells raises GridResolutionError.
    """
    if q_a.dim != q_b.dim:
        raise ValueError("models must share one dimension")
    if q_a.dim > 2:
        raise ValueError("grid quadrature supports d <= 2 only")
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    ha = _entropy_for_membership(q_a, h_a, "q_a")
    hb = _entropy_for_membership(q_b, h_b, "q_b")
    lo, hi = model_box([q_a, q_b], padding_sigmas=10.0)
    pts, _ = midpoint_grid(lo, hi, grid_resolution)
    in_a = np.abs(-log_density_batch(q_a, pts) - ha) < epsilon
    count_a = int(in_a.sum())
    if count_a == 0:
        raise GridResolutionError("T_a captured no grid cells; refine the grid")
    in_b = np.abs(-log_density_batch(q_b, pts) - hb) < epsilon
    return float(np.logical_and(in_a, in_b).sum() / count_a)


def estimate_volume_ratio_mc(
    q_a: MixtureModel,
    q_b: MixtureModel,
    n: int,
    epsilon: float,
    num_sequences: int = 100_000,
    seed: int = 0,
    h_a: float | None = None,
    h_b: float | None = None,
) -> float:
    """Sequence-space Vol(T_a intersect T_b) / Vol(T_a) by importance
    sampling from q_a's product measure.

    Each length-n sequence x from q_a (stream ``(seed, "volume")``)
    carries weight exp(n * avg_nll_a(x)), the reciprocal of its density;
    on T_a that weight is bounded within exp(n (h_a +- eps)), so the
    estimator has finite variance. The ratio of weighted indicator sums
    estimates the volume ratio.
    """
    if q_a.dim != q_b.dim:
        raise ValueError("models must share one dimension")
    if n < 1:
        raise ValueError("n must be >= 1")
    if num_sequences < 1000:
        raise ValueError("num_sequences must be >= 1000")
    ha = _entropy_for_membership(q_a, h_a, "q_a")
    hb = _entropy_for_membership(q_b, h_b, "q_b")
    batch = sample(q_a, num_sequences * n, derive_seed(seed, "volume"))
    nll_a = -log_density_batch(q_a, batch.data).reshape(num_sequences, n).mean(axis=1)
    nll_b = -log_density_batch(q_b, batch.data).reshape(num_sequences, n).mean(axis=1)
    in_a = np.abs(nll_a - ha) < epsilon
    if not np.any(in_a):
        raise GridResolutionError("no sequences landed in T_a; increase num_sequences")
    in_both = np.logical_and(in_a, np.abs(nll_b - hb) < epsilon)
    # weights are rescaled by exp(-n h_a) for stability; the factor cancels
    weights = np.where(in_a, np.exp(n * (nll_a - ha)), 0.0)
    vol_a = float(weights.sum())
    vol_both = float(weights[in_both].sum())
    return vol_both / vol_a
