"""Diagonal-covariance Gaussian mixtures.

Construction, log-density evaluation, ancestral sampling, and Monte-Carlo
estimation of differential entropy and KL divergence. Densities are handled
in log space throughout: mixture weights are stored as log-weights and the
covariance diagonals as log-variances, so normalization and positivity hold
by construction instead of by runtime checks.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from .rng import derive_seed, make_rng

__all__ = [
    "DimensionMismatchError",
    "GaussianComponent",
    "MixtureModel",
    "SampleBatch",
    "EntropyEstimate",
    "KlEstimate",
    "log_density",
    "log_density_batch",
    "avg_neg_log_density",
    "sample",
    "gaussian_entropy",
    "estimate_entropy",
    "estimate_kl",
    "closed_form_kl_gaussian",
    "random_base_distribution",
    "model_to_dict",
    "model_from_dict",
    "save_model",
    "load_model",
    "MODEL_FORMAT_VERSION",
]

logger = logging.getLogger(__name__)

LOG_TWO_PI = float(np.log(2.0 * np.pi))

MODEL_FORMAT_VERSION = 1

# rows per chunk when evaluating large batches; per-row results are
# independent of this value, it only bounds memory
_EVAL_CHUNK = 65536


class DimensionMismatchError(ValueError):
    """Raised when an input's dimension disagrees with a model's."""


def _frozen_vector(name: str, value) -> NDArray[np.float64]:
    arr = np.array(value, dtype=np.float64, copy=True)
    if arr.ndim != 1 or arr.size == 0:
        raise ValueError(f"{name} must be a nonempty 1-D vector")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class GaussianComponent:
    """One diagonal-covariance Gaussian.

    Parameters
    ----------
    mean : (d,) array_like
        Component mean.
    log_var : (d,) array_like
        Natural log of each variance entry. The variance is recovered as
        ``exp(log_var)``, strictly positive for any finite parameterization.
    """

    mean: NDArray[np.float64]
    log_var: NDArray[np.float64]

    def __post_init__(self):
        mean = _frozen_vector("mean", self.mean)
        log_var = _frozen_vector("log_var", self.log_var)
        if mean.shape != log_var.shape:
            raise ValueError("mean and log_var must have the same length")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "log_var", log_var)

    @property
    def dim(self) -> int:
        return int(self.mean.shape[0])

    @property
    def variance(self) -> NDArray[np.float64]:
        return np.exp(self.log_var)


@dataclass(frozen=True)
class MixtureModel:
    """Finite mixture of diagonal-covariance Gaussians.

    Parameters
    ----------
    components : sequence of GaussianComponent
        At least one component; all must share the same dimension.
    log_weights : (M,) array_like
        Log mixture weights. Normalized on construction so that
        ``exp(log_weights)`` sums to one; inputs already normalized within
        1e-12 are kept bit-for-bit (exact persistence round-trips).
    """

    components: tuple[GaussianComponent, ...]
    log_weights: NDArray[np.float64]

    def __post_init__(self):
        comps = tuple(self.components)
        if len(comps) == 0:
            raise ValueError("mixture needs at least one component")
        d = comps[0].dim
        for c in comps:
            if not isinstance(c, GaussianComponent):
                raise TypeError("components must be GaussianComponent instances")
            if c.dim != d:
                raise ValueError("all components must share one dimension")
        lw = np.array(self.log_weights, dtype=np.float64, copy=True)
        if lw.ndim != 1 or lw.shape[0] != len(comps):
            raise ValueError("log_weights length must match the component count")
        if not np.all(np.isfinite(lw)):
            raise ValueError("log_weights must be finite")
        shift = _logsumexp(lw)
        if abs(shift) > 1e-12:
            lw = lw - shift
        lw.setflags(write=False)
        object.__setattr__(self, "components", comps)
        object.__setattr__(self, "log_weights", lw)
        # cached stacked parameter views for batch evaluation
        means = np.stack([c.mean for c in comps])
        log_vars = np.stack([c.log_var for c in comps])
        means.setflags(write=False)
        log_vars.setflags(write=False)
        object.__setattr__(self, "_means", means)
        object.__setattr__(self, "_log_vars", log_vars)

    @property
    def dim(self) -> int:
        return self.components[0].dim

    @property
    def num_components(self) -> int:
        return len(self.components)

    @property
    def weights(self) -> NDArray[np.float64]:
        return np.exp(self.log_weights)

    @property
    def means(self) -> NDArray[np.float64]:
        """(M, d) stacked component means."""
        return self._means

    @property
    def log_vars(self) -> NDArray[np.float64]:
        """(M, d) stacked component log-variances."""
        return self._log_vars

    @classmethod
    def from_parameters(cls, means, log_vars, weights=None, log_weights=None) -> "MixtureModel":
        """Build a mixture from (M, d) parameter arrays.

        Exactly one of ``weights`` / ``log_weights`` may be given; omitting
        both yields uniform weights.
        """
        means = np.atleast_2d(np.asarray(means, dtype=np.float64))
        log_vars = np.atleast_2d(np.asarray(log_vars, dtype=np.float64))
        if means.shape != log_vars.shape:
            raise ValueError("means and log_vars must have the same shape")
        m = means.shape[0]
        if weights is not None and log_weights is not None:
            raise ValueError("pass weights or log_weights, not both")
        if weights is not None:
            w = np.asarray(weights, dtype=np.float64)
            if np.any(w < 0) or not np.all(np.isfinite(w)) or w.sum() <= 0:
                raise ValueError("weights must be finite, nonnegative, not all zero")
            with np.errstate(divide="ignore"):
                lw = np.log(w)
            if np.any(np.isneginf(lw)):
                # zero weights are legal inputs; keep them as large negative logs
                lw = np.where(np.isneginf(lw), -745.0, lw)
        elif log_weights is not None:
            lw = np.asarray(log_weights, dtype=np.float64)
        else:
            lw = np.full(m, -np.log(m))
        comps = tuple(GaussianComponent(means[i], log_vars[i]) for i in range(m))
        return cls(comps, lw)


@dataclass(frozen=True)
class SampleBatch:
    """A batch of points drawn from (or attributed to) one source.

    ``data`` is a (count, d) matrix. Batches produced by :func:`sample`
    always have count >= 1; an empty batch (count 0) is legal only as the
    result of filtering, e.g. rejection sampling with zero survivors.
    """

    data: NDArray[np.float64]
    source_label: str = ""
    seed: int = 0

    def __post_init__(self):
        arr = np.array(self.data, dtype=np.float64, copy=True)
        if arr.ndim == 1:
            arr = arr[None, :]
        if arr.ndim != 2 or arr.shape[1] == 0:
            raise ValueError("data must be a (count, d) matrix with d >= 1")
        if not np.all(np.isfinite(arr)):
            raise ValueError("data entries must be finite")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def count(self) -> int:
        return int(self.data.shape[0])

    @property
    def dim(self) -> int:
        return int(self.data.shape[1])


@dataclass(frozen=True)
class EntropyEstimate:
    """Monte-Carlo differential-entropy estimate, in nats."""

    value: float
    std_error: float
    num_samples: int
    seed: int

    def __post_init__(self):
        if self.std_error < 0:
            raise ValueError("std_error must be nonnegative")
        if self.num_samples < 1:
            raise ValueError("num_samples must be positive")


@dataclass(frozen=True)
class KlEstimate:
    """Monte-Carlo KL-divergence estimate, in nats."""

    value: float
    std_error: float
    num_samples: int
    seed: int

    def __post_init__(self):
        if self.std_error < 0:
            raise ValueError("std_error must be nonnegative")
        if self.num_samples < 1:
            raise ValueError("num_samples must be positive")


def _logsumexp(v: NDArray[np.float64]) -> float:
    m = float(np.max(v))
    return m + float(np.log(np.sum(np.exp(v - m))))


def _as_points(model: MixtureModel, xs) -> NDArray[np.float64]:
    """Coerce xs (SampleBatch, (n, d) matrix, or length-d vector) to (n, d)."""
    if isinstance(xs, SampleBatch):
        pts = xs.data
    else:
        pts = np.asarray(xs, dtype=np.float64)
        if pts.ndim == 1:
            pts = pts[None, :]
    if pts.ndim != 2 or pts.shape[1] != model.dim:
        raise DimensionMismatchError(
            f"expected points of dimension {model.dim}, got shape {pts.shape}"
        )
    return pts


def _component_log_joint(model: MixtureModel, pts: NDArray[np.float64]) -> NDArray[np.float64]:
    """(N, M) matrix of log pi_m + log N(x_i; mu_m, diag(exp(log_var_m))).

    The quadratic form is expanded so each row reduces over the data
    dimension with einsum, whose per-row summation order does not depend
    on the block height; BLAS matmul lacks that guarantee, and chunked
    evaluation must be bitwise identical to unchunked.
    """
    inv_var = np.exp(-model._log_vars)
    log_norm = -0.5 * (model.dim * LOG_TWO_PI + model._log_vars.sum(axis=1))
    const = model.log_weights + log_norm - 0.5 * np.einsum(
        "md,md,md->m", model._means, model._means, inv_var
    )
    pts2 = pts * pts
    out = np.empty((pts.shape[0], model.num_components), dtype=np.float64)
    for j in range(model.num_components):
        cross = np.einsum("nd,d->n", pts, model._means[j] * inv_var[j])
        quad = np.einsum("nd,d->n", pts2, inv_var[j])
        out[:, j] = const[j] + (cross - 0.5 * quad)
    return out


def log_density_batch(model: MixtureModel, xs, chunk_size: int | None = None) -> NDArray[np.float64]:
    """Mixture log-density at each row of ``xs``.

    Parameters
    ----------
    model : MixtureModel
    xs : SampleBatch or (n, d) array_like
    chunk_size : int, optional
        Rows evaluated per pass. Affects only memory use; per-row results
        are bitwise independent of it.

    Returns
    -------
    (n,) array of log densities, finite for finite inputs (max-shifted
    log-sum-exp over components).
    """
    pts = _as_points(model, xs)
    step = int(chunk_size) if chunk_size else _EVAL_CHUNK
    if step < 1:
        raise ValueError("chunk_size must be positive")
    out = np.empty(pts.shape[0], dtype=np.float64)
    for start in range(0, pts.shape[0], step):
        block = pts[start : start + step]
        lj = _component_log_joint(model, block)
        mx = lj.max(axis=1)
        out[start : start + block.shape[0]] = mx + np.log(
            np.exp(lj - mx[:, None]).sum(axis=1)
        )
    return out


def log_density(model: MixtureModel, x) -> float:
    """Mixture log-density at a single point, in nats.

    Computed as ``log sum_m exp(log pi_m + log N(x; mu_m, Sigma_m))`` with a
    max shift, so the result is finite for any finite ``x`` regardless of
    how far it lies from the component means.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != model.dim:
        raise DimensionMismatchError(
            f"expected a length-{model.dim} vector, got shape {x.shape}"
        )
    return float(log_density_batch(model, x[None, :])[0])


def avg_neg_log_density(model: MixtureModel, xs) -> float:
    """Average negative log-density of a length-n sequence, in nats/sample."""
    pts = _as_points(model, xs)
    if pts.shape[0] < 1:
        raise ValueError("sequence must contain at least one point")
    return float(-np.mean(log_density_batch(model, pts)))


def sample(model: MixtureModel, count: int, seed: int) -> SampleBatch:
    """Draw ``count`` ancestral samples from the mixture.

    A categorical draw picks the component for every sample, then a
    Gaussian draw fills the coordinates. Deterministic given the seed.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    rng = make_rng(seed)
    w = model.weights
    assignments = rng.choice(model.num_components, size=count, p=w / w.sum())
    z = rng.standard_normal((count, model.dim))
    sigmas = np.exp(0.5 * model._log_vars)
    data = model._means[assignments] + z * sigmas[assignments]
    return SampleBatch(data=data, source_label="mixture-sample", seed=int(seed))


def gaussian_entropy(component: GaussianComponent) -> float:
    """Closed-form differential entropy of one diagonal Gaussian.

    Returns ``0.5 * sum_i (log(2*pi*e) + log_var_i)`` nats.
    """
    return float(0.5 * np.sum(LOG_TWO_PI + 1.0 + component.log_var))


def estimate_entropy(
    model: MixtureModel,
    num_samples: int = 100_000,
    seed: int = 0,
    chunk_size: int | None = None,
) -> EntropyEstimate:
    """Monte-Carlo estimate of the differential entropy E[-log q(x)].

    Samples are drawn from ``model`` on the stream derived from
    ``(seed, "entropy")``. The standard error is the sample standard
    deviation of the per-point negative log-density divided by
    sqrt(num_samples).
    """
    if num_samples < 100:
        raise ValueError("num_samples must be >= 100")
    batch = sample(model, num_samples, derive_seed(seed, "entropy"))
    nll = -log_density_batch(model, batch.data, chunk_size=chunk_size)
    value = float(np.mean(nll))
    std_error = float(np.std(nll, ddof=1) / np.sqrt(num_samples))
    return EntropyEstimate(value=value, std_error=std_error, num_samples=int(num_samples), seed=int(seed))


def estimate_kl(
    p: MixtureModel,
    q: MixtureModel,
    num_samples: int = 100_000,
    seed: int = 0,
    chunk_size: int | None = None,
) -> KlEstimate:
    """Monte-Carlo estimate of D_KL(p || q), sampling from p.

    The true divergence is nonnegative; an estimate below -3 standard
    errors is logged as suspicious rather than raised, since it can only
    arise from it being noise around zero or an implementation fault.
    """
    if p.dim != q.dim:
        raise DimensionMismatchError(
            f"p has dimension {p.dim} but q has dimension {q.dim}"
        )
    if num_samples < 100:
        raise ValueError("num_samples must be >= 100")
    batch = sample(p, num_samples, derive_seed(seed, "kl"))
    log_ratio = log_density_batch(p, batch.data, chunk_size=chunk_size) - log_density_batch(
        q, batch.data, chunk_size=chunk_size
    )
    value = float(np.mean(log_ratio))
    std_error = float(np.std(log_ratio, ddof=1) / np.sqrt(num_samples))
    if value < -3.0 * std_error:
        logger.warning(
            "KL estimate %.6g is more than 3 standard errors (%.3g) below zero",
            value,
            std_error,
        )
    return KlEstimate(value=value, std_error=std_error, num_samples=int(num_samples), seed=int(seed))


def closed_form_kl_gaussian(a: GaussianComponent, b: GaussianComponent) -> float:
    """Exact KL divergence between two diagonal Gaussians, in nats.

    ``0.5 * sum_i [(var_a_i + (mu_a_i - mu_b_i)^2) / var_b_i - 1
    + log_var_b_i - log_var_a_i]``
    """
    if a.dim != b.dim:
        raise DimensionMismatchError("components must share one dimension")
    var_a = np.exp(a.log_var)
    inv_var_b = np.exp(-b.log_var)
    diff = a.mean - b.mean
    terms = (var_a + diff * diff) * inv_var_b - 1.0 + b.log_var - a.log_var
    return float(0.5 * np.sum(terms))


def random_base_distribution(
    d: int,
    M: int,
    radius: float,
    log_var_low: float,
    log_var_high: float,
    seed: int,
    convention: str = "variance",
) -> MixtureModel:
    """Draw a random uniform-weight mixture.

    Means are uniform in the d-ball of the given radius (unit direction
    times ``radius * U**(1/d)``). Each log-variance entry is ``-u`` with
    ``u ~ Uniform[log_var_low, log_var_high]``; note the sign, so the
    range [1, 3] yields variances in [e^-3, e^-1]. With
    ``convention="stddev"`` the draw is read as ``-log sigma`` instead,
    giving ``log_var = -2 u``.

    Stream order per seed: directions, then radii, then log-variance draws.
    """
    if d < 1 or M < 1:
        raise ValueError("d and M must be >= 1")
    if radius <= 0:
        raise ValueError("radius must be positive")
    if log_var_low > log_var_high:
        raise ValueError("log_var_low must be <= log_var_high")
    if convention not in ("variance", "stddev"):
        raise ValueError("convention must be 'variance' or 'stddev'")
    rng = make_rng(seed)
    g = rng.standard_normal((M, d))
    norms = np.linalg.norm(g, axis=1, keepdims=True)
    directions = g / norms
    radii = radius * rng.random(M) ** (1.0 / d)
    means = directions * radii[:, None]
    u = rng.uniform(log_var_low, log_var_high, size=(M, d))
    log_vars = -u if convention == "variance" else -2.0 * u
    return MixtureModel.from_parameters(means, log_vars)


def model_to_dict(model: MixtureModel) -> dict:
    """Serialize a mixture to the documented JSON structure."""
    return {
        "format_version": MODEL_FORMAT_VERSION,
        "dim": model.dim,
        "num_components": model.num_components,
        "log_weights": [float(v) for v in model.log_weights],
        "components": [
            {
                "mean": [float(v) for v in c.mean],
                "log_var": [float(v) for v in c.log_var],
            }
            for c in model.components
        ],
    }


def model_from_dict(doc: dict) -> MixtureModel:
    """Rebuild a mixture from its JSON structure, checking the version tag."""
    version = doc.get("format_version")
    if version != MODEL_FORMAT_VERSION:
        raise ValueError(f"unsupported model format_version: {version!r}")
    comps = tuple(
        GaussianComponent(np.asarray(c["mean"], dtype=np.float64), np.asarray(c["log_var"], dtype=np.float64))
        for c in doc["components"]
    )
    model = MixtureModel(comps, np.asarray(doc["log_weights"], dtype=np.float64))
    if model.dim != int(doc["dim"]) or model.num_components != int(doc["num_components"]):
        raise ValueError("model document is inconsistent with its declared shape")
    return model


def save_model(model: MixtureModel, path) -> None:
    """Write the mixture as JSON. load(save(m)) reproduces log densities exactly."""
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_dict(model), fh, indent=2)
        fh.write("\n")


def load_model(path) -> MixtureModel:
    """Read a mixture previously written by :func:`save_model`."""
    with open(path, "r", encoding="utf-8") as fh:
        return model_from_dict(json.load(fh))
