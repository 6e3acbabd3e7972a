"""Maximum-likelihood fitting of diagonal Gaussian mixtures.

Two full-batch realizations of the same objective (mean log-likelihood of
the data): plain gradient ascent on unconstrained parameters, and exact
EM with a variance floor. Both record per-epoch train and test negative
log-likelihoods.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass

import numpy as np

from .density import (
    MixtureModel,
    SampleBatch,
    _as_points,
    _component_log_joint,
    random_base_distribution,
)
from .rng import derive_seed, make_rng

__all__ = [
    "InitConfig",
    "TrainConfig",
    "LearningCurve",
    "TrainingDivergedError",
    "fit_mle",
    "em_step",
    "effective_mode_count",
    "VARIANCE_FLOOR",
    "STARVATION_THRESHOLD",
]

logger = logging.getLogger(__name__)

VARIANCE_FLOOR = 1e-6
STARVATION_THRESHOLD = 1e-10


class TrainingDivergedError(RuntimeError):
    """Raised when the training loss stops being finite.

    Attributes:
        epoch: Index of the epoch at which the non-finite loss appeared.
    """

    def __init__(self, epoch: int, message: str | None = None):
        self.epoch = int(epoch)
        super().__init__(message or f"training diverged at epoch {epoch}")


@dataclass(frozen=True)
class InitConfig:
    """Random-initialization scheme for the component parameters.

    Means are drawn uniformly in a ball and log-variances from a negated
    uniform range, exactly as the ground-truth generator does it.

    Attributes:
        radius: Ball radius for the means.
        log_var_low: Lower end of the negated-uniform log-variance draw.
        log_var_high: Upper end of the same draw.
        convention: "variance" or "stddev" reading of the draw.
    """

    radius: float = 3.0
    log_var_low: float = 1.0
    log_var_high: float = 3.0
    convention: str = "variance"


@dataclass(frozen=True)
class TrainConfig:
    """Optimization settings.

    Attributes:
        method: "gradient" (full-batch ascent, unconstrained parameters)
            or "em" (exact E/M steps with a variance floor).
        epochs: Number of full passes.
        batch_size: Evaluation chunk size for memory control only; both
            methods stay full-batch algorithms. None means one chunk.
        learning_rate: Step size for the gradient method.
        seed: Master seed; substreams are derived for the initialization,
            the train/test split, and starved-component restarts.
        test_fraction: Held-out fraction for the learning curve.
    """

    method: str = "gradient"
    epochs: int = 200
    batch_size: int | None = None
    learning_rate: float = 0.05
    seed: int = 0
    test_fraction: float = 0.2

    def __post_init__(self):
        if self.method not in ("gradient", "em"):
            raise ValueError("method must be 'gradient' or 'em'")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size is not None and self.batch_size < 1:
            raise ValueError("batch_size must be positive when given")
        if self.method == "gradient" and not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive for the gradient method")
        if not 0.0 < self.test_fraction < 1.0:
            raise ValueError("test_fraction must lie in (0, 1)")


@dataclass(frozen=True)
class LearningCurve:
    """Per-epoch train/test negative log-likelihoods in nats per sample.

    Entry 0 is the initial model before any update; entry e is the model
    after epoch e.
    """

    train_nll: tuple[float, ...]
    test_nll: tuple[float, ...]

    def __post_init__(self):
        if len(self.train_nll) != len(self.test_nll):
            raise ValueError("train and test curves must have equal length")
        if len(self.train_nll) == 0:
            raise ValueError("curve must not be empty")

    @property
    def epochs(self) -> int:
        return len(self.train_nll) - 1

    def to_csv(self, path) -> None:
        """Write the curve as CSV with header epoch,train_nll,test_nll."""
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["epoch", "train_nll", "test_nll"])
            for e, (tr, te) in enumerate(zip(self.train_nll, self.test_nll)):
                writer.writerow([e, repr(float(tr)), repr(float(te))])


def _mean_nll(model: MixtureModel, x: np.ndarray, chunk: int | None) -> float:
    from .density import log_density_batch

    return float(-np.mean(log_density_batch(model, x, chunk_size=chunk)))


def _responsibilities(model: MixtureModel, x: np.ndarray) -> tuple[np.ndarray, float]:
    """Posterior component responsibilities and the mean log-likelihood.

    Returns:
        (N, M) responsibility matrix and the scalar mean log-likelihood.
    """
    lj = _component_log_joint(model, x)
    mx = lj.max(axis=1, keepdims=True)
    log_norm = mx[:, 0] + np.log(np.exp(lj - mx).sum(axis=1))
    resp = np.exp(lj - log_norm[:, None])
    return resp, float(np.mean(log_norm))


def em_step(
    model: MixtureModel,
    data,
    restart_seed: int = 0,
    variance_floor: float = VARIANCE_FLOOR,
) -> MixtureModel:
    """One exact EM update of weights, means, and diagonal variances.

    Responsibilities are computed in log space. The train NLL never
    increases (up to 1e-9) unless a starved component had to be restarted.
    A component whose total responsibility falls below 1e-10 is
    reinitialized at a random data point (stream ``(restart_seed,
    "em-restart")``) with the data's per-coordinate variance; the event is
    logged.

    Args:
        model: Current mixture.
        data: SampleBatch or (N, d) array.
        restart_seed: Seed for the starved-component restart draw.
        variance_floor: Lower clamp applied to every updated variance.

    Returns:
        The updated MixtureModel.
    """
    x = _as_points(model, data)
    if x.shape[0] < 1:
        raise ValueError("data must be nonempty")
    resp, _ = _responsibilities(model, x)
    return _em_update(x, x * x, resp, restart_seed, variance_floor)


def _em_update(
    x: np.ndarray,
    x_sq: np.ndarray,
    resp: np.ndarray,
    restart_seed: int,
    variance_floor: float,
) -> MixtureModel:
    """M-step from precomputed responsibilities (``x_sq`` is ``x*x``)."""
    n = x.shape[0]
    counts = resp.sum(axis=0)
    starved = counts < STARVATION_THRESHOLD
    safe_counts = np.where(starved, 1.0, counts)

    # weighted first and second moments in two matrix products; the
    # variance comes from E[x^2] - mean^2, clamped at the floor
    rx = resp.T @ x
    rx2 = resp.T @ x_sq
    new_means = rx / safe_counts[:, None]
    new_vars = np.maximum(
        rx2 / safe_counts[:, None] - new_means * new_means, variance_floor
    )

    if np.any(starved):
        rng = make_rng(derive_seed(restart_seed, "em-restart"))
        data_var = np.maximum(x.var(axis=0), variance_floor)
        for j in np.flatnonzero(starved):
            pick = int(rng.integers(0, n))
            new_means[j] = x[pick]
            new_vars[j] = data_var
            logger.warning(
                "component %d starved (responsibility %.3g); restarted at data point %d",
                j,
                counts[j],
                pick,
            )

    weights = safe_counts / safe_counts.sum()
    return MixtureModel.from_parameters(new_means, np.log(new_vars), weights=weights)


def _gradient_update(
    logits: np.ndarray,
    means: np.ndarray,
    log_vars: np.ndarray,
    weights: np.ndarray,
    resp: np.ndarray,
    x: np.ndarray,
    x_sq: np.ndarray,
    learning_rate: float,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """One full-batch ascent step from precomputed responsibilities.

    Weights are realized through a max-shifted exponential normalization of
    the logits, so every parameter is unconstrained. The responsibility-
    weighted moments collapse into two matrix products (``x_sq`` is
    ``x*x``).
    """
    n = x.shape[0]
    counts = resp.sum(axis=0)
    grad_logits = counts / n - weights

    inv_var = np.exp(-log_vars)
    rx = resp.T @ x
    rx2 = resp.T @ x_sq
    grad_means = (rx - counts[:, None] * means) * inv_var / n
    second_moment = rx2 - 2.0 * means * rx + counts[:, None] * (means * means)
    grad_log_vars = 0.5 * (second_moment * inv_var - counts[:, None]) / n

    return (
        logits + learning_rate * grad_logits,
        means + learning_rate * grad_means,
        log_vars + learning_rate * grad_log_vars,
    )


def _gradient_step(
    logits: np.ndarray,
    means: np.ndarray,
    log_vars: np.ndarray,
    x: np.ndarray,
    learning_rate: float,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, float]:
    """One standalone ascent step; returns the pre-step mean log-likelihood."""
    model = MixtureModel.from_parameters(means, log_vars, log_weights=logits - logits.max())
    resp, mean_ll = _responsibilities(model, x)
    new_logits, new_means, new_log_vars = _gradient_update(
        logits, means, log_vars, model.weights, resp, x, x * x, learning_rate
    )
    return new_logits, new_means, new_log_vars, mean_ll


def fit_mle(
    data,
    M: int,
    init_config: InitConfig,
    train_config: TrainConfig,
) -> tuple[MixtureModel, LearningCurve]:
    """Fit an M-component mixture to data by maximum likelihood.

    The initial model is drawn by the same random scheme as the
    ground-truth generator (stream ``(seed, "init")``); the train/test
    split permutation uses ``(seed, "split")``.

    Args:
        data: SampleBatch or (N, d) array.
        M: Number of mixture components to fit.
        init_config: Random-initialization scheme.
        train_config: Optimization settings.

    Returns:
        (model, curve) where curve holds per-epoch train/test NLL with the
        initial model at entry 0.

    Raises:
        TrainingDivergedError: If the loss stops being finite; carries the
            epoch index.
    """
    if isinstance(data, SampleBatch):
        x = data.data
    else:
        x = np.asarray(data, dtype=np.float64)
        if x.ndim == 1:
            x = x[None, :]
    if x.ndim != 2 or x.shape[0] < 1:
        raise ValueError("data must be a nonempty (N, d) matrix")
    n, d = x.shape
    if n < 2:
        raise ValueError("need at least 2 samples for a train/test split")

    n_test = int(round(n * train_config.test_fraction))
    n_test = min(max(n_test, 1), n - 1)
    if n - n_test < 1:
        raise ValueError("test_fraction leaves no training data")
    perm = make_rng(derive_seed(train_config.seed, "split")).permutation(n)
    x_test = x[perm[:n_test]]
    x_train = x[perm[n_test:]]

    model = random_base_distribution(
        d,
        M,
        init_config.radius,
        init_config.log_var_low,
        init_config.log_var_high,
        seed=derive_seed(train_config.seed, "init"),
        convention=init_config.convention,
    )

    # one responsibility pass per epoch doubles as the train-NLL
    # evaluation of the model that produced it
    chunk = train_config.batch_size
    x_train_sq = x_train * x_train
    resp, mean_ll = _responsibilities(model, x_train)
    train_curve = [-mean_ll]
    test_curve = [_mean_nll(model, x_test, chunk)]

    if train_config.method == "em":
        for epoch in range(1, train_config.epochs + 1):
            model = _em_update(
                x_train,
                x_train_sq,
                resp,
                derive_seed(train_config.seed, "restart", epoch),
                VARIANCE_FLOOR,
            )
            resp, mean_ll = _responsibilities(model, x_train)
            tr = -mean_ll
            te = _mean_nll(model, x_test, chunk)
            if not (np.isfinite(tr) and np.isfinite(te)):
                raise TrainingDivergedError(epoch)
            train_curve.append(tr)
            test_curve.append(te)
    else:
        logits = np.array(model.log_weights, dtype=np.float64, copy=True)
        means = np.array(model.means, dtype=np.float64, copy=True)
        log_vars = np.array(model.log_vars, dtype=np.float64, copy=True)
        for epoch in range(1, train_config.epochs + 1):
            logits, means, log_vars = _gradient_update(
                logits,
                means,
                log_vars,
                model.weights,
                resp,
                x_train,
                x_train_sq,
                train_config.learning_rate,
            )
            if not (
                np.all(np.isfinite(logits))
                and np.all(np.isfinite(means))
                and np.all(np.isfinite(log_vars))
            ):
                raise TrainingDivergedError(epoch)
            model = MixtureModel.from_parameters(
                means, log_vars, log_weights=logits - logits.max()
            )
            resp, mean_ll = _responsibilities(model, x_train)
            tr = -mean_ll
            te = _mean_nll(model, x_test, chunk)
            if not (np.isfinite(tr) and np.isfinite(te)):
                raise TrainingDivergedError(epoch)
            train_curve.append(tr)
            test_curve.append(te)

    return model, LearningCurve(tuple(train_curve), tuple(test_curve))


def effective_mode_count(model: MixtureModel, weight_threshold: float) -> int:
    """Number of components whose weight strictly exceeds the threshold."""
    if not 0.0 <= weight_threshold < 1.0:
        raise ValueError("weight_threshold must lie in [0, 1)")
    return int(np.sum(model.weights > weight_threshold))
