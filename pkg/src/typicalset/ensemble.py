"""Ensembles of independently trained mixtures: the multi-typical set,
intersection cross-tables, rejection sampling into the joint typical
region, and the min-typicality density it approximates.

A sequence is multi-typical when it is typical for every member at once,
equivalently when the max per-member typicality score stays below epsilon.
"""

from __future__ import annotations

import csv
import dataclasses
import logging
from dataclasses import dataclass

import numpy as np

from .density import (
    EntropyEstimate,
    MixtureModel,
    SampleBatch,
    _as_points,
    estimate_entropy,
    log_density_batch,
    sample,
)
from .grids import GridResolutionError, midpoint_grid, model_box
from .rng import derive_seed
from .training import InitConfig, LearningCurve, TrainConfig, TrainingDivergedError, fit_mle
from .typicality import TypicalityConfig, calibrate_epsilon, sequence_scores

__all__ = [
    "Ensemble",
    "MemberFailure",
    "MultiTestOutcome",
    "IntersectionMatrix",
    "RejectionReport",
    "MtildeReport",
    "train_ensemble",
    "multi_typicality_score",
    "is_multi_typical",
    "intersection_matrix",
    "rejection_sample_multi_typical",
    "min_typicality_log_density",
    "check_mtilde_normalization",
]

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class MemberFailure:
    """Record of one ensemble member whose training did not finish."""

    index: int
    epoch: int | None
    message: str


@dataclass(frozen=True)
class Ensemble:
    """K trained mixtures with per-member entropy estimates and calibrated
    typicality configs sharing one sequence length n."""

    models: tuple[MixtureModel, ...]
    entropies: tuple[EntropyEstimate, ...]
    configs: tuple[TypicalityConfig, ...]
    curves: tuple[LearningCurve, ...] = ()
    failures: tuple[MemberFailure, ...] = ()

    def __post_init__(self):
        models = tuple(self.models)
        entropies = tuple(self.entropies)
        configs = tuple(self.configs)
        curves = tuple(self.curves)
        failures = tuple(self.failures)
        if len(models) < 1:
            raise ValueError("ensemble needs at least one member")
        if not (len(models) == len(entropies) == len(configs)):
            raise ValueError("models, entropies, and configs must align")
        if curves and len(curves) != len(models):
            raise ValueError("curves, when present, must align with models")
        d = models[0].dim
        for m in models:
            if m.dim != d:
                raise ValueError("all members must share one dimension")
        n = configs[0].n
        for c in configs:
            if c.n != n:
                raise ValueError("all member configs must share one n")
        object.__setattr__(self, "models", models)
        object.__setattr__(self, "entropies", entropies)
        object.__setattr__(self, "configs", configs)
        object.__setattr__(self, "curves", curves)
        object.__setattr__(self, "failures", failures)

    @property
    def size(self) -> int:
        return len(self.models)

    @property
    def dim(self) -> int:
        return self.models[0].dim

    @property
    def n(self) -> int:
        return self.configs[0].n

    @property
    def is_partial(self) -> bool:
        return len(self.failures) > 0


@dataclass(frozen=True)
class MultiTestOutcome:
    """Result of one ensemble membership test.

    With a shared epsilon, accepted <=> score < epsilon. With per-member
    calibrated radii (epsilon None), accepted <=> every member score is
    strictly below that member's own epsilon.
    """

    score: float
    accepted: bool
    epsilon: float | None
    n: int
    member_scores: tuple[float, ...]


@dataclass(frozen=True)
class IntersectionMatrix:
    """Cross-table of typical-set acceptance percentages.

    entries[i, j] is the percentage of samples drawn from distribution j
    that land in the calibrated typical set of distribution i; index 0 is
    the ground truth on both axes.
    """

    row_labels: tuple[str, ...]
    col_labels: tuple[str, ...]
    entries: np.ndarray
    samples_per_cell: int

    def __post_init__(self):
        entries = np.array(self.entries, dtype=np.float64, copy=True)
        if entries.shape != (len(self.row_labels), len(self.col_labels)):
            raise ValueError("entries shape must match the label counts")
        if np.any(entries < 0) or np.any(entries > 100):
            raise ValueError("entries must be percentages in [0, 100]")
        if self.samples_per_cell < 1:
            raise ValueError("samples_per_cell must be positive")
        entries.setflags(write=False)
        object.__setattr__(self, "entries", entries)
        object.__setattr__(self, "row_labels", tuple(self.row_labels))
        object.__setattr__(self, "col_labels", tuple(self.col_labels))

    def to_csv(self, path) -> None:
        """Rows are typical sets, columns are sampling distributions;
        percentages to one decimal."""
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["typical_set", *self.col_labels])
            for label, row in zip(self.row_labels, self.entries):
                writer.writerow([label, *[f"{v:.1f}" for v in row]])


@dataclass(frozen=True)
class RejectionReport:
    """Outcome counts for rejection sampling into the multi-typical set."""

    total_generated: int
    survivors: int
    survivor_fraction: float
    survivor_gt_typical_fraction: float | None
    gt_multi_typical_fraction: float | None

    def __post_init__(self):
        if self.survivors > self.total_generated:
            raise ValueError("survivors cannot exceed total_generated")
        for name in ("survivor_fraction", "survivor_gt_typical_fraction", "gt_multi_typical_fraction"):
            v = getattr(self, name)
            if v is not None and not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass(frozen=True)
class MtildeReport:
    """Grid-quadrature summary of the min-typicality density.

    log_z is the log of its normalizing constant; expected_nll is
    E[-log m] under the normalized density. The two agree exactly for a
    single-member ensemble and only approximately otherwise.
    """

    log_z: float
    expected_nll: float
    points_per_dim: int


def train_ensemble(
    data,
    K: int,
    M: int,
    init_config: InitConfig,
    train_config: TrainConfig,
    seed: int,
    n: int = 1,
    target_coverage: float = 0.95,
    calibration_sequences: int = 20_000,
    entropy_samples: int = 100_000,
) -> Ensemble:
    """Fit K independent mixtures and calibrate each one's typical set.

    Member k trains with seed ``(seed, "member", k)``, estimates its
    entropy with ``(seed, "entropy", k)``, and calibrates epsilon at the
    target coverage with ``(seed, "calibrate", k)``. A member whose
    training diverges is dropped and recorded; the ensemble is then
    partial.
    """
    if K < 1:
        raise ValueError("K must be >= 1")
    models: list[MixtureModel] = []
    entropies: list[EntropyEstimate] = []
    configs: list[TypicalityConfig] = []
    curves: list[LearningCurve] = []
    failures: list[MemberFailure] = []
    for k in range(K):
        member_cfg = dataclasses.replace(train_config, seed=derive_seed(seed, "member", k))
        try:
            model, curve = fit_mle(data, M, init_config, member_cfg)
        except TrainingDivergedError as exc:
            logger.warning("ensemble member %d failed: %s", k, exc)
            failures.append(MemberFailure(index=k, epoch=exc.epoch, message=str(exc)))
            continue
        h = estimate_entropy(model, entropy_samples, derive_seed(seed, "entropy", k))
        eps = calibrate_epsilon(
            model,
            h.value,
            n,
            target_coverage,
            calibration_sequences,
            derive_seed(seed, "calibrate", k),
        )
        models.append(model)
        entropies.append(h)
        configs.append(TypicalityConfig(epsilon=eps, n=n, entropy=h.value))
        curves.append(curve)
    if not models:
        raise TrainingDivergedError(
            failures[-1].epoch if failures[-1].epoch is not None else 0,
            "every ensemble member diverged",
        )
    return Ensemble(
        models=tuple(models),
        entropies=tuple(entropies),
        configs=tuple(configs),
        curves=tuple(curves),
        failures=tuple(failures),
    )


def _member_scores(ensemble: Ensemble, xs) -> np.ndarray:
    """(K,) per-member typicality scores of one length-n sequence."""
    pts = _as_points(ensemble.models[0], xs)
    if pts.shape[0] < 1:
        raise ValueError("sequence must contain at least one point")
    scores = np.empty(ensemble.size, dtype=np.float64)
    for k, (model, h) in enumerate(zip(ensemble.models, ensemble.entropies)):
        nll = -float(np.mean(log_density_batch(model, pts)))
        scores[k] = abs(nll - h.value)
    return scores


def _member_scores_batch(ensemble: Ensemble, sequences: np.ndarray) -> np.ndarray:
    """(K, S) typicality scores for a stack of sequences (S, n, d)."""
    out = np.empty((ensemble.size, sequences.shape[0]), dtype=np.float64)
    for k, (model, h) in enumerate(zip(ensemble.models, ensemble.entropies)):
        out[k] = sequence_scores(model, h.value, sequences)
    return out


def multi_typicality_score(ensemble: Ensemble, xs) -> float:
    """Max over members of the per-member typicality score, in nats."""
    return float(_member_scores(ensemble, xs).max())


def is_multi_typical(ensemble: Ensemble, xs, epsilon: float | None = None) -> MultiTestOutcome:
    """Strict ensemble membership test.

    With ``epsilon`` given, the shared-radius test: accepted iff the max
    member score is strictly below it. With ``epsilon=None`` (default),
    the per-member calibrated variant used by the experiment pipeline:
    accepted iff every member score is strictly below that member's own
    calibrated epsilon.
    """
    pts = _as_points(ensemble.models[0], xs)
    if pts.shape[0] != ensemble.n:
        raise ValueError(f"expected a length-{ensemble.n} sequence, got {pts.shape[0]}")
    scores = _member_scores(ensemble, pts)
    if epsilon is None:
        eps_vec = np.array([c.epsilon for c in ensemble.configs])
        accepted = bool(np.all(scores < eps_vec))
    else:
        if not epsilon > 0:
            raise ValueError("epsilon must be positive")
        accepted = bool(scores.max() < epsilon)
    return MultiTestOutcome(
        score=float(scores.max()),
        accepted=accepted,
        epsilon=epsilon,
        n=ensemble.n,
        member_scores=tuple(float(s) for s in scores),
    )


def _gt_entries(
    ground_truth: MixtureModel,
    n: int,
    seed: int,
    gt_entropy: EntropyEstimate | None,
    gt_config: TypicalityConfig | None,
    target_coverage: float,
    calibration_sequences: int,
    entropy_samples: int,
) -> tuple[EntropyEstimate, TypicalityConfig]:
    """Entropy and calibrated config for the ground truth, computed on
    derived streams unless supplied."""
    if gt_entropy is None:
        gt_entropy = estimate_entropy(ground_truth, entropy_samples, derive_seed(seed, "gt-entropy"))
    if gt_config is None:
        eps = calibrate_epsilon(
            ground_truth,
            gt_entropy.value,
            n,
            target_coverage,
            calibration_sequences,
            derive_seed(seed, "gt-calibrate"),
        )
        gt_config = TypicalityConfig(epsilon=eps, n=n, entropy=gt_entropy.value)
    if gt_config.n != n:
        raise ValueError("ground-truth config n must match the ensemble's n")
    return gt_entropy, gt_config


def intersection_matrix(
    ground_truth: MixtureModel,
    ensemble: Ensemble,
    samples_per_cell: int = 1000,
    seed: int = 0,
    gt_entropy: EntropyEstimate | None = None,
    gt_config: TypicalityConfig | None = None,
    target_coverage: float = 0.95,
    calibration_sequences: int = 20_000,
    entropy_samples: int = 100_000,
) -> IntersectionMatrix:
    """(K+1) x (K+1) cross-table of typical-set acceptance percentages.

    Column j draws ``samples_per_cell`` fresh length-n sequences from
    distribution j (stream ``(seed, "column", j)``); entry (i, j) is the
    percentage of them strictly inside distribution i's calibrated
    typical set. Index 0 is the ground truth.
    """
    if samples_per_cell < 100:
        raise ValueError("samples_per_cell must be >= 100")
    if ground_truth.dim != ensemble.dim:
        raise ValueError("ground truth and ensemble must share one dimension")
    n = ensemble.n
    gt_entropy, gt_config = _gt_entries(
        ground_truth,
        n,
        seed,
        gt_entropy,
        gt_config,
        target_coverage,
        calibration_sequences,
        entropy_samples,
    )
    models = [ground_truth, *ensemble.models]
    entropies = [gt_entropy.value, *[h.value for h in ensemble.entropies]]
    epsilons = [gt_config.epsilon, *[c.epsilon for c in ensemble.configs]]
    labels = ["ground_truth", *[f"model_{k + 1}" for k in range(ensemble.size)]]

    k1 = len(models)
    entries = np.empty((k1, k1), dtype=np.float64)
    for j in range(k1):
        batch = sample(models[j], samples_per_cell * n, derive_seed(seed, "column", j))
        seqs = batch.data.reshape(samples_per_cell, n, ground_truth.dim)
        for i in range(k1):
            scores = sequence_scores(models[i], entropies[i], seqs)
            entries[i, j] = 100.0 * float(np.mean(scores < epsilons[i]))
    return IntersectionMatrix(
        row_labels=tuple(labels),
        col_labels=tuple(labels),
        entries=entries,
        samples_per_cell=int(samples_per_cell),
    )


def rejection_sample_multi_typical(
    ensemble: Ensemble,
    per_model_count: int,
    seed: int = 0,
    ground_truth: MixtureModel | None = None,
    gt_entropy: EntropyEstimate | None = None,
    gt_config: TypicalityConfig | None = None,
    gt_sample_count: int | None = None,
    target_coverage: float = 0.95,
    calibration_sequences: int = 20_000,
    entropy_samples: int = 100_000,
) -> tuple[SampleBatch, RejectionReport]:
    """Pool per-member proposals and keep those typical for every member.

    Member k proposes ``per_model_count`` samples on stream ``(seed,
    "propose", k)``. A pooled sample survives when each member's
    typicality score is strictly below that member's calibrated epsilon.
    When a ground-truth model is supplied, the report adds the fraction of
    survivors inside the ground-truth typical set and the fraction of
    fresh ground-truth samples (stream ``(seed, "gt")``) accepted by the
    ensemble. Zero survivors yield an empty batch and a valid report.

    Only n = 1 configs are supported: the filter acts on single samples.
    """
    if per_model_count < 1:
        raise ValueError("per_model_count must be >= 1")
    if ensemble.n != 1:
        raise ValueError("rejection sampling filters single samples; ensemble n must be 1")

    pooled = np.concatenate(
        [
            sample(model, per_model_count, derive_seed(seed, "propose", k)).data
            for k, model in enumerate(ensemble.models)
        ],
        axis=0,
    )
    total = pooled.shape[0]
    seqs = pooled.reshape(total, 1, ensemble.dim)
    scores = _member_scores_batch(ensemble, seqs)
    eps_vec = np.array([c.epsilon for c in ensemble.configs])
    survivor_mask = np.all(scores < eps_vec[:, None], axis=0)
    survivors = pooled[survivor_mask]

    survivor_gt_frac: float | None = None
    gt_multi_frac: float | None = None
    if ground_truth is not None:
        gt_entropy, gt_config = _gt_entries(
            ground_truth,
            1,
            seed,
            gt_entropy,
            gt_config,
            target_coverage,
            calibration_sequences,
            entropy_samples,
        )
        if survivors.shape[0] > 0:
            gt_scores = sequence_scores(
                ground_truth, gt_entropy.value, survivors[:, None, :]
            )
            survivor_gt_frac = float(np.mean(gt_scores < gt_config.epsilon))
        count = int(gt_sample_count) if gt_sample_count else per_model_count
        gt_batch = sample(ground_truth, count, derive_seed(seed, "gt"))
        gt_seqs = gt_batch.data[:, None, :]
        gt_member_scores = _member_scores_batch(ensemble, gt_seqs)
        gt_multi_frac = float(np.mean(np.all(gt_member_scores < eps_vec[:, None], axis=0)))

    report = RejectionReport(
        total_generated=int(total),
        survivors=int(survivors.shape[0]),
        survivor_fraction=float(survivors.shape[0] / total),
        survivor_gt_typical_fraction=survivor_gt_frac,
        gt_multi_typical_fraction=gt_multi_frac,
    )
    batch = SampleBatch(data=survivors, source_label="multi-typical-survivors", seed=int(seed))
    return batch, report


def min_typicality_log_density_batch(ensemble: Ensemble, xs) -> np.ndarray:
    """Per-point min-typicality log-density (unnormalized), vectorized."""
    pts = _as_points(ensemble.models[0], xs)
    shifted = np.empty((ensemble.size, pts.shape[0]), dtype=np.float64)
    for k, (model, h) in enumerate(zip(ensemble.models, ensemble.entropies)):
        shifted[k] = log_density_batch(model, pts) + h.value
    picks = np.argmax(np.abs(shifted), axis=0)
    return shifted[picks, np.arange(pts.shape[0])]


def min_typicality_log_density(ensemble: Ensemble, x) -> float:
    """Entropy-shifted log-density of the member under which the point is
    least typical, in nats (unnormalized).

    Returns ``log q_k(x) + h_k`` for the member k whose shifted magnitude
    ``|log q_i(x) + h_i|`` is largest, ties resolved to the lowest index.
    Taking the least-typical member makes the magnitude of the result the
    max member typicality score, so ``|value| < epsilon`` holds exactly
    when the point is multi-typical at n = 1 with shared radius epsilon.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != ensemble.dim:
        raise ValueError(f"expected a length-{ensemble.dim} vector")
    return float(min_typicality_log_density_batch(ensemble, x[None, :])[0])


def _mtilde_quadrature(ensemble: Ensemble, lo, hi, points_per_dim: int) -> tuple[float, float]:
    pts, cell = midpoint_grid(lo, hi, points_per_dim)
    log_mt = min_typicality_log_density_batch(ensemble, pts)
    mt = np.exp(log_mt)
    z = float(mt.sum() * cell)
    if not z > 0:
        raise GridResolutionError("grid captured no mass of the min-typicality density")
    log_z = float(np.log(z))
    # E_m[-log m] with m = mtilde / Z; integrand is 0 where mtilde underflows
    integrand = np.where(mt > 0.0, mt * (log_z - log_mt), 0.0)
    expected_nll = float(integrand.sum() * cell / z)
    return log_z, expected_nll


def check_mtilde_normalization(
    ensemble: Ensemble,
    points_per_dim: int = 2048,
    padding_sigmas: float = 10.0,
    lo=None,
    hi=None,
) -> MtildeReport:
    """Grid quadrature of the min-typicality density (d <= 2).

    Computes the normalizer Z and E[-log m] under the normalized density
    on a midpoint grid, then refines the grid once; a normalizer shift
    above 1% raises GridResolutionError. Both values are reported so the
    approximate-equality claim between them can be inspected; no threshold
    is asserted.
    """
    if ensemble.dim > 2:
        raise ValueError("grid quadrature supports d <= 2 only")
    if lo is None or hi is None:
        box_lo, box_hi = model_box(ensemble.models, padding_sigmas)
        lo = box_lo if lo is None else np.asarray(lo, dtype=np.float64)
        hi = box_hi if hi is None else np.asarray(hi, dtype=np.float64)
    log_z_coarse, _ = _mtilde_quadrature(ensemble, lo, hi, points_per_dim)
    log_z, expected_nll = _mtilde_quadrature(ensemble, lo, hi, 2 * points_per_dim)
    if abs(log_z - log_z_coarse) > np.log(1.01):
        raise GridResolutionError(
            f"normalizer moved {abs(log_z - log_z_coarse):.4f} nats on refinement; grid too coarse"
        )
    return MtildeReport(log_z=log_z, expected_nll=expected_nll, points_per_dim=2 * points_per_dim)
