"""Low-dimensional quadrature grids shared by the normalization check and
the volume-ratio estimator."""

from __future__ import annotations

import numpy as np

from .density import MixtureModel

__all__ = ["GridResolutionError", "model_box", "midpoint_grid"]


class GridResolutionError(RuntimeError):
    """Raised when a quadrature grid is too coarse to trust."""


def model_box(models, padding_sigmas: float = 10.0) -> tuple[np.ndarray, np.ndarray]:
    """Axis-aligned box covering every component of every model.

    Per dimension: [min mean - padding * sigma_max, max mean + padding *
    sigma_max], with sigma_max the largest component standard deviation
    across all models.
    """
    models = list(models)
    if not models:
        raise ValueError("need at least one model")
    d = models[0].dim
    for m in models:
        if m.dim != d:
            raise ValueError("all models must share one dimension")
    all_means = np.concatenate([m.means for m in models], axis=0)
    sigma_max = max(float(np.exp(0.5 * m.log_vars).max()) for m in models)
    lo = all_means.min(axis=0) - padding_sigmas * sigma_max
    hi = all_means.max(axis=0) + padding_sigmas * sigma_max
    return lo, hi


def midpoint_grid(lo, hi, points_per_dim: int) -> tuple[np.ndarray, float]:
    """Midpoint-rule grid over a 1-D or 2-D box.

    Returns (points, cell_volume) with points of shape (P**d, d).
    """
    lo = np.atleast_1d(np.asarray(lo, dtype=np.float64))
    hi = np.atleast_1d(np.asarray(hi, dtype=np.float64))
    d = lo.shape[0]
    if d not in (1, 2):
        raise ValueError("grid quadrature supports d <= 2 only")
    if points_per_dim < 2:
        raise ValueError("points_per_dim must be >= 2")
    axes = []
    widths = []
    for i in range(d):
        step = (hi[i] - lo[i]) / points_per_dim
        if step <= 0:
            raise ValueError("box must have positive extent per dimension")
        axes.append(lo[i] + (np.arange(points_per_dim) + 0.5) * step)
        widths.append(step)
    if d == 1:
        pts = axes[0][:, None]
    else:
        gx, gy = np.meshgrid(axes[0], axes[1], indexing="ij")
        pts = np.column_stack([gx.ravel(), gy.ravel()])
    return pts, float(np.prod(widths))
