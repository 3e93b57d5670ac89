import numpy as np
from typing import Sequence

from dcc_segmenter.sampler.augment import AugView
from dcc_segmenter.utils.errors import LossError


def masked_mean_intensity(view: AugView) -> float:
    """
    Mean image intensity under the attention mask, cached on ``view.d``

    d = (1 / phi) * sum(x * s), phi being the number of nonzero attention pixels.
    """
    image = np.asarray(view.image, dtype=np.float64)
    attention = np.asarray(view.attention, dtype=np.float64)
    phi = int(np.count_nonzero(attention))
    if phi == 0:
        raise LossError(
            f"attention of organ {view.organ_class} is empty; masked mean intensity is undefined",
            code="dcc.empty_attention",
        )
    if image.min() < 0.0 or image.max() > 1.0:
        raise LossError("view image must be normalized to [0, 1]", code="dcc.domain")
    d = float(np.sum(image * attention) / phi)
    view.d = d
    return d


def masked_means(views: Sequence[AugView]) -> np.ndarray:
    return np.array([masked_mean_intensity(view) for view in views], dtype=np.float64)


def contrast_correlation(d: Sequence[float]) -> np.ndarray:
    """Pairwise |d_i - d_j| clamped to [0, 1], with an exact zero diagonal"""
    d = np.asarray(d, dtype=np.float64)
    if d.ndim != 1:
        raise LossError(f"expected a vector of mean intensities, got shape {d.shape}", code="dcc.shape")
    if np.any(~np.isfinite(d)) or np.any(d < 0.0) or np.any(d > 1.0):
        raise LossError(
            "mean intensities must lie in [0, 1]; the normalization contract was violated upstream",
            code="dcc.domain",
        )
    v = np.clip(np.abs(d[:, None] - d[None, :]), 0.0, 1.0)
    np.fill_diagonal(v, 0.0)
    return v


def check_correlation_matrix(v: np.ndarray, size: int) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (size, size):
        raise LossError(f"correlation matrix must be {size}x{size}, got {v.shape}", code="dcc.shape")
    if np.any(v < 0.0) or np.any(v > 1.0) or not np.array_equal(v, v.T) or np.any(np.diag(v) != 0.0):
        raise LossError("correlation matrix must be symmetric, zero-diagonal and within [0, 1]", code="dcc.domain")
    return v
