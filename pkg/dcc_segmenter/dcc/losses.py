import numpy as np
from typing import Hashable, Literal, NamedTuple, Optional, Sequence
from pydantic import BaseModel, ConfigDict, Field
from scipy.special import logsumexp, softmax

from dcc_segmenter.dcc.correlation import check_correlation_matrix
from dcc_segmenter.utils.errors import LossError

UNIT_NORM_TOL = 1e-6

LossMode = Literal["dcc", "plain", "hard_label", "supcon"]


class LossConfig(BaseModel):
    """Contrastive loss settings"""
    model_config = ConfigDict(extra="forbid")

    temperature: float = Field(default=0.07, gt=0.0)
    mode: LossMode = "dcc"


class LossResult(NamedTuple):
    loss: float
    grad: np.ndarray
    logits: np.ndarray


def _check_embeddings(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    if z.ndim != 2 or z.shape[0] < 2:
        raise LossError(f"embeddings must be a (2n, D) matrix, got shape {z.shape}", code="dcc.shape")
    norms = np.linalg.norm(z, axis=1)
    if np.any(np.abs(norms - 1.0) > UNIT_NORM_TOL):
        raise LossError("embeddings must have unit L2 norm", code="dcc.not_unit_norm")
    return z


def _check_temperature(cfg: LossConfig) -> float:
    if not cfg.temperature > 0.0:
        raise LossError(f"temperature must be positive, got {cfg.temperature}", code="dcc.temperature")
    return float(cfg.temperature)


def _check_pairing(pairing: Sequence[int], size: int) -> np.ndarray:
    p = np.asarray(pairing, dtype=np.int64)
    idx = np.arange(size)
    if p.shape != (size,) or np.any(p < 0) or np.any(p >= size) or np.any(p == idx) or np.any(p[p] != idx):
        raise LossError("pairing must be a fixed-point-free involution over the batch", code="dcc.pairing")
    return p


def _same_label(labels: Sequence[Hashable], size: int) -> np.ndarray:
    if labels is None or len(labels) != size:
        raise LossError(f"expected {size} view labels", code="dcc.labels")
    keys = list(labels)
    same = np.array([[keys[i] == keys[j] for j in range(size)] for i in range(size)], dtype=bool)
    np.fill_diagonal(same, False)
    return same


def effective_correlation(v: np.ndarray, mode: str, labels: Optional[Sequence[Hashable]] = None) -> np.ndarray:
    """Correlation actually used as (1 - v) weights for a loss mode"""
    if mode == "dcc":
        return v
    if mode == "plain":
        return np.zeros_like(v)
    if mode == "hard_label":
        # same (organ, phase) pairs keep full weight, the rest keep their dcc weight
        return np.where(_same_label(labels, v.shape[0]), 0.0, v)
    raise LossError(f"loss mode '{mode}' is not a pairwise-weighted contrastive loss", code="dcc.mode")


def positive_mask(pairing: np.ndarray, mode: str, labels: Optional[Sequence[Hashable]] = None) -> np.ndarray:
    """Positives of every anchor: its partner view, plus every same-label view under hard_label"""
    size = pairing.shape[0]
    positives = np.zeros((size, size), dtype=bool)
    positives[np.arange(size), pairing] = True
    if mode == "hard_label":
        positives |= _same_label(labels, size)
    return positives


def _masked_logits(logits: np.ndarray) -> np.ndarray:
    masked = logits.copy()
    np.fill_diagonal(masked, -np.inf)
    return masked


def dcc_loss(
    z: np.ndarray,
    v: np.ndarray,
    pairing: Sequence[int],
    cfg: LossConfig,
    labels: Optional[Sequence[Hashable]] = None,
) -> LossResult:
    """
    Contrast-correlation weighted contrastive loss and its analytic gradient

    Logits are l[k, j] = z_k . z_j * (1 - v[k, j]) / T over j != k, and
    loss = -sum_k (l[k, p(k)] - logsumexp_j l[k, j]). Under hard_label the
    positive term is averaged over every view sharing the anchor's label.

    Args:
        z: (2n, D) unit-norm embeddings
        v: (2n, 2n) contrast correlation matrix
        pairing: p(k), the positive partner of every view
        cfg: Temperature and mode (dcc, plain or hard_label)
        labels: (organ, phase) per view, needed by hard_label

    Returns:
        LossResult with the scalar loss, d loss / d z and the logits
    """
    z = _check_embeddings(z)
    size = z.shape[0]
    temperature = _check_temperature(cfg)
    v = check_correlation_matrix(v, size)
    p = _check_pairing(pairing, size)

    weight = (1.0 - effective_correlation(v, cfg.mode, labels)) / temperature
    logits = (z @ z.T) * weight
    masked = _masked_logits(logits)
    idx = np.arange(size)
    lse = logsumexp(masked, axis=1)
    coeff = softmax(masked, axis=1)

    if cfg.mode == "hard_label":
        positives = positive_mask(p, cfg.mode, labels)
        share = positives / positives.sum(axis=1, keepdims=True)
        loss = -float(np.sum(np.sum(np.where(positives, logits, 0.0) * share, axis=1) - lse))
        coeff -= share
    else:
        loss = -float(np.sum(logits[idx, p] - lse))
        # d loss / d l[k, j] = softmax[k, j] - [j == p(k)]
        coeff[idx, p] -= 1.0
    a = coeff * weight
    np.fill_diagonal(a, 0.0)
    grad = (a + a.T) @ z
    return LossResult(loss=loss, grad=grad, logits=logits)


def labeled_positive_loss(z: np.ndarray, labels: Sequence[Hashable], cfg: LossConfig) -> LossResult:
    """
    Supervised contrastive loss with every same-label view as a positive

    Anchors without any positive are skipped. The loss sums, over anchors, the
    negative log-softmax averaged over that anchor's positives.
    """
    z = _check_embeddings(z)
    size = z.shape[0]
    temperature = _check_temperature(cfg)
    same = _same_label(labels, size)
    counts = same.sum(axis=1)
    active = counts > 0
    if not active.any():
        raise LossError("no view shares its label with another view; loss is empty", code="dcc.empty_loss")

    logits = (z @ z.T) / temperature
    masked = _masked_logits(logits)
    log_prob = masked - logsumexp(masked, axis=1)[:, None]
    safe_counts = np.where(active, counts, 1)
    per_anchor = np.where(same, log_prob, 0.0).sum(axis=1) / safe_counts
    loss = -float(np.sum(per_anchor[active]))

    coeff = softmax(masked, axis=1) - same / safe_counts[:, None]
    coeff[~active] = 0.0
    np.fill_diagonal(coeff, 0.0)
    a = coeff / temperature
    grad = (a + a.T) @ z
    return LossResult(loss=loss, grad=grad, logits=logits)
