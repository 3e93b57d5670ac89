import numpy as np
from typing import NamedTuple

from dcc_segmenter.utils.errors import ModelError

SMOOTH = 1e-6


class DiceResult(NamedTuple):
    loss: float
    grad: np.ndarray


def dice_loss(pred: np.ndarray, gt: np.ndarray, smooth: float = SMOOTH) -> DiceResult:
    """
    Soft Dice loss 1 - (2 sum(p g) + s) / (sum(p) + sum(g) + s) with its gradient wrt ``pred``
    """
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise ModelError(f"prediction {pred.shape} and ground truth {gt.shape} differ in shape", code="model.shape")
    numerator = 2.0 * np.sum(pred * gt) + smooth
    denominator = np.sum(pred) + np.sum(gt) + smooth
    loss = 1.0 - numerator / denominator
    grad = -(2.0 * gt) / denominator + numerator / denominator**2
    return DiceResult(loss=float(loss), grad=grad)


def batch_dice_loss(preds: np.ndarray, gts: np.ndarray) -> DiceResult:
    """Mean Dice loss over a batch of (P, P) maps and its gradient"""
    preds = np.asarray(preds, dtype=np.float64)
    results = [dice_loss(pred, gt) for pred, gt in zip(preds, gts)]
    count = len(results)
    loss = float(np.sum([r.loss for r in results]) / count)
    grad = np.stack([r.grad for r in results]) / count
    return DiceResult(loss=loss, grad=grad)
