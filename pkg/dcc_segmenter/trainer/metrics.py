import logging
import numpy as np
from typing import Any, Dict, List, Sequence
from pydantic import BaseModel, Field, field_validator

from dcc_segmenter.models.networks import SegmentationModel
from dcc_segmenter.trainer.data import PreparedCase
from dcc_segmenter.trainer.inference import fuse_volume, predict_volume

logger = logging.getLogger(__name__)


def dice_score(pred: np.ndarray, gt: np.ndarray, class_id: int) -> float:
    """2|P ∩ G| / (|P| + |G|) for one class; 1.0 when the class is absent from both"""
    if pred.shape != gt.shape:
        raise ValueError(f"prediction {pred.shape} and ground truth {gt.shape} differ in shape")
    p = pred == class_id
    g = gt == class_id
    total = int(p.sum()) + int(g.sum())
    if total == 0:
        return 1.0
    return 2.0 * int(np.logical_and(p, g).sum()) / total


class MetricsReport(BaseModel):
    """Everything one seeded run produces; organ keys are class ids as strings"""
    seed: int
    config: Dict[str, Any] = Field(default_factory=dict)
    pretrain_loss: List[float] = Field(default_factory=list)
    finetune_loss: List[float] = Field(default_factory=list)
    per_organ_dice: Dict[str, float] = Field(default_factory=dict)
    per_phase_dice: Dict[str, float] = Field(default_factory=dict)
    mean_dice: float = Field(default=0.0, ge=0.0, le=1.0)
    silhouette: Dict[str, float] = Field(default_factory=dict)
    warnings: List[str] = Field(default_factory=list)

    @field_validator("per_organ_dice", "per_phase_dice")
    @classmethod
    def _dice_in_unit_interval(cls, value):
        for key, dice in value.items():
            if not 0.0 <= dice <= 1.0:
                raise ValueError(f"Dice for {key} is {dice}, outside [0, 1]")
        return value


class Evaluation(BaseModel):
    per_organ_dice: Dict[str, float]
    per_phase_dice: Dict[str, float]
    mean_dice: float
    warnings: List[str]


def evaluate(
    model: SegmentationModel,
    cases: Sequence[PreparedCase],
    organs: Sequence[int],
    patch_size: int,
) -> Evaluation:
    """
    Predict, fuse and score every case

    Per-organ Dice is averaged over cases, per-phase Dice over the organs and cases of that
    phase, and the mean Dice over organs.
    """
    by_organ: Dict[int, List[float]] = {organ: [] for organ in organs}
    by_phase: Dict[str, List[float]] = {}
    warnings: List[str] = []
    for case in cases:
        prediction = predict_volume(model, case.volume, case.coarse, organs, patch_size)
        warnings.extend(f"{case.name}: {message}" for message in prediction.warnings)
        fused = fuse_volume(prediction)
        for organ in organs:
            score = dice_score(fused, case.volume.labels, organ)
            by_organ[organ].append(score)
            by_phase.setdefault(case.phase, []).append(score)

    per_organ = {str(organ): float(np.mean(scores)) for organ, scores in by_organ.items() if scores}
    per_phase = {phase: float(np.mean(scores)) for phase, scores in sorted(by_phase.items())}
    mean_dice = float(np.mean(list(per_organ.values()))) if per_organ else 0.0
    logger.info(f"Evaluated {len(cases)} volumes: mean Dice {mean_dice:.4f}")
    return Evaluation(per_organ_dice=per_organ, per_phase_dice=per_phase, mean_dice=mean_dice, warnings=warnings)
