import logging
import numpy as np
import torch
from typing import Dict, List, NamedTuple, Optional, Sequence

from dcc_segmenter.models.checkpoint import restore
from dcc_segmenter.models.dice import batch_dice_loss
from dcc_segmenter.models.networks import SegmentationModel, as_input, build_segmentation_model
from dcc_segmenter.models.optim import adam_step, make_optimizer
from dcc_segmenter.sampler.augment import AugParams, AugView, apply_augmentation, augment
from dcc_segmenter.sampler.minibatch import stack_inputs
from dcc_segmenter.sampler.patches import Patch
from dcc_segmenter.trainer.config import TrainConfig
from dcc_segmenter.trainer.data import PatchStream, PreparedCase, build_pool, filter_phases
from dcc_segmenter.utils.errors import NumericalError, SamplingError

logger = logging.getLogger(__name__)


class FinetuneResult(NamedTuple):
    model: SegmentationModel
    loss_curve: List[float]
    epoch_losses: List[float]


def _view(patch: Patch, rng: np.random.Generator, augmented: bool) -> AugView:
    if augmented:
        return augment(patch, rng)
    return apply_augmentation(patch, AugParams())


def segmentation_step(
    model: SegmentationModel,
    optimizer: torch.optim.Adam,
    views: Sequence[AugView],
    step: int,
) -> float:
    prob = model(as_input(stack_inputs(views)))
    result = batch_dice_loss(prob.detach().numpy(), np.stack([view.gt for view in views]))
    if not np.isfinite(result.loss):
        logger.error(f"Non-finite Dice loss at step {step}")
        raise NumericalError(f"Dice loss is {result.loss} at step {step}", code="numeric.non_finite_loss")
    optimizer.zero_grad()
    prob.backward(torch.from_numpy(result.grad))
    adam_step(optimizer, step)
    return result.loss


def finetune(
    cases: Sequence[PreparedCase],
    organs: Sequence[int],
    train_cfg: TrainConfig,
    encoder_tensors: Optional[Dict[str, np.ndarray]] = None,
) -> FinetuneResult:
    """
    Train one shared binary segmentation head over all organs with the Dice loss

    The projection head of a pretrained checkpoint is discarded; only ``encoder.*`` tensors
    are restored. Without ``encoder_tensors`` the encoder starts from random weights.
    """
    torch.set_num_threads(train_cfg.num_threads)
    cases = filter_phases(cases, train_cfg.phases)
    if not cases:
        raise SamplingError(f"no volumes in phases {train_cfg.phases}", code="sampler.empty_pool")

    rng = np.random.default_rng([train_cfg.seed, 1])
    model = build_segmentation_model(train_cfg.seed)
    if encoder_tensors is not None:
        restore(model.encoder, encoder_tensors, prefix="encoder.")
        logger.info("Fine-tuning from a pretrained encoder")
    else:
        logger.info("Fine-tuning from scratch")
    optimizer = make_optimizer(model.parameters(), train_cfg.finetune_lr, train_cfg.weight_decay)

    curve: List[float] = []
    epoch_losses: List[float] = []
    for epoch in range(train_cfg.finetune_epochs):
        stream = PatchStream(build_pool(cases, organs, train_cfg.patches_per_organ, train_cfg.patch_size, rng), rng)
        start = len(curve)
        for _ in range(train_cfg.steps_per_epoch):
            views = [_view(patch, rng, train_cfg.finetune_augment) for patch in stream.next_batch(train_cfg.batch_patches)]
            curve.append(segmentation_step(model, optimizer, views, len(curve)))
        epoch_losses.append(float(np.mean(curve[start:])))
        logger.info(f"Finetune epoch {epoch + 1}/{train_cfg.finetune_epochs}: mean Dice loss {epoch_losses[-1]:.4f}")
    return FinetuneResult(model=model, loss_curve=curve, epoch_losses=epoch_losses)
