import logging
import numpy as np
import torch
from typing import List, NamedTuple, Sequence

from dcc_segmenter.dcc.correlation import contrast_correlation, masked_means
from dcc_segmenter.dcc.losses import LossConfig, dcc_loss, labeled_positive_loss
from dcc_segmenter.models.networks import ContrastiveModel, as_input, build_contrastive_model
from dcc_segmenter.models.optim import adam_step, make_optimizer
from dcc_segmenter.sampler.minibatch import Minibatch, build_minibatch, stack_inputs
from dcc_segmenter.trainer.config import TrainConfig
from dcc_segmenter.trainer.data import PatchStream, PreparedCase, build_pool, filter_phases
from dcc_segmenter.utils.errors import NumericalError, SamplingError

logger = logging.getLogger(__name__)

SMOOTHING_WINDOW = 20


class PretrainResult(NamedTuple):
    model: ContrastiveModel
    loss_curve: List[float]


def smoothed(curve: Sequence[float], window: int = SMOOTHING_WINDOW) -> np.ndarray:
    """Trailing moving average of a loss curve"""
    values = np.asarray(curve, dtype=np.float64)
    if values.size == 0:
        return values
    cumulative = np.concatenate([[0.0], np.cumsum(values)])
    starts = np.maximum(np.arange(1, values.size + 1) - window, 0)
    ends = np.arange(1, values.size + 1)
    return (cumulative[ends] - cumulative[starts]) / (ends - starts)


def contrastive_step(
    model: ContrastiveModel,
    optimizer: torch.optim.Adam,
    batch: Minibatch,
    loss_cfg: LossConfig,
    step: int,
) -> float:
    """Forward all 2n views, evaluate the contrastive loss and apply one Adam update"""
    z = model(as_input(stack_inputs(batch.views)))
    embeddings = z.detach().numpy()
    if loss_cfg.mode == "supcon":
        result = labeled_positive_loss(embeddings, batch.labels(), loss_cfg)
    else:
        v = contrast_correlation(masked_means(batch.views))
        result = dcc_loss(embeddings, v, batch.pairing, loss_cfg, labels=batch.labels())
    if not np.isfinite(result.loss):
        logger.error(f"Non-finite contrastive loss at step {step}")
        raise NumericalError(f"contrastive loss is {result.loss} at step {step}", code="numeric.non_finite_loss")

    optimizer.zero_grad()
    z.backward(torch.from_numpy(result.grad))
    adam_step(optimizer, step)
    return result.loss


def pretrain(
    cases: Sequence[PreparedCase],
    organs: Sequence[int],
    train_cfg: TrainConfig,
    loss_cfg: LossConfig,
) -> PretrainResult:
    """
    Contrastive pretraining of encoder + projection head

    Args:
        cases: Preprocessed cases with coarse masks
        organs: Organ class ids to sample
        train_cfg: Schedule, patch size, phase filter and seed
        loss_cfg: Temperature and loss mode

    Returns:
        The trained model and the per-step loss curve
    """
    torch.set_num_threads(train_cfg.num_threads)
    cases = filter_phases(cases, train_cfg.phases)
    if not cases:
        raise SamplingError(f"no volumes in phases {train_cfg.phases}", code="sampler.empty_pool")

    rng = np.random.default_rng([train_cfg.seed, 0])
    model = build_contrastive_model(train_cfg.seed, train_cfg.projection_dim)
    optimizer = make_optimizer(model.parameters(), train_cfg.pretrain_lr, train_cfg.weight_decay)
    logger.info(
        f"Pretraining ({loss_cfg.mode}, T={loss_cfg.temperature}) on {len(cases)} volumes, "
        f"phases {train_cfg.phases}, {train_cfg.pretrain_epochs} epochs x {train_cfg.steps_per_epoch} steps"
    )

    curve: List[float] = []
    for epoch in range(train_cfg.pretrain_epochs):
        pool = build_pool(cases, organs, train_cfg.patches_per_organ, train_cfg.patch_size, rng)
        stream = PatchStream(pool, rng, repeats=train_cfg.patches_per_key)
        for _ in range(train_cfg.steps_per_epoch):
            batch = build_minibatch(stream.next_batch(train_cfg.batch_patches), rng)
            curve.append(contrastive_step(model, optimizer, batch, loss_cfg, len(curve)))
        logger.info(f"Pretrain epoch {epoch + 1}/{train_cfg.pretrain_epochs}: smoothed loss {smoothed(curve)[-1]:.4f}")
    return PretrainResult(model=model, loss_curve=curve)
