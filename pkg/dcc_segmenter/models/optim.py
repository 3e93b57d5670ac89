import logging
import torch
from typing import Iterable

from dcc_segmenter.utils.errors import NumericalError

logger = logging.getLogger(__name__)

BETAS = (0.9, 0.999)
EPS = 1e-8
WEIGHT_DECAY = 1e-4


def make_optimizer(parameters: Iterable[torch.nn.Parameter], lr: float, weight_decay: float = WEIGHT_DECAY) -> torch.optim.Adam:
    """Adam with bias correction; weight decay is the coupled L2 term added to the gradient"""
    return torch.optim.Adam(parameters, lr=lr, betas=BETAS, eps=EPS, weight_decay=weight_decay)


def adam_step(optimizer: torch.optim.Adam, step: int = -1) -> None:
    """Apply one Adam update, refusing non-finite gradients"""
    for group_idx, group in enumerate(optimizer.param_groups):
        for param_idx, param in enumerate(group["params"]):
            if param.grad is None:
                continue
            if not torch.isfinite(param.grad).all():
                bad = int((~torch.isfinite(param.grad)).sum())
                logger.error(f"Non-finite gradient at step {step}: group {group_idx} tensor {param_idx} {tuple(param.shape)}")
                raise NumericalError(
                    f"gradient of tensor {param_idx} {tuple(param.shape)} in group {group_idx} "
                    f"has {bad} non-finite entries at step {step}",
                    code="numeric.non_finite_gradient",
                )
    optimizer.step()
