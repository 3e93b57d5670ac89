import numpy as np
from typing import List, Sequence, Tuple
from pydantic import BaseModel, ConfigDict, model_validator

from dcc_segmenter.sampler.augment import AugView, augment
from dcc_segmenter.sampler.patches import Patch
from dcc_segmenter.utils.errors import SamplingError


def pairing_for(size: int) -> List[int]:
    """Partner index of every view when views 2k and 2k+1 come from patch k"""
    return [k + 1 if k % 2 == 0 else k - 1 for k in range(size)]


class Minibatch(BaseModel):
    """2n interleaved views; views 2k and 2k+1 are the two augmentations of patch k"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    views: List[AugView]

    @model_validator(mode="after")
    def _even_views(self):
        if len(self.views) < 4 or len(self.views) % 2:
            raise ValueError(f"a minibatch needs an even number (>= 4) of views, got {len(self.views)}")
        return self

    def __len__(self) -> int:
        return len(self.views)

    @property
    def pairing(self) -> List[int]:
        return pairing_for(len(self.views))

    def negatives(self, k: int) -> List[int]:
        # J(k): every other view, the positive included
        return [j for j in range(len(self.views)) if j != k]

    def labels(self) -> List[Tuple[int, str]]:
        return [(view.organ_class, view.phase) for view in self.views]


def build_minibatch(patches: Sequence[Patch], rng: np.random.Generator) -> Minibatch:
    """Augment each of the n patches twice, independently, and interleave the views"""
    if len(patches) < 2:
        raise SamplingError(f"a minibatch needs at least 2 patches, got {len(patches)}", code="sampler.batch_size")
    views = []
    for patch in patches:
        views.append(augment(patch, rng))
        views.append(augment(patch, rng))
    return Minibatch(views=views)


def to_model_input(view: AugView) -> np.ndarray:
    """2 x P x P network input: channel 0 the image, channel 1 the attention"""
    return np.stack([view.image.astype(np.float64), view.attention.astype(np.float64)])


def stack_inputs(views: Sequence[AugView]) -> np.ndarray:
    return np.stack([to_model_input(view) for view in views])
