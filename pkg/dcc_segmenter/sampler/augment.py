import logging
import numpy as np
from typing import Optional, Tuple
from pydantic import BaseModel, ConfigDict, Field
from scipy import ndimage

from dcc_segmenter.sampler.patches import Patch, PatchSource
from dcc_segmenter.utils.errors import SamplingError

logger = logging.getLogger(__name__)

CROP_RANGE = (0.7, 1.0)
ANGLE_RANGE = (-30.0, 30.0)
WIDTH_SCALE_RANGE = (0.3, 1.0)
HEIGHT_SCALE_RANGE = (0.7, 1.0)
MAX_REDRAWS = 8


class AugParams(BaseModel):
    """One draw of the geometric augmentation"""
    crop_fraction: float = Field(default=1.0, gt=0.0, le=1.0)
    crop_offset: Tuple[float, float] = (0.0, 0.0)
    angle_deg: float = 0.0
    scale_height: float = Field(default=1.0, gt=0.0)
    scale_width: float = Field(default=1.0, gt=0.0)


class AugView(BaseModel):
    """Augmented view of a patch; ``d`` caches its masked mean intensity"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    image: np.ndarray
    attention: np.ndarray
    gt: np.ndarray
    organ_class: int
    phase: str
    source: PatchSource
    d: Optional[float] = None

    @property
    def phi(self) -> int:
        return int(np.count_nonzero(self.attention))


def draw_params(rng: np.random.Generator) -> AugParams:
    return AugParams(
        crop_fraction=float(rng.uniform(*CROP_RANGE)),
        crop_offset=(float(rng.uniform()), float(rng.uniform())),
        angle_deg=float(rng.uniform(*ANGLE_RANGE)),
        scale_width=float(rng.uniform(*WIDTH_SCALE_RANGE)),
        scale_height=float(rng.uniform(*HEIGHT_SCALE_RANGE)),
    )


def _about(center: float, linear: np.ndarray) -> np.ndarray:
    # homogeneous map x -> c + L (x - c)
    out = np.eye(3)
    out[:2, :2] = linear
    out[:2, 2] = center - linear @ np.array([center, center])
    return out


def inverse_transform(params: AugParams, size: int) -> np.ndarray:
    """
    Homogeneous output -> input coordinate map of crop-resize, then rotation, then scaling

    Coordinates are (row, col). A positive angle rotates the row axis toward the column axis:
    (r, c) -> (cos a * r - sin a * c, sin a * r + cos a * c) about the patch centre.
    """
    center = (size - 1) / 2.0
    fraction = params.crop_fraction
    window = fraction * size
    undo_crop = np.array(
        [
            [fraction, 0.0, params.crop_offset[0] * (size - window)],
            [0.0, fraction, params.crop_offset[1] * (size - window)],
            [0.0, 0.0, 1.0],
        ]
    )
    theta = np.deg2rad(params.angle_deg)
    cos, sin = np.cos(theta), np.sin(theta)
    undo_rotation = _about(center, np.array([[cos, sin], [-sin, cos]]))
    undo_scaling = _about(center, np.diag([1.0 / params.scale_height, 1.0 / params.scale_width]))
    return undo_crop @ undo_rotation @ undo_scaling


def apply_augmentation(patch: Patch, params: AugParams) -> AugView:
    """Resample image bilinearly and masks nearest-neighbour under ``params``"""
    size = patch.size
    mapping = inverse_transform(params, size)
    matrix, offset = mapping[:2, :2], mapping[:2, 2]

    def warp(grid: np.ndarray, order: int) -> np.ndarray:
        return ndimage.affine_transform(
            grid, matrix, offset=offset, output_shape=(size, size), order=order, mode="constant", cval=0.0
        )

    image = np.clip(warp(patch.image.astype(np.float64), 1), 0.0, 1.0)
    attention = (warp(patch.attention.astype(np.float64), 0) > 0.5).astype(np.uint8)
    gt = (warp(patch.gt.astype(np.float64), 0) > 0.5).astype(np.uint8)
    return AugView(
        image=image,
        attention=attention,
        gt=gt,
        organ_class=patch.organ_class,
        phase=patch.phase,
        source=patch.source,
    )


def augment(patch: Patch, rng: np.random.Generator) -> AugView:
    """Apply the random augmentation, redrawing if the attention channel empties"""
    for attempt in range(MAX_REDRAWS + 1):
        view = apply_augmentation(patch, draw_params(rng))
        if view.phi > 0:
            return view
        logger.debug(f"Augmentation emptied the attention of organ {patch.organ_class}, redraw {attempt + 1}")
    raise SamplingError(
        f"attention of organ {patch.organ_class} stayed empty after {MAX_REDRAWS} redraws",
        code="sampler.degenerate_augmentation",
    )
