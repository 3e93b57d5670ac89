import numpy as np
from typing import Tuple
from pydantic import BaseModel, ConfigDict, model_validator

from dcc_segmenter.phantom.specs import CoarseMask, Volume
from dcc_segmenter.utils.errors import SamplingError

DEFAULT_PATCH_SIZE = 64


class PatchSource(BaseModel):
    volume_id: str = ""
    slice_index: int
    center: Tuple[int, int]


class Patch(BaseModel):
    """Organ-centred axial patch with its ground truth and attention channels"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    image: np.ndarray
    gt: np.ndarray
    attention: np.ndarray
    organ_class: int
    phase: str
    source: PatchSource

    @model_validator(mode="after")
    def _check_channels(self):
        shape = self.image.shape
        if len(shape) != 2 or shape[0] != shape[1]:
            raise ValueError(f"patch image must be P x P, got {shape}")
        if self.gt.shape != shape or self.attention.shape != shape:
            raise ValueError("image, gt and attention must share the same P x P size")
        if not self.attention.any():
            raise ValueError("patch attention must contain at least one nonzero pixel")
        return self

    @property
    def size(self) -> int:
        return int(self.image.shape[0])


def window_start(center: int, size: int, extent: int) -> int:
    """First index of a ``size`` window centred on ``center``, shifted to stay inside ``extent``"""
    return int(min(max(center - size // 2, 0), extent - size))


def extract_window(
    volume: Volume,
    coarse: CoarseMask,
    organ_class: int,
    slice_index: int,
    center: Tuple[int, int],
    patch_size: int,
    volume_id: str = "",
) -> Patch:
    height, width, _ = volume.dims
    if patch_size > height or patch_size > width:
        raise SamplingError(
            f"patch size {patch_size} exceeds slice size {height}x{width}", code="sampler.patch_size"
        )
    x0 = window_start(center[0], patch_size, height)
    y0 = window_start(center[1], patch_size, width)
    rows = slice(x0, x0 + patch_size)
    cols = slice(y0, y0 + patch_size)
    return Patch(
        image=volume.voxels[rows, cols, slice_index].astype(np.float64),
        gt=(volume.labels[rows, cols, slice_index] == organ_class).astype(np.uint8),
        attention=(coarse.mask[rows, cols, slice_index] == organ_class).astype(np.uint8),
        organ_class=organ_class,
        phase=volume.phase,
        source=PatchSource(volume_id=volume_id, slice_index=slice_index, center=(int(center[0]), int(center[1]))),
    )


def sample_patch(
    volume: Volume,
    coarse_mask: CoarseMask,
    organ_class: int,
    patch_size: int,
    rng: np.random.Generator,
    volume_id: str = "",
) -> Patch:
    """
    Sample a P x P axial patch around a uniformly drawn coarse-mask voxel of ``organ_class``

    Args:
        volume: Normalized volume
        coarse_mask: Coarse segmentation with the same dims
        organ_class: Target class id
        patch_size: Window size P
        rng: Source of all randomness
        volume_id: Recorded in the patch source

    Returns:
        Patch whose gt and attention are binarized for ``organ_class`` only
    """
    if not volume.normalized:
        raise SamplingError("patches must be sampled from a normalized volume", code="sampler.not_normalized")
    if coarse_mask.mask.shape != volume.dims:
        raise SamplingError(
            f"coarse mask {coarse_mask.mask.shape} does not match volume {volume.dims}", code="sampler.dims"
        )
    candidates = np.argwhere(coarse_mask.mask == organ_class)
    if candidates.shape[0] == 0:
        raise SamplingError(f"organ {organ_class} is absent from the coarse mask", code="sampler.organ_missing")
    x, y, z = candidates[int(rng.integers(candidates.shape[0]))]
    return extract_window(volume, coarse_mask, organ_class, int(z), (int(x), int(y)), patch_size, volume_id)
