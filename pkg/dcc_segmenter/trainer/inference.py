import logging
import numpy as np
import torch
from typing import Dict, List, Mapping, Optional, Sequence
from pydantic import BaseModel, ConfigDict, ValidationError

from dcc_segmenter.models.networks import SegmentationModel, seg_forward
from dcc_segmenter.phantom.specs import CoarseMask, Volume
from dcc_segmenter.sampler.minibatch import to_model_input
from dcc_segmenter.sampler.patches import Patch, extract_window, window_start
from dcc_segmenter.utils.errors import ModelError

logger = logging.getLogger(__name__)

THRESHOLD = 0.5


class VolumePrediction(BaseModel):
    """Per-organ probability and binary maps in volume coordinates, zero outside the patch windows"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    dims: tuple
    probs: Dict[int, np.ndarray] = {}
    masks: Dict[int, np.ndarray] = {}
    warnings: List[str] = []

    @property
    def organs(self) -> List[int]:
        return sorted(self.masks)


def organ_centroid(mask_slice: np.ndarray) -> tuple:
    rows, cols = np.nonzero(mask_slice)
    return int(np.rint(rows.mean())), int(np.rint(cols.mean()))


def predict_volume(
    model: SegmentationModel,
    volume: Volume,
    coarse_mask: CoarseMask,
    organs: Sequence[int],
    patch_size: int,
) -> VolumePrediction:
    """
    Segment every organ slice by slice inside windows centred on the coarse-mask centroid

    Args:
        model: Fine-tuned segmentation model
        volume: Preprocessed volume
        coarse_mask: Coarse segmentation with the volume's dims
        organs: Organ class ids to predict
        patch_size: Window size P used in training

    Returns:
        VolumePrediction with one entry per organ found in the coarse mask
    """
    if coarse_mask.mask.shape != volume.dims:
        raise ModelError(f"coarse mask {coarse_mask.mask.shape} does not match volume {volume.dims}", code="model.shape")
    prediction = VolumePrediction(dims=volume.dims, probs={}, masks={}, warnings=[])
    model.eval()
    for organ in organs:
        organ_voxels = coarse_mask.mask == organ
        slices = np.nonzero(organ_voxels.any(axis=(0, 1)))[0]
        if slices.size == 0:
            message = f"organ {organ} is absent from the coarse mask of this volume"
            logger.warning(message)
            prediction.warnings.append(message)
            continue

        patches: List[Patch] = []
        for z in slices:
            center = organ_centroid(organ_voxels[:, :, z])
            try:
                patches.append(extract_window(volume, coarse_mask, organ, int(z), center, patch_size))
            except ValidationError:
                message = f"organ {organ} slice {z}: centroid window misses the organ, slice skipped"
                logger.warning(message)
                prediction.warnings.append(message)
        if not patches:
            continue

        with torch.no_grad():
            maps = seg_forward(model, np.stack([to_model_input(patch) for patch in patches])).numpy()
        probs = np.zeros(volume.dims, dtype=np.float64)
        height, width, _ = volume.dims
        for patch, prob in zip(patches, maps):
            x0 = window_start(patch.source.center[0], patch_size, height)
            y0 = window_start(patch.source.center[1], patch_size, width)
            probs[x0 : x0 + patch_size, y0 : y0 + patch_size, patch.source.slice_index] = prob
        prediction.probs[organ] = probs
        prediction.masks[organ] = (probs > THRESHOLD).astype(np.uint8)
    return prediction


def fuse_majority(
    binary_maps: Mapping[int, np.ndarray],
    probs: Optional[Mapping[int, np.ndarray]] = None,
    shape: Optional[tuple] = None,
) -> np.ndarray:
    """
    Fuse per-organ binary maps into one label map

    A pixel claimed by several organs goes to the highest probability, then the lowest class id.
    Without ``probs`` every claim counts equally.
    """
    classes = sorted(binary_maps)
    if not classes:
        if shape is None:
            raise ModelError("fuse_majority needs a shape when no organ maps are given", code="model.shape")
        return np.zeros(shape, dtype=np.uint8)
    reference = binary_maps[classes[0]].shape
    for organ in classes:
        if binary_maps[organ].shape != reference:
            raise ModelError(f"organ {organ} map {binary_maps[organ].shape} differs from {reference}", code="model.shape")

    scores = np.stack(
        [
            np.where(binary_maps[organ] > 0, 1.0 if probs is None else probs[organ], -np.inf)
            for organ in classes
        ]
    )
    claimed = np.isfinite(scores).any(axis=0)
    # argmax returns the first maximum, i.e. the lowest class id on ties
    winner = np.asarray(classes, dtype=np.uint8)[np.argmax(scores, axis=0)]
    return np.where(claimed, winner, 0).astype(np.uint8)


def fuse_volume(prediction: VolumePrediction) -> np.ndarray:
    """Fuse slice by slice and stack the fused slices into a volumetric label map"""
    depth = prediction.dims[2]
    fused = [
        fuse_majority(
            {organ: mask[:, :, z] for organ, mask in prediction.masks.items()},
            {organ: prob[:, :, z] for organ, prob in prediction.probs.items()},
            shape=tuple(prediction.dims[:2]),
        )
        for z in range(depth)
    ]
    return np.stack(fused, axis=2)
