import logging
import numpy as np
from typing import Optional, Sequence, Tuple

from dcc_segmenter.phantom.specs import CoarseMask, Volume
from dcc_segmenter.utils.errors import PreprocessError

logger = logging.getLogger(__name__)

# Soft-tissue window in HU
WINDOW_LO = -175.0
WINDOW_HI = 250.0
# Body-part regression range kept as abdomen
ABDOMEN_LO = -4.0
ABDOMEN_HI = 5.0


def _require_stage(volume: Volume, expected: str, operation: str) -> None:
    if volume.stage != expected:
        raise PreprocessError(
            f"{operation} expects a '{expected}' volume but got stage '{volume.stage}' "
            f"(pipeline order is window -> normalize -> crop)",
            code="preprocess.order",
        )


def window_hu(volume: Volume, lo: float = WINDOW_LO, hi: float = WINDOW_HI) -> Volume:
    """Clamp every voxel to the [lo, hi] HU window"""
    if volume.normalized:
        raise PreprocessError("cannot window an already-normalized volume", code="preprocess.order")
    _require_stage(volume, "raw", "window_hu")
    if not lo < hi:
        raise PreprocessError(f"window bounds must satisfy lo < hi, got {lo}, {hi}", code="preprocess.window")
    clipped = np.clip(volume.voxels, np.float32(lo), np.float32(hi))
    return volume.evolve(voxels=clipped, stage="windowed")


def intensity_percentiles(voxels: np.ndarray, low: float = 1.0, high: float = 99.0) -> Tuple[float, float]:
    # linear interpolation between closest ranks
    x_lo, x_hi = np.percentile(np.asarray(voxels, dtype=np.float64), [low, high], method="linear")
    return float(x_lo), float(x_hi)


def percentile_normalize(volume: Volume) -> Volume:
    """
    Min-max normalize with the 1st/99th percentiles, clamped to [0, 1]

    Percentiles are taken over the whole windowed volume, before any cropping.
    """
    _require_stage(volume, "windowed", "percentile_normalize")
    x1, x99 = intensity_percentiles(volume.voxels)
    if not x99 > x1:
        raise PreprocessError(
            f"degenerate intensities: X99 ({x99}) equals X1 ({x1}); exclude constant volumes",
            code="preprocess.degenerate",
        )
    scaled = (volume.voxels.astype(np.float64) - x1) / (x99 - x1)
    normalized = np.clip(scaled, 0.0, 1.0).astype(np.float32)
    return volume.evolve(voxels=normalized, stage="normalized")


def abdomen_slices(slice_scores: Sequence[float], depth: int, lo: float = ABDOMEN_LO, hi: float = ABDOMEN_HI) -> np.ndarray:
    """Indices of the axial slices whose score lies in [lo, hi], inclusive"""
    scores = np.asarray(slice_scores, dtype=np.float64)
    if scores.ndim != 1 or scores.shape[0] != depth:
        raise PreprocessError(
            f"expected {depth} slice scores, got {scores.shape[0] if scores.ndim == 1 else scores.shape}",
            code="preprocess.scores",
        )
    keep = np.flatnonzero((scores >= lo) & (scores <= hi))
    if keep.size == 0:
        raise PreprocessError(f"no slice has a score within [{lo}, {hi}]", code="preprocess.empty_crop")
    return keep


def crop_abdomen(volume: Volume, slice_scores: Sequence[float], lo: float = ABDOMEN_LO, hi: float = ABDOMEN_HI) -> Volume:
    """Keep the axial slices scored as abdomen, in order; labels are cropped identically"""
    _require_stage(volume, "normalized", "crop_abdomen")
    keep = abdomen_slices(slice_scores, volume.dims[2], lo, hi)
    return volume.evolve(
        voxels=np.ascontiguousarray(volume.voxels[:, :, keep]),
        labels=np.ascontiguousarray(volume.labels[:, :, keep]),
        stage="cropped",
    )


def crop_mask(coarse: CoarseMask, slice_scores: Sequence[float], lo: float = ABDOMEN_LO, hi: float = ABDOMEN_HI) -> CoarseMask:
    keep = abdomen_slices(slice_scores, coarse.mask.shape[2], lo, hi)
    return coarse.model_copy(update={"mask": np.ascontiguousarray(coarse.mask[:, :, keep])})


def preprocess_volume(
    volume: Volume,
    slice_scores: Sequence[float],
    coarse: Optional[CoarseMask] = None,
) -> Tuple[Volume, Optional[CoarseMask]]:
    """Run window -> normalize -> crop and crop the coarse mask alongside"""
    cropped = crop_abdomen(percentile_normalize(window_hu(volume)), slice_scores)
    if coarse is not None:
        coarse = crop_mask(coarse, slice_scores)
    logger.debug(f"Preprocessed {volume.phase} volume {volume.dims} -> {cropped.dims}")
    return cropped, coarse
