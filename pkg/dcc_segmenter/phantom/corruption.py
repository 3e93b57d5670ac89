import numpy as np
from scipy import ndimage

from dcc_segmenter.phantom.specs import CoarseMask
from dcc_segmenter.utils.errors import PhantomError

# Morphological radius reached at rate -> 1
MAX_RADIUS = 5


def corrupt_labels(labels: np.ndarray, rate: float, seed: int) -> CoarseMask:
    """
    Degrade oracle labels into a coarse mask

    Each organ is eroded or dilated by a random radius up to ``ceil(rate * MAX_RADIUS)`` voxels,
    then ``rate`` of the voxels on its boundary band are flipped. Dilation and flips only claim
    background voxels, so no class ids appear that were absent from the oracle.
    """
    if not 0.0 <= rate < 1.0:
        raise PhantomError(f"corruption rate must lie in [0, 1), got {rate}", code="phantom.rate")
    if rate == 0.0:
        return CoarseMask(mask=np.array(labels, dtype=np.uint8, copy=True), source="oracle")

    rng = np.random.default_rng(seed)
    out = np.array(labels, dtype=np.uint8, copy=True, order="C")
    flat = out.reshape(-1)
    structure = ndimage.generate_binary_structure(3, 1)
    max_radius = int(np.ceil(rate * MAX_RADIUS))

    for class_id in [int(c) for c in np.unique(labels) if c != 0]:
        region = out == class_id
        radius = int(rng.integers(0, max_radius + 1))
        grow = bool(rng.integers(0, 2))
        if radius > 0 and region.any():
            if grow:
                morphed = ndimage.binary_dilation(region, structure, iterations=radius) & ((out == 0) | region)
            else:
                morphed = ndimage.binary_erosion(region, structure, iterations=radius)
            out[region & ~morphed] = 0
            out[morphed & ~region] = class_id

        region = out == class_id
        band = ndimage.binary_dilation(region, structure) ^ ndimage.binary_erosion(region, structure)
        candidates = np.flatnonzero(band & ((out == 0) | region))
        n_flip = int(round(rate * candidates.size))
        if n_flip:
            chosen = rng.choice(candidates, size=n_flip, replace=False)
            inside = flat[chosen] == class_id
            flat[chosen[inside]] = 0
            flat[chosen[~inside]] = class_id

    return CoarseMask(mask=out, source="corrupted", rate=rate)
