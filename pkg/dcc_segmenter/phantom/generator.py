import logging
import numpy as np
from typing import Dict, List, Sequence, Set, Tuple

from dcc_segmenter.phantom.specs import CoarseMask, DatasetSpec, Ellipsoid, Volume
from dcc_segmenter.utils.errors import PhantomError

logger = logging.getLogger(__name__)


def split_seed(seed: int, index: int) -> int:
    """Seed for the index-th volume of a dataset: ``seed XOR index``"""
    return int(seed) ^ int(index)


def ellipsoid_mask(shape: Ellipsoid, dims: Sequence[int], shift: Sequence[float] = (0.0, 0.0, 0.0)) -> np.ndarray:
    """Boolean grid of the voxels whose centres fall inside the ellipsoid"""
    axes = []
    for size, center, semi, offset in zip(dims, shape.center, shape.semi_axes, shift):
        coords = (np.arange(size, dtype=np.float64) + 0.5) / size
        axes.append(((coords - (center + offset)) / semi) ** 2)
    return (axes[0][:, None, None] + axes[1][None, :, None] + axes[2][None, None, :]) <= 1.0


def volume_plan(spec: DatasetSpec) -> List[Tuple[int, str, int]]:
    """(volume index, phase, patient index) for every volume, phase-major"""
    plan = []
    for phase_idx, phase in enumerate(spec.phases):
        for patient in range(spec.volumes_per_phase):
            plan.append((phase_idx * spec.volumes_per_phase + patient, phase, patient))
    return plan


def patient_shifts(spec: DatasetSpec, seed: int, patient: int) -> Dict[int, np.ndarray]:
    # Anatomy is shared by every phase of one patient
    if spec.jitter == 0.0:
        return {organ.class_id: np.zeros(3) for organ in spec.organs}
    rng = np.random.default_rng([int(seed), int(patient)])
    return {
        organ.class_id: rng.uniform(-spec.jitter, spec.jitter, size=3)
        for organ in sorted(spec.organs, key=lambda o: o.class_id)
    }


def render_volume(spec: DatasetSpec, phase: str, shifts: Dict[int, np.ndarray], rng: np.random.Generator) -> Volume:
    dims = spec.dims
    voxels = np.full(dims, spec.background_hu, dtype=np.float64)
    labels = np.zeros(dims, dtype=np.uint8)

    if spec.body is not None:
        voxels[~ellipsoid_mask(spec.body, dims)] = spec.air_hu

    for structure in spec.structures:
        inside = ellipsoid_mask(structure.shape, dims)
        voxels[inside] = structure.hu
        if structure.texture_sd > 0:
            voxels[inside] += rng.normal(0.0, structure.texture_sd, size=int(inside.sum()))

    overlaps: Set[Tuple[int, int]] = set()
    for organ in sorted(spec.organs, key=lambda o: o.class_id):
        inside = ellipsoid_mask(organ.shape, dims, shifts[organ.class_id])
        for other in np.unique(labels[inside]):
            if other != 0:
                overlaps.add((int(other), organ.class_id))
        labels[inside] = organ.class_id
        voxels[inside] = organ.intensity_by_phase[phase]
        if organ.texture_sd > 0:
            voxels[inside] += rng.normal(0.0, organ.texture_sd, size=int(inside.sum()))

    if overlaps:
        pairs = ", ".join(f"{a}/{b}" for a, b in sorted(overlaps))
        raise PhantomError(f"organ ellipsoids overlap: class_ids {pairs}", code="phantom.overlap")

    return Volume(voxels=voxels.astype(np.float32), labels=labels, spacing_mm=spec.spacing_mm, phase=phase)


def generate_phantom(spec: DatasetSpec, seed: int) -> List[Tuple[Volume, CoarseMask]]:
    """
    Generate every (phase, volume index) of a synthetic cohort

    Args:
        spec: Dataset description
        seed: Non-negative base seed; volume i draws its noise from ``seed XOR i``

    Returns:
        List of (Volume, oracle CoarseMask) in phase-major order
    """
    if seed < 0:
        raise PhantomError("seed must be non-negative", code="phantom.seed")

    shifts = {patient: patient_shifts(spec, seed, patient) for patient in range(spec.volumes_per_phase)}
    cohort = []
    for index, phase, patient in volume_plan(spec):
        rng = np.random.default_rng(split_seed(seed, index))
        volume = render_volume(spec, phase, shifts[patient], rng)
        cohort.append((volume, CoarseMask(mask=volume.labels.copy(), source="oracle")))
    logger.info(f"Generated {len(cohort)} phantom volumes of dims {spec.dims} for phases {spec.phases}")
    return cohort


def body_part_scores(spec: DatasetSpec) -> np.ndarray:
    """Stand-in body-part regression: one score per axial slice, linear over ``score_range``"""
    lo, hi = spec.score_range
    return np.linspace(lo, hi, spec.dims[2], dtype=np.float64)
