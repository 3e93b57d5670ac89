import logging
import numpy as np
from pathlib import Path
from typing import List, Union
from pydantic import BaseModel, ConfigDict, ValidationError

from dcc_segmenter.phantom.corruption import corrupt_labels
from dcc_segmenter.phantom.generator import body_part_scores, generate_phantom, split_seed, volume_plan
from dcc_segmenter.phantom.specs import CoarseMask, DatasetSpec, Volume
from dcc_segmenter.phantom.volume_io import read_labels, read_scores, read_volume, write_labels, write_scores, write_volume
from dcc_segmenter.utils.errors import VolumeFormatError
from dcc_segmenter.utils.io_utils import read_json, write_json

logger = logging.getLogger(__name__)

INDEX_FILE = "dataset.json"
# Keeps the corruption stream apart from the noise stream of the same volume
CORRUPTION_SALT = 0x5EED


class VolumeEntry(BaseModel):
    name: str
    phase: str
    index: int
    patient: int


class DatasetIndex(BaseModel):
    """Contents of ``dataset.json``"""
    model_config = ConfigDict(extra="forbid")

    spec: DatasetSpec
    seed: int
    entries: List[VolumeEntry]


class Case(BaseModel):
    """One volume of a cohort with its coarse mask and slice scores"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    name: str
    patient: int
    volume: Volume
    coarse: CoarseMask
    scores: np.ndarray


def build_cases(spec: DatasetSpec, seed: int) -> List[Case]:
    """Generate a cohort in memory, corrupting each oracle mask at ``spec.corruption_rate``"""
    scores = body_part_scores(spec)
    cases = []
    for (volume, oracle), (index, phase, patient) in zip(generate_phantom(spec, seed), volume_plan(spec)):
        coarse = corrupt_labels(oracle.mask, spec.corruption_rate, split_seed(seed, index) ^ CORRUPTION_SALT)
        cases.append(
            Case(name=f"{phase.lower()}_{patient:03d}", patient=patient, volume=volume, coarse=coarse, scores=scores.copy())
        )
    return cases


def write_dataset(spec: DatasetSpec, seed: int, out_dir: Union[str, Path]) -> DatasetIndex:
    """
    Generate a cohort and write it under ``out_dir``

    Args:
        spec: Dataset description
        seed: Base seed
        out_dir: Target directory, created if missing

    Returns:
        The index written to ``dataset.json``
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    for case, (index, phase, patient) in zip(build_cases(spec, seed), volume_plan(spec)):
        write_volume(case.volume, out_dir / case.name)
        write_labels(out_dir / f"{case.name}.coarse.lab", case.coarse.mask)
        write_scores(out_dir / f"{case.name}.scores.json", case.scores)
        entries.append(VolumeEntry(name=case.name, phase=phase, index=index, patient=patient))
    index = DatasetIndex(spec=spec, seed=seed, entries=entries)
    write_json(out_dir / INDEX_FILE, index)
    logger.info(f"Wrote {len(entries)} volumes to {out_dir}")
    return index


def read_index(dataset_dir: Union[str, Path]) -> DatasetIndex:
    path = Path(dataset_dir) / INDEX_FILE
    if not path.exists():
        raise VolumeFormatError(f"no {INDEX_FILE} in {dataset_dir}", code="dataset.missing")
    try:
        return DatasetIndex.model_validate(read_json(path))
    except (ValueError, ValidationError) as e:
        raise VolumeFormatError(f"malformed dataset index {path}: {e}", code="dataset.index") from e


def load_dataset(dataset_dir: Union[str, Path]) -> List[Case]:
    """Read every volume, coarse mask and score file listed in ``dataset.json``"""
    dataset_dir = Path(dataset_dir)
    index = read_index(dataset_dir)
    rate = index.spec.corruption_rate
    cases = []
    for entry in index.entries:
        volume = read_volume(dataset_dir / entry.name)
        mask = read_labels(dataset_dir / f"{entry.name}.coarse.lab", volume.dims)
        coarse = CoarseMask(mask=mask, source="corrupted" if rate > 0 else "oracle", rate=rate)
        scores = read_scores(dataset_dir / f"{entry.name}.scores.json")
        cases.append(Case(name=entry.name, patient=entry.patient, volume=volume, coarse=coarse, scores=scores))
    logger.info(f"Loaded {len(cases)} volumes from {dataset_dir}")
    return cases
