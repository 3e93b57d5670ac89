import logging
import numpy as np
from typing import Dict, List, Sequence, Tuple
from pydantic import BaseModel, ConfigDict

from dcc_segmenter.phantom.dataset import Case
from dcc_segmenter.phantom.specs import CoarseMask, Volume
from dcc_segmenter.preprocess.pipeline import preprocess_volume
from dcc_segmenter.sampler.patches import Patch, sample_patch
from dcc_segmenter.utils.errors import SamplingError

logger = logging.getLogger(__name__)

PoolKey = Tuple[int, str]


class PreparedCase(BaseModel):
    """A case after window -> normalize -> crop, with its coarse mask cropped alongside"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    name: str
    patient: int
    volume: Volume
    coarse: CoarseMask

    @property
    def phase(self) -> str:
        return self.volume.phase


def prepare_cases(cases: Sequence[Case]) -> List[PreparedCase]:
    prepared = []
    for case in cases:
        volume, coarse = preprocess_volume(case.volume, case.scores, case.coarse)
        prepared.append(PreparedCase(name=case.name, patient=case.patient, volume=volume, coarse=coarse))
    return prepared


def filter_phases(cases: Sequence[PreparedCase], phases: Sequence[str]) -> List[PreparedCase]:
    return [case for case in cases if case.phase in phases]


def build_pool(
    cases: Sequence[PreparedCase],
    organs: Sequence[int],
    patches_per_organ: int,
    patch_size: int,
    rng: np.random.Generator,
) -> Dict[PoolKey, List[Patch]]:
    """Draw ``patches_per_organ`` patches per (volume, organ), grouped by (organ, phase)"""
    pool: Dict[PoolKey, List[Patch]] = {}
    for case in cases:
        present = set(case.coarse.class_ids())
        for organ in organs:
            if organ not in present:
                logger.warning(f"Organ {organ} missing from coarse mask of {case.name}, skipped")
                continue
            patches = pool.setdefault((organ, case.phase), [])
            for _ in range(patches_per_organ):
                patches.append(sample_patch(case.volume, case.coarse, organ, patch_size, rng, volume_id=case.name))
    if not pool:
        raise SamplingError("no organ patches could be sampled from the dataset", code="sampler.empty_pool")
    return pool


class PatchStream:
    """
    Round-robin over (organ, phase) keys, ``repeats`` consecutive patches per key

    With repeats >= 2 every minibatch holds distinct patches that share an
    (organ, phase) label next to the same organ in the other phase.
    """

    def __init__(self, pool: Dict[PoolKey, List[Patch]], rng: np.random.Generator, repeats: int = 1):
        if repeats < 1:
            raise SamplingError(f"repeats must be positive, got {repeats}", code="sampler.repeats")
        self.keys = sorted(pool)
        self.pool = {key: [pool[key][i] for i in rng.permutation(len(pool[key]))] for key in self.keys}
        self.cursor = {key: 0 for key in self.keys}
        self.repeats = repeats
        self.drawn = 0

    def next_patch(self) -> Patch:
        key = self.keys[(self.drawn // self.repeats) % len(self.keys)]
        self.drawn += 1
        patches = self.pool[key]
        patch = patches[self.cursor[key] % len(patches)]
        self.cursor[key] += 1
        return patch

    def next_batch(self, size: int) -> List[Patch]:
        return [self.next_patch() for _ in range(size)]


def split_by_patient(cases: Sequence[PreparedCase], eval_patients: int) -> Tuple[List[PreparedCase], List[PreparedCase]]:
    """Hold out the ``eval_patients`` highest patient ids, every phase of them"""
    patients = sorted({case.patient for case in cases})
    if eval_patients == 0 or eval_patients >= len(patients):
        logger.warning(f"Cannot hold out {eval_patients} of {len(patients)} patients; evaluating on the training cases")
        return list(cases), list(cases)
    held_out = set(patients[-eval_patients:])
    train = [case for case in cases if case.patient not in held_out]
    evaluation = [case for case in cases if case.patient in held_out]
    return train, evaluation
