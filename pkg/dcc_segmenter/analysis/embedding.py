import logging
import numpy as np
import torch
from pathlib import Path
from typing import Dict, List, Sequence, Union
from pydantic import BaseModel, ConfigDict, field_validator

from dcc_segmenter.dcc.correlation import masked_mean_intensity
from dcc_segmenter.models.networks import ContrastiveModel, as_input
from dcc_segmenter.sampler.augment import AugParams, apply_augmentation
from dcc_segmenter.sampler.minibatch import stack_inputs
from dcc_segmenter.sampler.patches import sample_patch
from dcc_segmenter.trainer.data import PreparedCase
from dcc_segmenter.utils.errors import AnalysisError
from dcc_segmenter.utils.io_utils import read_csv, write_csv

logger = logging.getLogger(__name__)

UNIT_NORM_TOL = 1e-6


class EmbeddingRecord(BaseModel):
    """Projected embedding of one organ patch"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    z: np.ndarray
    organ_class: int
    phase: str
    d: float
    volume_id: str = ""
    slice_index: int = -1

    @field_validator("z")
    @classmethod
    def _unit_norm(cls, value):
        value = np.asarray(value, dtype=np.float64)
        if value.ndim != 1 or abs(np.linalg.norm(value) - 1.0) > UNIT_NORM_TOL:
            raise ValueError("embedding must be a unit-norm vector")
        return value


def embed(
    model: ContrastiveModel,
    cases: Sequence[PreparedCase],
    organs: Sequence[int],
    patch_size: int,
    patches_per_organ: int,
    seed: int,
) -> List[EmbeddingRecord]:
    """Embed un-augmented organ patches drawn from every case, in (case, organ) order"""
    rng = np.random.default_rng([seed, 2])
    model.eval()
    records: List[EmbeddingRecord] = []
    for case in cases:
        present = set(case.coarse.class_ids())
        for organ in organs:
            if organ not in present:
                continue
            views = [
                apply_augmentation(
                    sample_patch(case.volume, case.coarse, organ, patch_size, rng, volume_id=case.name), AugParams()
                )
                for _ in range(patches_per_organ)
            ]
            with torch.no_grad():
                z = model(as_input(stack_inputs(views))).numpy()
            for view, vector in zip(views, z):
                records.append(
                    EmbeddingRecord(
                        z=vector,
                        organ_class=organ,
                        phase=case.phase,
                        d=masked_mean_intensity(view),
                        volume_id=case.name,
                        slice_index=view.source.slice_index,
                    )
                )
    logger.info(f"Embedded {len(records)} patches from {len(cases)} volumes")
    return records


def group_by_organ(records: Sequence[EmbeddingRecord]) -> Dict[int, List[EmbeddingRecord]]:
    groups: Dict[int, List[EmbeddingRecord]] = {}
    for record in records:
        groups.setdefault(record.organ_class, []).append(record)
    return dict(sorted(groups.items()))


def write_embeddings(path: Union[str, Path], records: Sequence[EmbeddingRecord]) -> Path:
    """CSV with columns organ,phase,d,z_0..z_{D-1}"""
    if not records:
        raise AnalysisError("no embeddings to write", code="analysis.empty")
    dim = records[0].z.shape[0]
    header = ["organ", "phase", "d"] + [f"z_{i}" for i in range(dim)]
    rows = ([r.organ_class, r.phase, r.d] + [float(v) for v in r.z] for r in records)
    return write_csv(path, header, rows)


def read_embeddings(path: Union[str, Path]) -> List[EmbeddingRecord]:
    records = []
    for row in read_csv(path):
        z_keys = sorted((k for k in row if k.startswith("z_")), key=lambda k: int(k[2:]))
        records.append(
            EmbeddingRecord(
                z=np.array([float(row[k]) for k in z_keys]),
                organ_class=int(row["organ"]),
                phase=row["phase"],
                d=float(row["d"]),
            )
        )
    return records
