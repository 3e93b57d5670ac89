import json
import logging
import numpy as np
from pathlib import Path
from typing import List, Optional, Tuple, Union
from pydantic import BaseModel, ConfigDict, ValidationError

from dcc_segmenter.phantom.specs import PHASE_TAGS, Stage, Volume
from dcc_segmenter.utils.errors import VolumeFormatError
from dcc_segmenter.utils.io_utils import write_json

logger = logging.getLogger(__name__)

VOXEL_DTYPE = np.dtype("<f4")
LABEL_DTYPE = np.dtype("u1")


class VolumeSidecar(BaseModel):
    """JSON sidecar describing a raw ``.vol`` payload"""
    model_config = ConfigDict(extra="forbid")

    dims: Tuple[int, int, int]
    spacing_mm: Tuple[float, float, float]
    phase: str
    normalized: bool
    labels_file: str
    stage: Optional[Stage] = None

    def resolved_stage(self) -> str:
        if self.stage is not None:
            return self.stage
        return "normalized" if self.normalized else "raw"


def volume_paths(path: Union[str, Path]) -> Tuple[Path, Path, Path]:
    """(.vol, .json, .lab) paths for a base name, with or without extension"""
    path = Path(path)
    if path.suffix in (".vol", ".json", ".lab"):
        path = path.with_suffix("")
    return path.with_suffix(".vol"), path.with_suffix(".json"), path.with_suffix(".lab")


def write_labels(path: Union[str, Path], labels: np.ndarray) -> Path:
    path = Path(path)
    path.write_bytes(np.asarray(labels, dtype=LABEL_DTYPE).tobytes(order="F"))
    return path


def read_labels(path: Union[str, Path], dims: Tuple[int, int, int]) -> np.ndarray:
    raw = Path(path).read_bytes()
    expected = int(np.prod(dims))
    if len(raw) != expected:
        raise VolumeFormatError(
            f"labels file {path} holds {len(raw)} values but dims {tuple(dims)} need {expected}",
            code="volume.dims_mismatch",
        )
    flat = np.frombuffer(raw, dtype=LABEL_DTYPE)
    return np.ascontiguousarray(flat.reshape(dims, order="F"))


def write_volume(volume: Volume, path: Union[str, Path]) -> Path:
    """
    Write a volume as ``<name>.vol`` + ``<name>.json`` + ``<name>.lab``

    Voxels are little-endian float32 and labels unsigned 8-bit, both x-fastest.
    """
    vol_path, json_path, lab_path = volume_paths(path)
    vol_path.parent.mkdir(parents=True, exist_ok=True)
    vol_path.write_bytes(np.asarray(volume.voxels, dtype=VOXEL_DTYPE).tobytes(order="F"))
    write_labels(lab_path, volume.labels)
    sidecar = VolumeSidecar(
        dims=volume.dims,
        spacing_mm=volume.spacing_mm,
        phase=volume.phase,
        normalized=volume.normalized,
        labels_file=lab_path.name,
        stage=volume.stage,
    )
    write_json(json_path, sidecar)
    return vol_path


def read_sidecar(json_path: Path) -> VolumeSidecar:
    try:
        with open(json_path, "r", encoding="utf-8") as handle:
            return VolumeSidecar.model_validate(json.load(handle))
    except (json.JSONDecodeError, ValidationError, UnicodeDecodeError) as e:
        raise VolumeFormatError(f"malformed sidecar {json_path}: {e}", code="volume.sidecar") from e


def read_volume(path: Union[str, Path]) -> Volume:
    """Read a volume written by ``write_volume``; the round trip is bit-exact"""
    vol_path, json_path, _ = volume_paths(path)
    sidecar = read_sidecar(json_path)

    if sidecar.phase not in PHASE_TAGS:
        raise VolumeFormatError(f"unknown phase tag '{sidecar.phase}' in {json_path}", code="volume.unknown_phase")
    if any(d <= 0 for d in sidecar.dims):
        raise VolumeFormatError(f"non-positive dims {sidecar.dims} in {json_path}", code="volume.sidecar")

    raw = vol_path.read_bytes()
    if len(raw) % VOXEL_DTYPE.itemsize:
        raise VolumeFormatError(
            f"payload {vol_path} has {len(raw)} bytes, not a whole number of float32 values",
            code="volume.payload_length",
        )
    count = len(raw) // VOXEL_DTYPE.itemsize
    expected = int(np.prod(sidecar.dims))
    if count != expected:
        raise VolumeFormatError(
            f"payload {vol_path} holds {count} values but sidecar dims {sidecar.dims} need {expected}",
            code="volume.dims_mismatch",
        )

    voxels = np.frombuffer(raw, dtype=VOXEL_DTYPE).reshape(sidecar.dims, order="F")
    labels = read_labels(vol_path.parent / sidecar.labels_file, sidecar.dims)
    return Volume(
        voxels=np.ascontiguousarray(voxels, dtype=np.float32),
        labels=labels,
        spacing_mm=sidecar.spacing_mm,
        phase=sidecar.phase,
        stage=sidecar.resolved_stage(),
    )


def write_scores(path: Union[str, Path], scores: np.ndarray) -> Path:
    path = Path(path)
    path.write_text(json.dumps([float(s) for s in scores]) + "\n", encoding="utf-8")
    return path


def read_scores(path: Union[str, Path]) -> np.ndarray:
    """Body-part regression scores stored as a JSON array"""
    try:
        values: List[float] = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise VolumeFormatError(f"malformed slice scores {path}: {e}", code="volume.scores") from e
    if not isinstance(values, list) or not all(isinstance(v, (int, float)) for v in values):
        raise VolumeFormatError(f"slice scores {path} must be a JSON array of numbers", code="volume.scores")
    return np.asarray(values, dtype=np.float64)
