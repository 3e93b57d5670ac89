import numpy as np
from typing import Dict, List, Literal, Optional, Tuple
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

# Phase tags understood by the dataset layer
PHASE_TAGS = ("NC", "CE", "AR", "PV", "DL")

Stage = Literal["raw", "windowed", "normalized", "cropped"]
NORMALIZED_STAGES = ("normalized", "cropped")


def check_phase(phase: str) -> str:
    if phase not in PHASE_TAGS:
        raise ValueError(f"unknown phase tag '{phase}', expected one of {', '.join(PHASE_TAGS)}")
    return phase


# Models for the phantom description
class Ellipsoid(BaseModel):
    """Axis-aligned ellipsoid in fractions of the volume extent"""
    model_config = ConfigDict(extra="forbid")

    center: Tuple[float, float, float]
    semi_axes: Tuple[float, float, float]

    @field_validator("center")
    @classmethod
    def _center_in_unit_cube(cls, value):
        if any(c < 0.0 or c > 1.0 for c in value):
            raise ValueError("ellipsoid center fractions must lie in [0, 1]")
        return value

    @field_validator("semi_axes")
    @classmethod
    def _positive_axes(cls, value):
        if any(a <= 0.0 or a > 1.0 for a in value):
            raise ValueError("ellipsoid semi-axes fractions must lie in (0, 1]")
        return value


class OrganSpec(BaseModel):
    """One labeled organ with its per-phase mean intensity"""
    model_config = ConfigDict(extra="forbid")

    class_id: int = Field(ge=1, le=255)
    name: str = ""
    shape: Ellipsoid
    intensity_by_phase: Dict[str, float]
    texture_sd: float = Field(default=0.0, ge=0.0)


class StructureSpec(BaseModel):
    """Unlabeled dense structure (e.g. a spine) painted under the organs"""
    model_config = ConfigDict(extra="forbid")

    name: str = "structure"
    shape: Ellipsoid
    hu: float
    texture_sd: float = Field(default=0.0, ge=0.0)


class DatasetSpec(BaseModel):
    """Complete description of a synthetic multi-phase cohort"""
    model_config = ConfigDict(extra="forbid")

    organs: List[OrganSpec]
    dims: Tuple[int, int, int] = (96, 96, 32)
    spacing_mm: Tuple[float, float, float] = (0.8, 0.8, 2.5)
    phases: List[str] = Field(default_factory=lambda: ["NC", "CE"])
    volumes_per_phase: int = Field(default=3, ge=1)
    background_hu: float = 40.0
    air_hu: float = -1000.0
    body: Optional[Ellipsoid] = None
    structures: List[StructureSpec] = Field(default_factory=list)
    jitter: float = Field(default=0.0, ge=0.0, le=0.2)
    score_range: Tuple[float, float] = (-6.0, 7.0)
    corruption_rate: float = Field(default=0.1, ge=0.0, lt=1.0)

    @field_validator("dims")
    @classmethod
    def _dims_large_enough(cls, value):
        if any(d < 16 for d in value):
            raise ValueError("dims must be at least 16 along every axis")
        return value

    @field_validator("spacing_mm")
    @classmethod
    def _positive_spacing(cls, value):
        if any(s <= 0 for s in value):
            raise ValueError("spacing_mm must be positive")
        return value

    @field_validator("phases")
    @classmethod
    def _known_phases(cls, value):
        if not value:
            raise ValueError("at least one phase is required")
        if len(set(value)) != len(value):
            raise ValueError("phase tags must be unique")
        for phase in value:
            check_phase(phase)
        return value

    @model_validator(mode="after")
    def _organ_consistency(self):
        # background counts as a class, so a single organ gives the minimum of two classes
        if not self.organs:
            raise ValueError("at least one organ class is required besides background")
        ids = [organ.class_id for organ in self.organs]
        if len(set(ids)) != len(ids):
            raise ValueError(f"organ class_id values must be unique, got {ids}")
        for organ in self.organs:
            missing = [p for p in self.phases if p not in organ.intensity_by_phase]
            if missing:
                raise ValueError(f"organ {organ.class_id} has no intensity for phases {missing}")
        return self

    @property
    def class_ids(self) -> List[int]:
        return sorted(organ.class_id for organ in self.organs)

    def organ(self, class_id: int) -> OrganSpec:
        for organ in self.organs:
            if organ.class_id == class_id:
                return organ
        raise KeyError(class_id)


class Volume(BaseModel):
    """3D intensity grid with its voxel-wise organ labels"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    voxels: np.ndarray
    labels: np.ndarray
    spacing_mm: Tuple[float, float, float]
    phase: str
    stage: Stage = "raw"

    @model_validator(mode="after")
    def _check_grids(self):
        check_phase(self.phase)
        if self.voxels.ndim != 3 or self.voxels.shape != self.labels.shape:
            raise ValueError(
                f"voxels {self.voxels.shape} and labels {self.labels.shape} must be 3D grids of identical dims"
            )
        if any(d <= 0 for d in self.voxels.shape):
            raise ValueError("volume dims must be positive")
        if self.voxels.dtype != np.float32:
            self.voxels = self.voxels.astype(np.float32)
        if self.labels.dtype != np.uint8:
            self.labels = self.labels.astype(np.uint8)
        if self.normalized and self.voxels.size and (self.voxels.min() < 0.0 or self.voxels.max() > 1.0):
            raise ValueError("normalized volume has voxels outside [0, 1]")
        return self

    @property
    def dims(self) -> Tuple[int, int, int]:
        return tuple(int(d) for d in self.voxels.shape)

    @property
    def normalized(self) -> bool:
        return self.stage in NORMALIZED_STAGES

    def evolve(self, **changes) -> "Volume":
        """Return a validated copy with some fields replaced"""
        fields = dict(self)
        fields.update(changes)
        return Volume(**fields)


class CoarseMask(BaseModel):
    """Coarse organ segmentation guiding patch extraction"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    mask: np.ndarray
    source: Literal["oracle", "corrupted"] = "oracle"
    rate: float = 0.0

    @model_validator(mode="after")
    def _check_mask(self):
        if self.mask.ndim != 3:
            raise ValueError("coarse mask must be a 3D grid")
        if self.mask.dtype != np.uint8:
            self.mask = self.mask.astype(np.uint8)
        return self

    def class_ids(self) -> List[int]:
        return [int(c) for c in np.unique(self.mask) if c != 0]


def default_dataset_spec() -> DatasetSpec:
    """Desk-scale cohort: two contrast-varying and two contrast-invariant organs"""
    def organ(class_id, name, center, semi_axes, nc, ce):
        return OrganSpec(
            class_id=class_id,
            name=name,
            shape=Ellipsoid(center=center, semi_axes=semi_axes),
            intensity_by_phase={"NC": nc, "CE": ce},
            texture_sd=10.0,
        )

    return DatasetSpec(
        organs=[
            organ(1, "kidney", (0.62, 0.28, 0.5), (0.09, 0.07, 0.30), 20.0, 200.0),
            organ(2, "spleen", (0.35, 0.75, 0.5), (0.10, 0.08, 0.30), 50.0, 230.0),
            organ(3, "gallbladder", (0.38, 0.30, 0.5), (0.07, 0.06, 0.25), 10.0, 20.0),
            organ(4, "pancreas", (0.52, 0.52, 0.5), (0.05, 0.10, 0.20), 90.0, 100.0),
        ],
        body=Ellipsoid(center=(0.5, 0.5, 0.5), semi_axes=(0.45, 0.45, 1.0)),
        structures=[
            StructureSpec(
                name="spine",
                shape=Ellipsoid(center=(0.72, 0.5, 0.5), semi_axes=(0.08, 0.08, 1.0)),
                hu=700.0,
                texture_sd=20.0,
            )
        ],
        jitter=0.02,
    )
