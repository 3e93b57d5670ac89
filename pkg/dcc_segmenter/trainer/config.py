from typing import List, Literal
from pydantic import BaseModel, ConfigDict, Field, field_validator

from dcc_segmenter.phantom.specs import check_phase


class TrainConfig(BaseModel):
    """Pretraining and fine-tuning schedule"""
    model_config = ConfigDict(extra="forbid")

    batch_patches: int = Field(default=4, ge=2, description="n patches per minibatch, giving 2n views")
    pretrain_epochs: int = Field(default=10, ge=1)
    pretrain_lr: float = Field(default=3e-4, gt=0.0)
    finetune_epochs: int = Field(default=5, ge=1)
    finetune_lr: float = Field(default=1e-4, gt=0.0)
    steps_per_epoch: int = Field(default=50, ge=1)
    weight_decay: float = Field(default=1e-4, ge=0.0)
    patch_size: int = Field(default=64, ge=16)
    projection_dim: int = Field(default=32, ge=2)
    phases: List[str] = Field(default_factory=lambda: ["NC", "CE"])
    patches_per_organ: int = Field(default=4, ge=1, description="patches per organ per volume in each epoch's pool")
    patches_per_key: int = Field(default=2, ge=1, description="consecutive pretraining patches drawn per (organ, phase) key")
    finetune_augment: bool = True
    eval_patients: int = Field(default=1, ge=0, description="highest-numbered patients held out for evaluation")
    num_threads: int = Field(default=1, ge=1)
    seed: int = Field(default=0, ge=0)

    @field_validator("patch_size")
    @classmethod
    def _multiple_of_sixteen(cls, value):
        if value % 16:
            raise ValueError("patch_size must be a multiple of 16 (four 2x downsamples)")
        return value

    @field_validator("phases")
    @classmethod
    def _nonempty_phases(cls, value):
        if not value:
            raise ValueError("phases must not be empty")
        for phase in value:
            check_phase(phase)
        return value

    @property
    def phase_mode(self) -> Literal["single", "multi"]:
        return "single" if len(self.phases) == 1 else "multi"
