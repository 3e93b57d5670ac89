import json
import logging
import os
from pathlib import Path
from typing import Any, Dict, Optional, Union
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from dcc_segmenter.dcc.losses import LossConfig
from dcc_segmenter.phantom.specs import DatasetSpec, default_dataset_spec
from dcc_segmenter.trainer.config import TrainConfig
from dcc_segmenter.utils.errors import ConfigError
from dcc_segmenter.utils.io_utils import canonical_json, sha256_text

logger = logging.getLogger(__name__)

OUTPUT_DIR_ENV = "DCC_OUTPUT_DIR"
NUM_THREADS_ENV = "DCC_NUM_THREADS"
DEFAULT_OUTPUT_DIR = "runs"


class ExperimentConfig(BaseModel):
    """One JSON document configuring a whole experiment"""
    model_config = ConfigDict(extra="forbid")

    dataset: DatasetSpec = Field(default_factory=default_dataset_spec)
    train: TrainConfig = Field(default_factory=TrainConfig)
    loss: LossConfig = Field(default_factory=LossConfig)
    output_dir: str = DEFAULT_OUTPUT_DIR
    seed: int = Field(default=0, ge=0, lt=2**64)

    def train_config(self, seed: Optional[int] = None) -> TrainConfig:
        """Training settings with the experiment seed applied"""
        return self.train.model_copy(update={"seed": self.seed if seed is None else seed})

    def config_hash(self) -> str:
        return sha256_text(canonical_json(self))


def default_experiment_config() -> ExperimentConfig:
    return ExperimentConfig()


def _raise_config_error(error: ValidationError) -> None:
    extras = [".".join(str(part) for part in item["loc"]) for item in error.errors() if item["type"] == "extra_forbidden"]
    if extras:
        raise ConfigError(f"unknown config keys: {', '.join(extras)}", code="config.unknown_key") from error
    details = "; ".join(f"{'.'.join(str(p) for p in item['loc'])}: {item['msg']}" for item in error.errors())
    raise ConfigError(f"invalid config: {details}", code="config.invalid") from error


def _merge(base: Dict[str, Any], update: Dict[str, Any]) -> Dict[str, Any]:
    merged = dict(base)
    for key, value in update.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def validate_config(payload: Dict[str, Any]) -> ExperimentConfig:
    try:
        return ExperimentConfig.model_validate(payload)
    except ValidationError as e:
        _raise_config_error(e)


def load_config(path: Optional[Union[str, Path]] = None, overrides: Optional[Dict[str, Any]] = None) -> ExperimentConfig:
    """
    Build the experiment config: flags > config file > environment > defaults

    Args:
        path: JSON config file, optional
        overrides: Values from command-line flags; dotted keys reach nested sections,
            e.g. ``{"train.phases": ["NC"]}``

    Returns:
        The validated ExperimentConfig
    """
    payload: Dict[str, Any] = {}
    env_output = os.getenv(OUTPUT_DIR_ENV)
    if env_output:
        payload["output_dir"] = env_output
    env_threads = os.getenv(NUM_THREADS_ENV)
    if env_threads:
        try:
            payload["train"] = {"num_threads": int(env_threads)}
        except ValueError as e:
            raise ConfigError(f"{NUM_THREADS_ENV} must be an integer, got '{env_threads}'", code="config.invalid") from e
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file {path} does not exist", code="config.missing")
        try:
            document = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as e:
            raise ConfigError(f"config file {path} is not valid JSON: {e}", code="config.invalid") from e
        if not isinstance(document, dict):
            raise ConfigError(f"config file {path} must hold a JSON object", code="config.invalid")
        payload = _merge(payload, document)

    for key, value in (overrides or {}).items():
        if value is None:
            continue
        section = payload
        *parents, leaf = key.split(".")
        for parent in parents:
            section = section.setdefault(parent, {})
        section[leaf] = value

    config = validate_config(payload)
    logger.debug(f"Loaded config {config.config_hash()[:12]} from {path or 'defaults'}")
    return config
