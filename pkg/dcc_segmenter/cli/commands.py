import logging
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

from dcc_segmenter.analysis import experiments
from dcc_segmenter.analysis.embedding import embed, write_embeddings
from dcc_segmenter.analysis.report import emit_report
from dcc_segmenter.analysis.silhouette import silhouette_by_organ
from dcc_segmenter.cli.config import ExperimentConfig
from dcc_segmenter.models.checkpoint import load_checkpoint, restore, save_checkpoint
from dcc_segmenter.models.networks import build_contrastive_model, build_segmentation_model
from dcc_segmenter.phantom.dataset import load_dataset, read_index, write_dataset
from dcc_segmenter.trainer.data import PreparedCase, filter_phases, prepare_cases, split_by_patient
from dcc_segmenter.trainer.finetune import finetune
from dcc_segmenter.trainer.metrics import MetricsReport, evaluate
from dcc_segmenter.trainer.pretrain import pretrain
from dcc_segmenter.utils.errors import ModelError
from dcc_segmenter.utils.io_utils import read_json, sha256_file, write_csv, write_json

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

MANIFEST_FILE = "manifest.json"
DATASET_DIR = "dataset"
PRETRAIN_CHECKPOINT = "pretrain.ckpt"
MODEL_CHECKPOINT = "model.ckpt"


def output_dir(config: ExperimentConfig, out_dir: Optional[PathLike]) -> Path:
    path = Path(out_dir if out_dir is not None else config.output_dir)
    path.mkdir(parents=True, exist_ok=True)
    return path


def record_manifest(out_dir: Path, command: str, config: ExperimentConfig, artifacts: Sequence[Path]) -> Path:
    """Merge this command's config hash, seed and artifact checksums into ``manifest.json``"""
    path = out_dir / MANIFEST_FILE
    manifest = read_json(path) if path.exists() else {"commands": {}}
    manifest["commands"][command] = {
        "config_hash": config.config_hash(),
        "seed": config.seed,
        "artifacts": {
            Path(artifact).resolve().relative_to(out_dir.resolve()).as_posix(): sha256_file(artifact)
            for artifact in sorted(artifacts)
            if Path(artifact).is_file()
        },
    }
    return write_json(path, manifest)


def load_prepared(dataset_dir: PathLike) -> Tuple[List[PreparedCase], List[int]]:
    """Load and preprocess a dataset written by ``cmd_generate``"""
    dataset_dir = Path(dataset_dir)
    organs = read_index(dataset_dir).spec.class_ids
    return prepare_cases(load_dataset(dataset_dir)), organs


def _checkpoint_of_kind(path: PathLike, kind: str) -> Tuple[Dict, Dict]:
    header, tensors = load_checkpoint(path)
    if header.get("kind") != kind:
        raise ModelError(f"{path} holds a {header.get('kind')} checkpoint, expected {kind}", code="model.checkpoint_kind")
    return header, tensors


def _resolve_dataset(out: Path, dataset_dir: Optional[PathLike]) -> Path:
    return Path(dataset_dir) if dataset_dir is not None else out / DATASET_DIR


def cmd_generate(config: ExperimentConfig, out_dir: Optional[PathLike] = None) -> Path:
    out = output_dir(config, out_dir)
    dataset_dir = out / DATASET_DIR
    index = write_dataset(config.dataset, config.seed, dataset_dir)
    artifacts = [dataset_dir / "dataset.json"]
    for entry in index.entries:
        for suffix in (".vol", ".json", ".lab", ".coarse.lab", ".scores.json"):
            artifacts.append(dataset_dir / f"{entry.name}{suffix}")
    record_manifest(out, "generate", config, artifacts)
    return dataset_dir


def cmd_pretrain(config: ExperimentConfig, dataset_dir: Optional[PathLike] = None, out_dir: Optional[PathLike] = None) -> Path:
    out = output_dir(config, out_dir)
    cases, organs = load_prepared(_resolve_dataset(out, dataset_dir))
    train_cfg = config.train_config()
    train_cases, _ = split_by_patient(cases, train_cfg.eval_patients)
    result = pretrain(train_cases, organs, train_cfg, config.loss)

    checkpoint = save_checkpoint(
        out / PRETRAIN_CHECKPOINT,
        result.model,
        {
            "kind": "contrastive",
            "seed": config.seed,
            "config_hash": config.config_hash(),
            "projection_dim": train_cfg.projection_dim,
            "loss": config.loss.model_dump(mode="json"),
            "loss_curve": result.loss_curve,
        },
    )
    curve = write_csv(out / "pretrain_loss.csv", ("step", "loss"), enumerate(result.loss_curve))
    record_manifest(out, "pretrain", config, [checkpoint, curve])
    return checkpoint


def cmd_finetune(
    config: ExperimentConfig,
    dataset_dir: Optional[PathLike] = None,
    checkpoint: Optional[PathLike] = None,
    out_dir: Optional[PathLike] = None,
) -> Path:
    out = output_dir(config, out_dir)
    cases, organs = load_prepared(_resolve_dataset(out, dataset_dir))
    train_cfg = config.train_config()
    train_cases, _ = split_by_patient(cases, train_cfg.eval_patients)

    encoder = None
    pretrain_loss: List[float] = []
    if checkpoint is not None:
        header, encoder = _checkpoint_of_kind(checkpoint, "contrastive")
        pretrain_loss = header.get("loss_curve", [])
    result = finetune(train_cases, organs, train_cfg, encoder)

    model_path = save_checkpoint(
        out / MODEL_CHECKPOINT,
        result.model,
        {
            "kind": "segmentation",
            "seed": config.seed,
            "config_hash": config.config_hash(),
            "pretrained": checkpoint is not None,
            "pretrain_loss": pretrain_loss,
            "loss_curve": result.loss_curve,
        },
    )
    curve = write_csv(out / "finetune_loss.csv", ("step", "loss"), enumerate(result.loss_curve))
    record_manifest(out, "finetune", config, [model_path, curve])
    return model_path


def cmd_evaluate(
    config: ExperimentConfig,
    dataset_dir: Optional[PathLike] = None,
    model_path: Optional[PathLike] = None,
    checkpoint: Optional[PathLike] = None,
    out_dir: Optional[PathLike] = None,
) -> MetricsReport:
    """Evaluate a fine-tuned model on the held-out patients; ``checkpoint`` adds phase silhouettes"""
    out = output_dir(config, out_dir)
    cases, organs = load_prepared(_resolve_dataset(out, dataset_dir))
    train_cfg = config.train_config()
    train_cases, eval_cases = split_by_patient(cases, train_cfg.eval_patients)

    header, tensors = _checkpoint_of_kind(model_path if model_path is not None else out / MODEL_CHECKPOINT, "segmentation")
    model = restore(build_segmentation_model(config.seed), tensors)
    evaluation = evaluate(model, eval_cases, organs, train_cfg.patch_size)

    silhouette: Dict[str, float] = {}
    if checkpoint is not None:
        records = _embed_from_checkpoint(checkpoint, filter_phases(train_cases, train_cfg.phases), organs, config)
        silhouette = {str(organ): score for organ, score in silhouette_by_organ(records).items()}

    report = MetricsReport(
        seed=config.seed,
        config=config.model_dump(mode="json"),
        pretrain_loss=header.get("pretrain_loss", []),
        finetune_loss=header.get("loss_curve", []),
        per_organ_dice=evaluation.per_organ_dice,
        per_phase_dice=evaluation.per_phase_dice,
        mean_dice=evaluation.mean_dice,
        silhouette=silhouette,
        warnings=evaluation.warnings,
    )
    record_manifest(out, "evaluate", config, list(emit_report([report], out / "report")))
    return report


def _embed_from_checkpoint(checkpoint: PathLike, cases: Sequence[PreparedCase], organs: Sequence[int], config: ExperimentConfig):
    header, tensors = _checkpoint_of_kind(checkpoint, "contrastive")
    model = restore(build_contrastive_model(config.seed, header.get("projection_dim", config.train.projection_dim)), tensors)
    return embed(model, cases, organs, config.train.patch_size, config.train.patches_per_organ, config.seed)


def cmd_embed(
    config: ExperimentConfig,
    dataset_dir: Optional[PathLike] = None,
    checkpoint: Optional[PathLike] = None,
    out_dir: Optional[PathLike] = None,
) -> Path:
    out = output_dir(config, out_dir)
    cases, organs = load_prepared(_resolve_dataset(out, dataset_dir))
    cases = filter_phases(cases, config.train.phases)
    records = _embed_from_checkpoint(checkpoint if checkpoint is not None else out / PRETRAIN_CHECKPOINT, cases, organs, config)
    path = write_embeddings(out / "embeddings.csv", records)
    record_manifest(out, "embed", config, [path])
    return path


def cmd_sweep(
    config: ExperimentConfig,
    dataset_dir: Optional[PathLike] = None,
    temperatures: Sequence[float] = experiments.DEFAULT_TEMPERATURES,
    seeds: Optional[Sequence[int]] = None,
    out_dir: Optional[PathLike] = None,
) -> Path:
    out = output_dir(config, out_dir)
    cases, organs = load_prepared(_resolve_dataset(out, dataset_dir))
    rows = experiments.temperature_sweep(cases, organs, config, temperatures, seeds)
    path = write_csv(out / "sweep.csv", experiments.SWEEP_COLUMNS, rows)
    record_manifest(out, "sweep", config, [path])
    return path


def cmd_compare(
    config: ExperimentConfig,
    dataset_dir: Optional[PathLike] = None,
    seeds: Optional[Sequence[int]] = None,
    out_dir: Optional[PathLike] = None,
) -> Path:
    out = output_dir(config, out_dir)
    cases, organs = load_prepared(_resolve_dataset(out, dataset_dir))
    rows = experiments.compare_pretraining(cases, organs, config, seeds=seeds)
    path = write_csv(out / "pretrain_comparison.csv", experiments.COMPARISON_COLUMNS, rows)
    record_manifest(out, "compare", config, [path])
    return path


def cmd_phases(
    config: ExperimentConfig,
    dataset_dir: Optional[PathLike] = None,
    seeds: Optional[Sequence[int]] = None,
    out_dir: Optional[PathLike] = None,
) -> Path:
    out = output_dir(config, out_dir)
    cases, organs = load_prepared(_resolve_dataset(out, dataset_dir))
    phase_sets = list(dict.fromkeys([(phase,) for phase in config.dataset.phases] + [tuple(config.dataset.phases)]))
    rows = experiments.phase_ablation(cases, organs, config, phase_sets=phase_sets, seeds=seeds)
    path = write_csv(out / "phase_ablation.csv", experiments.ABLATION_COLUMNS, rows)
    record_manifest(out, "phases", config, [path])
    return path


def cmd_separability(
    config: ExperimentConfig,
    dataset_dir: Optional[PathLike] = None,
    seeds: Optional[Sequence[int]] = None,
    out_dir: Optional[PathLike] = None,
) -> Path:
    out = output_dir(config, out_dir)
    cases, organs = load_prepared(_resolve_dataset(out, dataset_dir))
    rows = experiments.separability_experiment(cases, organs, config, seeds=seeds)
    path = write_csv(out / "separability.csv", experiments.SEPARABILITY_COLUMNS, rows)
    record_manifest(out, "separability", config, [path])
    return path
