import logging
from typing import Dict, List, Optional, Sequence, Tuple

from dcc_segmenter.analysis.embedding import embed
from dcc_segmenter.analysis.silhouette import silhouette_by_organ
from dcc_segmenter.cli.config import ExperimentConfig
from dcc_segmenter.dcc.losses import LossConfig
from dcc_segmenter.trainer.data import PreparedCase, filter_phases, split_by_patient
from dcc_segmenter.trainer.finetune import finetune
from dcc_segmenter.trainer.metrics import MetricsReport, evaluate
from dcc_segmenter.trainer.pretrain import pretrain
from dcc_segmenter.utils.errors import ConfigError

logger = logging.getLogger(__name__)

DEFAULT_TEMPERATURES = (0.01, 0.07, 0.1, 0.5, 1.0)
STRATEGIES = ("scratch", "plain", "hard_label", "supcon", "dcc")
PHASE_SETS = (("NC",), ("CE",), ("NC", "CE"))
SEPARABILITY_MODES = ("dcc", "hard_label")

SWEEP_COLUMNS = ("T", "seed", "mean_dice")
COMPARISON_COLUMNS = ("strategy", "seed", "mean_dice")
ABLATION_COLUMNS = ("train_phases", "eval_phase", "seed", "mean_dice")
SEPARABILITY_COLUMNS = ("mode", "seed", "organ", "silhouette")


def run_experiment(
    cases: Sequence[PreparedCase],
    organs: Sequence[int],
    config: ExperimentConfig,
    seed: Optional[int] = None,
    strategy: Optional[str] = None,
    temperature: Optional[float] = None,
    phases: Optional[Sequence[str]] = None,
) -> MetricsReport:
    """
    Pretrain, fine-tune and evaluate once

    Args:
        cases: Preprocessed cohort, split by patient into training and held-out cases
        organs: Organ class ids
        config: Experiment settings
        seed: Overrides ``config.seed``
        strategy: ``scratch`` skips pretraining; a loss mode overrides ``config.loss.mode``
        temperature: Overrides ``config.loss.temperature``
        phases: Overrides the training phase filter

    Returns:
        MetricsReport of the held-out evaluation
    """
    seed = config.seed if seed is None else seed
    train_cfg = config.train_config(seed)
    if phases is not None:
        train_cfg = train_cfg.model_copy(update={"phases": list(phases)})
    loss_fields = config.loss.model_dump()
    if strategy is not None and strategy != "scratch":
        loss_fields["mode"] = strategy
    if temperature is not None:
        loss_fields["temperature"] = temperature
    loss_cfg = LossConfig(**loss_fields)
    train_cases, eval_cases = split_by_patient(cases, train_cfg.eval_patients)

    pretrain_loss: List[float] = []
    silhouette: Dict[str, float] = {}
    encoder = None
    if strategy != "scratch":
        pretrained = pretrain(train_cases, organs, train_cfg, loss_cfg)
        pretrain_loss = pretrained.loss_curve
        encoder = {name: tensor.detach().numpy().copy() for name, tensor in pretrained.model.state_dict().items()}
        records = embed(
            pretrained.model,
            filter_phases(train_cases, train_cfg.phases),
            organs,
            train_cfg.patch_size,
            train_cfg.patches_per_organ,
            seed,
        )
        silhouette = {str(organ): score for organ, score in silhouette_by_organ(records).items()}

    tuned = finetune(train_cases, organs, train_cfg, encoder)
    evaluation = evaluate(tuned.model, eval_cases, organs, train_cfg.patch_size)
    return MetricsReport(
        seed=seed,
        config={
            "strategy": strategy or loss_cfg.mode,
            "train": train_cfg.model_dump(mode="json"),
            "loss": loss_cfg.model_dump(mode="json"),
        },
        pretrain_loss=pretrain_loss,
        finetune_loss=tuned.loss_curve,
        per_organ_dice=evaluation.per_organ_dice,
        per_phase_dice=evaluation.per_phase_dice,
        mean_dice=evaluation.mean_dice,
        silhouette=silhouette,
        warnings=evaluation.warnings,
    )


def _seeds(config: ExperimentConfig, seeds: Optional[Sequence[int]]) -> List[int]:
    return list(seeds) if seeds else [config.seed]


def temperature_sweep(
    cases: Sequence[PreparedCase],
    organs: Sequence[int],
    config: ExperimentConfig,
    temperatures: Sequence[float] = DEFAULT_TEMPERATURES,
    seeds: Optional[Sequence[int]] = None,
) -> List[Tuple[float, int, float]]:
    """(T, seed, mean Dice) rows in temperature order, seeds sharing the same cohort"""
    if not temperatures:
        raise ConfigError("temperature list is empty", code="config.invalid")
    bad = [t for t in temperatures if not t > 0]
    if bad:
        raise ConfigError(f"temperatures must be positive, got {bad}", code="config.invalid")
    rows = []
    for temperature in temperatures:
        for seed in _seeds(config, seeds):
            report = run_experiment(cases, organs, config, seed=seed, temperature=float(temperature))
            logger.info(f"T={temperature} seed={seed}: mean Dice {report.mean_dice:.4f}")
            rows.append((float(temperature), seed, report.mean_dice))
    return rows


def compare_pretraining(
    cases: Sequence[PreparedCase],
    organs: Sequence[int],
    config: ExperimentConfig,
    strategies: Sequence[str] = STRATEGIES,
    seeds: Optional[Sequence[int]] = None,
) -> List[Tuple[str, int, float]]:
    rows = []
    for strategy in strategies:
        for seed in _seeds(config, seeds):
            report = run_experiment(cases, organs, config, seed=seed, strategy=strategy)
            logger.info(f"{strategy} seed={seed}: mean Dice {report.mean_dice:.4f}")
            rows.append((strategy, seed, report.mean_dice))
    return rows


def phase_ablation(
    cases: Sequence[PreparedCase],
    organs: Sequence[int],
    config: ExperimentConfig,
    phase_sets: Sequence[Sequence[str]] = PHASE_SETS,
    seeds: Optional[Sequence[int]] = None,
) -> List[Tuple[str, str, int, float]]:
    """Train on each phase set and report per-phase Dice on every held-out phase"""
    rows = []
    for phases in phase_sets:
        for seed in _seeds(config, seeds):
            report = run_experiment(cases, organs, config, seed=seed, phases=phases)
            for eval_phase, dice in sorted(report.per_phase_dice.items()):
                rows.append(("+".join(phases), eval_phase, seed, dice))
    return rows


def separability_experiment(
    cases: Sequence[PreparedCase],
    organs: Sequence[int],
    config: ExperimentConfig,
    modes: Sequence[str] = SEPARABILITY_MODES,
    seeds: Optional[Sequence[int]] = None,
) -> List[Tuple[str, int, int, float]]:
    """Pretrain per (mode, seed) and measure the phase silhouette of each organ's embeddings"""
    rows = []
    for mode in modes:
        loss_cfg = LossConfig(temperature=config.loss.temperature, mode=mode)
        for seed in _seeds(config, seeds):
            train_cfg = config.train_config(seed)
            train_cases, _ = split_by_patient(cases, train_cfg.eval_patients)
            train_cases = filter_phases(train_cases, train_cfg.phases)
            model = pretrain(train_cases, organs, train_cfg, loss_cfg).model
            records = embed(model, train_cases, organs, train_cfg.patch_size, train_cfg.patches_per_organ, seed)
            for organ, score in silhouette_by_organ(records).items():
                rows.append((mode, seed, organ, score))
    return rows
