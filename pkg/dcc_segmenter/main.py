import argparse
import logging
import os
import sys
from typing import Any, Dict, List, Optional, Sequence
from dotenv import load_dotenv

# Load environment variables
load_dotenv()

from dcc_segmenter.analysis.experiments import DEFAULT_TEMPERATURES
from dcc_segmenter.cli import commands
from dcc_segmenter.cli.config import load_config
from dcc_segmenter.utils.errors import ConfigError, DCCError

logger = logging.getLogger("dcc_segmenter")

LOG_LEVEL_ENV = "DCC_LOG_LEVEL"
LOSS_MODES = ("dcc", "plain", "hard_label", "supcon")


def _float_list(text: str) -> List[float]:
    try:
        return [float(item) for item in text.split(",") if item.strip()]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got '{text}'") from e


def _int_list(text: str) -> List[int]:
    try:
        return [int(item) for item in text.split(",") if item.strip()]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got '{text}'") from e


def _phase_list(text: str) -> List[str]:
    return [item.strip() for item in text.split(",") if item.strip()]


class ConfigArgumentParser(argparse.ArgumentParser):
    """Argument errors are config errors: one line on stderr and exit code 2"""

    def error(self, message):
        sys.stderr.write(ConfigError(message, code="config.arguments").one_line() + "\n")
        sys.exit(ConfigError.exit_code)


def build_parser() -> argparse.ArgumentParser:
    common = ConfigArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON experiment config; flags override its values")
    common.add_argument("--seed", type=int, help="Experiment seed (unsigned 64-bit)")
    common.add_argument("--out", help="Output directory for every artifact")
    common.add_argument("--dataset", help="Dataset directory (default: <out>/dataset)")
    common.add_argument("--phases", type=_phase_list, help="Training phases, e.g. NC,CE or NC")
    common.add_argument("--loss", choices=LOSS_MODES, help="Contrastive loss mode")
    common.add_argument("--log-level", help="Logging level (default: $DCC_LOG_LEVEL or INFO)")

    parser = ConfigArgumentParser(prog="dcc-segmenter", description="Contrast-aware contrastive pretraining for organ segmentation")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=ConfigArgumentParser)
    sub.add_parser("generate", parents=[common], help="Write a synthetic multi-phase dataset")
    sub.add_parser("pretrain", parents=[common], help="Contrastive pretraining of the encoder")
    finetune = sub.add_parser("finetune", parents=[common], help="Dice fine-tuning, from --checkpoint or scratch")
    finetune.add_argument("--checkpoint", help="Pretrained checkpoint; omit to train from scratch")
    evaluate = sub.add_parser("evaluate", parents=[common], help="Dice evaluation on held-out patients")
    evaluate.add_argument("--model", help="Fine-tuned model checkpoint (default: <out>/model.ckpt)")
    evaluate.add_argument("--checkpoint", help="Pretrained checkpoint, adds phase silhouettes to the report")
    embed = sub.add_parser("embed", parents=[common], help="Export patch embeddings as CSV")
    embed.add_argument("--checkpoint", help="Pretrained checkpoint (default: <out>/pretrain.ckpt)")
    sweep = sub.add_parser("sweep", parents=[common], help="Temperature sweep")
    sweep.add_argument("--temps", type=_float_list, default=list(DEFAULT_TEMPERATURES), help="Temperatures, e.g. 0.07,0.5")
    for name, text in (
        ("compare", "Compare pretraining strategies"),
        ("phases", "Single- vs multi-phase training ablation"),
        ("separability", "Phase silhouettes of DCC vs hard-label embeddings"),
    ):
        sub.add_parser(name, parents=[common], help=text)
    for name in ("sweep", "compare", "phases", "separability"):
        sub.choices[name].add_argument("--seeds", type=_int_list, help="Seeds to average over (default: --seed)")
    return parser


def run(args: argparse.Namespace) -> Any:
    overrides: Dict[str, Any] = {"seed": args.seed, "output_dir": args.out, "train.phases": args.phases, "loss.mode": args.loss}
    config = load_config(args.config, overrides)
    dataset = args.dataset
    seeds = getattr(args, "seeds", None)

    if args.command == "generate":
        return commands.cmd_generate(config)
    if args.command == "pretrain":
        return commands.cmd_pretrain(config, dataset)
    if args.command == "finetune":
        return commands.cmd_finetune(config, dataset, args.checkpoint)
    if args.command == "evaluate":
        return commands.cmd_evaluate(config, dataset, args.model, args.checkpoint)
    if args.command == "embed":
        return commands.cmd_embed(config, dataset, args.checkpoint)
    if args.command == "sweep":
        return commands.cmd_sweep(config, dataset, args.temps, seeds)
    if args.command == "compare":
        return commands.cmd_compare(config, dataset, seeds)
    if args.command == "phases":
        return commands.cmd_phases(config, dataset, seeds)
    return commands.cmd_separability(config, dataset, seeds)


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    level = (args.log_level or os.getenv(LOG_LEVEL_ENV) or "INFO").upper()
    if not isinstance(logging.getLevelName(level), int):
        sys.stderr.write(ConfigError(f"unknown log level '{level}'", code="config.invalid").one_line() + "\n")
        return ConfigError.exit_code
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        run(args)
    except DCCError as e:
        logger.debug("Command failed", exc_info=True)
        sys.stderr.write(e.one_line() + "\n")
        return e.exit_code
    except Exception as e:
        logger.exception(f"Unexpected failure in {args.command}")
        sys.stderr.write(DCCError(str(e), code="runtime.unexpected").one_line() + "\n")
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
