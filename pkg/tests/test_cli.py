import json
import pytest

from dcc_segmenter.cli.commands import MANIFEST_FILE
from dcc_segmenter.cli.config import NUM_THREADS_ENV, OUTPUT_DIR_ENV, default_experiment_config, load_config
from dcc_segmenter.main import build_parser, main
from dcc_segmenter.utils.errors import ConfigError
from dcc_segmenter.utils.io_utils import read_json, sha256_file


@pytest.fixture
def config_file(tmp_path, tiny_spec):
    document = {
        "dataset": tiny_spec.model_dump(mode="json"),
        "train": {
            "patch_size": 16,
            "pretrain_epochs": 1,
            "finetune_epochs": 1,
            "steps_per_epoch": 2,
            "patches_per_organ": 2,
            "eval_patients": 1,
        },
        "loss": {"temperature": 0.07, "mode": "dcc"},
        "seed": 3,
    }
    path = tmp_path / "config.json"
    path.write_text(json.dumps(document))
    return path


def write_config(tmp_path, document):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(document))
    return str(path)


def test_unknown_key_exits_with_config_error(tmp_path, capsys):
    assert main(["generate", "--config", write_config(tmp_path, {"bogus": 1}), "--out", str(tmp_path)]) == 2
    assert "error=config.unknown_key" in capsys.readouterr().err

    nested = write_config(tmp_path, {"train": {"momentum": 0.9}})
    assert main(["generate", "--config", nested, "--out", str(tmp_path)]) == 2
    assert "train.momentum" in capsys.readouterr().err


def test_invalid_values_exit_with_config_error(tmp_path, capsys):
    assert main(["pretrain", "--config", write_config(tmp_path, {"loss": {"temperature": 0.0}})]) == 2
    errors = [line for line in capsys.readouterr().err.splitlines() if line.startswith("error=")]
    assert len(errors) == 1 and errors[0].startswith("error=config.invalid")

    assert main(["generate", "--config", str(tmp_path / "missing.json")]) == 2
    assert "error=config.missing" in capsys.readouterr().err

    assert main(["generate", "--log-level", "chatty", "--out", str(tmp_path)]) == 2


def test_bad_flags_exit_two(capsys):
    with pytest.raises(SystemExit) as excinfo:
        main(["sweep", "--temps", "a,b"])
    assert excinfo.value.code == 2
    assert "error=config.arguments" in capsys.readouterr().err
    with pytest.raises(SystemExit):
        main(["pretrain", "--loss", "triplet"])


def test_help_lists_flags(capsys):
    text = build_parser().format_help()
    for command in ("generate", "pretrain", "finetune", "evaluate", "embed", "sweep"):
        assert command in text
    with pytest.raises(SystemExit) as excinfo:
        main(["sweep", "--help"])
    assert excinfo.value.code == 0
    sweep_help = capsys.readouterr().out
    for flag in ("--config", "--seed", "--out", "--temps", "--phases", "--loss", "--seeds"):
        assert flag in sweep_help


def test_config_precedence(tmp_path, monkeypatch, config_file):
    monkeypatch.setenv(OUTPUT_DIR_ENV, str(tmp_path / "from_env"))
    monkeypatch.setenv(NUM_THREADS_ENV, "3")
    config = load_config()
    assert config.output_dir == str(tmp_path / "from_env")
    assert config.train.num_threads == 3

    config = load_config(config_file, {"seed": 11, "train.phases": ["NC"], "loss.mode": None})
    assert config.seed == 11
    assert config.train.phases == ["NC"]
    assert config.train.patch_size == 16
    assert config.train.num_threads == 3
    assert config.loss.mode == "dcc"

    monkeypatch.setenv(NUM_THREADS_ENV, "many")
    with pytest.raises(ConfigError):
        load_config()


def test_config_hash_tracks_content(config_file):
    first = load_config(config_file)
    assert first.config_hash() == load_config(config_file).config_hash()
    assert first.config_hash() != load_config(config_file, {"seed": 4}).config_hash()
    assert first.train_config().seed == 3
    assert first.train_config(9).seed == 9


def test_generate_is_reproducible(tmp_path, config_file):
    for name in ("a", "b"):
        assert main(["generate", "--config", str(config_file), "--out", str(tmp_path / name)]) == 0
    first = read_json(tmp_path / "a" / MANIFEST_FILE)["commands"]["generate"]
    second = read_json(tmp_path / "b" / MANIFEST_FILE)["commands"]["generate"]
    assert first["artifacts"] == second["artifacts"]
    assert "dataset/dataset.json" in first["artifacts"]
    assert first["seed"] == 3


def test_missing_model_is_a_runtime_error(tmp_path, config_file, capsys):
    out = str(tmp_path / "run")
    assert main(["generate", "--config", str(config_file), "--out", out]) == 0
    assert main(["evaluate", "--config", str(config_file), "--out", out]) == 1
    assert "error=model.checkpoint_missing" in capsys.readouterr().err


CHAIN_OUTPUTS = (
    "pretrain.ckpt",
    "pretrain_loss.csv",
    "model.ckpt",
    "finetune_loss.csv",
    "report.json",
    "report.csv",
    "embeddings.csv",
    "sweep.csv",
)


def run_chain(out, config_file):
    base = ["--config", str(config_file), "--out", str(out)]
    checkpoint = str(out / "pretrain.ckpt")
    assert main(["generate"] + base) == 0
    assert main(["pretrain"] + base) == 0
    assert main(["finetune", "--checkpoint", checkpoint] + base) == 0
    assert main(["evaluate", "--checkpoint", checkpoint] + base) == 0
    assert main(["embed"] + base) == 0
    assert main(["sweep", "--temps", "0.07,1.0"] + base) == 0
    return read_json(out / MANIFEST_FILE)["commands"]


@pytest.mark.slow
def test_full_chain_reruns_byte_identical(tmp_path, config_file):
    out = tmp_path / "run"
    first = run_chain(out, config_file)
    for name in CHAIN_OUTPUTS:
        assert (out / name).is_file()
    assert sorted(first) == ["embed", "evaluate", "finetune", "generate", "pretrain", "sweep"]
    for entry in first.values():
        for relpath, digest in entry["artifacts"].items():
            assert sha256_file(out / relpath) == digest

    report = read_json(out / "report.json")[0]
    assert report["seed"] == 3
    assert sorted(report["per_organ_dice"]) == ["1", "2"]
    assert report["pretrain_loss"] and report["finetune_loss"]

    digests = {name: sha256_file(out / name) for name in CHAIN_OUTPUTS}
    second = run_chain(out, config_file)
    assert {name: sha256_file(out / name) for name in CHAIN_OUTPUTS} == digests
    for command, entry in first.items():
        assert second[command]["artifacts"] == entry["artifacts"]
        assert second[command]["config_hash"] == entry["config_hash"]


@pytest.mark.slow
def test_sweep_writes_one_row_per_temperature(tmp_path, config_file):
    out = tmp_path / "run"
    base = ["--config", str(config_file), "--out", str(out)]
    assert main(["generate"] + base) == 0
    assert main(["sweep", "--temps", "0.07"] + base) == 0
    lines = (out / "sweep.csv").read_text().splitlines()
    assert lines[0] == "T,seed,mean_dice"
    assert len(lines) == 2 and lines[1].startswith("0.07,3,")


def test_defaults_match_empty_config(monkeypatch):
    monkeypatch.delenv(OUTPUT_DIR_ENV, raising=False)
    monkeypatch.delenv(NUM_THREADS_ENV, raising=False)
    default = default_experiment_config()
    assert load_config() == default
    assert default.dataset.phases == ["NC", "CE"]
    assert default.loss.mode == "dcc"
