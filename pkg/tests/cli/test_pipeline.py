import json

import pytest

from main import main


@pytest.fixture
def run_dir(tmp_path):
    return tmp_path / "run"


def settings(run_dir, *extra):
    base = [
        f"output_dir={run_dir}",
        f"train_path={run_dir / 'train.tsv'}",
        f"test_path={run_dir / 'test.tsv'}",
        f"vocab_path={run_dir / 'vocab.json'}",
        f"checkpoint_path={run_dir / 'model.ckpt'}",
        "n_train=8",
        "n_test=3",
        "layers=1",
        "hidden=8",
        "heads=2",
        "max_positions=48",
        "max_target_length=12",
        "batch_size=4",
        "accumulation_epochs=0",
        "accumulation_steps=1",
        "learning_rate=0.001",
        "max_steps=2",
        "T=10",
        "steps=2",
        "ablation_steps=1,2",
        "progress=false",
    ]
    args = []
    for item in base + list(extra):
        args += ["--set", item]
    return args


def test_end_to_end(run_dir) -> None:
    pretrained = run_dir / "pretrained.ckpt"
    assert main(["gen-toy", *settings(run_dir)]) == 0
    assert main(["build-vocab", *settings(run_dir)]) == 0
    assert main(["pretrain", *settings(run_dir, f"checkpoint_path={pretrained}")]) == 0
    assert main(["train", *settings(run_dir, f"init_checkpoint={pretrained}")]) == 0
    assert main(["sample", *settings(run_dir)]) == 0
    assert main(["eval", *settings(run_dir)]) == 0
    assert main(["ablate-steps", *settings(run_dir)]) == 0

    assert len((run_dir / "train.tsv").read_text().splitlines()) == 9
    trace = [json.loads(line) for line in (run_dir / "trace.jsonl").read_text().splitlines()]
    assert [event["kind"] for event in trace] == ["loss", "loss", "checkpoint"]

    generated = (run_dir / "generated.smi").read_text().splitlines()
    assert len(generated) == 3
    report = json.loads((run_dir / "generated.report.json").read_text())
    assert report["n_total"] == 3
    assert 0.0 <= report["valid_fraction"] <= 1.0
    assert (run_dir / "generated.report.csv").exists()

    ablation = json.loads((run_dir / "ablation.json").read_text())
    assert [row["steps"] for row in ablation] == [1, 2]

    for command in ("gen-toy", "build-vocab", "pretrain", "train", "sample", "eval", "ablate-steps"):
        manifest = json.loads((run_dir / f"manifest.{command}.json").read_text())
        assert manifest["command"] == command


def test_multiple_seeds_write_one_file_each(run_dir) -> None:
    assert main(["gen-toy", *settings(run_dir)]) == 0
    assert main(["build-vocab", *settings(run_dir)]) == 0
    assert main(["train", *settings(run_dir, "max_steps=1")]) == 0
    assert main(["sample", *settings(run_dir, "seeds=1,2")]) == 0
    paths = [str(run_dir / "generated.seed1.smi"), str(run_dir / "generated.seed2.smi")]
    assert main(["eval", *settings(run_dir, "generated_paths=" + ",".join(paths))]) == 0
    summary = json.loads((run_dir / "seed_summary.json").read_text())
    assert set(summary) == {"valid_fraction", "exact_fraction", "morgan_fts_mean"}


def test_missing_inputs_exit_with_error(run_dir) -> None:
    assert main(["sample", *settings(run_dir)]) == 2
    assert main(["train", "--set", "bogus_key=1"]) == 2
