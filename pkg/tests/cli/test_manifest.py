import json
from datetime import datetime, timezone

from app import __version__
from app.cli.config import load_config
from app.cli.manifest import file_digest, write_manifest


def test_manifest_records_config_and_inputs(tmp_path) -> None:
    data = tmp_path / "train.tsv"
    data.write_text("id\tsmiles\tdescription\n1\tC\tmethane\n")
    config = load_config(overrides=[f"output_dir={tmp_path / 'run'}", "seed=7"])
    path = write_manifest("train", config, [data, None, tmp_path / "missing.tsv"], {"steps_completed": 3})
    assert path.name == "manifest.train.json"
    manifest = json.loads(path.read_text())
    assert manifest["version"] == __version__
    assert manifest["seed"] == 7
    assert manifest["config"]["seed"] == 7
    assert manifest["inputs"] == {str(data): file_digest(data)}
    assert manifest["steps_completed"] == 3
    assert len(file_digest(data)) == 64
    assert datetime.fromisoformat(manifest["created_at"]).tzinfo == timezone.utc
