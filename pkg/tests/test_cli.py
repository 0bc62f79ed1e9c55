"""Tests de bout en bout de la CLI run_experiments."""

import json

import pytest

from models.corpus_records import Split
from scripts.run_experiments import main
from utils.corpus import load
from utils.jsonUtils import JsonUtils


def write_config(tmp_path, payload, name="run.json"):
    path = tmp_path / name
    path.write_text(json.dumps(payload), encoding="utf-8")
    return path


@pytest.fixture
def tiny_run(tmp_path, tiny_family):
    """Configuration zéro-shot minimale sur la famille synthétique a/b/c."""
    return {
        "experiment_name": "mini",
        "experiment": "zero_shot",
        "variant": "hatemaml",
        "languages": {"source": "a", "auxiliary": ["b"], "target": ["c"]},
        "synth": tiny_family.model_dump(mode="json"),
        "featurizer": {"n_features": 256},
        "model": {"hidden_size": 4},
        "base": {"epochs": 2, "lr": 0.5, "batch_size": 8},
        "meta": {"alpha": 0.1, "beta": 0.1, "tasks_per_batch": 2, "max_meta_steps": 3},
        "episodes": {"k_shot": 4, "l_shot": 4},
        "seeds": [1],
        "n_jobs": 1,
    }


class TestExitCodes:

    def test_invalid_config_exits_2(self, tmp_path):
        path = write_config(tmp_path, {"experiment": "zero_shot", "languages": {"source": "en", "target": ["ar"]}})
        assert main(["meta-train", "--config", str(path)]) == 2

    def test_missing_config_exits_2(self, tmp_path):
        assert main(["train-base", "--config", str(tmp_path / "absent.json")]) == 2

    def test_bad_corpus_exits_3(self, tmp_path):
        corpus = tmp_path / "corpus.jsonl"
        corpus.write_text(
            json.dumps({"id": "1", "text": "x", "label": 2, "language": "en", "split": "train"}) + "\n",
            encoding="utf-8",
        )
        path = write_config(tmp_path, {
            "languages": {"source": "en", "auxiliary": ["tr"], "target": ["ar"]},
            "corpus_path": str(corpus),
            "output_dir": str(tmp_path / "out"),
        })
        assert main(["train-base", "--config", str(path)]) == 3

    def test_missing_base_model_exits_3(self, tmp_path, tiny_run):
        path = write_config(tmp_path, dict(tiny_run, output_dir=str(tmp_path / "empty")))
        assert main(["meta-train", "--config", str(path)]) == 3

    def test_missing_auxiliary_data_exits_3(self, tmp_path, tiny_run):
        payload = dict(tiny_run, languages={"source": "a", "auxiliary": ["zz"], "target": ["c"]})
        path = write_config(tmp_path, dict(payload, output_dir=str(tmp_path / "out")))
        assert main(["meta-train", "--config", str(path)]) == 3


class TestCommands:

    def test_report_on_empty_directory_is_header_only(self, tmp_path):
        path = write_config(tmp_path, {
            "languages": {"source": "en", "auxiliary": ["tr"], "target": ["ar"]},
            "output_dir": str(tmp_path / "runs"),
        })
        assert main(["report", "--config", str(path)]) == 0
        assert (tmp_path / "runs" / "summary.csv").read_text(encoding="utf-8") == "experiment,variant,AVG\n"

    def test_synth_twice_is_byte_identical(self, tmp_path, tiny_run):
        path = write_config(tmp_path, tiny_run)
        assert main(["synth", "--config", str(path), "--out", str(tmp_path / "first")]) == 0
        assert main(["synth", "--config", str(path), "--out", str(tmp_path / "second")]) == 0
        first = (tmp_path / "first" / "corpus.jsonl").read_bytes()
        assert first == (tmp_path / "second" / "corpus.jsonl").read_bytes()
        assert len(load(tmp_path / "first" / "corpus.jsonl").select("b", Split.TRAIN)) == 40

    def test_train_base_is_deterministic(self, tmp_path, tiny_run):
        path = write_config(tmp_path, tiny_run)
        assert main(["train-base", "--config", str(path), "--out", str(tmp_path / "one")]) == 0
        assert main(["train-base", "--config", str(path), "--out", str(tmp_path / "two")]) == 0
        params = [(tmp_path / run / "base" / "seed_1" / "params.txt").read_bytes() for run in ("one", "two")]
        assert params[0] == params[1]

        metrics = JsonUtils(tmp_path / "one" / "metrics" / "mini__base.metrics.jsonl").read_records()
        assert sorted(record["language"] for record in metrics) == ["a", "c"]
        assert (tmp_path / "one" / "report.md").exists()
        assert (tmp_path / "one" / "run.json").exists()

    def test_meta_train_after_train_base(self, tmp_path, tiny_run):
        path = write_config(tmp_path, dict(tiny_run, output_dir=str(tmp_path / "run")))
        assert main(["train-base", "--config", str(path)]) == 0
        assert main(["meta-train", "--config", str(path)]) == 0

        workdir = tmp_path / "run" / "seed_1" / "mini__hatemaml"
        assert len(JsonUtils(workdir / "training_log.jsonl").read_records()) == 3
        episodes = JsonUtils(workdir / "episodes.jsonl").read_records()
        assert len(episodes) >= 6
        assert {record["pass"] for record in episodes} == {0}
        assert all(len(record["support"]) == 4 for record in episodes)
        provenance = JsonUtils(workdir / "model" / "provenance.json").read_document()
        assert provenance["variant"] == "hatemaml"
        assert provenance["steps"] == 3

        assert main(["report", "--config", str(path)]) == 0
        summary = (tmp_path / "run" / "summary.csv").read_text(encoding="utf-8").splitlines()
        assert summary[0] == "experiment,variant,a,c,AVG"
        assert [line.split(",")[1] for line in summary[1:]] == ["base", "hatemaml"]

    def test_finetune_baseline(self, tmp_path, tiny_run):
        payload = dict(tiny_run, variant="finetune", output_dir=str(tmp_path / "run"), finetune={"epochs": 1})
        path = write_config(tmp_path, payload)
        assert main(["train-base", "--config", str(path)]) == 0
        assert main(["meta-train", "--config", str(path)]) == 0
        provenance = JsonUtils(tmp_path / "run" / "seed_1" / "mini__finetune" / "model" / "provenance.json").read_document()
        assert provenance["variant"] == "finetune"
