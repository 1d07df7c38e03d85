import json
import math

import numpy as np
import pytest
from click.testing import CliRunner

from dialog_hmm import __version__
from dialog_hmm.main import cli
from dialog_hmm.models.hmm import StateSpace, uniform_model
from dialog_hmm.services.dialog_simulator import default_domain
from dialog_hmm.storage.storage_service import StorageService

storage = StorageService()


@pytest.fixture
def runner():
    return CliRunner(mix_stderr=False)


@pytest.fixture
def domain_file(tmp_path):
    return storage.save_domain(default_domain(), tmp_path / "domain.json")


@pytest.fixture
def clean_domain_file(tmp_path):
    return storage.save_domain(default_domain(error_rate=0.0), tmp_path / "clean_domain.json")


@pytest.fixture
def corpus_file(runner, tmp_path, domain_file):
    path = tmp_path / "corpus.jsonl"
    result = runner.invoke(cli, ["generate", str(domain_file), "--dialogs", "30", "--seed", "5", "--out", str(path)])
    assert result.exit_code == 0, result.stderr
    return path


def invoke(runner, *args):
    return runner.invoke(cli, [str(arg) for arg in args])


def metrics(result):
    return json.loads(result.stdout)


def test_version(runner):
    result = invoke(runner, "--version")
    assert result.exit_code == 0
    assert __version__ in result.stdout


class TestGenerate:

    def test_writes_one_line_per_dialog(self, runner, tmp_path, domain_file):
        out = tmp_path / "corpus.jsonl"
        result = invoke(runner, "generate", domain_file, "--dialogs", 100, "--out", out)
        assert result.exit_code == 0, result.stderr
        assert len(out.read_text().splitlines()) == 100
        assert metrics(result)["dialogs"] == 100

    def test_byte_identical_reruns(self, runner, tmp_path, domain_file):
        first, second = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        results = [
            invoke(runner, "generate", domain_file, "--dialogs", 40, "--seed", 9, "--out", path)
            for path in (first, second)
        ]
        assert first.read_bytes() == second.read_bytes()
        assert results[0].stdout == results[1].stdout

    def test_malformed_domain(self, runner, tmp_path):
        document = storage.domain_to_dict(default_domain())
        del document["confusion"]
        path = tmp_path / "domain.json"
        path.write_text(json.dumps(document))
        result = invoke(runner, "generate", path, "--out", tmp_path / "c.jsonl")
        assert result.exit_code == 2
        assert "confusion" in result.stderr

    def test_usage_error(self, runner, tmp_path, domain_file):
        result = invoke(runner, "generate", domain_file, "--dialogs", 0, "--out", tmp_path / "c.jsonl")
        assert result.exit_code == 2


class TestTrain:

    def test_em_trace(self, runner, tmp_path, corpus_file):
        trace, report = tmp_path / "trace.csv", tmp_path / "report.json"
        result = invoke(
            runner, "train", "em", corpus_file, "--states", 4, "--max-iterations", 5,
            "--seed", 3, "--out", tmp_path / "model.json", "--trace", trace, "--report", report,
        )
        assert result.exit_code == 0, result.stderr
        lines = trace.read_text().splitlines()
        assert lines[0] == "iteration,log_likelihood,elbo_at_previous,delta"
        assert 1 <= len(lines) - 1 <= 5
        values = [float(line.split(",")[1]) for line in lines[1:]]
        assert all(b >= a - 1e-10 for a, b in zip(values, values[1:]))
        assert metrics(result)["iterations"] == len(values)
        assert json.loads(report.read_text())["final_log_likelihood"] == values[-1]

    def test_manual_equals_automatic_on_noiseless_corpus(self, runner, tmp_path, clean_domain_file):
        corpus = tmp_path / "clean.jsonl"
        invoke(runner, "generate", clean_domain_file, "--dialogs", 50, "--out", corpus)
        models = []
        for condition in ("manual", "automatic"):
            out = tmp_path / f"{condition}.json"
            result = invoke(runner, "train", condition, corpus, "--states", 4, "--out", out)
            assert result.exit_code == 0, result.stderr
            models.append(out.read_bytes())
        assert models[0] == models[1]

    def test_missing_corpus(self, runner, tmp_path):
        result = invoke(runner, "train", "em", tmp_path / "absent.jsonl", "--states", 2, "--out", tmp_path / "m.json")
        assert result.exit_code == 2

    def test_unknown_condition(self, runner, tmp_path, corpus_file):
        result = invoke(runner, "train", "oracle", corpus_file, "--states", 4, "--out", tmp_path / "m.json")
        assert result.exit_code == 2

    def test_unvisited_state_without_smoothing(self, runner, tmp_path):
        corpus = tmp_path / "corpus.jsonl"
        corpus.write_text('{"true_states": [0, 0, 0], "observed": [0, 1, 0]}\n')
        result = invoke(
            runner, "train", "manual", corpus, "--states", 2, "--smoothing", 0, "--out", tmp_path / "m.json",
        )
        assert result.exit_code == 3
        assert "smoothing_epsilon" in result.stderr


class TestEval:

    def test_uniform_model(self, runner, tmp_path, corpus_file):
        model = storage.save_model(uniform_model(StateSpace(4, 4)), tmp_path / "uniform.json")
        result = invoke(runner, "eval", model, corpus_file)
        assert result.exit_code == 0, result.stderr
        assert metrics(result)["normalized_log_likelihood"] == pytest.approx(-math.log(4), abs=1e-12)
        assert metrics(result)["infinite_dialogs"] == 0

    def test_generating_model_on_own_corpus(self, runner, tmp_path, corpus_file):
        model = storage.save_model(default_domain().generating_model, tmp_path / "true.json")
        output = metrics(invoke(runner, "eval", model, corpus_file))
        assert math.isfinite(output["normalized_log_likelihood"])
        assert output["infinite_dialogs"] == 0

    def test_zero_emission_symbol(self, runner, tmp_path, corpus_file):
        emission = np.zeros((4, 4))
        emission[:, 0] = 1.0
        blind = uniform_model(StateSpace(4, 4)).replace(emission=emission)
        model = storage.save_model(blind, tmp_path / "blind.json")
        result = invoke(runner, "eval", model, corpus_file)
        assert result.exit_code == 0
        output = metrics(result)
        assert output["normalized_log_likelihood"] == float("-inf")
        assert output["infinite_dialogs"] > 0

    def test_dimension_mismatch(self, runner, tmp_path, corpus_file, golden_model):
        model = storage.save_model(golden_model, tmp_path / "small.json")
        result = invoke(runner, "eval", model, corpus_file)
        assert result.exit_code == 2


class TestDecode:

    def test_golden_path(self, runner, tmp_path, golden_model):
        model = storage.save_model(golden_model, tmp_path / "model.json")
        corpus = tmp_path / "corpus.jsonl"
        corpus.write_text('{"true_states": [0, 1], "observed": [0, 1]}\n')
        out = tmp_path / "paths.jsonl"
        result = invoke(runner, "decode", model, corpus, "--out", out)
        assert result.exit_code == 0, result.stderr
        [line] = out.read_text().splitlines()
        document = json.loads(line)
        assert document["path"] == [0, 1]
        assert document["log_probability"] == pytest.approx(math.log(0.108), abs=1e-12)

    def test_identity_channel_paths(self, runner, tmp_path, clean_domain_file):
        corpus, out = tmp_path / "clean.jsonl", tmp_path / "paths.jsonl"
        invoke(runner, "generate", clean_domain_file, "--dialogs", 10, "--out", corpus)
        model = storage.save_model(default_domain(error_rate=0.0).generating_model, tmp_path / "m.json")
        assert invoke(runner, "decode", model, corpus, "--out", out).exit_code == 0
        decoded = [json.loads(line)["path"] for line in out.read_text().splitlines()]
        observed = [json.loads(line)["observed"] for line in corpus.read_text().splitlines()]
        assert decoded == observed

    def test_empty_corpus(self, runner, tmp_path, golden_model):
        model = storage.save_model(golden_model, tmp_path / "model.json")
        corpus, out = tmp_path / "empty.jsonl", tmp_path / "paths.jsonl"
        corpus.write_text("")
        result = invoke(runner, "decode", model, corpus, "--out", out)
        assert result.exit_code == 0
        assert out.read_text() == ""
        assert metrics(result)["dialogs"] == 0

    def test_impossible_dialog_gets_null_path(self, runner, tmp_path):
        emission = np.zeros((2, 2))
        emission[:, 0] = 1.0
        model = storage.save_model(uniform_model(StateSpace(2, 2)).replace(emission=emission), tmp_path / "m.json")
        corpus, out = tmp_path / "corpus.jsonl", tmp_path / "paths.jsonl"
        corpus.write_text('{"true_states": [0, 1], "observed": [0, 1]}\n')
        assert invoke(runner, "decode", model, corpus, "--out", out).exit_code == 0
        assert json.loads(out.read_text()) == {"path": None, "log_probability": None}

    def test_malformed_corpus_line(self, runner, tmp_path, golden_model):
        model = storage.save_model(golden_model, tmp_path / "model.json")
        corpus = tmp_path / "corpus.jsonl"
        corpus.write_text('{"true_states": [0, 1], "observed": [0, 1]}\n{"observed": [0,\n')
        result = invoke(runner, "decode", model, corpus, "--out", tmp_path / "paths.jsonl")
        assert result.exit_code == 2
        assert ":2" in result.stderr

    def test_missing_model(self, runner, tmp_path, corpus_file):
        result = invoke(runner, "decode", tmp_path / "absent.json", corpus_file, "--out", tmp_path / "p.jsonl")
        assert result.exit_code == 2

    def test_symbol_out_of_range_for_model(self, runner, tmp_path, golden_model):
        model = storage.save_model(golden_model, tmp_path / "model.json")
        corpus = tmp_path / "corpus.jsonl"
        corpus.write_text('{"true_states": [0, 1], "observed": [0, 3]}\n')
        result = invoke(runner, "decode", model, corpus, "--out", tmp_path / "paths.jsonl")
        assert result.exit_code == 2


class TestTrack:

    def test_ranked_hypotheses(self, runner, tmp_path, golden_model):
        model = storage.save_model(golden_model, tmp_path / "model.json")
        corpus, out = tmp_path / "corpus.jsonl", tmp_path / "beliefs.jsonl"
        corpus.write_text('{"true_states": [0, 1], "observed": [0, 1]}\n')
        result = invoke(runner, "track", model, corpus, "--out", out, "--top-k", 1)
        assert result.exit_code == 0, result.stderr
        beliefs = json.loads(out.read_text())["beliefs"]
        assert len(beliefs) == 2
        [[label, probability]] = beliefs[0]
        assert label == "0"
        assert probability == pytest.approx(0.45 / 0.55, rel=1e-12)

    def test_malformed_corpus_line(self, runner, tmp_path, golden_model):
        model = storage.save_model(golden_model, tmp_path / "model.json")
        corpus = tmp_path / "corpus.jsonl"
        corpus.write_text('{"true_states": [0, 1], "observed": "01"}\n')
        result = invoke(runner, "track", model, corpus, "--out", tmp_path / "beliefs.jsonl")
        assert result.exit_code == 2
        assert "observed" in result.stderr

    def test_missing_model(self, runner, tmp_path, corpus_file):
        result = invoke(runner, "track", tmp_path / "absent.json", corpus_file, "--out", tmp_path / "b.jsonl")
        assert result.exit_code == 2


class TestCurve:

    CURVE_HEADER = "condition,train_dialogs,seed,normalized_log_likelihood,tracking_accuracy,error"

    @pytest.fixture
    def config_file(self, tmp_path, domain_file):
        path = tmp_path / "experiment.json"
        path.write_text(json.dumps({
            "domain": domain_file.name,
            "training_sizes": [10, 100],
            "experiment_seeds": [0, 1],
            "heldout_dialogs": 20,
            "em_restarts": 1,
            "training": {"max_iterations": 5},
            "output_dir": "results",
        }))
        return path

    def test_writes_twelve_rows(self, runner, tmp_path, config_file):
        result = invoke(runner, "curve", config_file)
        assert result.exit_code == 0, result.stderr
        lines = (tmp_path / "results" / "learning_curve.csv").read_text().splitlines()
        assert lines[0] == self.CURVE_HEADER
        assert len(lines) == 13
        assert [line.split(",")[0] for line in lines[1:]] == ["automatic"] * 4 + ["em"] * 4 + ["manual"] * 4
        assert (tmp_path / "results" / "learning_curve_summary.csv").exists()
        assert metrics(result)["rows"] == 12

    def test_identical_reruns(self, runner, tmp_path, config_file):
        invoke(runner, "curve", config_file, "--out", tmp_path / "first")
        invoke(runner, "curve", config_file, "--out", tmp_path / "second", "--workers", 3)
        for name in ("learning_curve.csv", "learning_curve_summary.csv"):
            assert (tmp_path / "first" / name).read_bytes() == (tmp_path / "second" / name).read_bytes()

    def test_invalid_config(self, runner, tmp_path):
        path = tmp_path / "experiment.json"
        path.write_text(json.dumps({"domain": "d.json", "training_sizes": [5, 5], "experiment_seeds": [0]}))
        result = invoke(runner, "curve", path)
        assert result.exit_code == 2
        assert "training_sizes" in result.stderr
