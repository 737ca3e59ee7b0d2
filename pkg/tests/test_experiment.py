import json
import os

import numpy as np
import pytest
from click.testing import CliRunner

from cpsgen import experiment
from cpsgen.__main__ import main
from cpsgen.antipatterns import GOAL_NAMES
from cpsgen.baselines import ODConfig
from cpsgen.errors import ConfigurationError, ContractError
from cpsgen.experiment import (
    GENCLU,
    GENERATORS,
    OD,
    RANDOM,
    RECORD_HEADER,
    ExperimentConfig,
    load_config,
    load_records,
    prepare_mutants,
    recompute,
    resolve_model,
    run_experiment,
)
from cpsgen.genclu import GenCluConfig
from cpsgen.signals import sample_test_case
from cpsgen.storage import Storage, StorageMaster, to_csv
from cpsgen.utils import WORKERS_ENV, derive_seed


@pytest.fixture(autouse=True)
def _no_worker_override(monkeypatch: pytest.MonkeyPatch):
    monkeypatch.delenv(WORKERS_ENV, raising=False)


def _small_config(output: str, workers: int = 1, **changes) -> ExperimentConfig:
    values = dict(
        models=("tiny_controller", "two_tanks"),
        generators=(RANDOM, GENCLU),
        sizes=(4,),
        repeats=2,
        master_seed=3,
        genclu=GenCluConfig(initial_samples=32),
        probes=30,
        output=output,
        workers=workers,
    )
    values.update(changes)
    return ExperimentConfig(**values)


def _read(path: str) -> str:
    with open(path, "r") as f:
        return f.read()


def test_config_defaults():
    config = ExperimentConfig.from_json({"models": ["tiny_controller"]})

    assert config.generators == GENERATORS
    assert config.sizes == (4, 16, 32)
    assert config.repeats == 20
    assert config.genclu.initial_samples == 256
    assert config.epicurus.iterations == 30
    assert config.od.plateau == 3


def test_config_nested_sections():
    config = ExperimentConfig.from_json(
        {"models": ["cruise"], "sizes": [4], "od": {"timeout": 30}, "genclu": {"initial_samples": 64}}
    )

    assert config.od.timeout == 30
    assert config.genclu.initial_samples == 64
    assert ExperimentConfig.from_json(config.to_json()) == config


@pytest.mark.parametrize(
    "data",
    [
        {},
        {"models": []},
        {"models": ["cruise"], "generators": ["annealing"]},
        {"models": ["cruise"], "sizes": [0]},
        {"models": ["cruise"], "repeats": 0},
        {"models": ["cruise"], "colour": "blue"},
        {"models": ["cruise"], "od": {"patience": 3}},
        {"models": ["cruise"], "sum_count_mode": "loose"},
    ],
)
def test_config_validation(data):
    with pytest.raises(ConfigurationError):
        ExperimentConfig.from_json(data)


def test_load_config(tmp_path):
    path = tmp_path / "config.json"
    path.write_text(json.dumps({"models": ["window"], "repeats": 3}))
    assert load_config(str(path)).repeats == 3

    path.write_text("[1, 2")
    with pytest.raises(ConfigurationError):
        load_config(str(path))


def test_resolve_model(tmp_path):
    assert resolve_model("cruise").endswith(os.path.join("models", "cruise.json"))
    with pytest.raises(ConfigurationError):
        resolve_model(str(tmp_path / "missing.json"))


def test_prepare_mutants(tmp_path):
    storage = Storage(StorageMaster(str(tmp_path)), "mutants")
    prepared = prepare_mutants(resolve_model("tiny_controller"), 5, storage, probes=30)
    stats = prepared.stats

    assert storage.exists("tiny_controller.json")
    assert not storage.exists("tiny_controller.warning.txt")
    assert stats["filtered"] == len(prepared.mutants) > 0
    assert stats["percentage"] == round(stats["filtered"] / stats["original"], 3)
    assert stats["seed"] == 5

    again = prepare_mutants(resolve_model("tiny_controller"), 5, probes=30)
    assert again.mutants == prepared.mutants

    stored = storage.load_json("tiny_controller.json")
    assert [m["id"] for m in stored["mutants"]] == [m.id for m in prepared.mutants]

    kills = storage.load_csv("tiny_controller.kills.csv")
    assert kills is not None and len(kills) == 30
    assert len(kills[0]) == 1 + stats["original"]
    assert set(kills[0]) - {"test"} == {f"m{i:04d}" for i in range(1, stats["original"] + 1)}


@pytest.mark.parametrize("name", ["two_tanks", "clutch"])
def test_plant_models_keep_mutants_after_filtering(name: str):
    stats = prepare_mutants(resolve_model(name), 0).stats

    assert stats["filtered"] >= 3
    assert stats["killed_by_all"] < stats["original"] // 2


def test_small_experiment(tmp_path):
    out = str(tmp_path / "run")
    result = run_experiment(_small_config(out))
    models_ok = 2 - len(result.failures)

    assert len(result.records) == 2 * 1 * 2 * models_ok
    for name in ("records.csv", "timings.csv", "summary.md", "ranks.csv", "config.json"):
        assert os.path.exists(os.path.join(out, name))
    assert os.path.exists(os.path.join(out, "mutants", "tiny_controller.json"))

    for record in result.records:
        assert 0.0 <= record.score <= 1.0
        if record.generator == GENCLU:
            # 32 samples split down to leaves of 4
            if record.model == "tiny_controller":
                assert record.simulations == 8
        else:
            assert record.simulations == 0

    summary = _read(os.path.join(out, "summary.md"))
    assert "## tiny_controller, suite size 4" in summary
    assert "## Best-rank wins" in summary


def test_experiment_is_deterministic(tmp_path):
    first = run_experiment(_small_config(str(tmp_path / "a"), workers=1))
    second = run_experiment(_small_config(str(tmp_path / "b"), workers=2))

    assert _read(str(tmp_path / "a" / "records.csv")) == _read(str(tmp_path / "b" / "records.csv"))
    assert _read(str(tmp_path / "a" / "ranks.csv")) == _read(str(tmp_path / "b" / "ranks.csv"))
    assert [r.score for r in first.records] == [r.score for r in second.records]


def test_ranks_can_be_recomputed_from_records(tmp_path):
    out = tmp_path / "run"
    run_experiment(_small_config(str(out)))

    records = load_records(_read(str(out / "records.csv")), _read(str(out / "timings.csv")))
    summary, ranks = recompute(records, timed=True)

    assert ranks == _read(str(out / "ranks.csv"))
    assert "faster than EPIcuRus" in summary
    for record in records:
        assert record.total_time >= 0.0


def test_missing_model_is_a_failure(tmp_path):
    config = _small_config(str(tmp_path), models=("tiny_controller", "no_such_model"), repeats=1)
    result = run_experiment(config)

    assert "no_such_model" in result.failures
    assert {r.model for r in result.records} == {"tiny_controller"}
    assert "no_such_model" in _read(str(tmp_path / "summary.md"))


def test_failing_suite_is_recorded_and_the_run_continues(tmp_path, monkeypatch):
    broken = derive_seed(3, "tiny_controller", GENCLU, 4, 0)
    real = experiment.generate

    def flaky(generator, graph, size, seed, config, simulator):
        if seed == broken:
            raise ContractError("simulation diverged")
        return real(generator, graph, size, seed, config, simulator)

    monkeypatch.setattr("cpsgen.experiment.generate", flaky)
    result = run_experiment(_small_config(str(tmp_path), models=("tiny_controller",)))

    assert result.failures == {"tiny_controller genclu k=4 #0": "simulation diverged"}
    assert sorted((r.generator, r.repeat) for r in result.records) == [(GENCLU, 1), (RANDOM, 0), (RANDOM, 1)]
    assert "tiny_controller genclu k=4 #0: simulation diverged" in _read(str(tmp_path / "summary.md"))


def test_od_is_skipped_on_constant_input_models(tmp_path):
    config = _small_config(
        str(tmp_path),
        generators=(RANDOM, OD),
        repeats=1,
        od=ODConfig(timeout=2.0),
    )
    result = run_experiment(config)

    assert not [r for r in result.records if r.model == "two_tanks" and r.generator == OD]
    assert [r for r in result.records if r.model == "tiny_controller" and r.generator == OD]


@pytest.fixture
def runner() -> CliRunner:
    return CliRunner()


def test_cli_simulate(runner, tmp_path, tiny):
    test = sample_test_case(tiny.inports, np.random.default_rng(0))
    path = tmp_path / "test.json"
    path.write_text(json.dumps(test.to_json()))

    result = runner.invoke(main, ["simulate", "tiny_controller", str(path)])
    data = json.loads(result.stdout)

    assert result.exit_code == 0
    assert len(data["outputs"]["u"]) == tiny.k + 1
    assert set(data["goals"]["u"]) == set(GOAL_NAMES)
    assert all(":" in item for item in data["coverage"])
    assert data["fault_step"] is None


def test_cli_generate_and_score(runner, tmp_path):
    out = str(tmp_path)
    prepared = runner.invoke(main, ["mutants", "prepare", "tiny_controller", "-n", "20", "-o", out])
    assert prepared.exit_code == 0
    assert prepared.stdout.startswith("tiny_controller: ")
    mutant_file = os.path.join(out, "mutants", "tiny_controller.json")
    assert os.path.exists(mutant_file)

    suite_file = str(tmp_path / "suite.json")
    generated = runner.invoke(
        main, ["generate", "tiny_controller", "-a", "random", "-k", "3", "-s", "1", "-o", suite_file]
    )
    assert generated.exit_code == 0
    data = json.loads(_read(suite_file))
    assert data["generator"] == "random"
    assert len(data["suite"]) == 3
    assert data["budget"]["seed"] == 1

    scored = runner.invoke(main, ["score", "tiny_controller", suite_file, "-m", mutant_file])
    assert scored.exit_code == 0
    assert 0.0 <= float(scored.stdout) <= 1.0


def test_cli_generate_epicurus_reports_ranges(runner):
    result = runner.invoke(main, ["generate", "cruise", "-a", "epicurus", "-k", "2"])
    data = json.loads(result.stdout)

    assert result.exit_code == 0
    assert data["budget"]["simulations"] == 60
    assert set(data["ranges"]) == {item["name"] for item in data["suite"][0]["inputs"]}


def test_cli_stats(runner, tmp_path):
    rows = [
        ["m", gen, 4, repeat, 0, repr(score), 0, 10]
        for gen, scores in (("random", [0.2, 0.25, 0.3]), ("genclu", [0.9, 0.95, 1.0]))
        for repeat, score in enumerate(scores)
    ]
    records = tmp_path / "records.csv"
    records.write_text(to_csv(RECORD_HEADER, rows))
    ranks = tmp_path / "ranks.csv"

    result = runner.invoke(main, ["stats", str(records), "-r", str(ranks)])

    assert result.exit_code == 0
    assert "| genclu | 0.950 | 0.050 | 1 |" in result.stdout
    assert "| random | 0.250 | 0.050 | 2 |" in result.stdout
    assert "faster than" not in result.stdout
    assert ranks.read_text().splitlines()[0] == "model,size,group,median,iqr,rank"


def test_cli_experiment(runner, tmp_path):
    config = tmp_path / "config.json"
    config.write_text(
        json.dumps(
            {
                "models": ["tiny_controller"],
                "generators": ["random"],
                "sizes": [2],
                "repeats": 2,
                "probes": 10,
                "output": str(tmp_path / "out"),
                "workers": 1,
            }
        )
    )

    result = runner.invoke(main, ["experiment", str(config)])

    assert result.exit_code == 0
    assert result.stdout.strip() == "2 records written"


def test_cli_reports_errors(runner):
    result = runner.invoke(main, ["generate", "no_such_model"])

    assert result.exit_code == 1
    assert "no_such_model" in result.stderr
