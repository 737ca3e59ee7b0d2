"""
Desk-scale runs of the full pipeline on the bundled models. Slow; deselect
with `-m "not slow"`.
"""

import pytest

from cpsgen.experiment import GENCLU, RANDOM, ExperimentConfig, ExperimentResult, bundled_models, run_experiment
from cpsgen.stats import median

pytestmark = pytest.mark.slow


@pytest.fixture(scope="module")
def trend_run(tmp_path_factory: pytest.TempPathFactory) -> ExperimentResult:
    config = ExperimentConfig(
        models=tuple(bundled_models()),
        generators=(RANDOM, GENCLU),
        sizes=(4, 16),
        repeats=20,
        master_seed=0,
        output=str(tmp_path_factory.mktemp("trends")),
    )
    return run_experiment(config)


def _scores(result: ExperimentResult, model: str, generator: str, size: int) -> list[float]:
    return [
        r.score
        for r in result.records
        if r.model == model and r.generator == generator and r.size == size
    ]


def test_every_model_keeps_enough_mutants(trend_run: ExperimentResult):
    rich = [name for name, prepared in trend_run.mutants.items() if len(prepared.mutants) >= 10]

    assert not trend_run.failures
    assert len(rich) >= 3


def test_genclu_beats_random_at_size_4(trend_run: ExperimentResult):
    for case in trend_run.cases:
        if case.size != 4:
            continue
        genclu = median(_scores(trend_run, case.model, GENCLU, 4))
        rand = median(_scores(trend_run, case.model, RANDOM, 4))

        assert genclu >= rand, case.model
        assert case.ranked.ranks[GENCLU] <= case.ranked.ranks[RANDOM], case.model


def test_genclu_scores_high_at_size_16(trend_run: ExperimentResult):
    for model in trend_run.mutants:
        assert median(_scores(trend_run, model, GENCLU, 16)) >= 0.9, model
