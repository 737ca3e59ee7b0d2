import json
import os
import sys
import typing as t

import click
import numpy as np

from .model import ModelGraph, load_model_file
from .utils import enable_log, log


def _fail(e: Exception) -> t.NoReturn:
    raise click.ClickException(str(e)) from e


def _load_graph(model: str) -> ModelGraph:
    from .experiment import resolve_model

    try:
        return load_model_file(resolve_model(model))
    except (ValueError, OSError) as e:
        _fail(e)


def _read_json(path: str) -> t.Any:
    try:
        with open(path, "r") as f:
            return json.load(f)
    except (ValueError, OSError) as e:
        _fail(e)


def _emit(data: t.Any, output: str | None):
    text = json.dumps(data, indent=2, sort_keys=True) + "\n"
    if output is None:
        sys.stdout.write(text)
    else:
        with open(output, "w") as f:
            f.write(text)
        log("log", f"wrote {output}")


@click.group()
@click.option("--log", "-L", default="", help="Log channels to enable (comma separated, or all).")
def main(log: str):
    for item in log.split(","):
        enable_log(item)


@main.command()
@click.argument("model")
@click.argument("testcase", type=click.Path(exists=True, dir_okay=False))
@click.option("--rate", is_flag=True, help="Divide discontinuity by the window length.")
def simulate(model: str, testcase: str, rate: bool):
    """Simulate one test case and print outputs, coverage and goals."""
    from .antipatterns import GOAL_NAMES, goal_vector
    from .model import Simulator
    from .signals import TestCase

    graph = _load_graph(model)
    try:
        trace = Simulator(graph).trace(TestCase.from_json(_read_json(testcase)))
        goals = goal_vector(trace, rate)
    except (ValueError, KeyError) as e:
        _fail(e)

    per_output = len(GOAL_NAMES)
    _emit(
        {
            "model": graph.name,
            "outputs": {
                name: [float(v) for v in sig.values]
                for name, sig in zip(graph.outports, trace.outputs)
            },
            "coverage": sorted(f"{block}:{tag}" for block, tag in trace.coverage),
            "fault_step": trace.fault_step,
            "goals": {
                name: dict(zip(GOAL_NAMES, goals.values[i * per_output : (i + 1) * per_output]))
                for i, name in enumerate(graph.outports)
            },
        },
        None,
    )


@main.group()
def mutants():
    """Mutant enumeration and filtering."""


@mutants.command()
@click.argument("model")
@click.option("--seed", "-s", default=0, help="Seed for the filter probes.")
@click.option("--probes", "-n", default=200, help="Number of random probe tests.")
@click.option(
    "--mode",
    type=click.Choice(["inclusive", "strict"]),
    default="inclusive",
    help="Whether Sum sign-vector mutants include the original vector.",
)
@click.option("--output", "-o", default="results", help="Output directory.")
def prepare(model: str, seed: int, probes: int, mode: str, output: str):
    """Enumerate and filter mutants, writing mutants/<model>.json."""
    from .experiment import prepare_mutants, resolve_model
    from .storage import Storage, StorageMaster

    try:
        storage = Storage(StorageMaster(output), "mutants")
        prepared = prepare_mutants(resolve_model(model), seed, storage, probes, mode)
    except (ValueError, OSError) as e:
        _fail(e)

    stats = prepared.stats
    click.echo(
        f"{prepared.model}: {stats['original']} -> {stats['filtered']} "
        f"({stats['percentage']:.0%})"
    )


@main.command()
@click.argument("model")
@click.option(
    "--algo",
    "-a",
    type=click.Choice(["random", "epicurus", "od", "genclu"]),
    default="genclu",
    help="The generator.",
)
@click.option("--size", "-k", default=4, help="Suite size.")
@click.option("--seed", "-s", default=0, help="Random seed.")
@click.option("--timeout", default=600.0, help="OD search timeout (simulated seconds).")
@click.option("--output", "-o", default=None, help="Write the suite here instead of stdout.")
def generate(model: str, algo: str, size: int, seed: int, timeout: float, output: str | None):
    """Generate a test suite."""
    from .baselines import EpicurusConfig, ODConfig, epicurus_suite, od_suite, random_suite
    from .genclu import GenCluConfig, generate_suite
    from .model import Budget, Simulator

    graph = _load_graph(model)
    simulator = Simulator(graph)
    rng = np.random.default_rng(seed)
    extra: dict[str, t.Any] = {}

    try:
        if algo == "random":
            suite = random_suite(graph.inports, size, rng)
            budget = Budget(simulations=0, seed=seed)
        elif algo == "genclu":
            clustered = generate_suite(graph, GenCluConfig(enough=size, seed=seed), simulator, rng)
            suite, budget = clustered.suite, clustered.budget
        elif algo == "epicurus":
            narrowed = epicurus_suite(graph, size, EpicurusConfig(), simulator, rng)
            suite, budget = narrowed.suite, narrowed.budget
            extra["ranges"] = narrowed.ranges.to_json()
        else:
            searched = od_suite(graph, size, ODConfig(timeout=timeout), simulator, rng)
            suite, budget = searched.suite, searched.budget
    except ValueError as e:
        _fail(e)

    budget.seed = seed
    log("gen", f"{graph.name} {algo}: {budget.simulations} simulations")
    _emit(
        {
            "model": graph.name,
            "generator": algo,
            "suite": suite.to_json(),
            "budget": budget.to_json(),
            **extra,
        },
        output,
    )


@main.command()
@click.argument("model")
@click.argument("suite", type=click.Path(exists=True, dir_okay=False))
@click.option(
    "--mutants",
    "-m",
    "mutant_file",
    default=None,
    help="Prepared mutants JSON (default: filter afresh with --seed).",
)
@click.option("--seed", "-s", default=0, help="Seed for filtering when no mutant file is given.")
def score(model: str, suite: str, mutant_file: str | None, seed: int):
    """Mutation score of a suite against the model's filtered mutants."""
    from .experiment import PreparedMutants, prepare_mutants, resolve_model
    from .mutation import mutation_score
    from .signals import TestSuite

    graph = _load_graph(model)
    data = _read_json(suite)
    try:
        tests = TestSuite.from_json(data["suite"] if isinstance(data, dict) else data)
        if mutant_file is not None:
            prepared = PreparedMutants.from_json(_read_json(mutant_file))
        else:
            prepared = prepare_mutants(resolve_model(model), seed)
        value = mutation_score(tests, graph, prepared.mutants)
    except (ValueError, KeyError) as e:
        _fail(e)

    click.echo(f"{value:.4f}")


@main.command()
@click.argument("config", type=click.Path(exists=True, dir_okay=False))
def experiment(config: str):
    """Run a batch experiment described by a JSON configuration."""
    from .experiment import load_config, run_experiment

    try:
        result = run_experiment(load_config(config))
    except ValueError as e:
        _fail(e)

    for model, reason in result.failures.items():
        log("err", f"{model}: {reason}")
    click.echo(f"{len(result.records)} records written")


@main.command()
@click.argument("records", type=click.Path(exists=True, dir_okay=False))
@click.option("--timings", "-t", default=None, help="timings.csv (default: next to records).")
@click.option("--ranks", "-r", default=None, help="Also write ranks.csv here.")
def stats(records: str, timings: str | None, ranks: str | None):
    """Recompute medians, IQRs and ranks from a records.csv."""
    from .experiment import load_records, recompute

    if timings is None:
        candidate = os.path.join(os.path.dirname(records), "timings.csv")
        timings = candidate if os.path.exists(candidate) else None

    try:
        with open(records, "r") as f:
            text = f.read()
        timing_text = None
        if timings is not None:
            with open(timings, "r") as f:
                timing_text = f.read()
        summary, table = recompute(load_records(text, timing_text), timing_text is not None)
    except (ValueError, KeyError, OSError) as e:
        _fail(e)

    if ranks is not None:
        with open(ranks, "w", newline="") as f:
            f.write(table)
    click.echo(summary)


if __name__ == "__main__":
    main()
