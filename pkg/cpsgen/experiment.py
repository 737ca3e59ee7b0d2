"""
The batch experiment: models x generators x suite sizes x repeats, every
suite scored against the model's filtered mutants, plus the reports.

Outputs, below the configured directory:

    mutants/<model>.json   filtered mutants and filter statistics
    records.csv            one deterministic row per generated suite
    timings.csv            wall-clock generation and scoring times
    summary.md             medians, IQRs, ranks, budgets, speedups
    ranks.csv              per (model, size): group, median, iqr, rank
"""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import os
import time
import typing as t
from dataclasses import dataclass, field

import numpy as np

from .baselines import (
    EpicurusConfig,
    ODConfig,
    epicurus_scoring_suites,
    epicurus_suite,
    od_suite,
    random_suite,
)
from .errors import CapabilityError, ConfigurationError
from .genclu import GenCluConfig, generate_suite
from .model import ModelGraph, Simulator, load_model_file
from .mutation import (
    INCLUSIVE_COUNT,
    STRICT_COUNT,
    FilterResult,
    Mutant,
    enumerate_mutants,
    mutants_from_json,
    mutants_to_json,
    mutation_score,
    probe_filter,
)
from .signals import TestSuite
from .stats import RankedGroups, median, scott_knott
from .storage import Storage, StorageMaster, to_csv
from .utils import derive_seed, log, run_pool

RANDOM = "random"
EPICURUS = "epicurus"
OD = "od"
GENCLU = "genclu"
GENERATORS = (RANDOM, EPICURUS, OD, GENCLU)

MODELS_DIR = os.path.join(os.path.dirname(__file__), "models")

RECORD_HEADER = [
    "model",
    "generator",
    "size",
    "repeat",
    "seed",
    "score",
    "simulations",
    "scoring_simulations",
]
TIMING_HEADER = ["model", "generator", "size", "repeat", "generation_time", "scoring_time", "total_time"]


def bundled_models() -> list[str]:
    return sorted(name[:-5] for name in os.listdir(MODELS_DIR) if name.endswith(".json"))


def resolve_model(name_or_path: str) -> str:
    """A model file path, or the name of a bundled model."""
    if os.path.exists(name_or_path):
        return name_or_path

    bundled = os.path.join(MODELS_DIR, f"{name_or_path}.json")
    if os.path.exists(bundled):
        return bundled

    raise ConfigurationError(f"no model file or bundled model named {name_or_path!r}")


def _nested(cls: type[t.Any], data: t.Any, key: str) -> t.Any:
    if data is None:
        return cls()
    if not isinstance(data, dict):
        raise ConfigurationError(f"{key} must be an object")

    known = {f.name for f in dataclasses.fields(cls)}
    unknown = set(t.cast(dict[str, t.Any], data)) - known
    if unknown:
        raise ConfigurationError(f"unknown {key} keys: {', '.join(sorted(unknown))}")
    return cls(**data)


@dataclass(frozen=True)
class ExperimentConfig:
    models: tuple[str, ...]
    generators: tuple[str, ...] = GENERATORS
    sizes: tuple[int, ...] = (4, 16, 32)
    repeats: int = 20
    master_seed: int = 0
    genclu: GenCluConfig = GenCluConfig()
    epicurus: EpicurusConfig = EpicurusConfig()
    od: ODConfig = ODConfig()
    timeout_scale: float = 1.0
    probes: int = 200
    sum_count_mode: str = INCLUSIVE_COUNT
    output: str = "results"
    workers: int | None = None

    def __post_init__(self):
        if not self.models:
            raise ConfigurationError("experiment needs at least one model")
        if not self.generators:
            raise ConfigurationError("experiment needs at least one generator")
        for gen in self.generators:
            if gen not in GENERATORS:
                raise ConfigurationError(f"unknown generator {gen!r}")
        if not self.sizes or any(size < 1 for size in self.sizes):
            raise ConfigurationError("suite sizes must be positive")
        if self.repeats < 1:
            raise ConfigurationError("repeats must be at least 1")
        if self.timeout_scale <= 0:
            raise ConfigurationError("timeout_scale must be positive")
        if self.probes < 1:
            raise ConfigurationError("probes must be at least 1")
        if self.sum_count_mode not in (INCLUSIVE_COUNT, STRICT_COUNT):
            raise ConfigurationError(f"unknown sum_count_mode {self.sum_count_mode!r}")

    @classmethod
    def from_json(cls, data: dict[str, t.Any]) -> ExperimentConfig:
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigurationError(f"unknown configuration keys: {', '.join(sorted(unknown))}")
        if "models" not in data:
            raise ConfigurationError("configuration is missing 'models'")

        values = dict(data)
        for key in ("models", "generators"):
            if key in values:
                values[key] = tuple(str(v) for v in values[key])
        if "sizes" in values:
            values["sizes"] = tuple(int(v) for v in values["sizes"])
        values["genclu"] = _nested(GenCluConfig, data.get("genclu"), "genclu")
        values["epicurus"] = _nested(EpicurusConfig, data.get("epicurus"), "epicurus")
        values["od"] = _nested(ODConfig, data.get("od"), "od")
        try:
            return cls(**values)
        except TypeError as e:
            raise ConfigurationError(f"invalid configuration: {e}") from e

    def to_json(self) -> dict[str, t.Any]:
        return {
            "models": list(self.models),
            "generators": list(self.generators),
            "sizes": list(self.sizes),
            "repeats": self.repeats,
            "master_seed": self.master_seed,
            "genclu": dataclasses.asdict(self.genclu),
            "epicurus": dataclasses.asdict(self.epicurus),
            "od": dataclasses.asdict(self.od),
            "timeout_scale": self.timeout_scale,
            "probes": self.probes,
            "sum_count_mode": self.sum_count_mode,
            "output": self.output,
            "workers": self.workers,
        }


def load_config(path: str) -> ExperimentConfig:
    with open(path, "r") as f:
        try:
            data = json.load(f)
        except json.JSONDecodeError as e:
            raise ConfigurationError(f"{path}: not valid JSON: {e}") from e
    if not isinstance(data, dict):
        raise ConfigurationError(f"{path}: configuration must be an object")
    return ExperimentConfig.from_json(t.cast(dict[str, t.Any], data))


@dataclass
class ExperimentRecord:
    model: str
    generator: str
    size: int
    repeat: int
    seed: int
    score: float
    simulations: int
    scoring_simulations: int
    generation_time: float = 0.0
    scoring_time: float = 0.0

    @property
    def total_time(self) -> float:
        return self.generation_time + self.scoring_time

    def row(self) -> list[t.Any]:
        return [
            self.model,
            self.generator,
            self.size,
            self.repeat,
            self.seed,
            repr(self.score),
            self.simulations,
            self.scoring_simulations,
        ]

    def timing_row(self) -> list[t.Any]:
        return [
            self.model,
            self.generator,
            self.size,
            self.repeat,
            f"{self.generation_time:.6f}",
            f"{self.scoring_time:.6f}",
            f"{self.total_time:.6f}",
        ]

    @classmethod
    def from_row(cls, row: dict[str, str]) -> ExperimentRecord:
        return cls(
            model=row["model"],
            generator=row["generator"],
            size=int(row["size"]),
            repeat=int(row["repeat"]),
            seed=int(row["seed"]),
            score=float(row["score"]),
            simulations=int(row["simulations"]),
            scoring_simulations=int(row["scoring_simulations"]),
        )


@dataclass
class PreparedMutants:
    model: str
    mutants: list[Mutant]
    stats: dict[str, t.Any]

    def to_json(self) -> dict[str, t.Any]:
        return {"model": self.model, "stats": self.stats, "mutants": mutants_to_json(self.mutants)}

    @classmethod
    def from_json(cls, data: dict[str, t.Any]) -> PreparedMutants:
        return cls(data["model"], mutants_from_json(data["mutants"]), data["stats"])


def prepare_mutants(
    model_path: str,
    seed: int,
    storage: Storage | None = None,
    probes: int = 200,
    sum_count_mode: str = INCLUSIVE_COUNT,
    workers: int | None = None,
) -> PreparedMutants:
    """
    Enumerate the model's mutants, filter them with `probes` random tests and
    persist the survivors as `<model>.json` in `storage`, with the random
    tests' kill matrix over all enumerated mutants in `<model>.kills.csv`.
    Zero survivors leave a `<model>.warning.txt` next to it.
    """
    graph = load_model_file(model_path)
    mutants = enumerate_mutants(graph, sum_count_mode)
    kills_csv: str | None = None

    if mutants:
        rng = np.random.default_rng(derive_seed(seed, graph.name, "probes"))
        result: FilterResult = probe_filter(mutants, graph, probes, rng, workers=workers)
        prepared = PreparedMutants(graph.name, result.mutants, result.stats_json())
        kills_csv = result.matrix.to_csv()
    else:
        prepared = PreparedMutants(
            graph.name,
            [],
            {"original": 0, "filtered": 0, "percentage": 0.0, "probes": probes},
        )
    prepared.stats["seed"] = seed
    prepared.stats["sum_count_mode"] = sum_count_mode

    if storage is not None:
        storage.save_json(f"{graph.name}.json", prepared.to_json())
        if kills_csv is not None:
            storage.save(f"{graph.name}.kills.csv", kills_csv)
        if not prepared.mutants:
            storage.save(
                f"{graph.name}.warning.txt",
                f"model {graph.name}: no mutant survived filtering "
                f"({prepared.stats['original']} enumerated)\n",
            )

    if not prepared.mutants:
        log("err", f"{graph.name}: no mutant survived filtering")
    return prepared


@dataclass(frozen=True)
class _WorkItem:
    model: str
    generator: str
    size: int
    repeat: int
    seed: int


def generate(
    generator: str,
    graph: ModelGraph,
    size: int,
    seed: int,
    config: ExperimentConfig,
    simulator: Simulator,
) -> list[TestSuite]:
    """
    Run one generator. EPIcuRus returns its scoring suites, every other
    generator a single suite.
    """
    rng = np.random.default_rng(seed)

    if generator == RANDOM:
        return [random_suite(graph.inports, size, rng)]

    if generator == GENCLU:
        # the leaf size is the suite size
        params = dataclasses.replace(config.genclu, enough=size, seed=seed)
        return [generate_suite(graph, params, simulator, rng).suite]

    if generator == EPICURUS:
        result = epicurus_suite(graph, size, config.epicurus, simulator, rng)
        return epicurus_scoring_suites(result.ranges, size, rng, config.epicurus.scoring_suites)

    if generator == OD:
        params = dataclasses.replace(config.od, timeout=config.od.timeout * config.timeout_scale)
        return [od_suite(graph, size, params, simulator, rng).suite]

    raise ConfigurationError(f"unknown generator {generator!r}")


def _run_record(
    item: _WorkItem,
    graph: ModelGraph,
    mutants: list[Mutant],
    config: ExperimentConfig,
) -> ExperimentRecord:
    simulator = Simulator(graph)
    scorer = Simulator(graph)

    started = time.perf_counter()
    suites = generate(item.generator, graph, item.size, item.seed, config, simulator)
    generated = time.perf_counter()

    # nested pools would oversubscribe the record-level pool
    scores = [mutation_score(suite, graph, mutants, scorer, workers=1) for suite in suites]
    scored = time.perf_counter()

    record = ExperimentRecord(
        model=item.model,
        generator=item.generator,
        size=item.size,
        repeat=item.repeat,
        seed=item.seed,
        score=median(scores),
        simulations=simulator.simulations,
        scoring_simulations=scorer.simulations,
        generation_time=generated - started,
        scoring_time=scored - generated,
    )
    log(
        "exp",
        f"{item.model} {item.generator} k={item.size} #{item.repeat}: "
        f"score {record.score:.3f}, {record.simulations} simulations",
    )
    return record


@dataclass
class CaseSummary:
    """All generators' records for one (model, size) pair."""

    model: str
    size: int
    ranked: RankedGroups
    simulations: dict[str, float]
    scoring_simulations: dict[str, float]
    times: dict[str, float] = field(default_factory=dict)


@dataclass
class ExperimentResult:
    records: list[ExperimentRecord]
    failures: dict[str, str]
    cases: list[CaseSummary]
    mutants: dict[str, PreparedMutants]


def summarize(records: t.Sequence[ExperimentRecord], timed: bool = True) -> list[CaseSummary]:
    """Group records per (model, size) and rank the generators by score."""
    keys: list[tuple[str, int]] = []
    grouped: dict[tuple[str, int], dict[str, list[ExperimentRecord]]] = {}
    for record in records:
        key = (record.model, record.size)
        if key not in grouped:
            keys.append(key)
            grouped[key] = {}
        grouped[key].setdefault(record.generator, []).append(record)

    cases: list[CaseSummary] = []
    for model, size in keys:
        by_generator = grouped[(model, size)]
        ranked = scott_knott(
            {gen: [r.score for r in recs] for gen, recs in by_generator.items()},
            maximize=True,
        )
        cases.append(
            CaseSummary(
                model=model,
                size=size,
                ranked=ranked,
                simulations={
                    gen: float(np.mean([r.simulations for r in recs]))
                    for gen, recs in by_generator.items()
                },
                scoring_simulations={
                    gen: float(np.mean([r.scoring_simulations for r in recs]))
                    for gen, recs in by_generator.items()
                },
                times={
                    gen: float(np.mean([r.total_time for r in recs]))
                    for gen, recs in by_generator.items()
                }
                if timed
                else {},
            )
        )
    return cases


def _speedup(case: CaseSummary, generator: str, baseline: str) -> str:
    if baseline not in case.times or generator == baseline or case.times[generator] <= 0:
        return "-"
    return f"{case.times[baseline] / case.times[generator]:.1f}x"


def render_summary(cases: t.Sequence[CaseSummary], failures: t.Mapping[str, str] | None = None) -> str:
    lines = ["# Experiment summary", ""]

    for case in cases:
        lines.append(f"## {case.model}, suite size {case.size}")
        lines.append("")
        header = "| generator | median | IQR | rank | simulations | scoring simulations |"
        rule = "|---|---|---|---|---|---|"
        if case.times:
            header += " time (s) | faster than EPIcuRus | faster than OD |"
            rule += "---|---|---|"
        lines.extend([header, rule])

        for name, med, spread, rank in case.ranked.rows():
            row = (
                f"| {name} | {med:.3f} | {spread:.3f} | {rank} "
                f"| {case.simulations[name]:.1f} | {case.scoring_simulations[name]:.1f} |"
            )
            if case.times:
                row += (
                    f" {case.times[name]:.3f} | {_speedup(case, name, EPICURUS)} "
                    f"| {_speedup(case, name, OD)} |"
                )
            lines.append(row)
        lines.append("")

    wins: dict[str, list[int]] = {}
    for case in cases:
        for name in case.ranked.order:
            entry = wins.setdefault(name, [0, 0])
            entry[1] += 1
            if case.ranked.ranks[name] == 1:
                entry[0] += 1

    if wins:
        lines.extend(["## Best-rank wins", "", "| generator | wins |", "|---|---|"])
        for name in sorted(wins):
            won, ran = wins[name]
            lines.append(f"| {name} | {won}/{ran} |")
        lines.append("")

    if failures:
        lines.extend(["## Failures", ""])
        for what, reason in sorted(failures.items()):
            lines.append(f"- {what}: {reason}")
        lines.append("")

    return "\n".join(lines)


def ranks_csv(cases: t.Sequence[CaseSummary]) -> str:
    rows = [
        [case.model, case.size, name, repr(med), repr(spread), rank]
        for case in cases
        for name, med, spread, rank in case.ranked.rows()
    ]
    return to_csv(["model", "size", "group", "median", "iqr", "rank"], rows)


def load_records(text: str, timings: str | None = None) -> list[ExperimentRecord]:
    """Parse `records.csv`, merging wall times from `timings.csv` if given."""
    records = [ExperimentRecord.from_row(row) for row in csv.DictReader(io.StringIO(text))]

    if timings is not None:
        times = {
            (row["model"], row["generator"], int(row["size"]), int(row["repeat"])): row
            for row in csv.DictReader(io.StringIO(timings))
        }
        for record in records:
            row = times.get((record.model, record.generator, record.size, record.repeat))
            if row is not None:
                record.generation_time = float(row["generation_time"])
                record.scoring_time = float(row["scoring_time"])

    return records


def run_experiment(config: ExperimentConfig) -> ExperimentResult:
    master = StorageMaster(config.output)
    storage = Storage(master)
    mutant_storage = Storage(master, "mutants")

    graphs: dict[str, ModelGraph] = {}
    prepared: dict[str, PreparedMutants] = {}
    failures: dict[str, str] = {}

    for entry in config.models:
        try:
            path = resolve_model(entry)
            graph = load_model_file(path)
            mutants = prepare_mutants(
                path,
                config.master_seed,
                mutant_storage,
                config.probes,
                config.sum_count_mode,
                config.workers,
            )
        except (ValueError, OSError) as e:
            log("err", f"model {entry}: {e}")
            failures[entry] = str(e)
            continue

        if not mutants.mutants:
            failures[graph.name] = "no mutant survived filtering"
            continue

        log("exp", f"{graph.name}: mutants {mutants.stats['original']} -> {mutants.stats['filtered']}")
        graphs[graph.name] = graph
        prepared[graph.name] = mutants

    items: list[_WorkItem] = []
    for name, graph in graphs.items():
        for generator in config.generators:
            if generator == OD and all(spec.is_constant for spec in graph.inports):
                log("log", f"{name}: OD is not applicable (all inputs constant), skipped")
                continue
            for size in config.sizes:
                for repeat in range(config.repeats):
                    seed = derive_seed(config.master_seed, name, generator, size, repeat)
                    items.append(_WorkItem(name, generator, size, repeat, seed))

    log("exp", f"running {len(items)} suites")

    def _work(item: _WorkItem) -> ExperimentRecord | str | None:
        try:
            return _run_record(item, graphs[item.model], prepared[item.model].mutants, config)
        except CapabilityError as e:
            log("log", f"{item.model} {item.generator}: {e}")
            return None
        except ValueError as e:
            log("err", f"{item.model} {item.generator} k={item.size} #{item.repeat}: {e}")
            return str(e)

    records: list[ExperimentRecord] = []
    for item, outcome in zip(items, run_pool(_work, items, config.workers)):
        if isinstance(outcome, ExperimentRecord):
            records.append(outcome)
        elif outcome is not None:
            failures[f"{item.model} {item.generator} k={item.size} #{item.repeat}"] = outcome

    storage.save_csv("records.csv", RECORD_HEADER, (r.row() for r in records))
    storage.save_csv("timings.csv", TIMING_HEADER, (r.timing_row() for r in records))

    cases = summarize(records)
    storage.save("summary.md", render_summary(cases, failures))
    storage.save("ranks.csv", ranks_csv(cases))
    storage.save_json("config.json", config.to_json())

    return ExperimentResult(records, failures, cases, prepared)


def recompute(records: t.Sequence[ExperimentRecord], timed: bool) -> tuple[str, str]:
    """summary.md and ranks.csv contents for already collected records."""
    cases = summarize(records, timed)
    return render_summary(cases), ranks_csv(cases)
