"""Experiment runner: operator grid search, baseline benchmark, rendering.

Everything a report contains is recomputable from the raw per-candidate rows
the runner emits; aggregation happens after emission, never instead of it.
Runs are reproducible from the experiment spec and the seed alone: every
(generator, factual) pair derives its own generator seed from the global seed
and stable keys, and output rows are written in a deterministic order so
files are byte-stable across repeat runs.
"""

from __future__ import annotations

import csv
import json
import statistics
import zlib
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import markov as markov_mod
from . import predictor as predictor_mod
from .baselines import BASELINE_KINDS, generate_baseline
from .event_log import (
    EncodedTrace,
    EncoderSpec,
    EventLog,
    Trace,
    encode_log,
    fit_encoder,
    load_csv,
    load_schema_config,
    preprocess,
    split_train_test,
    synthesize_log,
)
from .evolution import EvoConfig, GenerationResult, MutationRates, evolve, parse_config_name
from .viability import EditAlignment, ViabilityScore

DEFAULT_BENCHMARK_CONFIGS = ("CBI-ES-UC3-SBM-RR", "CBI-RWS-OPC-SBM-FSR")

# the two preset operator grids; the uniform crosser needs explicit rates, so
# the wider preset fixes one rate per mutator while the narrower one sweeps
# rates with the sampling-based mutator only
GRID_PRESET_162 = tuple(
    f"{ini}-{sel}-{cro}-{mut}-{rec}"
    for ini in ("RI", "SBI", "CBI")
    for sel in ("RWS", "TS", "ES")
    for cro in ("UC3", "OPC", "TPC")
    for mut in ("RM", "SBM")
    for rec in ("FSR", "BBR", "RR")
)
GRID_PRESET_135 = tuple(
    f"{ini}-{sel}-{cro}-SBM-{rec}"
    for ini in ("RI", "SBI", "CBI")
    for sel in ("RWS", "TS", "ES")
    for cro in ("UC1", "UC3", "UC5", "OPC", "TPC")
    for rec in ("FSR", "BBR", "RR")
)


@dataclass(frozen=True)
class SyntheticSpec:
    n_cases: int = 200
    n_activities: int = 5


@dataclass
class ExperimentSpec:
    config_names: tuple[str, ...] = DEFAULT_BENCHMARK_CONFIGS
    log_path: str | None = None
    schema_path: str | None = None
    synthetic: SyntheticSpec | None = None
    n_factuals: int = 10
    counterfactuals_per_factual: int = 50
    cycles: int = 100
    seed: int = 0
    output_dir: str | None = None
    test_fraction: float = 0.2
    max_trace_len: int = 25
    population_size: int = 1000
    offspring_per_cycle: int = 100
    mutation_rate: float = 0.01
    smoothing_epsilon: float = 1e-6
    n_bins: int = 10
    predictor_epochs: int = 500

    def __post_init__(self):
        if self.n_factuals < 1:
            raise ValueError("n_factuals must be >= 1")
        if self.synthetic is None and (self.log_path is None or self.schema_path is None):
            raise ValueError("need either a synthetic spec or log_path plus schema_path")

    def build_config(self, name: str) -> EvoConfig:
        return parse_config_name(
            name,
            population_size=self.population_size,
            offspring_per_cycle=self.offspring_per_cycle,
            mutation_rates=MutationRates(
                insert=self.mutation_rate,
                delete=self.mutation_rate,
                change=self.mutation_rate,
            ),
            cycles=self.cycles,
        )


@dataclass
class PreparedExperiment:
    encoder: EncoderSpec
    train: list[EncodedTrace]
    test: list[EncodedTrace]
    predictor: object
    feas_model: markov_mod.MarkovFeasibilityModel
    factuals: list[EncodedTrace]


def run_seed(global_seed: int, generator_name: str, factual_index: int) -> int:
    """Stable per-run seed: same generator name and factual give the same seed."""
    key = zlib.crc32(generator_name.encode())
    seq = np.random.SeedSequence([global_seed, key, factual_index])
    return int(seq.generate_state(1)[0])


def pick_factuals(
    test: list[EncodedTrace], n: int, rng: np.random.Generator
) -> list[EncodedTrace]:
    """Sample factuals from the test split, alternating outcome classes."""
    by_class = {0: [t for t in test if t.outcome == 0], 1: [t for t in test if t.outcome == 1]}
    for traces in by_class.values():
        if traces:
            order = rng.permutation(len(traces))
            traces[:] = [traces[i] for i in order]
    picked: list[EncodedTrace] = []
    turn = 1
    while len(picked) < n and (by_class[0] or by_class[1]):
        if by_class[turn]:
            picked.append(by_class[turn].pop())
        turn = 1 - turn
    if len(picked) < n:
        raise ValueError(f"test split holds fewer than {n} traces")
    return picked


def prepare_experiment(
    spec: ExperimentSpec, predictor_factory=None
) -> PreparedExperiment:
    """Load or synthesize the log, fit encoder/predictor/model, pick factuals.

    predictor_factory, when given, receives the fitted encoder and must return
    the outcome predictor to use; no internal model is trained in that case.
    """
    if spec.synthetic is not None:
        log = synthesize_log(
            spec.synthetic.n_cases, spec.synthetic.n_activities, seed=spec.seed
        )
    else:
        schemas = load_schema_config(spec.schema_path)
        log = load_csv(spec.log_path, schemas)
    log = preprocess(log, spec.max_trace_len)
    train_log, test_log = split_train_test(log, spec.test_fraction, spec.seed)
    encoder = fit_encoder(train_log)
    train = encode_log(train_log, encoder)
    # test traces longer than the training maximum cannot be represented
    encodable = EventLog(
        tuple(t for t in test_log.traces if len(t) <= encoder.max_len),
        test_log.schemas,
        test_log.activity_vocabulary,
    )
    test = encode_log(encodable, encoder)
    if predictor_factory is not None:
        trained = predictor_factory(encoder)
    else:
        trained = predictor_mod.train(
            train, epochs=spec.predictor_epochs, seed=spec.seed, encoder=encoder
        )
    feas_model = markov_mod.fit(
        train, encoder, smoothing_epsilon=spec.smoothing_epsilon, n_bins=spec.n_bins
    )
    factuals = pick_factuals(test, spec.n_factuals, np.random.default_rng(spec.seed))
    return PreparedExperiment(
        encoder=encoder,
        train=train,
        test=test,
        predictor=trained,
        feas_model=feas_model,
        factuals=factuals,
    )


# ---------------------------------------------------------------------------
# report structures


@dataclass(frozen=True)
class CandidateRow:
    factual_id: str
    generator: str
    rank: int
    score: ViabilityScore
    activities: str
    valid_len: int


@dataclass(frozen=True)
class TrajectoryRow:
    generator: str
    factual_id: str
    cycle: int
    best_total: float
    mean_total: float
    median_total: float
    mean_similarity: float
    mean_sparsity: float
    mean_feasibility: float
    mean_delta: float


@dataclass
class BenchmarkReport:
    candidate_rows: list[CandidateRow] = field(default_factory=list)
    trajectory_rows: list[TrajectoryRow] = field(default_factory=list)
    medians: dict[str, float] = field(default_factory=dict)
    means: dict[str, float] = field(default_factory=dict)
    component_medians: dict[str, dict[str, float]] = field(default_factory=dict)
    ranking: list[tuple[str, float]] = field(default_factory=list)

    def aggregate(self) -> None:
        """Recompute every summary statistic from the raw candidate rows."""
        by_generator: dict[str, list[ViabilityScore]] = {}
        for row in self.candidate_rows:
            by_generator.setdefault(row.generator, []).append(row.score)
        self.medians = {
            g: statistics.median(s.total for s in scores) for g, scores in by_generator.items()
        }
        self.means = {
            g: statistics.fmean(s.total for s in scores) for g, scores in by_generator.items()
        }
        self.component_medians = {
            g: {
                "similarity": statistics.median(s.similarity for s in scores),
                "sparsity": statistics.median(s.sparsity for s in scores),
                "feasibility": statistics.median(s.feasibility for s in scores),
                "delta": statistics.median(s.delta for s in scores),
            }
            for g, scores in by_generator.items()
        }


def activities_string(trace: EncodedTrace, encoder: EncoderSpec) -> str:
    id_to_activity = encoder.id_to_activity
    return "|".join(
        id_to_activity[int(a)] for a in trace.activity_ids[: trace.valid_len]
    )


CANDIDATE_COLUMNS = (
    "factual_id",
    "generator",
    "rank",
    "similarity",
    "sparsity",
    "feasibility",
    "delta",
    "total",
    "activities",
    "valid_len",
)

TRAJECTORY_COLUMNS = (
    "generator",
    "factual_id",
    "cycle",
    "best_total",
    "mean_total",
    "median_total",
    "mean_similarity",
    "mean_sparsity",
    "mean_feasibility",
    "mean_delta",
)


def _candidate_values(row: CandidateRow) -> list:
    return [
        row.factual_id,
        row.generator,
        row.rank,
        repr(row.score.similarity),
        repr(row.score.sparsity),
        repr(row.score.feasibility),
        repr(row.score.delta),
        repr(row.score.total),
        row.activities,
        row.valid_len,
    ]


def _trajectory_values(row: TrajectoryRow) -> list:
    return [
        row.generator,
        row.factual_id,
        row.cycle,
        repr(row.best_total),
        repr(row.mean_total),
        repr(row.median_total),
        repr(row.mean_similarity),
        repr(row.mean_sparsity),
        repr(row.mean_feasibility),
        repr(row.mean_delta),
    ]


class _IncrementalCsv:
    """Opens lazily, writes a header once, flushes after every row batch."""

    def __init__(self, path: Path | None, columns: tuple[str, ...]):
        self.path = path
        self.columns = columns
        self._handle = None
        self._writer = None

    def write_rows(self, rows: list[list]) -> None:
        if self.path is None:
            return
        if self._writer is None:
            self._handle = self.path.open("w", newline="")
            self._writer = csv.writer(self._handle)
            self._writer.writerow(self.columns)
        self._writer.writerows(rows)
        self._handle.flush()

    def close(self) -> None:
        if self._handle is not None:
            self._handle.close()


def _trajectory_rows_from_result(
    name: str, factual_id: str, result: GenerationResult
) -> list[TrajectoryRow]:
    return [
        TrajectoryRow(
            generator=name,
            factual_id=factual_id,
            cycle=s.cycle,
            best_total=s.best_total,
            mean_total=s.mean_total,
            median_total=s.median_total,
            mean_similarity=s.mean_similarity,
            mean_sparsity=s.mean_sparsity,
            mean_feasibility=s.mean_feasibility,
            mean_delta=s.mean_delta,
        )
        for s in result.stats
    ]


def run_grid(spec: ExperimentSpec, prepared: PreparedExperiment | None = None) -> BenchmarkReport:
    """Run every config against every factual and rank configs by final mean.

    Trajectory rows are flushed to disk as each run completes, so partial
    results survive a failure.
    """
    if len(spec.config_names) < 2:
        raise ValueError("grid search needs at least two configs")
    if prepared is None:
        prepared = prepare_experiment(spec)
    out_dir = Path(spec.output_dir) if spec.output_dir else None
    if out_dir:
        out_dir.mkdir(parents=True, exist_ok=True)
    trajectories = _IncrementalCsv(
        out_dir / "trajectories.csv" if out_dir else None, TRAJECTORY_COLUMNS
    )

    report = BenchmarkReport()
    final_means: dict[str, list[float]] = {}
    try:
        for name in spec.config_names:
            for fi, factual in enumerate(prepared.factuals):
                config = replace(spec.build_config(name), seed=run_seed(spec.seed, name, fi))
                result = evolve(
                    factual, config, prepared.predictor, prepared.feas_model, prepared.train
                )
                rows = _trajectory_rows_from_result(name, factual.case_id, result)
                report.trajectory_rows.extend(rows)
                trajectories.write_rows([_trajectory_values(r) for r in rows])
                final_mean = result.stats[-1].mean_total if result.stats else (
                    statistics.fmean(
                        ind.score.total for ind in result.population.individuals
                    )
                )
                final_means.setdefault(name, []).append(final_mean)
    finally:
        trajectories.close()

    report.ranking = sorted(
        ((name, statistics.fmean(values)) for name, values in final_means.items()),
        key=lambda pair: -pair[1],
    )
    if out_dir:
        _write_ranking(out_dir, report.ranking)
    return report


def _write_ranking(out_dir: Path, ranking: list[tuple[str, float]]) -> None:
    with (out_dir / "ranking.csv").open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["config", "final_mean_viability"])
        for name, value in ranking:
            writer.writerow([name, repr(value)])
    top = ranking[:5]
    bottom = ranking[-5:]
    payload = {
        "ranking": [{"config": n, "final_mean_viability": v} for n, v in ranking],
        "top_5": [n for n, _ in top],
        "bottom_5": [n for n, _ in bottom],
    }
    (out_dir / "grid_report.json").write_text(json.dumps(payload, indent=2))
    lines = ["| rank | config | final mean viability |", "| --- | --- | --- |"]
    for position, (name, value) in enumerate(ranking, start=1):
        lines.append(f"| {position} | {name} | {value:.4f} |")
    (out_dir / "grid_report.md").write_text("\n".join(lines) + "\n")


def run_benchmark(
    spec: ExperimentSpec,
    prepared: PreparedExperiment | None = None,
    include_baselines: bool = True,
) -> BenchmarkReport:
    """Feed the same factuals to every generator and record the top candidates."""
    if not spec.config_names:
        raise ValueError("benchmark needs at least one evolutionary config")
    if prepared is None:
        prepared = prepare_experiment(spec)
    encoder = prepared.encoder
    report = BenchmarkReport()
    out_dir = Path(spec.output_dir) if spec.output_dir else None
    if out_dir:
        out_dir.mkdir(parents=True, exist_ok=True)
    candidates_csv = _IncrementalCsv(
        out_dir / "candidates.csv" if out_dir else None, CANDIDATE_COLUMNS
    )
    trajectories_csv = _IncrementalCsv(
        out_dir / "trajectories.csv" if out_dir else None, TRAJECTORY_COLUMNS
    )

    generator_names = list(spec.config_names) + (
        list(BASELINE_KINDS) if include_baselines else []
    )
    try:
        for name in generator_names:
            is_evolutionary = name not in BASELINE_KINDS
            for fi, factual in enumerate(prepared.factuals):
                seed = run_seed(spec.seed, name, fi)
                top: list[tuple[EncodedTrace, ViabilityScore]]
                if is_evolutionary:
                    config = replace(spec.build_config(name), seed=seed)
                    result = evolve(
                        factual, config, prepared.predictor, prepared.feas_model, prepared.train
                    )
                    rows = _trajectory_rows_from_result(name, factual.case_id, result)
                    report.trajectory_rows.extend(rows)
                    trajectories_csv.write_rows([_trajectory_values(r) for r in rows])
                    top = [
                        (ind.genome, ind.score)
                        for ind in result.population.individuals[
                            : spec.counterfactuals_per_factual
                        ]
                    ]
                else:
                    top = generate_baseline(
                        name,
                        factual,
                        spec.counterfactuals_per_factual,
                        prepared.train,
                        prepared.feas_model,
                        prepared.predictor,
                        np.random.default_rng(seed),
                    )
                new_rows = [
                    CandidateRow(
                        factual_id=factual.case_id,
                        generator=name,
                        rank=rank,
                        score=score,
                        activities=activities_string(genome, encoder),
                        valid_len=genome.valid_len,
                    )
                    for rank, (genome, score) in enumerate(top, start=1)
                ]
                report.candidate_rows.extend(new_rows)
                candidates_csv.write_rows([_candidate_values(r) for r in new_rows])
    finally:
        candidates_csv.close()
        trajectories_csv.close()

    report.aggregate()
    if out_dir:
        _write_benchmark_report(out_dir, report)
    return report


def _write_benchmark_report(out_dir: Path, report: BenchmarkReport) -> None:
    payload = {
        "medians": report.medians,
        "means": report.means,
        "component_medians": report.component_medians,
    }
    (out_dir / "benchmark_report.json").write_text(json.dumps(payload, indent=2, sort_keys=True))
    lines = [
        "| generator | median total | mean total |",
        "| --- | --- | --- |",
    ]
    for name in report.medians:
        lines.append(f"| {name} | {report.medians[name]:.4f} | {report.means[name]:.4f} |")
    (out_dir / "benchmark_report.md").write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# side-by-side rendering


def _format_event(event) -> str:
    parts = [event.activity]
    for name, value in event.attributes.items():
        if isinstance(value, float):
            parts.append(f"{name}={value:.4g}")
        else:
            parts.append(f"{name}={value}")
    return " ".join(parts)


def _format_event_highlighted(event, other) -> str:
    """Render event, bolding attribute values that differ from other's."""
    parts = [event.activity]
    for name, value in event.attributes.items():
        if isinstance(value, float):
            text = f"{name}={value:.4g}"
        else:
            text = f"{name}={value}"
        other_value = other.attributes.get(name) if other is not None else None
        if isinstance(value, float) and isinstance(other_value, float):
            changed = abs(value - other_value) > 1e-9
        else:
            changed = value != other_value
        parts.append(f"**{text}**" if changed else text)
    return " ".join(parts)


GAP = "—"


def render_counterfactual(
    factual: Trace,
    counterfactual: Trace,
    alignment: EditAlignment,
    p_factual: float | None = None,
    p_counterfactual: float | None = None,
) -> str:
    """Markdown table aligning the two traces along the edit script.

    Matched and substituted events sit side by side, inserts and deletes show
    a gap on the missing side, transposed pairs appear crosswise, and
    attribute values that changed within a matched pair are bolded.
    """
    lines = []
    if p_factual is not None:
        lines.append(f"factual outcome probability: {p_factual:.4f}")
    if p_counterfactual is not None:
        lines.append(f"counterfactual outcome probability: {p_counterfactual:.4f}")
    if lines:
        lines.append("")
    lines.append("| op | factual | counterfactual |")
    lines.append("| --- | --- | --- |")
    for op in alignment.ops:
        if op.kind == "match":
            f_event = factual.events[op.i - 1]
            c_event = counterfactual.events[op.j - 1]
            lines.append(
                f"| match | {_format_event_highlighted(f_event, c_event)} "
                f"| {_format_event_highlighted(c_event, f_event)} |"
            )
        elif op.kind == "substitute":
            f_event = factual.events[op.i - 1]
            c_event = counterfactual.events[op.j - 1]
            lines.append(
                f"| substitute | {_format_event(f_event)} | {_format_event(c_event)} |"
            )
        elif op.kind == "delete":
            lines.append(f"| delete | {_format_event(factual.events[op.i - 1])} | {GAP} |")
        elif op.kind == "insert":
            lines.append(f"| insert | {GAP} | {_format_event(counterfactual.events[op.j - 1])} |")
        elif op.kind == "transpose":
            first_f = factual.events[op.i - 2]
            second_f = factual.events[op.i - 1]
            first_c = counterfactual.events[op.j - 2]
            second_c = counterfactual.events[op.j - 1]
            lines.append(
                f"| transpose | {_format_event(first_f)} | {_format_event(first_c)} |"
            )
            lines.append(
                f"| transpose | {_format_event(second_f)} | {_format_event(second_c)} |"
            )
    return "\n".join(lines) + "\n"
