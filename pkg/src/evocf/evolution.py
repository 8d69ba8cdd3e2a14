"""Evolutionary counterfactual generation: operator catalog and search loop.

A genome is one encoded trace; a gene is one event, i.e. an activity id
together with its feature row. Operator configurations are five-slot
combinations named like "CBI-RWS-OPC-SBM-FSR" (initiator, selector, crosser,
mutator, recombiner); the uniform crosser carries its rate as a digit, so
"UC3" crosses roughly 30% of gene positions.

Each cycle selects parents by fitness (total viability), crosses them over
the padded gene frame, mutates the offspring with per-position insert/delete/
change passes, scores the mutants, and recombines survivors back into the
population. Termination is a fixed cycle count. All randomness flows through
one seeded generator, so runs are reproducible bit for bit.
"""

from __future__ import annotations

import re
import statistics
from dataclasses import dataclass, field

import numpy as np

from . import markov as markov_mod
from .errors import ConfigNameError, SelectionError
from .event_log import PAD_ID, EncodedTrace
from .markov import MarkovFeasibilityModel
from .viability import ViabilityScore, ViabilityScorer

INITIATORS = ("RI", "SBI", "CBI")
SELECTORS = ("RWS", "TS", "ES")
CROSSERS = ("UC", "OPC", "TPC")
MUTATORS = ("RM", "SBM")
RECOMBINERS = ("FSR", "BBR", "RR")

# total viability can go negative through delta; proportional selection
# needs a positive fitness
FITNESS_FLOOR = 1e-6


@dataclass(frozen=True)
class MutationRates:
    insert: float = 0.01
    delete: float = 0.01
    change: float = 0.01

    def __post_init__(self):
        for name in ("insert", "delete", "change"):
            rate = getattr(self, name)
            if not 0.0 <= rate <= 1.0:
                raise ValueError(f"mutation rate {name} outside [0, 1]: {rate}")


@dataclass(frozen=True)
class EvoConfig:
    initiator: str = "CBI"
    selector: str = "RWS"
    crosser: str = "OPC"
    mutator: str = "SBM"
    recombiner: str = "FSR"
    uc_rate: float | None = None
    population_size: int = 1000
    offspring_per_cycle: int = 100
    mutation_rates: MutationRates = field(default_factory=MutationRates)
    cycles: int = 100
    seed: int = 0

    def __post_init__(self):
        if self.initiator not in INITIATORS:
            raise ConfigNameError(f"unknown initiator {self.initiator!r}")
        if self.selector not in SELECTORS:
            raise ConfigNameError(f"unknown selector {self.selector!r}")
        if self.crosser not in CROSSERS:
            raise ConfigNameError(f"unknown crosser {self.crosser!r}")
        if self.mutator not in MUTATORS:
            raise ConfigNameError(f"unknown mutator {self.mutator!r}")
        if self.recombiner not in RECOMBINERS:
            raise ConfigNameError(f"unknown recombiner {self.recombiner!r}")
        if self.crosser == "UC":
            if self.uc_rate is None or not 0.0 < self.uc_rate < 1.0:
                raise ConfigNameError("UC crosser needs a rate in (0, 1)")
        if not self.population_size >= self.offspring_per_cycle >= 2:
            raise ValueError("need population_size >= offspring_per_cycle >= 2")
        if self.offspring_per_cycle % 2 != 0:
            raise ValueError("offspring_per_cycle must be even")
        if self.cycles < 0:
            raise ValueError("cycles must be >= 0")

    @property
    def name(self) -> str:
        crosser = self.crosser
        if crosser == "UC":
            crosser = f"UC{int(round(self.uc_rate * 10))}"
        return "-".join([self.initiator, self.selector, crosser, self.mutator, self.recombiner])


def parse_config_name(name: str, **overrides) -> EvoConfig:
    """Build an EvoConfig from a five-token operator name.

    Hyperparameters (population_size, cycles, seed, ...) can be passed as
    keyword overrides. Formatting the result reproduces the input name.
    """
    tokens = name.split("-")
    if len(tokens) != 5:
        raise ConfigNameError(f"expected five dash-separated tokens, got {name!r}")
    initiator, selector, crosser_token, mutator, recombiner = tokens
    uc_rate = None
    crosser = crosser_token
    uc_match = re.fullmatch(r"UC([1-9])", crosser_token)
    if uc_match:
        crosser = "UC"
        uc_rate = int(uc_match.group(1)) / 10.0
    for value, allowed in (
        (initiator, INITIATORS),
        (selector, SELECTORS),
        (crosser, CROSSERS),
        (mutator, MUTATORS),
        (recombiner, RECOMBINERS),
    ):
        if value not in allowed:
            raise ConfigNameError(f"unknown operator token {value!r} in {name!r}")
    return EvoConfig(
        initiator=initiator,
        selector=selector,
        crosser=crosser,
        mutator=mutator,
        recombiner=recombiner,
        uc_rate=uc_rate,
        **overrides,
    )


@dataclass(frozen=True)
class Individual:
    genome: EncodedTrace
    score: ViabilityScore


@dataclass(frozen=True)
class Population:
    individuals: tuple[Individual, ...]
    generation: int

    def __len__(self) -> int:
        return len(self.individuals)

    def best(self) -> Individual:
        return max(self.individuals, key=lambda ind: ind.score.total)


@dataclass(frozen=True)
class CycleStats:
    cycle: int
    best_total: float
    mean_total: float
    median_total: float
    mean_similarity: float
    mean_sparsity: float
    mean_feasibility: float
    mean_delta: float


@dataclass(frozen=True)
class GenerationResult:
    population: Population
    stats: tuple[CycleStats, ...]
    cycles_run: int


# ---------------------------------------------------------------------------
# genome construction helpers


def _build_genome(
    ids: list[int], rows: list[np.ndarray], max_len: int, feature_dim: int
) -> EncodedTrace:
    length = len(ids)
    activity_ids = np.zeros(max_len, dtype=np.int64)
    features = np.zeros((max_len, feature_dim), dtype=float)
    activity_ids[:length] = ids
    for t, row in enumerate(rows):
        features[t] = row
    return EncodedTrace(activity_ids, features, length, 0, "cf")


def _clipped_normal_row(rng: np.random.Generator, feature_dim: int) -> np.ndarray:
    return np.clip(rng.standard_normal(feature_dim), 0.0, 1.0)


def _random_genome(
    rng: np.random.Generator, vocab_size: int, max_len: int, feature_dim: int
) -> EncodedTrace:
    length = int(rng.integers(1, max_len + 1))
    ids = rng.integers(1, vocab_size + 1, size=length).tolist()
    rows = [_clipped_normal_row(rng, feature_dim) for _ in range(length)]
    return _build_genome(ids, rows, max_len, feature_dim)


def _sampled_genome(
    rng: np.random.Generator, feas_model: MarkovFeasibilityModel
) -> EncodedTrace:
    encoder = feas_model.encoder
    ids = markov_mod.sample_sequence(feas_model, encoder.max_len, rng)
    rows = [markov_mod.sample_attributes(feas_model, a, rng) for a in ids]
    return _build_genome(ids, rows, encoder.max_len, encoder.feature_dim)


# ---------------------------------------------------------------------------
# operators


def initialize(
    kind: str,
    n: int,
    log: list[EncodedTrace],
    feas_model: MarkovFeasibilityModel,
    scorer: ViabilityScorer,
    rng: np.random.Generator,
) -> Population:
    """Create and score the initial population.

    RI draws uniformly random genomes, SBI samples activities and attributes
    from the feasibility model, CBI draws traces from the log uniformly with
    replacement.
    """
    if n < 1:
        raise ValueError("population size must be >= 1")
    encoder = feas_model.encoder
    genomes: list[EncodedTrace] = []
    if kind == "RI":
        for _ in range(n):
            genomes.append(
                _random_genome(rng, encoder.vocab_size, encoder.max_len, encoder.feature_dim)
            )
    elif kind == "SBI":
        for _ in range(n):
            genomes.append(_sampled_genome(rng, feas_model))
    elif kind == "CBI":
        if not log:
            raise ValueError("CBI initiation needs a non-empty log")
        indices = rng.integers(0, len(log), size=n)
        genomes = [log[i] for i in indices]
    else:
        raise ConfigNameError(f"unknown initiator {kind!r}")
    individuals = tuple(Individual(g, scorer.score(g)) for g in genomes)
    return Population(individuals, generation=0)


def tournament_winner(
    first: Individual, second: Individual, rng: np.random.Generator
) -> Individual:
    """Pick the contest winner with probability proportional to fitness."""
    f_first = max(first.score.total, FITNESS_FLOOR)
    f_second = max(second.score.total, FITNESS_FLOOR)
    return first if rng.random() < f_first / (f_first + f_second) else second


def select(
    kind: str, population: Population, sample_size: int, rng: np.random.Generator
) -> list[tuple[Individual, Individual]]:
    """Pick sample_size parents and pair them consecutively."""
    individuals = population.individuals
    if not individuals:
        raise SelectionError("cannot select from an empty population")
    if sample_size % 2 != 0:
        raise ValueError("sample_size must be even")
    fitness = np.array(
        [max(ind.score.total, FITNESS_FLOOR) for ind in individuals]
    )
    if kind == "RWS":
        probs = fitness / fitness.sum()
        chosen = rng.choice(len(individuals), size=sample_size, p=probs)
        parents = [individuals[i] for i in chosen]
    elif kind == "TS":
        parents = []
        for _ in range(sample_size):
            i, j = rng.integers(0, len(individuals), size=2)
            parents.append(tournament_winner(individuals[i], individuals[j], rng))
    elif kind == "ES":
        if sample_size > len(individuals):
            raise SelectionError(
                f"elitism selection of {sample_size} from population of {len(individuals)}"
            )
        order = sorted(
            range(len(individuals)), key=lambda i: -individuals[i].score.total
        )
        parents = [individuals[i] for i in order[:sample_size]]
    else:
        raise ConfigNameError(f"unknown selector {kind!r}")
    return list(zip(parents[0::2], parents[1::2]))


def _normalize_after_crossover(ids: np.ndarray, features: np.ndarray) -> EncodedTrace:
    # events after the first PAD are an encoding artifact of mixing frames
    pad_positions = np.flatnonzero(ids == PAD_ID)
    valid_len = int(pad_positions[0]) if len(pad_positions) else len(ids)
    ids = ids.copy()
    features = features.copy()
    ids[valid_len:] = PAD_ID
    features[valid_len:] = 0.0
    return EncodedTrace(ids, features, valid_len, 0, "cf")


def crossover(
    kind: str,
    parent_a: EncodedTrace,
    parent_b: EncodedTrace,
    rng: np.random.Generator,
    uc_rate: float | None = None,
) -> tuple[EncodedTrace, EncodedTrace]:
    """Produce two symmetric children over the padded gene frame.

    Positions are indexed over the full frame (padding included), so parents
    of different lengths cross cleanly; children are re-normalized to
    trailing-PAD form afterwards. Position 0 always holds a real gene, so
    children never collapse to length zero.
    """
    max_len = parent_a.max_len
    a_ids, b_ids = parent_a.activity_ids, parent_b.activity_ids
    a_feat, b_feat = parent_a.features, parent_b.features
    if max_len < 2:
        return parent_a, parent_b
    if kind == "UC":
        mask = rng.random(max_len) < uc_rate
        ids_1 = np.where(mask, a_ids, b_ids)
        ids_2 = np.where(mask, b_ids, a_ids)
        feat_1 = np.where(mask[:, None], a_feat, b_feat)
        feat_2 = np.where(mask[:, None], b_feat, a_feat)
    elif kind == "OPC":
        cut = int(rng.integers(1, max_len))
        ids_1 = np.concatenate([a_ids[:cut], b_ids[cut:]])
        ids_2 = np.concatenate([b_ids[:cut], a_ids[cut:]])
        feat_1 = np.concatenate([a_feat[:cut], b_feat[cut:]])
        feat_2 = np.concatenate([b_feat[:cut], a_feat[cut:]])
    elif kind == "TPC":
        points = np.sort(rng.choice(np.arange(1, max_len), size=2, replace=False))
        lo, hi = int(points[0]), int(points[1])
        ids_1 = np.concatenate([a_ids[:lo], b_ids[lo:hi], a_ids[hi:]])
        ids_2 = np.concatenate([b_ids[:lo], a_ids[lo:hi], b_ids[hi:]])
        feat_1 = np.concatenate([a_feat[:lo], b_feat[lo:hi], a_feat[hi:]])
        feat_2 = np.concatenate([b_feat[:lo], a_feat[lo:hi], b_feat[hi:]])
    else:
        raise ConfigNameError(f"unknown crosser {kind!r}")
    return (
        _normalize_after_crossover(ids_1, feat_1),
        _normalize_after_crossover(ids_2, feat_2),
    )


def mutate(
    kind: str,
    genome: EncodedTrace,
    rates: MutationRates,
    feas_model: MarkovFeasibilityModel,
    rng: np.random.Generator,
) -> EncodedTrace:
    """Apply the delete, insert, and change passes in that order.

    Deletes hit non-padding positions only (the last survivor is immune, so
    length never drops below 1); inserts fill free padding capacity at a
    uniform position; changes redraw activity and attributes in place. RM
    draws attributes from a clipped standard normal, SBM from the feasibility
    model conditioned on the new activity.
    """
    if kind not in MUTATORS:
        raise ConfigNameError(f"unknown mutator {kind!r}")
    encoder = feas_model.encoder
    vocab_size = encoder.vocab_size
    max_len = genome.max_len
    feature_dim = genome.features.shape[1]

    def draw_row(activity_id: int) -> np.ndarray:
        if kind == "RM":
            return _clipped_normal_row(rng, feature_dim)
        return markov_mod.sample_attributes(feas_model, activity_id, rng)

    ids = genome.activity_ids[: genome.valid_len].tolist()
    rows = [genome.features[t] for t in range(genome.valid_len)]

    # delete
    remove = rng.random(len(ids)) < rates.delete
    if remove.all():
        remove[-1] = False
    ids = [a for a, r in zip(ids, remove) if not r]
    rows = [row for row, r in zip(rows, remove) if not r]

    # insert
    free_slots = max_len - len(ids)
    for _ in range(free_slots):
        if rng.random() < rates.insert:
            position = int(rng.integers(0, len(ids) + 1))
            activity = int(rng.integers(1, vocab_size + 1))
            ids.insert(position, activity)
            rows.insert(position, draw_row(activity))

    # change
    flip = rng.random(len(ids)) < rates.change
    for t in np.flatnonzero(flip):
        activity = int(rng.integers(1, vocab_size + 1))
        ids[t] = activity
        rows[t] = draw_row(activity)

    return _build_genome(ids, rows, max_len, feature_dim)


def recombine(
    kind: str, population: Population, mutants: list[Individual], max_size: int
) -> Population:
    """Merge mutants into the population and cap its size.

    FSR keeps the best of the union by total viability. BBR admits only
    mutants above their generation's mean total, dropping the worst once over
    capacity. RR orders the union lexicographically by the components in
    priority order feasibility, delta, sparsity, similarity. Sorts are stable,
    so ties resolve by insertion order.
    """
    if max_size < 1:
        raise ValueError("max_size must be >= 1")
    union = list(population.individuals) + list(mutants)
    if kind == "FSR":
        survivors = sorted(union, key=lambda ind: -ind.score.total)[:max_size]
    elif kind == "BBR":
        if mutants:
            mean_total = statistics.fmean(m.score.total for m in mutants)
            admitted = [m for m in mutants if m.score.total > mean_total]
        else:
            admitted = []
        survivors = list(population.individuals) + admitted
        if len(survivors) > max_size:
            survivors = sorted(survivors, key=lambda ind: -ind.score.total)[:max_size]
    elif kind == "RR":
        survivors = sorted(
            union,
            key=lambda ind: (
                -ind.score.feasibility,
                -ind.score.delta,
                -ind.score.sparsity,
                -ind.score.similarity,
            ),
        )[:max_size]
    else:
        raise ConfigNameError(f"unknown recombiner {kind!r}")
    return Population(tuple(survivors), population.generation + 1)


# ---------------------------------------------------------------------------
# the loop


def _cycle_stats(cycle: int, population: Population) -> CycleStats:
    totals = [ind.score.total for ind in population.individuals]
    return CycleStats(
        cycle=cycle,
        best_total=max(totals),
        mean_total=statistics.fmean(totals),
        median_total=statistics.median(totals),
        mean_similarity=statistics.fmean(ind.score.similarity for ind in population.individuals),
        mean_sparsity=statistics.fmean(ind.score.sparsity for ind in population.individuals),
        mean_feasibility=statistics.fmean(ind.score.feasibility for ind in population.individuals),
        mean_delta=statistics.fmean(ind.score.delta for ind in population.individuals),
    )


def evolve(
    factual: EncodedTrace,
    config: EvoConfig,
    predictor,
    feas_model: MarkovFeasibilityModel,
    log: list[EncodedTrace],
) -> GenerationResult:
    """Run the full loop for config.cycles cycles against one factual.

    Returns the final population sorted by total viability (descending) and
    one statistics row per executed cycle. Deterministic under config.seed.
    """
    rng = np.random.default_rng(config.seed)
    scorer = ViabilityScorer(factual, predictor, feas_model)
    population = initialize(
        config.initiator, config.population_size, log, feas_model, scorer, rng
    )
    stats: list[CycleStats] = []
    for cycle in range(1, config.cycles + 1):
        pairs = select(config.selector, population, config.offspring_per_cycle, rng)
        mutants: list[Individual] = []
        for parent_a, parent_b in pairs:
            for child in crossover(
                config.crosser, parent_a.genome, parent_b.genome, rng, config.uc_rate
            ):
                mutated = mutate(config.mutator, child, config.mutation_rates, feas_model, rng)
                mutants.append(Individual(mutated, scorer.score(mutated)))
        population = recombine(config.recombiner, population, mutants, config.population_size)
        stats.append(_cycle_stats(cycle, population))
    final = Population(
        tuple(sorted(population.individuals, key=lambda ind: -ind.score.total)),
        population.generation,
    )
    return GenerationResult(final, tuple(stats), config.cycles)
