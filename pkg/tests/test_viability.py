import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import identity_encoder, make_encoded
from evocf.errors import ConfigurationError
from evocf.markov import fit
from evocf.viability import (
    ViabilityScorer,
    delta_score,
    similarity_score,
    sparsity_score,
    ssdld,
    ssdld_distance,
    viability,
)

# ---------------------------------------------------------------------------
# independent naive recursion implementing the six-case distance definition


def naive_costs(cost_kind, n_attr_columns):
    if cost_kind == "euclidean":
        scale = 1.0 / math.sqrt(n_attr_columns) if n_attr_columns else 0.0

        def pair(x, y):
            return math.sqrt(sum((xi - yi) ** 2 for xi, yi in zip(x, y))) * scale

        def gap(x):
            return math.sqrt(sum(xi * xi for xi in x)) * scale

        return pair, gap

    def pair(x, y):
        differ = sum(1 for xi, yi in zip(x, y) if abs(xi - yi) > 1e-9)
        return differ / len(x) if x else 0.0

    def gap(x):
        return 1.0

    return pair, gap


def naive_ssdld(acts_a, feats_a, acts_b, feats_b, cost_kind):
    """Memoized direct transcription of the recursive distance definition.

    Assumes one feature column per attribute, which is what every fixture in
    this module uses.
    """
    n_cols = len(feats_a[0]) if feats_a else (len(feats_b[0]) if feats_b else 0)
    pair, gap = naive_costs(cost_kind, n_cols)
    memo = {}

    def d(i, j):
        if (i, j) in memo:
            return memo[(i, j)]
        if i == 0 and j == 0:
            value = 0.0
        else:
            candidates = []
            if i > 0:
                candidates.append(d(i - 1, j) + gap(feats_a[i - 1]))
            if j > 0:
                candidates.append(d(i, j - 1) + gap(feats_b[j - 1]))
            if i > 0 and j > 0:
                if acts_a[i - 1] == acts_b[j - 1]:
                    candidates.append(d(i - 1, j - 1) + pair(feats_a[i - 1], feats_b[j - 1]))
                else:
                    candidates.append(
                        d(i - 1, j - 1) + gap(feats_a[i - 1]) + gap(feats_b[j - 1])
                    )
            if (
                i > 1
                and j > 1
                and acts_a[i - 1] == acts_b[j - 2]
                and acts_a[i - 2] == acts_b[j - 1]
            ):
                candidates.append(
                    d(i - 2, j - 2)
                    + pair(feats_a[i - 1], feats_b[j - 2])
                    + pair(feats_a[i - 2], feats_b[j - 1])
                )
            value = min(candidates)
        memo[(i, j)] = value
        return value

    return d(len(acts_a), len(acts_b))


def t(acts, values, max_len=6):
    return make_encoded(acts, [[v] for v in values], max_len)


def random_trace(rng, max_len=6, vocab=3):
    length = int(rng.integers(1, 5))
    acts = rng.integers(1, vocab + 1, size=length).tolist()
    values = rng.random(length).tolist()
    return t(acts, values, max_len)


# ---------------------------------------------------------------------------
# distance


def test_identical_traces_have_zero_distance():
    trace = t([1, 2, 3], [0.2, 0.5, 0.9])
    for kind in ("euclidean", "count"):
        distance, alignment = ssdld(trace, trace, kind)
        assert distance == 0.0
        assert all(op.kind == "match" for op in alignment.ops)


@pytest.mark.parametrize("kind", ["euclidean", "count"])
def test_distance_matches_naive_recursion_on_random_pairs(kind):
    rng = np.random.default_rng(12)
    for _ in range(300):
        a = random_trace(rng)
        b = random_trace(rng)
        expected = naive_ssdld(
            a.activity_ids[: a.valid_len].tolist(),
            a.features[: a.valid_len].tolist(),
            b.activity_ids[: b.valid_len].tolist(),
            b.features[: b.valid_len].tolist(),
            kind,
        )
        assert abs(ssdld_distance(a, b, kind) - expected) < 1e-12


def test_transposition_with_carried_attributes_is_free():
    a = t([1, 2], [0.3, 0.8])
    b = t([2, 1], [0.8, 0.3])
    for kind in ("euclidean", "count"):
        distance, alignment = ssdld(a, b, kind)
        assert distance == 0.0
        assert [op.kind for op in alignment.ops] == ["transpose"]


@pytest.mark.parametrize("kind", ["euclidean", "count"])
def test_distance_symmetry_and_bounds(kind):
    rng = np.random.default_rng(21)
    for _ in range(200):
        a = random_trace(rng)
        b = random_trace(rng)
        d_ab = ssdld_distance(a, b, kind)
        d_ba = ssdld_distance(b, a, kind)
        assert abs(d_ab - d_ba) < 1e-12
        assert -1e-15 <= d_ab <= a.valid_len + b.valid_len + 1e-12
        assert ssdld_distance(a, a, kind) == 0.0


@pytest.mark.parametrize("kind", ["euclidean", "count"])
def test_alignment_costs_sum_to_distance(kind):
    rng = np.random.default_rng(33)
    for _ in range(200):
        a = random_trace(rng)
        b = random_trace(rng)
        distance, alignment = ssdld(a, b, kind)
        assert abs(sum(op.cost for op in alignment.ops) - distance) < 1e-12


def test_alignment_replay_reconstructs_target():
    rng = np.random.default_rng(44)
    for _ in range(200):
        a = random_trace(rng)
        b = random_trace(rng)
        _, alignment = ssdld(a, b, "euclidean")
        acts_a = a.activity_ids[: a.valid_len].tolist()
        acts_b = b.activity_ids[: b.valid_len].tolist()
        rebuilt = []
        consumed_a = 0
        for op in alignment.ops:
            if op.kind in ("match", "substitute"):
                rebuilt.append(acts_b[op.j - 1])
                consumed_a += 1
            elif op.kind == "insert":
                rebuilt.append(acts_b[op.j - 1])
            elif op.kind == "delete":
                consumed_a += 1
            elif op.kind == "transpose":
                rebuilt.extend([acts_b[op.j - 2], acts_b[op.j - 1]])
                consumed_a += 2
        assert rebuilt == acts_b
        assert consumed_a == len(acts_a)


# ---------------------------------------------------------------------------
# similarity / sparsity


def test_similarity_of_identical_traces():
    trace = t([1, 2], [0.1, 0.9])
    assert similarity_score(trace, trace) == 1.0


def test_similarity_attains_zero_at_maximal_distance():
    a = t([1], [1.0])
    b = t([2], [1.0])
    assert similarity_score(a, b) == 0.0


def test_similarity_in_unit_interval_on_random_pairs():
    rng = np.random.default_rng(55)
    for _ in range(300):
        a = random_trace(rng)
        b = random_trace(rng)
        assert 0.0 <= similarity_score(a, b) <= 1.0
        assert 0.0 <= sparsity_score(a, b) <= 1.0


def test_sparsity_identical_is_one():
    trace = t([1, 2, 3], [0.3, 0.4, 0.5])
    assert sparsity_score(trace, trace) == 1.0


@pytest.mark.parametrize("n", [2, 3, 5])
def test_sparsity_single_attribute_difference(n):
    # four attributes; one event differs in exactly one of them
    feats_a = np.full((n, 4), 0.5)
    feats_b = feats_a.copy()
    feats_b[0, 0] = 0.9
    a = make_encoded([1] * n, feats_a, max_len=6)
    b = make_encoded([1] * n, feats_b, max_len=6)
    slices = tuple((None, slice(i, i + 1)) for i in range(4))
    assert sparsity_score(a, b, slices) == pytest.approx(1.0 - (1 / 4) / (2 * n), abs=1e-12)


def test_sparsity_disjoint_activities_is_zero():
    a = t([1, 1, 1], [0.5, 0.5, 0.5])
    b = t([2, 3], [0.5, 0.5])
    assert sparsity_score(a, b) == pytest.approx(0.0, abs=1e-12)


# ---------------------------------------------------------------------------
# delta


def test_delta_branch_examples():
    assert delta_score(0.8, 0.3) == pytest.approx(0.5)
    assert delta_score(0.8, 0.3) > 0  # case 1: factual confident, moved away
    assert delta_score(0.6, 0.6) == 0.0
    assert delta_score(0.3, 0.7) == pytest.approx(-0.4)
    assert delta_score(0.3, 0.1) == pytest.approx(0.2)


def test_delta_collapses_to_difference_on_grid():
    grid = [i * 0.05 for i in range(21)]
    for p in grid:
        for q in grid:
            assert delta_score(p, q) == p - q


def test_delta_rejects_out_of_range_inputs():
    with pytest.raises(ValueError):
        delta_score(1.2, 0.5)
    with pytest.raises(ValueError):
        delta_score(0.5, -0.1)


@settings(max_examples=200, deadline=None)
@given(
    st.floats(min_value=0.0, max_value=1.0),
    st.floats(min_value=0.0, max_value=1.0),
)
def test_delta_collapse_property(p, q):
    assert delta_score(p, q) == p - q


# ---------------------------------------------------------------------------
# combined score


class ScriptedPredictor:
    """predict_proba keyed by case_id, defaulting to 0.5."""

    def __init__(self, table):
        self.table = table

    def predict_proba(self, trace):
        return self.table.get(trace.case_id, 0.5)


def small_model():
    train = [
        t([1, 2], [0.1, 0.6]),
        t([1, 3], [0.2, 0.7]),
        t([2, 3], [0.4, 0.9]),
    ]
    encoder = identity_encoder(max_len=6)
    return fit(train, encoder, 1e-6, 5), train


def test_viability_of_candidate_equal_to_factual():
    model, train = small_model()
    factual = t([1, 2], [0.1, 0.6])
    predictor = ScriptedPredictor({})
    score = viability(factual, factual, predictor, model)
    assert score.similarity == 1.0
    assert score.sparsity == 1.0
    assert score.delta == 0.0
    assert score.total == pytest.approx(2.0 + score.feasibility)


def test_viability_with_stub_predictor_probabilities():
    model, _ = small_model()
    factual = t([1, 2], [0.1, 0.6])
    factual = make_encoded([1, 2], [[0.1], [0.6]], 6, case_id="f")
    candidate = make_encoded([1, 3], [[0.2], [0.7]], 6, case_id="c")
    predictor = ScriptedPredictor({"f": 0.9, "c": 0.1})
    score = viability(factual, candidate, predictor, model)
    assert score.delta == pytest.approx(0.8)


def test_viability_factual_class_zero_flips_probabilities():
    model, _ = small_model()
    factual = make_encoded([1, 2], [[0.1], [0.6]], 6, case_id="f")
    candidate = make_encoded([1, 3], [[0.2], [0.7]], 6, case_id="c")
    # factual predicted class 0 with p(o=0)=0.8; candidate p(o=0)=0.3
    predictor = ScriptedPredictor({"f": 0.2, "c": 0.7})
    score = viability(factual, candidate, predictor, model)
    assert score.delta == pytest.approx(0.8 - 0.3)


def test_viability_matches_independently_scripted_formulas():
    model, train = small_model()
    factual = make_encoded([1, 2], [[0.1], [0.6]], 6, case_id="f")
    candidate = make_encoded([2, 3], [[0.4], [0.8]], 6, case_id="c")
    predictor = ScriptedPredictor({"f": 0.7, "c": 0.4})

    acts_f = factual.activity_ids[:2].tolist()
    feats_f = factual.features[:2].tolist()
    acts_c = candidate.activity_ids[:2].tolist()
    feats_c = candidate.features[:2].tolist()
    expected_sim = 1.0 - naive_ssdld(acts_f, feats_f, acts_c, feats_c, "euclidean") / 4
    expected_spar = 1.0 - naive_ssdld(acts_f, feats_f, acts_c, feats_c, "count") / 4
    # counting oracle for the feasibility product
    from test_markov import oracle_feasibility

    expected_feas = oracle_feasibility(train, candidate, 3, 1e-6, 5)
    expected_delta = 0.7 - 0.4

    score = viability(factual, candidate, predictor, model)
    assert score.similarity == pytest.approx(expected_sim, abs=1e-9)
    assert score.sparsity == pytest.approx(expected_spar, abs=1e-9)
    assert score.feasibility == pytest.approx(expected_feas, abs=1e-9)
    assert score.delta == pytest.approx(expected_delta, abs=1e-9)
    assert score.total == expected_sim + expected_spar + score.feasibility + score.delta


def test_viability_total_is_exact_sum_and_ranges_hold():
    model, _ = small_model()
    rng = np.random.default_rng(66)
    factual = random_trace(rng)
    predictor = ScriptedPredictor({})
    scorer = ViabilityScorer(factual, predictor, model)
    for _ in range(100):
        candidate = random_trace(rng)
        score = scorer.score(candidate)
        assert score.total == score.similarity + score.sparsity + score.feasibility + score.delta
        assert 0.0 <= score.similarity <= 1.0
        assert 0.0 <= score.sparsity <= 1.0
        assert 0.0 <= score.feasibility <= 1.0
        assert -1.0 <= score.delta <= 1.0


def test_encoder_mismatch_is_configuration_error():
    model, _ = small_model()
    wrong_frame = make_encoded([1], [[0.5, 0.5]], 6)  # two feature columns
    with pytest.raises(ConfigurationError):
        ViabilityScorer(wrong_frame, ScriptedPredictor({}), model)
