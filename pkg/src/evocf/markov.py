"""First-order Markov feasibility model over encoded traces.

The model estimates the probability of a trace as the product of an initial
activity probability, per-step transition probabilities, and per-event
attribute emission probabilities. Emissions are equal-width histograms over
[0, 1] for numeric attributes and category frequencies for categoricals, so
every factor is a genuine probability in [0, 1].

State indexing: activity ids 1..K are the real states; index 0 doubles as the
virtual END state in the transition matrix (padding never occurs inside an
unpadded prefix, so the reuse is unambiguous). END is estimated from the data
and used to terminate sampling, but the feasibility product stops at the last
real event and never includes an END factor.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .event_log import EncodedTrace, EncoderSpec, NumericCodec

END_ID = 0

DEFAULT_SMOOTHING = 1e-6
DEFAULT_BINS = 10


@dataclass(frozen=True)
class MarkovFeasibilityModel:
    """Fitted initial/transition/emission distributions plus their encoder."""

    initial_probs: np.ndarray           # (K+1,), index 0 held at 0
    transition: np.ndarray              # (K+1, K+1), column 0 = END, row 0 absorbing
    numeric_emissions: dict[int, dict[str, np.ndarray]]      # activity -> attr -> (B,)
    categorical_emissions: dict[int, dict[str, np.ndarray]]  # activity -> attr -> (C,)
    smoothing_epsilon: float
    n_bins: int
    encoder: EncoderSpec

    @property
    def vocab_size(self) -> int:
        return len(self.initial_probs) - 1

    def to_json(self) -> str:
        return json.dumps(
            {
                "initial_probs": self.initial_probs.tolist(),
                "transition": self.transition.tolist(),
                "numeric_emissions": {
                    str(a): {k: v.tolist() for k, v in attrs.items()}
                    for a, attrs in self.numeric_emissions.items()
                },
                "categorical_emissions": {
                    str(a): {k: v.tolist() for k, v in attrs.items()}
                    for a, attrs in self.categorical_emissions.items()
                },
                "smoothing_epsilon": self.smoothing_epsilon,
                "n_bins": self.n_bins,
                "encoder": json.loads(self.encoder.to_json()),
            },
            indent=2,
        )

    @classmethod
    def from_json(cls, text: str) -> "MarkovFeasibilityModel":
        raw = json.loads(text)
        return cls(
            initial_probs=np.array(raw["initial_probs"], dtype=float),
            transition=np.array(raw["transition"], dtype=float),
            numeric_emissions={
                int(a): {k: np.array(v, dtype=float) for k, v in attrs.items()}
                for a, attrs in raw["numeric_emissions"].items()
            },
            categorical_emissions={
                int(a): {k: np.array(v, dtype=float) for k, v in attrs.items()}
                for a, attrs in raw["categorical_emissions"].items()
            },
            smoothing_epsilon=float(raw["smoothing_epsilon"]),
            n_bins=int(raw["n_bins"]),
            encoder=EncoderSpec.from_json(json.dumps(raw["encoder"])),
        )


def _smooth(counts: np.ndarray, epsilon: float) -> np.ndarray:
    total = counts.sum()
    denom = total + epsilon * len(counts)
    if denom == 0.0:
        # state never observed and no smoothing: any valid distribution works,
        # because every product touching it already contains a zero factor
        return np.full(len(counts), 1.0 / len(counts))
    return (counts + epsilon) / denom


def _bin_index(value: float, n_bins: int) -> int:
    idx = int(value * n_bins)
    return min(max(idx, 0), n_bins - 1)


def fit(
    train: list[EncodedTrace],
    encoder: EncoderSpec,
    smoothing_epsilon: float = DEFAULT_SMOOTHING,
    n_bins: int = DEFAULT_BINS,
) -> MarkovFeasibilityModel:
    """Estimate the model by counting transitions and emissions in train.

    Padding positions are excluded from every count; the last real event of a
    trace counts one transition into END. Laplace smoothing adds epsilon to
    every cell and epsilon * (number of cells) to the denominator.
    """
    if not train:
        raise ValueError("train must be non-empty")
    if n_bins < 2:
        raise ValueError("n_bins must be >= 2")
    k = encoder.vocab_size

    initial_counts = np.zeros(k + 1)
    transition_counts = np.zeros((k + 1, k + 1))
    numeric_counts: dict[int, dict[str, np.ndarray]] = {
        a: {} for a in range(1, k + 1)
    }
    categorical_counts: dict[int, dict[str, np.ndarray]] = {
        a: {} for a in range(1, k + 1)
    }
    for a in range(1, k + 1):
        for codec, _ in encoder.slices():
            if isinstance(codec, NumericCodec):
                numeric_counts[a][codec.name] = np.zeros(n_bins)
            else:
                categorical_counts[a][codec.name] = np.zeros(len(codec.categories))

    for trace in train:
        ids = trace.activity_ids[: trace.valid_len]
        initial_counts[ids[0]] += 1
        for t in range(len(ids) - 1):
            transition_counts[ids[t], ids[t + 1]] += 1
        transition_counts[ids[-1], END_ID] += 1
        for t in range(len(ids)):
            a = int(ids[t])
            for codec, cols in encoder.slices():
                code = trace.features[t, cols]
                if isinstance(codec, NumericCodec):
                    numeric_counts[a][codec.name][_bin_index(float(code[0]), n_bins)] += 1
                else:
                    idx = codec.decode_index(code)
                    if idx is not None:
                        categorical_counts[a][codec.name][idx] += 1

    # initial distribution ranges over the K real activities only
    initial_probs = np.zeros(k + 1)
    initial_probs[1:] = _smooth(initial_counts[1:], smoothing_epsilon)

    transition = np.zeros((k + 1, k + 1))
    transition[END_ID, END_ID] = 1.0  # absorbing, keeps every row a distribution
    for a in range(1, k + 1):
        transition[a] = _smooth(transition_counts[a], smoothing_epsilon)

    numeric_emissions = {
        a: {name: _smooth(c, smoothing_epsilon) for name, c in attrs.items()}
        for a, attrs in numeric_counts.items()
    }
    categorical_emissions = {
        a: {name: _smooth(c, smoothing_epsilon) for name, c in attrs.items()}
        for a, attrs in categorical_counts.items()
    }
    return MarkovFeasibilityModel(
        initial_probs=initial_probs,
        transition=transition,
        numeric_emissions=numeric_emissions,
        categorical_emissions=categorical_emissions,
        smoothing_epsilon=smoothing_epsilon,
        n_bins=n_bins,
        encoder=encoder,
    )


def emission_probability(
    model: MarkovFeasibilityModel, activity_id: int, feature_row: np.ndarray
) -> float:
    """P(features | activity), factorized over attributes.

    A categorical sub-vector that is not exactly a known category code (within
    1e-9 per bit) has probability 0: the distribution ranges over real
    categories only, so arbitrary real-valued vectors fall outside its
    support.
    """
    p = 1.0
    for codec, cols in model.encoder.slices():
        code = feature_row[cols]
        if isinstance(codec, NumericCodec):
            probs = model.numeric_emissions[activity_id][codec.name]
            p *= float(probs[_bin_index(float(code[0]), model.n_bins)])
        else:
            idx = codec.decode_index(code)
            if idx is None:
                return 0.0
            p *= float(model.categorical_emissions[activity_id][codec.name][idx])
    return p


def feasibility(model: MarkovFeasibilityModel, trace: EncodedTrace) -> float:
    """Probability of the trace under the model; padding is ignored.

    The product is P(e0) * P(f0|e0) * prod_t P(et|et-1) * P(ft|et) over the
    valid prefix; the END transition is not included.
    """
    ids = trace.activity_ids[: trace.valid_len]
    p = float(model.initial_probs[ids[0]])
    p *= emission_probability(model, int(ids[0]), trace.features[0])
    for t in range(1, len(ids)):
        p *= float(model.transition[ids[t - 1], ids[t]])
        p *= emission_probability(model, int(ids[t]), trace.features[t])
    return p


def sample_sequence(
    model: MarkovFeasibilityModel, max_len: int, rng: np.random.Generator
) -> list[int]:
    """Sample an activity-id sequence; stops at END or max_len, length >= 1."""
    if max_len < 1:
        raise ValueError("max_len must be >= 1")
    k = model.vocab_size
    current = int(rng.choice(k + 1, p=model.initial_probs))
    sequence = [current]
    while len(sequence) < max_len:
        nxt = int(rng.choice(k + 1, p=model.transition[current]))
        if nxt == END_ID:
            break
        sequence.append(nxt)
        current = nxt
    return sequence


def sample_attributes(
    model: MarkovFeasibilityModel, activity_id: int, rng: np.random.Generator
) -> np.ndarray:
    """Sample one feature row (length D) from the activity's emissions."""
    if activity_id == END_ID:
        raise ValueError("cannot sample attributes for the PAD/END id")
    row = np.zeros(model.encoder.feature_dim)
    for codec, cols in model.encoder.slices():
        if isinstance(codec, NumericCodec):
            probs = model.numeric_emissions[activity_id][codec.name]
            bin_idx = int(rng.choice(model.n_bins, p=probs))
            row[cols] = (bin_idx + rng.random()) / model.n_bins
        else:
            probs = model.categorical_emissions[activity_id][codec.name]
            cat_idx = int(rng.choice(len(probs), p=probs))
            row[cols] = codec.encode(codec.categories[cat_idx])
    return row
