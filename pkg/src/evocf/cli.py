"""Command line entry point.

Subcommands cover the whole workflow: synthesize a desk-scale log, train the
reference predictor, fit the feasibility model, generate counterfactuals for
one factual, run the operator grid search or the baseline benchmark, and
render a factual/counterfactual pair side by side.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import predictor as predictor_mod
from .event_log import (
    CATEGORICAL,
    NUMERIC,
    AttributeSchema,
    CategoricalCodec,
    EventLog,
    PlantedRule,
    decode,
    encode,
    fit_encoder,
    load_csv,
    load_schema_config,
    synthesize_log,
    write_csv,
)
from .harness import (
    CANDIDATE_COLUMNS,
    ExperimentSpec,
    GRID_PRESET_135,
    GRID_PRESET_162,
    SyntheticSpec,
    _candidate_values,
    activities_string,
    CandidateRow,
    prepare_experiment,
    render_counterfactual,
    run_benchmark,
    run_grid,
    run_seed,
)
from .evolution import evolve
from .viability import ssdld


def _add_data_arguments(parser, require_log=False):
    parser.add_argument("--log", help="event log CSV", required=require_log)
    parser.add_argument("--schema", help="attribute schema JSON", required=require_log)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out", help="output directory")
    parser.add_argument(
        "--overrides", help="JSON object overriding experiment parameters", default=None
    )
    parser.add_argument(
        "--external-predictor",
        help="command scoring candidate CSVs (file protocol), replaces the trained model",
    )


def _spec_from_args(args, **defaults) -> ExperimentSpec:
    kwargs = dict(defaults)
    if args.log:
        kwargs["log_path"] = args.log
        kwargs["schema_path"] = args.schema
        kwargs["synthetic"] = None
    else:
        kwargs.setdefault("synthetic", SyntheticSpec())
    kwargs["seed"] = args.seed
    kwargs["output_dir"] = args.out
    if args.overrides:
        kwargs.update(json.loads(args.overrides))
    if "synthetic" in kwargs and isinstance(kwargs["synthetic"], dict):
        kwargs["synthetic"] = SyntheticSpec(**kwargs["synthetic"])
    return ExperimentSpec(**kwargs)


def _predictor_factory(args):
    if getattr(args, "external_predictor", None):
        return lambda encoder: predictor_mod.ExternalProcessPredictor(
            args.external_predictor, encoder
        )
    return None


def cmd_synthesize_log(args) -> int:
    rule = PlantedRule(args.critical) if args.critical else None
    log = synthesize_log(args.cases, args.activities, rule=rule, seed=args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(log, out / "log.csv")
    schema = {"attributes": [{"name": s.name, "kind": s.kind} for s in log.schemas]}
    (out / "schema.json").write_text(json.dumps(schema, indent=2))
    positives = sum(t.outcome for t in log.traces)
    print(f"wrote {len(log)} cases ({positives} positive) to {out / 'log.csv'}")
    return 0


def cmd_train_predictor(args) -> int:
    spec = _spec_from_args(args)
    prepared = prepare_experiment(spec)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "encoder.json").write_text(prepared.encoder.to_json())
    (out / "predictor.json").write_text(prepared.predictor.to_json())

    # held-out validation slice of the training data, for the metrics report
    rng = np.random.default_rng(spec.seed)
    order = rng.permutation(len(prepared.train))
    n_val = max(1, len(prepared.train) // 5)
    val = [prepared.train[i] for i in order[:n_val]]
    fit = [prepared.train[i] for i in order[n_val:]]
    metrics = {}
    for split_name, split in (("train", fit), ("validation", val), ("test", prepared.test)):
        m = predictor_mod.evaluate(prepared.predictor, split)
        metrics[split_name] = {
            "precision": m.precision,
            "recall": m.recall,
            "f1": m.f1,
            "support_positive": m.support_positive,
            "support_negative": m.support_negative,
        }
    (out / "metrics.json").write_text(json.dumps(metrics, indent=2))
    print(json.dumps(metrics["test"]))
    return 0


def cmd_fit_markov(args) -> int:
    spec = _spec_from_args(args)
    prepared = prepare_experiment(spec)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "markov.json").write_text(prepared.feas_model.to_json())
    print(f"wrote {out / 'markov.json'}")
    return 0


def cmd_generate(args) -> int:
    spec = _spec_from_args(args, cycles=args.cycles, n_factuals=1)
    prepared = prepare_experiment(spec, predictor_factory=_predictor_factory(args))
    if args.factual:
        pool = {t.case_id: t for t in prepared.test + prepared.train}
        if args.factual not in pool:
            print(f"case {args.factual!r} not found", file=sys.stderr)
            return 2
        factual = pool[args.factual]
    else:
        factual = prepared.factuals[0]

    config = replace(
        spec.build_config(args.config), seed=run_seed(spec.seed, args.config, 0)
    )
    result = evolve(factual, config, prepared.predictor, prepared.feas_model, prepared.train)
    top = result.population.individuals[: args.n]

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with (out / "counterfactuals.csv").open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(CANDIDATE_COLUMNS)
        for rank, ind in enumerate(top, start=1):
            row = CandidateRow(
                factual_id=factual.case_id,
                generator=args.config,
                rank=rank,
                score=ind.score,
                activities=activities_string(ind.genome, prepared.encoder),
                valid_len=ind.genome.valid_len,
            )
            writer.writerow(_candidate_values(row))

    # decoded events of the generated candidates, same layout as an event log
    decoded = tuple(
        decode(_with_case_id(ind.genome, f"cf_{rank:03d}"), prepared.encoder)
        for rank, ind in enumerate(top, start=1)
    )
    cf_log = EventLog(
        decoded,
        tuple(_schema_from_codec(codec) for codec in prepared.encoder.codecs),
        tuple(prepared.encoder.activity_to_id),
    )
    write_csv(cf_log, out / "counterfactual_events.csv")

    best = top[0]
    _, alignment = ssdld(factual, best.genome, "euclidean", prepared.encoder.slices())
    rendered = render_counterfactual(
        decode(factual, prepared.encoder),
        decode(_with_case_id(best.genome, "counterfactual"), prepared.encoder),
        alignment,
        p_factual=prepared.predictor.predict_proba(factual),
        p_counterfactual=prepared.predictor.predict_proba(best.genome),
    )
    (out / "best_render.md").write_text(rendered)
    print(
        f"best candidate: total={best.score.total:.4f} "
        f"(sim={best.score.similarity:.3f} spar={best.score.sparsity:.3f} "
        f"feas={best.score.feasibility:.3g} delta={best.score.delta:+.3f})"
    )
    return 0


def _with_case_id(genome, case_id: str):
    return dataclasses.replace(genome, case_id=case_id)


def _schema_from_codec(codec):
    if isinstance(codec, CategoricalCodec):
        return AttributeSchema(codec.name, CATEGORICAL, categories=codec.categories)
    return AttributeSchema(codec.name, NUMERIC)


def _parse_configs(args) -> tuple[str, ...]:
    if args.preset == "135":
        return GRID_PRESET_135
    if args.preset == "162":
        return GRID_PRESET_162
    if not args.configs:
        raise SystemExit("need --configs or --preset")
    return tuple(name.strip() for name in args.configs.split(",") if name.strip())


def cmd_grid(args) -> int:
    configs = _parse_configs(args)
    spec = _spec_from_args(
        args,
        config_names=configs,
        cycles=args.cycles,
        n_factuals=args.n_factuals,
    )
    report = run_grid(spec)
    for name, value in report.ranking:
        print(f"{value:8.4f}  {name}")
    return 0


def cmd_benchmark(args) -> int:
    configs = tuple(name.strip() for name in args.configs.split(",")) if args.configs else None
    spec = _spec_from_args(
        args,
        **(
            {
                "config_names": configs,
            }
            if configs
            else {}
        ),
        cycles=args.cycles,
        n_factuals=args.n_factuals,
        counterfactuals_per_factual=args.cfs,
    )
    prepared = prepare_experiment(spec, predictor_factory=_predictor_factory(args))
    report = run_benchmark(spec, prepared)
    for name, median in report.medians.items():
        print(f"{name}: median total viability {median:.4f}")
    return 0


def cmd_render(args) -> int:
    schemas = load_schema_config(args.schema)
    log = load_csv(args.log, schemas)
    cf_log = load_csv(args.counterfactual_log or args.log, schemas)
    by_case = {t.case_id: t for t in log.traces}
    cf_by_case = {t.case_id: t for t in cf_log.traces}
    if args.factual not in by_case or args.counterfactual not in cf_by_case:
        print("factual or counterfactual case not found", file=sys.stderr)
        return 2
    encoder = fit_encoder(log)
    factual = by_case[args.factual]
    counterfactual = cf_by_case[args.counterfactual]
    enc_f = encode(factual, encoder)
    enc_c = encode(counterfactual, encoder)
    _, alignment = ssdld(enc_f, enc_c, "euclidean", encoder.slices())
    rendered = render_counterfactual(factual, counterfactual, alignment)
    if args.out:
        Path(args.out).write_text(rendered)
    else:
        print(rendered, end="")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="evocf",
        description="Evolutionary counterfactual sequence generation for event logs",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synthesize-log", help="write a synthetic planted-rule log")
    p.add_argument("--cases", type=int, default=200)
    p.add_argument("--activities", type=int, default=5)
    p.add_argument("--critical", help="critical activity name for the planted rule")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synthesize_log)

    p = sub.add_parser("train-predictor", help="train and persist the reference predictor")
    _add_data_arguments(p)
    p.set_defaults(func=cmd_train_predictor)
    p = sub.add_parser("fit-markov", help="fit and persist the feasibility model")
    _add_data_arguments(p)
    p.set_defaults(func=cmd_fit_markov)

    p = sub.add_parser("generate", help="generate counterfactuals for one factual")
    _add_data_arguments(p)
    p.add_argument("--config", default="CBI-RWS-OPC-SBM-FSR")
    p.add_argument("--factual", help="case id of the factual (default: first sampled)")
    p.add_argument("--cycles", type=int, default=100)
    p.add_argument("--n", type=int, default=10, help="counterfactuals to emit")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("grid", help="operator grid search")
    _add_data_arguments(p)
    p.add_argument("--configs", help="comma-separated operator names")
    p.add_argument("--preset", choices=["135", "162"])
    p.add_argument("--cycles", type=int, default=10)
    p.add_argument("--n-factuals", type=int, default=2)
    p.set_defaults(func=cmd_grid)

    p = sub.add_parser("benchmark", help="evolutionary generators vs baselines")
    _add_data_arguments(p)
    p.add_argument("--configs", help="comma-separated operator names")
    p.add_argument("--cycles", type=int, default=200)
    p.add_argument("--n-factuals", type=int, default=10)
    p.add_argument("--cfs", type=int, default=50, help="counterfactuals per factual")
    p.set_defaults(func=cmd_benchmark)

    p = sub.add_parser("render", help="render a factual/counterfactual pair")
    p.add_argument("--log", required=True)
    p.add_argument("--schema", required=True)
    p.add_argument("--factual", required=True)
    p.add_argument("--counterfactual", required=True)
    p.add_argument("--counterfactual-log", help="CSV holding the counterfactual (default --log)")
    p.add_argument("--out")
    p.set_defaults(func=cmd_render)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
