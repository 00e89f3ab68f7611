"""Operator-facing command line: init, step, ingest, eval-reward, simulate.

Exit codes: 0 ok, 2 usage, 3 data error, 4 backend error. On failure the
human-readable message goes to stdout and a machine-parseable
``error_code=<ExceptionName>`` line goes to stderr; the campaign file is
never mutated on failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import random
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import errors as errors_module
from . import evolve, simenv, store
from .errors import EmptyInitialPopulation, EvocopyError
from .evolve import CrossoverConfig, EvolutionConfig
from .genome import PROVENANCE_HUMAN, Category, Copy, KeywordSet, Population
from .llmclient import LlmBackend, endpoint_config_from_file
from .reward import OracleScorer, RubricJudgeScorer, pairwise_accuracy
from .simenv import FitnessUpdatePolicy, SyntheticCtrOracle, true_ctr
from .textgen import DictionaryExtractor, TemplateGenerator, TEMPLATE_CALL_TO_ACTION


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except EvocopyError as exc:
        print(f"error: {exc}")
        print(f"error_code={type(exc).__name__}", file=sys.stderr)
        return exc.exit_code
    except (ValueError, KeyError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}")
        print(f"error_code={type(exc).__name__}", file=sys.stderr)
        return 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="evocopy",
        description="Evolutionary optimizer for short marketing copy.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_init = sub.add_parser("init", help="create a campaign from curated copies")
    p_init.add_argument("--campaign", required=True, help="campaign file to write")
    p_init.add_argument("--campaign-id", required=True)
    p_init.add_argument("--copies", required=True, help="CSV of initial copies: text[,ctr]")
    p_init.add_argument("--lexicon", required=True, help="JSON with categories and phrase lexicon")
    p_init.add_argument("--scorer", choices=["ctr", "oracle", "rubric-llm"], default="ctr")
    p_init.add_argument("--oracle-config")
    p_init.add_argument("--endpoint-config")
    p_init.add_argument("--seed", type=int, default=0)
    p_init.add_argument("--capacity", type=int)
    p_init.add_argument("--ctr-range", help="LO,HI fitness rescaling range (default 0,2*best)")
    p_init.add_argument("--iterations", type=int, default=10, help="default per-step iteration budget")
    p_init.add_argument("--json", action="store_true")
    p_init.set_defaults(handler=cmd_init)

    p_step = sub.add_parser("step", help="run evolution iterations on a campaign")
    p_step.add_argument("--campaign", required=True)
    p_step.add_argument("-n", "--iterations", type=int)
    p_step.add_argument("--generator", choices=["template", "llm"], default="template")
    p_step.add_argument("--scorer", choices=["oracle", "rubric-llm"], required=True)
    p_step.add_argument("--oracle-config")
    p_step.add_argument("--endpoint-config")
    p_step.add_argument("--seed", type=int, help="restart the RNG stream from this seed")
    p_step.add_argument("--pool-rule", choices=list(evolve.POOL_RULES))
    p_step.add_argument("--inclusion-prob", type=float)
    p_step.add_argument("--json", action="store_true")
    p_step.set_defaults(handler=cmd_step)

    p_ingest = sub.add_parser("ingest", help="fold observed feedback into a campaign")
    p_ingest.add_argument("--campaign", required=True)
    p_ingest.add_argument("--feedback", required=True, help="CSV or JSON feedback file")
    p_ingest.add_argument(
        "--policy",
        choices=[p.value for p in FitnessUpdatePolicy],
        default=FitnessUpdatePolicy.REPLACE_WITH_CTR.value,
    )
    p_ingest.add_argument("--json", action="store_true")
    p_ingest.set_defaults(handler=cmd_ingest)

    p_eval = sub.add_parser("eval-reward", help="pairwise rank accuracy of a scorer vs CTR")
    p_eval.add_argument(
        "--corpus",
        required=True,
        help="labeled corpus path, or built-in fixture: bundled-sms / bundled-banner",
    )
    p_eval.add_argument("--scorer", choices=["ctr", "oracle", "rubric-llm"], required=True)
    p_eval.add_argument("--oracle-config")
    p_eval.add_argument("--endpoint-config")
    p_eval.add_argument("--json", action="store_true")
    p_eval.set_defaults(handler=cmd_eval_reward)

    p_sim = sub.add_parser("simulate", help="closed-loop runs against a synthetic CTR oracle")
    p_sim.add_argument("--oracle-config", required=True)
    p_sim.add_argument("--iterations", type=int, default=30)
    p_sim.add_argument("--seeds", help="comma-separated seed list")
    p_sim.add_argument("--num-seeds", type=int, default=20)
    p_sim.add_argument("--initial-size", type=int, default=6)
    p_sim.add_argument("--genome-size", type=int, default=3)
    p_sim.add_argument("--capacity", type=int, default=10)
    p_sim.add_argument("--json", action="store_true")
    p_sim.set_defaults(handler=cmd_simulate)

    return parser


# --- helpers ----------------------------------------------------------------

def _read_copies_csv(path: str) -> list[tuple[str, Optional[float]]]:
    rows: list[tuple[str, Optional[float]]] = []
    with open(path, encoding="utf-8", newline="") as handle:
        for row in csv.reader(handle):
            if not row or not row[0].strip():
                continue
            text = row[0].strip()
            ctr = float(row[1]) if len(row) > 1 and row[1].strip() else None
            rows.append((text, ctr))
    if not rows:
        raise EmptyInitialPopulation(f"no usable rows in copies file {path!r}")
    return rows


def _read_lexicon(path: str) -> tuple[list[Category], dict[str, str]]:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    categories = [Category(c["id"], c.get("description", "")) for c in data["categories"]]
    phrases = dict(data["phrases"])
    known = {c.id for c in categories}
    for phrase, category_id in phrases.items():
        if category_id not in known:
            raise ValueError(f"lexicon phrase {phrase!r} uses unregistered category {category_id!r}")
    return categories, phrases


def _load_oracle(path: Optional[str]) -> SyntheticCtrOracle:
    if not path:
        raise ValueError("--oracle-config is required for the oracle scorer")
    return simenv.oracle_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def _build_scorer(args: argparse.Namespace):
    if args.scorer == "oracle":
        return OracleScorer(_load_oracle(args.oracle_config))
    if args.scorer == "rubric-llm":
        if not args.endpoint_config:
            raise ValueError("--endpoint-config is required for the rubric-llm scorer")
        return RubricJudgeScorer(LlmBackend(endpoint_config_from_file(args.endpoint_config)))
    raise ValueError(f"scorer {args.scorer!r} cannot score fresh copies")


def _parse_ctr_range(raw: Optional[str], observed: list[float]) -> tuple[float, float]:
    if raw:
        lo, hi = (float(part) for part in raw.split(","))
        return (lo, hi)
    best = max(observed) if observed else 0.0
    if best <= 0.0:
        return (0.0, 1.0)
    return (0.0, min(1.0, 2.0 * best))


# --- commands ---------------------------------------------------------------

def cmd_init(args: argparse.Namespace) -> int:
    rows = _read_copies_csv(args.copies)
    categories, phrases = _read_lexicon(args.lexicon)
    extractor = DictionaryExtractor(phrases)

    observed = [ctr for _, ctr in rows if ctr is not None]
    ctr_range = _parse_ctr_range(args.ctr_range, observed)

    copies: list[Copy] = []
    for i, (text, ctr) in enumerate(rows):
        genome = KeywordSet(extractor.extract(text, categories))
        copies.append(
            Copy(
                id=f"h{i:04d}",
                text=text,
                genome=genome,
                fitness=None,
                provenance=PROVENANCE_HUMAN,
                generation=0,
            )
        )

    if args.scorer == "ctr":
        scored = []
        for copy, (_, ctr) in zip(copies, rows):
            if ctr is None:
                raise ValueError(f"copy {copy.id} has no ctr column but --scorer=ctr")
            scored.append(copy.with_fitness(simenv.rescale_ctr(ctr, ctr_range)))
        copies = scored
    else:
        scorer = _build_scorer(args)
        copies = [copy.with_fitness(scorer.score_copy(copy)) for copy in copies]

    config = EvolutionConfig(
        iterations=args.iterations,
        rng_seed=args.seed,
        crossover=CrossoverConfig(),
        population_capacity=args.capacity,
    )
    record = store.CampaignRecord(
        campaign_id=args.campaign_id,
        categories=categories,
        population=Population(members=copies, capacity=args.capacity, campaign_id=args.campaign_id),
        config=config,
        ctr_range=ctr_range,
    )
    store.save(record, args.campaign)

    if args.json:
        print(
            store.canonical_dumps(
                {
                    "campaign_id": record.campaign_id,
                    "members": len(record.population),
                    "best_fitness": record.population.best().fitness,
                    "ctr_range": list(ctr_range),
                }
            ),
            end="",
        )
    else:
        print(f"campaign {record.campaign_id!r}: {len(record.population)} copies -> {args.campaign}")
        best = record.population.best()
        print(f"best fitness {best.fitness:.3f} ({best.id}: {best.text})")
    return 0


def cmd_step(args: argparse.Namespace) -> int:
    record = store.load(args.campaign)
    iterations = args.iterations if args.iterations is not None else record.config.iterations

    crossover = record.config.crossover
    if args.pool_rule is not None or args.inclusion_prob is not None:
        crossover = CrossoverConfig(
            pool_rule=args.pool_rule or crossover.pool_rule,
            inclusion_probability=(
                args.inclusion_prob
                if args.inclusion_prob is not None
                else crossover.inclusion_probability
            ),
            min_genome_size=crossover.min_genome_size,
            max_genome_size=crossover.max_genome_size,
        )
    config = EvolutionConfig(
        iterations=iterations,
        rng_seed=args.seed if args.seed is not None else record.config.rng_seed,
        crossover=crossover,
        population_capacity=record.config.population_capacity,
        degenerate_uniform_fallback=record.config.degenerate_uniform_fallback,
    )

    if args.seed is not None or record.rng_cursor is None:
        rng = random.Random(config.rng_seed)
    else:
        rng = random.Random()
        rng.setstate(store.rng_state_from_json(record.rng_cursor))

    generator = TemplateGenerator() if args.generator == "template" else _build_generator(args)
    scorer = _build_scorer(args)

    before = list(record.population.members)
    report = evolve.run(
        record.population,
        generator,
        scorer,
        config,
        rng=rng,
        id_start=record.minted_copies(),
    )
    if report.error is not None:
        print(f"error: run aborted after {len(report.iterations)} iterations: {report.error}")
        code = report.error.split(":", 1)[0]
        print(f"error_code={code}", file=sys.stderr)
        exc_type = getattr(errors_module, code, None)
        if isinstance(exc_type, type) and issubclass(exc_type, EvocopyError):
            return exc_type.exit_code
        return 4

    known = {c.id: c for c in before}
    for item in report.iterations:
        known[item.new_copy.id] = item.new_copy
    final_ids = record.population.ids()
    archived_ids = {c.id for c in record.archived}
    for copy_id, copy in known.items():
        if copy_id not in final_ids and copy_id not in archived_ids:
            record.archived.append(copy)

    record.history.append(report)
    record.config = config
    record.rng_cursor = store.rng_state_to_json(rng.getstate())
    store.save(record, args.campaign)

    if args.json:
        print(
            store.canonical_dumps(
                {
                    "report": store._report_to_dict(report),
                    "best_fitness": record.population.best().fitness,
                    "population_ids": sorted(record.population.ids()),
                }
            ),
            end="",
        )
    else:
        for item in report.iterations:
            copy = item.new_copy
            print(f"[{item.index}] {copy.id} fitness={copy.fitness:.3f} {copy.text}")
        best = record.population.best()
        print(f"best fitness {best.fitness:.3f} ({best.id})")
    return 0


def _build_generator(args: argparse.Namespace) -> LlmBackend:
    if not args.endpoint_config:
        raise ValueError("--endpoint-config is required for the llm generator")
    return LlmBackend(endpoint_config_from_file(args.endpoint_config))


def cmd_ingest(args: argparse.Namespace) -> int:
    record = store.load(args.campaign)
    observations = simenv.read_feedback_file(args.feedback)
    simenv.ingest_feedback(record, observations, FitnessUpdatePolicy(args.policy))
    store.save(record, args.campaign)
    waves = sorted({obs.wave for obs in observations})
    if args.json:
        print(
            store.canonical_dumps(
                {
                    "ingested": len(observations),
                    "waves": waves,
                    "policy": args.policy,
                }
            ),
            end="",
        )
    else:
        print(f"ingested {len(observations)} observations (waves {waves}) with policy {args.policy}")
    return 0


def cmd_eval_reward(args: argparse.Namespace) -> int:
    if args.corpus == "bundled-sms":
        corpus = store.load_bundled_corpora()[0]
    elif args.corpus == "bundled-banner":
        corpus = store.load_bundled_corpora()[1]
    else:
        corpus = store.load_labeled_corpus(args.corpus)

    if args.scorer == "ctr":
        scores = {labeled.copy.id: labeled.ctr for labeled in corpus}
    else:
        scorer = _build_scorer(args)
        scores = {labeled.copy.id: scorer.score_copy(labeled.copy) for labeled in corpus}

    report = pairwise_accuracy(corpus, scores)
    accuracy = report.accuracy
    if args.json:
        print(
            store.canonical_dumps(
                {
                    "pairs_total": report.pairs_total,
                    "pairs_correct": report.pairs_correct,
                    "pairs_tied_score": report.pairs_tied_score,
                    "accuracy": accuracy,
                }
            ),
            end="",
        )
    else:
        shown = f"{accuracy:.3f}" if accuracy is not None else "n/a"
        print(
            f"pairs={report.pairs_total} correct={report.pairs_correct} "
            f"tied={report.pairs_tied_score} accuracy={shown}"
        )
    return 0


def run_closed_loop(
    oracle: SyntheticCtrOracle,
    seed: int,
    *,
    iterations: int = 30,
    initial_size: int = 6,
    genome_size: int = 3,
    capacity: Optional[int] = 10,
    crossover: Optional[CrossoverConfig] = None,
) -> tuple[float, float]:
    """One seeded closed-loop trial; returns (initial best, final best) true CTR."""
    rng = random.Random(seed)
    members = []
    for i in range(initial_size):
        genome = KeywordSet(rng.sample(oracle.vocabulary, genome_size))
        text = "，".join(list(genome.texts()) + [TEMPLATE_CALL_TO_ACTION])
        members.append(Copy(id=f"h{i:04d}", text=text, genome=genome, provenance=PROVENANCE_HUMAN))
    scorer = OracleScorer(oracle)
    members = [c.with_fitness(scorer.score_copy(c)) for c in members]
    pop = Population(members=members, capacity=capacity, campaign_id=f"sim-{seed}")
    initial_best = max(true_ctr(oracle, c.genome) for c in members)

    config = EvolutionConfig(
        iterations=iterations,
        rng_seed=seed,
        crossover=crossover if crossover is not None else CrossoverConfig(),
        population_capacity=capacity,
    )
    report = evolve.run(pop, TemplateGenerator(), scorer, config, rng=rng)
    if report.error is not None:
        raise EvocopyError(f"closed-loop run failed: {report.error}")
    final_best = max(true_ctr(oracle, c.genome) for c in pop.members)
    return initial_best, final_best


def cmd_simulate(args: argparse.Namespace) -> int:
    oracle = _load_oracle(args.oracle_config)
    if args.seeds:
        seeds = [int(part) for part in args.seeds.split(",") if part.strip()]
    else:
        seeds = list(range(args.num_seeds))
    if not seeds:
        raise ValueError("no seeds to simulate")

    rows = []
    for seed in seeds:
        initial, final = run_closed_loop(
            oracle,
            seed,
            iterations=args.iterations,
            initial_size=args.initial_size,
            genome_size=args.genome_size,
            capacity=args.capacity,
        )
        improvement = (final - initial) / initial if initial > 0 else float("inf")
        rows.append({"seed": seed, "initial_ctr": initial, "final_ctr": final, "improvement": improvement})

    mean_initial = sum(r["initial_ctr"] for r in rows) / len(rows)
    mean_final = sum(r["final_ctr"] for r in rows) / len(rows)
    mean_improvement = sum(r["improvement"] for r in rows) / len(rows)
    improved = sum(1 for r in rows if r["improvement"] >= 0.30)
    aggregate = {
        "seeds": len(rows),
        "mean_initial_ctr": mean_initial,
        "mean_final_ctr": mean_final,
        "mean_improvement": mean_improvement,
        "improved_30pct": improved,
    }

    if args.json:
        print(store.canonical_dumps({"rows": rows, "aggregate": aggregate}), end="")
    else:
        for r in rows:
            print(
                f"seed={r['seed']} initial={r['initial_ctr']:.4f} "
                f"final={r['final_ctr']:.4f} improvement={r['improvement'] * 100:+.1f}%"
            )
        print(
            f"aggregate seeds={len(rows)} mean_initial={mean_initial:.4f} "
            f"mean_final={mean_final:.4f} mean_improvement={mean_improvement * 100:+.1f}% "
            f"improved>=30%: {improved}/{len(rows)}"
        )
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
