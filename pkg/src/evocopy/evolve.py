"""The modified GA engine.

One step selects a quartet (two fitness-proportional parents plus the
current best and worst copies), recombines their keyword sets with a
crossover borrowed from differential evolution, hands the recombined set
to a text generator (the mutation), scores the result and inserts it into
the population. The engine owns its RNG stream exclusively, so a run is a
pure function of (population, config, seed, backends).
"""

from __future__ import annotations

import hashlib
import random
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

from .errors import DegenerateFitness, EvocopyError, PopulationTooSmall, SegmentTruncated
from .genome import PROVENANCE_GENERATED, Copy, KeywordSet, Population
from .reward import FitnessScorer
from .textgen import CampaignContext, CopyGenerator, PromptSpec, generate

POOL_RULE_EXCLUDE_BEST_WORST = "exclude_best_worst"
POOL_RULE_SYMMETRIC_DIFFERENCE = "symmetric_difference"
POOL_RULES = (POOL_RULE_EXCLUDE_BEST_WORST, POOL_RULE_SYMMETRIC_DIFFERENCE)


@dataclass(frozen=True)
class SelectionQuartet:
    """The four copies driving one crossover: two sampled parents plus the
    population's current best and worst members."""

    parent_a: Copy
    parent_b: Copy
    best: Copy
    worst: Copy

    def __post_init__(self) -> None:
        if self.parent_a.id == self.parent_b.id:
            raise ValueError("the two sampled parents must be distinct copies")

    @property
    def ids(self) -> tuple[str, str, str, str]:
        return (self.parent_a.id, self.parent_b.id, self.best.id, self.worst.id)


@dataclass(frozen=True)
class CrossoverConfig:
    """Knobs for the random second segment of the recombined keyword set.

    ``pool_rule`` picks which intersection is excluded from the sampling
    pool: ``exclude_best_worst`` removes keywords the best and worst copies
    share, ``symmetric_difference`` removes the guaranteed best∩blended
    segment instead. Sampling includes each pool element independently with
    ``inclusion_probability``; results are then clamped into
    [min_genome_size, max_genome_size] (top-up and drop both work from the
    highest-sorting end of the pool).
    """

    pool_rule: str = POOL_RULE_EXCLUDE_BEST_WORST
    inclusion_probability: float = 0.5
    min_genome_size: int = 2
    max_genome_size: int = 5

    def __post_init__(self) -> None:
        if self.pool_rule not in POOL_RULES:
            raise ValueError(f"pool_rule must be one of {POOL_RULES}, got {self.pool_rule!r}")
        if not 0.0 <= self.inclusion_probability <= 1.0:
            raise ValueError("inclusion_probability must lie in [0, 1]")
        if self.min_genome_size < 1:
            raise ValueError("min_genome_size must be positive")
        if self.max_genome_size < self.min_genome_size:
            raise ValueError("max_genome_size must be >= min_genome_size")


@dataclass(frozen=True)
class EvolutionConfig:
    iterations: int = 10
    rng_seed: int = 0
    crossover: CrossoverConfig = field(default_factory=CrossoverConfig)
    population_capacity: Optional[int] = None
    degenerate_uniform_fallback: bool = False

    def __post_init__(self) -> None:
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if not 0 <= self.rng_seed < 2**64:
            raise ValueError("rng_seed must fit in 64 unsigned bits")
        if self.population_capacity is not None and self.population_capacity < 1:
            raise ValueError("population_capacity must be positive or None")


def select_quartet(
    pop: Population,
    rng: random.Random,
    *,
    uniform_fallback: bool = False,
) -> SelectionQuartet:
    """Choose the two parents plus the best/worst copies for one iteration.

    Parents are drawn without replacement with probabilities proportional
    to fitness (the second draw renormalizes over the remaining members);
    best/worst are the fitness argmax/argmin with ties broken by lowest
    id. An all-zero-fitness population raises DegenerateFitness unless
    ``uniform_fallback`` explicitly permits uniform sampling, so a broken
    scorer cannot silently degrade selection.
    """
    candidates = pop.eligible_members()
    if len(candidates) < 2:
        raise PopulationTooSmall(
            f"selection needs >= 2 scored members with genomes, found {len(candidates)}"
        )
    weights = [c.fitness for c in candidates]
    if sum(weights) <= 0.0:
        if not uniform_fallback:
            raise DegenerateFitness("all fitness scores are zero")
        weights = [1.0] * len(candidates)

    parent_a = _weighted_draw(candidates, weights, rng)
    remaining = [c for c in candidates if c.id != parent_a.id]
    remaining_weights = [w for c, w in zip(candidates, weights) if c.id != parent_a.id]
    if sum(remaining_weights) <= 0.0:
        # the only positive-fitness member was taken; fall back to uniform
        remaining_weights = [1.0] * len(remaining)
    parent_b = _weighted_draw(remaining, remaining_weights, rng)

    best = min(candidates, key=lambda c: (-c.fitness, c.id))
    worst = min(candidates, key=lambda c: (c.fitness, c.id))
    return SelectionQuartet(parent_a=parent_a, parent_b=parent_b, best=best, worst=worst)


def _weighted_draw(members: Sequence[Copy], weights: Sequence[float], rng: random.Random) -> Copy:
    total = sum(weights)
    threshold = rng.random() * total
    cumulative = 0.0
    for member, weight in zip(members, weights):
        cumulative += weight
        if threshold < cumulative:
            return member
    # float round-off: return the last member carrying weight
    for member, weight in zip(reversed(members), reversed(list(weights))):
        if weight > 0:
            return member
    return members[-1]


def blend_parents(base: KeywordSet, donor: KeywordSet, worst: KeywordSet) -> KeywordSet:
    """First crossover stage: strip the worst copy's keywords, merge the donor's.

    Keywords exclusive to the worst copy relative to the donor are removed
    from the base parent, and donor keywords the worst copy lacks are
    merged in: (base - (worst - donor)) | (donor - worst).
    """
    return base.difference(worst.difference(donor)).union(donor.difference(worst))


def recombine(
    best: KeywordSet,
    blended: KeywordSet,
    worst: KeywordSet,
    cfg: CrossoverConfig,
    rng: random.Random,
) -> KeywordSet:
    """Second crossover stage: guaranteed segment plus a random pool sample.

    Segment one is best & blended and is always fully included. Segment
    two samples the pool (minus segment one) element-wise with
    ``cfg.inclusion_probability``, iterating in deterministic sort order.
    Results below min_genome_size are topped up from the unused pool,
    highest sort order first; results above max_genome_size drop sampled
    elements first (highest sort order first). Segment one is only ever
    truncated when it alone exceeds max_genome_size, which emits a
    SegmentTruncated warning.
    """
    segment_one = best.intersection(blended)
    combined = best.union(blended)
    if cfg.pool_rule == POOL_RULE_EXCLUDE_BEST_WORST:
        pool = combined.difference(best.intersection(worst))
    else:
        pool = combined.difference(segment_one)

    sampled = [k for k in pool.difference(segment_one) if rng.random() < cfg.inclusion_probability]
    result = set(segment_one)
    result.update(sampled)

    if len(result) < cfg.min_genome_size:
        spare = sorted((k for k in pool if k not in result), key=lambda k: k.sort_key, reverse=True)
        for keyword in spare[: cfg.min_genome_size - len(result)]:
            result.add(keyword)

    if len(result) > cfg.max_genome_size:
        for keyword in sorted(sampled, key=lambda k: k.sort_key, reverse=True):
            if len(result) <= cfg.max_genome_size:
                break
            result.discard(keyword)
    if len(result) > cfg.max_genome_size:
        kept = sorted(result, key=lambda k: k.sort_key)[: cfg.max_genome_size]
        warnings.warn(
            f"guaranteed crossover segment exceeds max_genome_size={cfg.max_genome_size}; truncated",
            SegmentTruncated,
            stacklevel=2,
        )
        result = set(kept)
    return KeywordSet(result)


def crossover(q: SelectionQuartet, cfg: CrossoverConfig, rng: random.Random) -> KeywordSet:
    """Full two-stage recombination of the quartet's keyword sets."""
    blended = blend_parents(q.parent_a.genome, q.parent_b.genome, q.worst.genome)
    return recombine(q.best.genome, blended, q.worst.genome, cfg, rng)


@dataclass(frozen=True)
class IterationRecord:
    index: int
    quartet_ids: tuple[str, str, str, str]
    new_copy: Copy
    evicted_id: Optional[str]
    best_fitness: float


@dataclass
class RunReport:
    seed: int
    iterations: list[IterationRecord] = field(default_factory=list)
    error: Optional[str] = None

    @property
    def best_fitness_series(self) -> list[float]:
        return [record.best_fitness for record in self.iterations]


@dataclass(frozen=True)
class StepOutcome:
    new_copy: Copy
    quartet_ids: tuple[str, str, str, str]
    evicted_id: Optional[str]


def evolve_step(
    pop: Population,
    generator: CopyGenerator,
    scorer: FitnessScorer,
    cfg: EvolutionConfig,
    rng: random.Random,
    *,
    context: Optional[CampaignContext] = None,
    copy_id: Optional[str] = None,
) -> Copy:
    """Run one select -> crossover -> generate -> score -> insert cycle.

    Returns the newly created copy (already inserted, though it may have
    been evicted again if it scored worst). Generator and scorer failures
    propagate unchanged and leave the population unmodified. The new
    copy's genome is the set of requested keywords actually present in the
    generated text.
    """
    outcome = _evolve_step_outcome(pop, generator, scorer, cfg, rng, context=context, copy_id=copy_id)
    return outcome.new_copy


def _evolve_step_outcome(
    pop: Population,
    generator: CopyGenerator,
    scorer: FitnessScorer,
    cfg: EvolutionConfig,
    rng: random.Random,
    *,
    context: Optional[CampaignContext] = None,
    copy_id: Optional[str] = None,
) -> StepOutcome:
    quartet = select_quartet(pop, rng, uniform_fallback=cfg.degenerate_uniform_fallback)
    recombined = crossover(quartet, cfg.crossover, rng)
    if len(recombined) == 0:
        # degenerate corner (empty pool and empty guaranteed segment):
        # regenerate around the elite genome rather than abort the run
        recombined = quartet.best.genome

    context = context or CampaignContext()
    spec = PromptSpec(
        keywords=recombined,
        domain_knowledge=context.domain_knowledge,
        operator_experience=context.operator_experience,
        good_examples=((quartet.best.text, f"fitness {quartet.best.fitness:.3f}"),),
        bad_examples=((quartet.worst.text, f"fitness {quartet.worst.fitness:.3f}"),),
        style_directives=context.style_directives,
        max_copy_length=context.max_copy_length,
    )
    generated = generate(spec, generator)

    generation = 1 + max(
        quartet.parent_a.generation,
        quartet.parent_b.generation,
        quartet.best.generation,
        quartet.worst.generation,
    )
    new_copy = Copy(
        id=copy_id if copy_id is not None else _derive_copy_id(pop, quartet, generated.text),
        text=generated.text,
        genome=generated.keywords_used,
        fitness=None,
        provenance=PROVENANCE_GENERATED,
        generation=generation,
    )
    fitness = scorer.score_copy(new_copy)
    new_copy = new_copy.with_fitness(fitness)
    evicted = pop.insert(new_copy)
    return StepOutcome(
        new_copy=new_copy,
        quartet_ids=quartet.ids,
        evicted_id=evicted.id if evicted is not None else None,
    )


def _derive_copy_id(pop: Population, quartet: SelectionQuartet, text: str) -> str:
    material = "|".join((*quartet.ids, text))
    digest = hashlib.blake2b(material.encode("utf-8"), digest_size=5).hexdigest()
    candidate = f"x{digest}"
    suffix = 1
    existing = pop.ids()
    while candidate in existing:
        suffix += 1
        candidate = f"x{digest}-{suffix}"
    return candidate


def run(
    pop: Population,
    generator: CopyGenerator,
    scorer: FitnessScorer,
    cfg: EvolutionConfig,
    *,
    rng: Optional[random.Random] = None,
    context: Optional[CampaignContext] = None,
    id_prefix: str = "g",
    id_start: int = 0,
) -> RunReport:
    """Run the iteration loop with a single RNG stream derived from the seed.

    Domain errors abort the loop; the partial report is returned with its
    ``error`` field set. New copies get sequential ids
    ``{id_prefix}{id_start + i:05d}``.
    """
    if rng is None:
        rng = random.Random(cfg.rng_seed)
    report = RunReport(seed=cfg.rng_seed)
    for i in range(cfg.iterations):
        copy_id = f"{id_prefix}{id_start + i:05d}"
        try:
            outcome = _evolve_step_outcome(
                pop, generator, scorer, cfg, rng, context=context, copy_id=copy_id
            )
        except EvocopyError as exc:
            report.error = f"{type(exc).__name__}: {exc}"
            break
        report.iterations.append(
            IterationRecord(
                index=i,
                quartet_ids=outcome.quartet_ids,
                new_copy=outcome.new_copy,
                evicted_id=outcome.evicted_id,
                best_fitness=pop.best().fitness,  # type: ignore[arg-type]
            )
        )
    return report
