import random
import warnings

import pytest
from hypothesis import given, settings, strategies as st

from evocopy.errors import (
    DegenerateFitness,
    GenerationFailed,
    PopulationTooSmall,
    ScoreFailed,
    SegmentTruncated,
)
from evocopy.evolve import (
    POOL_RULE_EXCLUDE_BEST_WORST,
    POOL_RULE_SYMMETRIC_DIFFERENCE,
    CrossoverConfig,
    EvolutionConfig,
    SelectionQuartet,
    recombine,
    blend_parents,
    crossover,
    evolve_step,
    run,
    select_quartet,
)
from evocopy.genome import Copy, Keyword, KeywordSet, Population
from evocopy.textgen import TemplateGenerator


def ks(*texts):
    return KeywordSet(Keyword(t, "c") for t in texts)


def member(copy_id, fitness, genome=None, generation=0):
    return Copy(
        id=copy_id,
        text=copy_id,
        genome=genome if genome is not None else ks("a"),
        fitness=fitness,
        generation=generation,
    )


class ConstantScorer:
    def __init__(self, value):
        self.value = value

    def score_copy(self, copy):
        return self.value


class FailingScorer:
    def score_copy(self, copy):
        raise ScoreFailed("scorer down")


class FailingGenerator:
    def complete(self, prompt):
        raise GenerationFailed("generator down")


class TestSelectQuartet:
    def test_weight_ratio_one_to_three(self):
        # weights in ratio 1:3 -> heavier member drawn 75% of the time
        pop = Population(members=[member("light", 0.25), member("heavy", 0.75)])
        rng = random.Random(7)
        draws = sum(1 for _ in range(20_000) if select_quartet(pop, rng).parent_a.id == "heavy")
        assert draws / 20_000 == pytest.approx(0.75, abs=0.02)

    def test_equal_weights_are_symmetric(self):
        pop = Population(members=[member(f"m{i}", 0.5) for i in range(4)])
        rng = random.Random(11)
        counts = {f"m{i}": 0 for i in range(4)}
        for _ in range(20_000):
            counts[select_quartet(pop, rng).parent_a.id] += 1
        for count in counts.values():
            assert count / 20_000 == pytest.approx(0.25, abs=0.02)

    def test_good_and_bad_are_argmax_argmin(self):
        pop = Population(members=[member("m1", 0.2), member("m2", 0.5), member("m3", 0.9)])
        q = select_quartet(pop, random.Random(0))
        assert q.best.id == "m3"
        assert q.worst.id == "m1"

    def test_ties_break_by_lowest_id(self):
        pop = Population(members=[member("b", 0.5), member("a", 0.5), member("c", 0.5)])
        q = select_quartet(pop, random.Random(0))
        assert q.best.id == "a"
        assert q.worst.id == "a"

    def test_pair_is_distinct(self):
        pop = Population(members=[member("a", 0.99), member("b", 0.01)])
        rng = random.Random(3)
        for _ in range(500):
            q = select_quartet(pop, rng)
            assert q.parent_a.id != q.parent_b.id

    def test_too_small_population(self):
        pop = Population(members=[member("a", 0.5)])
        with pytest.raises(PopulationTooSmall):
            select_quartet(pop, random.Random(0))

    def test_all_zero_fitness_is_an_error_by_default(self):
        pop = Population(members=[member("a", 0.0), member("b", 0.0)])
        with pytest.raises(DegenerateFitness):
            select_quartet(pop, random.Random(0))
        q = select_quartet(pop, random.Random(0), uniform_fallback=True)
        assert {q.parent_a.id, q.parent_b.id} == {"a", "b"}

    def test_zero_weight_member_still_selectable_as_c1(self):
        # only one member carries weight; the residual draw must still
        # produce a distinct partner
        pop = Population(members=[member("a", 1.0), member("b", 0.0)])
        q = select_quartet(pop, random.Random(5))
        assert q.parent_a.id == "a"
        assert q.parent_b.id == "b"


class TestBlendParents:
    def test_hand_oracle_case(self):
        # worst-exclusive relative to donor = {b,e}; {a,b,c} minus that = {a,c}; plus donor survivors {c,d}
        result = blend_parents(ks("a", "b", "c"), ks("c", "d"), ks("b", "e"))
        assert result == ks("a", "c", "d")

    def test_identical_sets_pass_through(self):
        s = ks("x", "y")
        assert blend_parents(s, s, s) == s

    def test_pure_amalgamation(self):
        assert blend_parents(ks(), ks("x"), ks()) == ks("x")

    @given(
        st.sets(st.sampled_from("abcdefgh")),
        st.sets(st.sampled_from("abcdefgh")),
        st.sets(st.sampled_from("abcdefgh")),
    )
    def test_never_emits_pure_worst_keywords_and_keeps_donor_survivors(self, base, donor, worst):
        result = blend_parents(ks(*base), ks(*donor), ks(*worst))
        texts = set(result.texts())
        assert not texts & (worst - (base | donor))
        assert (donor - worst) <= texts


def cfg(**kwargs):
    defaults = dict(inclusion_probability=0.5, min_genome_size=1, max_genome_size=8)
    defaults.update(kwargs)
    return CrossoverConfig(**defaults)


class TestRecombine:
    def test_full_inclusion(self):
        result = recombine(
            ks("a", "d", "f"), ks("a", "c", "d"), ks("b", "e"),
            cfg(inclusion_probability=1.0), random.Random(0),
        )
        assert result == ks("a", "c", "d", "f")

    def test_identical_sets_collapse_pool(self):
        s = ks("p", "q")
        for probability in (0.0, 0.3, 1.0):
            result = recombine(s, s, s, cfg(inclusion_probability=probability), random.Random(1))
            assert result == s

    def test_zero_inclusion_keeps_guaranteed_segment(self):
        result = recombine(
            ks("a", "d", "f"), ks("a", "c", "d"), ks("b", "e"),
            cfg(inclusion_probability=0.0), random.Random(0),
        )
        assert result == ks("a", "d")

    def test_pool_rules_differ_on_good_bad_overlap(self):
        best, blended, worst = ks("a", "b"), ks("b", "c"), ks("a")
        literal = recombine(
            best, blended, worst,
            cfg(pool_rule=POOL_RULE_EXCLUDE_BEST_WORST, inclusion_probability=1.0),
            random.Random(0),
        )
        # pool = {a,b,c} - {a}; sampled c joins guaranteed {b}
        assert literal == ks("b", "c")
        symmetric = recombine(
            best, blended, worst,
            cfg(pool_rule=POOL_RULE_SYMMETRIC_DIFFERENCE, inclusion_probability=1.0),
            random.Random(0),
        )
        # pool = {a,b,c} - {b}
        assert symmetric == ks("a", "b", "c")

    def test_top_up_uses_highest_sort_order_pool_elements(self):
        # empty guaranteed segment, nothing sampled: top up from the pool end
        result = recombine(
            ks("a", "b"), ks("c", "d"), ks(),
            cfg(inclusion_probability=0.0, min_genome_size=2), random.Random(0),
        )
        assert result == ks("c", "d")

    def test_drop_removes_sampled_elements_before_guaranteed(self):
        result = recombine(
            ks("a", "b", "c"), ks("a", "b", "c", "d", "e"), ks(),
            cfg(inclusion_probability=1.0, max_genome_size=4), random.Random(0),
        )
        # guaranteed {a,b,c} intact, one of the sampled {d,e} dropped (e first)
        assert result == ks("a", "b", "c", "d")

    def test_guaranteed_segment_truncation_warns(self):
        with pytest.warns(SegmentTruncated):
            result = recombine(
                ks("a", "b", "c", "d"), ks("a", "b", "c", "d"), ks(),
                cfg(inclusion_probability=0.0, min_genome_size=1, max_genome_size=2),
                random.Random(0),
            )
        assert result == ks("a", "b")

    @settings(max_examples=200)
    @given(
        st.sets(st.sampled_from("abcdefgh")),
        st.sets(st.sampled_from("abcdefgh")),
        st.sets(st.sampled_from("abcdefgh")),
        st.sampled_from([0.0, 1.0]),
        st.sampled_from([POOL_RULE_EXCLUDE_BEST_WORST, POOL_RULE_SYMMETRIC_DIFFERENCE]),
    )
    def test_guaranteed_segment_always_included(self, good, temp, bad, probability, rule):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", SegmentTruncated)
            result = recombine(
                ks(*good), ks(*temp), ks(*bad),
                cfg(pool_rule=rule, inclusion_probability=probability),
                random.Random(0),
            )
        assert (good & temp) <= set(result.texts())

    @given(
        st.sets(st.sampled_from("abcdefgh")),
        st.sets(st.sampled_from("abcdefgh")),
        st.sets(st.sampled_from("abcdefgh")),
    )
    def test_literal_pool_never_leaks_best_worst_overlap(self, good, temp, bad):
        result = recombine(
            ks(*good), ks(*temp), ks(*bad),
            cfg(pool_rule=POOL_RULE_EXCLUDE_BEST_WORST, inclusion_probability=1.0,
                min_genome_size=1, max_genome_size=8),
            random.Random(0),
        )
        # everything beyond the guaranteed segment comes from the pool,
        # which excludes the best/worst overlap
        extras = set(result.texts()) - (good & temp)
        assert not extras & (good & bad)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            CrossoverConfig(pool_rule="bogus")
        with pytest.raises(ValueError):
            CrossoverConfig(inclusion_probability=1.5)
        with pytest.raises(ValueError):
            CrossoverConfig(min_genome_size=3, max_genome_size=2)


class TestCrossover:
    def quartet(self, first, second, best, worst):
        return SelectionQuartet(
            parent_a=member("pa", 0.5, first),
            parent_b=member("pb", 0.5, second),
            best=member("best", 0.9, best),
            worst=member("worst", 0.1, worst),
        )

    def test_chained_hand_oracle(self):
        q = self.quartet(ks("a", "b", "c"), ks("c", "d"), ks("a", "d", "f"), ks("b", "e"))
        result = crossover(q, cfg(inclusion_probability=1.0), random.Random(0))
        assert result == ks("a", "c", "d", "f")

    def test_all_equal_genomes(self):
        s = ks("x", "y", "z")
        q = self.quartet(s, s, s, s)
        assert crossover(q, cfg(), random.Random(0)) == s

    def test_disjoint_parents_top_up_from_pool(self):
        q = self.quartet(ks("a", "b"), ks("c"), ks("x", "y"), ks())
        result = crossover(q, cfg(inclusion_probability=0.0, min_genome_size=2), random.Random(0))
        # guaranteed segment empty; pool = {a,b,c,x,y}; top-up takes y, x
        assert result == ks("x", "y")


class TestEvolveStep:
    def make_pop(self, capacity=None):
        members = [
            member("h0", 0.4, ks("a", "b")),
            member("h1", 0.6, ks("b", "c")),
            member("h2", 0.8, ks("c", "d")),
        ]
        return Population(members=members, capacity=capacity, campaign_id="t")

    def test_top_scorer_becomes_best(self):
        pop = self.make_pop()
        config = EvolutionConfig(iterations=1, rng_seed=1)
        new_copy = evolve_step(pop, TemplateGenerator(), ConstantScorer(1.0), config, random.Random(1))
        assert new_copy.fitness == 1.0
        assert pop.best().id == new_copy.id

    def test_worst_scorer_gets_evicted_from_full_population(self):
        pop = self.make_pop(capacity=3)
        before = list(pop.members)
        config = EvolutionConfig(iterations=1, rng_seed=1, population_capacity=3)
        new_copy = evolve_step(pop, TemplateGenerator(), ConstantScorer(0.0), config, random.Random(1))
        assert new_copy.id not in pop.ids()
        assert pop.members == before

    def test_deterministic_given_seed(self):
        results = []
        for _ in range(2):
            pop = self.make_pop()
            config = EvolutionConfig(iterations=1, rng_seed=99)
            new_copy = evolve_step(
                pop, TemplateGenerator(), ConstantScorer(0.5), config, random.Random(99)
            )
            results.append((new_copy.id, new_copy.text, new_copy.genome))
        assert results[0] == results[1]

    def test_generation_is_one_past_max_parent(self):
        members = [
            member("h0", 0.4, ks("a", "b"), generation=2),
            member("h1", 0.6, ks("b", "c"), generation=5),
        ]
        pop = Population(members=members)
        config = EvolutionConfig(iterations=1, rng_seed=1)
        new_copy = evolve_step(pop, TemplateGenerator(), ConstantScorer(0.5), config, random.Random(1))
        assert new_copy.generation == 6

    def test_generator_failure_leaves_population_unmodified(self):
        pop = self.make_pop()
        before = list(pop.members)
        config = EvolutionConfig(iterations=1, rng_seed=1)
        with pytest.raises(GenerationFailed):
            evolve_step(pop, FailingGenerator(), ConstantScorer(0.5), config, random.Random(1))
        assert pop.members == before

    def test_scorer_failure_leaves_population_unmodified(self):
        pop = self.make_pop()
        before = list(pop.members)
        config = EvolutionConfig(iterations=1, rng_seed=1)
        with pytest.raises(ScoreFailed):
            evolve_step(pop, TemplateGenerator(), FailingScorer(), config, random.Random(1))
        assert pop.members == before


class SequenceScorer:
    """Returns scripted values in order, then repeats the last one."""

    def __init__(self, values):
        self.values = list(values)

    def score_copy(self, copy):
        if len(self.values) > 1:
            return self.values.pop(0)
        return self.values[0]


class TestRun:
    def test_zero_iterations_rejected(self):
        with pytest.raises(ValueError):
            EvolutionConfig(iterations=0)

    def test_report_shape_and_ids(self):
        pop = Population(
            members=[member("h0", 0.4, ks("a", "b")), member("h1", 0.6, ks("b", "c"))],
            capacity=5,
        )
        config = EvolutionConfig(iterations=3, rng_seed=2, population_capacity=5)
        report = run(pop, TemplateGenerator(), ConstantScorer(0.5), config)
        assert report.error is None
        assert [i.new_copy.id for i in report.iterations] == ["g00000", "g00001", "g00002"]
        assert all(len(i.quartet_ids) == 4 for i in report.iterations)

    def test_best_fitness_series_non_decreasing(self):
        pop = Population(
            members=[member("h0", 0.3, ks("a", "b")), member("h1", 0.5, ks("b", "c"))],
            capacity=4,
        )
        config = EvolutionConfig(iterations=6, rng_seed=3, population_capacity=4)
        scorer = SequenceScorer([0.1, 0.7, 0.2, 0.9, 0.4, 0.95])
        report = run(pop, TemplateGenerator(), scorer, config)
        series = report.best_fitness_series
        assert series == sorted(series)

    def test_partial_report_on_midway_failure(self):
        class FailAfter:
            def __init__(self, n):
                self.n = n

            def score_copy(self, copy):
                if self.n == 0:
                    raise ScoreFailed("budget exhausted")
                self.n -= 1
                return 0.5

        pop = Population(
            members=[member("h0", 0.4, ks("a", "b")), member("h1", 0.6, ks("b", "c"))],
        )
        config = EvolutionConfig(iterations=5, rng_seed=4)
        report = run(pop, TemplateGenerator(), FailAfter(2), config)
        assert len(report.iterations) == 2
        assert report.error.startswith("ScoreFailed")

    def test_identical_inputs_give_identical_transcripts(self):
        def one_run():
            pop = Population(
                members=[member("h0", 0.4, ks("a", "b")), member("h1", 0.6, ks("b", "c"))],
                capacity=4,
            )
            config = EvolutionConfig(iterations=5, rng_seed=42, population_capacity=4)
            report = run(pop, TemplateGenerator(), SequenceScorer([0.2, 0.8, 0.5, 0.6, 0.3]), config)
            return [
                (i.index, i.quartet_ids, i.new_copy.id, i.new_copy.text, i.new_copy.fitness, i.evicted_id)
                for i in report.iterations
            ]

        assert one_run() == one_run()
