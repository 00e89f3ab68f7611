"""Evolutionary optimizer for short marketing copy.

Keyword sets act as genomes, a crossover borrowed from differential
evolution recombines them, a pluggable text generator turns recombined
keywords back into copy (the mutation), and pluggable scorers (rubric
judge, synthetic CTR oracle, observed CTR) provide fitness.
"""

from .errors import EvocopyError
from .evolve import (
    CrossoverConfig,
    EvolutionConfig,
    RunReport,
    SelectionQuartet,
    blend_parents,
    crossover,
    evolve_step,
    recombine,
    run,
    select_quartet,
)
from .genome import Category, Copy, Keyword, KeywordSet, Population, normalize_keyword
from .reward import (
    LabeledCopy,
    PairwiseReport,
    RubricJudgeScorer,
    RubricScore,
    oracle_scorer,
    pairwise_accuracy,
    score,
)
from .simenv import (
    FeedbackObservation,
    FitnessUpdatePolicy,
    SyntheticCtrOracle,
    ingest_feedback,
    simulate_impressions,
    true_ctr,
)
from .store import CampaignRecord, load, load_bundled_corpora, save
from .textgen import (
    CampaignContext,
    DictionaryExtractor,
    GeneratedCopy,
    PromptSpec,
    TemplateGenerator,
    build_generation_prompt,
    extract_keywords,
    generate,
)

__version__ = "0.1.0"

__all__ = [
    "Category",
    "CampaignContext",
    "CampaignRecord",
    "Copy",
    "CrossoverConfig",
    "DictionaryExtractor",
    "EvolutionConfig",
    "EvocopyError",
    "FeedbackObservation",
    "FitnessUpdatePolicy",
    "GeneratedCopy",
    "Keyword",
    "KeywordSet",
    "LabeledCopy",
    "PairwiseReport",
    "Population",
    "PromptSpec",
    "RubricJudgeScorer",
    "RubricScore",
    "RunReport",
    "SelectionQuartet",
    "SyntheticCtrOracle",
    "TemplateGenerator",
    "build_generation_prompt",
    "blend_parents",
    "crossover",
    "recombine",
    "evolve_step",
    "extract_keywords",
    "generate",
    "ingest_feedback",
    "load",
    "load_bundled_corpora",
    "normalize_keyword",
    "oracle_scorer",
    "pairwise_accuracy",
    "run",
    "save",
    "score",
    "select_quartet",
    "simulate_impressions",
    "true_ctr",
]
