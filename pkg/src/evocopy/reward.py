"""Fitness scoring: the three-criterion rubric judge and the pairwise evaluator.

A judge grades copy on linguistic expression, logical structure and
information density, reasoning before each score; the aggregate (a
weighted mean, uniform by default) is the fitness that drives selection.
``pairwise_accuracy`` validates any scorer against observed CTRs: a pair
is predicted correctly when the higher-scored copy also has the higher
CTR.
"""

from __future__ import annotations

import itertools
import random
import warnings
from dataclasses import dataclass, field
from typing import Mapping, Optional, Protocol, Sequence

from .errors import MalformedJudgeOutput, MissingScore, ScoreFailed, ScoreOutOfRange
from .genome import Copy
from .llmclient import extract_json_object
from .simenv import SyntheticCtrOracle, true_ctr
from .textgen import CampaignContext

CRITERIA = ("linguistic_expression", "logical_structure", "information_density")
UNIFORM_WEIGHTS = (1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0)

RETRY_INSTRUCTION = (
    "Your previous reply could not be parsed. Respond again with ONLY one JSON "
    "object in the required shape and no other text."
)


class JudgeBackend(Protocol):
    """Backend contract: rubric prompt in, raw completion text out."""

    def complete(self, prompt: str) -> str: ...


class FitnessScorer(Protocol):
    """Anything that can assign a [0, 1] fitness to a copy."""

    def score_copy(self, copy: Copy) -> float: ...


@dataclass(frozen=True)
class RubricScore:
    """Per-criterion judge scores and their aggregate fitness."""

    linguistic_expression: float
    logical_structure: float
    information_density: float
    aggregate: float
    rationales: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for name in CRITERIA + ("aggregate",):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {value}")

    @classmethod
    def from_criteria(
        cls,
        linguistic_expression: float,
        logical_structure: float,
        information_density: float,
        rationales: Optional[Mapping[str, str]] = None,
        weights: Optional[Sequence[float]] = None,
    ) -> "RubricScore":
        weights = _checked_weights(weights)
        scores = (linguistic_expression, logical_structure, information_density)
        aggregate = sum(w * s for w, s in zip(weights, scores))
        return cls(*scores, aggregate=aggregate, rationales=dict(rationales or {}))


def _checked_weights(weights: Optional[Sequence[float]]) -> tuple[float, float, float]:
    if weights is None:
        return UNIFORM_WEIGHTS
    weights = tuple(float(w) for w in weights)
    if len(weights) != 3 or any(w < 0 for w in weights):
        raise ValueError("need three non-negative criterion weights")
    if abs(sum(weights) - 1.0) > 1e-9:
        raise ValueError(f"criterion weights must sum to 1, got {sum(weights)}")
    return weights  # type: ignore[return-value]


def build_rubric_prompt(copy_text: str, context: Optional[CampaignContext] = None) -> str:
    """Render the judging prompt: three criteria, reasoning before each score."""
    lines = [
        "You are an impartial reviewer of short marketing copy. Evaluate the copy",
        "below independently and objectively on three criteria:",
        "",
        "1. linguistic_expression: is the wording concise, fluent and persuasive,",
        "   at a length appropriate for a short promotional message?",
        "2. logical_structure: do benefit, timing and call-to-action appear in a",
        "   sensible order, with sound causal and temporal relationships?",
        "3. information_density: does the copy pack its keywords into a rich,",
        "   coherent message that lands with impact rather than filler?",
    ]
    if context is not None and context.domain_knowledge:
        lines += ["", "## Domain knowledge"]
        lines += [f"- {item}" for item in context.domain_knowledge]
    if context is not None and context.operator_experience:
        lines += ["", "## Operator experience"]
        lines += [f"- {item}" for item in context.operator_experience]
    lines += [
        "",
        "## Copy to evaluate",
        copy_text,
        "",
        "For each criterion, think through your assessment first, then give a",
        "score from 0.0 to 1.0.",
        "",
        "### Example of the required output shape",
        '{"linguistic_expression": {"rationale": "crisp benefit-led phrasing", "score": 0.8},',
        ' "logical_structure": {"rationale": "benefit before call-to-action", "score": 0.7},',
        ' "information_density": {"rationale": "two keywords, light on detail", "score": 0.5}}',
        "",
        "Respond with exactly one JSON object in that shape.",
    ]
    return "\n".join(lines)


def score(
    copy_text: str,
    context: Optional[CampaignContext],
    judge: JudgeBackend,
    *,
    weights: Optional[Sequence[float]] = None,
) -> RubricScore:
    """Score one copy with the rubric judge.

    Scores outside [0, 1] are clamped with a ScoreOutOfRange warning; output
    that yields fewer than three criterion scores is retried once and then
    raises MalformedJudgeOutput.
    """
    if not copy_text.strip():
        raise ValueError("copy text must be non-empty")
    prompt = build_rubric_prompt(copy_text, context)
    raw = _call_judge(judge, prompt)
    parsed = _parse_judge_output(raw)
    if parsed is None:
        raw = _call_judge(judge, prompt + "\n\n" + RETRY_INSTRUCTION)
        parsed = _parse_judge_output(raw)
        if parsed is None:
            raise MalformedJudgeOutput(
                "judge output lacked three parseable criterion scores after one retry"
            )
    scores, rationales = parsed
    clamped = tuple(min(1.0, max(0.0, s)) for s in scores)
    if clamped != scores:
        warnings.warn(
            f"judge scores {scores} clamped to [0, 1]",
            ScoreOutOfRange,
            stacklevel=2,
        )
    return RubricScore.from_criteria(*clamped, rationales=rationales, weights=weights)


def _call_judge(judge: JudgeBackend, prompt: str) -> str:
    try:
        return judge.complete(prompt)
    except ScoreFailed:
        raise
    except Exception as exc:
        raise ScoreFailed(f"judge backend failed: {exc}") from exc


def _parse_judge_output(raw: str) -> Optional[tuple[tuple[float, float, float], dict[str, str]]]:
    obj = extract_json_object(raw)
    if obj is None:
        return None
    scores: list[float] = []
    rationales: dict[str, str] = {}
    for name in CRITERIA:
        entry = obj.get(name)
        if isinstance(entry, dict):
            value = entry.get("score")
            rationale = entry.get("rationale")
            if isinstance(rationale, str):
                rationales[name] = rationale
        else:
            value = entry
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            return None
        scores.append(float(value))
    return (scores[0], scores[1], scores[2]), rationales


class RubricJudgeScorer:
    """FitnessScorer adapter: copy fitness = rubric aggregate."""

    def __init__(
        self,
        judge: JudgeBackend,
        context: Optional[CampaignContext] = None,
        weights: Optional[Sequence[float]] = None,
    ):
        self.judge = judge
        self.context = context
        self.weights = _checked_weights(weights)

    def score_copy(self, copy: Copy) -> float:
        return score(copy.text, self.context, self.judge, weights=self.weights).aggregate


@dataclass(frozen=True)
class LabeledCopy:
    """A copy with its observed click-through rate."""

    copy: Copy
    ctr: float
    impressions: Optional[int] = None

    def __post_init__(self) -> None:
        if not 0.0 <= self.ctr <= 1.0:
            raise ValueError(f"ctr must lie in [0, 1], got {self.ctr}")
        if self.impressions is not None and self.impressions < 1:
            raise ValueError("impressions must be positive when set")


@dataclass(frozen=True)
class PairwiseReport:
    """Rank-agreement statistics between a score map and observed CTRs."""

    pairs_total: int
    pairs_correct: int
    pairs_tied_score: int

    def __post_init__(self) -> None:
        if self.pairs_correct + self.pairs_tied_score > self.pairs_total:
            raise ValueError("correct + tied pairs cannot exceed the total")

    @property
    def accuracy(self) -> Optional[float]:
        if self.pairs_total == 0:
            return None
        return self.pairs_correct / self.pairs_total


def pairwise_accuracy(corpus: Sequence[LabeledCopy], scores: Mapping[str, float]) -> PairwiseReport:
    """Evaluate a scorer against observed CTRs, pair by pair.

    Over all unordered pairs with strictly different CTRs, a pair counts as
    correct when the score ordering matches the CTR ordering; pairs with
    equal scores count as tied (and incorrect). Pairs with equal CTRs are
    excluded entirely. The result is a rank statistic: any strictly
    increasing transform of the scores leaves it unchanged.
    """
    for labeled in corpus:
        if labeled.copy.id not in scores:
            raise MissingScore(f"no score for copy {labeled.copy.id!r}")
    total = correct = tied = 0
    for a, b in itertools.combinations(corpus, 2):
        if a.ctr == b.ctr:
            continue
        total += 1
        score_a, score_b = scores[a.copy.id], scores[b.copy.id]
        if score_a == score_b:
            tied += 1
        elif (score_a > score_b) == (a.ctr > b.ctr):
            correct += 1
    return PairwiseReport(pairs_total=total, pairs_correct=correct, pairs_tied_score=tied)


class OracleScorer:
    """FitnessScorer whose score is the oracle CTR rescaled onto [0, 1]."""

    def __init__(self, oracle: SyntheticCtrOracle):
        self.oracle = oracle

    def score_copy(self, copy: Copy) -> float:
        ctr = true_ctr(self.oracle, copy.genome)
        return (ctr - self.oracle.ctr_min) / (self.oracle.ctr_max - self.oracle.ctr_min)


def oracle_scorer(oracle: SyntheticCtrOracle) -> OracleScorer:
    """Adapter letting the simulator's hidden CTR act as fitness."""
    return OracleScorer(oracle)


class NoisyOracleScorer:
    """Oracle CTR plus seeded Gaussian noise.

    Stands in for an imperfect judge when measuring pairwise rank accuracy
    against a synthetic corpus. Scores are unbounded reals meant only for
    rank comparison, so they are deliberately not clamped (clamping would
    manufacture score ties at the boundaries).
    """

    def __init__(self, oracle: SyntheticCtrOracle, sigma: float, rng: random.Random):
        if sigma < 0:
            raise ValueError("sigma must be non-negative")
        self.oracle = oracle
        self.sigma = sigma
        self._rng = rng

    def score_copy(self, copy: Copy) -> float:
        return true_ctr(self.oracle, copy.genome) + self._rng.gauss(0.0, self.sigma)
