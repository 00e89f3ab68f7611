"""Desk-scale stand-in for the online campaign.

A hidden logistic CTR function over keyword memberships and pairs acts as
ground truth, a Bernoulli impression simulator produces observed feedback,
and ``ingest_feedback`` folds real or simulated observations back into a
campaign record. Online campaign gains are not reproducible at desk scale;
this module exists so the closed loop can be exercised and measured offline.
"""

from __future__ import annotations

import csv
import json
import math
import random
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import TYPE_CHECKING, Mapping, Sequence

from .errors import DuplicateWave, UnknownCopy
from .genome import Keyword, KeywordSet

if TYPE_CHECKING:  # pragma: no cover
    from .store import CampaignRecord

PairKey = tuple[Keyword, Keyword]


def pair_key(a: Keyword, b: Keyword) -> PairKey:
    """Canonical unordered-pair key (sorted by keyword sort order)."""
    if a == b:
        raise ValueError("a pair needs two distinct keywords")
    return tuple(sorted((a, b), key=lambda k: k.sort_key))  # type: ignore[return-value]


def sigmoid(x: float) -> float:
    # exp guarded against overflow for large |x|
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    z = math.exp(x)
    return z / (1.0 + z)


@dataclass
class SyntheticCtrOracle:
    """Hidden ground-truth CTR over keyword sets.

    CTR = affine map of sigmoid(base_logit + unary weights + pair synergies)
    onto [ctr_min, ctr_max]. Keywords outside the vocabulary contribute 0.
    """

    vocabulary: tuple[Keyword, ...]
    base_logit: float = 0.0
    keyword_weights: dict[Keyword, float] = field(default_factory=dict)
    pair_weights: dict[PairKey, float] = field(default_factory=dict)
    ctr_min: float = 0.0
    ctr_max: float = 1.0
    seed: int = 0

    def __post_init__(self) -> None:
        self.vocabulary = tuple(self.vocabulary)
        vocab = set(self.vocabulary)
        for kw in self.keyword_weights:
            if kw not in vocab:
                raise ValueError(f"weighted keyword {kw.text!r} not in vocabulary")
        normalized_pairs: dict[PairKey, float] = {}
        for (a, b), w in self.pair_weights.items():
            if a not in vocab or b not in vocab:
                raise ValueError(f"weighted pair ({a.text!r}, {b.text!r}) not in vocabulary")
            normalized_pairs[pair_key(a, b)] = w
        self.pair_weights = normalized_pairs
        if not 0.0 <= self.ctr_min < self.ctr_max <= 1.0:
            raise ValueError(f"need 0 <= ctr_min < ctr_max <= 1, got [{self.ctr_min}, {self.ctr_max}]")


def true_ctr(oracle: SyntheticCtrOracle, genome: KeywordSet) -> float:
    """Deterministic ground-truth CTR of a genome under the oracle."""
    logit = oracle.base_logit
    present = set(genome)
    for kw in genome:
        logit += oracle.keyword_weights.get(kw, 0.0)
    for (a, b), w in oracle.pair_weights.items():
        if a in present and b in present:
            logit += w
    return oracle.ctr_min + sigmoid(logit) * (oracle.ctr_max - oracle.ctr_min)


def rescale_ctr(ctr: float, ctr_range: tuple[float, float]) -> float:
    """Map an observed CTR onto [0, 1] fitness using the campaign's declared range.

    Values outside the declared range are clamped so the fitness invariant holds.
    """
    lo, hi = ctr_range
    if not hi > lo:
        raise ValueError(f"ctr range must satisfy lo < hi, got [{lo}, {hi}]")
    return min(1.0, max(0.0, (ctr - lo) / (hi - lo)))


@dataclass(frozen=True)
class FeedbackObservation:
    """One copy's observed impressions and clicks for one campaign wave."""

    copy_id: str
    impressions: int
    clicks: int
    wave: int = 0

    def __post_init__(self) -> None:
        if self.impressions < 1:
            raise ValueError("impressions must be positive")
        if not 0 <= self.clicks <= self.impressions:
            raise ValueError("clicks must lie in [0, impressions]")

    @property
    def observed_ctr(self) -> float:
        return self.clicks / self.impressions


def simulate_impressions(
    oracle: SyntheticCtrOracle,
    genome: KeywordSet,
    n: int,
    rng: random.Random,
    *,
    copy_id: str = "sim",
    wave: int = 0,
) -> FeedbackObservation:
    """Draw clicks ~ Binomial(n, true_ctr) via seeded Bernoulli draws."""
    if n < 1:
        raise ValueError("n must be >= 1")
    p = true_ctr(oracle, genome)
    clicks = sum(1 for _ in range(n) if rng.random() < p)
    return FeedbackObservation(copy_id=copy_id, impressions=n, clicks=clicks, wave=wave)


class FitnessUpdatePolicy(str, Enum):
    """How ingested feedback affects stored fitness scores."""

    REPLACE_WITH_CTR = "replace_with_ctr"
    KEEP_JUDGE = "keep_judge"


def ingest_feedback(
    record: "CampaignRecord",
    observations: Sequence[FeedbackObservation],
    policy: FitnessUpdatePolicy,
) -> "CampaignRecord":
    """Fold observed feedback into a campaign record.

    Under REPLACE_WITH_CTR each referenced copy's fitness becomes its observed
    CTR rescaled by the record's declared CTR range; under KEEP_JUDGE the
    observations are stored but fitness is untouched. Feedback is an
    append-only audit trail: a wave that was already ingested is rejected
    with DuplicateWave, and the record is left unchanged on any error.
    """
    policy = FitnessUpdatePolicy(policy)
    ingested_waves = {obs.wave for obs in record.feedback}
    for obs in observations:
        if record.find_copy(obs.copy_id) is None:
            raise UnknownCopy(f"no copy with id {obs.copy_id!r} in campaign {record.campaign_id!r}")
        if obs.wave in ingested_waves:
            raise DuplicateWave(f"wave {obs.wave} was already ingested")

    record.feedback.extend(observations)
    if policy is FitnessUpdatePolicy.REPLACE_WITH_CTR:
        for obs in observations:
            copy = record.find_copy(obs.copy_id)
            assert copy is not None
            record.replace_copy(copy.with_fitness(rescale_ctr(obs.observed_ctr, record.ctr_range)))
    return record


def read_feedback_file(path: str | Path) -> list[FeedbackObservation]:
    """Read observations from CSV (header copy_id,impressions,clicks,wave) or a JSON array."""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    if text.lstrip().startswith("["):
        rows = json.loads(text)
        return [
            FeedbackObservation(
                copy_id=row["copy_id"],
                impressions=int(row["impressions"]),
                clicks=int(row["clicks"]),
                wave=int(row.get("wave", 0)),
            )
            for row in rows
        ]
    reader = csv.DictReader(text.splitlines())
    expected = {"copy_id", "impressions", "clicks", "wave"}
    if reader.fieldnames is None or not expected.issubset(set(reader.fieldnames)):
        raise ValueError(f"feedback CSV must have header columns {sorted(expected)}")
    return [
        FeedbackObservation(
            copy_id=row["copy_id"],
            impressions=int(row["impressions"]),
            clicks=int(row["clicks"]),
            wave=int(row["wave"]),
        )
        for row in reader
    ]


# --- oracle (de)serialization, used by the CLI's simulate command ----------

def oracle_to_dict(oracle: SyntheticCtrOracle) -> dict:
    return {
        "vocabulary": [{"text": k.text, "category": k.category} for k in oracle.vocabulary],
        "base_logit": oracle.base_logit,
        "keyword_weights": [
            {"text": k.text, "category": k.category, "weight": w}
            for k, w in sorted(oracle.keyword_weights.items(), key=lambda item: item[0].sort_key)
        ],
        "pair_weights": [
            {"a": [a.text, a.category], "b": [b.text, b.category], "weight": w}
            for (a, b), w in sorted(oracle.pair_weights.items(), key=lambda item: (item[0][0].sort_key, item[0][1].sort_key))
        ],
        "ctr_min": oracle.ctr_min,
        "ctr_max": oracle.ctr_max,
        "seed": oracle.seed,
    }


def oracle_from_dict(data: Mapping) -> SyntheticCtrOracle:
    vocabulary = tuple(Keyword(d["text"], d["category"]) for d in data["vocabulary"])
    keyword_weights = {
        Keyword(d["text"], d["category"]): float(d["weight"]) for d in data.get("keyword_weights", [])
    }
    pair_weights = {}
    for d in data.get("pair_weights", []):
        a = Keyword(d["a"][0], d["a"][1])
        b = Keyword(d["b"][0], d["b"][1])
        pair_weights[pair_key(a, b)] = float(d["weight"])
    return SyntheticCtrOracle(
        vocabulary=vocabulary,
        base_logit=float(data.get("base_logit", 0.0)),
        keyword_weights=keyword_weights,
        pair_weights=pair_weights,
        ctr_min=float(data.get("ctr_min", 0.0)),
        ctr_max=float(data.get("ctr_max", 1.0)),
        seed=int(data.get("seed", 0)),
    )


def random_oracle(
    vocabulary: Sequence[Keyword],
    rng: random.Random,
    *,
    n_positive: int = 10,
    n_negative: int = 5,
    n_pairs: int = 8,
    base_logit: float = -3.0,
    ctr_min: float = 0.001,
    ctr_max: float = 0.2,
) -> SyntheticCtrOracle:
    """Build an oracle with randomized unary weights and positive pair synergies.

    The first ``n_positive`` sampled keywords get positive weights, the next
    ``n_negative`` negative ones, and the rest weight zero; ``n_pairs``
    distinct keyword pairs get positive synergy weights.
    """
    vocabulary = tuple(vocabulary)
    if n_positive + n_negative > len(vocabulary):
        raise ValueError("not enough vocabulary for the requested weight counts")
    shuffled = list(vocabulary)
    rng.shuffle(shuffled)
    weights: dict[Keyword, float] = {}
    for kw in shuffled[:n_positive]:
        weights[kw] = rng.uniform(0.3, 1.2)
    for kw in shuffled[n_positive : n_positive + n_negative]:
        weights[kw] = rng.uniform(-1.2, -0.3)

    pairs: dict[PairKey, float] = {}
    while len(pairs) < n_pairs:
        a, b = rng.sample(vocabulary, 2)
        pairs[pair_key(a, b)] = rng.uniform(0.2, 0.8)
    return SyntheticCtrOracle(
        vocabulary=vocabulary,
        base_logit=base_logit,
        keyword_weights=weights,
        pair_weights=pairs,
        ctr_min=ctr_min,
        ctr_max=ctr_max,
        seed=0,
    )
