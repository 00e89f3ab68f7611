"""Core domain types: keywords (genes), keyword sets (genomes), copies and populations."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Iterable, Iterator, Optional, Union

from .errors import InvalidKeyword, MissingFitness

PROVENANCE_HUMAN = "human"
PROVENANCE_GENERATED = "generated"


@dataclass(frozen=True)
class Category:
    """A keyword category. ``id`` must be unique within a campaign's registry."""

    id: str
    description: str = ""

    def __post_init__(self) -> None:
        if not self.id or not self.id.strip():
            raise ValueError("category id must be non-empty")


@dataclass(frozen=True)
class Keyword:
    """A single gene: a categorized text token.

    The surface text is normalized on construction (surrounding whitespace
    trimmed, then case-folded), so two keywords compare equal iff their
    normalized text and category id match. Non-keyword copy features
    (entitlement position, style, ...) are modeled as keywords in reserved
    categories rather than as a separate type.
    """

    text: str
    category: str

    def __post_init__(self) -> None:
        normalized = self.text.strip().casefold()
        if not normalized:
            raise InvalidKeyword(f"keyword text is empty after trimming: {self.text!r}")
        object.__setattr__(self, "text", normalized)

    @property
    def sort_key(self) -> tuple[str, str]:
        return (self.text, self.category)


def normalize_keyword(raw: str, category: Union[Category, str]) -> Keyword:
    """Build a keyword from raw operator input. Idempotent over its own output."""
    category_id = category.id if isinstance(category, Category) else category
    return Keyword(raw, category_id)


class KeywordSet:
    """An immutable set of keywords with deterministic iteration order.

    Members are unique under normalized keyword equality and iterate sorted
    by (text, category id), so every downstream sampling step is
    reproducible from a seed.
    """

    __slots__ = ("_members",)

    def __init__(self, keywords: Iterable[Keyword] = ()):
        unique = set(keywords)
        object.__setattr__(self, "_members", tuple(sorted(unique, key=lambda k: k.sort_key)))

    def __setattr__(self, name, value):  # pragma: no cover - guard only
        raise AttributeError("KeywordSet is immutable")

    def __iter__(self) -> Iterator[Keyword]:
        return iter(self._members)

    def __len__(self) -> int:
        return len(self._members)

    def __contains__(self, keyword: Keyword) -> bool:
        return keyword in self._members

    def __bool__(self) -> bool:
        return bool(self._members)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, KeywordSet):
            return NotImplemented
        return self._members == other._members

    def __hash__(self) -> int:
        return hash(self._members)

    def __repr__(self) -> str:
        inner = ", ".join(f"{k.text}[{k.category}]" for k in self._members)
        return f"KeywordSet({{{inner}}})"

    def union(self, other: "KeywordSet") -> "KeywordSet":
        return KeywordSet((*self._members, *other._members))

    def difference(self, other: "KeywordSet") -> "KeywordSet":
        removed = set(other._members)
        return KeywordSet(k for k in self._members if k not in removed)

    def intersection(self, other: "KeywordSet") -> "KeywordSet":
        kept = set(other._members)
        return KeywordSet(k for k in self._members if k in kept)

    __or__ = union
    __sub__ = difference
    __and__ = intersection

    def texts(self) -> tuple[str, ...]:
        """Surface forms in deterministic order."""
        return tuple(k.text for k in self._members)


EMPTY_KEYWORD_SET = KeywordSet()


@dataclass(frozen=True)
class Copy:
    """A chromosome: one piece of marketing copy plus its genome and fitness."""

    id: str
    text: str
    genome: KeywordSet
    fitness: Optional[float] = None
    provenance: str = PROVENANCE_GENERATED
    generation: int = 0

    def __post_init__(self) -> None:
        if not self.id:
            raise ValueError("copy id must be non-empty")
        if self.fitness is not None and not 0.0 <= self.fitness <= 1.0:
            raise ValueError(f"fitness must lie in [0, 1], got {self.fitness}")
        if self.provenance not in (PROVENANCE_HUMAN, PROVENANCE_GENERATED):
            raise ValueError(f"unknown provenance: {self.provenance!r}")
        if self.generation < 0:
            raise ValueError("generation must be non-negative")

    def with_fitness(self, value: float) -> "Copy":
        return dataclasses.replace(self, fitness=value)


class Population:
    """Scored copies for one campaign, with an optional capacity policy.

    When ``capacity`` is bounded, inserting past it evicts the member with
    the lowest fitness (ties broken by oldest generation, then lexicographic
    id). Callers serialize mutation; there is no internal locking.
    """

    def __init__(
        self,
        members: Iterable[Copy] = (),
        capacity: Optional[int] = None,
        campaign_id: str = "",
    ):
        if capacity is not None and capacity < 1:
            raise ValueError("capacity must be positive or None (unbounded)")
        members = list(members)
        ids = [c.id for c in members]
        if len(ids) != len(set(ids)):
            raise ValueError("population members must have distinct ids")
        if capacity is not None and len(members) > capacity:
            raise ValueError(f"{len(members)} members exceed capacity {capacity}")
        self.members: list[Copy] = members
        self.capacity = capacity
        self.campaign_id = campaign_id

    def __len__(self) -> int:
        return len(self.members)

    def __iter__(self) -> Iterator[Copy]:
        return iter(self.members)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Population):
            return NotImplemented
        return (
            self.members == other.members
            and self.capacity == other.capacity
            and self.campaign_id == other.campaign_id
        )

    def ids(self) -> set[str]:
        return {c.id for c in self.members}

    def find(self, copy_id: str) -> Optional[Copy]:
        for member in self.members:
            if member.id == copy_id:
                return member
        return None

    def eligible_members(self) -> list[Copy]:
        """Members that may enter selection: scored, with a non-empty genome."""
        return [c for c in self.members if c.fitness is not None and len(c.genome) > 0]

    def best(self) -> Copy:
        """Highest-fitness eligible member; ties broken by lowest id."""
        candidates = self.eligible_members()
        if not candidates:
            raise MissingFitness("population has no scored members with genomes")
        return min(candidates, key=lambda c: (-c.fitness, c.id))

    def worst(self) -> Copy:
        """Lowest-fitness eligible member; ties broken by lowest id."""
        candidates = self.eligible_members()
        if not candidates:
            raise MissingFitness("population has no scored members with genomes")
        return min(candidates, key=lambda c: (c.fitness, c.id))

    def insert(self, copy: Copy) -> Optional[Copy]:
        """Insert a scored copy, evicting the worst member if over capacity.

        Returns the evicted copy (which may be the inserted one) or None.
        Unscored members sort below every scored member for eviction.
        """
        if copy.fitness is None:
            raise MissingFitness(f"copy {copy.id!r} has no fitness score")
        if copy.id in self.ids():
            raise ValueError(f"duplicate copy id {copy.id!r}")
        self.members.append(copy)
        if self.capacity is not None and len(self.members) > self.capacity:
            evicted = min(
                self.members,
                key=lambda c: (c.fitness if c.fitness is not None else -1.0, c.generation, c.id),
            )
            self.members.remove(evicted)
            return evicted
        return None

    def replace(self, copy: Copy) -> None:
        """Swap in a new version of an existing member (matched by id)."""
        for i, member in enumerate(self.members):
            if member.id == copy.id:
                self.members[i] = copy
                return
        raise ValueError(f"no member with id {copy.id!r}")
