"""The mutation channel: prompt construction and pluggable copy generation.

Generation never fails because the backend skipped a keyword; coverage is
observable through ``GeneratedCopy.keywords_used`` and left to the scorer
to penalize. A deterministic template backend keeps the whole loop
testable without any model endpoint.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Protocol, Sequence

from .errors import ExtractionFailed, GenerationFailed, InvalidPromptSpec, MalformedOutput
from .genome import Category, Keyword, KeywordSet, normalize_keyword
from .llmclient import extract_json_object

KEYWORDS_HEADER = "## Keywords"
TEMPLATE_CALL_TO_ACTION = "点击领取"

FORMAT_INSTRUCTION = (
    'Respond with exactly one JSON object with fields "copy" and "keywords_used", '
    'where "keywords_used" lists the keywords that appear in your copy.'
)
REINFORCED_FORMAT_INSTRUCTION = (
    "Your previous reply could not be parsed. Respond again with ONLY one JSON "
    'object and no other text: {"copy": "...", "keywords_used": ["..."]}'
)


class CopyGenerator(Protocol):
    """Backend contract: prompt text in, raw completion text out."""

    def complete(self, prompt: str) -> str: ...


class KeywordExtractor(Protocol):
    """Backend contract: copy text plus category registry in, keywords out."""

    def extract(self, text: str, categories: Sequence[Category]) -> Iterable[Keyword]: ...


@dataclass(frozen=True)
class CampaignContext:
    """Static campaign framing merged into generation and judging prompts."""

    domain_knowledge: tuple[str, ...] = ()
    operator_experience: tuple[str, ...] = ()
    style_directives: tuple[str, ...] = ()
    max_copy_length: int = 60

    def __post_init__(self) -> None:
        object.__setattr__(self, "domain_knowledge", tuple(self.domain_knowledge))
        object.__setattr__(self, "operator_experience", tuple(self.operator_experience))
        object.__setattr__(self, "style_directives", tuple(self.style_directives))


@dataclass(frozen=True)
class PromptSpec:
    """Everything the prompt builder needs for one generation request."""

    keywords: KeywordSet
    domain_knowledge: tuple[str, ...] = ()
    operator_experience: tuple[str, ...] = ()
    good_examples: tuple[tuple[str, str], ...] = ()
    bad_examples: tuple[tuple[str, str], ...] = ()
    style_directives: tuple[str, ...] = ()
    max_copy_length: int = 60

    def __post_init__(self) -> None:
        if len(self.keywords) == 0:
            raise InvalidPromptSpec("prompt spec needs at least one keyword")
        if self.max_copy_length < 8:
            raise InvalidPromptSpec("max_copy_length must be at least 8")
        object.__setattr__(self, "domain_knowledge", tuple(self.domain_knowledge))
        object.__setattr__(self, "operator_experience", tuple(self.operator_experience))
        object.__setattr__(self, "good_examples", tuple(tuple(e) for e in self.good_examples))
        object.__setattr__(self, "bad_examples", tuple(tuple(e) for e in self.bad_examples))
        object.__setattr__(self, "style_directives", tuple(self.style_directives))


@dataclass(frozen=True)
class GeneratedCopy:
    """Parsed generator output plus the verified keyword coverage."""

    text: str
    keywords_used: KeywordSet
    raw_model_output: str


def build_generation_prompt(spec: PromptSpec) -> str:
    """Render the generation prompt. Pure and byte-deterministic per spec.

    Sections appear in a fixed order; optional sections are omitted
    entirely when empty. The keyword list is rendered verbatim in the
    set's deterministic sort order.
    """
    lines: list[str] = [
        "You are a marketing copywriter producing one short promotional message for a campaign.",
    ]
    if spec.domain_knowledge:
        lines += ["", "## Domain knowledge"]
        lines += [f"- {item}" for item in spec.domain_knowledge]
    if spec.operator_experience:
        lines += ["", "## Operator experience"]
        lines += [f"- {item}" for item in spec.operator_experience]
    if spec.good_examples:
        lines += ["", "## Good examples (emulate these)"]
        lines += [f"- {text} ({note})" for text, note in spec.good_examples]
    if spec.bad_examples:
        lines += ["", "## Bad examples (avoid these)"]
        lines += [f"- {text} ({note})" for text, note in spec.bad_examples]
    lines += ["", KEYWORDS_HEADER]
    lines += [f"- {k.text} [{k.category}]" for k in spec.keywords]
    if spec.style_directives:
        lines += ["", "## Style"]
        lines += [f"- {item}" for item in spec.style_directives]
    lines += [
        "",
        f"Write one piece of marketing copy of at most {spec.max_copy_length} characters.",
        f'Use every keyword listed under "{KEYWORDS_HEADER[3:]}" verbatim in the copy.',
        FORMAT_INSTRUCTION,
    ]
    return "\n".join(lines)


def generate(spec: PromptSpec, backend: CopyGenerator) -> GeneratedCopy:
    """Run one mutation: prompt the backend and parse its copy.

    ``keywords_used`` is computed here by exact (case-folded) substring
    match of each requested keyword's surface form against the copy text,
    not taken from the backend's own claim. Unparseable output is retried
    once with a reinforced format instruction, then raises MalformedOutput.
    """
    prompt = build_generation_prompt(spec)
    raw = _call_generator(backend, prompt)
    parsed = _parse_copy_output(raw)
    if parsed is None:
        raw = _call_generator(backend, prompt + "\n\n" + REINFORCED_FORMAT_INSTRUCTION)
        parsed = _parse_copy_output(raw)
        if parsed is None:
            raise MalformedOutput("generator output had no usable JSON object after one retry")
    copy_text = parsed
    folded = copy_text.casefold()
    used = KeywordSet(k for k in spec.keywords if k.text in folded)
    return GeneratedCopy(text=copy_text, keywords_used=used, raw_model_output=raw)


def _call_generator(backend: CopyGenerator, prompt: str) -> str:
    try:
        return backend.complete(prompt)
    except GenerationFailed:
        raise
    except Exception as exc:
        raise GenerationFailed(f"copy generator backend failed: {exc}") from exc


def _parse_copy_output(raw: str) -> str | None:
    obj = extract_json_object(raw)
    if obj is None:
        return None
    copy_text = obj.get("copy")
    if not isinstance(copy_text, str) or not copy_text.strip():
        return None
    return copy_text.strip()


class TemplateGenerator:
    """Deterministic backend for tests and offline simulation.

    Reads the keyword section back out of the prompt and answers with the
    keywords joined by '，' in their listed (sorted) order plus a fixed
    call-to-action token, so ``keywords_used`` always equals the request.
    """

    call_to_action = TEMPLATE_CALL_TO_ACTION

    def complete(self, prompt: str) -> str:
        texts = self._keyword_texts(prompt)
        copy_text = "，".join(list(texts) + [self.call_to_action])
        return json.dumps({"copy": copy_text, "keywords_used": texts}, ensure_ascii=False)

    @staticmethod
    def _keyword_texts(prompt: str) -> list[str]:
        texts: list[str] = []
        in_section = False
        for line in prompt.splitlines():
            if line.strip() == KEYWORDS_HEADER:
                in_section = True
                continue
            if in_section:
                if not line.startswith("- "):
                    break
                entry = line[2:]
                text, _, _ = entry.rpartition(" [")
                texts.append(text if text else entry)
        return texts


class DictionaryExtractor:
    """Exact-phrase lexicon matcher; the default keyword extractor.

    Scans the case-folded text left to right; at each position the longest
    matching lexicon phrase wins and the scan resumes after it, so a
    shorter phrase is still reported when it occurs independently
    elsewhere.
    """

    def __init__(self, lexicon: dict[str, str]):
        self._lexicon = {
            phrase.strip().casefold(): category_id for phrase, category_id in lexicon.items()
        }
        self._phrases = sorted(self._lexicon, key=len, reverse=True)

    def extract(self, text: str, categories: Sequence[Category] = ()) -> list[Keyword]:
        folded = text.casefold()
        found: list[Keyword] = []
        i = 0
        while i < len(folded):
            for phrase in self._phrases:
                if folded.startswith(phrase, i):
                    found.append(Keyword(phrase, self._lexicon[phrase]))
                    i += len(phrase)
                    break
            else:
                i += 1
        return found


def extract_keywords(
    copy_text: str,
    categories: Sequence[Category],
    backend: KeywordExtractor,
) -> KeywordSet:
    """Extract and normalize the categorized keywords present in a copy."""
    if not copy_text.strip():
        raise ValueError("copy text must be non-empty")
    try:
        raw = backend.extract(copy_text, categories)
    except ExtractionFailed:
        raise
    except Exception as exc:
        raise ExtractionFailed(f"keyword extractor backend failed: {exc}") from exc
    return KeywordSet(normalize_keyword(k.text, k.category) for k in raw)
