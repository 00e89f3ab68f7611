"""HTTP adapter for chat-completion-style endpoints.

Implements the generator/judge/extractor backend contracts against a JSON
API: POST {base_url}{completion_path} with a bearer token, retries with
jittered exponential backoff on 429/5xx/transport errors, and structured
JSON extraction from completions that may wrap the object in prose or
fenced blocks. Only the *name* of the API key environment variable is ever
stored or logged; the secret itself never leaves the request header.
"""

from __future__ import annotations

import json
import logging
import os
import random
import time
import urllib.error
import urllib.parse
import urllib.request
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional, Sequence

from .errors import (
    EndpointUnavailable,
    ExtractionFailed,
    MalformedOutput,
    MissingCredential,
    RequestRejected,
)
from .genome import Category, Keyword, normalize_keyword

logger = logging.getLogger(__name__)

BACKOFF_BASE_SECONDS = 1.0
BACKOFF_FACTOR = 2.0


@dataclass(frozen=True)
class LlmEndpointConfig:
    base_url: str
    model_name: str
    api_key_env_var: str = "EVOCOPY_API_KEY"
    timeout: float = 30.0
    max_retries: int = 3
    temperature: float = 0.0
    completion_path: str = "/chat/completions"

    def __post_init__(self) -> None:
        parsed = urllib.parse.urlparse(self.base_url)
        if parsed.scheme not in ("http", "https") or not parsed.netloc:
            raise ValueError(f"base_url is not a valid http(s) URL: {self.base_url!r}")
        if self.timeout <= 0:
            raise ValueError("timeout must be positive")
        if self.max_retries < 0:
            raise ValueError("max_retries must be non-negative")
        if self.temperature < 0:
            raise ValueError("temperature must be non-negative")


def endpoint_config_from_file(path: str | Path) -> LlmEndpointConfig:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    return LlmEndpointConfig(**data)


def complete(
    cfg: LlmEndpointConfig,
    prompt: str,
    *,
    sleep: Callable[[float], None] = time.sleep,
    jitter_rng: Optional[random.Random] = None,
) -> str:
    """Send one user message and return the first completion's text.

    Retries transport errors and HTTP 429/5xx with exponential backoff
    (base 1s, factor 2, jitter in [0.5x, 1.0x)), so at most
    ``1 + max_retries`` requests are issued. Other 4xx responses are not
    retried.
    """
    api_key = os.environ.get(cfg.api_key_env_var, "")
    if not api_key:
        raise MissingCredential(
            f"environment variable {cfg.api_key_env_var!r} is not set; no request was sent"
        )
    url = cfg.base_url.rstrip("/") + cfg.completion_path
    body = json.dumps(
        {
            "model": cfg.model_name,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": cfg.temperature,
        }
    ).encode("utf-8")
    jitter = jitter_rng if jitter_rng is not None else random

    last_error = "no request attempted"
    for attempt in range(cfg.max_retries + 1):
        request = urllib.request.Request(
            url,
            data=body,
            headers={
                "Authorization": f"Bearer {api_key}",
                "Content-Type": "application/json",
            },
            method="POST",
        )
        try:
            with urllib.request.urlopen(request, timeout=cfg.timeout) as response:
                payload = response.read().decode("utf-8")
            return _first_completion_text(payload)
        except urllib.error.HTTPError as exc:
            if exc.code == 429 or exc.code >= 500:
                last_error = f"HTTP {exc.code}"
                logger.debug("retryable response from %s: %s", url, last_error)
            else:
                raise RequestRejected(f"endpoint returned HTTP {exc.code}") from exc
        except urllib.error.URLError as exc:
            last_error = f"transport error: {exc.reason}"
        except (TimeoutError, ConnectionError, OSError) as exc:
            last_error = f"transport error: {exc}"
        if attempt < cfg.max_retries:
            delay = BACKOFF_BASE_SECONDS * (BACKOFF_FACTOR**attempt) * (0.5 + 0.5 * jitter.random())
            sleep(delay)
    raise EndpointUnavailable(
        f"gave up after {cfg.max_retries + 1} attempts against {url} (last: {last_error})"
    )


def _first_completion_text(payload: str) -> str:
    try:
        data = json.loads(payload)
        text = data["choices"][0]["message"]["content"]
    except (json.JSONDecodeError, KeyError, IndexError, TypeError) as exc:
        raise MalformedOutput(f"completion response body has unexpected shape: {exc}") from exc
    if not isinstance(text, str):
        raise MalformedOutput("completion content is not a string")
    return text


def complete_json(
    cfg: LlmEndpointConfig,
    prompt: str,
    expected_fields: Sequence[str],
    *,
    sleep: Callable[[float], None] = time.sleep,
    jitter_rng: Optional[random.Random] = None,
) -> dict:
    """complete() plus extraction of the first JSON object with the expected fields."""
    text = complete(cfg, prompt, sleep=sleep, jitter_rng=jitter_rng)
    obj = extract_json_object(text)
    if obj is None:
        raise MalformedOutput("completion contains no parseable JSON object")
    missing = [name for name in expected_fields if name not in obj]
    if missing:
        raise MalformedOutput(f"completion JSON lacks fields: {missing}")
    return obj


def extract_json_object(text: str) -> Optional[dict]:
    """Return the first parseable top-level JSON object in ``text``, or None.

    Tolerates surrounding prose and fenced code blocks; only brace-balanced
    candidates are handed to the JSON parser.
    """
    search_from = 0
    while True:
        start = text.find("{", search_from)
        if start == -1:
            return None
        end = _matching_brace(text, start)
        if end is not None:
            try:
                obj = json.loads(text[start : end + 1])
            except json.JSONDecodeError:
                obj = None
            if isinstance(obj, dict):
                return obj
        search_from = start + 1


def _matching_brace(text: str, start: int) -> Optional[int]:
    depth = 0
    in_string = False
    escaped = False
    for i in range(start, len(text)):
        ch = text[i]
        if in_string:
            if escaped:
                escaped = False
            elif ch == "\\":
                escaped = True
            elif ch == '"':
                in_string = False
            continue
        if ch == '"':
            in_string = True
        elif ch == "{":
            depth += 1
        elif ch == "}":
            depth -= 1
            if depth == 0:
                return i
    return None


class LlmBackend:
    """Text-completion backend usable as a copy generator or judge."""

    def __init__(
        self,
        cfg: LlmEndpointConfig,
        *,
        sleep: Callable[[float], None] = time.sleep,
        jitter_rng: Optional[random.Random] = None,
    ):
        self.cfg = cfg
        self._sleep = sleep
        self._jitter_rng = jitter_rng

    def complete(self, prompt: str) -> str:
        return complete(self.cfg, prompt, sleep=self._sleep, jitter_rng=self._jitter_rng)


class LlmKeywordExtractor:
    """Keyword extractor backed by a completion endpoint.

    Follows the same contract as the dictionary extractor: text plus a
    category registry in, normalized keywords out. Entries claiming an
    unregistered category are dropped.
    """

    def __init__(
        self,
        cfg: LlmEndpointConfig,
        *,
        sleep: Callable[[float], None] = time.sleep,
        jitter_rng: Optional[random.Random] = None,
    ):
        self.cfg = cfg
        self._sleep = sleep
        self._jitter_rng = jitter_rng

    def extract(self, text: str, categories: Sequence[Category]) -> list[Keyword]:
        prompt = build_extraction_prompt(text, categories)
        obj = complete_json(
            self.cfg, prompt, ["keywords"], sleep=self._sleep, jitter_rng=self._jitter_rng
        )
        known = {c.id for c in categories}
        keywords: list[Keyword] = []
        entries = obj["keywords"]
        if not isinstance(entries, list):
            raise ExtractionFailed("extractor returned a non-list 'keywords' field")
        for entry in entries:
            try:
                keyword_text = entry["text"]
                category_id = entry["category"]
            except (TypeError, KeyError) as exc:
                raise ExtractionFailed(f"malformed keyword entry: {entry!r}") from exc
            if category_id not in known:
                logger.debug("dropping keyword %r with unknown category %r", keyword_text, category_id)
                continue
            keywords.append(normalize_keyword(keyword_text, category_id))
        return keywords


def build_extraction_prompt(text: str, categories: Sequence[Category]) -> str:
    lines = [
        "Identify the marketing keywords present in the copy below and assign",
        "each one to the best-fitting category.",
        "",
        "## Categories",
    ]
    for category in categories:
        description = f": {category.description}" if category.description else ""
        lines.append(f"- {category.id}{description}")
    lines += [
        "",
        "## Copy",
        text,
        "",
        'Respond with exactly one JSON object of the form',
        '{"keywords": [{"text": "...", "category": "..."}]}.',
    ]
    return "\n".join(lines)
