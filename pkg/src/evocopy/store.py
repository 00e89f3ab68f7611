"""Versioned JSON persistence for campaign state, plus bundled fixtures.

Files are canonical: keys sorted, fixed separators, UTF-8, trailing
newline, so saving the same record twice yields byte-identical files and
campaign artifacts diff cleanly. Evicted copies are archived inside the
record rather than dropped, so every id referenced by history or feedback
stays resolvable.
"""

from __future__ import annotations

import csv
import json
import os
import tempfile
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Mapping, Optional, Sequence

from .errors import CorruptRecord, UnsupportedSchema
from .evolve import CrossoverConfig, EvolutionConfig, IterationRecord, RunReport
from .genome import Category, Copy, Keyword, KeywordSet, Population
from .reward import LabeledCopy
from .simenv import FeedbackObservation

SCHEMA_VERSION = 1


@dataclass
class CampaignRecord:
    """Durable campaign state: population, run history, feedback, config."""

    campaign_id: str
    categories: list[Category] = field(default_factory=list)
    population: Population = field(default_factory=Population)
    archived: list[Copy] = field(default_factory=list)
    history: list[RunReport] = field(default_factory=list)
    feedback: list[FeedbackObservation] = field(default_factory=list)
    config: EvolutionConfig = field(default_factory=EvolutionConfig)
    ctr_range: tuple[float, float] = (0.0, 1.0)
    rng_cursor: Optional[list] = None
    schema_version: int = SCHEMA_VERSION

    def find_copy(self, copy_id: str) -> Optional[Copy]:
        found = self.population.find(copy_id)
        if found is not None:
            return found
        for copy in self.archived:
            if copy.id == copy_id:
                return copy
        return None

    def replace_copy(self, copy: Copy) -> None:
        if self.population.find(copy.id) is not None:
            self.population.replace(copy)
            return
        for i, archived in enumerate(self.archived):
            if archived.id == copy.id:
                self.archived[i] = copy
                return
        raise ValueError(f"no copy with id {copy.id!r} in record")

    @property
    def latest_wave(self) -> Optional[int]:
        if not self.feedback:
            return None
        return max(obs.wave for obs in self.feedback)

    def minted_copies(self) -> int:
        """Number of generated copies ever produced by runs on this record."""
        return sum(len(report.iterations) for report in self.history)


# --- rng state <-> JSON -----------------------------------------------------

def rng_state_to_json(state: tuple) -> list:
    version, internal, gauss_next = state
    return [version, list(internal), gauss_next]


def rng_state_from_json(data: Sequence) -> tuple:
    version, internal, gauss_next = data
    return (version, tuple(internal), gauss_next)


# --- codecs -----------------------------------------------------------------

def keyword_to_dict(keyword: Keyword) -> dict:
    return {"text": keyword.text, "category": keyword.category}


def keyword_from_dict(data: Mapping) -> Keyword:
    return Keyword(data["text"], data["category"])


def copy_to_dict(copy: Copy) -> dict:
    return {
        "id": copy.id,
        "text": copy.text,
        "genome": [keyword_to_dict(k) for k in copy.genome],
        "fitness": copy.fitness,
        "provenance": copy.provenance,
        "generation": copy.generation,
    }


def copy_from_dict(data: Mapping) -> Copy:
    return Copy(
        id=data["id"],
        text=data["text"],
        genome=KeywordSet(keyword_from_dict(k) for k in data["genome"]),
        fitness=data.get("fitness"),
        provenance=data.get("provenance", "generated"),
        generation=int(data.get("generation", 0)),
    )


def _config_to_dict(config: EvolutionConfig) -> dict:
    return {
        "iterations": config.iterations,
        "rng_seed": config.rng_seed,
        "population_capacity": config.population_capacity,
        "degenerate_uniform_fallback": config.degenerate_uniform_fallback,
        "crossover": {
            "pool_rule": config.crossover.pool_rule,
            "inclusion_probability": config.crossover.inclusion_probability,
            "min_genome_size": config.crossover.min_genome_size,
            "max_genome_size": config.crossover.max_genome_size,
        },
    }


def _config_from_dict(data: Mapping) -> EvolutionConfig:
    cross = data["crossover"]
    return EvolutionConfig(
        iterations=int(data["iterations"]),
        rng_seed=int(data["rng_seed"]),
        crossover=CrossoverConfig(
            pool_rule=cross["pool_rule"],
            inclusion_probability=float(cross["inclusion_probability"]),
            min_genome_size=int(cross["min_genome_size"]),
            max_genome_size=int(cross["max_genome_size"]),
        ),
        population_capacity=data.get("population_capacity"),
        degenerate_uniform_fallback=bool(data.get("degenerate_uniform_fallback", False)),
    )


def _report_to_dict(report: RunReport) -> dict:
    return {
        "seed": report.seed,
        "error": report.error,
        "iterations": [
            {
                "index": record.index,
                "quartet_ids": list(record.quartet_ids),
                "new_copy": copy_to_dict(record.new_copy),
                "evicted_id": record.evicted_id,
                "best_fitness": record.best_fitness,
            }
            for record in report.iterations
        ],
    }


def _report_from_dict(data: Mapping) -> RunReport:
    return RunReport(
        seed=int(data["seed"]),
        error=data.get("error"),
        iterations=[
            IterationRecord(
                index=int(item["index"]),
                quartet_ids=tuple(item["quartet_ids"]),
                new_copy=copy_from_dict(item["new_copy"]),
                evicted_id=item.get("evicted_id"),
                best_fitness=float(item["best_fitness"]),
            )
            for item in data["iterations"]
        ],
    )


def record_to_dict(record: CampaignRecord) -> dict:
    return {
        "schema_version": record.schema_version,
        "campaign_id": record.campaign_id,
        "categories": [{"id": c.id, "description": c.description} for c in record.categories],
        "ctr_range": list(record.ctr_range),
        "config": _config_to_dict(record.config),
        "population": {
            "capacity": record.population.capacity,
            "members": [copy_to_dict(c) for c in record.population.members],
        },
        "archived": [copy_to_dict(c) for c in record.archived],
        "history": [_report_to_dict(r) for r in record.history],
        "feedback": [
            {
                "copy_id": obs.copy_id,
                "impressions": obs.impressions,
                "clicks": obs.clicks,
                "wave": obs.wave,
            }
            for obs in record.feedback
        ],
        "rng_cursor": record.rng_cursor,
    }


def record_from_dict(data: Mapping) -> CampaignRecord:
    population_data = data["population"]
    campaign_id = data["campaign_id"]
    return CampaignRecord(
        campaign_id=campaign_id,
        categories=[Category(c["id"], c.get("description", "")) for c in data["categories"]],
        population=Population(
            members=[copy_from_dict(c) for c in population_data["members"]],
            capacity=population_data.get("capacity"),
            campaign_id=campaign_id,
        ),
        archived=[copy_from_dict(c) for c in data.get("archived", [])],
        history=[_report_from_dict(r) for r in data.get("history", [])],
        feedback=[
            FeedbackObservation(
                copy_id=obs["copy_id"],
                impressions=int(obs["impressions"]),
                clicks=int(obs["clicks"]),
                wave=int(obs["wave"]),
            )
            for obs in data.get("feedback", [])
        ],
        config=_config_from_dict(data["config"]),
        ctr_range=(float(data["ctr_range"][0]), float(data["ctr_range"][1])),
        rng_cursor=data.get("rng_cursor"),
        schema_version=int(data["schema_version"]),
    )


def canonical_dumps(obj: Any) -> str:
    return json.dumps(obj, ensure_ascii=False, sort_keys=True, indent=2) + "\n"


def save(record: CampaignRecord, path: str | Path) -> Path:
    """Write the record atomically (write-temp-then-rename)."""
    path = Path(path)
    payload = canonical_dumps(record_to_dict(record)).encode("utf-8")
    fd, temp_name = tempfile.mkstemp(dir=path.parent or Path("."), suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(payload)
        os.replace(temp_name, path)
    except BaseException:
        if os.path.exists(temp_name):
            os.unlink(temp_name)
        raise
    return path


def load(path: str | Path) -> CampaignRecord:
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CorruptRecord(f"{path}: invalid JSON at byte offset {exc.pos}: {exc.msg}") from exc
    if not isinstance(data, dict):
        raise CorruptRecord(f"{path}: top-level value is not an object")
    version = data.get("schema_version")
    if version != SCHEMA_VERSION:
        raise UnsupportedSchema(
            f"{path}: schema_version {version!r} (this writer supports {SCHEMA_VERSION})"
        )
    try:
        return record_from_dict(data)
    except (KeyError, TypeError, ValueError, IndexError) as exc:
        raise CorruptRecord(f"{path}: structurally invalid record: {exc}") from exc


# --- bundled fixtures and labeled corpora -----------------------------------

def _labeled_from_row(row: Mapping) -> LabeledCopy:
    return LabeledCopy(
        copy=Copy(
            id=row["id"],
            text=row["text"],
            genome=KeywordSet(keyword_from_dict(k) for k in row.get("keywords", [])),
            fitness=None,
            provenance=row.get("provenance", "human"),
            generation=int(row.get("generation", 0)),
        ),
        ctr=float(row["ctr"]),
        impressions=row.get("impressions"),
    )


def _bundled_data() -> dict:
    return json.loads(
        resources.files("evocopy").joinpath("data/observed_corpora.json").read_text(encoding="utf-8")
    )


def load_bundled_corpora() -> tuple[list[LabeledCopy], list[LabeledCopy]]:
    """The bundled SMS and Banner corpora of observed campaign copies."""
    data = _bundled_data()
    sms = [_labeled_from_row(row) for row in data["sms"]]
    banner = [_labeled_from_row(row) for row in data["banner"]]
    return sms, banner


def bundled_categories() -> list[Category]:
    return [Category(c["id"], c.get("description", "")) for c in _bundled_data()["categories"]]


def load_labeled_corpus(path: str | Path) -> list[LabeledCopy]:
    """Read a labeled corpus from a JSON array or a CSV with id,text,ctr columns."""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    if text.lstrip().startswith("["):
        return [_labeled_from_row(row) for row in json.loads(text)]
    reader = csv.DictReader(text.splitlines())
    if reader.fieldnames is None or not {"id", "text", "ctr"}.issubset(set(reader.fieldnames)):
        raise ValueError("corpus CSV must have header columns id,text,ctr")
    rows = []
    for row in reader:
        entry: dict[str, Any] = {"id": row["id"], "text": row["text"], "ctr": float(row["ctr"])}
        if row.get("impressions"):
            entry["impressions"] = int(row["impressions"])
        rows.append(_labeled_from_row(entry))
    return rows
