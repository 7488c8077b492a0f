"""Structured generation prompts and the iteration temperature schedule.

A prompt carries four slots: question type (the active dimensions), optional
domain context, the user query, and dimension-tagged evidence ordered by
descending aggregate score. Rendering is a pure function of those fields, so
golden files can pin the exact output.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

from .classify import Dimension
from .errors import ConfigurationError

DEFAULT_DISCIPLINE = "geography"
DEFAULT_SUBFIELD = "general"
NO_EVIDENCE_TEXT = "No evidence retrieved."

_TEMPLATE_PATH = Path(__file__).parent / "data" / "geoprompt_template.txt"


@dataclass(frozen=True)
class DomainContext:
    discipline: str = DEFAULT_DISCIPLINE
    subfield: str = DEFAULT_SUBFIELD
    aspects: tuple[str, ...] = ()


@dataclass(frozen=True)
class EvidenceItem:
    chunk_id: str
    text: str
    dims: frozenset[Dimension]
    score: float

    def tag(self) -> str:
        names = [d.label for d in Dimension if d in self.dims]
        return "[" + "|".join(names) + "]"


@dataclass(frozen=True)
class GeoPrompt:
    user_query: str
    question_type: frozenset[Dimension] = frozenset()
    domain_context: DomainContext | None = None
    knowledge_text: tuple[EvidenceItem, ...] = ()

    def __post_init__(self):
        if not self.user_query.strip():
            raise ConfigurationError("prompt requires a non-empty user query")
        # evidence sorted by descending score, chunk id breaking ties
        ordered = tuple(sorted(self.knowledge_text, key=lambda e: (-e.score, e.chunk_id)))
        object.__setattr__(self, "knowledge_text", ordered)


def question_type_text(dims: frozenset[Dimension]) -> str:
    names = [d.label for d in Dimension if d in dims]
    return "/".join(names) if names else "general"


def load_template(path: str | Path | None = None) -> str:
    return Path(path or _TEMPLATE_PATH).read_text(encoding="utf-8")


def build_geoprompt(p: GeoPrompt, template: str | None = None,
                    max_chars: int | None = None) -> str:
    """Render the prompt; evidence lines carry their dimension tags as a prefix."""
    template = template if template is not None else load_template()
    ctx = p.domain_context or DomainContext()
    if p.knowledge_text:
        evidence = "\n".join(f"{item.tag()} {item.text}" for item in p.knowledge_text)
    else:
        evidence = NO_EVIDENCE_TEXT
    rendered = template.format(
        discipline=ctx.discipline,
        subfield=ctx.subfield,
        question_type=question_type_text(p.question_type),
        evidence=evidence,
        query=p.user_query,
    )
    if max_chars is not None and len(rendered) > max_chars:
        rendered = rendered[:max_chars]
    return rendered


@dataclass(frozen=True)
class TemperatureSchedule:
    start: float = 0.3
    end: float = 0.7


def temperature_for(iteration: int, total_iterations: int,
                    schedule: TemperatureSchedule | None = None) -> float:
    """Linear ramp from schedule.start at iteration 0 to schedule.end at the last."""
    schedule = schedule or TemperatureSchedule()
    if total_iterations < 1:
        raise ConfigurationError("total_iterations must be >= 1")
    if not (0 <= iteration < total_iterations):
        raise ConfigurationError(
            f"iteration {iteration} out of range for {total_iterations} iterations")
    if total_iterations == 1:
        return schedule.start
    frac = iteration / (total_iterations - 1)
    return schedule.start + (schedule.end - schedule.start) * frac


@dataclass(frozen=True)
class GenerationParams:
    temperature: float = 0.3
    max_tokens: int = 512
    beam_width: int = 5
    length_penalty: float = 0.6

    def __post_init__(self):
        if not (0.0 <= self.temperature <= 2.0):
            raise ConfigurationError(f"temperature {self.temperature} outside [0, 2]")
        if self.beam_width < 1:
            raise ConfigurationError("beam_width must be >= 1")
        if self.max_tokens < 1:
            raise ConfigurationError("max_tokens must be >= 1")
