"""Unified entity/relationship extraction: prompt building, output parsing,
and the government-entity filter.

The guided prompt variant adds per-type definitions, a strict type-by-type
extraction order and an in-prompt filtering step; the baseline variant keeps
only the type list and a single example. Both share the delimiter-formatted
output contract parsed here. Parsing is total: malformed records are skipped
and reported, never fatal.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .coref import DEFAULT_TYPE_ORDER, EntityType
from .normalize import normalize_name, sanitize_text


class ExtractionError(Exception):
    pass


class ConfigInvalid(ExtractionError):
    pass


class ExtractionMode(enum.Enum):
    COREKG = "corekg"
    BASELINE = "baseline"


@dataclass(frozen=True)
class DelimiterSet:
    tuple_delimiter: str = "<|>"
    record_delimiter: str = "##"
    completion_delimiter: str = "<|COMPLETE|>"

    def __post_init__(self) -> None:
        values = (self.tuple_delimiter, self.record_delimiter, self.completion_delimiter)
        if any(not v for v in values):
            raise ConfigInvalid("delimiters must be non-empty")
        if len(set(values)) != 3:
            raise ConfigInvalid("delimiters must be pairwise distinct")
        for a in values:
            for b in values:
                if a is not b and a in b:
                    raise ConfigInvalid(f"delimiter {a!r} is a substring of {b!r}")

    def all(self) -> tuple[str, str, str]:
        return (self.tuple_delimiter, self.record_delimiter, self.completion_delimiter)


@dataclass(frozen=True)
class EntityRecord:
    name: str
    entity_type: EntityType
    description: str
    source: tuple[str, int]  # (case_id, chunk_id)


@dataclass(frozen=True)
class RelationshipRecord:
    source_name: str
    target_name: str
    description: str
    strength: int
    source: tuple[str, int]


@dataclass(frozen=True)
class SkippedRecord:
    index: int
    reason: str
    snippet: str


@dataclass
class ParseReport:
    parsed: int = 0
    skipped: list[SkippedRecord] = field(default_factory=list)
    completion_seen: bool = False

    @property
    def total_candidates(self) -> int:
        return self.parsed + len(self.skipped)

    @property
    def empty_output(self) -> bool:
        return self.parsed == 0


DEFAULT_TYPE_DEFINITIONS: dict[EntityType, str] = {
    EntityType.PERSON: "A named individual: drivers, guides, migrants, agents, brokers.",
    EntityType.LOCATION: "A geographic place such as a city, county, state, country or border area.",
    EntityType.ROUTES: "A named road, highway, freeway or travel corridor used to move people or goods.",
    EntityType.ORGANIZATION: "A named group acting together: smuggling rings, cartels, companies.",
    EntityType.MEANS_OF_TRANSPORTATION: "A vehicle or conveyance: car, truck, trailer, 18-wheeler, boat.",
    EntityType.MEANS_OF_COMMUNICATION: "A device or service used to communicate: phone, radio, messaging app.",
    EntityType.SMUGGLED_ITEMS: "What is being moved illegally: people, drugs, weapons, currency.",
}

DEFAULT_FEWSHOT_INPUT = "Smugglers from the Horizon Smuggling Ring used WhatsApp."


def default_fewshot_examples(delimiters: DelimiterSet) -> tuple[tuple[str, str], ...]:
    td, rd, cd = delimiters.all()
    output = (
        f'("entity"{td}SMUGGLERS{td}PERSON{td}Group moving people for the ring){rd}\n'
        f'("entity"{td}WHATSAPP{td}MEANS_OF_COMMUNICATION{td}Messaging app used to coordinate){rd}\n'
        f'("relationship"{td}SMUGGLERS{td}WHATSAPP{td}Smugglers coordinated over WhatsApp{td}8){rd}\n'
        f"{cd}"
    )
    return ((DEFAULT_FEWSHOT_INPUT, output),)


@dataclass(frozen=True)
class ExtractionPromptConfig:
    mode: ExtractionMode
    entity_types: tuple[EntityType, ...] = DEFAULT_TYPE_ORDER
    type_definitions: dict[EntityType, str] = field(default_factory=lambda: dict(DEFAULT_TYPE_DEFINITIONS))
    fewshot_examples: tuple[tuple[str, str], ...] | None = None
    delimiters: DelimiterSet = DelimiterSet()
    include_sequential_ordering: bool | None = None
    include_government_filter: bool | None = None

    def __post_init__(self) -> None:
        guided = self.mode is ExtractionMode.COREKG
        # Mode fixes both flags; explicit values must agree with it.
        for flag_name in ("include_sequential_ordering", "include_government_filter"):
            value = getattr(self, flag_name)
            if value is None:
                object.__setattr__(self, flag_name, guided)
            elif value is not guided:
                raise ConfigInvalid(
                    f"{flag_name}={value} conflicts with mode {self.mode.value}"
                )
        if len(self.entity_types) != len(EntityType) or set(self.entity_types) != set(EntityType):
            raise ConfigInvalid(
                f"exactly the {len(EntityType)} entity types are required, got {len(self.entity_types)}"
            )
        if guided:
            missing = [t.value for t in self.entity_types if not self.type_definitions.get(t, "").strip()]
            if missing:
                raise ConfigInvalid(f"missing type definitions for: {', '.join(missing)}")
        if self.fewshot_examples is None:
            object.__setattr__(self, "fewshot_examples", default_fewshot_examples(self.delimiters))
        if not self.fewshot_examples:
            raise ConfigInvalid("at least one few-shot example is required")


def _format_block(config: ExtractionPromptConfig) -> str:
    td, rd, cd = config.delimiters.all()
    return (
        "Output format:\n"
        f'Write one record per finding. Entities: ("entity"{td}ENTITY_NAME{td}ENTITY_TYPE{td}DESCRIPTION). '
        f'Relationships: ("relationship"{td}SOURCE_ENTITY{td}TARGET_ENTITY{td}DESCRIPTION{td}STRENGTH). '
        f"Write entity names in capitals, exactly as they appear. Separate records with {rd} "
        f"and end the whole output with {cd}."
    )


def extraction_prompt_blocks(config: ExtractionPromptConfig) -> list[tuple[str, str]]:
    """Labelled prompt blocks, in order. The guided and baseline variants
    differ exactly in the presence of the definitions, ordering and filter
    blocks (given the same examples)."""
    type_list = ", ".join(t.value for t in config.entity_types)
    guided = config.mode is ExtractionMode.COREKG

    blocks: list[tuple[str, str]] = []
    blocks.append(
        (
            "goal",
            "Goal:\n"
            "You extract entities and the relationships between them from narrative case text, "
            f"for use in a knowledge graph of smuggling activity. Extract only entities of these types: [{type_list}]. "
            "Report only what the text states; never infer or invent.",
        )
    )
    if guided:
        definition_lines = ["Entity type definitions:"]
        for n, etype in enumerate(config.entity_types, 1):
            definition_lines.append(f"{n}. {etype.value}: {config.type_definitions[etype]}")
        blocks.append(("definitions", "\n".join(definition_lines)))

    entity_step = (
        "Step 1 - entities:\n"
        "Find every explicitly stated entity of the listed types. For each, give its name as written, "
        "its type, and a short description of its role in the narrative."
    )
    blocks.append(("entities", entity_step))
    if guided:
        blocks.append(
            (
                "ordering",
                "Extraction order:\n"
                f"Work one type at a time, in this exact order: {type_list}. "
                "Finish collecting every mention of one type before moving to the next, "
                "and only then continue to the relationship step.",
            )
        )
    blocks.append(
        (
            "relationships",
            "Step 2 - relationships:\n"
            "From the entities found above, record each clearly stated relationship as source, target, "
            "a one-sentence description, and a strength score from 0 to 10: "
            "0-3 for indirect or uncertain links, 4-6 for explicit links with little context, "
            "7-10 for clear, direct, well-supported links.",
        )
    )
    if guided:
        blocks.append(
            (
                "filter",
                "Step 3 - filter government entities:\n"
                "Before producing the final list, remove every entity tied to courts, juries, judges, "
                "prosecution, government bodies or legal procedure, together with any relationship "
                "touching such an entity. They are out of scope.",
            )
        )
    blocks.append(("format", _format_block(config)))

    examples = config.fewshot_examples if guided else config.fewshot_examples[:1]
    example_lines = ["Examples:"]
    for n, (example_in, example_out) in enumerate(examples, 1):
        example_lines.append(f"Example {n}:")
        example_lines.append(f"Input: {example_in}")
        example_lines.append(f"Output:\n{example_out}")
    blocks.append(("examples", "\n".join(example_lines)))
    return blocks


def build_extraction_prompt(chunk_text: str, config: ExtractionPromptConfig) -> str:
    blocks = [text for _, text in extraction_prompt_blocks(config)]
    blocks.append(f"Input text:\n{chunk_text}\nOutput:")
    return "\n\n".join(blocks)


# ---------------------------------------------------------------------------
# output parsing

_ENTITY_ARITY = 4
_RELATIONSHIP_ARITY = 5


def _unquote(text: str) -> str:
    text = text.strip()
    if len(text) >= 2 and text[0] == text[-1] == '"':
        return text[1:-1]
    return text


def _parse_entity_type(raw: str) -> EntityType | None:
    candidate = raw.strip().strip('"').upper().replace(" ", "_")
    try:
        return EntityType(candidate)
    except ValueError:
        return None


def parse_extraction_output(
    raw_text: str,
    delimiters: DelimiterSet,
    source: tuple[str, int] = ("", 0),
) -> tuple[list[EntityRecord], list[RelationshipRecord], ParseReport]:
    """Parse delimiter-formatted model output into typed records.

    Candidate records are the non-empty segments between record delimiters,
    up to the completion delimiter; anything after it is ignored. A record
    is skipped (with a reason) when its tag, arity, entity type or strength
    is invalid. ``report.parsed + len(report.skipped)`` always equals the
    candidate count.
    """
    td, rd, cd = delimiters.all()
    completion_at = raw_text.find(cd)
    report = ParseReport(completion_seen=completion_at != -1)
    content = raw_text[:completion_at] if completion_at != -1 else raw_text

    entities: list[EntityRecord] = []
    relationships: list[RelationshipRecord] = []
    index = 0
    for segment in content.split(rd):
        stripped = segment.strip()
        if not stripped:
            continue
        candidate_index = index
        index += 1
        snippet = stripped[:60]

        body = stripped
        if body.startswith("(") and body.endswith(")"):
            body = body[1:-1]
        fields = body.split(td)
        tag = _unquote(fields[0]).lower()

        if tag == "entity":
            if len(fields) != _ENTITY_ARITY:
                report.skipped.append(
                    SkippedRecord(candidate_index, f"entity record needs {_ENTITY_ARITY} fields, got {len(fields)}", snippet)
                )
                continue
            name = normalize_name(_unquote(fields[1]))
            entity_type = _parse_entity_type(fields[2])
            if not name:
                report.skipped.append(SkippedRecord(candidate_index, "empty entity name", snippet))
                continue
            if entity_type is None:
                report.skipped.append(
                    SkippedRecord(candidate_index, f"unknown entity type {fields[2].strip()!r}", snippet)
                )
                continue
            entities.append(EntityRecord(name, entity_type, sanitize_text(fields[3].strip()), source))
            report.parsed += 1
        elif tag == "relationship":
            if len(fields) != _RELATIONSHIP_ARITY:
                report.skipped.append(
                    SkippedRecord(
                        candidate_index,
                        f"relationship record needs {_RELATIONSHIP_ARITY} fields, got {len(fields)}",
                        snippet,
                    )
                )
                continue
            source_name = normalize_name(_unquote(fields[1]))
            target_name = normalize_name(_unquote(fields[2]))
            if not source_name or not target_name:
                report.skipped.append(SkippedRecord(candidate_index, "empty endpoint name", snippet))
                continue
            try:
                strength = int(_unquote(fields[4]))
            except ValueError:
                report.skipped.append(
                    SkippedRecord(candidate_index, f"strength is not an integer: {fields[4].strip()!r}", snippet)
                )
                continue
            if not 0 <= strength <= 10:
                report.skipped.append(
                    SkippedRecord(candidate_index, f"strength {strength} out of range 0-10", snippet)
                )
                continue
            relationships.append(
                RelationshipRecord(source_name, target_name, sanitize_text(fields[3].strip()), strength, source)
            )
            report.parsed += 1
        else:
            report.skipped.append(SkippedRecord(candidate_index, f"unknown record tag {tag!r}", snippet))
    return entities, relationships, report


def serialize_records(
    entities: Sequence[EntityRecord],
    relationships: Sequence[RelationshipRecord],
    delimiters: DelimiterSet,
) -> str:
    """Render records in the delimiter format the parser reads back.

    Raises :class:`ValueError` if any field contains one of the delimiter
    strings, since such records cannot round-trip.
    """
    td, rd, cd = delimiters.all()

    def check(value: str) -> str:
        for delim in delimiters.all():
            if delim in value:
                raise ValueError(f"field {value!r} contains delimiter {delim!r}")
        return value

    lines = []
    for e in entities:
        lines.append(
            f'("entity"{td}{check(e.name)}{td}{e.entity_type.value}{td}{check(e.description)}){rd}'
        )
    for r in relationships:
        lines.append(
            f'("relationship"{td}{check(r.source_name)}{td}{check(r.target_name)}'
            f"{td}{check(r.description)}{td}{r.strength}){rd}"
        )
    return "\n".join(lines + [cd])


# ---------------------------------------------------------------------------
# government-entity filter

DEFAULT_GOVERNMENT_TERMS = (
    "court",
    "district court",
    "court of appeals",
    "state court",
    "appeal",
    "appeal process",
    "judgment of acquittal",
    "motion for judgment of acquittal",
    "plain error standard",
    "jury",
    "prosecution",
    "government",
)


def default_government_lexicon() -> frozenset[str]:
    path = Path(__file__).parent / "data" / "government_lexicon.txt"
    if path.is_file():
        return load_lexicon(path)
    return frozenset(normalize_name(t) for t in DEFAULT_GOVERNMENT_TERMS)


def load_lexicon(path: Path) -> frozenset[str]:
    """One term per line; '#' starts a comment."""
    terms = set()
    for raw in Path(path).read_text(encoding="utf-8").splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        normalized = normalize_name(line)
        if normalized:
            terms.add(normalized)
    return frozenset(terms)


def filter_government_entities(
    entities: Sequence[EntityRecord],
    relationships: Sequence[RelationshipRecord],
    lexicon: Iterable[str] | None = None,
) -> tuple[list[EntityRecord], list[RelationshipRecord]]:
    """Drop entities whose normalized name is in the lexicon, and every
    relationship incident to such a name. A post-hoc safety net behind the
    in-prompt filter step."""
    terms = frozenset(lexicon) if lexicon is not None else default_government_lexicon()
    kept_entities = [e for e in entities if e.name not in terms]
    kept_relationships = [
        r for r in relationships if r.source_name not in terms and r.target_name not in terms
    ]
    return kept_entities, kept_relationships
