"""Type-aware sequential coreference resolution.

One entity type is resolved per LLM call, in a fixed order, with each
stage's output text feeding the next stage. A cheap length-ratio guard
rejects outputs that look like summaries instead of rewrites.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from pathlib import Path
from .corpus import count_tokens
from .llm_gateway import CompletionRequest, Gateway
from .normalize import text_sha256

INPUT_SLOT = "{input_text}"


class EntityType(enum.Enum):
    PERSON = "PERSON"
    LOCATION = "LOCATION"
    ROUTES = "ROUTES"
    ORGANIZATION = "ORGANIZATION"
    MEANS_OF_TRANSPORTATION = "MEANS_OF_TRANSPORTATION"
    MEANS_OF_COMMUNICATION = "MEANS_OF_COMMUNICATION"
    SMUGGLED_ITEMS = "SMUGGLED_ITEMS"


DEFAULT_TYPE_ORDER: tuple[EntityType, ...] = (
    EntityType.PERSON,
    EntityType.LOCATION,
    EntityType.ROUTES,
    EntityType.ORGANIZATION,
    EntityType.MEANS_OF_TRANSPORTATION,
    EntityType.MEANS_OF_COMMUNICATION,
    EntityType.SMUGGLED_ITEMS,
)


class CorefError(Exception):
    pass


class TemplateInvalid(CorefError):
    pass


class ResolutionRejected(CorefError):
    pass


class RejectAction(enum.Enum):
    RETRY_ONCE_THEN_PASSTHROUGH = "retry_once_then_passthrough"
    FAIL = "fail"


@dataclass(frozen=True)
class CorefPromptTemplate:
    entity_type: EntityType
    persona_text: str
    task_text: str
    context_text: str
    rules_text: str
    fewshot_examples: tuple[tuple[str, str], ...]
    input_slot: str = INPUT_SLOT

    def validate(self) -> None:
        components = {
            "persona": self.persona_text,
            "task": self.task_text,
            "context": self.context_text,
            "rules": self.rules_text,
        }
        for label, text in components.items():
            if not text.strip():
                raise TemplateInvalid(f"{self.entity_type.value}: empty {label} component")
            if self.input_slot in text:
                raise TemplateInvalid(
                    f"{self.entity_type.value}: input slot may only appear in the input section"
                )
        if not self.fewshot_examples:
            raise TemplateInvalid(f"{self.entity_type.value}: missing few-shot examples")
        for inp, out in self.fewshot_examples:
            if self.input_slot in inp or self.input_slot in out:
                raise TemplateInvalid(
                    f"{self.entity_type.value}: input slot may only appear in the input section"
                )
        if not self.input_slot:
            raise TemplateInvalid(f"{self.entity_type.value}: empty input slot marker")


@dataclass(frozen=True)
class ResolutionPolicy:
    type_order: tuple[EntityType, ...] = DEFAULT_TYPE_ORDER
    length_ratio_bounds: tuple[float, float] = (0.7, 1.3)
    on_reject: RejectAction = RejectAction.RETRY_ONCE_THEN_PASSTHROUGH

    def __post_init__(self) -> None:
        if len(set(self.type_order)) != len(self.type_order):
            raise ValueError("type_order contains duplicates")
        low, high = self.length_ratio_bounds
        if not low < 1 < high:
            raise ValueError(f"length ratio bounds must straddle 1, got {self.length_ratio_bounds}")


def build_coref_prompt(template: CorefPromptTemplate, input_text: str) -> str:
    """Assemble persona, task, context, rules, examples, then the input.

    Only the template's single slot is substituted; a slot marker occurring
    inside the input text is preserved verbatim.
    """
    template.validate()
    parts = [
        template.persona_text.strip(),
        template.task_text.strip(),
        template.context_text.strip(),
        template.rules_text.strip(),
    ]
    example_lines = ["Examples:"]
    for n, (example_in, example_out) in enumerate(template.fewshot_examples, 1):
        example_lines.append(f"Example {n}:")
        example_lines.append(f"Input: {example_in}")
        example_lines.append(f"Output: {example_out}")
    parts.append("\n".join(example_lines))
    parts.append(f"Input_text: {template.input_slot}\nOutput:")
    frame = "\n\n".join(parts)
    if frame.count(template.input_slot) != 1:
        raise TemplateInvalid(f"{template.entity_type.value}: expected exactly one input slot")
    return frame.replace(template.input_slot, input_text, 1)


@dataclass(frozen=True)
class StageRecord:
    entity_type: EntityType
    input_digest: str
    output_digest: str
    action: str  # "model" or "passthrough"
    calls: int
    retried: bool
    length_ratio: float | None

    def to_dict(self) -> dict:
        return {
            "entity_type": self.entity_type.value,
            "input_digest": self.input_digest,
            "output_digest": self.output_digest,
            "action": self.action,
            "calls": self.calls,
            "retried": self.retried,
            "length_ratio": None if self.length_ratio is None else round(self.length_ratio, 6),
        }


def _ratio(input_text: str, output_text: str) -> float | None:
    input_tokens = count_tokens(input_text)
    if input_tokens == 0:
        return None
    return count_tokens(output_text) / input_tokens


def resolve_entity_type(
    text: str,
    entity_type: EntityType,
    gateway: Gateway,
    policy: ResolutionPolicy,
    templates: dict[EntityType, CorefPromptTemplate],
    model_id: str,
) -> tuple[str, StageRecord]:
    """Run one resolution stage and validate its output length ratio.

    The returned text is either a validated model output or, under the
    pass-through policy, the stage's own input; never an unvalidated output.
    """
    try:
        template = templates[entity_type]
    except KeyError:
        raise TemplateInvalid(f"no template registered for {entity_type.value}") from None

    prompt = build_coref_prompt(template, text)
    low, high = policy.length_ratio_bounds
    input_digest = text_sha256(text)

    calls = 0
    ratio = None
    for attempt in range(2):
        response = gateway.complete(
            CompletionRequest(model_id=model_id, user_text=prompt, temperature=0.0)
        )
        calls += 1
        ratio = _ratio(text, response.text)
        if ratio is None or low <= ratio <= high:
            return response.text, StageRecord(
                entity_type,
                input_digest,
                text_sha256(response.text),
                "model",
                calls,
                retried=attempt > 0,
                length_ratio=ratio,
            )
        if policy.on_reject is RejectAction.FAIL:
            raise ResolutionRejected(
                f"{entity_type.value}: output/input length ratio {ratio:.3f} "
                f"outside [{low}, {high}]"
            )
    return text, StageRecord(
        entity_type, input_digest, input_digest, "passthrough", calls, retried=True, length_ratio=ratio
    )


def resolve_sequential(
    text: str,
    gateway: Gateway,
    policy: ResolutionPolicy,
    templates: dict[EntityType, CorefPromptTemplate],
    model_id: str,
) -> tuple[str, list[StageRecord]]:
    """Resolve every type in policy order, chaining output into input."""
    missing = [t.value for t in policy.type_order if t not in templates]
    if missing:
        raise TemplateInvalid(f"no template registered for: {', '.join(missing)}")

    trace: list[StageRecord] = []
    current = text
    for entity_type in policy.type_order:
        current, record = resolve_entity_type(
            current, entity_type, gateway, policy, templates, model_id
        )
        trace.append(record)
    return current, trace


# ---------------------------------------------------------------------------
# template files

_SECTION_KEYS = ("persona", "task", "context", "rules")


def parse_template_text(text: str, entity_type: EntityType) -> CorefPromptTemplate:
    """Parse a sectioned template file.

    Sections are introduced by ``[persona]``, ``[task]``, ``[context]``,
    ``[rules]`` and one ``[example]`` block per few-shot pair, each holding
    ``input:`` and ``output:`` entries (continuation lines are appended).
    """
    sections: dict[str, list[str]] = {}
    examples: list[dict[str, list[str]]] = []
    current: list[str] | None = None
    current_example: dict[str, list[str]] | None = None
    current_field: str | None = None

    for raw in text.splitlines():
        stripped = raw.strip()
        header = stripped.lower()
        if header.startswith("[") and header.endswith("]"):
            name = header[1:-1]
            if name == "example":
                current_example = {"input": [], "output": []}
                examples.append(current_example)
                current = None
                current_field = None
            elif name in _SECTION_KEYS:
                current = sections.setdefault(name, [])
                current_example = None
                current_field = None
            else:
                raise TemplateInvalid(f"{entity_type.value}: unknown section [{name}]")
            continue
        if current_example is not None:
            lowered = stripped.lower()
            if lowered.startswith("input:"):
                current_field = "input"
                current_example["input"].append(stripped[len("input:") :].strip())
            elif lowered.startswith("output:"):
                current_field = "output"
                current_example["output"].append(stripped[len("output:") :].strip())
            elif current_field and stripped:
                current_example[current_field].append(stripped)
        elif current is not None:
            current.append(raw)

    fewshot = tuple(
        ("\n".join(ex["input"]).strip(), "\n".join(ex["output"]).strip()) for ex in examples
    )
    template = CorefPromptTemplate(
        entity_type=entity_type,
        persona_text="\n".join(sections.get("persona", [])).strip(),
        task_text="\n".join(sections.get("task", [])).strip(),
        context_text="\n".join(sections.get("context", [])).strip(),
        rules_text="\n".join(sections.get("rules", [])).strip(),
        fewshot_examples=fewshot,
    )
    template.validate()
    return template


def default_template_dir() -> Path:
    return Path(__file__).parent / "prompts" / "coref"


def load_templates(template_dir: Path | None = None) -> dict[EntityType, CorefPromptTemplate]:
    """Load one template file per entity type (``person.txt``, ...)."""
    directory = Path(template_dir) if template_dir else default_template_dir()
    templates = {}
    for entity_type in EntityType:
        path = directory / f"{entity_type.value.lower()}.txt"
        if not path.is_file():
            raise TemplateInvalid(f"missing template file: {path}")
        templates[entity_type] = parse_template_text(
            path.read_text(encoding="utf-8"), entity_type
        )
    return templates
