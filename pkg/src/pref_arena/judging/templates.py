"""Prompt templates with fixed placeholder slots.

The original step prompts are not public, so templates are editable text
with a validated slot vocabulary: {video}, {description_1}, {description_2},
{reference}, {reasoning}. Each template carries a role that fixes which
slots are required; unknown slots are rejected up front so a typo fails at
load time, not mid-campaign.
"""

from __future__ import annotations

import string
from dataclasses import dataclass
from enum import Enum
from typing import Mapping


class TemplateError(ValueError):
    """Malformed template text or a fill with missing slot values."""


class TemplateRole(str, Enum):
    DESCRIBE = "describe"
    PREFER = "prefer"
    REASON = "reason"
    PREFER_FROM_REASONING = "prefer_from_reasoning"


KNOWN_SLOTS = frozenset({"video", "description_1", "description_2", "reference", "reasoning"})

# Required / allowed slots per role. The preference step appears in two
# shapes: against the raw video (single-step) and against a generated
# reference description (two-step), so video and reference are optional there.
_REQUIRED = {
    TemplateRole.DESCRIBE: frozenset({"video"}),
    TemplateRole.PREFER: frozenset({"description_1", "description_2"}),
    TemplateRole.REASON: frozenset({"reference", "description_1", "description_2"}),
    TemplateRole.PREFER_FROM_REASONING: frozenset({"reasoning"}),
}
_ALLOWED = {
    TemplateRole.DESCRIBE: frozenset({"video"}),
    TemplateRole.PREFER: frozenset({"description_1", "description_2", "video", "reference"}),
    TemplateRole.REASON: frozenset({"reference", "description_1", "description_2"}),
    TemplateRole.PREFER_FROM_REASONING: frozenset(
        {"reasoning", "description_1", "description_2"}
    ),
}


def _slots_in(text: str) -> set[str]:
    slots = set()
    try:
        for _, field, _, _ in string.Formatter().parse(text):
            if field is not None:
                slots.add(field)
    except ValueError as exc:
        raise TemplateError(f"malformed template: {exc}") from exc
    if any(not s for s in slots):
        raise TemplateError("positional {} slots are not allowed; name every slot")
    return slots


@dataclass(frozen=True)
class PromptTemplate:
    """Template text plus the role that pins its slot contract."""

    role: TemplateRole
    text: str

    def __post_init__(self) -> None:
        slots = _slots_in(self.text)
        unknown = slots - KNOWN_SLOTS
        if unknown:
            raise TemplateError(
                f"{self.role.value} template has unknown slots: {sorted(unknown)}"
            )
        extra = slots - _ALLOWED[self.role]
        if extra:
            raise TemplateError(
                f"{self.role.value} template may not use slots: {sorted(extra)}"
            )
        missing = _REQUIRED[self.role] - slots
        if missing:
            raise TemplateError(
                f"{self.role.value} template is missing required slots: {sorted(missing)}"
            )

    @property
    def slots(self) -> frozenset[str]:
        return frozenset(_slots_in(self.text))

    def fill(self, values: Mapping[str, str]) -> str:
        needed = self.slots
        missing = needed - set(values)
        if missing:
            raise TemplateError(
                f"{self.role.value} template fill is missing values for: {sorted(missing)}"
            )
        return self.text.format(**{k: values[k] for k in needed})


ANSWER_INSTRUCTION = (
    'Answer with exactly one of: "Description 1", "Description 2", or "Tie".'
)

DESCRIBE_TEMPLATE = PromptTemplate(
    TemplateRole.DESCRIBE,
    "Watch the following video clip: {video}\n"
    "Describe in detail the emotional state of the main character, covering "
    "facial expressions, tone of voice, body language, and how the emotions "
    "evolve over the clip.",
)

PREFER_DIRECT_TEMPLATE = PromptTemplate(
    TemplateRole.PREFER,
    "Watch the following video clip: {video}\n"
    "Below are two candidate descriptions of the main character's emotional "
    "state.\n\n"
    "Description 1: {description_1}\n\n"
    "Description 2: {description_2}\n\n"
    "Which description more accurately reflects the emotions shown in the "
    f"video? {ANSWER_INSTRUCTION}",
)

PREFER_WITH_REFERENCE_TEMPLATE = PromptTemplate(
    TemplateRole.PREFER,
    "Here is a reference description of a video's emotional content:\n"
    "{reference}\n\n"
    "Below are two candidate descriptions of the same video.\n\n"
    "Description 1: {description_1}\n\n"
    "Description 2: {description_2}\n\n"
    "Which candidate description aligns better with the reference? "
    f"{ANSWER_INSTRUCTION}",
)

REASON_TEMPLATE = PromptTemplate(
    TemplateRole.REASON,
    "Here is a reference description of a video's emotional content:\n"
    "{reference}\n\n"
    "Below are two candidate descriptions of the same video.\n\n"
    "Description 1: {description_1}\n\n"
    "Description 2: {description_2}\n\n"
    "Reason step by step about how well each candidate matches the "
    "reference: which emotions it captures, which it misses, and which it "
    "invents. Do not state a final preference yet.",
)

PREFER_FROM_REASONING_TEMPLATE = PromptTemplate(
    TemplateRole.PREFER_FROM_REASONING,
    "An analyst compared two candidate descriptions of a video against a "
    "reference and wrote this reasoning:\n"
    "{reasoning}\n\n"
    "Based on this reasoning, which candidate is better? "
    f"{ANSWER_INSTRUCTION}",
)


def default_templates() -> dict[TemplateRole, PromptTemplate]:
    """One template per role; the preference role defaults to the
    reference-based variant used by the multi-step chains."""
    return {
        TemplateRole.DESCRIBE: DESCRIBE_TEMPLATE,
        TemplateRole.PREFER: PREFER_WITH_REFERENCE_TEMPLATE,
        TemplateRole.REASON: REASON_TEMPLATE,
        TemplateRole.PREFER_FROM_REASONING: PREFER_FROM_REASONING_TEMPLATE,
    }


def templates_from_config(config: Mapping[str, str]) -> dict[TemplateRole, PromptTemplate]:
    """Override defaults with role→text entries from a config table."""
    templates = default_templates()
    for key, text in config.items():
        try:
            role = TemplateRole(key)
        except ValueError as exc:
            raise TemplateError(f"unknown template role {key!r}") from exc
        templates[role] = PromptTemplate(role, text)
    return templates
