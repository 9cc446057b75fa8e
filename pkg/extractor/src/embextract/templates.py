"""Prompt templates and their expansion over class-name sets.

Templates carry a single ``{}`` slot for the class name; the bare ``"{}"``
template is the no-context prompt. The default ensemble is the seven
standard hand-crafted templates plus the bare name.
"""

from __future__ import annotations

STANDARD_TEMPLATES = (
    "itap of a {}.",
    "a bad photo of the {}.",
    "a origami {}.",
    "a photo of the large {}.",
    "a {} in a video game.",
    "art of the {}.",
    "a photo of the small {}.",
)

NO_CONTEXT_TEMPLATE = "{}"

DEFAULT_TEMPLATES = STANDARD_TEMPLATES + (NO_CONTEXT_TEMPLATE,)

REQUIRED_NAME_SETS = ("wordnet", "openai", "openai_plus")


def validate_template(template: str) -> str:
    if template.count("{}") != 1:
        raise ValueError(f"template must contain exactly one {{}} slot: {template!r}")
    return template


def instantiate(template: str, class_name: str) -> str:
    """The prompt string for one (template, class name) pair."""
    if not class_name or not class_name.strip():
        raise ValueError("class name is empty")
    return validate_template(template).format(class_name)


def expand_prompts(templates: tuple[str, ...], class_names: tuple[str, ...]) -> list[str]:
    """All T*C prompt strings, template-major: index(t, c) = t * C + c."""
    if not templates:
        raise ValueError("template list is empty")
    return [instantiate(t, name) for t in templates for name in class_names]
