"""Prompt construction with re-weighted class tokens.

Prompts are ordered lists of (text, weight) segments rather than a rendered
string, so a backend can apply weights with whatever emphasis mechanism it
has. Class tokens default to weight 1.21 (two '+' steps at x1.1 each in the
common emphasis convention); weight 1.0 segments are ordinary text.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .errors import ConfigError

DEFAULT_CLASS_WEIGHT = 1.21
_PLUS_STEP = 1.1
_MAX_PLUSES = 4
_LEADING_PUNCT = ",.;:!?)"


@dataclass(frozen=True)
class PromptSegment:
    text: str
    weight: float = 1.0

    def __post_init__(self) -> None:
        if not self.text:
            raise ConfigError("prompt segment text must be non-empty")
        if self.weight <= 0:
            raise ConfigError(f"prompt segment weight must be > 0, got {self.weight}")


@dataclass
class PromptSpec:
    segments: list[PromptSegment] = field(default_factory=list)
    negative_text: str | None = None

    def plain_text(self) -> str:
        """Segments joined by single spaces; leading punctuation attaches
        to the previous segment without a space."""
        return join_segments(seg.text for seg in self.segments)


def join_segments(texts) -> str:
    out: list[str] = []
    for text in texts:
        if out and text[0] not in _LEADING_PUNCT:
            out.append(" ")
        out.append(text)
    return "".join(out)


def build_simple_prompt(
    class_names: list[str], class_weight: float = DEFAULT_CLASS_WEIGHT
) -> PromptSpec:
    """Bare class enumeration: "A photograph of name1, name2, ..."."""
    if not class_names:
        return PromptSpec(segments=[PromptSegment("A photograph")])
    segments = [PromptSegment("A photograph of")]
    for i, name in enumerate(class_names):
        if i > 0:
            segments.append(PromptSegment(","))
        segments.append(PromptSegment(name, weight=class_weight))
    return PromptSpec(segments=segments)


def _whole_word(name: str) -> re.Pattern:
    return re.compile(rf"\b{re.escape(name)}\b", re.IGNORECASE)


def build_class_aware_prompt(
    caption: str | None,
    class_names: list[str],
    class_weight: float = DEFAULT_CLASS_WEIGHT,
) -> PromptSpec:
    """Caption with class tokens weighted; missing classes appended.

    The first whole-word occurrence of each class name in the caption becomes
    its own weighted segment; classes the caption never mentions are appended
    as ", name" with the same weight, so the final text always names every
    class at least once.
    """
    if class_weight < 1.0:
        raise ConfigError(f"class_weight must be >= 1, got {class_weight}")
    caption = (caption or "").strip()
    if not caption:
        return build_simple_prompt(class_names, class_weight)

    claimed: list[tuple[int, int, str]] = []  # (start, end, name), disjoint
    missing: list[str] = []
    for name in class_names:
        match = None
        for candidate in _whole_word(name).finditer(caption):
            overlaps = any(
                candidate.start() < end and start < candidate.end()
                for start, end, _ in claimed
            )
            if not overlaps:
                match = candidate
                break
        if match is None:
            missing.append(name)
        else:
            claimed.append((match.start(), match.end(), name))
    claimed.sort()

    segments: list[PromptSegment] = []
    cursor = 0
    for start, end, _name in claimed:
        before = caption[cursor:start].strip()
        if before:
            segments.append(PromptSegment(before))
        segments.append(PromptSegment(caption[start:end], weight=class_weight))
        cursor = end
    tail = caption[cursor:].strip()
    if tail:
        segments.append(PromptSegment(tail))
    for name in missing:
        segments.append(PromptSegment(","))
        segments.append(PromptSegment(name, weight=class_weight))
    return PromptSpec(segments=segments)


def build_inpaint_prompt(
    class_name: str,
    caption: str | None = None,
    class_weight: float = DEFAULT_CLASS_WEIGHT,
) -> PromptSpec:
    """Per-class prompt: "A photograph of <class>, <caption>"."""
    if not class_name:
        raise ConfigError("class_name must be non-empty")
    segments = [
        PromptSegment("A photograph of"),
        PromptSegment(class_name, weight=class_weight),
    ]
    caption = (caption or "").strip()
    if caption:
        segments.append(PromptSegment(","))
        segments.append(PromptSegment(caption))
    return PromptSpec(segments=segments)


def _plus_count(weight: float) -> int | None:
    for k in range(1, _MAX_PLUSES + 1):
        if abs(weight - _PLUS_STEP**k) < 1e-6:
            return k
    return None


def render_weighted_syntax(spec: PromptSpec) -> str:
    """Render segments in emphasis syntax: "(text)++" for weight 1.1^k,
    "(text:w)" otherwise, bare text at weight 1.0."""
    rendered: list[str] = []
    for seg in spec.segments:
        if seg.weight == 1.0:
            rendered.append(seg.text)
            continue
        pluses = _plus_count(seg.weight)
        if pluses is not None:
            rendered.append(f"({seg.text})" + "+" * pluses)
        else:
            rendered.append(f"({seg.text}:{seg.weight:.2f})")
    return join_segments(rendered)


_WEIGHTED_GROUP = re.compile(r"\(([^():]+)(?::(\d+(?:\.\d+)?))?\)(\++)?")


def parse_weighted_syntax(text: str) -> PromptSpec:
    """Inverse of render_weighted_syntax, to 2-decimal weight precision."""
    segments: list[PromptSegment] = []
    cursor = 0
    for match in _WEIGHTED_GROUP.finditer(text):
        before = text[cursor : match.start()].strip()
        if before:
            segments.append(PromptSegment(before))
        inner, explicit, pluses = match.groups()
        if explicit is not None:
            weight = float(explicit)
        elif pluses:
            weight = round(_PLUS_STEP ** len(pluses), 2)
        else:
            weight = 1.0
        segments.append(PromptSegment(inner, weight=weight))
        cursor = match.end()
    tail = text[cursor:].strip()
    if tail:
        segments.append(PromptSegment(tail))
    return PromptSpec(segments=segments)
