"""The ``<tag>...</tag>`` annotation format and anchor spans over tokens.

Markers delimit token spans that downstream consumers must copy
verbatim. Parsing and rendering are exact inverses on valid input.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterable, NamedTuple, Sequence

from .textcore import (
    LanguageProfile,
    SEG_WHITESPACE,
    Token,
    TokenizedSentence,
    get_profile,
    tokenize,
)

OPEN_MARKER = "<tag>"
CLOSE_MARKER = "</tag>"


class UnbalancedTagsError(ValueError):
    """Open marker without close, close without open, or nesting."""


class EmptyAnchorError(ValueError):
    """A marker pair enclosing no tokens."""


class AnchorSpan(NamedTuple):
    start: int  # token index, inclusive
    end: int  # token index, exclusive


def _normalize_spans(spans: Iterable[AnchorSpan], n_tokens: int) -> tuple[AnchorSpan, ...]:
    ordered = sorted(AnchorSpan(*s) for s in spans)
    merged: list[AnchorSpan] = []
    for span in ordered:
        if not (0 <= span.start < span.end <= n_tokens):
            raise ValueError(f"anchor span {span} out of bounds for {n_tokens} tokens")
        if merged and span.start < merged[-1].end:
            raise ValueError(f"overlapping anchor spans: {merged[-1]} and {span}")
        if merged and span.start == merged[-1].end:
            merged[-1] = AnchorSpan(merged[-1].start, span.end)
        else:
            merged.append(span)
    return tuple(merged)


@dataclass(frozen=True)
class TaggedSentence:
    """A tokenized sentence plus sorted, non-overlapping anchor spans.

    Adjacent spans are merged on construction; overlapping spans are
    rejected.
    """

    sentence: TokenizedSentence
    anchors: tuple[AnchorSpan, ...]
    lang: str

    def __post_init__(self):
        object.__setattr__(
            self, "anchors", _normalize_spans(self.anchors, len(self.sentence))
        )

    def anchor_norms(self) -> tuple[tuple[str, ...], ...]:
        """Normalized token sequence of each anchor span."""
        norms = self.sentence.norms
        return tuple(tuple(norms[s.start : s.end]) for s in self.anchors)

    def anchor_surfaces(self) -> tuple[tuple[str, ...], ...]:
        surfaces = self.sentence.surfaces
        return tuple(tuple(surfaces[s.start : s.end]) for s in self.anchors)


def parse_tagged(
    text: str,
    profile: LanguageProfile,
    open_marker: str = OPEN_MARKER,
    close_marker: str = CLOSE_MARKER,
) -> TaggedSentence:
    """Parse annotated text into tokens and anchor spans.

    Markers are token-boundary delimiters regardless of surrounding
    whitespace. Raises UnbalancedTagsError for dangling/nested markers
    and EmptyAnchorError for a marker pair with no enclosed tokens.
    """
    splitter = re.compile(
        "({}|{})".format(re.escape(open_marker), re.escape(close_marker))
    )
    tokens: list[Token] = []
    spans: list[AnchorSpan] = []
    depth = 0
    anchor_start = 0
    for piece in splitter.split(text):
        if piece == open_marker:
            if depth:
                raise UnbalancedTagsError(f"nested {open_marker} in: {text!r}")
            depth = 1
            anchor_start = len(tokens)
        elif piece == close_marker:
            if not depth:
                raise UnbalancedTagsError(f"{close_marker} without {open_marker} in: {text!r}")
            depth = 0
            if len(tokens) == anchor_start:
                raise EmptyAnchorError(f"empty anchor in: {text!r}")
            spans.append(AnchorSpan(anchor_start, len(tokens)))
        else:
            tokens.extend(tokenize(piece, profile).tokens)
    if depth:
        raise UnbalancedTagsError(f"{open_marker} without {close_marker} in: {text!r}")
    sentence = TokenizedSentence(
        raw=profile.join(t.surface for t in tokens), tokens=tuple(tokens)
    )
    return TaggedSentence(sentence=sentence, anchors=tuple(spans), lang=profile.code)


def render_tagged(
    ts: TaggedSentence,
    open_marker: str = OPEN_MARKER,
    close_marker: str = CLOSE_MARKER,
) -> str:
    """Serialize back to marker form; inverse of `parse_tagged`.

    Markers are always set off by single spaces; text between markers
    uses the profile's joining rule.
    """
    profile = get_profile(ts.lang)
    surfaces = ts.sentence.surfaces
    if profile.segmentation == SEG_WHITESPACE:
        pieces: list[str] = []
        starts = {s.start: True for s in ts.anchors}
        ends = {s.end: True for s in ts.anchors}
        for i, surface in enumerate(surfaces):
            if i in starts:
                pieces.append(open_marker)
            if i in ends:
                pieces.append(close_marker)
            pieces.append(surface)
        if len(surfaces) in ends:
            pieces.append(close_marker)
        return " ".join(pieces)
    # per-character profiles: join segments natively, pad only the markers
    segments: list[str] = []
    cursor = 0
    for span in ts.anchors:
        if cursor < span.start:
            segments.append(profile.join(surfaces[cursor : span.start]))
        segments.append(open_marker)
        segments.append(profile.join(surfaces[span.start : span.end]))
        segments.append(close_marker)
        cursor = span.end
    if cursor < len(surfaces):
        segments.append(profile.join(surfaces[cursor:]))
    return " ".join(seg for seg in segments if seg)


def strip_tags(ts: TaggedSentence) -> TokenizedSentence:
    """The underlying sentence with all markers dropped."""
    return ts.sentence


class AnchorInsertion(NamedTuple):
    tagged: TaggedSentence
    skipped: tuple[tuple[str, ...], ...]  # anchors that claimed no span


def insert_anchors(
    sentence: TokenizedSentence,
    anchor_texts: Iterable[Sequence[str]],
    lang: str,
) -> AnchorInsertion:
    """Mark every non-overlapping occurrence of each anchor.

    Anchors are normalized token sequences. Overlap conflicts go to the
    longer anchor, then the leftmost occurrence. Anchors that end up
    with no spans (absent, or fully shadowed) are reported in `skipped`.
    """
    norms = sentence.norms
    unique = [tuple(a) for a in dict.fromkeys(tuple(a) for a in anchor_texts) if len(a)]
    occurrences = []
    for anchor in unique:
        k = len(anchor)
        for i in range(len(norms) - k + 1):
            if tuple(norms[i : i + k]) == anchor:
                occurrences.append((anchor, i))
    occurrences.sort(key=lambda oc: (-len(oc[0]), oc[1], oc[0]))

    claimed = [False] * len(norms)
    spans: list[AnchorSpan] = []
    placed: set[tuple[str, ...]] = set()
    for anchor, start in occurrences:
        end = start + len(anchor)
        if any(claimed[start:end]):
            continue
        for i in range(start, end):
            claimed[i] = True
        spans.append(AnchorSpan(start, end))
        placed.add(anchor)

    skipped = tuple(a for a in unique if a not in placed)
    tagged = TaggedSentence(sentence=sentence, anchors=tuple(spans), lang=lang)
    return AnchorInsertion(tagged=tagged, skipped=skipped)
