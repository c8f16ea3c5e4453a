"""Language-profile-aware tokenization, normalization, and n-gram primitives.

Every other module compares tokens through the normalized forms produced
here, so this is the single place that defines token equality.
"""

from __future__ import annotations

import unicodedata
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from typing import Iterable, Sequence

SEG_WHITESPACE = "whitespace"
SEG_PER_CHARACTER = "per-character"
_SEGMENTATIONS = (SEG_WHITESPACE, SEG_PER_CHARACTER)

_STOPWORD_FILES = {"en": "stopwords_en.txt", "zh": "stopwords_zh.txt"}


def normalize(text: str) -> str:
    """Canonical token form: Unicode NFKC followed by case folding."""
    return unicodedata.normalize("NFKC", text).casefold()


def _is_punct_char(ch: str) -> bool:
    # Punctuation and symbol categories both count as non-content.
    return unicodedata.category(ch)[0] in ("P", "S")


def is_punct(norm: str) -> bool:
    """True iff the normalized token consists solely of punctuation/symbols."""
    return bool(norm) and all(_is_punct_char(ch) for ch in norm)


def _is_latin_alnum(ch: str) -> bool:
    return ("a" <= ch <= "z") or ("A" <= ch <= "Z") or ("0" <= ch <= "9")


@dataclass(frozen=True)
class Token:
    surface: str
    norm: str

    @classmethod
    def from_surface(cls, surface: str) -> "Token":
        return cls(surface=surface, norm=normalize(surface))


@dataclass(frozen=True)
class LanguageProfile:
    """Per-language tokenization rules plus the normalized stopword set."""

    code: str
    segmentation: str = SEG_WHITESPACE
    stopwords: frozenset[str] = field(default_factory=frozenset)

    def __post_init__(self):
        if not self.code:
            raise ValueError("language code must be non-empty")
        if self.segmentation not in _SEGMENTATIONS:
            raise ValueError(f"unknown segmentation: {self.segmentation!r}")

    def is_stopword(self, norm: str) -> bool:
        return norm in self.stopwords

    def join(self, surfaces: Iterable[str]) -> str:
        """Rejoin token surfaces; inverse of `tokenize` up to whitespace."""
        if self.segmentation == SEG_WHITESPACE:
            return " ".join(surfaces)
        parts: list[str] = []
        for surface in surfaces:
            if parts and parts[-1] and surface:
                # keep adjacent Latin runs from fusing into one token
                if _is_latin_alnum(parts[-1][-1]) and _is_latin_alnum(surface[0]):
                    parts.append(" ")
            parts.append(surface)
        return "".join(parts)


@dataclass(frozen=True)
class TokenizedSentence:
    raw: str
    tokens: tuple[Token, ...]

    def __len__(self) -> int:
        return len(self.tokens)

    @property
    def surfaces(self) -> tuple[str, ...]:
        return tuple(t.surface for t in self.tokens)

    @property
    def norms(self) -> tuple[str, ...]:
        return tuple(t.norm for t in self.tokens)


def _split_whitespace_chunk(chunk: str) -> list[str]:
    """Peel leading/trailing punctuation into standalone tokens."""
    i, j = 0, len(chunk)
    while i < j and _is_punct_char(chunk[i]):
        i += 1
    while j > i and _is_punct_char(chunk[j - 1]):
        j -= 1
    pieces = list(chunk[:i])
    if i < j:
        pieces.append(chunk[i:j])
    pieces.extend(chunk[j:])
    return pieces


def _tokenize_per_character(text: str) -> list[str]:
    pieces: list[str] = []
    run = ""
    for ch in text:
        if ch.isspace():
            if run:
                pieces.append(run)
                run = ""
        elif _is_latin_alnum(ch):
            run += ch
        else:
            if run:
                pieces.append(run)
                run = ""
            pieces.append(ch)
    if run:
        pieces.append(run)
    return pieces


def tokenize(text: str, profile: LanguageProfile) -> TokenizedSentence:
    """Segment `text` according to the profile.

    Whitespace segmentation splits on Unicode whitespace and peels
    leading/trailing punctuation off each chunk; per-character
    segmentation emits one token per non-whitespace character except
    that runs of Latin letters/digits stay whole (mixed-script text).
    """
    if profile.segmentation == SEG_WHITESPACE:
        pieces = [p for chunk in text.split() for p in _split_whitespace_chunk(chunk)]
    else:
        pieces = _tokenize_per_character(text)
    return TokenizedSentence(raw=text, tokens=tuple(Token.from_surface(p) for p in pieces))


def _norm_of(item) -> str:
    return item.norm if isinstance(item, Token) else item


def ngrams(tokens: Sequence, n: int) -> list[tuple[str, ...]]:
    """All contiguous length-`n` normalized subsequences, with multiplicity.

    Accepts `Token` sequences or plain normalized strings.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    norms = [_norm_of(t) for t in tokens]
    return [tuple(norms[i : i + n]) for i in range(len(norms) - n + 1)]


def is_content(tokens: Sequence, profile: LanguageProfile) -> bool:
    """True iff at least one token is neither a stopword nor pure punctuation."""
    for t in tokens:
        norm = _norm_of(t)
        if norm and not profile.is_stopword(norm) and not is_punct(norm):
            return True
    return False


def _load_stopwords(filename: str) -> frozenset[str]:
    words = set()
    path = resources.files("paratag").joinpath("data", filename)
    for line in path.read_text(encoding="utf-8").splitlines():
        entry = line.split("#", 1)[0].strip()
        if entry:
            words.add(normalize(entry))
    return frozenset(words)


@lru_cache(maxsize=None)
def get_profile(code: str) -> LanguageProfile:
    """Profile for a language code; unknown codes fall back to whitespace
    segmentation with no stopwords. Codes like ``en_XX`` map to ``en``."""
    base = code.replace("-", "_").split("_", 1)[0].lower()
    if base == "zh":
        return LanguageProfile(code, SEG_PER_CHARACTER, _load_stopwords(_STOPWORD_FILES["zh"]))
    if base in _STOPWORD_FILES:
        return LanguageProfile(code, SEG_WHITESPACE, _load_stopwords(_STOPWORD_FILES[base]))
    return LanguageProfile(code, SEG_WHITESPACE, frozenset())
