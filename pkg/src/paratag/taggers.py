"""Distant-supervision anchor miners.

The reference-overlap miner extracts maximal token sequences shared by
the source and several references; the NER path tags entity mentions
through a gazetteer or an external token-tagging service; the learned
tagger is integration-only here and speaks the same wire protocol.
"""

from __future__ import annotations

import logging
import time
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Protocol, Sequence

import requests

from .textcore import LanguageProfile, TokenizedSentence, is_content, ngrams, tokenize
from .corpus import ParaphrasePair

log = logging.getLogger(__name__)

REJECT_OVERLAP = "overlap"
REJECT_INSUFFICIENT_REFERENCES = "insufficient_references"


class InsufficientReferencesError(ValueError):
    """Reference-overlap mining needs at least two references."""


class BackendUnavailableError(RuntimeError):
    """External tagging service unreachable after retries."""


class ProtocolError(RuntimeError):
    """External tagging service returned a malformed reply."""


@dataclass(frozen=True)
class OracleConfig:
    min_ref_support: int = 2  # references that must contain a sequence
    max_coverage: float = 0.5  # source-token share above which we reject
    common_ngram_quantile: float = 0.001  # top share of n-grams deemed "common"
    common_ngram_max_n: int = 3

    def __post_init__(self):
        if self.min_ref_support < 2:
            raise ValueError("min_ref_support must be >= 2")
        if not 0.0 < self.max_coverage <= 1.0:
            raise ValueError("max_coverage must be in (0, 1]")
        if not 0.0 <= self.common_ngram_quantile <= 1.0:
            raise ValueError("common_ngram_quantile must be in [0, 1]")


@dataclass(frozen=True)
class AnchorCandidate:
    tokens: tuple[str, ...]  # normalized
    support: int  # references containing the sequence (0 for NER/learned)


@dataclass(frozen=True)
class OracleRejection:
    reason: str
    coverage: float = 0.0


@dataclass
class TaggerReport:
    clusters_tagged: int = 0
    clusters_rejected: int = 0
    rejection_reasons: Counter = field(default_factory=Counter)
    anchor_length_histogram: Counter = field(default_factory=Counter)

    def record_anchors(self, candidates: Sequence[AnchorCandidate]):
        self.clusters_tagged += 1
        for c in candidates:
            self.anchor_length_histogram[len(c.tokens)] += 1

    def record_rejection(self, reason: str):
        self.clusters_rejected += 1
        self.rejection_reasons[reason] += 1

    def to_dict(self) -> dict:
        return {
            "clusters_tagged": self.clusters_tagged,
            "clusters_rejected": self.clusters_rejected,
            "rejection_reasons": dict(sorted(self.rejection_reasons.items())),
            "anchor_length_histogram": {
                str(k): v for k, v in sorted(self.anchor_length_histogram.items())
            },
        }


def build_common_ngram_set(
    token_seqs: Iterable[Sequence[str]], n_max: int, quantile: float
) -> frozenset[tuple[str, ...]]:
    """N-grams (n <= n_max) in the corpus-frequency top `quantile`.

    The cutoff is the smallest count c such that at most quantile*M of
    the M distinct n-grams reach count >= c; a uniform corpus therefore
    yields an empty set for any quantile < 1.
    """
    counts: Counter = Counter()
    for seq in token_seqs:
        for n in range(1, n_max + 1):
            counts.update(ngrams(list(seq), n))
    if not counts:
        return frozenset()
    allowed = int(quantile * len(counts))
    freq_of_count = Counter(counts.values())
    cutoff = max(freq_of_count) + 1  # empty set unless a prefix fits
    cumulative = 0
    for value in sorted(freq_of_count, reverse=True):
        cumulative += freq_of_count[value]
        if cumulative <= allowed:
            cutoff = value
        else:
            break
    return frozenset(g for g, c in counts.items() if c >= cutoff)


def _contains(haystack: Sequence[str], needle: Sequence[str]) -> bool:
    k = len(needle)
    needle = tuple(needle)
    return any(tuple(haystack[i : i + k]) == needle for i in range(len(haystack) - k + 1))


def oracle_anchors(
    pair: ParaphrasePair,
    cfg: OracleConfig,
    profile: LanguageProfile,
    common_ngrams: frozenset[tuple[str, ...]] = frozenset(),
) -> list[AnchorCandidate] | OracleRejection:
    """Mine maximal source sequences shared with enough references.

    A candidate must occur contiguously in the source and in at least
    `min_ref_support` references, contain a content token, and not be a
    corpus-common n-gram; candidates contained in a longer accepted
    candidate are dropped. Returns OracleRejection(overlap) when the
    accepted anchors cover more than `max_coverage` of source tokens,
    the near-duplicate failure mode of single-reference-style data.
    """
    if len(pair.references) < 2:
        raise InsufficientReferencesError(
            f"pair {pair.id!r} has {len(pair.references)} reference(s); need >= 2"
        )
    src = tokenize(pair.source, profile).norms
    ref_norms = [tokenize(r, profile).norms for r in pair.references]
    if not src:
        return []

    # candidate support via per-length n-gram set intersection
    ref_gram_sets: list[dict[int, set]] = [dict() for _ in ref_norms]
    support: dict[tuple[str, ...], int] = {}
    for n in range(1, len(src) + 1):
        src_grams = set(ngrams(list(src), n))
        if not src_grams:
            break
        hit_any = False
        for gram_sets, ref in zip(ref_gram_sets, ref_norms):
            if n not in gram_sets:
                gram_sets[n] = set(ngrams(list(ref), n))
            hits = src_grams & gram_sets[n]
            hit_any = hit_any or bool(hits)
            for gram in hits:
                support[gram] = support.get(gram, 0) + 1
        if not hit_any:
            break  # no shared n-gram of this length, none longer either

    candidates = {
        gram: count
        for gram, count in support.items()
        if count >= cfg.min_ref_support
        and is_content(gram, profile)
        and gram not in common_ngrams
    }
    accepted = [
        gram
        for gram in candidates
        if not any(len(other) > len(gram) and _contains(other, gram) for other in candidates)
    ]

    covered = [False] * len(src)
    for gram in accepted:
        k = len(gram)
        for i in range(len(src) - k + 1):
            if tuple(src[i : i + k]) == gram:
                for j in range(i, i + k):
                    covered[j] = True
    coverage = sum(covered) / len(src)
    if coverage > cfg.max_coverage:
        return OracleRejection(reason=REJECT_OVERLAP, coverage=coverage)

    def first_occurrence(gram):
        k = len(gram)
        for i in range(len(src) - k + 1):
            if tuple(src[i : i + k]) == gram:
                return i
        return len(src)

    accepted.sort(key=lambda g: (first_occurrence(g), -len(g), g))
    return [AnchorCandidate(tokens=g, support=candidates[g]) for g in accepted]


class NerBackend(Protocol):
    """Anything that can mark entity token spans in a sentence."""

    def spans(self, tokens: Sequence[str], lang: str) -> list[tuple[int, int]]: ...


class GazetteerBackend:
    """Longest-match lookup against an entity list file.

    The file holds one entity per line (UTF-8, ``#`` comments); entries
    are tokenized and normalized with the supplied profile.
    """

    def __init__(self, entries: Iterable[str], profile: LanguageProfile):
        self._entries: set[tuple[str, ...]] = set()
        for entry in entries:
            norm = tokenize(entry, profile).norms
            if norm:
                self._entries.add(norm)
        self._max_len = max((len(e) for e in self._entries), default=0)

    @classmethod
    def from_file(cls, path, profile: LanguageProfile) -> "GazetteerBackend":
        with open(path, encoding="utf-8") as fp:
            lines = [line.split("#", 1)[0].strip() for line in fp]
        return cls([line for line in lines if line], profile)

    def __len__(self):
        return len(self._entries)

    def spans(self, tokens: Sequence[str], lang: str) -> list[tuple[int, int]]:
        found = []
        i = 0
        n = len(tokens)
        while i < n:
            match_len = 0
            for k in range(min(self._max_len, n - i), 0, -1):
                if tuple(tokens[i : i + k]) in self._entries:
                    match_len = k
                    break
            if match_len:
                found.append((i, i + match_len))
                i += match_len
            else:
                i += 1
        return found


LABEL_OUT = "O"
LABEL_ANCHOR = "ANCHOR"


class HttpTagBackend:
    """Client for the token-tagging wire protocol.

    POSTs ``{"lang": str, "tokens": [str, ...]}`` and expects
    ``{"labels": ["O" | "ANCHOR", ...]}`` of equal length. Transport
    failures are retried with exponential backoff before raising
    BackendUnavailableError; malformed replies raise ProtocolError.
    """

    def __init__(self, url: str, timeout: float = 10.0, retries: int = 3, backoff: float = 0.5):
        self.url = url
        self.timeout = timeout
        self.retries = retries
        self.backoff = backoff

    def _labels(self, tokens: Sequence[str], lang: str) -> list[str]:
        payload = {"lang": lang, "tokens": list(tokens)}
        last_error = None
        for attempt in range(self.retries):
            try:
                response = requests.post(self.url, json=payload, timeout=self.timeout)
            except requests.RequestException as exc:
                last_error = exc
            else:
                if response.status_code >= 500:
                    last_error = RuntimeError(f"HTTP {response.status_code}")
                else:
                    return self._parse(response, len(tokens))
            if attempt + 1 < self.retries:
                delay = self.backoff * (2**attempt)
                log.warning("tagging service error (%s), retrying in %.1fs", last_error, delay)
                time.sleep(delay)
        raise BackendUnavailableError(f"{self.url}: {last_error}")

    @staticmethod
    def _parse(response, n_tokens: int) -> list[str]:
        if response.status_code != 200:
            raise ProtocolError(f"HTTP {response.status_code}")
        try:
            body = response.json()
        except ValueError as exc:
            raise ProtocolError(f"non-JSON reply: {exc}") from exc
        labels = body.get("labels") if isinstance(body, dict) else None
        if not isinstance(labels, list) or len(labels) != n_tokens:
            raise ProtocolError("reply must carry 'labels' of equal length")
        if any(label not in (LABEL_OUT, LABEL_ANCHOR) for label in labels):
            raise ProtocolError(f"unknown label in reply: {labels!r}")
        return labels

    def spans(self, tokens: Sequence[str], lang: str) -> list[tuple[int, int]]:
        return label_runs(self._labels(tokens, lang))


def label_runs(labels: Sequence[str]) -> list[tuple[int, int]]:
    """Contiguous ANCHOR runs as (start, end) spans."""
    spans = []
    start = None
    for i, label in enumerate(labels):
        if label == LABEL_ANCHOR and start is None:
            start = i
        elif label != LABEL_ANCHOR and start is not None:
            spans.append((start, i))
            start = None
    if start is not None:
        spans.append((start, len(labels)))
    return spans


def ner_anchors(sentence: TokenizedSentence, backend: NerBackend, lang: str) -> list[AnchorCandidate]:
    """One candidate per entity mention found by the backend."""
    norms = sentence.norms
    return [
        AnchorCandidate(tokens=tuple(norms[s:e]), support=0)
        for s, e in backend.spans(norms, lang)
    ]


class AutoTagStub:
    """Placeholder for the learned tagger; marks nothing."""

    def spans(self, tokens: Sequence[str], lang: str) -> list[tuple[int, int]]:
        return []


def auto_tag(
    sentence: TokenizedSentence, lang: str, backend: NerBackend | None = None
) -> list[AnchorCandidate]:
    """Learned-tagger hook: same contract as `ner_anchors`.

    Without a backend this is a pass-through stub; a trained classifier
    plugs in over the same token-tagging protocol.
    """
    return ner_anchors(sentence, backend or AutoTagStub(), lang)


def tag_many(
    sentences: Sequence[TokenizedSentence],
    backend: NerBackend,
    lang: str,
    max_in_flight: int = 8,
) -> list[list[AnchorCandidate]]:
    """Tag sentences concurrently with bounded in-flight requests."""
    with ThreadPoolExecutor(max_workers=max_in_flight) as pool:
        return list(pool.map(lambda s: ner_anchors(s, backend, lang), sentences))
