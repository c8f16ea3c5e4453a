"""Shared test utilities: independent oracles and synthetic data.

The oracles here are deliberately naive re-derivations of the contracts
under test; they must stay independent of the library code paths they
check.
"""

from __future__ import annotations

import json
import random

from paratag.taggers import (
    AnchorCandidate,
    InsufficientReferencesError,
    OracleConfig,
    OracleRejection,
    REJECT_OVERLAP,
)
from paratag.textcore import LanguageProfile, is_content, tokenize


def contains(haystack, needle) -> bool:
    needle = tuple(needle)
    k = len(needle)
    for i in range(len(haystack) - k + 1):
        if tuple(haystack[i : i + k]) == needle:
            return True
    return False


def brute_force_oracle(
    source: str,
    references: list[str],
    cfg: OracleConfig,
    profile: LanguageProfile,
    common: frozenset = frozenset(),
):
    """Enumerate every source substring and test it against every
    reference; the defining oracle for anchor mining."""
    if len(references) < 2:
        raise InsufficientReferencesError("need >= 2 references")
    src = tokenize(source, profile).norms
    refs = [tokenize(r, profile).norms for r in references]
    candidates = {}
    for i in range(len(src)):
        for j in range(i + 1, len(src) + 1):
            gram = tuple(src[i:j])
            support = sum(1 for ref in refs if contains(ref, gram))
            if (
                support >= cfg.min_ref_support
                and is_content(gram, profile)
                and gram not in common
            ):
                candidates[gram] = support
    accepted = [
        g
        for g in candidates
        if not any(h != g and len(h) > len(g) and contains(h, g) for h in candidates)
    ]
    covered = [False] * len(src)
    for gram in accepted:
        k = len(gram)
        for i in range(len(src) - k + 1):
            if tuple(src[i : i + k]) == gram:
                for pos in range(i, i + k):
                    covered[pos] = True
    coverage = sum(covered) / len(src) if src else 0.0
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


def oracle_result_key(outcome):
    """Comparable projection of an oracle outcome."""
    if isinstance(outcome, OracleRejection):
        return ("rejected", outcome.reason)
    return ("anchors", tuple((c.tokens, c.support) for c in outcome))


# --------------------------------------------------------------------------- synthetic corpus

_ENTITIES = [
    "beijing", "lisbon", "red bicycle", "jade market", "green harbor",
    "silver lake", "old town", "north station", "golden temple", "west bridge",
]
_TEMPLATES = [
    "what are cheap lodging options in {e}",
    "i am looking for cheap hotels in {e}",
    "where can i stay near {e} on a budget",
    "find affordable rooms close to {e}",
    "any budget places to sleep around {e}",
    "how do travelers find cheap stays in {e}",
]


def synthetic_cluster_rows(n_clusters: int, seed: int) -> list[dict]:
    """Deterministic cluster records with a shared entity per cluster so
    reference-overlap mining has something to find."""
    rng = random.Random(seed)
    rows = []
    for index in range(n_clusters):
        entity = _ENTITIES[index % len(_ENTITIES)]
        k = rng.randint(3, 5)
        templates = rng.sample(_TEMPLATES, k)
        rows.append(
            {
                "id": f"c{index:04d}",
                "lang": "en",
                "sentences": [t.format(e=entity) for t in templates],
            }
        )
    return rows


def write_jsonl_file(path, rows):
    with open(path, "w", encoding="utf-8") as fp:
        for row in rows:
            fp.write(json.dumps(row, ensure_ascii=False) + "\n")


def random_cluster(rng: random.Random, vocab: list[str], max_len: int = 12):
    """A random paraphrase cluster (3-6 sentences, length <= max_len)
    for oracle-equivalence fuzzing; mutation keeps overlap varied, from
    near-duplicates down to disjoint sentences."""
    n_sentences = rng.randint(3, 6)
    sentences = []
    base = [rng.choice(vocab) for _ in range(rng.randint(3, max_len))]
    for _ in range(n_sentences):
        words = list(base)
        for _ in range(rng.randint(0, 6)):
            op = rng.randrange(3)
            if not words:
                break
            if op == 0:
                words.pop(rng.randrange(len(words)))
            elif op == 1:
                words[rng.randrange(len(words))] = rng.choice(vocab)
            else:
                words.insert(rng.randrange(len(words) + 1), rng.choice(vocab))
        words = words[:max_len]
        sentences.append(" ".join(words) if words else rng.choice(vocab))
    return sentences[0], sentences[1:]
