"""Deterministic synthetic paraphrase clusters for desk-scale runs.

Every cluster shares a multi-token entity (the anchor) across five
sentences: three variants of one question frame plus two variants of
its fixed partner frame. Several properties make the corpus a fair
test of tag-guided copying and of the copy-penalty weight:

- Each frame has two span slots; the entity and a per-sentence decoy
  are drawn from the same adjective/noun vocabulary and, unless
  `deterministic_slots` is set, a coin decides which slot holds the
  entity. Which span must persist is then undecidable from the sentence
  alone; the tags carry exactly that bit.
- Variants of a frame differ only in one word (plus their private
  decoys), so near-copies of the source sit among its references:
  echoing the source wording is always viable, and copying its decoy is
  the free-riding behavior the penalty weight is meant to suppress.
- Frames are paired, so the non-echo rewrite target is predictable and
  always covered by references; diversity does not have to cost recall.
- Entities vary in length (2-3 tokens) and decoys never repeat inside a
  cluster.

Mining these clusters with a reference-support threshold of 3 tags
exactly the entity: frame chunks shared between two same-frame variants
stop at support 2. With `deterministic_slots=True` the entity always
sits in the second slot, making anchor-hood perfectly predictable from
context, the regime a learned tagger can master.
"""

from __future__ import annotations

import json
import random

ADJECTIVES = [
    "green", "silver", "golden", "quiet", "misty", "ancient", "hidden", "sunny",
    "frozen", "crimson", "amber", "shaded", "windy", "marble", "copper", "ivory",
    "coastal", "northern", "southern", "eastern", "western", "lunar", "solar",
    "velvet", "granite", "cedar", "willow", "maple", "silent", "bright", "dusty",
    "royal", "foggy", "mellow", "rustic", "sandy", "steep", "tidal", "upper",
    "lower", "pale", "deep", "broad", "narrow", "lofty", "mossy", "pebbled",
    "breezy", "sleepy", "lively", "humble", "grand", "modest", "stately", "rugged",
    "serene", "gilded", "shadowy", "sunlit", "moonlit", "painted", "carved",
    "woven", "timbered",
]

NOUNS = [
    "harbor", "temple", "market", "garden", "bridge", "tower", "canyon", "valley",
    "castle", "museum", "library", "plaza", "lagoon", "meadow", "orchard", "summit",
    "cavern", "lighthouse", "fortress", "pavilion", "terrace", "fountain", "gallery",
    "chapel", "arcade", "boulevard", "grove", "cliff", "dome", "station", "pier",
    "mill", "quay", "shrine", "bazaar", "wharf", "citadel", "atrium", "cloister",
    "esplanade", "overlook", "crossing", "landing", "hollow", "ridge", "basin",
    "knoll", "bluff", "cove", "marsh", "heath", "commons", "rotunda", "belfry",
    "granary", "smithy", "tannery", "brewery", "quarry", "vineyard", "causeway",
    "viaduct", "archway", "gatehouse",
]

# frames: {a}/{b} are span slots with family-unique neighbor words, {v}
# the variant word; paired frames appear together in clusters
FRAME_FAMILIES = [
    "how do i journey out of {a} to {b} by {v}",
    "what is the cheapest ride between {a} and {b} {v}",
    "can anyone recommend walking paths from {a} toward {b} {v}",
    "my cousin {v} directions leaving {a} into {b} next weekend",
    "are guided tours past {a} around {b} worth {v}",
    "which tram links {a} with {b} {v}",
    "tell me about parking {v} near {b} behind {a}",
    "does the night ferry pass {a} docking alongside {b} {v}",
    "grandma keeps asking whether {b} beyond {a} opens {v}",
    "our school trip visits {b} not {a} this {v}",
]
VARIANT_WORDS = [
    ("bus", "cab", "van"),
    ("today", "tonight", "tomorrow"),
    ("please", "kindly", "soon"),
    ("wants", "needs", "seeks"),
    ("booking", "reserving", "joining"),
    ("fastest", "quickest", "earliest"),
    ("spots", "lots", "areas"),
    ("regularly", "often", "rarely"),
    ("early", "late", "daily"),
    ("spring", "autumn", "winter"),
]
FRAME_PARTNERS = {0: 1, 1: 0, 2: 3, 3: 2, 4: 5, 5: 4, 6: 7, 7: 6, 8: 9, 9: 8}

ORACLE_MIN_REF_SUPPORT = 3  # keeps same-frame variant chunks (support 2) untagged


def _pick_span(rng: random.Random, used: set) -> str:
    # 2- or 3-token span: one or two adjectives plus a noun,
    # token-disjoint from everything already used in the cluster
    while True:
        words = rng.sample(ADJECTIVES, rng.randint(1, 2)) + [rng.choice(NOUNS)]
        if not (set(words) & used):
            used.update(words)
            return " ".join(words)


def _fill(family, variant, entity, decoy, entity_in_b):
    slot_a, slot_b = (decoy, entity) if entity_in_b else (entity, decoy)
    return FRAME_FAMILIES[family].format(
        a=slot_a, b=slot_b, v=VARIANT_WORDS[family][variant]
    )


def make_clusters(n_clusters: int, seed: int, deterministic_slots: bool = False) -> list[dict]:
    """Cluster rows in the pipeline's clusters.jsonl schema."""
    rng = random.Random(seed)
    rows = []
    for index in range(n_clusters):
        used: set = set()
        entity = _pick_span(rng, used)

        def sentence(family, variant):
            entity_in_b = True if deterministic_slots else rng.random() < 0.5
            return _fill(family, variant, entity, _pick_span(rng, used), entity_in_b)

        main = rng.randrange(len(FRAME_FAMILIES))
        partner = FRAME_PARTNERS[main]
        sentences = [sentence(main, v) for v in range(3)]
        sentences += [sentence(partner, v) for v in rng.sample(range(3), 2)]
        rng.shuffle(sentences)
        rows.append({"id": f"toy{index:05d}", "lang": "en", "sentences": sentences})
    return rows


def write_clusters(path, n_clusters: int, seed: int, deterministic_slots: bool = False) -> int:
    rows = make_clusters(n_clusters, seed, deterministic_slots)
    with open(path, "w", encoding="utf-8") as fp:
        for row in rows:
            fp.write(json.dumps(row, ensure_ascii=False) + "\n")
    return len(rows)


def vocabulary_size() -> int:
    """Distinct word count across all possible corpus sentences."""
    words = set(ADJECTIVES) | set(NOUNS)
    for family, frame in enumerate(FRAME_FAMILIES):
        words.update(frame.format(a="", b="", v="").split())
        words.update(VARIANT_WORDS[family])
    return len(words)
