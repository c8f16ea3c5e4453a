"""Tagged-pair JSONL loading and batch assembly for the seq2seq loop."""

from __future__ import annotations

import json
from dataclasses import dataclass

import torch

from .vocab import Vocab


@dataclass(frozen=True)
class TaggedPair:
    id: str
    lang: str
    source: str  # tagged text as emitted by the pipeline
    reference: str


def read_tagged_pairs(path) -> list[TaggedPair]:
    pairs = []
    with open(path, encoding="utf-8") as fp:
        for line in fp:
            if not line.strip():
                continue
            record = json.loads(line)
            pairs.append(
                TaggedPair(
                    id=record["id"],
                    lang=record["lang"],
                    source=record["source_tagged"],
                    reference=record["reference_tagged"],
                )
            )
    return pairs


def base_id(record_id: str) -> str:
    return record_id.split("#", 1)[0]


def group_references(pairs: list[TaggedPair]) -> dict[str, dict]:
    """Collapse per-reference records back into one entry per source."""
    grouped: dict[str, dict] = {}
    for pair in pairs:
        entry = grouped.setdefault(
            base_id(pair.id), {"lang": pair.lang, "source": pair.source, "references": []}
        )
        entry["references"].append(pair.reference)
    return grouped


@dataclass
class Batch:
    src: torch.Tensor  # (B, S) encoder input
    src_pad: torch.Tensor  # (B, S) True at padding
    dec_in: torch.Tensor  # (B, T) bos + reference[:-1]
    ref_ids: torch.Tensor  # (B, T) reference + eos
    aligned_src: torch.Tensor  # (B, T) source token at the same position, -1 past end
    src_match: torch.Tensor  # (B, T) 1 where the source has a token
    position_mask: torch.Tensor  # (B, T) 1 at real target positions


def make_batch(pairs: list[TaggedPair], vocab: Vocab, device="cpu") -> Batch:
    """Pad a record group into aligned tensors.

    The copy-penalty alignment is positional: target position j is
    compared against source token j, matching the loss definition.
    """
    src_seqs = [vocab.encode(p.source) for p in pairs]
    ref_seqs = [vocab.encode(p.reference) + [vocab.eos_id] for p in pairs]
    S = max(len(s) for s in src_seqs)
    T = max(len(r) for r in ref_seqs)
    B = len(pairs)
    src = torch.full((B, S), vocab.pad_id, dtype=torch.long)
    src_pad = torch.ones((B, S), dtype=torch.bool)
    dec_in = torch.full((B, T), vocab.pad_id, dtype=torch.long)
    ref_ids = torch.full((B, T), vocab.pad_id, dtype=torch.long)
    aligned_src = torch.full((B, T), -1, dtype=torch.long)
    src_match = torch.zeros((B, T), dtype=torch.long)
    position_mask = torch.zeros((B, T), dtype=torch.long)
    for b, (s, r) in enumerate(zip(src_seqs, ref_seqs)):
        src[b, : len(s)] = torch.tensor(s)
        src_pad[b, : len(s)] = False
        dec_in[b, 0] = vocab.bos_id
        dec_in[b, 1 : len(r)] = torch.tensor(r[:-1])
        ref_ids[b, : len(r)] = torch.tensor(r)
        position_mask[b, : len(r)] = 1
        overlap = min(len(s), len(r))
        aligned_src[b, :overlap] = torch.tensor(s[:overlap])
        src_match[b, :overlap] = 1
    return Batch(
        src=src.to(device),
        src_pad=src_pad.to(device),
        dec_in=dec_in.to(device),
        ref_ids=ref_ids.to(device),
        aligned_src=aligned_src.to(device),
        src_match=src_match.to(device),
        position_mask=position_mask.to(device),
    )


def iter_batches(pairs: list[TaggedPair], vocab: Vocab, batch_size: int, rng, device="cpu"):
    order = list(range(len(pairs)))
    rng.shuffle(order)
    for start in range(0, len(order), batch_size):
        chunk = [pairs[i] for i in order[start : start + batch_size]]
        yield make_batch(chunk, vocab, device)
