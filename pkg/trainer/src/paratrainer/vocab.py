"""Whitespace token vocabulary with the tag markers as atomic entries.

Tagged text from the pipeline always sets markers off with spaces, so a
plain whitespace split keeps ``<tag>`` / ``</tag>`` whole; they must
never be split into sub-tokens or span semantics break.
"""

from __future__ import annotations

import json
from collections import Counter
from typing import Iterable, Sequence

PAD = "<pad>"
BOS = "<bos>"
EOS = "<eos>"
UNK = "<unk>"
OPEN_MARKER = "<tag>"
CLOSE_MARKER = "</tag>"

SPECIALS = (PAD, BOS, EOS, UNK, OPEN_MARKER, CLOSE_MARKER)


def split_tokens(text: str) -> list[str]:
    return text.split()


class Vocab:
    def __init__(self, tokens: Sequence[str]):
        self.itos = list(tokens)
        self.stoi = {t: i for i, t in enumerate(self.itos)}
        if len(self.stoi) != len(self.itos):
            raise ValueError("duplicate tokens in vocabulary")
        for special in SPECIALS:
            if special not in self.stoi:
                raise ValueError(f"vocabulary missing special token {special!r}")

    @classmethod
    def build(cls, texts: Iterable[str], min_count: int = 1) -> "Vocab":
        counts = Counter()
        for text in texts:
            counts.update(split_tokens(text))
        kept = sorted(t for t, c in counts.items() if c >= min_count and t not in SPECIALS)
        return cls(list(SPECIALS) + kept)

    def __len__(self) -> int:
        return len(self.itos)

    @property
    def pad_id(self) -> int:
        return self.stoi[PAD]

    @property
    def bos_id(self) -> int:
        return self.stoi[BOS]

    @property
    def eos_id(self) -> int:
        return self.stoi[EOS]

    def encode(self, text: str) -> list[int]:
        unk = self.stoi[UNK]
        return [self.stoi.get(t, unk) for t in split_tokens(text)]

    def decode(self, ids: Iterable[int], drop_special: bool = True) -> str:
        out = []
        for i in ids:
            token = self.itos[int(i)]
            if drop_special and token in (PAD, BOS, EOS):
                continue
            out.append(token)
        return " ".join(out)

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fp:
            json.dump({"tokens": self.itos}, fp, ensure_ascii=False)

    @classmethod
    def load(cls, path) -> "Vocab":
        with open(path, encoding="utf-8") as fp:
            return cls(json.load(fp)["tokens"])
