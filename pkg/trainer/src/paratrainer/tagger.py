"""Token classifier trained on mined anchor tags.

Learns which tokens sit inside anchor spans from the tagged sources the
pipeline emits, and serves predictions over the token-tagging protocol
so it can act as the pipeline's learned-tagger backend.
"""

from __future__ import annotations

import json
import logging
import random
from dataclasses import dataclass
from pathlib import Path

import torch
import torch.nn as nn

from .vocab import CLOSE_MARKER, OPEN_MARKER, UNK, Vocab

log = logging.getLogger(__name__)

LABEL_OUT = "O"
LABEL_ANCHOR = "ANCHOR"


class DataFloorError(ValueError):
    """Too few tagged sources to train a usable classifier."""


def parse_labeled_tokens(tagged_text: str) -> tuple[list[str], list[str]]:
    """Split a marker-annotated string into tokens and O/ANCHOR labels."""
    tokens, labels = [], []
    inside = False
    for piece in tagged_text.split():
        if piece == OPEN_MARKER:
            inside = True
        elif piece == CLOSE_MARKER:
            inside = False
        else:
            tokens.append(piece)
            labels.append(LABEL_ANCHOR if inside else LABEL_OUT)
    return tokens, labels


class TokenTagger(nn.Module):
    def __init__(self, vocab_size: int, d_embed: int = 64, d_hidden: int = 64):
        super().__init__()
        self.embed = nn.Embedding(vocab_size, d_embed)
        self.rnn = nn.LSTM(d_embed, d_hidden, batch_first=True, bidirectional=True)
        self.out = nn.Linear(2 * d_hidden, 2)
        self.d_embed = d_embed
        self.d_hidden = d_hidden

    def forward(self, ids):
        hidden, _ = self.rnn(self.embed(ids))
        return self.out(hidden)


@dataclass
class TaggerBundle:
    model: TokenTagger
    vocab: Vocab

    def predict(self, tokens: list[str]) -> list[str]:
        if not tokens:
            return []
        unk = self.vocab.stoi[UNK]
        ids = torch.tensor([[self.vocab.stoi.get(t, unk) for t in tokens]])
        with torch.no_grad():
            picks = self.model(ids).argmax(dim=-1)[0].tolist()
        return [LABEL_ANCHOR if p else LABEL_OUT for p in picks]

    def save(self, outdir):
        outdir = Path(outdir)
        outdir.mkdir(parents=True, exist_ok=True)
        torch.save(
            {
                "state": self.model.state_dict(),
                "vocab_size": len(self.vocab),
                "d_embed": self.model.d_embed,
                "d_hidden": self.model.d_hidden,
            },
            outdir / "tagger.pt",
        )
        self.vocab.save(outdir / "tagger_vocab.json")

    @classmethod
    def load(cls, outdir) -> "TaggerBundle":
        outdir = Path(outdir)
        payload = torch.load(outdir / "tagger.pt", map_location="cpu", weights_only=True)
        model = TokenTagger(payload["vocab_size"], payload["d_embed"], payload["d_hidden"])
        model.load_state_dict(payload["state"])
        model.eval()
        return cls(model=model, vocab=Vocab.load(outdir / "tagger_vocab.json"))


def _collate(examples, vocab):
    unk = vocab.stoi[UNK]
    pad = vocab.pad_id
    length = max(len(t) for t, _ in examples)
    ids = torch.full((len(examples), length), pad, dtype=torch.long)
    labels = torch.full((len(examples), length), -100, dtype=torch.long)
    for row, (tokens, tok_labels) in enumerate(examples):
        for col, (token, label) in enumerate(zip(tokens, tok_labels)):
            ids[row, col] = vocab.stoi.get(token, unk)
            labels[row, col] = 1 if label == LABEL_ANCHOR else 0
    return ids, labels


def anchor_f1(gold: list[list[str]], predicted: list[list[str]]) -> float:
    """Token-level F1 for the ANCHOR class."""
    tp = fp = fn = 0
    for gold_row, pred_row in zip(gold, predicted):
        for g, p in zip(gold_row, pred_row):
            if p == LABEL_ANCHOR and g == LABEL_ANCHOR:
                tp += 1
            elif p == LABEL_ANCHOR:
                fp += 1
            elif g == LABEL_ANCHOR:
                fn += 1
    if tp == 0:
        return 0.0
    precision = tp / (tp + fp)
    recall = tp / (tp + fn)
    return 2 * precision * recall / (precision + recall)


@dataclass
class TaggerTraining:
    bundle: TaggerBundle
    heldout_f1: float
    sources: int


def train_auto_tagger(
    tagged_sources: list[str],
    min_sources: int = 200,
    heldout_fraction: float = 0.1,
    epochs: int = 8,
    batch_size: int = 64,
    lr: float = 1e-3,
    seed: int = 13,
) -> TaggerTraining:
    """Train on distinct tagged sources; refuses tiny datasets outright
    since those produce classifiers that tag noise."""
    distinct = sorted(set(tagged_sources))
    examples = [parse_labeled_tokens(text) for text in distinct]
    examples = [(t, l) for t, l in examples if t]
    if len(examples) < min_sources:
        raise DataFloorError(
            f"{len(examples)} distinct tagged source(s) < required minimum "
            f"{min_sources}; a classifier trained on this would tag noise"
        )
    torch.manual_seed(seed)
    rng = random.Random(seed)
    rng.shuffle(examples)
    n_heldout = max(1, int(len(examples) * heldout_fraction))
    heldout, training = examples[:n_heldout], examples[n_heldout:]

    vocab = Vocab.build(" ".join(tokens) for tokens, _ in training)
    model = TokenTagger(len(vocab))
    optimizer = torch.optim.Adam(model.parameters(), lr=lr)
    criterion = nn.CrossEntropyLoss(ignore_index=-100)
    for epoch in range(epochs):
        model.train()
        rng.shuffle(training)
        running, batches = 0.0, 0
        for start in range(0, len(training), batch_size):
            ids, labels = _collate(training[start : start + batch_size], vocab)
            optimizer.zero_grad()
            logits = model(ids)
            loss = criterion(logits.reshape(-1, 2), labels.reshape(-1))
            loss.backward()
            optimizer.step()
            running += float(loss.detach())
            batches += 1
        log.info("tagger epoch %d/%d: loss %.4f", epoch + 1, epochs, running / batches)

    bundle = TaggerBundle(model=model, vocab=vocab)
    gold = [labels for _, labels in heldout]
    predicted = [bundle.predict(tokens) for tokens, _ in heldout]
    return TaggerTraining(bundle=bundle, heldout_f1=anchor_f1(gold, predicted),
                          sources=len(examples))


def read_tagged_sources(path) -> list[str]:
    sources = []
    with open(path, encoding="utf-8") as fp:
        for line in fp:
            if line.strip():
                sources.append(json.loads(line)["source_tagged"])
    return sources
