"""Paraphraser training: golden-parity gate, seq2seq loop, generation,
and eval-input emission for the pipeline's scorer."""

from __future__ import annotations

import hashlib
import json
import logging
import random
from dataclasses import dataclass, field
from pathlib import Path

import torch

from .data import Batch, TaggedPair, group_references, iter_batches, make_batch, read_tagged_pairs
from .lossfn import LossSettings, copy_penalized_loss_from_log_probs, require_golden_parity
from .model import CopySeq2Seq, ToyModelConfig, load_checkpoint, save_checkpoint
from .vocab import Vocab

log = logging.getLogger(__name__)


class ConfigMismatchError(RuntimeError):
    """Run settings disagree with the data pipeline's manifest hash."""


def pipeline_config_digest(tagger: str, oracle: dict, loss: dict, markers: dict) -> str:
    """Mirror of the pipeline's config hash: sha256 over the sorted-keys
    JSON of the effective tagger/loss settings."""
    blob = json.dumps(
        {"tagger": tagger, "oracle": oracle, "loss": loss, "markers": markers},
        ensure_ascii=False, sort_keys=True,
    )
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


# effective defaults the pipeline fills in when a config section is omitted
ORACLE_DEFAULTS = {
    "min_ref_support": 2, "max_coverage": 0.5,
    "common_ngram_quantile": 0.001, "common_ngram_max_n": 3,
}
LOSS_DEFAULTS = {
    "vocab_size": 16, "epsilon": 0.1, "w": 0.3,
    "indicator_mode": "source-position", "smoothing_mode": "full-vocab",
    "exclude_anchor_positions": False, "prob_floor": 1e-12, "reduction": "sum",
}
MARKER_DEFAULTS = {"open": "<tag>", "close": "</tag>"}


@dataclass
class TrainRun:
    """Everything a training run needs, persisted next to its outputs."""

    train_path: str
    test_path: str
    outdir: str
    model: str = "toy"  # "toy" or a pretrained seq2seq identifier
    epsilon: float = 0.1
    w: float = 0.3
    indicator_mode: str = "source-position"
    seed: int = 13
    epochs: int = 12
    batch_size: int = 64
    lr: float = 1e-3
    max_decode_len: int = 28
    model_config: dict = field(default_factory=dict)
    golden_path: str | None = None  # parity gate input
    manifest_path: str | None = None  # pipeline manifest to hash-check
    eval_anchor_source: str | None = None  # tagged test.jsonl carrying anchors
    tagger: str = "oracle"
    oracle_config: dict = field(default_factory=dict)
    markers: dict = field(default_factory=dict)

    def loss_config_mirror(self) -> dict:
        loss = dict(LOSS_DEFAULTS)
        loss.update({"epsilon": self.epsilon, "w": self.w,
                     "indicator_mode": self.indicator_mode})
        return loss

    def verify_manifest(self):
        """The run's loss mirror must hash-match the manifest it trains
        from; a drifted epsilon/w/indicator invalidates the data."""
        if not self.manifest_path:
            return
        with open(self.manifest_path, encoding="utf-8") as fp:
            manifest = json.load(fp)
        oracle = dict(ORACLE_DEFAULTS)
        oracle.update(self.oracle_config)
        markers = dict(MARKER_DEFAULTS)
        markers.update(self.markers)
        digest = pipeline_config_digest(self.tagger, oracle, self.loss_config_mirror(), markers)
        if digest != manifest.get("config_hash"):
            raise ConfigMismatchError(
                f"run loss/tagger settings hash {digest[:12]}... does not match "
                f"manifest config_hash {manifest.get('config_hash', '')[:12]}..."
            )

    def to_dict(self) -> dict:
        return {k: v for k, v in self.__dict__.items()}


@dataclass
class TrainResult:
    checkpoint: str
    vocab_path: str
    eval_input_path: str
    epoch_losses: list[float]
    samples: list[dict]


def _loss_settings(run: TrainRun, vocab_size: int) -> LossSettings:
    return LossSettings(
        vocab_size=vocab_size, epsilon=run.epsilon, w=run.w,
        indicator_mode=run.indicator_mode,
    )


def _batch_loss(model: CopySeq2Seq, batch: Batch, settings: LossSettings) -> torch.Tensor:
    log_probs = model(batch.src, batch.src_pad, batch.dec_in)
    total = copy_penalized_loss_from_log_probs(
        log_probs, batch.ref_ids, batch.aligned_src, batch.src_match, settings,
        position_mask=batch.position_mask,
    )
    return total / batch.position_mask.sum().clamp_min(1)


def train_paraphraser(run: TrainRun) -> TrainResult:
    """Train, then decode the held-out sources into eval_input.jsonl.

    Refuses to start if the loss implementation disagrees with the
    pipeline's golden vectors or the run settings do not hash-match the
    data manifest.
    """
    if run.golden_path:
        report = require_golden_parity(run.golden_path)
        log.info("golden parity ok on %d cases (total err %.2e, grad err %.2e)",
                 report.cases, report.max_total_err, report.max_grad_err)
    run.verify_manifest()
    if run.model != "toy":
        from .hf import finetune_pretrained  # heavyweight optional path

        return finetune_pretrained(run)

    torch.manual_seed(run.seed)
    rng = random.Random(run.seed)
    outdir = Path(run.outdir)
    outdir.mkdir(parents=True, exist_ok=True)

    train_pairs = read_tagged_pairs(run.train_path)
    test_pairs = read_tagged_pairs(run.test_path)
    if not train_pairs:
        raise ValueError(f"no training records in {run.train_path}")
    vocab = Vocab.build(
        [p.source for p in train_pairs] + [p.reference for p in train_pairs]
    )
    settings = _loss_settings(run, len(vocab))
    model = CopySeq2Seq(ToyModelConfig(vocab_size=len(vocab), **run.model_config))
    optimizer = torch.optim.Adam(model.parameters(), lr=run.lr)

    epoch_losses = []
    for epoch in range(run.epochs):
        model.train()
        running, batches = 0.0, 0
        for batch in iter_batches(train_pairs, vocab, run.batch_size, rng):
            optimizer.zero_grad()
            loss = _batch_loss(model, batch, settings)
            loss.backward()
            optimizer.step()
            running += float(loss.detach())
            batches += 1
        epoch_losses.append(running / max(batches, 1))
        log.info("epoch %d/%d: train loss %.4f", epoch + 1, run.epochs, epoch_losses[-1])

    checkpoint = outdir / "model.pt"
    vocab_path = outdir / "vocab.json"
    save_checkpoint(checkpoint, model)
    vocab.save(vocab_path)

    eval_path = outdir / "eval_input.jsonl"
    anchor_sources = None
    if run.eval_anchor_source:
        anchor_sources = {
            pair_id: entry["source"]
            for pair_id, entry in group_references(
                read_tagged_pairs(run.eval_anchor_source)
            ).items()
        }
    samples = emit_eval_input(model, vocab, test_pairs, eval_path, run.max_decode_len,
                              anchor_sources=anchor_sources)
    (outdir / "run.json").write_text(
        json.dumps({"run": run.to_dict(), "epoch_losses": epoch_losses}, indent=2) + "\n",
        encoding="utf-8",
    )
    return TrainResult(
        checkpoint=str(checkpoint),
        vocab_path=str(vocab_path),
        eval_input_path=str(eval_path),
        epoch_losses=epoch_losses,
        samples=samples[:5],
    )


def generate(model: CopySeq2Seq, vocab: Vocab, tagged_sources: list[str],
             max_len: int = 24, batch_size: int = 64) -> list[str]:
    """Greedy paraphrases for tagged source strings."""
    if not tagged_sources:
        raise ValueError("no sources to decode")
    outputs = []
    for start in range(0, len(tagged_sources), batch_size):
        chunk = tagged_sources[start : start + batch_size]
        fake = [TaggedPair(id=str(i), lang="en", source=s, reference=s)
                for i, s in enumerate(chunk)]
        batch = make_batch(fake, vocab)
        decoded = model.greedy_decode(batch.src, batch.src_pad, vocab.bos_id,
                                      vocab.eos_id, max_len=max_len)
        outputs.extend(vocab.decode(ids) for ids in decoded)
    return outputs


def generate_from_checkpoint(checkpoint_path, vocab_path, tagged_sources: list[str],
                             max_len: int = 24) -> list[str]:
    model = load_checkpoint(checkpoint_path)
    vocab = Vocab.load(vocab_path)
    return generate(model, vocab, tagged_sources, max_len=max_len)


def emit_eval_input(model: CopySeq2Seq, vocab: Vocab, test_pairs: list[TaggedPair],
                    path, max_len: int = 28, anchor_sources: dict | None = None) -> list[dict]:
    """One eval record per held-out source, in the scorer's schema.

    `anchor_sources` (id -> tagged source) substitutes the source field
    used for scoring; it lets a model trained and decoded on untagged
    text be measured against the anchors mined for the tagged variant.
    """
    grouped = group_references(test_pairs)
    ids = sorted(grouped)
    sources = [grouped[i]["source"] for i in ids]
    generations = generate(model, vocab, sources, max_len=max_len)
    records = []
    for record_id, generated in zip(ids, generations):
        entry = grouped[record_id]
        scored_source = entry["source"]
        if anchor_sources is not None:
            scored_source = anchor_sources.get(record_id, scored_source)
        records.append(
            {
                "id": record_id,
                "lang": entry["lang"],
                "source_tagged": scored_source,
                "generated": [generated if generated else "<unk>"],
                "references": entry["references"],
            }
        )
    with open(path, "w", encoding="utf-8") as fp:
        for record in records:
            fp.write(json.dumps(record, ensure_ascii=False) + "\n")
    return records
