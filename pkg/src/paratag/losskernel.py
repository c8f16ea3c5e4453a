"""Training loss: label-smoothed cross-entropy minus a weighted
source-copy penalty, with analytic gradients and golden-vector emission.

For one position with predicted distribution q over a vocabulary of
size V, reference token t, aligned source token s (when present):

    loss = (1 - eps) * (-log q[t])
         + (eps / V) * sum_v(-log q[v])
         - w * match * (-log q[s])

summed over positions and batch items. `match` is 1 where the source
has a token at that position (``source-position`` mode) or additionally
requires t == s (``equal-token`` mode). Larger w pushes probability
mass away from source tokens at aligned positions.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

INDICATOR_SOURCE_POSITION = "source-position"
INDICATOR_EQUAL_TOKEN = "equal-token"
_INDICATOR_MODES = (INDICATOR_SOURCE_POSITION, INDICATOR_EQUAL_TOKEN)

SMOOTHING_FULL_VOCAB = "full-vocab"
SMOOTHING_KL_UNIFORM = "kl-uniform"
_SMOOTHING_MODES = (SMOOTHING_FULL_VOCAB, SMOOTHING_KL_UNIFORM)

REDUCTION_SUM = "sum"
REDUCTION_MEAN = "mean"

Q_ROW_SUM_TOL = 1e-9


@dataclass(frozen=True)
class LossConfig:
    vocab_size: int
    epsilon: float = 0.1
    w: float = 0.3
    indicator_mode: str = INDICATOR_SOURCE_POSITION
    smoothing_mode: str = SMOOTHING_FULL_VOCAB
    exclude_anchor_positions: bool = False
    prob_floor: float = 1e-12
    reduction: str = REDUCTION_SUM

    def __post_init__(self):
        if self.vocab_size < 1:
            raise ValueError("vocab_size must be positive")
        if not 0.0 <= self.epsilon < 1.0:
            raise ValueError("epsilon must be in [0, 1)")
        if self.w < 0.0:
            raise ValueError("w must be >= 0")
        if self.indicator_mode not in _INDICATOR_MODES:
            raise ValueError(f"unknown indicator_mode: {self.indicator_mode!r}")
        if self.smoothing_mode not in _SMOOTHING_MODES:
            raise ValueError(f"unknown smoothing_mode: {self.smoothing_mode!r}")
        if self.reduction not in (REDUCTION_SUM, REDUCTION_MEAN):
            raise ValueError(f"unknown reduction: {self.reduction!r}")

    def to_dict(self) -> dict:
        return {
            "vocab_size": self.vocab_size,
            "epsilon": self.epsilon,
            "w": self.w,
            "indicator_mode": self.indicator_mode,
            "smoothing_mode": self.smoothing_mode,
            "exclude_anchor_positions": self.exclude_anchor_positions,
            "prob_floor": self.prob_floor,
            "reduction": self.reduction,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LossConfig":
        return cls(**d)


@dataclass
class SequenceItem:
    """Per-sentence arrays: rows of q are per-position distributions."""

    q: np.ndarray  # (J, V) probabilities
    ref_ids: np.ndarray  # (J,) reference token ids
    src_ids: np.ndarray  # (J,) aligned source ids, -1 where absent
    src_match: np.ndarray  # (J,) 1 iff the source has a token at j
    logits: np.ndarray | None = None  # (J, V), required for gradients
    anchor_mask: np.ndarray | None = None  # (J,) 1 inside anchor spans

    def __post_init__(self):
        self.q = np.asarray(self.q, dtype=np.float64)
        self.ref_ids = np.asarray(self.ref_ids, dtype=np.int64)
        self.src_ids = np.asarray(self.src_ids, dtype=np.int64)
        self.src_match = np.asarray(self.src_match, dtype=np.int64)
        if self.logits is not None:
            self.logits = np.asarray(self.logits, dtype=np.float64)
        if self.anchor_mask is not None:
            self.anchor_mask = np.asarray(self.anchor_mask, dtype=np.int64)

    @property
    def length(self) -> int:
        return self.q.shape[0]

    def validate(self, cfg: LossConfig):
        J, V = self.q.shape
        if V != cfg.vocab_size:
            raise ValueError(f"q has vocab {V}, config says {cfg.vocab_size}")
        for name, arr in (("ref_ids", self.ref_ids), ("src_ids", self.src_ids),
                          ("src_match", self.src_match)):
            if arr.shape != (J,):
                raise ValueError(f"{name} length {arr.shape} != positions {J}")
        row_sums = self.q.sum(axis=1)
        if np.any(np.abs(row_sums - 1.0) > Q_ROW_SUM_TOL):
            raise ValueError("q rows must sum to 1 within 1e-9")
        if np.any((self.ref_ids < 0) | (self.ref_ids >= V)):
            raise ValueError("ref_ids out of range")
        if np.any((self.src_match == 1) & ((self.src_ids < 0) | (self.src_ids >= V))):
            raise ValueError("src_ids out of range at matched positions")
        if np.any(~np.isin(self.src_match, (0, 1))):
            raise ValueError("src_match must be 0/1")
        if self.logits is not None and self.logits.shape != (J, V):
            raise ValueError("logits shape mismatch")
        if self.anchor_mask is not None and self.anchor_mask.shape != (J,):
            raise ValueError("anchor_mask shape mismatch")


@dataclass
class LossBatch:
    items: list[SequenceItem]

    @property
    def batch_size(self) -> int:
        return len(self.items)

    @property
    def positions(self) -> int:
        return sum(item.length for item in self.items)

    def validate(self, cfg: LossConfig):
        for item in self.items:
            item.validate(cfg)


@dataclass
class LossBreakdown:
    ce_term: float
    smoothing_term: float
    diversity_term: float  # signed: -w * sum(-log q[s]) over indicated positions
    total: float
    positions: int = 0
    clamped: int = 0  # probabilities lifted to the floor before log

    def to_dict(self) -> dict:
        return {
            "ce_term": self.ce_term,
            "smoothing_term": self.smoothing_term,
            "diversity_term": self.diversity_term,
            "total": self.total,
        }


def _effective_match(item: SequenceItem, cfg: LossConfig) -> np.ndarray:
    match = item.src_match.astype(bool)
    if cfg.indicator_mode == INDICATOR_EQUAL_TOKEN:
        match = match & (item.ref_ids == item.src_ids)
    if cfg.exclude_anchor_positions and item.anchor_mask is not None:
        match = match & (item.anchor_mask == 0)
    return match


def loss_forward(batch: LossBatch, cfg: LossConfig) -> LossBreakdown:
    """Exact forward pass, accumulated position-major with exact summation.

    Zero probabilities are clamped to `cfg.prob_floor` (counted in the
    breakdown) instead of poisoning the full-vocabulary smoothing sum.
    """
    batch.validate(cfg)
    V = cfg.vocab_size
    ce_parts: list[float] = []
    smooth_parts: list[float] = []
    diversity_parts: list[float] = []
    clamped = 0
    for item in batch.items:
        q = item.q
        clamped += int(np.count_nonzero(q < cfg.prob_floor))
        neg_log_q = -np.log(np.maximum(q, cfg.prob_floor))
        rows = np.arange(item.length)
        ce_parts.extend((1.0 - cfg.epsilon) * neg_log_q[rows, item.ref_ids])
        per_pos_smooth = (cfg.epsilon / V) * neg_log_q.sum(axis=1)
        if cfg.smoothing_mode == SMOOTHING_KL_UNIFORM:
            per_pos_smooth = per_pos_smooth - cfg.epsilon * math.log(V)
        smooth_parts.extend(per_pos_smooth)
        match = _effective_match(item, cfg)
        diversity_parts.extend(
            -cfg.w * neg_log_q[j, item.src_ids[j]] for j in np.nonzero(match)[0]
        )
    scale = 1.0
    positions = batch.positions
    if cfg.reduction == REDUCTION_MEAN and positions:
        scale = 1.0 / positions
    ce = math.fsum(ce_parts) * scale
    smoothing = math.fsum(smooth_parts) * scale
    diversity = math.fsum(diversity_parts) * scale
    total = math.fsum([ce, smoothing, diversity])
    return LossBreakdown(
        ce_term=ce,
        smoothing_term=smoothing,
        diversity_term=diversity,
        total=total,
        positions=positions,
        clamped=clamped,
    )


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=-1, keepdims=True)


def loss_grad_logits(batch: LossBatch, cfg: LossConfig) -> list[np.ndarray]:
    """Analytic d(total)/d(logits), one (J, V) array per batch item.

    Per position the gradient is q*C - target with target mass
    C = (1 - eps) + eps - w*match; q is recomputed as softmax(logits).
    """
    V = cfg.vocab_size
    scale = 1.0
    if cfg.reduction == REDUCTION_MEAN:
        positions = batch.positions
        scale = 1.0 / positions if positions else 1.0
    grads = []
    for item in batch.items:
        if item.logits is None:
            raise ValueError("gradients need logits on every batch item")
        q = softmax(item.logits)
        match = _effective_match(item, cfg).astype(np.float64)
        C = 1.0 - cfg.w * match  # (1 - eps) + eps - w*match
        grad = q * C[:, None]
        rows = np.arange(item.length)
        grad[rows, item.ref_ids] -= 1.0 - cfg.epsilon
        grad -= cfg.epsilon / V
        matched = np.nonzero(match)[0]
        grad[matched, item.src_ids[matched]] += cfg.w
        grads.append(grad * scale)
    return grads


def batch_with_softmax_q(batch: LossBatch) -> LossBatch:
    """Copy of the batch with q recomputed from logits."""
    items = [
        replace(item, q=softmax(item.logits)) if item.logits is not None else item
        for item in batch.items
    ]
    return LossBatch(items=items)


# ---------------------------------------------------------------------------
# golden vectors: frozen random cases for cross-implementation verification


def _round17(x: float) -> float:
    # 17 significant digits round-trip float64 exactly
    return float(f"{x:.17g}")


def _listify(arr: np.ndarray) -> list:
    arr = np.asarray(arr)
    if arr.ndim == 1:
        if arr.dtype.kind == "f":
            return [_round17(float(v)) for v in arr.tolist()]
        return [int(v) for v in arr.tolist()]
    return [_listify(row) for row in arr]


def random_item(rng: np.random.Generator, vocab_size: int, length: int) -> SequenceItem:
    logits = rng.normal(0.0, 1.5, size=(length, vocab_size))
    ref_ids = rng.integers(0, vocab_size, size=length)
    src_match = (rng.random(length) > 0.2).astype(np.int64)
    src_ids = np.where(src_match == 1, rng.integers(0, vocab_size, size=length), -1)
    return SequenceItem(
        q=softmax(logits), ref_ids=ref_ids, src_ids=src_ids,
        src_match=src_match, logits=logits,
    )


def emit_golden_vectors(path, seed: int, count: int, cfg: LossConfig) -> dict:
    """Write `count` single-sequence cases with loss and gradients.

    Case 0 always runs with w = 0 as a cross-check sentinel; each case
    records its effective w. Files are byte-identical for a given
    (seed, count, config).
    """
    rng = np.random.default_rng(seed)
    cases = []
    for index in range(count):
        case_w = 0.0 if index == 0 else cfg.w
        case_cfg = replace(cfg, w=case_w)
        item = random_item(rng, cfg.vocab_size, length=int(rng.integers(2, 7)))
        batch = LossBatch(items=[item])
        breakdown = loss_forward(batch, case_cfg)
        grad = loss_grad_logits(batch, case_cfg)[0]
        cases.append(
            {
                "w": _round17(case_w),
                "q": _listify(item.q),
                "logits": _listify(item.logits),
                "ref_ids": [int(v) for v in item.ref_ids],
                "src_ids": [int(v) for v in item.src_ids],
                "src_match": [int(v) for v in item.src_match],
                "total": _round17(breakdown.total),
                "breakdown": {k: _round17(v) for k, v in breakdown.to_dict().items()},
                "grad": _listify(grad),
            }
        )
    document = {"config": cfg.to_dict(), "cases": cases}
    with open(path, "w", encoding="utf-8") as fp:
        json.dump(document, fp, ensure_ascii=False, indent=1)
        fp.write("\n")
    return document


TOTAL_TOL = 1e-6
GRAD_TOL = 1e-5


@dataclass
class GoldenCheck:
    cases: int
    max_total_err: float
    max_grad_err: float
    failures: list[int] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.failures

    def to_dict(self) -> dict:
        return {
            "cases": self.cases,
            "max_total_abs_err": self.max_total_err,
            "max_grad_abs_err": self.max_grad_err,
            "ok": self.ok,
            "failures": self.failures,
        }


def check_golden(path) -> GoldenCheck:
    """Recompute every stored case and compare totals and gradients."""
    with open(path, encoding="utf-8") as fp:
        document = json.load(fp)
    cfg = LossConfig.from_dict(document["config"])
    result = GoldenCheck(cases=len(document["cases"]), max_total_err=0.0, max_grad_err=0.0)
    for index, case in enumerate(document["cases"]):
        case_cfg = replace(cfg, w=float(case.get("w", cfg.w)))
        item = SequenceItem(
            q=np.array(case["q"]),
            ref_ids=np.array(case["ref_ids"]),
            src_ids=np.array(case["src_ids"]),
            src_match=np.array(case["src_match"]),
            logits=np.array(case["logits"]),
        )
        batch = LossBatch(items=[item])
        breakdown = loss_forward(batch, case_cfg)
        grad = loss_grad_logits(batch, case_cfg)[0]
        total_err = abs(breakdown.total - case["total"])
        grad_err = float(np.max(np.abs(grad - np.array(case["grad"]))))
        result.max_total_err = max(result.max_total_err, total_err)
        result.max_grad_err = max(result.max_grad_err, grad_err)
        if total_err > TOTAL_TOL or grad_err > GRAD_TOL:
            result.failures.append(index)
    return result
