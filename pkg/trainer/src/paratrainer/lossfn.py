"""Training loss: label-smoothed cross-entropy minus a weighted
source-copy penalty.

This is an independent implementation of the loss the data pipeline
ships golden vectors for; `check_golden_file` must pass (totals within
1e-6, gradients within 1e-5) before any training run is allowed to
start.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import torch
import torch.nn.functional as F

INDICATOR_SOURCE_POSITION = "source-position"
INDICATOR_EQUAL_TOKEN = "equal-token"

SMOOTHING_FULL_VOCAB = "full-vocab"
SMOOTHING_KL_UNIFORM = "kl-uniform"

TOTAL_TOL = 1e-6
GRAD_TOL = 1e-5


@dataclass(frozen=True)
class LossSettings:
    vocab_size: int
    epsilon: float = 0.1
    w: float = 0.3
    indicator_mode: str = INDICATOR_SOURCE_POSITION
    smoothing_mode: str = SMOOTHING_FULL_VOCAB
    prob_floor: float = 1e-12

    def __post_init__(self):
        if not 0.0 <= self.epsilon < 1.0:
            raise ValueError("epsilon must be in [0, 1)")
        if self.w < 0.0:
            raise ValueError("w must be >= 0")
        if self.indicator_mode not in (INDICATOR_SOURCE_POSITION, INDICATOR_EQUAL_TOKEN):
            raise ValueError(f"unknown indicator_mode: {self.indicator_mode!r}")
        if self.smoothing_mode not in (SMOOTHING_FULL_VOCAB, SMOOTHING_KL_UNIFORM):
            raise ValueError(f"unknown smoothing_mode: {self.smoothing_mode!r}")
        if not 0.0 < self.prob_floor < 1.0:
            raise ValueError("prob_floor must be in (0, 1)")


def copy_penalized_loss_from_log_probs(
    logq: torch.Tensor,
    ref_ids: torch.Tensor,
    src_ids: torch.Tensor,
    src_match: torch.Tensor,
    settings: LossSettings,
    position_mask: torch.Tensor | None = None,
) -> torch.Tensor:
    """Summed loss over all (batch, position) entries, from log q.

    Per position: (1-eps)*(-log q[ref]) + (eps/V)*sum_v(-log q[v])
    - w*match*(-log q[src]). `src_ids` uses -1 where the source has no
    aligned token; `position_mask` (1=real, 0=pad) silences padding.
    Entry point for models whose output is already a distribution
    (e.g. pointer mixtures) rather than logits.
    """
    vocab = logq.shape[-1]
    if vocab != settings.vocab_size:
        raise ValueError(f"log-probs vocab {vocab} != settings vocab {settings.vocab_size}")
    # floor matches the reference kernel's degenerate-probability clamp and
    # keeps the copy penalty bounded below (its pull vanishes past the floor)
    logq = logq.clamp_min(math.log(settings.prob_floor))
    nll_ref = -logq.gather(-1, ref_ids.unsqueeze(-1)).squeeze(-1)
    smooth = (settings.epsilon / vocab) * (-logq.sum(dim=-1))
    if settings.smoothing_mode == SMOOTHING_KL_UNIFORM:
        smooth = smooth - settings.epsilon * math.log(vocab)
    match = (src_match > 0).to(logq.dtype)
    if settings.indicator_mode == INDICATOR_EQUAL_TOKEN:
        match = match * (ref_ids == src_ids).to(logq.dtype)
    nll_src = -logq.gather(-1, src_ids.clamp_min(0).unsqueeze(-1)).squeeze(-1)
    per_position = (1.0 - settings.epsilon) * nll_ref + smooth - settings.w * match * nll_src
    if position_mask is not None:
        per_position = per_position * position_mask.to(logq.dtype)
    return per_position.sum()


def copy_penalized_loss(
    logits: torch.Tensor,
    ref_ids: torch.Tensor,
    src_ids: torch.Tensor,
    src_match: torch.Tensor,
    settings: LossSettings,
    position_mask: torch.Tensor | None = None,
) -> torch.Tensor:
    """Same loss from raw logits (q = softmax(logits))."""
    return copy_penalized_loss_from_log_probs(
        F.log_softmax(logits, dim=-1), ref_ids, src_ids, src_match, settings,
        position_mask,
    )


@dataclass
class ParityReport:
    cases: int
    max_total_err: float
    max_grad_err: float
    failures: list

    @property
    def ok(self) -> bool:
        return not self.failures


def check_golden_file(path) -> ParityReport:
    """Replay every golden case in float64; gradients come from autograd
    so this cross-checks the emitter's analytic derivatives too."""
    with open(path, encoding="utf-8") as fp:
        doc = json.load(fp)
    cfg = doc["config"]
    report = ParityReport(cases=len(doc["cases"]), max_total_err=0.0, max_grad_err=0.0,
                          failures=[])
    for index, case in enumerate(doc["cases"]):
        settings = LossSettings(
            vocab_size=cfg["vocab_size"],
            epsilon=cfg["epsilon"],
            w=float(case.get("w", cfg["w"])),
            indicator_mode=cfg.get("indicator_mode", INDICATOR_SOURCE_POSITION),
            smoothing_mode=cfg.get("smoothing_mode", SMOOTHING_FULL_VOCAB),
        )
        logits = torch.tensor(case["logits"], dtype=torch.float64, requires_grad=True)
        total = copy_penalized_loss(
            logits,
            torch.tensor(case["ref_ids"], dtype=torch.long),
            torch.tensor(case["src_ids"], dtype=torch.long),
            torch.tensor(case["src_match"], dtype=torch.long),
            settings,
        )
        total.backward()
        total_err = abs(float(total.detach()) - case["total"])
        grad_err = float(
            (logits.grad - torch.tensor(case["grad"], dtype=torch.float64)).abs().max()
        )
        report.max_total_err = max(report.max_total_err, total_err)
        report.max_grad_err = max(report.max_grad_err, grad_err)
        if total_err > TOTAL_TOL or grad_err > GRAD_TOL:
            report.failures.append(index)
    return report


class GoldenMismatchError(RuntimeError):
    """Raised when the loss disagrees with the pipeline's golden vectors."""


def require_golden_parity(path) -> ParityReport:
    report = check_golden_file(path)
    if not report.ok:
        raise GoldenMismatchError(
            f"loss parity failed on {len(report.failures)}/{report.cases} golden cases "
            f"(max total err {report.max_total_err:.3e}, "
            f"max grad err {report.max_grad_err:.3e})"
        )
    return report
