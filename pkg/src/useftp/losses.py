"""Training objectives.

All functions take torch tensors and stay differentiable; they work in any
float dtype (tests run them in float64).  Loss values follow the minimisation
convention: the SI-SDR term enters the total negated.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Optional, Sequence

import torch

from .errors import InvalidInputError, SceneViolationError
from .timeline import TA, TS, SceneSegmentation

SI_SDR_CAP_DB = 60.0
_TINY = 1e-30


@dataclass(frozen=True)
class LossWeights:
    lambda1: float = 1.0  # TSE
    lambda2: float = 1.0  # PVAD
    alpha1: float = 1.0   # SI-SDR on target-active spans
    alpha2: float = 0.01  # power on target-silent spans
    epsilon: float = 1e-8

    def __post_init__(self):
        if min(self.lambda1, self.lambda2, self.alpha1, self.alpha2) < 0:
            raise InvalidInputError("loss weights must be non-negative")
        if self.epsilon <= 0:
            raise InvalidInputError("epsilon must be positive")


@dataclass
class LossBreakdown:
    total: float
    si_sdr_term: float
    power_term: float
    bce_term: float
    num_ta: int
    num_ts: int
    weights: LossWeights

    def recomposed(self) -> float:
        w = self.weights
        return w.lambda1 * (w.alpha1 * self.si_sdr_term + w.alpha2 * self.power_term) + w.lambda2 * self.bce_term

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("weights")
        return d


def si_sdr(estimate: torch.Tensor, target: torch.Tensor, cap: float = SI_SDR_CAP_DB) -> torch.Tensor:
    """Scale-invariant SDR in dB over the last axis, clamped to ``[-cap, cap]``.

    The target is projected as ``<est, s> s / ||s||^2``; no mean removal.
    An all-zero estimate scores ``-cap``.
    """
    if estimate.shape != target.shape:
        raise InvalidInputError(f"shape mismatch: {tuple(estimate.shape)} vs {tuple(target.shape)}")
    energy = (target**2).sum(-1, keepdim=True)
    if torch.any(energy <= 0):
        raise SceneViolationError("target has zero energy; score silent spans with power_loss")
    s_t = (estimate * target).sum(-1, keepdim=True) / energy * target
    s_e = estimate - s_t
    num = (s_t**2).sum(-1).clamp_min(_TINY)
    den = (s_e**2).sum(-1).clamp_min(_TINY)
    value = (10 * torch.log10(num / den)).clamp(-cap, cap)
    # 0/0 for a silent estimate: score it as the worst case, not 0 dB
    silent = (estimate**2).sum(-1) == 0
    return torch.where(silent, torch.full_like(value, -cap), value)


def power_loss(estimate: torch.Tensor, target: torch.Tensor, eps: float = 1e-8) -> torch.Tensor:
    """``10 lg(| ||s||^2 - ||est||^2 | + eps)`` over the last axis."""
    if estimate.shape != target.shape:
        raise InvalidInputError(f"shape mismatch: {tuple(estimate.shape)} vs {tuple(target.shape)}")
    diff = (target**2).sum(-1) - (estimate**2).sum(-1)
    return 10 * torch.log10(diff.abs() + eps)


def pvad_bce(logits: torch.Tensor, labels: torch.Tensor) -> torch.Tensor:
    """Mean binary cross-entropy from logits, via the log-sum-exp form."""
    if logits.shape != labels.shape:
        raise InvalidInputError(f"shape mismatch: {tuple(logits.shape)} vs {tuple(labels.shape)}")
    labels = labels.to(logits.dtype)
    if torch.any((labels != 0) & (labels != 1)):
        raise InvalidInputError("labels must be 0 or 1")
    z = logits
    return (z.clamp_min(0) - z * labels + torch.log1p(torch.exp(-z.abs()))).mean()


def scene_aware_tse_loss(
    estimate: torch.Tensor,
    target: torch.Tensor,
    scenes: SceneSegmentation,
    weights: LossWeights,
    sample_rate: int,
    min_samples: int = 1,
) -> tuple[torch.Tensor, LossBreakdown]:
    """alpha1 * (-SI-SDR over TA spans) + alpha2 * (power loss over TS spans), one clip.

    Each term is a duration-weighted mean over its spans.  Spans shorter than
    ``min_samples`` (normally one STFT hop) are merged into a neighbour first.
    """
    if estimate.ndim != 1 or estimate.shape != target.shape:
        raise InvalidInputError("scene-aware loss expects two 1-D waveforms of equal length")
    si_term, p_term, num_ta, num_ts = _scene_terms(estimate, target, scenes, weights.epsilon, sample_rate, min_samples)
    value = weights.alpha1 * si_term + weights.alpha2 * p_term
    breakdown = LossBreakdown(
        total=float(value.detach()),
        si_sdr_term=float(si_term.detach()),
        power_term=float(p_term.detach()),
        bce_term=0.0,
        num_ta=num_ta,
        num_ts=num_ts,
        weights=LossWeights(1.0, 0.0, weights.alpha1, weights.alpha2, weights.epsilon),
    )
    return value, breakdown


def total_loss(
    waveform: torch.Tensor,
    pvad_logits: torch.Tensor,
    target: torch.Tensor,
    labels: torch.Tensor,
    weights: LossWeights,
    scenes: Optional[Sequence[SceneSegmentation]] = None,
    sample_rate: int = 16000,
    min_samples: int = 1,
) -> tuple[torch.Tensor, LossBreakdown]:
    """Multi-task objective averaged over the batch.

    ``waveform``/``target`` are ``[B, T]``; ``pvad_logits``/``labels`` ``[B, L]``
    (a ``[B, 1, L]`` logit tensor is squeezed).  With ``scenes`` the TSE part
    is the scene-aware composition; without, it is ``alpha1 * -SI-SDR`` on the
    whole clip.  A zero lambda skips its branch entirely.
    """
    if pvad_logits.ndim == 3:
        pvad_logits = pvad_logits[:, 0]
    B = waveform.shape[0]
    zero = waveform.new_zeros(())
    si_term, p_term, bce = zero, zero, zero
    num_ta = num_ts = 0
    if weights.lambda1 > 0:
        if scenes is None:
            si_term = (-si_sdr(waveform, target)).mean()
            num_ta = B
        else:
            if len(scenes) != B:
                raise InvalidInputError(f"{len(scenes)} scene segmentations for a batch of {B}")
            si_parts, p_parts = [], []
            for b in range(B):
                si_b, p_b, n_ta, n_ts = _scene_terms(
                    waveform[b], target[b], scenes[b], weights.epsilon, sample_rate, min_samples
                )
                si_parts.append(si_b)
                p_parts.append(p_b)
                num_ta += n_ta
                num_ts += n_ts
            si_term = torch.stack(si_parts).mean()
            p_term = torch.stack(p_parts).mean()
    if weights.lambda2 > 0:
        bce = pvad_bce(pvad_logits, labels)
    tse = weights.alpha1 * si_term + weights.alpha2 * p_term
    value = weights.lambda1 * tse + weights.lambda2 * bce
    breakdown = LossBreakdown(
        total=float(value.detach()),
        si_sdr_term=float(si_term.detach()),
        power_term=float(p_term.detach()),
        bce_term=float(bce.detach()),
        num_ta=num_ta,
        num_ts=num_ts,
        weights=weights,
    )
    return value, breakdown


def _scene_terms(est, tgt, scenes, eps, sample_rate, min_samples):
    spans = scenes.sample_spans(sample_rate, est.shape[-1], min_samples)
    ta = [(a, b) for a, b, lab in spans if lab == TA]
    ts = [(a, b) for a, b, lab in spans if lab == TS]
    si_term = p_term = est.new_zeros(())
    if ta:
        n = sum(b - a for a, b in ta)
        si_term = sum(-si_sdr(est[a:b], tgt[a:b]) * ((b - a) / n) for a, b in ta)
    if ts:
        n = sum(b - a for a, b in ts)
        p_term = sum(power_loss(est[a:b], tgt[a:b], eps) * ((b - a) / n) for a, b in ts)
    return si_term, p_term, len(ta), len(ts)
