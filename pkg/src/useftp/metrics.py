"""Evaluation metrics: SI-SDR(i), SDR(i), PVAD classification scores, DER, TS power."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Optional, Sequence

import numpy as np
import torch
from scipy.linalg import solve_toeplitz
from scipy.ndimage import median_filter
from scipy.optimize import linear_sum_assignment
from scipy.signal import fftconvolve

from . import losses
from .errors import DegenerateProjectionError, InvalidInputError, UndefinedMetricError
from .timeline import TS, ActivityTimeline, SceneSegmentation, rasterize_vad

SDR_TAPS = 512
TS_POWER_EPS = 1e-10


@dataclass
class TseReport:
    si_sdr: float
    si_sdri: float
    sdr: float
    sdri: float
    ta_si_sdri: Optional[float]
    ts_power: Optional[float]

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class PvadReport:
    accuracy: float
    precision: float
    recall: float
    f1: float
    threshold: float

    @classmethod
    def from_counts(cls, tp: int, fp: int, fn: int, tn: int, threshold: float = 0.5) -> "PvadReport":
        total = tp + fp + fn + tn
        if total == 0:
            raise InvalidInputError("no frames to score")
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
        return cls((tp + tn) / total, precision, recall, f1, threshold)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class DiarizationReport:
    der: float
    miss: float
    false_alarm: float
    confusion: float
    collar_s: float
    median_frames: int
    scored_speech_frames: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


# --- extraction quality ----------------------------------------------------


def _t(x) -> torch.Tensor:
    return torch.as_tensor(np.asarray(x, dtype=np.float64))


def si_sdr_value(estimate, target) -> float:
    return float(losses.si_sdr(_t(estimate), _t(target)))


def si_sdr_improvement(estimate, mixture, target) -> tuple[float, float]:
    """(SI-SDR of the estimate, its gain over using the mixture as the estimate)."""
    est = si_sdr_value(estimate, target)
    return est, est - si_sdr_value(mixture, target)


def distortion_projection(estimate: np.ndarray, target: np.ndarray, taps: int = SDR_TAPS) -> np.ndarray:
    """Least-squares fit of ``estimate`` by ``taps`` delayed copies of ``target``.

    Works on the full-convolution frame (length ``T + taps - 1``, estimate
    zero-padded) so the normal matrix is the target's autocorrelation Toeplitz
    matrix and Levinson recursion applies.
    """
    estimate = np.asarray(estimate, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if estimate.shape != target.shape or estimate.ndim != 1:
        raise InvalidInputError("estimate and target must be 1-D and equally long")
    n = len(target)
    taps = min(taps, n)
    acf = fftconvolve(target, target[::-1])[n - 1 : n - 1 + taps]
    if acf[0] <= 0:
        raise DegenerateProjectionError("reference has zero energy; distortion filter undefined")
    xcorr = fftconvolve(estimate, target[::-1])[n - 1 : n - 1 + taps]
    try:
        h = solve_toeplitz(acf, xcorr)
    except np.linalg.LinAlgError as exc:
        raise DegenerateProjectionError(f"singular distortion-filter system: {exc}") from exc
    if not np.all(np.isfinite(h)):
        raise DegenerateProjectionError("distortion-filter solution is not finite")
    return fftconvolve(target, h)  # length n + taps - 1


def sdr(estimate, target, taps: int = SDR_TAPS, cap: float = losses.SI_SDR_CAP_DB) -> float:
    """BSS-Eval style SDR allowing a ``taps``-long time-invariant filter on the target."""
    estimate = np.asarray(estimate, dtype=np.float64)
    proj = distortion_projection(estimate, target, taps)
    padded = np.concatenate([estimate, np.zeros(len(proj) - len(estimate))])
    num = max(float(np.sum(proj**2)), 1e-30)
    den = max(float(np.sum((padded - proj) ** 2)), 1e-30)
    return float(np.clip(10 * np.log10(num / den), -cap, cap))


def sdr_improvement(estimate, mixture, target, taps: int = SDR_TAPS) -> tuple[float, float]:
    value = sdr(estimate, target, taps)
    return value, value - sdr(mixture, target, taps)


# --- PVAD --------------------------------------------------------------------


def pvad_counts(scores, labels, threshold: float = 0.5, from_logits: bool = False) -> tuple[int, int, int, int]:
    scores = np.asarray(scores, dtype=np.float64).ravel()
    labels = np.asarray(labels).ravel()
    if scores.size == 0:
        raise InvalidInputError("empty PVAD input")
    if scores.shape != labels.shape:
        raise InvalidInputError(f"{scores.size} scores vs {labels.size} labels")
    if from_logits:
        scores = 1.0 / (1.0 + np.exp(-scores))
    pred = scores >= threshold
    truth = labels.astype(bool)
    tp = int(np.sum(pred & truth))
    fp = int(np.sum(pred & ~truth))
    fn = int(np.sum(~pred & truth))
    tn = int(np.sum(~pred & ~truth))
    return tp, fp, fn, tn


def pvad_scores(scores, labels, threshold: float = 0.5, from_logits: bool = False) -> PvadReport:
    """Accuracy/precision/recall/F1 with the target-active class as positive."""
    return PvadReport.from_counts(*pvad_counts(scores, labels, threshold, from_logits), threshold=threshold)


# --- diarization -------------------------------------------------------------


def smooth_track(track: np.ndarray, median_frames: int) -> np.ndarray:
    """Majority (median) smoothing of a binary track, iterated to its fixed point.

    A single median pass is not idempotent on alternating patterns; iterating
    to the root signal makes the smoother a projection.  Edges replicate.
    """
    x = np.asarray(track, dtype=np.int64)
    if median_frames <= 1 or x.size == 0:
        return x.copy()
    for _ in range(x.size + 1):
        y = median_filter(x, size=median_frames, mode="nearest")
        if np.array_equal(x, y):
            break
        x = y
    return x


def optimal_mapping(ref: np.ndarray, hyp: np.ndarray) -> list[tuple[int, int]]:
    """Reference/hypothesis speaker pairs maximizing co-active frames (Hungarian)."""
    if ref.shape[0] == 0 or hyp.shape[0] == 0:
        return []
    overlap = ref.astype(np.int64) @ hyp.astype(np.int64).T
    rows, cols = linear_sum_assignment(overlap, maximize=True)
    return list(zip(rows.tolist(), cols.tolist()))


def der_counts(ref: np.ndarray, hyp: np.ndarray, median_frames: int = 11, scored: Optional[np.ndarray] = None) -> dict:
    """Frame-level DER error counts for ``[speakers, frames]`` binary matrices.

    Hypothesis tracks are smoothed first; frames outside ``scored`` are ignored.
    """
    ref = np.atleast_2d(np.asarray(ref, dtype=np.int64))
    hyp = np.atleast_2d(np.asarray(hyp, dtype=np.int64))
    n = ref.shape[1] if ref.size else hyp.shape[1]
    if hyp.size and hyp.shape[1] != n:
        raise InvalidInputError(f"reference has {n} frames, hypothesis {hyp.shape[1]}")
    if ref.size == 0:
        ref = np.zeros((0, n), dtype=np.int64)
    if hyp.size == 0:
        hyp = np.zeros((0, n), dtype=np.int64)
    hyp = np.stack([smooth_track(h, median_frames) for h in hyp]) if len(hyp) else hyp
    if scored is None:
        scored = np.ones(n, dtype=bool)
    ref, hyp = ref[:, scored], hyp[:, scored]
    n_ref = ref.sum(0)
    n_hyp = hyp.sum(0)
    correct = np.zeros_like(n_ref)
    for i, j in optimal_mapping(ref, hyp):
        correct += ref[i] & hyp[j]
    return {
        "speech": int(n_ref.sum()),
        "miss": int(np.maximum(n_ref - n_hyp, 0).sum()),
        "false_alarm": int(np.maximum(n_hyp - n_ref, 0).sum()),
        "confusion": int((np.minimum(n_ref, n_hyp) - correct).sum()),
    }


def report_from_counts(counts: dict, collar_s: float = 0.0, median_frames: int = 11) -> DiarizationReport:
    if counts["speech"] == 0:
        raise UndefinedMetricError("DER is undefined without reference speech")
    scale = 100.0 / counts["speech"]
    miss = counts["miss"] * scale
    fa = counts["false_alarm"] * scale
    conf = counts["confusion"] * scale
    return DiarizationReport(miss + fa + conf, miss, fa, conf, collar_s, median_frames, counts["speech"])


def collar_mask(reference: Sequence[ActivityTimeline], frame_hop_ms: float, num_frames: int, collar_s: float, offset: float = 0.5) -> np.ndarray:
    """True where a frame is scored, i.e. its centre is farther than ``collar_s`` from any reference boundary."""
    scored = np.ones(num_frames, dtype=bool)
    if collar_s <= 0:
        return scored
    centers = (np.arange(num_frames) + offset) * frame_hop_ms / 1000.0
    for tl in reference:
        for start, end in tl.intervals:
            for edge in (start, end):
                scored &= np.abs(centers - edge) > collar_s
    return scored


def der(
    reference: Sequence[ActivityTimeline],
    hypothesis: Sequence[ActivityTimeline],
    collar_s: float = 0.0,
    median_frames: int = 11,
    frame_hop_ms: float = 10.0,
) -> DiarizationReport:
    """Diarization error rate between two sets of per-speaker timelines."""
    tls = list(reference) + list(hypothesis)
    if not tls:
        raise UndefinedMetricError("DER is undefined without reference speech")
    duration = max(tl.duration_s for tl in tls)
    num_frames = int(math.floor(duration * 1000.0 / frame_hop_ms + 1e-9))
    ref = np.array([rasterize_vad(tl, frame_hop_ms, num_frames) for tl in reference]).reshape(len(reference), num_frames)
    hyp = np.array([rasterize_vad(tl, frame_hop_ms, num_frames) for tl in hypothesis]).reshape(len(hypothesis), num_frames)
    scored = collar_mask(reference, frame_hop_ms, num_frames, collar_s)
    return report_from_counts(der_counts(ref, hyp, median_frames, scored), collar_s, median_frames)


# --- target-silent power -------------------------------------------------------


def ts_power(estimate, scenes: SceneSegmentation, sample_rate: int, eps: float = TS_POWER_EPS) -> Optional[float]:
    """Energy of the estimate inside TS spans per second of TS time, in dB/s.

    Returns ``None`` when the clip has no TS span.
    """
    x = np.asarray(estimate, dtype=np.float64)
    energy = 0.0
    seconds = 0.0
    for start, end in scenes.of(TS):
        a = min(len(x), int(round(start * sample_rate)))
        b = min(len(x), int(round(end * sample_rate)))
        energy += float(np.sum(x[a:b] ** 2))
        seconds += (b - a) / sample_rate
    if seconds <= 0:
        return None
    return 10 * math.log10((energy + eps) / seconds)
