"""Speaker activity timelines, frame rasterization, TA/TS scene segmentation, RTTM.

A target-active (TA) span is any time the target speaker talks, whether or not
interferers overlap it.  Everything else is target-silent (TS), which covers
both interferer-only and fully quiet stretches.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence, Union

import numpy as np

from .errors import InvalidInputError

TA = "TA"
TS = "TS"


def _normalize(intervals: Iterable[Sequence[float]], duration: float) -> list[tuple[float, float]]:
    spans = []
    for start, end in intervals:
        start, end = max(0.0, float(start)), min(float(duration), float(end))
        if end > start:
            spans.append((start, end))
    spans.sort()
    merged: list[tuple[float, float]] = []
    for start, end in spans:
        if merged and start <= merged[-1][1]:
            merged[-1] = (merged[-1][0], max(merged[-1][1], end))
        else:
            merged.append((start, end))
    return merged


@dataclass
class ActivityTimeline:
    """On/off intervals (seconds) of one speaker inside a clip of ``duration_s``.

    Intervals are clipped to the clip, sorted and merged on construction.
    """

    intervals: list[tuple[float, float]]
    duration_s: float
    speaker: Optional[str] = None

    def __post_init__(self):
        if self.duration_s <= 0:
            raise InvalidInputError(f"duration must be positive, got {self.duration_s}")
        for start, end in self.intervals:
            if start < 0 or end > self.duration_s + 1e-9 or end < start:
                raise InvalidInputError(
                    f"interval ({start}, {end}) outside [0, {self.duration_s}] or reversed"
                )
        self.intervals = _normalize(self.intervals, self.duration_s)

    @property
    def active_time(self) -> float:
        return sum(end - start for start, end in self.intervals)

    def is_active(self, t: float) -> bool:
        return any(start <= t < end for start, end in self.intervals)

    def to_dict(self) -> dict:
        return {
            "speaker": self.speaker,
            "intervals": [[round(s, 3), round(e, 3)] for s, e in self.intervals],
        }


def rasterize_vad(tl: ActivityTimeline, frame_hop_ms: float, num_frames: int, offset: float = 0.5) -> np.ndarray:
    """Binary per-frame activity.

    Frame ``t`` is labelled 1 when its reference instant ``(t + offset) * hop``
    falls in ``[start, end)`` of some interval.  The default offset of one half
    puts that instant at the centre of a non-overlapping frame grid; pass
    ``offset=0`` to align with STFT frame centres (see ``audio.stft_tensor``).
    """
    if frame_hop_ms <= 0:
        raise InvalidInputError(f"frame hop must be positive, got {frame_hop_ms}")
    if num_frames < 0:
        raise InvalidInputError(f"num_frames must be non-negative, got {num_frames}")
    centers = (np.arange(num_frames) + offset) * frame_hop_ms / 1000.0
    labels = np.zeros(num_frames, dtype=np.int64)
    for start, end in tl.intervals:
        labels[(centers >= start) & (centers < end)] = 1
    return labels


@dataclass
class SceneSegmentation:
    segments: list[tuple[float, float, str]]
    duration_s: float = field(default=0.0)

    def __post_init__(self):
        if not self.duration_s and self.segments:
            self.duration_s = self.segments[-1][1]
        cursor = 0.0
        for start, end, label in self.segments:
            if label not in (TA, TS):
                raise InvalidInputError(f"unknown scene label {label!r}")
            if abs(start - cursor) > 1e-9 or end <= start:
                raise InvalidInputError("scene segments must tile the clip without gaps or overlaps")
            cursor = end
        if self.segments and abs(cursor - self.duration_s) > 1e-9:
            raise InvalidInputError("scene segments do not reach the end of the clip")

    def of(self, label: str) -> list[tuple[float, float]]:
        return [(s, e) for s, e, lab in self.segments if lab == label]

    def total(self, label: str) -> float:
        return sum(e - s for s, e in self.of(label))

    def sample_spans(self, sample_rate: int, num_samples: int, min_samples: int = 1) -> list[tuple[int, int, str]]:
        """Segments as sample-index spans ``[a, b)``, clamped to ``num_samples``.

        Spans shorter than ``min_samples`` are absorbed into the longer
        neighbour; adjacent spans with equal labels are fused afterwards.
        """
        spans = []
        for start, end, label in self.segments:
            a = min(num_samples, int(round(start * sample_rate)))
            b = min(num_samples, int(round(end * sample_rate)))
            if b > a:
                spans.append([a, b, label])
        if spans:
            spans[-1][1] = num_samples
        spans = _absorb_short(spans, min_samples)
        return [tuple(s) for s in spans]


def _absorb_short(spans: list[list], min_len: int) -> list[list]:
    spans = _fuse(spans)
    while len(spans) > 1:
        lengths = [b - a for a, b, _ in spans]
        i = int(np.argmin(lengths))
        if lengths[i] >= min_len:
            break
        if i == 0:
            j = 1
        elif i == len(spans) - 1:
            j = i - 1
        else:
            j = i - 1 if lengths[i - 1] >= lengths[i + 1] else i + 1
        lo, hi = min(i, j), max(i, j)
        merged = [spans[lo][0], spans[hi][1], spans[j][2]]
        spans = _fuse(spans[:lo] + [merged] + spans[hi + 1 :])
    return spans


def _fuse(spans: list[list]) -> list[list]:
    out: list[list] = []
    for a, b, lab in spans:
        if out and out[-1][2] == lab:
            out[-1][1] = b
        else:
            out.append([a, b, lab])
    return out


def segment_scenes(target_tl: ActivityTimeline) -> SceneSegmentation:
    """Split the clip into TA spans (target talking) and TS spans (everything else)."""
    duration = target_tl.duration_s
    segments: list[tuple[float, float, str]] = []
    cursor = 0.0
    for start, end in target_tl.intervals:
        if start > cursor:
            segments.append((cursor, start, TS))
        segments.append((start, end, TA))
        cursor = end
    if cursor < duration:
        segments.append((cursor, duration, TS))
    return SceneSegmentation(segments, duration)


# --- RTTM --------------------------------------------------------------------


def to_rttm(timelines: Iterable[ActivityTimeline], file_id: str) -> str:
    lines = []
    for tl in timelines:
        spk = tl.speaker or "spk"
        for start, end in tl.intervals:
            lines.append(f"SPEAKER {file_id} 1 {start:.3f} {end - start:.3f} <NA> <NA> {spk} <NA> <NA>")
    return "\n".join(lines) + ("\n" if lines else "")


def write_rttm(path: Union[str, Path], timelines: Iterable[ActivityTimeline], file_id: str) -> None:
    Path(path).write_text(to_rttm(timelines, file_id))


def read_rttm(path: Union[str, Path], durations: Optional[dict[str, float]] = None) -> dict[str, list[ActivityTimeline]]:
    """Parse an RTTM file into ``{file_id: [ActivityTimeline per speaker]}``.

    Without ``durations`` each file's duration is taken as its last segment end.
    """
    raw: dict[str, dict[str, list[tuple[float, float]]]] = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        parts = line.split()
        if not parts or parts[0] != "SPEAKER":
            continue
        if len(parts) < 8:
            raise InvalidInputError(f"{path}:{lineno}: malformed RTTM line")
        file_id, start, dur, spk = parts[1], float(parts[3]), float(parts[4]), parts[7]
        raw.setdefault(file_id, {}).setdefault(spk, []).append((start, start + dur))
    out = {}
    for file_id, speakers in raw.items():
        end = max(e for spans in speakers.values() for _, e in spans)
        duration = (durations or {}).get(file_id, end)
        out[file_id] = [ActivityTimeline(spans, max(duration, end), spk) for spk, spans in sorted(speakers.items())]
    return out
