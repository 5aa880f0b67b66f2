"""Synthetic sparse-overlap mixtures.

Speakers are surrogates by default: band-limited noise carriers with a
speaker-specific passband, amplitude-modulated at a syllabic rate.  A reference
utterance is always a fresh draw from the same speaker, never the in-mixture
segment.  Real recordings can be used instead through :class:`WavSpeakerPool`.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence, Union

import numpy as np
from scipy.signal import butter, sosfilt

from .audio import CANONICAL_RATE, AudioClip, load_wav, write_wav
from .errors import InfeasibleOverlapError, InvalidInputError
from .timeline import ActivityTimeline, write_rttm

FADE_S = 0.005


class SyntheticSpeakerPool:
    """Speakers as disjoint passbands spread log-uniformly over the spectrum."""

    def __init__(self, num_speakers: int = 8, sample_rate: int = CANONICAL_RATE, low_hz: float = 150.0):
        if num_speakers < 1:
            raise InvalidInputError("need at least one speaker")
        self.sample_rate = sample_rate
        high_hz = 0.45 * sample_rate
        edges = np.geomspace(low_hz, high_hz, num_speakers + 1)
        self.speakers = [f"spk{i}" for i in range(num_speakers)]
        self._bands = {}
        self._sos = {}
        self._rates = {}
        for i, spk in enumerate(self.speakers):
            lo, hi = edges[i], edges[i + 1]
            # guard band keeps neighbouring speakers spectrally apart
            width = hi - lo
            lo, hi = lo + 0.12 * width, hi - 0.12 * width
            self._bands[spk] = (lo, hi)
            self._sos[spk] = butter(4, [lo, hi], btype="bandpass", fs=sample_rate, output="sos")
            self._rates[spk] = 3.0 + 3.0 * i / max(1, num_speakers - 1)

    def band(self, speaker: str) -> tuple[float, float]:
        return self._bands[speaker]

    def utterance(self, speaker: str, num_samples: int, rng: np.random.Generator, exclude=None) -> np.ndarray:
        sr = self.sample_rate
        warm = int(0.05 * sr)
        carrier = sosfilt(self._sos[speaker], rng.standard_normal(num_samples + warm))[warm:]
        t = np.arange(num_samples) / sr
        rate = self._rates[speaker] * rng.uniform(0.85, 1.15)
        phase = rng.uniform(0, 2 * np.pi)
        envelope = 0.35 + 0.65 * np.abs(np.sin(np.pi * rate * t + phase))
        x = carrier * envelope
        x /= np.sqrt(np.mean(x**2)) + 1e-12
        return _fade(x, int(FADE_S * sr))


class WavSpeakerPool:
    """Utterances loaded from ``root/<speaker>/*.wav``.

    The reference for a speaker is taken from a different file than the one
    used in the mixture whenever the speaker has more than one file.
    """

    def __init__(self, root: Union[str, Path], sample_rate: int = CANONICAL_RATE):
        self.sample_rate = sample_rate
        self.root = Path(root)
        self._files = {
            d.name: sorted(d.glob("*.wav")) for d in sorted(self.root.iterdir()) if d.is_dir()
        }
        self._files = {k: v for k, v in self._files.items() if v}
        if not self._files:
            raise InvalidInputError(f"no speaker directories with WAV files under {root}")
        self.speakers = sorted(self._files)
        self._cache: dict[Path, np.ndarray] = {}
        self.last_file: dict[str, Path] = {}

    def _load(self, path: Path) -> np.ndarray:
        if path not in self._cache:
            self._cache[path] = load_wav(path, self.sample_rate).samples
        return self._cache[path]

    def utterance(self, speaker: str, num_samples: int, rng: np.random.Generator, exclude=None) -> np.ndarray:
        files = [f for f in self._files[speaker] if f != exclude] or self._files[speaker]
        path = files[int(rng.integers(len(files)))]
        self.last_file[speaker] = path
        x = self._load(path)
        if len(x) >= num_samples:
            start = int(rng.integers(len(x) - num_samples + 1))
            x = x[start : start + num_samples]
        else:
            x = np.resize(x, num_samples)  # loop short files
        x = x / (np.sqrt(np.mean(x**2)) + 1e-12)
        return _fade(x, int(FADE_S * self.sample_rate))


def _fade(x: np.ndarray, n: int) -> np.ndarray:
    n = min(n, len(x) // 2)
    if n > 0:
        ramp = 0.5 - 0.5 * np.cos(np.pi * (np.arange(n) + 1) / (n + 1))
        x = x.copy()
        x[:n] *= ramp
        x[-n:] *= ramp[::-1]
    return x


@dataclass
class MixtureRequest:
    num_speakers: int = 2
    overlap_ratio: float = 0.5
    snr_db: Optional[float] = 30.0
    clip_seconds: float = 4.0
    seed: int = 0
    sample_rate: int = CANONICAL_RATE
    ref_seconds: float = 2.0
    span_range: tuple[float, float] = (0.6, 0.9)
    gain_db_range: float = 2.5
    min_utterance_s: float = 0.25


@dataclass
class MixtureSample:
    mixture: AudioClip
    sources: list[AudioClip]
    noise: AudioClip
    timelines: list[ActivityTimeline]
    references: list[AudioClip]
    overlap_ratio: float
    requested_overlap: float = 0.0
    seed: int = 0
    sample_id: str = ""
    speakers: list[str] = field(default_factory=list)

    @property
    def duration(self) -> float:
        return self.mixture.duration


def overlap_ratio(intervals: Sequence[Sequence[tuple[float, float]]]) -> float:
    """Overlapped speech time divided by total (union) speech time, by event sweep."""
    events = []
    for spans in intervals:
        for start, end in spans:
            if end > start:
                events.append((start, 1))
                events.append((end, -1))
    if not events:
        return 0.0
    events.sort(key=lambda e: (e[0], e[1]))
    active = 0
    union = overlapped = 0.0
    prev = events[0][0]
    for t, delta in events:
        if active >= 1:
            union += t - prev
        if active >= 2:
            overlapped += t - prev
        active += delta
        prev = t
    return overlapped / union if union > 0 else 0.0


def _chain(num: int, span: float, phi: float) -> tuple[float, list[float]]:
    """Equal-length utterances, each starting after ``1 - phi`` of the previous one."""
    d = span / (1.0 + (num - 1) * (1.0 - phi))
    return d, [i * (1.0 - phi) * d for i in range(num)]


def _solve_overlap(num: int, span: float, ratio: float) -> tuple[float, list[float]]:
    def realized(phi):
        d, starts = _chain(num, span, phi)
        return overlap_ratio([[(s, s + d)] for s in starts])

    lo, hi = 0.0, 1.0
    if ratio <= 0:
        return _chain(num, span, 0.0)
    if ratio >= 1:
        return _chain(num, span, 1.0)
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if realized(mid) < ratio:
            lo = mid
        else:
            hi = mid
    return _chain(num, span, 0.5 * (lo + hi))


def sample_seed(global_seed: int, index: int) -> int:
    """Deterministic per-sample seed so synthesis can be split across workers."""
    return int(np.random.SeedSequence([int(global_seed), int(index)]).generate_state(1)[0])


def synthesize_mixture(req: MixtureRequest, pool=None) -> MixtureSample:
    """Place ``req.num_speakers`` utterances so their overlap ratio hits the request.

    Utterances share one length and form a chain in which each starts after a
    fixed fraction of its predecessor; that fraction is found by bisection on
    the exact interval geometry.  Raises :class:`InfeasibleOverlapError` when
    the request cannot be placed inside the clip.
    """
    if req.num_speakers < 1:
        raise InvalidInputError("num_speakers must be at least 1")
    if not 0.0 <= req.overlap_ratio <= 1.0:
        raise InvalidInputError(f"overlap_ratio must lie in [0, 1], got {req.overlap_ratio}")
    if req.clip_seconds <= 0:
        raise InvalidInputError("clip_seconds must be positive")
    pool = pool or SyntheticSpeakerPool(sample_rate=req.sample_rate)
    if pool.sample_rate != req.sample_rate:
        raise InvalidInputError(f"pool rate {pool.sample_rate} != requested rate {req.sample_rate}")
    if req.num_speakers > len(pool.speakers):
        raise InfeasibleOverlapError(
            f"num_speakers={req.num_speakers} exceeds the {len(pool.speakers)} speakers in the pool"
        )
    if req.num_speakers == 1 and req.overlap_ratio > 0.05:
        raise InfeasibleOverlapError("a single speaker cannot produce overlapped speech (num_speakers=1)")

    rng = np.random.default_rng(req.seed)
    sr = req.sample_rate
    total = int(round(req.clip_seconds * sr))
    speakers = [pool.speakers[i] for i in rng.permutation(len(pool.speakers))[: req.num_speakers]]

    span = rng.uniform(*req.span_range) * req.clip_seconds
    d, starts = _solve_overlap(req.num_speakers, span, req.overlap_ratio)
    if d < req.min_utterance_s:
        raise InfeasibleOverlapError(
            f"clip_seconds={req.clip_seconds} too short: utterances would last {d:.3f} s, "
            f"below min_utterance_s={req.min_utterance_s} for {req.num_speakers} speakers "
            f"at overlap {req.overlap_ratio}"
        )
    t0 = rng.uniform(0.0, req.clip_seconds - span)
    n_utt = int(round(d * sr))

    sources, timelines, placed = [], [], []
    for spk, s in zip(speakers, starts):
        a = min(int(round((t0 + s) * sr)), total - n_utt)
        b = a + n_utt
        gain = 10 ** (rng.uniform(-req.gain_db_range, req.gain_db_range) / 20) * 0.1
        x = np.zeros(total)
        x[a:b] = gain * pool.utterance(spk, n_utt, rng)
        sources.append(AudioClip(x, sr, spk))
        placed.append([(a / sr, b / sr)])
        timelines.append(ActivityTimeline([(a / sr, b / sr)], total / sr, spk))

    speech = np.zeros(total)
    for src in sources:
        speech = speech + src.samples
    if req.snr_db is None or math.isinf(req.snr_db):
        noise = np.zeros(total)
    else:
        noise = rng.standard_normal(total)
        p_speech = np.mean(speech**2)
        noise *= np.sqrt(p_speech / (10 ** (req.snr_db / 10)) / np.mean(noise**2))
    mixture = speech + noise

    references = []
    n_ref = int(round(req.ref_seconds * sr))
    for spk in speakers:
        exclude = getattr(pool, "last_file", {}).get(spk)
        references.append(AudioClip(0.1 * pool.utterance(spk, n_ref, rng, exclude=exclude), sr, spk))

    return MixtureSample(
        mixture=AudioClip(mixture, sr),
        sources=sources,
        noise=AudioClip(noise, sr),
        timelines=timelines,
        references=references,
        overlap_ratio=overlap_ratio(placed),
        requested_overlap=float(req.overlap_ratio),
        seed=int(req.seed),
        speakers=speakers,
    )


def synthesize_dataset(
    ratios: Iterable[float],
    per_ratio: int,
    seed: int = 0,
    pool=None,
    **request_kwargs,
) -> list[MixtureSample]:
    samples = []
    index = 0
    for ratio in ratios:
        for _ in range(per_ratio):
            s = sample_seed(seed, index)
            req = MixtureRequest(overlap_ratio=float(ratio), seed=s, **request_kwargs)
            sample = synthesize_mixture(req, pool)
            sample.sample_id = f"mix{index:05d}"
            samples.append(sample)
            index += 1
    return samples


# --- manifest I/O ----------------------------------------------------------


def manifest_record(sample: MixtureSample, rel_dir: str = "") -> dict:
    sid = sample.sample_id
    p = (lambda name: f"{rel_dir}/{name}" if rel_dir else name)
    return {
        "id": sid,
        "sample_rate": sample.mixture.sample_rate,
        "duration": round(sample.duration, 3),
        "mixture": p(f"{sid}_mix.wav"),
        "noise": p(f"{sid}_noise.wav"),
        "sources": [p(f"{sid}_src{i}.wav") for i in range(len(sample.sources))],
        "references": [p(f"{sid}_ref{i}.wav") for i in range(len(sample.references))],
        "speakers": list(sample.speakers),
        "timelines": [tl.to_dict() for tl in sample.timelines],
        "overlap_ratio": round(sample.overlap_ratio, 3),
        "requested_overlap": sample.requested_overlap,
        "seed": sample.seed,
    }


def write_dataset(samples: Sequence[MixtureSample], out_dir: Union[str, Path], manifest_name: str = "manifest.jsonl") -> Path:
    """Write WAVs, one RTTM per mixture and a JSON-lines manifest; returns the manifest path."""
    out = Path(out_dir)
    (out / "wav").mkdir(parents=True, exist_ok=True)
    (out / "rttm").mkdir(parents=True, exist_ok=True)
    lines = []
    for sample in samples:
        sid = sample.sample_id
        write_wav(out / "wav" / f"{sid}_mix.wav", sample.mixture)
        write_wav(out / "wav" / f"{sid}_noise.wav", sample.noise)
        for i, src in enumerate(sample.sources):
            write_wav(out / "wav" / f"{sid}_src{i}.wav", src)
        for i, ref in enumerate(sample.references):
            write_wav(out / "wav" / f"{sid}_ref{i}.wav", ref)
        write_rttm(out / "rttm" / f"{sid}.rttm", sample.timelines, sid)
        lines.append(json.dumps(manifest_record(sample, "wav"), sort_keys=True))
    path = out / manifest_name
    path.write_text("\n".join(lines) + "\n")
    return path


def read_manifest(path: Union[str, Path]) -> list[dict]:
    return [json.loads(line) for line in Path(path).read_text().splitlines() if line.strip()]


def load_sample(record: dict, base_dir: Union[str, Path]) -> MixtureSample:
    base = Path(base_dir)
    sr = int(record["sample_rate"])
    mix = load_wav(base / record["mixture"], sr)
    duration = len(mix.samples) / sr
    sources = [load_wav(base / p, sr, spk) for p, spk in zip(record["sources"], record["speakers"])]
    refs = [load_wav(base / p, sr, spk) for p, spk in zip(record["references"], record["speakers"])]
    noise = load_wav(base / record["noise"], sr) if record.get("noise") else AudioClip(np.zeros(len(mix)), sr)
    timelines = [
        ActivityTimeline([(min(s, duration), min(e, duration)) for s, e in t["intervals"]], duration, t["speaker"])
        for t in record["timelines"]
    ]
    return MixtureSample(
        mixture=mix,
        sources=sources,
        noise=noise,
        timelines=timelines,
        references=refs,
        overlap_ratio=float(record["overlap_ratio"]),
        requested_overlap=float(record.get("requested_overlap", record["overlap_ratio"])),
        seed=int(record.get("seed", 0)),
        sample_id=record["id"],
        speakers=list(record["speakers"]),
    )


def load_dataset(manifest: Union[str, Path]) -> list[MixtureSample]:
    manifest = Path(manifest)
    return [load_sample(r, manifest.parent) for r in read_manifest(manifest)]
