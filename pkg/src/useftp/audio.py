"""Waveform containers, STFT/iSTFT and WAV I/O.

The transform frames the signal with a square-root periodic Hann window at
50% overlap, so the squared window overlap-adds to one and ``istft`` inverts
``stft`` exactly (up to float rounding).  Both directions are written in torch
so they sit inside the autograd graph of the model.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

import numpy as np
import torch
import torch.nn.functional as F
from scipy.io import wavfile
from scipy.signal import resample_poly

from .errors import InvalidInputError

CANONICAL_RATE = 16000


@dataclass
class AudioClip:
    samples: np.ndarray
    sample_rate: int
    speaker_id: Optional[str] = None

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1:
            raise InvalidInputError(f"expected mono samples, got shape {self.samples.shape}")
        if int(self.sample_rate) <= 0:
            raise InvalidInputError(f"sample_rate must be positive, got {self.sample_rate}")
        self.sample_rate = int(self.sample_rate)
        if not np.all(np.isfinite(self.samples)):
            raise InvalidInputError("samples contain NaN or Inf")

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate

    def __len__(self) -> int:
        return len(self.samples)


@dataclass(frozen=True)
class StftConfig:
    """Framing parameters.  ``bins`` is the model's frequency axis size."""

    sample_rate: int = CANONICAL_RATE
    window_ms: float = 20.0
    hop_ms: float = 10.0
    fft_size: int = 320
    window: str = "sqrt_hann"

    def __post_init__(self):
        problems = []
        if self.sample_rate <= 0:
            problems.append("sample_rate must be positive")
        if self.hop_ms <= 0 or self.window_ms <= 0:
            problems.append("window_ms and hop_ms must be positive")
        if self.hop_ms > self.window_ms:
            problems.append(f"hop_ms ({self.hop_ms}) exceeds window_ms ({self.window_ms})")
        if self.window not in _WINDOWS:
            problems.append(f"unknown window {self.window!r}")
        if not problems and self.fft_size < self.win_length:
            problems.append(f"fft_size {self.fft_size} shorter than window ({self.win_length} samples)")
        if problems:
            raise InvalidInputError("; ".join(problems))

    @classmethod
    def for_rate(cls, sample_rate: int, window_ms: float = 20.0, hop_ms: float = 10.0) -> "StftConfig":
        win = int(round(window_ms * sample_rate / 1000))
        return cls(sample_rate=sample_rate, window_ms=window_ms, hop_ms=hop_ms, fft_size=win)

    @property
    def win_length(self) -> int:
        return int(round(self.window_ms * self.sample_rate / 1000))

    @property
    def hop_length(self) -> int:
        return int(round(self.hop_ms * self.sample_rate / 1000))

    @property
    def bins(self) -> int:
        return self.fft_size // 2 + 1

    def num_frames(self, num_samples: int) -> int:
        """Frame count produced by :func:`stft_tensor` for a signal of ``num_samples``."""
        win, hop = self.win_length, self.hop_length
        return 1 + max(0, math.ceil((num_samples + win - 2 * hop) / hop))

    def to_dict(self) -> dict:
        return {
            "sample_rate": self.sample_rate,
            "window_ms": self.window_ms,
            "hop_ms": self.hop_ms,
            "fft_size": self.fft_size,
            "window": self.window,
        }


def _sqrt_hann(n: int, dtype, device) -> torch.Tensor:
    return torch.hann_window(n, periodic=True, dtype=dtype, device=device).sqrt()


def _hann(n: int, dtype, device) -> torch.Tensor:
    return torch.hann_window(n, periodic=True, dtype=dtype, device=device)


_WINDOWS = {"sqrt_hann": _sqrt_hann, "hann": _hann}


def analysis_window(cfg: StftConfig, dtype=torch.float64, device=None) -> torch.Tensor:
    return _WINDOWS[cfg.window](cfg.win_length, dtype, device)


@dataclass
class ComplexSpectrogram:
    data: torch.Tensor  # [B, 2, F, L]; channel 0 real, 1 imaginary
    config: StftConfig
    original_length: int

    def __post_init__(self):
        if self.data.ndim != 4 or self.data.shape[1] != 2:
            raise InvalidInputError(f"spectrogram must be [B, 2, F, L], got {tuple(self.data.shape)}")
        if self.data.shape[2] != self.config.bins:
            raise InvalidInputError(
                f"frequency axis {self.data.shape[2]} does not match config bins {self.config.bins}"
            )

    @property
    def num_frames(self) -> int:
        return self.data.shape[-1]

    def complex(self) -> torch.Tensor:
        return torch.complex(self.data[:, 0], self.data[:, 1])


def _padding(cfg: StftConfig, num_samples: int) -> tuple[int, int]:
    win, hop = cfg.win_length, cfg.hop_length
    front = win - hop
    frames = cfg.num_frames(num_samples)
    total = (frames - 1) * hop + win
    return front, total - front - num_samples


def stft_tensor(x: torch.Tensor, cfg: StftConfig) -> torch.Tensor:
    """STFT of ``x`` ([B, T] or [T]) as stacked real/imag ``[B, 2, F, L]``.

    The signal is zero-padded by ``win - hop`` at the front and enough at the
    tail to keep the last partial frame; every original sample is then covered
    by the full set of overlapping windows.
    """
    if x.ndim == 1:
        x = x.unsqueeze(0)
    if x.shape[-1] == 0:
        raise InvalidInputError("cannot transform an empty signal")
    front, back = _padding(cfg, x.shape[-1])
    xp = F.pad(x, (front, back))
    frames = xp.unfold(-1, cfg.win_length, cfg.hop_length)  # [B, L, win]
    frames = frames * analysis_window(cfg, x.dtype, x.device)
    spec = torch.fft.rfft(frames, n=cfg.fft_size, dim=-1)  # [B, L, F]
    spec = spec.transpose(-1, -2)
    return torch.stack([spec.real, spec.imag], dim=1)


def istft_tensor(spec: torch.Tensor, cfg: StftConfig, length: int) -> torch.Tensor:
    """Inverse of :func:`stft_tensor`: ``[B, 2, F, L]`` -> ``[B, length]``."""
    if spec.ndim != 4 or spec.shape[1] != 2:
        raise InvalidInputError(f"spectrogram must be [B, 2, F, L], got {tuple(spec.shape)}")
    if spec.shape[2] != cfg.bins:
        raise InvalidInputError(f"frequency axis {spec.shape[2]} != {cfg.bins} bins")
    frames_expected = cfg.num_frames(length)
    if spec.shape[-1] != frames_expected:
        raise InvalidInputError(
            f"{spec.shape[-1]} frames inconsistent with length {length} (expected {frames_expected})"
        )
    win, hop = cfg.win_length, cfg.hop_length
    z = torch.complex(spec[:, 0], spec[:, 1]).transpose(-1, -2)  # [B, L, F]
    frames = torch.fft.irfft(z, n=cfg.fft_size, dim=-1)[..., :win]
    window = analysis_window(cfg, frames.dtype, frames.device)
    frames = frames * window
    n_frames = frames.shape[1]
    total = (n_frames - 1) * hop + win
    ola = F.fold(
        frames.transpose(1, 2), output_size=(1, total), kernel_size=(1, win), stride=(1, hop)
    ).reshape(frames.shape[0], total)
    env = F.fold(
        (window**2).reshape(1, win, 1).expand(1, win, n_frames),
        output_size=(1, total),
        kernel_size=(1, win),
        stride=(1, hop),
    ).reshape(total)
    front = win - hop
    env = env[front : front + length]
    if torch.any(env <= 1e-10):
        raise InvalidInputError("window does not satisfy the overlap-add condition for this hop")
    return ola[:, front : front + length] / env


def stft(clip: AudioClip, cfg: StftConfig) -> ComplexSpectrogram:
    if len(clip.samples) == 0:
        raise InvalidInputError("cannot transform an empty clip")
    if clip.sample_rate != cfg.sample_rate:
        raise InvalidInputError(f"clip rate {clip.sample_rate} != config rate {cfg.sample_rate}")
    x = torch.from_numpy(clip.samples)
    return ComplexSpectrogram(stft_tensor(x, cfg), cfg, len(clip.samples))


def istft(spec: ComplexSpectrogram) -> AudioClip:
    if spec.data.shape[0] != 1:
        raise InvalidInputError("istft to AudioClip expects a batch of one; use istft_tensor")
    y = istft_tensor(spec.data, spec.config, spec.original_length)
    return AudioClip(y[0].detach().cpu().numpy().astype(np.float64), spec.config.sample_rate)


# --- WAV I/O ---------------------------------------------------------------


def load_wav(path: Union[str, Path], target_rate: int = CANONICAL_RATE, speaker_id: Optional[str] = None) -> AudioClip:
    """Read a mono WAV (int16 or float32 PCM), resampling to ``target_rate``."""
    rate, data = wavfile.read(str(path))
    if data.ndim > 1:
        raise InvalidInputError(f"{path}: expected mono audio, got {data.shape[1]} channels")
    if data.dtype == np.int16:
        x = data.astype(np.float64) / 32768.0
    elif data.dtype == np.int32:
        x = data.astype(np.float64) / 2147483648.0
    elif np.issubdtype(data.dtype, np.floating):
        x = data.astype(np.float64)
    else:
        raise InvalidInputError(f"{path}: unsupported sample format {data.dtype}")
    if rate != target_rate:
        g = math.gcd(rate, target_rate)
        x = resample_poly(x, target_rate // g, rate // g)
    return AudioClip(x, target_rate, speaker_id)


def write_wav(path: Union[str, Path], clip: AudioClip, fmt: str = "float32") -> None:
    if fmt == "float32":
        data = clip.samples.astype(np.float32)
    elif fmt == "int16":
        data = np.clip(np.round(clip.samples * 32767.0), -32768, 32767).astype(np.int16)
    else:
        raise InvalidInputError(f"unsupported WAV format {fmt!r}")
    wavfile.write(str(path), clip.sample_rate, data)
