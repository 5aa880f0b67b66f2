import math

import numpy as np
import pytest
import torch
from hypothesis import given, settings, strategies as st

from useftp.audio import (
    AudioClip,
    ComplexSpectrogram,
    StftConfig,
    analysis_window,
    istft,
    istft_tensor,
    load_wav,
    stft,
    stft_tensor,
    write_wav,
)
from useftp.errors import InvalidInputError

CFG = StftConfig()


def naive_stft(x: np.ndarray, cfg: StftConfig) -> np.ndarray:
    """Frame-by-frame DFT double loop on the same padded framing."""
    win, hop, n = cfg.win_length, cfg.hop_length, cfg.fft_size
    frames = cfg.num_frames(len(x))
    front = win - hop
    padded = np.zeros((frames - 1) * hop + win)
    padded[front : front + len(x)] = x
    w = analysis_window(cfg).numpy()
    out = np.zeros((cfg.bins, frames), dtype=complex)
    k = np.arange(win)
    for t in range(frames):
        seg = padded[t * hop : t * hop + win] * w
        for f in range(cfg.bins):
            out[f, t] = np.sum(seg * np.exp(-2j * np.pi * f * k / n))
    return out


def overlap_add_inverse(spec: np.ndarray, cfg: StftConfig, length: int) -> np.ndarray:
    """Weighted overlap-add written out with explicit loops."""
    win, hop, n = cfg.win_length, cfg.hop_length, cfg.fft_size
    w = analysis_window(cfg).numpy()
    frames = spec.shape[1]
    total = (frames - 1) * hop + win
    acc = np.zeros(total)
    norm = np.zeros(total)
    for t in range(frames):
        seg = np.fft.irfft(spec[:, t], n=n)[:win]
        acc[t * hop : t * hop + win] += seg * w
        norm[t * hop : t * hop + win] += w**2
    front = win - hop
    return acc[front : front + length] / norm[front : front + length]


def test_bins_at_16k():
    assert CFG.bins == 161
    assert StftConfig.for_rate(8000).bins == 81


def test_four_seconds_gives_401_frames():
    spec = stft(AudioClip(np.zeros(64000), 16000), CFG)
    assert spec.data.shape == (1, 2, 161, 401)
    assert CFG.num_frames(64000) == 401


def test_zero_clip_zero_spectrogram():
    spec = stft(AudioClip(np.zeros(16000), 16000), CFG)
    assert spec.data.shape[:3] == (1, 2, 161)
    assert torch.count_nonzero(spec.data) == 0


def test_sinusoid_matches_naive_dft():
    k = 17
    t = np.arange(1600)
    x = np.cos(2 * np.pi * k * t / CFG.fft_size)
    spec = stft(AudioClip(x, 16000), CFG).complex()[0].numpy()
    ref = naive_stft(x, CFG)
    assert np.max(np.abs(spec - ref)) < 1e-6
    mid = spec[:, 5]
    assert np.argmax(np.abs(mid)) == k


def test_roundtrip_and_overlap_add_oracle():
    rng = np.random.default_rng(0)
    x = rng.standard_normal(4000)
    spec = stft(AudioClip(x, 16000), CFG)
    y = istft(spec).samples
    assert len(y) == len(x)
    assert np.linalg.norm(y - x) / np.linalg.norm(x) < 1e-6
    oracle = overlap_add_inverse(spec.complex()[0].numpy(), CFG, len(x))
    assert np.max(np.abs(y - oracle)) < 1e-9


def test_zero_spectrogram_inverts_to_zero():
    data = torch.zeros(1, 2, 161, CFG.num_frames(1234), dtype=torch.float64)
    y = istft(ComplexSpectrogram(data, CFG, 1234))
    assert len(y) == 1234 and not np.any(y.samples)


@settings(max_examples=30, deadline=None)
@given(n=st.integers(1, 3000), seed=st.integers(0, 2**31 - 1))
def test_roundtrip_any_length(n, seed):
    x = np.random.default_rng(seed).standard_normal(n)
    y = istft(stft(AudioClip(x, 16000), CFG)).samples
    assert np.linalg.norm(y - x) <= 1e-6 * np.linalg.norm(x) + 1e-12


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), a=st.floats(-3, 3), b=st.floats(-3, 3))
def test_linearity(seed, a, b):
    rng = np.random.default_rng(seed)
    x, y = rng.standard_normal(800), rng.standard_normal(800)
    lhs = stft_tensor(torch.from_numpy(a * x + b * y), CFG)
    rhs = a * stft_tensor(torch.from_numpy(x), CFG) + b * stft_tensor(torch.from_numpy(y), CFG)
    assert torch.max(torch.abs(lhs - rhs)) < 1e-6


def test_parseval_on_white_noise():
    # sqrt-Hann^2 overlap-adds to one at 50% hop, so frame energies sum to signal energy
    x = np.random.default_rng(1).standard_normal(16000)
    z = stft(AudioClip(x, 16000), CFG).complex()[0].numpy()
    n = CFG.fft_size
    weights = np.full(CFG.bins, 2.0)
    weights[0] = weights[-1] = 1.0
    spec_energy = np.sum(weights[:, None] * np.abs(z) ** 2) / n
    assert spec_energy == pytest.approx(np.sum(x**2), rel=1e-9)


def test_batched_transform_matches_single():
    x = torch.randn(3, 2000, dtype=torch.float64)
    batched = stft_tensor(x, CFG)
    for i in range(3):
        assert torch.allclose(batched[i], stft_tensor(x[i], CFG)[0])
    back = istft_tensor(batched, CFG, 2000)
    assert torch.allclose(back, x, atol=1e-12)


def test_errors():
    with pytest.raises(InvalidInputError):
        stft(AudioClip(np.zeros(0), 16000), CFG)
    with pytest.raises(InvalidInputError):
        AudioClip(np.array([0.0, np.nan]), 16000)
    with pytest.raises(InvalidInputError):
        AudioClip(np.zeros(4), 0)
    with pytest.raises(InvalidInputError):
        StftConfig(hop_ms=30.0)
    with pytest.raises(InvalidInputError):
        StftConfig(fft_size=128)
    spec = stft(AudioClip(np.ones(1000), 16000), CFG)
    with pytest.raises(InvalidInputError):
        istft_tensor(spec.data, CFG, 5000)
    with pytest.raises(InvalidInputError):
        ComplexSpectrogram(torch.zeros(1, 3, 161, 4), CFG, 100)


def test_wav_roundtrip_and_resample(tmp_path):
    x = 0.5 * np.sin(2 * np.pi * 440 * np.arange(8000) / 8000)
    write_wav(tmp_path / "a.wav", AudioClip(x, 8000), fmt="int16")
    back = load_wav(tmp_path / "a.wav", target_rate=8000)
    assert np.max(np.abs(back.samples - x)) < 1e-4
    up = load_wav(tmp_path / "a.wav", target_rate=16000)
    assert up.sample_rate == 16000 and len(up) == 16000
    write_wav(tmp_path / "b.wav", AudioClip(x, 8000))
    assert np.allclose(load_wav(tmp_path / "b.wav", 8000).samples, x, atol=1e-7)
