"""Joint target-speaker extraction / personal VAD network.

Data flow (all feature maps are ``[B, channels, F, frames]``)::

    m, r --STFT--> m_RI, r_RI --shared Conv2d--> E_m, E_r
    E_m (query), E_r (key/value) --cross attention--> E_spk      (frames of E_m)
    [E_m, E_spk] --concat or FiLM--> E_f --GridNet blocks--> E_o
    E_o --TConv2d--> D_tse                        (complex spectrogram estimate)
    E_o --TConv2d, Conv1d over F--> PVAD logits   (one per STFT frame)
    sigmoid(logits) --TConv1d, ReLU--> gate;  waveform = iSTFT(D_tse * gate)
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Optional

import torch
import torch.nn as nn
import torch.nn.functional as F

from .audio import StftConfig, istft_tensor, stft_tensor
from .errors import InvalidInputError


@dataclass
class ModelConfig:
    channels: int = 128
    num_blocks: int = 6
    blstm_hidden: int = 256
    attn_heads: int = 4
    attn_ffn_dim: int = 512
    attn_qk_dim: int = 512
    unfold_kernel: int = 1
    unfold_stride: int = 1
    fusion_mode: str = "concat"
    use_interaction: bool = True
    freq_bins: int = 161

    def __post_init__(self):
        problems = []
        for name in ("channels", "num_blocks", "blstm_hidden", "attn_heads", "attn_ffn_dim",
                     "attn_qk_dim", "unfold_kernel", "unfold_stride", "freq_bins"):
            if getattr(self, name) <= 0:
                problems.append(f"{name} must be positive")
        if self.unfold_kernel < self.unfold_stride:
            problems.append("unfold_kernel must be >= unfold_stride")
        if self.fusion_mode not in ("concat", "film"):
            problems.append(f"fusion_mode must be 'concat' or 'film', got {self.fusion_mode!r}")
        if not problems:
            if self.channels % self.attn_heads:
                problems.append("channels must be divisible by attn_heads")
            if self.fused_channels % self.attn_heads:
                problems.append("fused channels must be divisible by attn_heads")
        if problems:
            raise InvalidInputError("; ".join(problems))

    @property
    def fused_channels(self) -> int:
        return 2 * self.channels if self.fusion_mode == "concat" else self.channels

    @classmethod
    def full(cls, **kw) -> "ModelConfig":
        return cls(**kw)

    @classmethod
    def desk(cls, **kw) -> "ModelConfig":
        base = dict(channels=16, num_blocks=2, blstm_hidden=32, attn_heads=2, attn_ffn_dim=64,
                    attn_qk_dim=64, freq_bins=81)
        base.update(kw)
        return cls(**base)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class ModelOutput:
    tse_spec: torch.Tensor     # [B, 2, F, L], before gating
    pvad_logits: torch.Tensor  # [B, 1, L]
    waveform: torch.Tensor     # [B, T_m]
    gate: Optional[torch.Tensor] = None  # [B, 1, L] when the interaction module is on


def padded_length(n: int, kernel: int, stride: int) -> int:
    """Smallest length >= n that the unfold with (kernel, stride) tiles exactly."""
    return math.ceil(max(n - kernel, 0) / stride) * stride + kernel


class LayerNormCF(nn.Module):
    """Layer norm over the (channel, frequency) plane of each frame."""

    def __init__(self, channels: int, freq: int, eps: float = 1e-5):
        super().__init__()
        self.weight = nn.Parameter(torch.ones(1, channels, freq, 1))
        self.bias = nn.Parameter(torch.zeros(1, channels, freq, 1))
        self.eps = eps

    def forward(self, x):
        mu = x.mean(dim=(1, 2), keepdim=True)
        var = ((x - mu) ** 2).mean(dim=(1, 2), keepdim=True)
        return (x - mu) / torch.sqrt(var + self.eps) * self.weight + self.bias


def _proj(in_ch: int, out_ch: int, freq: int) -> nn.Sequential:
    return nn.Sequential(nn.Conv2d(in_ch, out_ch, 1), nn.PReLU(), LayerNormCF(out_ch, freq))


class FrameAttention(nn.Module):
    """Multi-head attention with frames as tokens.

    Each head projects the input with 1x1 convs (+PReLU, layer norm over
    channel x frequency); a token is the flattened ``channels x F`` slice of
    one frame.  Queries come from ``x``, keys and values from ``context`` (pass
    the same tensor for self-attention), so the output keeps the frame count of
    ``x`` whatever the context length.  A position-wise feed-forward layer is
    added on top of the attention output.  No input residual is applied here.
    """

    def __init__(self, channels: int, freq: int, heads: int, qk_dim: int, ffn_dim: int):
        super().__init__()
        self.heads = heads
        self.qk_ch = max(1, math.ceil(qk_dim / freq))
        self.v_ch = channels // heads
        self.query = nn.ModuleList(_proj(channels, self.qk_ch, freq) for _ in range(heads))
        self.key = nn.ModuleList(_proj(channels, self.qk_ch, freq) for _ in range(heads))
        self.value = nn.ModuleList(_proj(channels, self.v_ch, freq) for _ in range(heads))
        self.out = _proj(channels, channels, freq)
        self.ffn = nn.Sequential(nn.Conv2d(channels, ffn_dim, 1), nn.ReLU(), nn.Conv2d(ffn_dim, channels, 1))

    def forward(self, x: torch.Tensor, context: torch.Tensor, return_weights: bool = False):
        B, C, Fq, L = x.shape
        Lc = context.shape[-1]
        heads, weights = [], []
        for q_proj, k_proj, v_proj in zip(self.query, self.key, self.value):
            q = q_proj(x).permute(0, 3, 1, 2).reshape(B, L, -1)
            k = k_proj(context).permute(0, 3, 1, 2).reshape(B, Lc, -1)
            v = v_proj(context).permute(0, 3, 1, 2).reshape(B, Lc, -1)
            w = torch.softmax(q @ k.transpose(1, 2) / math.sqrt(q.shape[-1]), dim=-1)
            heads.append((w @ v).reshape(B, L, self.v_ch, Fq).permute(0, 2, 3, 1))
            weights.append(w)
        a = self.out(torch.cat(heads, dim=1))
        y = a + self.ffn(a)
        if return_weights:
            return y, torch.stack(weights, dim=1)
        return y


class FiLM(nn.Module):
    """gamma(E_spk) * E_m + beta(E_spk) with per-channel 1x1 affine maps."""

    def __init__(self, channels: int):
        super().__init__()
        self.gamma = nn.Conv2d(channels, channels, 1)
        self.beta = nn.Conv2d(channels, channels, 1)

    def forward(self, e_m, e_spk):
        return self.gamma(e_spk) * e_m + self.beta(e_spk)


class GridNetBlock(nn.Module):
    """Full-band BLSTM (along F), sub-band BLSTM (along frames), then frame self-attention."""

    def __init__(self, channels: int, freq: int, cfg: ModelConfig):
        super().__init__()
        ks, hs, hidden = cfg.unfold_kernel, cfg.unfold_stride, cfg.blstm_hidden
        self.ks, self.hs = ks, hs
        self.full_norm = nn.LayerNorm(channels)
        self.full_rnn = nn.LSTM(channels * ks, hidden, batch_first=True, bidirectional=True)
        self.full_proj = nn.ConvTranspose1d(2 * hidden, channels, ks, stride=hs)
        self.sub_norm = nn.LayerNorm(channels)
        self.sub_rnn = nn.LSTM(channels * ks, hidden, batch_first=True, bidirectional=True)
        self.sub_proj = nn.ConvTranspose1d(2 * hidden, channels, ks, stride=hs)
        self.attn = FrameAttention(channels, freq, cfg.attn_heads, cfg.attn_qk_dim, cfg.attn_ffn_dim)

    def _scan(self, seq, norm, rnn, proj):
        # seq: [N, length, C] -> residual branch [N, C, length]
        n, length, c = seq.shape
        u = norm(seq).transpose(1, 2).unsqueeze(-1)  # [N, C, length, 1]
        u = F.unfold(u, (self.ks, 1), stride=(self.hs, 1))  # [N, C*ks, windows]
        h, _ = rnn(u.transpose(1, 2))
        return proj(h.transpose(1, 2))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        B, C, Fq, L = x.shape
        Fp, Lp = padded_length(Fq, self.ks, self.hs), padded_length(L, self.ks, self.hs)
        x = F.pad(x, (0, Lp - L, 0, Fp - Fq))
        seq = x.permute(0, 3, 2, 1).reshape(B * Lp, Fp, C)
        y = self._scan(seq, self.full_norm, self.full_rnn, self.full_proj)
        x = x + y.reshape(B, Lp, C, Fp).permute(0, 2, 3, 1)
        seq = x.permute(0, 2, 3, 1).reshape(B * Fp, Lp, C)
        y = self._scan(seq, self.sub_norm, self.sub_rnn, self.sub_proj)
        x = x + y.reshape(B, Fp, C, Lp).permute(0, 2, 1, 3)
        x = x[:, :, :Fq, :L]
        return x + self.attn(x, x)


class USEFTP(nn.Module):
    def __init__(self, cfg: ModelConfig, stft_cfg: StftConfig):
        super().__init__()
        if stft_cfg.bins != cfg.freq_bins:
            raise InvalidInputError(f"STFT gives {stft_cfg.bins} bins but the model expects {cfg.freq_bins}")
        self.cfg = cfg
        self.stft_cfg = stft_cfg
        C, D, Fq = cfg.channels, cfg.fused_channels, cfg.freq_bins
        self.encoder = nn.Conv2d(2, C, 3, padding=1)
        self.cmha = FrameAttention(C, Fq, cfg.attn_heads, cfg.attn_qk_dim, cfg.attn_ffn_dim)
        self.film = FiLM(C) if cfg.fusion_mode == "film" else None
        self.blocks = nn.ModuleList(GridNetBlock(D, Fq, cfg) for _ in range(cfg.num_blocks))
        self.tse_decoder = nn.ConvTranspose2d(D, 2, 3, padding=1)
        self.pvad_tconv = nn.ConvTranspose2d(D, 1, 3, padding=1)
        self.pvad_conv = nn.Conv1d(Fq, 1, 2)
        self.im_tconv = nn.ConvTranspose1d(1, 1, 2) if cfg.use_interaction else None
        # False cuts the gate path off from the PVAD head (TSE-only training)
        self.pvad_feedback_grad = True
        self.reset_parameters()

    def reset_parameters(self):
        for mod in self.modules():
            if isinstance(mod, (nn.Conv1d, nn.Conv2d, nn.ConvTranspose1d, nn.ConvTranspose2d, nn.Linear)):
                mod.reset_parameters()
                nn.init.zeros_(mod.bias)
            elif isinstance(mod, nn.LSTM):
                for name, p in mod.named_parameters():
                    if name.startswith("weight_hh"):
                        for gate in p.data.chunk(4, 0):
                            nn.init.orthogonal_(gate)
                    elif name.startswith("bias"):
                        nn.init.zeros_(p)
        if self.film is not None:
            nn.init.ones_(self.film.gamma.bias)
        if self.im_tconv is not None:
            # positive start keeps the ReLU gate open; averaging adjacent frame probabilities
            nn.init.constant_(self.im_tconv.weight, 0.5)

    # -- stages ---------------------------------------------------------

    def encode(self, m_ri: torch.Tensor, r_ri: torch.Tensor):
        if m_ri.shape[2] != r_ri.shape[2]:
            raise InvalidInputError(f"frequency axes differ: {m_ri.shape[2]} vs {r_ri.shape[2]}")
        return self.encoder(m_ri), self.encoder(r_ri)

    def condition(self, e_m: torch.Tensor, e_r: torch.Tensor) -> torch.Tensor:
        if e_r.shape[-1] == 0:
            raise InvalidInputError("reference has no frames")
        if e_m.shape[1:3] != e_r.shape[1:3]:
            raise InvalidInputError("channel/frequency axes of mixture and reference encodings differ")
        return self.cmha(e_m, e_r)

    def fuse(self, e_m: torch.Tensor, e_spk: torch.Tensor) -> torch.Tensor:
        if e_m.shape != e_spk.shape:
            raise InvalidInputError(f"fusion inputs differ in shape: {tuple(e_m.shape)} vs {tuple(e_spk.shape)}")
        if self.film is None:
            return torch.cat([e_m, e_spk], dim=1)
        return self.film(e_m, e_spk)

    def separate(self, e_f: torch.Tensor) -> torch.Tensor:
        for block in self.blocks:
            e_f = block(e_f)
        return e_f

    def tse_decode(self, e_o: torch.Tensor) -> torch.Tensor:
        return self.tse_decoder(e_o)

    def pvad_decode(self, e_o: torch.Tensor) -> torch.Tensor:
        d = self.pvad_tconv(e_o)[:, 0]  # [B, F, L]
        return self.pvad_conv(F.pad(d, (0, 1)))  # kernel 2 with one trailing pad frame keeps L

    def gate(self, pvad_logits: torch.Tensor) -> torch.Tensor:
        L = pvad_logits.shape[-1]
        g = F.relu(self.im_tconv(torch.sigmoid(pvad_logits)))
        if g.shape[-1] < L:
            raise RuntimeError(f"internal invariant violated: gate has {g.shape[-1]} frames, need {L}")
        return g[..., :L]

    def interact(self, tse_spec: torch.Tensor, pvad_logits: torch.Tensor, length: int):
        """Gate the spectrogram with upsampled PVAD probabilities and resynthesize."""
        if self.im_tconv is None:
            return istft_tensor(tse_spec, self.stft_cfg, length), None
        g = self.gate(pvad_logits if self.pvad_feedback_grad else pvad_logits.detach())
        if g.shape[-1] != tse_spec.shape[-1]:
            raise RuntimeError("internal invariant violated: gate and spectrogram frame counts differ")
        return istft_tensor(tse_spec * g.unsqueeze(2), self.stft_cfg, length), g

    def forward(self, mixture: torch.Tensor, reference: torch.Tensor) -> ModelOutput:
        """``mixture`` [B, T_m] and ``reference`` [B, T_r] waveforms at the STFT rate."""
        if mixture.ndim == 1:
            mixture = mixture.unsqueeze(0)
        if reference.ndim == 1:
            reference = reference.unsqueeze(0)
        if reference.shape[-1] == 0:
            raise InvalidInputError("reference is empty")
        dtype = next(self.parameters()).dtype
        mixture, reference = mixture.to(dtype), reference.to(dtype)
        length = mixture.shape[-1]
        scale = mixture.std(dim=-1, keepdim=True).clamp_min(1e-8)
        r_scale = reference.std(dim=-1, keepdim=True).clamp_min(1e-8)
        m_ri = stft_tensor(mixture / scale, self.stft_cfg)
        r_ri = stft_tensor(reference / r_scale, self.stft_cfg)
        e_m, e_r = self.encode(m_ri, r_ri)
        e_spk = self.condition(e_m, e_r)
        e_o = self.separate(self.fuse(e_m, e_spk))
        tse_spec = self.tse_decode(e_o)
        logits = self.pvad_decode(e_o)
        wave, g = self.interact(tse_spec, logits, length)
        return ModelOutput(tse_spec, logits, wave * scale, g)
