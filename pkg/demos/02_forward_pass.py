"""One mixture through an untrained desk-size model.

Shows what comes out of a forward pass: the pre-gate TSE spectrogram, the
per-frame PVAD logits, the multiplicative gate built from them, and the
final waveform. Then we force the gate shut and watch the output vanish.
"""

import torch

from useftp.audio import StftConfig
from useftp.model import USEFTP, ModelConfig
from useftp.synth import SyntheticSpeakerPool, synthesize_dataset

SR = 8000
torch.manual_seed(0)
sample = synthesize_dataset([0.4], 1, seed=3, pool=SyntheticSpeakerPool(sample_rate=SR), sample_rate=SR)[0]
print(f"mixture {sample.sample_id}: {sample.duration:.1f} s, realized overlap {sample.overlap_ratio:.2f}, "
      f"speakers {sample.speakers}")

stft_cfg = StftConfig.for_rate(SR)
model = USEFTP(ModelConfig.desk(unfold_kernel=4, unfold_stride=4), stft_cfg).eval()
print(f"desk model: {sum(p.numel() for p in model.parameters()):,} parameters, "
      f"{stft_cfg.bins} frequency bins")

mix = torch.tensor(sample.mixture.samples, dtype=torch.float32)[None]
ref = torch.tensor(sample.references[0].samples, dtype=torch.float32)[None]
with torch.no_grad():
    out = model(mix, ref)
print("tse_spec   ", tuple(out.tse_spec.shape), "(batch, real/imag, freq, frames)")
print("pvad_logits", tuple(out.pvad_logits.shape))
print("gate       ", tuple(out.gate.shape), f"mean {out.gate.mean():.3f} (untrained: about 0.5)")
print("waveform   ", tuple(out.waveform.shape), "same length as the mixture")

with torch.no_grad():
    model.im_tconv.weight.zero_()
    model.im_tconv.bias.zero_()
    shut = model(mix, ref)
print("gate forced to zero -> nonzero output samples:", int(torch.count_nonzero(shut.waveform)))
