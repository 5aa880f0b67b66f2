"""Scoring a two-speaker conversation by hand.

We build reference and hypothesis activity timelines, look at the scene
partition that drives the scene-aware loss, and score diarization, PVAD,
SI-SDR and target-silent power on small signals where the answers are easy
to check in your head.
"""

import numpy as np
import torch

from useftp import metrics
from useftp.losses import LossWeights, scene_aware_tse_loss, si_sdr
from useftp.timeline import ActivityTimeline, rasterize_vad, segment_scenes

SR = 8000

# Alice talks for the first two seconds, Bob answers from 1.5 s to 4 s.
alice = ActivityTimeline([(0.0, 2.0)], 4.0, "alice")
bob = ActivityTimeline([(1.5, 4.0)], 4.0, "bob")
print("overlap ratio of the conversation:",
      round(0.5 / (alice.active_time + bob.active_time - 0.5), 3))

# A diarizer that ends Alice's turn 300 ms early and starts Bob 200 ms late.
hyp = [ActivityTimeline([(0.0, 1.7)], 4.0, "spk0"), ActivityTimeline([(1.7, 4.0)], 4.0, "spk1")]
report = metrics.der([alice, bob], hyp, collar_s=0.0, median_frames=11)
print(f"DER {report.der:.2f}% = miss {report.miss:.2f} + FA {report.false_alarm:.2f} "
      f"+ confusion {report.confusion:.2f}")

# Alice as the target: her scene partition is target-active then target-silent.
scenes = segment_scenes(alice)
for start, end, kind in scenes.segments:
    print(f"  {kind} {start:.2f}-{end:.2f} s")

# Frame labels on the 10 ms grid, and a PVAD output that is right except for 5 frames.
labels = rasterize_vad(alice, 10.0, 400, offset=0.0)
probs = labels.astype(float)
probs[195:200] = 0.2
pv = metrics.pvad_scores(probs, labels)
print(f"PVAD accuracy {pv.accuracy:.4f}, F1 {pv.f1:.4f}")

# Signals: Alice's speech is noise-like here; the estimate leaks a little of Bob everywhere.
rng = np.random.default_rng(0)
t = np.arange(int(4.0 * SR)) / SR
target = rng.standard_normal(len(t)) * (t < 2.0)
leak = 0.05 * rng.standard_normal(len(t))
estimate = target + leak
print(f"whole-clip SI-SDR {metrics.si_sdr_value(estimate, target):.2f} dB")
print(f"TS power of the estimate {metrics.ts_power(estimate, scenes, SR):.2f} dB/s "
      f"(leak only; a perfect extractor sits at the floor)")

value, parts = scene_aware_tse_loss(torch.tensor(estimate), torch.tensor(target), scenes, LossWeights(), SR)
print(f"scene-aware loss {float(value):.3f}: SI-SDR term {parts.si_sdr_term:.3f}, "
      f"power term {parts.power_term:.3f}")
print("si_sdr is blind to gain:", float(si_sdr(torch.tensor(3 * estimate), torch.tensor(target)))
      == float(si_sdr(torch.tensor(estimate), torch.tensor(target))))
