"""A short two-stage desk training run, then a bucketed evaluation.

Stage 1 trains the joint objective; stage 2 warm-starts from it and swaps
in the scene-aware extraction loss. The default budget is two minutes per
stage, which is enough to see PVAD learn and SI-SDRi turn positive. The
acceptance run uses the full budgets in configs/desk.toml.

    python demos/03_desk_training.py [seconds_per_stage] [out_dir]
"""

import sys
from pathlib import Path

import torch

from useftp import cli, training
from useftp.synth import SyntheticSpeakerPool, synthesize_dataset

budget = float(sys.argv[1]) if len(sys.argv) > 1 else 120.0
out = Path(sys.argv[2] if len(sys.argv) > 2 else "demo_run")
torch.set_num_threads(1)

root = Path(__file__).resolve().parents[1]
cfg = cli.resolve_config(str(root / "configs" / "desk.toml"), [
    f"training.stage1_time_budget_s={budget}", f"training.stage2_time_budget_s={budget}",
])
pool = SyntheticSpeakerPool(sample_rate=8000)
ratios = [0.0, 0.2, 0.4, 0.6, 0.8, 1.0]
train_set = synthesize_dataset(ratios, 10, seed=1, pool=pool, sample_rate=8000)
held_out = synthesize_dataset(ratios, 2, seed=2, pool=pool, sample_rate=8000)

model, states = cli.run_stages(cfg, train_set, out / "checkpoints", verbose=True)
protocol = training.EvalProtocol(compute_sdr=False)
stage1, _ = training.load_checkpoint(states[0].checkpoint_path)
for name, m in (("after stage 1", stage1), ("after stage 2", model)):
    o = training.evaluate(m, held_out, protocol)["overall"]
    print(f"{name}: SI-SDRi {o['tse']['si_sdri']:.2f} dB, PVAD F1 {o['pvad']['f1']:.3f}, "
          f"DER {o['diarization']['der']:.2f}%, TS power {o['tse']['ts_power']:.1f} dB/s")

report = training.evaluate(model, held_out, protocol)
paths = training.write_report(report, out / "eval")
print("per-bucket trend:")
print(paths["trend"].read_text())
