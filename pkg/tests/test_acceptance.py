"""Acceptance criteria, one test each; every test records a PASS/FAIL verdict line.

Run with ``pytest tests/test_acceptance.py -v``; the verdicts are repeated in the
terminal summary under "acceptance criteria".
"""

import json
import time
from pathlib import Path

import jsonschema
import numpy as np
import pytest
import torch

from test_losses import grad_rel_error
from test_metrics import brute_der
from test_model import tiny_gradient_check
from useftp import cli, metrics, training
from useftp.audio import StftConfig, istft_tensor, stft_tensor
from useftp.losses import LossWeights, power_loss, pvad_bce, scene_aware_tse_loss, si_sdr
from useftp.model import USEFTP, ModelConfig, ModelOutput
from useftp.synth import SyntheticSpeakerPool, synthesize_dataset
from useftp.timeline import ActivityTimeline, rasterize_vad, segment_scenes

ROOT = Path(__file__).resolve().parents[1]
DESK = ROOT / "configs" / "desk.toml"
RATIOS = [0.0, 0.2, 0.4, 0.6, 0.8, 1.0]


def spaced_timelines(rng, k, duration, min_len=0.1):
    """Random speaker timelines whose spans and gaps are all at least ``min_len`` long."""
    tls = []
    for s in range(k):
        spans, t = [], rng.uniform(0, 0.5)
        while True:
            length = rng.uniform(min_len, 1.2)
            if t + length > duration:
                break
            spans.append((t, t + length))
            t += length + rng.uniform(min_len, 1.0)
        tls.append(ActivityTimeline(spans, duration, f"s{s}"))
    return tls


# 1 ---------------------------------------------------------------------------------------


def test_criterion_1_der_oracle(verdict):
    rng = np.random.default_rng(2024)
    started = time.monotonic()
    worst, perfect_ok, cases = 0.0, True, 0
    while cases < 100:
        duration = 3.0
        ref = spaced_timelines(rng, int(rng.integers(1, 4)), duration)
        if sum(tl.active_time for tl in ref) == 0:
            continue
        hyp = spaced_timelines(rng, int(rng.integers(0, 4)), duration)
        oracle = brute_der(ref, hyp, 300)
        r = metrics.der(ref, hyp, collar_s=0.0, median_frames=0)
        got = (r.miss, r.false_alarm, r.confusion)
        worst = max([worst, *(abs(a - b) for a, b in zip(got, oracle)), abs(r.der - sum(oracle))])
        p = metrics.der(ref, ref, collar_s=0.0, median_frames=11)
        perfect_ok &= p.der == 0.0
        cases += 1
    elapsed = time.monotonic() - started
    ok = worst < 1e-9 and perfect_ok and elapsed < 60
    verdict(1, ok, f"max |DER component - brute force| = {worst:.2e} over {cases} cases, "
                   f"perfect hypothesis DER=0: {perfect_ok}, {elapsed:.1f} s")
    assert ok


# 2 ---------------------------------------------------------------------------------------


def scene_instance(g, n=400, sr=1000):
    """Random target with silent spans, its scene partition and a noisy estimate."""
    rng = np.random.default_rng(int(torch.randint(0, 2**31 - 1, (1,), generator=g)))
    duration = n / sr
    cut = sorted(rng.uniform(0.05, duration - 0.05, 2))
    tl = ActivityTimeline([(0.0, cut[0]), (cut[1], duration)] if rng.random() < 0.5 else [(cut[0], cut[1])],
                          duration)
    tgt = torch.randn(n, generator=g, dtype=torch.float64)
    mask = torch.tensor([tl.is_active((i + 0.5) / sr) for i in range(n)], dtype=torch.float64)
    tgt = tgt * mask
    est = tgt + 0.3 * torch.randn(n, generator=g, dtype=torch.float64)
    return est, tgt, segment_scenes(tl)


def test_criterion_2_loss_gradients(verdict):
    started = time.monotonic()
    g = torch.Generator().manual_seed(11)
    w = LossWeights(alpha2=0.5)
    worst = {}
    for _ in range(20):
        s = torch.randn(64, generator=g, dtype=torch.float64)
        e = s + 0.5 * torch.randn(64, generator=g, dtype=torch.float64)
        zero = torch.zeros(64, dtype=torch.float64)
        y = (torch.rand(64, generator=g) > 0.5).double()
        z = 2 * torch.randn(64, generator=g, dtype=torch.float64)
        est, tgt, scenes = scene_instance(g)
        errs = {
            "si_sdr": grad_rel_error(lambda x: si_sdr(x, s), e),
            "power": grad_rel_error(lambda x: power_loss(x, zero), e),
            "scene_aware": grad_rel_error(lambda x: scene_aware_tse_loss(x, tgt, scenes, w, 1000)[0], est),
            "bce": grad_rel_error(lambda x: pvad_bce(x, y), z),
        }
        for k, v in errs.items():
            worst[k] = max(worst.get(k, 0.0), v)
    elapsed = time.monotonic() - started
    ok = max(worst.values()) < 1e-4 and elapsed < 60
    verdict(2, ok, "max relative gradient error " + ", ".join(f"{k}={v:.1e}" for k, v in worst.items())
            + f", {elapsed:.1f} s")
    assert ok


# 3 ---------------------------------------------------------------------------------------


def test_criterion_3_si_sdr_invariance(verdict):
    g = torch.Generator().manual_seed(3)
    worst = 0.0
    for _ in range(50):
        s = torch.randn(1000, generator=g, dtype=torch.float64)
        e = s + torch.rand(1, generator=g, dtype=torch.float64) * torch.randn(1000, generator=g, dtype=torch.float64)
        base = float(si_sdr(e, s))
        for alpha in (1e-3, 0.5, 2.0, 1e3):
            worst = max(worst, abs(float(si_sdr(alpha * e, s)) - base))
    ok = worst < 1e-9
    verdict(3, ok, f"max |si_sdr(a*e, s) - si_sdr(e, s)| = {worst:.2e} over 50 pairs x 4 scales")
    assert ok


# 4 ---------------------------------------------------------------------------------------


def test_criterion_4_model_contracts(verdict):
    started = time.monotonic()
    stft_cfg = StftConfig.for_rate(16000)
    torch.manual_seed(0)
    model = USEFTP(ModelConfig.full(), stft_cfg).eval()
    problems = []
    for t_m, t_r, zero_gate in [(16000, 24000, False), (20800, 8000, True)]:
        if zero_gate:
            with torch.no_grad():
                model.im_tconv.weight.zero_()
                model.im_tconv.bias.zero_()
        with torch.no_grad():
            out = model(torch.randn(1, t_m), torch.randn(1, t_r))
        L = stft_cfg.num_frames(t_m)
        assert L != stft_cfg.num_frames(t_r)
        if tuple(out.tse_spec.shape) != (1, 2, 161, L):
            problems.append(f"tse_spec {tuple(out.tse_spec.shape)}")
        if tuple(out.pvad_logits.shape) != (1, 1, L):
            problems.append(f"pvad_logits {tuple(out.pvad_logits.shape)}")
        if tuple(out.waveform.shape) != (1, t_m):
            problems.append(f"waveform {tuple(out.waveform.shape)}")
        if zero_gate and torch.count_nonzero(out.waveform):
            problems.append("gate=0 gave a nonzero waveform")
    grad_err = tiny_gradient_check()
    elapsed = time.monotonic() - started
    ok = not problems and grad_err < 1e-3 and elapsed < 300
    verdict(4, ok, f"shapes/zero-gate {'ok' if not problems else problems}, tiny-config gradient "
                   f"relative error {grad_err:.1e}, {elapsed:.0f} s")
    assert ok


# 5 ---------------------------------------------------------------------------------------


def test_criterion_5_stft_roundtrip(verdict):
    cfg = StftConfig.for_rate(16000)
    rng = np.random.default_rng(5)
    worst = 0.0
    for _ in range(100):
        n = int(rng.integers(16000, 64001))
        x = torch.tensor(rng.standard_normal(n))
        y = istft_tensor(stft_tensor(x[None], cfg), cfg, n)[0]
        worst = max(worst, float(torch.linalg.norm(y - x) / torch.linalg.norm(x)))
    ok = worst < 1e-6
    verdict(5, ok, f"max relative L2 round-trip error {worst:.2e} over 100 clips of 1-4 s")
    assert ok


# 6 ---------------------------------------------------------------------------------------


@pytest.fixture(scope="module")
def desk_data():
    pool = SyntheticSpeakerPool(sample_rate=8000)
    train = synthesize_dataset(RATIOS, 34, seed=1, pool=pool, sample_rate=8000)[:200]
    held_out = synthesize_dataset(RATIOS, 5, seed=2, pool=pool, sample_rate=8000)
    return train, held_out


def test_criterion_6_desk_learning(verdict, desk_data, tmp_path_factory):
    train, held_out = desk_data
    cfg = cli.resolve_config(str(DESK))
    run_dir = tmp_path_factory.mktemp("desk_run")
    torch.set_num_threads(1)  # the budget is stated in CPU-minutes
    started = time.monotonic()
    model, states = cli.run_stages(cfg, train, run_dir)
    train_minutes = (time.monotonic() - started) / 60
    protocol = training.EvalProtocol(compute_sdr=False)
    stage1, _ = training.load_checkpoint(states[0].checkpoint_path)
    r1 = training.evaluate(stage1, held_out, protocol)
    r2 = training.evaluate(model, held_out, protocol)
    rt = training.evaluate(model, train, protocol)
    out = ROOT / "acceptance_artifacts" / "desk"
    training.write_report(r2, out)
    (out / "stage1_metrics.json").write_text(training.report_json(r1) + "\n")
    (out / "train_metrics.json").write_text(training.report_json(rt) + "\n")

    sdri = rt["overall"]["tse"]["si_sdri"]
    f1 = r2["overall"]["pvad"]["f1"]
    p1, p2 = r1["overall"]["tse"]["ts_power"], r2["overall"]["tse"]["ts_power"]
    checks = {"a": sdri >= 5.0, "b": f1 >= 0.90, "c": p1 - p2 >= 6.0, "budget": train_minutes <= 30.0}
    ok = all(checks.values())
    verdict(6, ok, f"(a) train SI-SDRi {sdri:.2f} dB [{checks['a']}], (b) held-out F1 {f1:.3f} [{checks['b']}], "
                   f"(c) TS power stage 1 {p1:.2f} -> stage 2 {p2:.2f} dB/s, drop {p1 - p2:.2f} [{checks['c']}], "
                   f"training {train_minutes:.1f} CPU-min [{checks['budget']}]")
    assert ok


# 7 ---------------------------------------------------------------------------------------


class OverlapBlindOracle:
    """Stands in for a model: clean target waveform, PVAD that misses every overlapped frame.

    Its diarization error grows with overlap by construction, which gives the
    sweep a known trend to check the plumbing against.
    """

    def __init__(self, samples, stft_cfg):
        self.stft_cfg = stft_cfg
        self.table = {}
        for s in samples:
            frames = stft_cfg.num_frames(len(s.mixture.samples))
            tracks = [rasterize_vad(tl, stft_cfg.hop_ms, frames, offset=0.0) for tl in s.timelines]
            overlapped = np.sum(tracks, axis=0) >= 2
            for i, ref in enumerate(s.references):
                labels = np.where(overlapped, 0, tracks[i])
                logits = np.where(labels > 0, 20.0, -20.0)
                self.table[ref.samples.astype(np.float32).tobytes()] = (s.sources[i].samples, logits)

    def eval(self):
        return self

    def __call__(self, mixture, reference):
        wave, logits = self.table[reference[0].numpy().tobytes()]
        return ModelOutput(
            waveform=torch.tensor(wave)[None],
            pvad_logits=torch.tensor(logits)[None, None],
            tse_spec=None,
        )


def test_criterion_7_overlap_sweep(verdict, tmp_path):
    stft_cfg = StftConfig.for_rate(8000)
    pool = SyntheticSpeakerPool(sample_rate=8000)
    samples = synthesize_dataset(RATIOS, 3, seed=7, pool=pool, sample_rate=8000, clip_seconds=3.0)
    protocol = training.EvalProtocol(compute_sdr=False, buckets=tuple(RATIOS))
    problems = []

    oracle = training.evaluate(None, samples, training.EvalProtocol(oracle=True, buckets=tuple(RATIOS)), stft_cfg)
    injected = training.evaluate(OverlapBlindOracle(samples, stft_cfg), samples, protocol)
    for name, report in (("oracle", oracle), ("injected", injected)):
        try:
            jsonschema.validate(json.loads(training.report_json(report)), training.REPORT_SCHEMA)
        except jsonschema.ValidationError as exc:
            problems.append(f"{name} schema: {exc.message}")
        if sum(b["num_mixtures"] for b in report["buckets"]) != len(samples):
            problems.append(f"{name}: buckets do not partition the mixtures")
        if sum(b["num_targets"] for b in report["buckets"]) != report["overall"]["num_targets"]:
            problems.append(f"{name}: bucket targets do not sum to the total")
        paths = training.write_report(report, tmp_path / name)
        rows = [line.split(",") for line in paths["trend"].read_text().splitlines()[1:]]
        overlap = [float(r[2]) for r in rows]
        der = [float(r[3]) for r in rows]
        by_overlap = [d for _, d in sorted(zip(overlap, der), reverse=True)]
        if [float(r[0]) for r in rows] != sorted(float(r[0]) for r in rows):
            problems.append(f"{name}: trend rows not in bucket order")
        if overlap != sorted(overlap):
            problems.append(f"{name}: realized overlap not monotone in bucket")
        if any(b > a + 1e-12 for a, b in zip(by_overlap, by_overlap[1:])):
            problems.append(f"{name}: DER does not fall as overlap falls: {list(zip(overlap, der))}")
        if name == "oracle" and any(der):
            problems.append("oracle: nonzero DER")
    injected_trend = ", ".join(f"{b['realized_overlap']:.2f}:{b['diarization']['der']:.1f}%"
                               for b in injected["buckets"] if b["num_mixtures"])
    ok = not problems
    verdict(7, ok, f"schema valid, partition holds, injected overlap:DER trend {injected_trend}"
            if ok else "; ".join(problems))
    assert ok


# 8 ---------------------------------------------------------------------------------------


ARMS = {
    "joint": [],
    "only_tse": ["training.only_tse=true"],
    "only_pvad": ["training.only_pvad=true"],
    "no_im": ["model.use_interaction=false", "training.use_interaction=false"],
    "no_sl": ["training.use_scene_loss=false"],
}


def _head(model, names):
    return [p.detach().clone() for n in names for p in getattr(model, n).parameters()]


def test_criterion_8_ablation_harness(verdict, tmp_path, capsys):
    pool = SyntheticSpeakerPool(sample_rate=8000)
    data = tmp_path / "data"
    synth = synthesize_dataset(RATIOS, 2, seed=8, pool=pool, sample_rate=8000, clip_seconds=2.0)
    from useftp.synth import write_dataset

    manifest = write_dataset(synth, data)
    stft_cfg = StftConfig.for_rate(8000)
    problems, snapshots, summary = [], {}, {}
    for arm, extra in ARMS.items():
        overrides = [
            f"run.id={json.dumps(arm)}", f"data.train_manifest={json.dumps(str(manifest))}",
            "training.max_steps=4", "training.stage1_time_budget_s=600.0", "training.stage2_time_budget_s=600.0",
            "training.stage1_epochs=1", "training.stage2_epochs=1", *extra,
        ]
        args = ["train", "--config", str(DESK), "--out", str(tmp_path / "runs")]
        for o in overrides:
            args += ["--override", o]
        if cli.main(args) != 0:
            problems.append(f"{arm}: train failed: {capsys.readouterr().err.strip()[-300:]}")
            continue
        run = tmp_path / "runs" / arm
        snapshots[arm] = (run / "resolved_config.json").read_text()
        ev = tmp_path / "eval" / arm
        if cli.main(["eval", "--manifest", str(manifest), "--checkpoint", str(run / "final.ckpt"),
                     "--out", str(ev), "--override", "eval.compute_sdr=false"]) != 0:
            problems.append(f"{arm}: eval failed")
            continue
        report = json.loads((ev / "metrics.json").read_text())
        jsonschema.validate(report, training.REPORT_SCHEMA)
        summary[arm] = report["overall"]

        # fresh model with the same seed and config is the pre-training state of every head
        cfg = json.loads(snapshots[arm])
        mcfg = ModelConfig(**cfg["model"])
        initial = training.build_model(mcfg, stft_cfg, cfg["run"]["seed"])
        final, _ = training.load_checkpoint(run / "final.ckpt")
        if arm == "only_tse":
            if not all(torch.equal(a, b) for a, b in zip(_head(initial, ["pvad_tconv", "pvad_conv"]),
                                                        _head(final, ["pvad_tconv", "pvad_conv"]))):
                problems.append("only_tse changed the PVAD head")
            if all(torch.equal(a, b) for a, b in zip(_head(initial, ["encoder"]), _head(final, ["encoder"]))):
                problems.append("only_tse did not train the shared encoder")
        if arm == "only_pvad":
            if not all(torch.equal(a, b) for a, b in zip(_head(initial, ["tse_decoder"]),
                                                        _head(final, ["tse_decoder"]))):
                problems.append("only_pvad changed the TSE decoder")
        if arm == "no_im" and final.im_tconv is not None:
            problems.append("no_im model still has an interaction module")
    capsys.readouterr()
    if len(set(snapshots.values())) != len(ARMS):
        problems.append("resolved-config snapshots are not distinct")
    ok = not problems and len(summary) == len(ARMS)
    verdict(8, ok, f"{len(summary)} arms trained+evaluated ({', '.join(summary)}), distinct snapshots, "
                   f"isolation checks passed" if ok else "; ".join(problems))
    assert ok
