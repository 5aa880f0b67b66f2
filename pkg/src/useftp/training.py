"""Two-stage training, checkpoints and per-overlap-bucket evaluation.

Stage 1 minimises ``-SI-SDR`` on whole crops plus PVAD BCE.  Stage 2 starts
from a stage-1 checkpoint and swaps the TSE term for the scene-aware
composition (SI-SDR on target-active spans, power on target-silent spans).
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np
import torch

from . import metrics
from .audio import StftConfig
from .errors import InvalidInputError
from .losses import LossWeights, total_loss
from .model import USEFTP, ModelConfig
from .synth import MixtureSample
from .timeline import TA, TS, ActivityTimeline, rasterize_vad, segment_scenes

log = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1
DEFAULT_BUCKETS = (0.0, 0.2, 0.4, 0.6, 0.8, 1.0)

# PVAD head: only the PVAD loss (and, through the gate, TSE) reaches these.
PVAD_HEAD = ("pvad_tconv.", "pvad_conv.")
TSE_HEAD = ("tse_decoder.", "im_tconv.")


@dataclass
class TrainConfig:
    stage: int = 1
    lr: float = 1e-4
    plateau_patience_epochs: int = 3
    lr_decay_factor: float = 0.5
    clip_seconds: Optional[float] = 4.0
    batch_size: int = 4
    max_epochs: int = 10
    max_steps: Optional[int] = None
    time_budget_s: Optional[float] = None
    weights: LossWeights = field(default_factory=LossWeights)
    use_interaction: bool = True
    use_scene_loss: bool = True
    only_tse: bool = False
    only_pvad: bool = False
    seed: int = 0
    grad_clip: float = 5.0
    adam_betas: tuple[float, float] = (0.9, 0.999)
    adam_eps: float = 1e-8

    def __post_init__(self):
        if isinstance(self.weights, dict):
            self.weights = LossWeights(**self.weights)
        self.adam_betas = tuple(self.adam_betas)
        problems = []
        if self.stage not in (1, 2):
            problems.append(f"stage must be 1 or 2, got {self.stage}")
        if self.lr <= 0:
            problems.append("lr must be positive")
        if not 0 < self.lr_decay_factor < 1:
            problems.append("lr_decay_factor must lie in (0, 1)")
        if self.clip_seconds is not None and self.clip_seconds <= 0:
            problems.append("clip_seconds must be positive (or None for whole clips)")
        if self.batch_size < 1:
            problems.append("batch_size must be at least 1")
        if self.only_tse and self.only_pvad:
            problems.append("only_tse and only_pvad are mutually exclusive")
        for name in ("max_steps", "time_budget_s"):
            v = getattr(self, name)
            if v is not None and (isinstance(v, bool) or not isinstance(v, (int, float)) or v <= 0):
                problems.append(f"{name} must be a positive number, got {v!r}")
        if problems:
            raise InvalidInputError("; ".join(problems))

    @property
    def effective_weights(self) -> LossWeights:
        w = self.weights
        if self.only_pvad:
            w = replace(w, lambda1=0.0)
        if self.only_tse:
            w = replace(w, lambda2=0.0)
        return w

    @property
    def scene_aware(self) -> bool:
        return self.stage == 2 and self.use_scene_loss

    def to_dict(self) -> dict:
        d = asdict(self)
        d["adam_betas"] = list(self.adam_betas)
        return d


@dataclass
class TrainState:
    epoch: int = 0
    step: int = 0
    best_validation_loss: float = math.inf
    epochs_since_improvement: int = 0
    current_lr: float = 1e-4
    num_decays: int = 0
    rng_state: Optional[dict] = None
    checkpoint_path: Optional[str] = None
    history: list = field(default_factory=list)


def lr_step(state: TrainState, validation_loss: float, config: TrainConfig) -> TrainState:
    """Plateau schedule: decay the learning rate after ``patience`` epochs without a new best."""
    if not math.isfinite(validation_loss):
        raise InvalidInputError(f"validation loss must be finite, got {validation_loss}")
    if validation_loss < state.best_validation_loss:
        return replace(state, best_validation_loss=validation_loss, epochs_since_improvement=0)
    waited = state.epochs_since_improvement + 1
    if waited >= config.plateau_patience_epochs:
        return replace(
            state,
            epochs_since_improvement=0,
            num_decays=state.num_decays + 1,
            current_lr=config.lr * config.lr_decay_factor ** (state.num_decays + 1),
        )
    return replace(state, epochs_since_improvement=waited)


# --- checkpoints ---------------------------------------------------------------


def save_checkpoint(path: Union[str, Path], model: USEFTP, extra: Optional[dict] = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {
        "version": CHECKPOINT_VERSION,
        "model_config": json.dumps(model.cfg.to_dict(), sort_keys=True),
        "stft_config": json.dumps(model.stft_cfg.to_dict(), sort_keys=True),
        "extra": json.dumps(extra or {}, sort_keys=True),
        "state_dict": {k: v.detach().clone() for k, v in model.state_dict().items()},
    }
    tmp = path.with_suffix(path.suffix + ".tmp")
    torch.save(payload, tmp)
    tmp.replace(path)
    return path


def load_checkpoint(path: Union[str, Path]) -> tuple[USEFTP, dict]:
    path = Path(path)
    if path.name == "best.ckpt" and path.stat().st_size < 1024:
        target = path.read_text().strip()
        if target and not target.startswith("PK"):
            path = path.parent / target
    payload = torch.load(path, map_location="cpu", weights_only=True)
    if "version" not in payload:
        raise InvalidInputError(f"{path}: checkpoint has no version field")
    if payload["version"] != CHECKPOINT_VERSION:
        raise InvalidInputError(f"{path}: unsupported checkpoint version {payload['version']}")
    model = USEFTP(ModelConfig(**json.loads(payload["model_config"])), StftConfig(**json.loads(payload["stft_config"])))
    model.load_state_dict(payload["state_dict"])
    return model, json.loads(payload.get("extra", "{}"))


# --- batching ------------------------------------------------------------------


@dataclass
class Example:
    mixture: np.ndarray
    reference: np.ndarray
    target: np.ndarray
    target_tl: ActivityTimeline


def examples_from(samples: Sequence[MixtureSample]) -> list[tuple[MixtureSample, int]]:
    """Every (mixture, speaker-as-target) pair."""
    return [(s, i) for s in samples for i in range(len(s.sources))]


def crop_example(sample: MixtureSample, target: int, clip_seconds: Optional[float], rng: Optional[np.random.Generator]) -> Example:
    """Crop to ``clip_seconds``; the crop always contains some target activity when the clip has any."""
    sr = sample.mixture.sample_rate
    total = len(sample.mixture)
    tl = sample.timelines[target]
    n = total if clip_seconds is None else min(total, int(round(clip_seconds * sr)))
    offset = 0
    if n < total:
        lo, hi = 0, total - n
        if tl.intervals and rng is not None:
            start, end = tl.intervals[int(rng.integers(len(tl.intervals)))]
            a, b = int(start * sr), int(end * sr)
            lo, hi = max(0, a - n + sr // 100), min(total - n, b - sr // 100)
            if hi < lo:
                lo, hi = 0, total - n
        offset = int(rng.integers(lo, hi + 1)) if rng is not None else lo
    t0, t1 = offset / sr, (offset + n) / sr
    intervals = [(max(s, t0) - t0, min(e, t1) - t0) for s, e in tl.intervals if e > t0 and s < t1]
    return Example(
        mixture=sample.mixture.samples[offset : offset + n],
        reference=sample.references[target].samples,
        target=sample.sources[target].samples[offset : offset + n],
        target_tl=ActivityTimeline(intervals, n / sr, tl.speaker),
    )


def collate(examples: Sequence[Example], stft_cfg: StftConfig, dtype=torch.float32):
    n_ref = min(len(e.reference) for e in examples)
    length = len(examples[0].mixture)
    frames = stft_cfg.num_frames(length)
    mix = torch.tensor(np.stack([e.mixture for e in examples]), dtype=dtype)
    ref = torch.tensor(np.stack([e.reference[:n_ref] for e in examples]), dtype=dtype)
    tgt = torch.tensor(np.stack([e.target for e in examples]), dtype=dtype)
    labels = torch.tensor(
        np.stack([rasterize_vad(e.target_tl, stft_cfg.hop_ms, frames, offset=0.0) for e in examples]), dtype=dtype
    )
    scenes = [segment_scenes(e.target_tl) for e in examples]
    return mix, ref, tgt, labels, scenes


def batch_loss(model: USEFTP, batch, config: TrainConfig):
    mix, ref, tgt, labels, scenes = batch
    out = model(mix, ref)
    return total_loss(
        out.waveform,
        out.pvad_logits,
        tgt,
        labels,
        config.effective_weights,
        scenes=scenes if config.scene_aware else None,
        sample_rate=model.stft_cfg.sample_rate,
        min_samples=model.stft_cfg.hop_length,
    )


def _has_target(sample, target) -> bool:
    return sample.timelines[target].active_time > 0 and np.any(sample.sources[target].samples != 0)


def validation_loss(model: USEFTP, samples: Sequence[MixtureSample], config: TrainConfig) -> float:
    model.eval()
    pairs = [(s, i) for s, i in examples_from(samples) if _has_target(s, i)]
    rng = np.random.default_rng(config.seed + 7919)  # fixed crops, same every epoch
    values = []
    with torch.no_grad():
        for k in range(0, len(pairs), config.batch_size):
            chunk = [crop_example(s, i, config.clip_seconds, rng) for s, i in pairs[k : k + config.batch_size]]
            value, _ = batch_loss(model, collate(chunk, model.stft_cfg), config)
            values.append(float(value) * len(chunk))
    model.train()
    return sum(values) / max(1, len(pairs))


# --- training ----------------------------------------------------------------------


class TrainingDiverged(RuntimeError):
    pass


def build_model(model_cfg: ModelConfig, stft_cfg: StftConfig, seed: int) -> USEFTP:
    torch.manual_seed(seed)
    return USEFTP(model_cfg, stft_cfg)


def _write_best_pointer(run_dir: Path, ckpt: Path) -> None:
    (run_dir / "best.ckpt").write_text(ckpt.name + "\n")


def train(
    config: TrainConfig,
    samples: Sequence[MixtureSample],
    model: Optional[USEFTP] = None,
    run_dir: Union[str, Path, None] = None,
    validation: Optional[Sequence[MixtureSample]] = None,
    init_checkpoint: Union[str, Path, None] = None,
    model_cfg: Optional[ModelConfig] = None,
    stft_cfg: Optional[StftConfig] = None,
) -> tuple[USEFTP, TrainState]:
    """Run one training stage; returns the trained model and final state.

    Stage 2 needs ``init_checkpoint`` (a stage-1 checkpoint) or an already
    warm ``model``.  Checkpoints go to ``run_dir/stage{S}_epoch{N}.ckpt`` and
    ``run_dir/best.ckpt`` names the best one; per-step logs go to
    ``run_dir/train_log.jsonl``.
    """
    if init_checkpoint is not None:
        model, _ = load_checkpoint(init_checkpoint)
    elif config.stage == 2 and model is None:
        raise InvalidInputError("stage 2 requires a stage-1 checkpoint (init_checkpoint)")
    if model is None:
        if model_cfg is None or stft_cfg is None:
            raise InvalidInputError("need model_cfg and stft_cfg to build a fresh model")
        model = build_model(
            replace(model_cfg, use_interaction=model_cfg.use_interaction and config.use_interaction), stft_cfg, config.seed)
    if config.only_tse:
        model.pvad_feedback_grad = False
    sample_rate = model.stft_cfg.sample_rate
    for s in samples:
        if s.mixture.sample_rate != sample_rate:
            raise InvalidInputError(f"sample {s.sample_id} at {s.mixture.sample_rate} Hz, model expects {sample_rate}")

    torch.manual_seed(config.seed)
    rng = np.random.default_rng(config.seed)
    optimizer = torch.optim.Adam(model.parameters(), lr=config.lr, betas=config.adam_betas, eps=config.adam_eps)
    state = TrainState(current_lr=config.lr)
    run_path = Path(run_dir) if run_dir is not None else None
    log_file = None
    if run_path is not None:
        run_path.mkdir(parents=True, exist_ok=True)
        log_file = open(run_path / "train_log.jsonl", "a")
    pairs = [(s, i) for s, i in examples_from(samples) if _has_target(s, i)]
    if not pairs:
        raise InvalidInputError("no training example has target activity")
    last_good = None
    started = time.monotonic()
    model.train()
    try:
        for epoch in range(1, config.max_epochs + 1):
            order = rng.permutation(len(pairs))
            epoch_losses = []
            for k in range(0, len(order), config.batch_size):
                chunk = [crop_example(*pairs[j], config.clip_seconds, rng) for j in order[k : k + config.batch_size]]
                value, bd = batch_loss(model, collate(chunk, model.stft_cfg), config)
                if not torch.isfinite(value):
                    raise TrainingDiverged(
                        f"non-finite loss at step {state.step + 1}; last good checkpoint: {last_good}"
                    )
                optimizer.zero_grad(set_to_none=True)
                value.backward()
                torch.nn.utils.clip_grad_norm_(model.parameters(), config.grad_clip)
                optimizer.step()
                state.step += 1
                epoch_losses.append(bd.total)
                record = {"step": state.step, "epoch": epoch, "lr": state.current_lr, "total": bd.total,
                          "si_sdr_term": bd.si_sdr_term, "power_term": bd.power_term, "bce_term": bd.bce_term}
                state.history.append(record)
                if log_file:
                    log_file.write(json.dumps(record) + "\n")
                if _out_of_budget(config, state, started):
                    break
            state.epoch = epoch
            val = validation_loss(model, validation, config) if validation else float(np.mean(epoch_losses))
            improved = val < state.best_validation_loss
            state = lr_step(state, val, config)
            for group in optimizer.param_groups:
                group["lr"] = state.current_lr
            if run_path is not None:
                ckpt = save_checkpoint(
                    run_path / f"stage{config.stage}_epoch{epoch}.ckpt",
                    model,
                    {"stage": config.stage, "epoch": epoch, "validation_loss": val, "train_config": config.to_dict()},
                )
                last_good = ckpt
                state.checkpoint_path = str(ckpt)
                if improved:
                    _write_best_pointer(run_path, ckpt)
            log.info("stage %d epoch %d: validation %.4f lr %.2e", config.stage, epoch, val, state.current_lr)
            if _out_of_budget(config, state, started):
                break
    finally:
        if log_file:
            log_file.close()
    state.rng_state = rng.bit_generator.state
    return model, state


def _out_of_budget(config: TrainConfig, state: TrainState, started: float) -> bool:
    if config.max_steps is not None and state.step >= config.max_steps:
        return True
    return config.time_budget_s is not None and time.monotonic() - started >= config.time_budget_s


# --- evaluation --------------------------------------------------------------------


@dataclass
class EvalProtocol:
    threshold: float = 0.5
    collar_s: float = 0.0
    median_frames: int = 11
    buckets: tuple = DEFAULT_BUCKETS
    oracle: bool = False
    compute_sdr: bool = True

    def to_dict(self) -> dict:
        d = asdict(self)
        d["buckets"] = list(self.buckets)
        return d


def assign_bucket(ratio: float, buckets: Sequence[float]) -> float:
    """Nearest bucket; ties go to the lower one."""
    return min(buckets, key=lambda b: (abs(b - ratio), b))


def _span_concat(x: np.ndarray, spans, sr: int) -> np.ndarray:
    parts = [x[int(round(a * sr)) : int(round(b * sr))] for a, b in spans]
    return np.concatenate(parts) if parts else np.zeros(0)


def _mean(values):
    values = [v for v in values if v is not None]
    return float(np.mean(values)) if values else None


def evaluate(model: Optional[USEFTP], samples: Sequence[MixtureSample], protocol: EvalProtocol = EvalProtocol(),
             stft_cfg: Optional[StftConfig] = None) -> dict:
    """Score every speaker of every mixture as the target; aggregate per overlap bucket.

    With ``protocol.oracle`` the model is bypassed: the clean target is the
    estimate and the ground-truth frame labels are the PVAD output.
    """
    if model is None and not protocol.oracle:
        raise InvalidInputError("a model is required unless the oracle protocol is used")
    stft_cfg = model.stft_cfg if model is not None else stft_cfg
    if stft_cfg is None:
        raise InvalidInputError("oracle evaluation needs an STFT config for the frame grid")
    if model is not None:
        model.eval()
    rows, skipped = [], 0
    per_file = {}
    for sample in sorted(samples, key=lambda s: s.sample_id):
        sr = sample.mixture.sample_rate
        mix = sample.mixture.samples
        frames = stft_cfg.num_frames(len(mix))
        ref_tracks, hyp_tracks = [], []
        bucket = assign_bucket(sample.overlap_ratio, protocol.buckets)
        for i, tl in enumerate(sample.timelines):
            labels = rasterize_vad(tl, stft_cfg.hop_ms, frames, offset=0.0)
            ref_tracks.append(labels)
            if i >= len(sample.references) or len(sample.references[i]) == 0:
                log.warning("%s: no reference for speaker %d, skipped", sample.sample_id, i)
                skipped += 1
                continue
            target = sample.sources[i].samples
            if protocol.oracle:
                est, probs = target.copy(), labels.astype(np.float64)
            else:
                with torch.no_grad():
                    out = model(
                        torch.tensor(mix, dtype=torch.float32)[None],
                        torch.tensor(sample.references[i].samples, dtype=torch.float32)[None],
                    )
                est = out.waveform[0].double().numpy()
                probs = torch.sigmoid(out.pvad_logits[0, 0]).double().numpy()
            hyp_tracks.append((probs >= protocol.threshold).astype(np.int64))
            row = {"id": sample.sample_id, "target": i, "speaker": tl.speaker, "bucket": bucket,
                   "overlap_ratio": sample.overlap_ratio, "counts": metrics.pvad_counts(probs, labels, protocol.threshold)}
            if np.any(target != 0):
                row["si_sdr"], row["si_sdri"] = metrics.si_sdr_improvement(est, mix, target)
                if protocol.compute_sdr:
                    row["sdr"], row["sdri"] = metrics.sdr_improvement(est, mix, target)
                scenes = segment_scenes(tl)
                ta_est, ta_mix, ta_tgt = (_span_concat(x, scenes.of(TA), sr) for x in (est, mix, target))
                if np.any(ta_tgt != 0):
                    row["ta_si_sdri"] = metrics.si_sdr_improvement(ta_est, ta_mix, ta_tgt)[1]
                row["ts_power"] = metrics.ts_power(est, scenes, sr)
                row["mix_ts_power"] = metrics.ts_power(mix, scenes, sr)
            rows.append(row)
        per_file[sample.sample_id] = (bucket, np.array(ref_tracks), np.array(hyp_tracks), sample.overlap_ratio)

    def summarize(sel_rows, sel_files):
        out = {"num_targets": len(sel_rows), "num_mixtures": len(sel_files)}
        out["realized_overlap"] = _mean([f[3] for f in sel_files])
        out["tse"] = {k: _mean([r.get(k) for r in sel_rows])
                      for k in ("si_sdr", "si_sdri", "sdr", "sdri", "ta_si_sdri", "ts_power", "mix_ts_power")}
        if sel_rows:
            tp, fp, fn, tn = (int(sum(r["counts"][j] for r in sel_rows)) for j in range(4))
            out["pvad"] = metrics.PvadReport.from_counts(tp, fp, fn, tn, protocol.threshold).to_dict()
        else:
            out["pvad"] = None
        totals = {"speech": 0, "miss": 0, "false_alarm": 0, "confusion": 0}
        for _, ref, hyp, _ in sel_files:
            c = metrics.der_counts(ref, hyp, protocol.median_frames)
            for k in totals:
                totals[k] += c[k]
        out["diarization"] = (
            metrics.report_from_counts(totals, protocol.collar_s, protocol.median_frames).to_dict()
            if totals["speech"] else None
        )
        return out

    buckets = []
    for b in protocol.buckets:
        sel_rows = [r for r in rows if r["bucket"] == b]
        sel_files = [f for f in per_file.values() if f[0] == b]
        buckets.append({"bucket": b, **summarize(sel_rows, sel_files)})
    report = {
        "protocol": protocol.to_dict(),
        "overall": summarize(rows, list(per_file.values())),
        "buckets": buckets,
        "skipped": skipped,
        "per_file": [{k: v for k, v in r.items() if k != "counts"} | {"pvad_counts": list(r["counts"])} for r in rows],
    }
    return report


def report_json(report: dict) -> str:
    return json.dumps(report, sort_keys=True, indent=2, allow_nan=False)


def per_file_csv(report: dict) -> str:
    cols = ["id", "target", "speaker", "bucket", "overlap_ratio", "si_sdr", "si_sdri", "sdr", "sdri",
            "ta_si_sdri", "ts_power", "mix_ts_power"]
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=cols, extrasaction="ignore", lineterminator="\n")
    writer.writeheader()
    for row in report["per_file"]:
        writer.writerow({k: row.get(k, "") for k in cols})
    return buf.getvalue()


def trend_csv(report: dict) -> str:
    """Bucket-level overlap vs DER / SI-SDRi series, ascending by bucket."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["bucket", "num_mixtures", "realized_overlap", "der", "si_sdri", "f1"])
    for b in sorted(report["buckets"], key=lambda b: b["bucket"]):
        if not b["num_mixtures"]:
            continue
        d = b["diarization"] or {}
        p = b["pvad"] or {}
        writer.writerow([b["bucket"], b["num_mixtures"], b["realized_overlap"], d.get("der", ""),
                         b["tse"]["si_sdri"] if b["tse"]["si_sdri"] is not None else "", p.get("f1", "")])
    return buf.getvalue()


def write_report(report: dict, out_dir: Union[str, Path]) -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"json": out / "metrics.json", "csv": out / "per_file.csv", "trend": out / "overlap_trend.csv"}
    paths["json"].write_text(report_json(report) + "\n")
    paths["csv"].write_text(per_file_csv(report))
    paths["trend"].write_text(trend_csv(report))
    return paths


def _nullable(schema: dict) -> dict:
    return {"anyOf": [schema, {"type": "null"}]}


_NUM = {"type": "number"}
_TSE_SCHEMA = {
    "type": "object",
    "required": ["si_sdr", "si_sdri", "sdr", "sdri", "ta_si_sdri", "ts_power"],
    "properties": {k: _nullable(_NUM) for k in ("si_sdr", "si_sdri", "sdr", "sdri", "ta_si_sdri", "ts_power", "mix_ts_power")},
}
_PVAD_SCHEMA = {
    "type": "object",
    "required": ["accuracy", "precision", "recall", "f1", "threshold"],
    "properties": {k: {"type": "number", "minimum": 0, "maximum": 1}
                   for k in ("accuracy", "precision", "recall", "f1", "threshold")},
}
_DER_SCHEMA = {
    "type": "object",
    "required": ["der", "miss", "false_alarm", "confusion", "collar_s", "median_frames"],
    "properties": {
        **{k: {"type": "number", "minimum": 0} for k in ("der", "miss", "false_alarm", "confusion", "collar_s")},
        "median_frames": {"type": "integer", "minimum": 0},
    },
}
_SUMMARY_SCHEMA = {
    "type": "object",
    "required": ["num_targets", "num_mixtures", "realized_overlap", "tse", "pvad", "diarization"],
    "properties": {
        "num_targets": {"type": "integer", "minimum": 0},
        "num_mixtures": {"type": "integer", "minimum": 0},
        "realized_overlap": _nullable({"type": "number", "minimum": 0, "maximum": 1}),
        "tse": _TSE_SCHEMA,
        "pvad": _nullable(_PVAD_SCHEMA),
        "diarization": _nullable(_DER_SCHEMA),
    },
}
REPORT_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["protocol", "overall", "buckets", "skipped", "per_file"],
    "properties": {
        "protocol": {"type": "object", "required": ["threshold", "collar_s", "median_frames", "buckets"]},
        "overall": _SUMMARY_SCHEMA,
        "buckets": {"type": "array", "items": {"allOf": [_SUMMARY_SCHEMA, {"required": ["bucket"]}]}},
        "skipped": {"type": "integer", "minimum": 0},
        "per_file": {"type": "array", "items": {"type": "object", "required": ["id", "target", "bucket"]}},
    },
}
