"""Command-line driver: ``useftp {synth,train,eval,score,report}``.

Exit codes: 0 success, 1 usage or config error, 2 runtime failure.
Relative output paths resolve against ``$USEFTP_OUTPUT_ROOT`` when it is set.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import re
import sys
from collections import Counter
from dataclasses import fields
from pathlib import Path
from typing import Any, Optional, Sequence

try:
    import tomllib as tomli
except ModuleNotFoundError:  # Python 3.10
    import tomli

from . import metrics, training
from .audio import StftConfig
from .errors import InfeasibleOverlapError, InvalidInputError
from .losses import LossWeights
from .model import ModelConfig
from .synth import SyntheticSpeakerPool, WavSpeakerPool, load_dataset, synthesize_dataset, write_dataset
from .timeline import ActivityTimeline, read_rttm

log = logging.getLogger("useftp")

_TYPE_PROBLEM = re.compile(r"^(\w+)\.\S*: ")
OUTPUT_ROOT_ENV = "USEFTP_OUTPUT_ROOT"
EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


class ConfigError(Exception):
    def __init__(self, problems: Sequence[str]):
        self.problems = list(problems)
        super().__init__("\n".join(self.problems))


# --- config tree ---------------------------------------------------------------------


def _defaults() -> dict:
    model = ModelConfig.desk().to_dict()
    train = training.TrainConfig().to_dict()
    train.pop("weights")
    train["max_steps"] = None
    train["time_budget_s"] = None
    return {
        "run": {"id": "run", "output_dir": "runs", "seed": 0},
        "data": {"train_manifest": "", "valid_manifest": "", "eval_manifest": ""},
        "audio": {"sample_rate": 8000, "window_ms": 20.0, "hop_ms": 10.0},
        "model": model,
        "training": {**train, "stage1_epochs": 10, "stage2_epochs": 5, "stages": [1, 2],
                     "stage1_time_budget_s": None, "stage2_time_budget_s": None},
        "loss": {f.name: f.default for f in fields(LossWeights)},
        "eval": training.EvalProtocol().to_dict() | {"checkpoint": ""},
    }


def _parse_value(text: str) -> Any:
    try:
        return tomli.loads(f"v = {text}")["v"]
    except tomli.TOMLDecodeError:
        return text


def _check_type(path: str, default: Any, value: Any, problems: list) -> Any:
    if default is None or value is None:
        return value
    if isinstance(default, bool):
        if not isinstance(value, bool):
            problems.append(f"{path}: expected true/false, got {value!r}")
        return value
    if isinstance(default, float) and isinstance(value, int) and not isinstance(value, bool):
        return float(value)
    if isinstance(default, (list, tuple)):
        if not isinstance(value, (list, tuple)):
            problems.append(f"{path}: expected a list, got {value!r}")
        return list(value) if isinstance(value, (list, tuple)) else value
    if not isinstance(value, type(default)) or isinstance(value, bool) and not isinstance(default, bool):
        problems.append(f"{path}: expected {type(default).__name__}, got {value!r}")
    return value


def _merge(base: dict, update: dict, prefix: str, problems: list) -> None:
    for key, value in update.items():
        path = f"{prefix}{key}"
        if key not in base:
            problems.append(f"unknown config key: {path}")
            continue
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                problems.append(f"{path}: expected a table")
                continue
            _merge(base[key], value, path + ".", problems)
        else:
            base[key] = _check_type(path, base[key], value, problems)


def resolve_config(path: Optional[str], overrides: Sequence[str] = ()) -> dict:
    """Defaults <- TOML file <- dotted overrides; every problem is collected before raising."""
    cfg = _defaults()
    problems: list[str] = []
    if path:
        try:
            with open(path, "rb") as fh:
                _merge(cfg, tomli.load(fh), "", problems)
        except FileNotFoundError:
            problems.append(f"config file not found: {path}")
        except tomli.TOMLDecodeError as exc:
            problems.append(f"{path}: {exc}")
    for item in overrides:
        if "=" not in item:
            problems.append(f"override must look like key.path=value: {item!r}")
            continue
        key, text = item.split("=", 1)
        *parents, leaf = key.strip().split(".")
        tree: dict = {}
        node = tree
        for p in parents:
            node = node.setdefault(p, {})
        node[leaf] = _parse_value(text.strip())
        _merge(cfg, tree, "", problems)
    # sections with type errors are not re-validated; that would only repeat them
    broken = {m.group(1) for m in map(_TYPE_PROBLEM.match, problems) if m}
    problems.extend(_validate(cfg, broken))
    if problems:
        raise ConfigError(problems)
    return cfg


def _validate(cfg: dict, skip: set = frozenset()) -> list[str]:
    problems = []
    builders = {
        "model": lambda: ModelConfig(**cfg["model"]),
        "loss": lambda: LossWeights(**cfg["loss"]),
        "training": lambda: [_train_config(cfg, s) for s in (1, 2)],
        "audio": lambda: _stft_config(cfg),
    }
    if "audio" in skip or "model" in skip:
        skip = set(skip) | {"training"}
    for name, build in builders.items():
        if name in skip:
            continue
        try:
            build()
        except (InvalidInputError, ValueError, TypeError) as exc:
            problems.append(f"{name}: {exc}")
    if skip:
        return problems
    try:
        if _stft_config(cfg).bins != cfg["model"]["freq_bins"]:
            problems.append(
                f"model.freq_bins={cfg['model']['freq_bins']} does not match the "
                f"{_stft_config(cfg).bins} bins of the audio STFT"
            )
    except (InvalidInputError, ValueError):
        pass
    if any(s not in (1, 2) for s in cfg["training"]["stages"]):
        problems.append("training.stages may only contain 1 and 2")
    return problems


def _stft_config(cfg: dict) -> StftConfig:
    a = cfg["audio"]
    return StftConfig.for_rate(a["sample_rate"], a["window_ms"], a["hop_ms"])


def _train_config(cfg: dict, stage: int) -> training.TrainConfig:
    per_stage = {f"stage{n}_{k}" for n in (1, 2) for k in ("epochs", "time_budget_s")}
    t = {k: v for k, v in cfg["training"].items() if k not in per_stage and k != "stages"}
    t["stage"] = stage
    t["max_epochs"] = cfg["training"][f"stage{stage}_epochs"]
    budget = cfg["training"][f"stage{stage}_time_budget_s"]
    if budget is not None:
        t["time_budget_s"] = budget
    t["seed"] = cfg["run"]["seed"]
    return training.TrainConfig(weights=LossWeights(**cfg["loss"]), **t)


def _out_path(path: str) -> Path:
    p = Path(path)
    root = os.environ.get(OUTPUT_ROOT_ENV)
    return Path(root) / p if root and not p.is_absolute() else p


def _write_snapshot(cfg: dict, out_dir: Path, name: str = "resolved_config.json") -> Path:
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / name
    path.write_text(json.dumps(cfg, sort_keys=True, indent=2) + "\n")
    return path


# --- commands ------------------------------------------------------------------------


def cmd_synth(args) -> int:
    ratios = [float(r) for r in args.ratios.split(",") if r.strip()]
    out = _out_path(args.out)
    pool = WavSpeakerPool(args.speech_dir, args.sample_rate) if args.speech_dir else SyntheticSpeakerPool(
        num_speakers=args.pool_size, sample_rate=args.sample_rate)
    samples = synthesize_dataset(
        ratios, args.per_ratio, seed=args.seed, pool=pool, num_speakers=args.speakers,
        clip_seconds=args.clip_seconds, sample_rate=args.sample_rate, snr_db=args.snr_db,
    )
    manifest = write_dataset(samples, out)
    _write_snapshot({"command": "synth", **{k: v for k, v in vars(args).items() if k != "func"}}, out)
    hist = Counter(training.assign_bucket(s.overlap_ratio, ratios) for s in samples)
    print(f"wrote {len(samples)} mixtures to {manifest}")
    print("realized overlap histogram (nearest requested ratio):")
    for b in sorted(hist):
        print(f"  {b:4.2f}  {hist[b]:5d}  {'#' * min(hist[b], 60)}")
    return EXIT_OK


def run_stages(cfg: dict, samples, run_dir, validation=None, init_checkpoint=None, verbose=False):
    """Train every stage listed in ``cfg['training']['stages']`` in order, warm-starting each from the last.

    Returns the final model and one ``TrainState`` per stage.
    """
    stft_cfg = _stft_config(cfg)
    model_cfg = ModelConfig(**cfg["model"])
    model, states = None, []
    init = init_checkpoint
    for stage in cfg["training"]["stages"]:
        model, state = training.train(
            _train_config(cfg, stage), samples, model=model, run_dir=run_dir, validation=validation,
            init_checkpoint=init if model is None else None, model_cfg=model_cfg, stft_cfg=stft_cfg,
        )
        init = None
        states.append(state)
        if verbose:
            print(f"stage {stage}: {state.step} steps, {state.epoch} epochs, "
                  f"best validation {state.best_validation_loss:.4f}")
    return model, states


def cmd_train(args) -> int:
    cfg = resolve_config(args.config, args.override)
    if args.seed is not None:
        cfg["run"]["seed"] = args.seed
    run_dir = _out_path(args.out or cfg["run"]["output_dir"]) / cfg["run"]["id"]
    _write_snapshot(cfg, run_dir)
    if not cfg["data"]["train_manifest"]:
        raise ConfigError(["data.train_manifest is required for training"])
    samples = load_dataset(cfg["data"]["train_manifest"])
    valid = load_dataset(cfg["data"]["valid_manifest"]) if cfg["data"]["valid_manifest"] else None
    model, _ = run_stages(cfg, samples, run_dir, validation=valid, init_checkpoint=args.init, verbose=True)
    training.save_checkpoint(run_dir / "final.ckpt", model, {"config": cfg})
    print(f"checkpoints in {run_dir}")
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = resolve_config(args.config, args.override)
    manifest = args.manifest or cfg["data"]["eval_manifest"]
    if not manifest:
        raise ConfigError(["an eval manifest is required (--manifest or data.eval_manifest)"])
    e = cfg["eval"]
    protocol = training.EvalProtocol(
        threshold=e["threshold"], collar_s=e["collar_s"], median_frames=e["median_frames"],
        buckets=tuple(e["buckets"]), oracle=args.oracle or e["oracle"], compute_sdr=e["compute_sdr"],
    )
    checkpoint = args.checkpoint or e["checkpoint"]
    model = None
    if not protocol.oracle:
        if not checkpoint:
            raise ConfigError(["a checkpoint is required unless --oracle is given"])
        model, _ = training.load_checkpoint(checkpoint)
    samples = load_dataset(manifest)
    report = training.evaluate(model, samples, protocol, stft_cfg=_stft_config(cfg) if model is None else None)
    out = _out_path(args.out)
    training.write_report(report, out)
    _write_snapshot(cfg | {"eval_invocation": {"manifest": str(manifest), "checkpoint": checkpoint}}, out)
    if args.json:
        print(training.report_json(report["overall"]))
    else:
        print(_summary_line(report["overall"]))
        print(f"report written to {out}")
    return EXIT_OK


def _summary_line(summary: dict) -> str:
    parts = [f"targets={summary['num_targets']}"]
    if summary["tse"]["si_sdri"] is not None:
        parts.append(f"SI-SDRi={summary['tse']['si_sdri']:.2f} dB")
    if summary["pvad"]:
        parts.append(f"F1={summary['pvad']['f1']:.3f}")
    if summary["diarization"]:
        parts.append(f"DER={summary['diarization']['der']:.2f}%")
    return " ".join(parts)


def cmd_score(args) -> int:
    ref = read_rttm(args.ref)
    hyp = read_rttm(args.hyp)
    results = {}
    for file_id in sorted(ref):
        duration = max(tl.duration_s for tl in ref[file_id] + hyp.get(file_id, []))
        ref_tls = [_with_duration(tl, duration) for tl in ref[file_id]]
        hyp_tls = [_with_duration(tl, duration) for tl in hyp.get(file_id, [])]
        results[file_id] = metrics.der(ref_tls, hyp_tls, args.collar, args.median, args.frame_hop_ms).to_dict()
    missing = sorted(set(hyp) - set(ref))
    if missing:
        log.warning("hypothesis files without reference ignored: %s", ", ".join(missing))
    total = {k: sum(r[k] * r["scored_speech_frames"] for r in results.values()) for k in ("der", "miss", "false_alarm", "confusion")}
    frames = sum(r["scored_speech_frames"] for r in results.values())
    overall = {k: v / frames for k, v in total.items()} if frames else None
    if overall is not None:
        overall.update(collar_s=args.collar, median_frames=args.median, scored_speech_frames=frames)
    payload = {"files": results, "overall": overall}
    if args.json:
        print(json.dumps(payload, sort_keys=True, indent=2))
    else:
        for fid, r in results.items():
            print(f"{fid}: DER={r['der']:.2f}% MI={r['miss']:.2f}% FA={r['false_alarm']:.2f}% CF={r['confusion']:.2f}%")
        if overall:
            print(f"OVERALL: DER={overall['der']:.2f}%")
    return EXIT_OK


def _with_duration(tl, duration):
    return ActivityTimeline(tl.intervals, duration, tl.speaker)


def cmd_report(args) -> int:
    report = json.loads(Path(args.metrics).read_text())
    print(f"{'bucket':>6} {'mixtures':>8} {'overlap':>8} {'DER%':>7} {'SI-SDRi':>8} {'F1':>6}")
    for b in sorted(report["buckets"], key=lambda b: b["bucket"]):
        if not b["num_mixtures"]:
            continue
        der = b["diarization"]["der"] if b["diarization"] else float("nan")
        si = b["tse"]["si_sdri"] if b["tse"]["si_sdri"] is not None else float("nan")
        f1 = b["pvad"]["f1"] if b["pvad"] else float("nan")
        print(f"{b['bucket']:6.2f} {b['num_mixtures']:8d} {b['realized_overlap']:8.3f} {der:7.2f} {si:8.2f} {f1:6.3f}")
    print(_summary_line(report["overall"]))
    return EXIT_OK


# --- parser --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="useftp", description="Target-speaker extraction + personal VAD toolkit")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="synthesize a mixture corpus with a manifest and RTTM references")
    p.add_argument("--ratios", default="0,0.2,0.4,0.6,0.8,1.0")
    p.add_argument("--per-ratio", type=int, default=20)
    p.add_argument("--speakers", type=int, default=2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sample-rate", type=int, default=8000)
    p.add_argument("--clip-seconds", type=float, default=4.0)
    p.add_argument("--snr-db", type=float, default=30.0)
    p.add_argument("--pool-size", type=int, default=8)
    p.add_argument("--speech-dir", help="folder of <speaker>/*.wav; default is the synthetic band-limited pool")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    for name, func, help_ in (("train", cmd_train, "train one or both stages"),
                              ("eval", cmd_eval, "evaluate a checkpoint per overlap bucket")):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config")
        p.add_argument("--override", action="append", default=[], metavar="KEY=VALUE")
        p.add_argument("--out")
        p.set_defaults(func=func)
    train_p, eval_p = sub.choices["train"], sub.choices["eval"]
    train_p.add_argument("--seed", type=int)
    train_p.add_argument("--init", help="stage-1 checkpoint to start from")
    eval_p.add_argument("--manifest")
    eval_p.add_argument("--checkpoint")
    eval_p.add_argument("--oracle", action="store_true", help="score ground truth through the pipeline")
    eval_p.add_argument("--json", action="store_true")
    eval_p.set_defaults(out="eval")

    p = sub.add_parser("score", help="DER between two RTTM files")
    p.add_argument("--ref", required=True)
    p.add_argument("--hyp", required=True)
    p.add_argument("--collar", type=float, default=0.0)
    p.add_argument("--median", type=int, default=11)
    p.add_argument("--frame-hop-ms", type=float, default=10.0)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("report", help="print the per-bucket table of a metrics.json")
    p.add_argument("metrics")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        for problem in exc.problems:
            print(f"config error: {problem}", file=sys.stderr)
        return EXIT_CONFIG
    except (InvalidInputError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (InfeasibleOverlapError, OSError, RuntimeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
