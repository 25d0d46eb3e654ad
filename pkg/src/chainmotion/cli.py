"""Command-line entry point.

Subcommands: ingest, train, predict, transfer, control, eval, ablate,
render.  Every command is a thin orchestration of one library pipeline;
all artifacts land under the run directory (--out, the config's out_dir,
or $AMGAN_RUN_DIR, in that order).  Configs are JSON documents validated
against a closed schema: unknown keys are rejected and every offending
key is named.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import data as cd
from . import evaluation as ev
from .control import (ActionModelRegistry, NextPoseVAE, TransferConfig,
                      action_transfer, fine_grained_control, splice_transfer,
                      train_next_pose_vae)
from .kinematics import EXPMAP, default_topology, load_topology, toy_topology
from .losses import LossWeights
from .model import ModelConfig, MotionGAN, load_checkpoint
from .render import render_sequence
from .training import TrainConfig, Trainer

ENV_RUN_DIR = "AMGAN_RUN_DIR"


class ConfigError(ValueError):
    pass


# -- configuration -------------------------------------------------------------

DEFAULT_CONFIG = {
    "topology": "default",
    "seed": 0,
    "out_dir": None,
    "data": {
        "source": "synthetic",
        "root": None,
        "fps": 50.0,
        "downsample": 2,
        "representation": EXPMAP,
        "synthetic_seed": 0,
        "train_frames": 600,
        "test_frames": 300,
    },
    "window": {"observed_len": 25, "predict_len": 25, "stride": 1},
    "model": {
        "hidden_size": 1024,
        "latent_size": 128,
        "aggregator_hidden": 1024,
        "local_critic_width": 512,
        "global_critic_width": 1024,
        "dtype": "float32",
    },
    "train": {
        "learning_rate": 5e-5,
        "batch_size": 16,
        "n_critic": 5,
        "max_steps": 1000,
        "checkpoint_interval": 1000,
        "beta1": 0.5,
        "beta2": 0.9,
    },
    "weights": {
        "alpha": 1.0, "beta": 0.1, "gamma": 10.0,
        "lam": 1.0, "mu": 0.1, "eta": 10.0,
        "gp_coef": 10.0, "kl_coef": 0.0,
    },
    "eval": {
        "n_test_windows": 8,
        "horizons_ms": [80, 160, 320, 400, 1000],
    },
    "transfer": {
        "n_transition": 6,
        "schedule": "linear",
        "vae_steps": 400,
        "kl_coef": 1e-3,
    },
}


def _is_number(v):
    return isinstance(v, (int, float)) and not isinstance(v, bool)


_VALIDATORS = {
    "topology": lambda v: isinstance(v, str) or "must be a string",
    "seed": lambda v: isinstance(v, int) or "must be an integer",
    "out_dir": lambda v: v is None or isinstance(v, str) or "must be a path",
    "data.source": lambda v: v in ("synthetic", "csv")
    or "must be 'synthetic' or 'csv'",
    "data.root": lambda v: v is None or isinstance(v, str) or "must be a path",
    "data.fps": lambda v: (_is_number(v) and v > 0) or "must be > 0",
    "data.downsample": lambda v: (isinstance(v, int) and v >= 1)
    or "must be an integer >= 1",
    "data.representation": lambda v: v in ("expmap-angles", "coords-3d")
    or "must be 'expmap-angles' or 'coords-3d'",
    "data.synthetic_seed": lambda v: isinstance(v, int) or "must be an integer",
    "data.train_frames": lambda v: (isinstance(v, int) and v >= 1)
    or "must be an integer >= 1",
    "data.test_frames": lambda v: (isinstance(v, int) and v >= 1)
    or "must be an integer >= 1",
    "window.observed_len": lambda v: (isinstance(v, int) and v >= 1)
    or "must be an integer >= 1",
    "window.predict_len": lambda v: (isinstance(v, int) and v >= 1)
    or "must be an integer >= 1",
    "window.stride": lambda v: (isinstance(v, int) and v >= 1)
    or "must be an integer >= 1",
    "model.hidden_size": lambda v: (isinstance(v, int) and v >= 1)
    or "must be an integer >= 1",
    "model.latent_size": lambda v: (isinstance(v, int) and v >= 1)
    or "must be an integer >= 1",
    "model.aggregator_hidden": lambda v: (isinstance(v, int) and v >= 1)
    or "must be an integer >= 1",
    "model.local_critic_width": lambda v: (isinstance(v, int) and v >= 1)
    or "must be an integer >= 1",
    "model.global_critic_width": lambda v: (isinstance(v, int) and v >= 1)
    or "must be an integer >= 1",
    "model.dtype": lambda v: v in ("float32", "float64")
    or "must be 'float32' or 'float64'",
    "train.learning_rate": lambda v: (_is_number(v) and v >= 0)
    or "must be a number >= 0",
    "train.batch_size": lambda v: (isinstance(v, int) and v >= 1)
    or "must be an integer >= 1",
    "train.n_critic": lambda v: (isinstance(v, int) and v >= 1)
    or "must be an integer >= 1",
    "train.max_steps": lambda v: (isinstance(v, int) and v >= 0)
    or "must be an integer >= 0",
    "train.checkpoint_interval": lambda v: (isinstance(v, int) and v >= 1)
    or "must be an integer >= 1",
    "train.beta1": lambda v: (_is_number(v) and 0 <= v < 1)
    or "must be in [0, 1)",
    "train.beta2": lambda v: (_is_number(v) and 0 <= v < 1)
    or "must be in [0, 1)",
    "eval.n_test_windows": lambda v: (isinstance(v, int) and v >= 1)
    or "must be an integer >= 1",
    "eval.horizons_ms": lambda v: (isinstance(v, list) and len(v) > 0
                                   and all(isinstance(m, int) and m > 0
                                           for m in v))
    or "must be a non-empty list of positive integers",
    "transfer.n_transition": lambda v: (isinstance(v, int) and v >= 1)
    or "must be an integer >= 1",
    "transfer.schedule": lambda v: v in ("linear", "spherical")
    or "must be 'linear' or 'spherical'",
    "transfer.vae_steps": lambda v: (isinstance(v, int) and v >= 1)
    or "must be an integer >= 1",
    "transfer.kl_coef": lambda v: (_is_number(v) and v >= 0)
    or "must be a number >= 0",
}
for _w in ("alpha", "beta", "gamma", "lam", "mu", "eta", "gp_coef", "kl_coef"):
    _VALIDATORS[f"weights.{_w}"] = \
        lambda v: (_is_number(v) and v >= 0) or "must be a number >= 0"


def validate_config(doc: dict) -> list:
    """Return a list of 'key: problem' strings; empty when valid."""
    problems = []

    def walk(node, defaults, prefix):
        for key, value in node.items():
            path = f"{prefix}{key}"
            if key not in defaults:
                problems.append(f"{path}: unknown key")
                continue
            if isinstance(defaults[key], dict):
                if not isinstance(value, dict):
                    problems.append(f"{path}: must be an object")
                else:
                    walk(value, defaults[key], path + ".")
                continue
            check = _VALIDATORS.get(path)
            if check is not None:
                verdict = check(value)
                if verdict is not True:
                    problems.append(f"{path}: {verdict}")

    if not isinstance(doc, dict):
        return ["config root: must be a JSON object"]
    walk(doc, DEFAULT_CONFIG, "")
    return problems


def _merge(defaults: dict, override: dict) -> dict:
    out = {}
    for key, value in defaults.items():
        if isinstance(value, dict):
            out[key] = _merge(value, override.get(key, {}))
        elif key in override:
            out[key] = override[key]
        else:
            out[key] = value
    return out


def load_config(path, seed_override=None) -> dict:
    try:
        doc = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from None
    problems = validate_config(doc)
    if problems:
        raise ConfigError("invalid config: " + "; ".join(sorted(problems)))
    config = _merge(DEFAULT_CONFIG, doc)
    if seed_override is not None:
        config["seed"] = seed_override
    return config


def resolve_topology(config):
    name = config["topology"]
    if name == "default":
        return default_topology()
    if name == "toy":
        return toy_topology()
    if name.startswith("toy:"):
        return toy_topology(int(name.split(":", 1)[1]))
    return load_topology(name)


def resolve_out_dir(args, config) -> Path:
    if getattr(args, "out", None):
        return Path(args.out)
    if config.get("out_dir"):
        return Path(config["out_dir"])
    env = os.environ.get(ENV_RUN_DIR)
    if env:
        return Path(env)
    return Path("amgan_runs")


def window_config(config) -> cd.WindowConfig:
    w = config["window"]
    return cd.WindowConfig(w["observed_len"], w["predict_len"], w["stride"])


def model_config(config, predict_len=None, single=False) -> ModelConfig:
    m = config["model"]
    return ModelConfig(hidden_size=m["hidden_size"],
                       latent_size=m["latent_size"],
                       aggregator_hidden=m["aggregator_hidden"],
                       local_critic_width=m["local_critic_width"],
                       global_critic_width=m["global_critic_width"],
                       predict_len=predict_len
                       or config["window"]["predict_len"],
                       single_generator=single,
                       dtype=m["dtype"])


def train_config(config, max_steps=None, seed=None) -> TrainConfig:
    t = config["train"]
    return TrainConfig(learning_rate=t["learning_rate"],
                       batch_size=t["batch_size"],
                       n_critic=t["n_critic"],
                       max_steps=max_steps or t["max_steps"],
                       seed=config["seed"] if seed is None else seed,
                       weights=LossWeights(**config["weights"]),
                       checkpoint_interval=t["checkpoint_interval"],
                       beta1=t["beta1"], beta2=t["beta2"])


def data_fps(config) -> float:
    if config["data"]["source"] == "synthetic":
        return 25.0
    return config["data"]["fps"] / config["data"]["downsample"]


def _snapshot(config, out: Path, command: str):
    out.mkdir(parents=True, exist_ok=True)
    (out / "config_snapshot.json").write_text(
        json.dumps({"command": command, "config": config},
                   indent=2, sort_keys=True))


# -- ingest ---------------------------------------------------------------------

def _gather_sequences(config, topology):
    """Returns ({action: [train seqs]}, {action: [test seqs]}) in raw space."""
    d = config["data"]
    if d["source"] == "synthetic":
        corpus = cd.synthetic_testbed(topology, seed=d["synthetic_seed"],
                                      train_frames=d["train_frames"],
                                      test_frames=d["test_frames"])
        return ({a: per["train"] for a, per in corpus.items()},
                {a: per["test"] for a, per in corpus.items()})
    if not d["root"]:
        raise ConfigError("data.root is required when data.source is 'csv'")
    records = cd.discover_motion_files(d["root"])
    if not records:
        raise ConfigError(f"no motion files under {d['root']}")
    seqs = []
    for path, subject, action in records:
        seq = cd.load_motion_csv(path, fps=d["fps"], action_label=action,
                                 subject_id=subject)
        seqs.append(cd.downsample(seq, d["downsample"]))
    train, test = cd.split_by_subject(seqs)
    by_action_train, by_action_test = {}, {}
    for s in train:
        by_action_train.setdefault(s.action_label, []).append(s)
    for s in test:
        by_action_test.setdefault(s.action_label, []).append(s)
    return by_action_train, by_action_test


def cmd_ingest(args) -> int:
    config = load_config(args.config, args.seed)
    topology = resolve_topology(config)
    out = resolve_out_dir(args, config) / "ingest"
    _snapshot(config, out, "ingest")
    wcfg = window_config(config)
    train_by_action, test_by_action = _gather_sequences(config, topology)

    train_seqs = [s for seqs in train_by_action.values() for s in seqs]
    stats = cd.fit_normalization(train_seqs)
    (out / "stats.json").write_text(stats.to_json())

    def normalized(seq):
        return cd.MotionSequence(stats.apply(seq.frames), seq.fps,
                                 seq.action_label, seq.subject_id)

    all_train, all_nextpose = [], []
    counts = {}
    for action, seqs in sorted(train_by_action.items()):
        per_action = []
        for seq in seqs:
            per_action.extend(cd.cut_windows(normalized(seq), wcfg))
            all_nextpose.extend(cd.cut_windows(
                normalized(seq),
                cd.WindowConfig(wcfg.observed_len, 1, wcfg.stride)))
        cd.save_windows(out / f"windows_train_{action}.bin", per_action,
                        wcfg, action)
        all_train.extend(per_action)
        counts[action] = len(per_action)
    cd.save_windows(out / "windows_train.bin", all_train, wcfg, "")
    cd.save_windows(out / "windows_nextpose.bin", all_nextpose,
                    cd.WindowConfig(wcfg.observed_len, 1, wcfg.stride), "")

    samples = out / "samples"
    samples.mkdir(exist_ok=True)
    test_counts = {}
    for action, seqs in sorted(test_by_action.items()):
        windows = []
        for k, seq in enumerate(seqs):
            windows.extend(ev.select_test_windows(
                seq, wcfg, config["eval"]["n_test_windows"],
                config["seed"] + k))
        cd.save_windows(out / f"windows_test_{action}.bin", windows, wcfg,
                        action)
        test_counts[action] = len(windows)
        cd.save_motion_csv(seqs[0].frames, samples / f"{action}_sample.csv")

    (out / "manifest.json").write_text(json.dumps(
        {"actions": sorted(train_by_action),
         "train_windows": counts,
         "test_windows": test_counts,
         "fps": data_fps(config),
         "window": asdict(wcfg),
         "topology_hash": topology.content_hash()},
        indent=2, sort_keys=True))
    print(f"ingest: {sum(counts.values())} train windows, "
          f"{sum(test_counts.values())} test windows "
          f"({', '.join(sorted(counts))}) -> {out}")
    return 0


# -- train ----------------------------------------------------------------------

def _ingest_dir(args, config) -> Path:
    root = resolve_out_dir(args, config)
    path = root / "ingest"
    if not (path / "manifest.json").exists():
        raise ConfigError(f"no ingest cache under {path}; run ingest first")
    return path


def cmd_train(args) -> int:
    config = load_config(args.config, args.seed)
    topology = resolve_topology(config)
    root = resolve_out_dir(args, config)
    ingest = _ingest_dir(args, config)

    if args.next_pose:
        windows, wcfg, _ = cd.load_windows(ingest / "windows_nextpose.bin")
        run_dir = root / "train" / "next_pose"
        _snapshot(config, run_dir, "train --next-pose")
        mcfg = model_config(config, predict_len=1)
        vae = NextPoseVAE(MotionGAN(topology, mcfg, seed=config["seed"]))
        tcfg = train_config(config, max_steps=config["transfer"]["vae_steps"])
        records = train_next_pose_vae(vae, windows, tcfg,
                                      kl_coef=config["transfer"]["kl_coef"])
        ckpt = run_dir / "vae.ckpt"
        vae.save(ckpt)
        (run_dir / "losses.jsonl").write_text(
            "\n".join(json.dumps(r, sort_keys=True) for r in records) + "\n")
        print(f"train: next-pose model, {len(records)} steps, "
              f"final recon {records[-1]['recon']:.6f} -> {ckpt}")
        return 0

    if args.action:
        cache = ingest / f"windows_train_{args.action}.bin"
        if not cache.exists():
            raise ConfigError(f"no cached windows for action "
                              f"{args.action!r} ({cache})")
        windows, _, _ = cd.load_windows(cache)
        run_dir = root / "train" / f"action_{args.action}"
    else:
        windows, _, _ = cd.load_windows(ingest / "windows_train.bin")
        run_dir = root / "train" / "main"
    _snapshot(config, run_dir, "train")

    model = MotionGAN(topology, model_config(config), seed=config["seed"])
    trainer = Trainer(model, train_config(config), run_dir=run_dir)
    result = trainer.run(windows)
    summary = {"steps": result.steps_run,
               "checkpoint": result.final_checkpoint,
               "final_generator_loss":
               result.records[-1]["generator"]["total"]
               if result.records else None}
    (run_dir / "summary.json").write_text(json.dumps(summary, indent=2,
                                                     sort_keys=True))
    if args.action:
        registry_path = root / "train" / "registry.json"
        doc = {"version": 1, "topology_hash": topology.content_hash(),
               "actions": {}}
        if registry_path.exists():
            doc = json.loads(registry_path.read_text())
        doc["actions"][args.action] = str(
            Path(result.final_checkpoint).relative_to(registry_path.parent))
        registry_path.write_text(json.dumps(doc, indent=2, sort_keys=True))
        print(f"train: action {args.action!r}, {result.steps_run} steps "
              f"-> {result.final_checkpoint} (registry updated)")
    else:
        print(f"train: {result.steps_run} steps "
              f"-> {result.final_checkpoint}")
    return 0


# -- predict / eval ---------------------------------------------------------------

def _load_stats(ingest: Path) -> cd.NormalizationStats:
    return cd.NormalizationStats.from_json((ingest / "stats.json").read_text())


def _observed_window(path, observed_len, fps=25.0) -> np.ndarray:
    seq = cd.load_motion_csv(path, fps=fps)
    if seq.n_frames < observed_len:
        raise ConfigError(f"{path}: need at least {observed_len} frames, "
                          f"got {seq.n_frames}")
    return seq.frames[-observed_len:]


def cmd_predict(args) -> int:
    config = load_config(args.config, args.seed)
    root = resolve_out_dir(args, config)
    ingest = _ingest_dir(args, config)
    out = root / "predict"
    _snapshot(config, out, "predict")
    if not args.checkpoint:
        raise ConfigError("--checkpoint is required for predict")
    if not args.source:
        raise ConfigError("--source is required for predict")
    model, _, _ = load_checkpoint(args.checkpoint,
                                  resolve_topology(config))
    stats = _load_stats(ingest)
    observed = _observed_window(args.source, config["window"]["observed_len"])
    predict = ev.model_predictor(model, stats)
    prediction = predict(observed)
    out_csv = out / "prediction.csv"
    cd.save_motion_csv(prediction, out_csv)
    print(f"predict: {prediction.shape[0]} frames -> {out_csv}")
    return 0


def cmd_eval(args) -> int:
    config = load_config(args.config, args.seed)
    root = resolve_out_dir(args, config)
    ingest = _ingest_dir(args, config)
    out = root / "eval"
    _snapshot(config, out, "eval")
    if not args.checkpoint:
        raise ConfigError("--checkpoint is required for eval")
    model, _, _ = load_checkpoint(args.checkpoint, resolve_topology(config))
    stats = _load_stats(ingest)
    manifest = json.loads((ingest / "manifest.json").read_text())
    test_windows = {}
    for action in manifest["actions"]:
        windows, _, _ = cd.load_windows(ingest / f"windows_test_{action}.bin")
        test_windows[action] = windows
    horizons = ev.HorizonSet.from_milliseconds(config["eval"]["horizons_ms"],
                                               data_fps(config))
    report = ev.benchmark(ev.model_predictor(model, stats), test_windows,
                          horizons,
                          metadata={"checkpoint": str(args.checkpoint),
                                    "seed": config["seed"]},
                          representation=config["data"]["representation"])
    (out / "report.json").write_text(report.to_json())
    (out / "report.txt").write_text(report.render_table() + "\n")
    print(report.render_table())
    return 0


def cmd_ablate(args) -> int:
    config = load_config(args.config, args.seed)
    if config["data"]["source"] != "synthetic":
        raise ConfigError("ablate runs on the synthetic testbed; set "
                          "data.source to 'synthetic'")
    variant = args.variant or "complete"
    topology = resolve_topology(config)
    root = resolve_out_dir(args, config)
    out = root / "ablate" / variant
    _snapshot(config, out, f"ablate --variant {variant}")
    bench = ev.prepare_synthetic_benchmark(
        topology, seed=config["data"]["synthetic_seed"],
        window_cfg=window_config(config),
        n_test_windows=config["eval"]["n_test_windows"])
    horizons = ev.HorizonSet.from_milliseconds(config["eval"]["horizons_ms"],
                                               25.0)
    report, _, _ = ev.ablation_run(topology, bench, model_config(config),
                                   train_config(config), variant,
                                   horizons=horizons, run_dir=out / "run")
    (out / "report.json").write_text(report.to_json())
    (out / "report.txt").write_text(report.render_table() + "\n")
    print(f"ablate [{variant}]:")
    print(report.render_table())
    return 0


# -- control / transfer -----------------------------------------------------------

def cmd_transfer(args) -> int:
    config = load_config(args.config, args.seed)
    root = resolve_out_dir(args, config)
    ingest = _ingest_dir(args, config)
    out = root / "transfer"
    _snapshot(config, out, "transfer")
    for flag, value in (("--checkpoint", args.checkpoint),
                        ("--source", args.source),
                        ("--target", args.target)):
        if not value:
            raise ConfigError(f"{flag} is required for transfer")
    vae = NextPoseVAE.load(args.checkpoint)
    stats = _load_stats(ingest)
    t = config["window"]["observed_len"]
    source = cd.load_motion_csv(args.source, fps=data_fps(config))
    target = cd.load_motion_csv(args.target, fps=data_fps(config))
    offset = args.target_offset
    if target.n_frames < offset + t:
        raise ConfigError(f"target has {target.n_frames} frames; needs "
                          f"{offset + t} for the chosen offset")
    source_w = source.frames[-t:]
    target_w = target.frames[offset:offset + t]
    continuation = target.frames[offset + t:]
    tcfg = TransferConfig(config["transfer"]["n_transition"],
                          config["transfer"]["schedule"])
    transition = stats.invert(action_transfer(
        vae, stats.apply(source_w), stats.apply(target_w), tcfg))
    spliced = splice_transfer(source.frames, transition, continuation)
    cd.save_motion_csv(transition, out / "transition.csv")
    cd.save_motion_csv(spliced, out / "transferred.csv")
    print(f"transfer: {transition.shape[0]} transition frames, "
          f"{spliced.shape[0]} total -> {out / 'transferred.csv'}")
    return 0


def _parse_overrides(pairs):
    overrides = {}
    for pair in pairs or []:
        if "=" not in pair:
            raise ConfigError(f"--override expects chain=action, got {pair!r}")
        chain, action = pair.split("=", 1)
        try:
            overrides[int(chain)] = action
        except ValueError:
            raise ConfigError(f"--override chain id must be an integer, "
                              f"got {chain!r}") from None
    return overrides


def cmd_control(args) -> int:
    config = load_config(args.config, args.seed)
    root = resolve_out_dir(args, config)
    ingest = _ingest_dir(args, config)
    out = root / "control"
    _snapshot(config, out, "control")
    if not args.source:
        raise ConfigError("--source is required for control")
    if not args.base_action:
        raise ConfigError("--base-action is required for control")
    registry_path = Path(args.registry) if args.registry \
        else root / "train" / "registry.json"
    if not registry_path.exists():
        raise ConfigError(f"registry manifest not found: {registry_path}; "
                          f"train per-action models first")
    registry = ActionModelRegistry.from_manifest(registry_path)
    stats = _load_stats(ingest)
    observed = _observed_window(args.source, config["window"]["observed_len"])
    pose = fine_grained_control(registry, stats.apply(observed),
                                args.base_action,
                                _parse_overrides(args.override))
    prediction = stats.invert(pose)
    out_csv = out / "controlled.csv"
    cd.save_motion_csv(prediction, out_csv)
    overrides = _parse_overrides(args.override)
    desc = ", ".join(f"chain {c}<-{a}" for c, a in sorted(overrides.items())) \
        or "no overrides"
    print(f"control: base {args.base_action!r}, {desc} -> {out_csv}")
    return 0


def cmd_render(args) -> int:
    config = load_config(args.config, args.seed)
    root = resolve_out_dir(args, config)
    out = root / "render"
    _snapshot(config, out, "render")
    if not args.source:
        raise ConfigError("--source is required for render")
    topology = resolve_topology(config)
    seq = cd.load_motion_csv(args.source, fps=data_fps(config))
    paths = render_sequence(seq.frames, topology, out / "frames",
                            representation=config["data"]["representation"])
    print(f"render: {len(paths)} frames -> {out / 'frames'}")
    return 0


# -- entry point -------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="chainmotion",
        description="Controllable human motion prediction with per-chain "
                    "adversarial generators.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="JSON run config")
        p.add_argument("--out", help="output root (default: config out_dir "
                                     f"or ${ENV_RUN_DIR})")
        p.add_argument("--seed", type=int, help="override the config seed")

    p = sub.add_parser("ingest", help="cut, normalize and cache windows")
    common(p)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("train", help="train a model on cached windows")
    common(p)
    p.add_argument("--action", help="train on one action only (updates the "
                                    "per-action registry)")
    p.add_argument("--next-pose", action="store_true",
                   help="train the next-pose model used by transfer")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="predict a future window from a "
                                       "motion CSV")
    common(p)
    p.add_argument("--checkpoint", help="model checkpoint")
    p.add_argument("--source", help="input motion CSV")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("transfer", help="bridge a source sequence into a "
                                        "target action")
    common(p)
    p.add_argument("--checkpoint", help="next-pose model checkpoint")
    p.add_argument("--source", help="source motion CSV")
    p.add_argument("--target", help="target motion CSV")
    p.add_argument("--target-offset", type=int, default=0,
                   help="frame offset of the target window")
    p.set_defaults(func=cmd_transfer)

    p = sub.add_parser("control", help="predict with per-chain action "
                                       "overrides")
    common(p)
    p.add_argument("--registry", help="registry manifest (default: "
                                      "<out>/train/registry.json)")
    p.add_argument("--base-action", help="action of the base model")
    p.add_argument("--override", action="append", metavar="CHAIN=ACTION",
                   help="override one chain (repeatable)")
    p.add_argument("--source", help="observed motion CSV")
    p.set_defaults(func=cmd_control)

    p = sub.add_parser("eval", help="benchmark a checkpoint on the test set")
    common(p)
    p.add_argument("--checkpoint", help="model checkpoint")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="train and benchmark one ablation "
                                      "variant")
    common(p)
    p.add_argument("--variant", choices=list(ev.ABLATION_VARIANTS),
                   help="ablation variant (default: complete)")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("render", help="render a motion CSV to image frames")
    common(p)
    p.add_argument("--source", help="motion CSV to render")
    p.set_defaults(func=cmd_render)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - single-line CLI diagnostics
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
