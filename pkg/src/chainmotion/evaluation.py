"""Benchmark protocol: horizon sets, the mean-angle-error metric, the
zero-velocity reference predictor, report assembly and the ablation harness.

Full-scale reference targets for the walking benchmark (trained on the
complete mocap corpus, not reproducible at desk scale) are documented in
the README; desk-scale runs use the synthetic two-action testbed instead.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np

from . import data as cd
from .kinematics import COORDS_3D, EXPMAP
from .model import ModelConfig, MotionGAN
from .training import TrainConfig, Trainer

REPORT_SCHEMA_VERSION = 1

ABLATION_VARIANTS = ("complete", "remove_local_critics",
                     "remove_global_critic", "remove_subgans")


class EvaluationError(ValueError):
    pass


@dataclass(frozen=True)
class HorizonSet:
    """Prediction horizons as (milliseconds, 1-based frame index) pairs."""

    entries: tuple

    @classmethod
    def from_milliseconds(cls, milliseconds, fps: float) -> "HorizonSet":
        entries = []
        for ms in milliseconds:
            frames = ms * fps / 1000.0
            if abs(frames - round(frames)) > 1e-9 or round(frames) < 1:
                raise EvaluationError(
                    f"horizon {ms} ms is not a whole positive frame count "
                    f"at {fps} fps")
            entries.append((int(ms), int(round(frames))))
        return cls(tuple(entries))

    def frame(self, ms: int) -> int:
        for m, f in self.entries:
            if m == ms:
                return f
        raise KeyError(ms)

    @property
    def milliseconds(self):
        return [m for m, _ in self.entries]


def default_horizons(fps: float = 25.0) -> HorizonSet:
    return HorizonSet.from_milliseconds([80, 160, 320, 400, 1000], fps)


def mae(pred, truth, frame_idx: int, representation: str = EXPMAP) -> float:
    """Euclidean norm of the angle difference at one horizon frame,
    averaged over the window batch.

    frame_idx is 1-based (frame 1 is the first predicted frame).
    """
    if representation == COORDS_3D:
        raise EvaluationError("mean angle error is undefined for 3-D "
                              "coordinates; use coordinate_error instead")
    return _horizon_error(pred, truth, frame_idx)


def coordinate_error(pred, truth, frame_idx: int) -> float:
    """The analogous Euclidean metric for coordinate-space poses."""
    return _horizon_error(pred, truth, frame_idx)


def _horizon_error(pred, truth, frame_idx: int) -> float:
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if pred.ndim == 2:
        pred = pred[None]
        truth = truth[None]
    if pred.shape != truth.shape:
        raise EvaluationError(f"prediction/truth shapes differ: "
                              f"{pred.shape} vs {truth.shape}")
    T = pred.shape[1]
    if not 1 <= frame_idx <= T:
        raise EvaluationError(f"frame index {frame_idx} outside 1..{T}")
    diff = pred[:, frame_idx - 1] - truth[:, frame_idx - 1]
    return float(np.linalg.norm(diff, axis=1).mean())


def zero_velocity_baseline(observed: np.ndarray, predict_len: int) -> np.ndarray:
    """Repeat the last observed frame; the standard sanity floor."""
    observed = np.asarray(observed, dtype=np.float64)
    return np.repeat(observed[-1:][None] if observed.ndim == 1
                     else observed[-1:], predict_len, axis=0)


def model_predictor(model: MotionGAN, stats: cd.NormalizationStats | None = None):
    """Deterministic (mean-latent) single-window predictor in data space."""

    def predict(observed: np.ndarray) -> np.ndarray:
        if stats is not None:
            observed = stats.apply(observed)
        pred = model.predict_sequence(observed)
        if stats is not None:
            pred = stats.invert(pred)
        return pred

    return predict


@dataclass
class EvalReport:
    """MAE per action per horizon plus run metadata."""

    metric: str
    horizons_ms: list
    values: dict                 # action -> {ms (int) -> float}
    metadata: dict = field(default_factory=dict)

    def average(self, ms: int) -> float:
        return float(np.mean([self.values[a][ms] for a in self.values]))

    def to_json(self) -> str:
        records = [{"action": action, "horizon_ms": ms, "value": value}
                   for action, per in sorted(self.values.items())
                   for ms, value in sorted(per.items())]
        return json.dumps({"schema_version": REPORT_SCHEMA_VERSION,
                           "metric": self.metric,
                           "horizons_ms": self.horizons_ms,
                           "records": records,
                           "metadata": self.metadata},
                          sort_keys=True, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "EvalReport":
        doc = json.loads(text)
        if doc.get("schema_version") != REPORT_SCHEMA_VERSION:
            raise EvaluationError("unsupported report schema version")
        values = {}
        for rec in doc["records"]:
            values.setdefault(rec["action"], {})[int(rec["horizon_ms"])] = \
                rec["value"]
        return cls(doc["metric"], doc["horizons_ms"], values, doc["metadata"])

    def render_table(self) -> str:
        header = [f"{self.metric} \\ ms"] + [str(m) for m in self.horizons_ms]
        rows = [header]
        for action in sorted(self.values):
            rows.append([action] + [f"{self.values[action][m]:.4f}"
                                    for m in self.horizons_ms])
        rows.append(["average"] + [f"{self.average(m):.4f}"
                                   for m in self.horizons_ms])
        widths = [max(len(r[i]) for r in rows) for i in range(len(header))]
        lines = ["  ".join(cell.ljust(w) for cell, w in zip(row, widths))
                 for row in rows]
        lines.insert(1, "-" * len(lines[0]))
        return "\n".join(lines)


def select_test_windows(seq: cd.MotionSequence, cfg: cd.WindowConfig,
                        n_windows: int, seed: int):
    """Protocol-fixed evaluation windows: seeded starts, no duplicates,
    sorted for reproducibility."""
    span = cfg.observed_len + cfg.predict_len
    max_start = seq.n_frames - span
    if max_start < 0:
        return []
    rng = np.random.default_rng(seed)
    starts = rng.permutation(max_start + 1)[:n_windows]
    return [(seq.frames[s:s + cfg.observed_len].copy(),
             seq.frames[s + cfg.observed_len:s + span].copy())
            for s in sorted(starts.tolist())]


def benchmark(predict_fn, test_windows: dict, horizons: HorizonSet,
              metadata=None, representation: str = EXPMAP) -> EvalReport:
    """Evaluate a predictor on per-action test windows.

    predict_fn maps one observed (t, D) window to a (T, D) prediction;
    the report holds the horizon error per action per horizon.
    """
    if not test_windows or all(not v for v in test_windows.values()):
        raise EvaluationError("empty test set")
    metric = "mae" if representation == EXPMAP else "coordinate_error"
    values = {}
    counts = {}
    for action, windows in sorted(test_windows.items()):
        if not windows:
            raise EvaluationError(f"no test windows for action {action!r}")
        preds = np.stack([predict_fn(obs) for obs, _ in windows])
        truths = np.stack([fut for _, fut in windows])
        per = {}
        for ms, frame in horizons.entries:
            per[ms] = _horizon_error(preds, truths, frame)
        values[action] = per
        counts[action] = len(windows)
    meta = dict(metadata or {})
    meta.setdefault("n_windows", counts)
    return EvalReport(metric=metric, horizons_ms=list(horizons.milliseconds),
                      values=values, metadata=meta)


# -- synthetic desk-scale pipeline ---------------------------------------------

@dataclass
class BenchmarkData:
    """Prepared testbed: normalized training windows plus raw test windows."""

    train_windows: list
    test_windows: dict           # action -> [(observed, future)] raw space
    stats: cd.NormalizationStats
    window_cfg: cd.WindowConfig


def prepare_synthetic_benchmark(topology, seed: int = 0,
                                window_cfg: cd.WindowConfig | None = None,
                                n_test_windows: int = 8) -> BenchmarkData:
    """Build the two-action testbed: fit normalization on the training
    split, cut normalized training windows, and pick seeded raw-space test
    windows per action."""
    window_cfg = window_cfg or cd.WindowConfig()
    corpus = cd.synthetic_testbed(topology, seed=seed)
    train_seqs = [s for per in corpus.values() for s in per["train"]]
    stats = cd.fit_normalization(train_seqs)
    train_windows = []
    for seq in train_seqs:
        normalized = cd.MotionSequence(stats.apply(seq.frames), seq.fps,
                                       seq.action_label, seq.subject_id)
        train_windows.extend(cd.cut_windows(normalized, window_cfg))
    test_windows = {}
    for action, per in corpus.items():
        windows = []
        for k, seq in enumerate(per["test"]):
            windows.extend(select_test_windows(seq, window_cfg,
                                               n_test_windows, seed + k))
        test_windows[action] = windows
    return BenchmarkData(train_windows=train_windows,
                         test_windows=test_windows, stats=stats,
                         window_cfg=window_cfg)


def ablation_run(topology, bench: BenchmarkData, model_cfg: ModelConfig,
                 train_cfg: TrainConfig, variant: str,
                 horizons: HorizonSet | None = None, run_dir=None):
    """Train one ablation variant and benchmark it under identical seeds.

    complete:             the full model;
    remove_local_critics: chain critic gap weight zeroed, local critics
                          never updated;
    remove_global_critic: pose critic gap weight zeroed, global critic
                          never updated;
    remove_subgans:       one whole-pose generator with the global critic
                          only (no decomposition, no aggregation layer).
    """
    if variant not in ABLATION_VARIANTS:
        raise EvaluationError(f"unknown ablation variant {variant!r}; "
                              f"expected one of {ABLATION_VARIANTS}")
    if variant == "remove_local_critics":
        train_cfg = replace(train_cfg,
                            weights=replace(train_cfg.weights, alpha=0.0),
                            update_local_critics=False)
    elif variant == "remove_global_critic":
        train_cfg = replace(train_cfg,
                            weights=replace(train_cfg.weights, lam=0.0),
                            update_global_critic=False)
    elif variant == "remove_subgans":
        model_cfg = replace(model_cfg, single_generator=True)

    model = MotionGAN(topology, model_cfg, seed=train_cfg.seed)
    trainer = Trainer(model, train_cfg, run_dir=run_dir)
    result = trainer.run(bench.train_windows)
    horizons = horizons or default_horizons()
    report = benchmark(model_predictor(model, bench.stats),
                       bench.test_windows, horizons,
                       metadata={"variant": variant,
                                 "seed": train_cfg.seed,
                                 "steps": result.steps_run,
                                 "config_hash": train_cfg.content_hash()})
    return report, result, model
