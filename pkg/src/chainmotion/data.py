"""Motion data handling: CSV ingestion, windows, normalization, synthesis.

Raw mocap files are per-frame CSV (one line per frame, comma-separated
values, 50 fps for the classic capture protocol).  Training consumes
(observed, future) window pairs cut from downsampled, normalized sequences;
windows are cached in a small versioned binary container that is bit-exact
across runs.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

EPS_STD = 1e-8

WINDOW_MAGIC = b"CMWIN\x00"
WINDOW_VERSION = 1


class DataError(ValueError):
    """Raised for malformed motion files or containers."""


@dataclass(frozen=True)
class MotionSequence:
    """Time-ordered pose matrix (rows = frames) with sampling metadata."""

    frames: np.ndarray
    fps: float
    action_label: str | None = None
    subject_id: str | None = None

    def __post_init__(self):
        frames = np.asarray(self.frames, dtype=np.float64)
        if frames.ndim != 2 or frames.shape[0] < 1:
            raise DataError("frames must be a non-empty 2-D matrix")
        if not np.all(np.isfinite(frames)):
            raise DataError("frames contain non-finite values")
        object.__setattr__(self, "frames", frames)

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def dim(self) -> int:
        return self.frames.shape[1]


@dataclass(frozen=True)
class WindowConfig:
    """Observation / prediction window lengths and cutting stride."""

    observed_len: int = 25
    predict_len: int = 25
    stride: int = 1

    def __post_init__(self):
        if self.observed_len < 1 or self.predict_len < 1 or self.stride < 1:
            raise DataError("window lengths and stride must be >= 1")


def load_motion_csv(path, fps: float = 50.0, action_label=None,
                    subject_id=None) -> MotionSequence:
    """Parse a per-frame CSV motion file.

    Every line must carry the same number of comma-separated numeric
    fields; errors name the offending 1-based line.
    """
    rows = []
    width = None
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            fields = line.split(",")
            if width is None:
                width = len(fields)
            elif len(fields) != width:
                raise DataError(f"{path}: line {lineno} has {len(fields)} "
                                f"fields, expected {width}")
            try:
                rows.append([float(x) for x in fields])
            except ValueError:
                raise DataError(f"{path}: line {lineno} has a non-numeric "
                                f"field") from None
    if not rows:
        raise DataError(f"{path}: no frames")
    return MotionSequence(np.asarray(rows), fps=fps,
                          action_label=action_label, subject_id=subject_id)


def save_motion_csv(frames: np.ndarray, path) -> None:
    """Write a pose matrix in the same CSV layout the loader reads."""
    frames = np.asarray(frames, dtype=np.float64)
    with open(path, "w", encoding="utf-8") as fh:
        for row in frames:
            fh.write(",".join(repr(float(v)) for v in row))
            fh.write("\n")


def downsample(seq: MotionSequence, factor: int) -> MotionSequence:
    """Keep rows 0, factor, 2*factor, ...; divides fps by factor."""
    factor = int(factor)
    if factor < 1:
        raise DataError("downsample factor must be >= 1")
    return MotionSequence(seq.frames[::factor].copy(), fps=seq.fps / factor,
                          action_label=seq.action_label,
                          subject_id=seq.subject_id)


# -- normalization -----------------------------------------------------------

@dataclass(frozen=True)
class NormalizationStats:
    """Per-dimension mean/std; near-constant dims pass through unchanged."""

    mean: np.ndarray
    std: np.ndarray
    constant_dims: frozenset = field(default_factory=frozenset)

    def apply(self, frames: np.ndarray) -> np.ndarray:
        frames = np.asarray(frames, dtype=np.float64)
        out = (frames - self.mean) / self.std
        if self.constant_dims:
            idx = sorted(self.constant_dims)
            out[..., idx] = frames[..., idx]
        return out

    def invert(self, frames: np.ndarray) -> np.ndarray:
        frames = np.asarray(frames, dtype=np.float64)
        out = frames * self.std + self.mean
        if self.constant_dims:
            idx = sorted(self.constant_dims)
            out[..., idx] = frames[..., idx]
        return out

    def to_json(self) -> str:
        return json.dumps({"mean": self.mean.tolist(),
                           "std": self.std.tolist(),
                           "constant_dims": sorted(self.constant_dims)},
                          sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "NormalizationStats":
        doc = json.loads(text)
        return cls(np.asarray(doc["mean"], dtype=np.float64),
                   np.asarray(doc["std"], dtype=np.float64),
                   frozenset(doc["constant_dims"]))


def fit_normalization(train_seqs) -> NormalizationStats:
    """Per-dimension mean/std over all frames of the training sequences."""
    seqs = list(train_seqs)
    if not seqs:
        raise DataError("cannot fit normalization on an empty training set")
    stacked = np.concatenate([s.frames for s in seqs], axis=0)
    mean = stacked.mean(axis=0)
    std = stacked.std(axis=0)
    constant = frozenset(int(i) for i in np.nonzero(std < EPS_STD)[0])
    std = np.maximum(std, EPS_STD)
    return NormalizationStats(mean, std, constant)


# -- windows -----------------------------------------------------------------

def cut_windows(seq: MotionSequence, cfg: WindowConfig):
    """All (observed, future) pairs starting at 0, stride, 2*stride, ...

    A window exists iff start + observed_len + predict_len <= n_frames;
    short sequences yield an empty list.
    """
    t, T, stride = cfg.observed_len, cfg.predict_len, cfg.stride
    out = []
    start = 0
    while start + t + T <= seq.n_frames:
        out.append((seq.frames[start:start + t].copy(),
                    seq.frames[start + t:start + t + T].copy()))
        start += stride
    return out


def window_count(n_frames: int, cfg: WindowConfig) -> int:
    span = cfg.observed_len + cfg.predict_len
    if n_frames < span:
        return 0
    return (n_frames - span) // cfg.stride + 1


def save_windows(path, windows, cfg: WindowConfig, action_label: str = "") -> None:
    """Serialize windows to the versioned binary cache (bit-exact)."""
    windows = list(windows)
    t, T = cfg.observed_len, cfg.predict_len
    dim = windows[0][0].shape[1] if windows else 0
    label = action_label.encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(WINDOW_MAGIC)
        fh.write(struct.pack("<HIIIIH", WINDOW_VERSION, t, T, dim,
                             len(windows), len(label)))
        fh.write(label)
        for obs, fut in windows:
            if obs.shape != (t, dim) or fut.shape != (T, dim):
                raise DataError("window shape does not match the config")
            fh.write(np.ascontiguousarray(obs, dtype=np.float64).tobytes())
            fh.write(np.ascontiguousarray(fut, dtype=np.float64).tobytes())


def load_windows(path):
    """Read a window cache; returns (windows, cfg, action_label)."""
    with open(path, "rb") as fh:
        magic = fh.read(len(WINDOW_MAGIC))
        if magic != WINDOW_MAGIC:
            raise DataError(f"{path}: not a window cache (bad magic)")
        version, t, T, dim, count, label_len = struct.unpack(
            "<HIIIIH", fh.read(struct.calcsize("<HIIIIH")))
        if version != WINDOW_VERSION:
            raise DataError(f"{path}: unsupported cache version {version}")
        label = fh.read(label_len).decode("utf-8")
        windows = []
        for _ in range(count):
            obs = np.frombuffer(fh.read(8 * t * dim)).reshape(t, dim).copy()
            fut = np.frombuffer(fh.read(8 * T * dim)).reshape(T, dim).copy()
            windows.append((obs, fut))
        if fh.read(1):
            raise DataError(f"{path}: trailing bytes after payload")
    return windows, WindowConfig(t, T, stride=1), label


# -- subject split -----------------------------------------------------------

def split_by_subject(seqs, test_subject: str = "S5"):
    """Standard protocol split: one held-out test subject, rest train."""
    train = [s for s in seqs if s.subject_id != test_subject]
    test = [s for s in seqs if s.subject_id == test_subject]
    return train, test


# -- synthetic motion ---------------------------------------------------------

@dataclass(frozen=True)
class SyntheticMotionSpec:
    """Sum-of-sinusoids motion: exact period, shared base frequency per
    chain with per-chain phase offsets (mimicking limb coordination)."""

    period: int = 20
    harmonics: int = 2
    amplitude: float = 0.35
    chain_phase_gap: float = 0.9
    name: str = "synthetic"

    def __post_init__(self):
        if self.period < 2 or self.harmonics < 1 or self.amplitude <= 0:
            raise DataError("invalid synthetic motion spec")


def synthesize_motion(topology, n_frames: int, seed: int,
                      spec: SyntheticMotionSpec, fps: float = 25.0,
                      subject_id=None) -> MotionSequence:
    """Deterministic synthetic motion for desk-scale verification.

    Every dimension is a seeded sum of integer harmonics of 1/period, so
    frame i equals frame i + period exactly; all dims of a chain share the
    chain's phase offset.
    """
    if n_frames < 1:
        raise DataError("n_frames must be >= 1")
    rng = np.random.default_rng(seed)
    dim = topology.pose_dim
    dof = topology.dof_per_joint
    i = np.arange(n_frames)[:, None]           # (N, 1)
    frames = np.zeros((n_frames, dim))
    offsets = rng.uniform(-0.15, 0.15, size=dim)
    for d in range(dim):
        chain = topology.chain_assignment[d // dof]
        chain_phase = spec.chain_phase_gap * (chain - 1)
        acc = np.zeros((n_frames, 1))
        for h in range(1, spec.harmonics + 1):
            amp = spec.amplitude * rng.uniform(0.3, 1.0) / h
            phase = rng.uniform(0.0, 2.0 * np.pi) + chain_phase
            acc += amp * np.sin(2.0 * np.pi * h * i / spec.period + phase)
        frames[:, d] = offsets[d] + acc[:, 0]
    return MotionSequence(frames, fps=fps, action_label=spec.name,
                          subject_id=subject_id)


def synthetic_testbed(topology, seed: int = 0,
                      train_frames: int = 600, test_frames: int = 300,
                      train_seqs_per_action: int = 2):
    """The two-action synthetic corpus used by desk-scale benchmarks.

    Returns {action: {"train": [MotionSequence...], "test": [...]}} with
    distinct periodicity and phase structure per action.
    """
    specs = [
        SyntheticMotionSpec(period=20, harmonics=2, amplitude=0.4,
                            chain_phase_gap=0.9, name="swing"),
        SyntheticMotionSpec(period=32, harmonics=3, amplitude=0.3,
                            chain_phase_gap=1.7, name="stride"),
    ]
    root = np.random.SeedSequence(seed)
    corpus = {}
    for spec, branch in zip(specs, root.spawn(len(specs))):
        seeds = branch.generate_state(train_seqs_per_action + 1)
        train = [synthesize_motion(topology, train_frames, int(seeds[k]),
                                   spec, subject_id=f"S{k + 1}")
                 for k in range(train_seqs_per_action)]
        test = [synthesize_motion(topology, test_frames, int(seeds[-1]),
                                  spec, subject_id="S5")]
        corpus[spec.name] = {"train": train, "test": test}
    return corpus


# -- dataset directory layout -------------------------------------------------
#
# <root>/<subject>/<action>_<trial>.csv  e.g.  data/S1/walking_1.csv
# Subject directories start with 'S'; the action label is the filename up
# to the last underscore.


def discover_motion_files(root):
    """Yield (path, subject_id, action_label) for a dataset directory."""
    root = Path(root)
    if not root.is_dir():
        raise DataError(f"{root}: dataset root is not a directory")
    records = []
    for subject_dir in sorted(root.iterdir()):
        if not subject_dir.is_dir() or not subject_dir.name.startswith("S"):
            continue
        for path in sorted(subject_dir.glob("*.csv")):
            stem = path.stem
            action = stem.rsplit("_", 1)[0] if "_" in stem else stem
            records.append((path, subject_dir.name, action))
    return records
