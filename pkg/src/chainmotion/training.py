"""The adversarial optimization loop.

Each training step runs n_critic critic updates (local critics on chain
futures, global critic on pose futures, both with gradient penalty)
followed by one update of the generators and the aggregator.  Everything
is driven by a single seeded RNG whose state is checkpointed, so resumed
runs reproduce unbroken ones exactly.
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass, asdict, field, replace
from pathlib import Path

import numpy as np

from . import autodiff as ad
from . import losses as ls
from .autodiff import Tensor
from .losses import LossRecord, LossWeights
from .model import MotionGAN, save_checkpoint, load_checkpoint


class TrainingDiverged(RuntimeError):
    """Raised when a step produces a non-finite loss.

    Carries the offending record and the newest retained checkpoint (if
    the run directory keeps any), so the failure is debuggable.
    """

    def __init__(self, step, phase, record, last_checkpoint=None):
        super().__init__(f"non-finite loss at step {step} ({phase} update)")
        self.step = step
        self.phase = phase
        self.record = record
        self.last_checkpoint = last_checkpoint


@dataclass(frozen=True)
class TrainConfig:
    """Optimization hyperparameters; defaults follow the full-scale setup
    (initial rate 5e-5, batches of 16, 5 critic updates per generator
    update, Adam moments (0.5, 0.9))."""

    learning_rate: float = 5e-5
    batch_size: int = 16
    n_critic: int = 5
    max_steps: int = 1000
    seed: int = 0
    weights: LossWeights = field(default_factory=LossWeights)
    checkpoint_interval: int = 1000
    beta1: float = 0.5
    beta2: float = 0.9
    adam_eps: float = 1e-8
    update_local_critics: bool = True
    update_global_critic: bool = True

    def __post_init__(self):
        if self.learning_rate < 0 or self.batch_size < 1 or \
                self.n_critic < 1 or self.max_steps < 0 or \
                self.checkpoint_interval < 1:
            raise ValueError("invalid training configuration")

    def content_hash(self) -> str:
        doc = json.dumps(asdict(self), sort_keys=True)
        return hashlib.sha256(doc.encode()).hexdigest()


class Adam:
    """Adaptive-moment optimizer over a named parameter dict."""

    def __init__(self, params, lr, beta1=0.5, beta2=0.9, eps=1e-8):
        self.params = dict(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = {k: np.zeros_like(p.data) for k, p in self.params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in self.params.items()}
        self.t = {k: 0 for k in self.params}

    def zero_grad(self):
        for p in self.params.values():
            p.grad = None

    def step(self):
        for name, p in self.params.items():
            g = p.grad
            if g is None:
                continue
            self.t[name] += 1
            t = self.t[name]
            m, v = self.m[name], self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            g *= g
            v *= self.beta2
            v += (1.0 - self.beta2) * g
            # bias corrections folded into the step size:
            #   lr * (m / (1-b1^t)) / (sqrt(v / (1-b2^t)) + eps)
            # = (lr * sqrt(1-b2^t) / (1-b1^t)) * m / (sqrt(v) + eps*sqrt(1-b2^t))
            corr2 = np.sqrt(1.0 - self.beta2 ** t)
            lr_t = self.lr * corr2 / (1.0 - self.beta1 ** t)
            denom = np.sqrt(v)
            denom += self.eps * corr2
            denom /= lr_t
            p.data -= m / denom

    def state_arrays(self, prefix):
        arrays = {}
        for name in self.params:
            arrays[f"{prefix}.m.{name}"] = self.m[name]
            arrays[f"{prefix}.v.{name}"] = self.v[name]
        return arrays

    def load_state_arrays(self, prefix, arrays, t_counts):
        for name in self.params:
            self.m[name] = arrays[f"{prefix}.m.{name}"].astype(
                self.m[name].dtype)
            self.v[name] = arrays[f"{prefix}.v.{name}"].astype(
                self.v[name].dtype)
        self.t = {k: int(v) for k, v in t_counts.items()}


class WindowBatcher:
    """Uniform with-replacement minibatch sampler over cached windows.

    Sampling state lives entirely in the caller's RNG, which keeps resume
    trajectories exact.
    """

    def __init__(self, windows, dtype=np.float64):
        windows = list(windows)
        if not windows:
            raise ValueError("empty window set")
        self.observed = np.stack([w[0] for w in windows]).astype(dtype)
        self.future = np.stack([w[1] for w in windows]).astype(dtype)

    def __len__(self):
        return self.observed.shape[0]

    def sample(self, batch_size, rng):
        idx = rng.integers(0, len(self), size=batch_size)
        return self.observed[idx], self.future[idx]


def critic_step(model: MotionGAN, batch, cfg: TrainConfig, optimizer: Adam,
                rng) -> LossRecord:
    """One update of the critics; generator parameters stay untouched."""
    observed, future = batch
    weights = cfg.weights
    G = len(model.chain_columns)
    B = observed.shape[0]
    L = model.config.latent_size
    dtype = model.config.np_dtype()
    noise = rng.standard_normal((G, B, L)).astype(dtype)
    with ad.no_grad():
        result = model.forward(observed, noise)
    if future.dtype != dtype:
        future = future.astype(dtype)

    record = LossRecord()
    total = None
    if model.local_critic_stack is not None and cfg.update_local_critics:
        real_stack = model.stack_chains(future)
        gaps = ls.critic_gap(model.local_critic_stack, real_stack,
                             result.decoded.data)
        gp = ls.gradient_penalty(model.local_critic_stack, real_stack,
                                 result.decoded.data,
                                 rng.uniform(size=(G, B, 1)))
        record.chain_wgan = [float(v) for v in gaps.data]
        record.gp_local = [float(v) for v in gp.data]
        total = ad.tensor_sum(gp) * weights.gp_coef - ad.tensor_sum(gaps)
    if cfg.update_global_critic:
        gap = ls.pose_wgan_loss(model.global_critic, future, result.pose.data)
        gp = ls.gradient_penalty(model.global_critic, future,
                                 result.pose.data, rng.uniform(size=(B, 1)))
        record.pose_wgan = gap.item()
        record.gp_global = gp.item()
        term = -gap + gp * weights.gp_coef
        total = term if total is None else total + term
    if total is None:
        return record
    record.total = total.item()
    optimizer.zero_grad()
    total.backward()
    optimizer.step()
    return record


def generator_step(model: MotionGAN, batch, cfg: TrainConfig,
                   optimizer: Adam, rng) -> LossRecord:
    """One update of the generators + aggregator; critics stay untouched."""
    observed, future = batch
    weights = cfg.weights
    G = len(model.chain_columns)
    B = observed.shape[0]
    L = model.config.latent_size
    dtype = model.config.np_dtype()
    noise = rng.standard_normal((G, B, L)).astype(dtype)
    result = model.forward(observed, noise)
    future_t = future if future.dtype == dtype else future.astype(dtype)

    record = LossRecord()
    total = None
    if model.local_critic_stack is not None:
        real_stack = model.stack_chains(future)
        gaps = ls.critic_gap(model.local_critic_stack, real_stack,
                             result.decoded)
        # population variance of the G chain gaps (vectorized stability)
        mean_gap = ad.mean(gaps)
        stability = ad.mean(ad.square(gaps - mean_gap))
        # per-chain mse on the padded stack; padding lanes are zero on
        # both sides, so only the true entry count is divided out
        sq = ad.square(result.decoded - real_stack)
        counts = np.asarray([B * sq.shape[2] * d for d in model.chain_dims])
        gt_vec = ad.tensor_sum(sq, axis=(1, 2, 3)) \
            * Tensor((1.0 / counts).astype(dtype))
        total = (ad.tensor_sum(gaps) * weights.alpha
                 + stability * (weights.beta * G)
                 + ad.tensor_sum(gt_vec) * weights.gamma)
        record.stability = stability.item()
        record.chain_wgan = [float(v) for v in gaps.data]
        record.chain_gt = [float(v) for v in gt_vec.data]
        record.local = [weights.alpha * cw + weights.beta * record.stability
                        + weights.gamma * gt
                        for cw, gt in zip(record.chain_wgan, record.chain_gt)]
    pose_gap = ls.pose_wgan_loss(model.global_critic, future_t, result.pose)
    last_obs = observed[:, -1, :]
    consistency = ls.consistency_loss(
        result.pose, last_obs if last_obs.dtype == dtype
        else last_obs.astype(dtype))
    pose_gt = ls.ground_truth_loss(result.pose, future_t)
    glob = ls.global_loss(weights, pose_gap, consistency, pose_gt)
    record.pose_wgan = pose_gap.item()
    record.consistency = consistency.item()
    record.pose_gt = pose_gt.item()
    record.global_loss = glob.item()
    total = glob if total is None else total + glob
    if weights.kl_coef > 0:
        kl = ls.kl_divergence(result.latent)
        record.kl = kl.item()
        total = total + kl * weights.kl_coef
    record.total = total.item()
    optimizer.zero_grad()
    for p in model.critic_parameters().values():
        p.grad = None
    total.backward()
    optimizer.step()
    return record


@dataclass
class TrainResult:
    records: list
    final_checkpoint: str | None
    steps_run: int


class Trainer:
    """Owns the model, both optimizers and the seeded RNG for one run."""

    def __init__(self, model: MotionGAN, cfg: TrainConfig, run_dir=None):
        self.model = model
        self.cfg = cfg
        self.run_dir = Path(run_dir) if run_dir else None
        self.rng = np.random.default_rng(cfg.seed)
        self.step = 0
        lr = cfg.learning_rate
        self.opt_gen = Adam(model.generator_parameters(), lr,
                            cfg.beta1, cfg.beta2, cfg.adam_eps)
        self.opt_critic = Adam(model.critic_parameters(), lr,
                               cfg.beta1, cfg.beta2, cfg.adam_eps)
        self.last_checkpoint = None
        if self.run_dir:
            self.run_dir.mkdir(parents=True, exist_ok=True)
            (self.run_dir / "checkpoints").mkdir(exist_ok=True)
            snapshot = self.run_dir / "config.json"
            snapshot.write_text(json.dumps(asdict(cfg), indent=2,
                                           sort_keys=True))

    # -- checkpointing -----------------------------------------------------

    def save(self, path) -> str:
        arrays = {}
        arrays.update(self.opt_gen.state_arrays("opt_gen"))
        arrays.update(self.opt_critic.state_arrays("opt_critic"))
        metadata = {
            "step": self.step,
            "rng_state": self.rng.bit_generator.state,
            "train_config": asdict(self.cfg),
            "config_hash": self.cfg.content_hash(),
            "opt_gen_t": self.opt_gen.t,
            "opt_critic_t": self.opt_critic.t,
        }
        save_checkpoint(path, self.model, extra_arrays=arrays,
                        metadata=metadata)
        self.last_checkpoint = str(path)
        return str(path)

    @classmethod
    def from_checkpoint(cls, path, run_dir=None) -> "Trainer":
        model, extra, metadata = load_checkpoint(path)
        doc = dict(metadata["train_config"])
        doc["weights"] = LossWeights(**doc["weights"])
        cfg = TrainConfig(**doc)
        trainer = cls(model, cfg, run_dir=run_dir)
        trainer.step = int(metadata["step"])
        state = metadata["rng_state"]
        trainer.rng.bit_generator.state = state
        trainer.opt_gen.load_state_arrays("opt_gen", extra,
                                          metadata["opt_gen_t"])
        trainer.opt_critic.load_state_arrays("opt_critic", extra,
                                             metadata["opt_critic_t"])
        return trainer

    # -- the loop ------------------------------------------------------------

    def run(self, windows, max_steps=None) -> TrainResult:
        """Train until cfg.max_steps (or max_steps), appending to the loss
        log; one step = n_critic critic updates + 1 generator update."""
        target = self.cfg.max_steps if max_steps is None else max_steps
        batcher = windows if isinstance(windows, WindowBatcher) \
            else WindowBatcher(windows, dtype=self.model.config.np_dtype())
        records = []
        log_fh = None
        if self.run_dir:
            log_fh = open(self.run_dir / "losses.jsonl", "a",
                          encoding="utf-8")
        try:
            while self.step < target:
                step = self.step + 1
                for _ in range(self.cfg.n_critic):
                    batch = batcher.sample(self.cfg.batch_size, self.rng)
                    crec = critic_step(self.model, batch, self.cfg,
                                       self.opt_critic, self.rng)
                    if not crec.is_finite():
                        raise TrainingDiverged(step, "critic", crec,
                                               self.last_checkpoint)
                batch = batcher.sample(self.cfg.batch_size, self.rng)
                grec = generator_step(self.model, batch, self.cfg,
                                      self.opt_gen, self.rng)
                if not grec.is_finite():
                    raise TrainingDiverged(step, "generator", grec,
                                           self.last_checkpoint)
                self.step = step
                entry = {"step": step,
                         "critic": crec.to_dict(),
                         "generator": grec.to_dict()}
                records.append(entry)
                if log_fh:
                    log_fh.write(json.dumps(entry, sort_keys=True) + "\n")
                if self.run_dir and step % self.cfg.checkpoint_interval == 0:
                    self.save(self.run_dir / "checkpoints"
                              / f"step_{step:08d}.ckpt")
        finally:
            if log_fh:
                log_fh.close()
        final = None
        if self.run_dir:
            final = self.save(self.run_dir / "checkpoints" / "final.ckpt")
        return TrainResult(records=records, final_checkpoint=final,
                           steps_run=self.step)


def train(model: MotionGAN, windows, cfg: TrainConfig,
          run_dir=None) -> TrainResult:
    """Convenience wrapper: build a Trainer and run it to cfg.max_steps."""
    return Trainer(model, cfg, run_dir=run_dir).run(windows)
