"""The two control mechanisms over predicted motion.

Action transfer bridges a source sequence into a target action: a next-pose
VAE (the same per-chain encoder/decoder stack, trained on single-frame
prediction with reconstruction + KL only) encodes both windows, the latents
are interpolated on a fixed schedule, and each interpolated latent decodes
to one transition pose.

Fine-grained control runs per-action models over an observed window and
swaps selected chains' decoded futures with another action's before the
base model's aggregation layer fuses the final pose sequence.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import autodiff as ad
from . import losses as ls
from .autodiff import Tensor
from .model import MotionGAN, load_checkpoint, save_checkpoint
from .training import Adam, TrainConfig, WindowBatcher


class ControlError(ValueError):
    pass


@dataclass(frozen=True)
class TransferConfig:
    """Transition length and interpolation schedule.

    The default schedule is linear with lambda_k = k / (K + 1); "spherical"
    interpolates along the great arc between the two latents.
    """

    n_transition: int = 6
    schedule: str = "linear"

    def __post_init__(self):
        if self.n_transition < 1:
            raise ControlError("n_transition must be >= 1")
        if self.schedule not in ("linear", "spherical"):
            raise ControlError(f"unknown schedule {self.schedule!r}")

    def lambdas(self) -> np.ndarray:
        K = self.n_transition
        return np.arange(1, K + 1) / (K + 1)


def _slerp(z1: np.ndarray, z2: np.ndarray, lam: float) -> np.ndarray:
    n1 = np.linalg.norm(z1)
    n2 = np.linalg.norm(z2)
    if n1 < 1e-12 or n2 < 1e-12:
        return (1.0 - lam) * z1 + lam * z2
    cos = float(np.clip(np.dot(z1.ravel(), z2.ravel()) / (n1 * n2), -1.0, 1.0))
    omega = np.arccos(cos)
    if omega < 1e-8:
        return (1.0 - lam) * z1 + lam * z2
    return (np.sin((1.0 - lam) * omega) * z1 + np.sin(lam * omega) * z2) \
        / np.sin(omega)


def interpolate_latents(z1, z2, cfg: TransferConfig):
    """K latents between z1 and z2 following the configured schedule."""
    z1 = np.asarray(z1, dtype=np.float64)
    z2 = np.asarray(z2, dtype=np.float64)
    if z1.shape != z2.shape:
        raise ControlError(f"latent shapes differ: {z1.shape} vs {z2.shape}")
    out = []
    for lam in cfg.lambdas():
        if cfg.schedule == "spherical":
            out.append(_slerp(z1, z2, float(lam)))
        else:
            out.append((1.0 - lam) * z1 + lam * z2)
    return out


class NextPoseVAE:
    """Per-chain encoder/decoder stack emitting exactly one future pose."""

    def __init__(self, model: MotionGAN):
        if model.config.predict_len != 1:
            raise ControlError("a next-pose model must have predict_len 1")
        self.model = model
        self.trained = False

    def encode_window(self, window: np.ndarray) -> np.ndarray:
        """Mean latent (G, L) of one observed (t, D) pose window."""
        window = np.asarray(window)
        if window.ndim != 2:
            raise ControlError("window must be (t, pose_dim)")
        with ad.no_grad():
            code = self.model.generators.encode(
                self.model.stack_chains(window[None]))
        return code.mean.data[:, 0, :].astype(np.float64)

    def decode_pose(self, z: np.ndarray, seed_frame: np.ndarray) -> np.ndarray:
        """One aggregated pose (D,) from stacked latents (G, L)."""
        dtype = self.model.config.np_dtype()
        z = np.asarray(z, dtype=dtype)[:, None, :]
        seed = self.model.stack_chains(
            np.asarray(seed_frame)[None, None, :])[:, :, 0, :]
        with ad.no_grad():
            decoded = self.model.generators.decode(Tensor(z), seed, 1)
            pose = self.model.assemble_pose(decoded)
        return pose.data[0, 0].astype(np.float64)

    def save(self, path) -> None:
        save_checkpoint(path, self.model, metadata={"next_pose_vae": True,
                                                    "trained": self.trained})

    @classmethod
    def load(cls, path) -> "NextPoseVAE":
        model, _, metadata = load_checkpoint(path)
        if not metadata.get("next_pose_vae"):
            raise ControlError(f"{path}: not a next-pose model checkpoint")
        vae = cls(model)
        vae.trained = bool(metadata.get("trained"))
        return vae


def train_next_pose_vae(vae: NextPoseVAE, windows, cfg: TrainConfig,
                        kl_coef: float = 1e-3):
    """Unsupervised training: pose reconstruction plus a small KL term.

    No critics are involved; windows must have predict_len 1.  A smooth
    latent space (the KL pull toward the unit Gaussian) is what makes
    interpolated latents decode to plausible in-between poses.
    """
    model = vae.model
    dtype = model.config.np_dtype()
    rng = np.random.default_rng(cfg.seed)
    batcher = WindowBatcher(windows, dtype=dtype)
    optimizer = Adam(model.generator_parameters(), cfg.learning_rate,
                     cfg.beta1, cfg.beta2, cfg.adam_eps)
    G = len(model.chain_columns)
    L = model.config.latent_size
    records = []
    for step in range(1, cfg.max_steps + 1):
        observed, future = batcher.sample(cfg.batch_size, rng)
        noise = rng.standard_normal((G, observed.shape[0], L)).astype(dtype)
        result = model.forward(observed, noise)
        recon = ls.ground_truth_loss(result.pose, future)
        kl = ls.kl_divergence(result.latent)
        loss = recon + kl * kl_coef
        optimizer.zero_grad()
        for p in model.critic_parameters().values():
            p.grad = None
        loss.backward()
        optimizer.step()
        rec = {"step": step, "recon": recon.item(), "kl": kl.item(),
               "total": loss.item()}
        if not all(np.isfinite(v) for v in rec.values()):
            raise ControlError(f"non-finite loss at step {step}")
        records.append(rec)
    vae.trained = True
    return records


def action_transfer(vae: NextPoseVAE, source_seq: np.ndarray,
                    target_seq: np.ndarray,
                    cfg: TransferConfig | None = None) -> np.ndarray:
    """Generate K transition poses bridging source into target.

    source_seq and target_seq are equal-length observed windows (t, D);
    the target window should be the t frames preceding the continuation
    the transfer is meant to land on.  Returns a (K, D) pose matrix;
    splicing source + transition + continuation gives the full sequence.
    """
    if not vae.trained:
        raise ControlError("the next-pose model has not been trained")
    cfg = cfg or TransferConfig()
    source_seq = np.asarray(source_seq, dtype=np.float64)
    target_seq = np.asarray(target_seq, dtype=np.float64)
    if source_seq.shape != target_seq.shape or source_seq.ndim != 2:
        raise ControlError("source and target windows must both be (t, D)")
    z1 = vae.encode_window(source_seq)
    z2 = vae.encode_window(target_seq)
    lams = cfg.lambdas()
    latents = interpolate_latents(z1, z2, cfg)
    frames = []
    for lam, z in zip(lams, latents):
        # the residual decoder needs a base frame; blend the two windows'
        # last frames on the same schedule so the endpoints line up
        seed = (1.0 - lam) * source_seq[-1] + lam * target_seq[-1]
        frames.append(vae.decode_pose(z, seed))
    return np.stack(frames)


def splice_transfer(source_seq, transition, continuation) -> np.ndarray:
    """source || transition || continuation as one motion matrix."""
    return np.concatenate([np.asarray(source_seq, dtype=np.float64),
                           np.asarray(transition, dtype=np.float64),
                           np.asarray(continuation, dtype=np.float64)],
                          axis=0)


class ActionModelRegistry:
    """Per-action trained models sharing one skeleton topology."""

    def __init__(self):
        self._models = {}
        self._topology_hash = None

    def register(self, action: str, model: MotionGAN) -> None:
        h = model.topology.content_hash()
        if self._topology_hash is None:
            self._topology_hash = h
        elif h != self._topology_hash:
            raise ControlError(f"model for {action!r} uses a different "
                               f"topology than the registry")
        self._models[action] = model

    def model(self, action: str) -> MotionGAN:
        if action not in self._models:
            raise ControlError(f"unknown action {action!r}; registered: "
                               f"{sorted(self._models)}")
        return self._models[action]

    @property
    def actions(self):
        return sorted(self._models)

    def save_manifest(self, path, checkpoint_paths: dict) -> None:
        doc = {"version": 1,
               "topology_hash": self._topology_hash,
               "actions": {a: str(checkpoint_paths[a]) for a in self._models}}
        Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True))

    @classmethod
    def from_manifest(cls, path) -> "ActionModelRegistry":
        doc = json.loads(Path(path).read_text())
        if doc.get("version") != 1:
            raise ControlError(f"{path}: unsupported manifest version")
        base = Path(path).parent
        registry = cls()
        for action, ckpt in sorted(doc["actions"].items()):
            ckpt_path = Path(ckpt)
            if not ckpt_path.is_absolute():
                ckpt_path = base / ckpt_path
            model, _, _ = load_checkpoint(ckpt_path)
            registry.register(action, model)
        if doc.get("topology_hash") and \
                registry._topology_hash != doc["topology_hash"]:
            raise ControlError(f"{path}: checkpoints do not match the "
                               f"manifest topology hash")
        return registry


@dataclass
class FineControlResult:
    pose: np.ndarray             # (T, D) final aggregated prediction
    mixed_stack: np.ndarray      # (G, 1, T, d_max) after substitution
    base_stack: np.ndarray       # (G, 1, T, d_max) base model's chains


def fine_grained_control(registry: ActionModelRegistry, observed: np.ndarray,
                         base_action: str, overrides: dict,
                         noise: np.ndarray | None = None,
                         return_details: bool = False):
    """Predict with the base action's model, overriding chosen chains.

    overrides maps chain id (1..5) to a donor action; each overridden
    chain's decoded future is replaced by the donor model's before the
    base model's aggregation layer produces the final (T, D) sequence.
    The same per-chain noise drives every model involved, so overriding a
    chain with the base action itself is a no-op.
    """
    base = registry.model(base_action)
    observed = np.asarray(observed, dtype=np.float64)
    if observed.ndim != 2 or observed.shape[1] != base.topology.pose_dim:
        raise ControlError("observed must be (t, pose_dim)")
    for chain_id in overrides:
        if chain_id not in base.chain_order:
            raise ControlError(f"invalid chain id {chain_id}")

    noise_b = None if noise is None else np.asarray(noise)[:, None, :]

    def decoded_stack(model):
        with ad.no_grad():
            return model.forward(observed[None], noise_b).decoded.data

    base_stack = decoded_stack(base)
    mixed = base_stack.copy()
    for chain_id, action in sorted(overrides.items()):
        donor = registry.model(action)
        g = base.group_of_chain(chain_id)
        mixed[g] = decoded_stack(donor)[donor.group_of_chain(chain_id)]
    with ad.no_grad():
        pose = base.assemble_pose(Tensor(mixed)).data[0].astype(np.float64)
    if return_details:
        return FineControlResult(pose=pose, mixed_stack=mixed,
                                 base_stack=base_stack)
    return pose
