"""Training objectives: Wasserstein critic gaps, stability, consistency,
reconstruction, gradient penalty and the optional latent KL regularizer.

All functions build tape expressions (scalars) so gradients flow to both
generator and critic parameters; batch expectations are arithmetic means.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

# keeps the gradient-norm sqrt differentiable at zero without measurably
# shifting penalty values
NORM_EPS = 1e-24


@dataclass(frozen=True)
class LossWeights:
    """Weights of the chain-level and pose-level objectives.

    alpha/beta/gamma weight the chain critic gap, stability and chain
    reconstruction inside each local loss; lam/mu/eta weight the pose
    critic gap, consistency and pose reconstruction in the global loss.
    """

    alpha: float = 1.0
    beta: float = 0.1
    gamma: float = 10.0
    lam: float = 1.0
    mu: float = 0.1
    eta: float = 10.0
    gp_coef: float = 10.0
    kl_coef: float = 0.0

    def __post_init__(self):
        for name, value in asdict(self).items():
            if not np.isfinite(value) or value < 0:
                raise ValueError(f"loss weight {name} must be a finite "
                                 f"non-negative real, got {value}")


@dataclass
class LossRecord:
    """Scalar loss values captured at one training step."""

    chain_wgan: list = field(default_factory=list)
    chain_gt: list = field(default_factory=list)
    local: list = field(default_factory=list)
    gp_local: list = field(default_factory=list)
    stability: float = 0.0
    pose_wgan: float = 0.0
    consistency: float = 0.0
    pose_gt: float = 0.0
    global_loss: float = 0.0
    gp_global: float = 0.0
    kl: float = 0.0
    total: float = 0.0

    def to_dict(self) -> dict:
        return asdict(self)

    def all_values(self):
        for v in (self.stability, self.pose_wgan, self.consistency,
                  self.pose_gt, self.global_loss, self.gp_global, self.kl,
                  self.total):
            yield v
        for seq in (self.chain_wgan, self.chain_gt, self.local, self.gp_local):
            yield from seq

    def is_finite(self) -> bool:
        return all(np.isfinite(v) for v in self.all_values())


def chain_wgan_loss(critic, real_batch, fake_batch) -> Tensor:
    """Mean critic score on real futures minus mean score on generated ones.

    Critics ascend this value; generators descend it (by raising their
    fakes' scores).
    """
    real = ad.as_tensor(real_batch)
    fake = ad.as_tensor(fake_batch)
    if real.shape != fake.shape:
        raise ValueError(f"real/fake batch shapes differ: "
                         f"{real.shape} vs {fake.shape}")
    B = real.shape[0]
    scores = critic.score(ad.concat([real, fake], axis=0))
    return ad.reshape(ad.mean(scores[:, :B]) - ad.mean(scores[:, B:]), ())


def pose_wgan_loss(critic, real_batch, fake_batch) -> Tensor:
    """The same critic gap evaluated by the global critic on pose windows."""
    return chain_wgan_loss(critic, real_batch, fake_batch)


def critic_gap(critic_stack, real_batch, fake_batch) -> Tensor:
    """Per-group critic gaps for a stacked critic: returns a (G,) tensor.

    Inputs are (G, B, F) or (G, B, T, d) stacks; semantics per group match
    chain_wgan_loss.
    """
    real = ad.as_tensor(real_batch)
    fake = ad.as_tensor(fake_batch)
    if real.shape != fake.shape:
        raise ValueError(f"real/fake batch shapes differ: "
                         f"{real.shape} vs {fake.shape}")
    B = real.shape[1]
    scores = critic_stack.score(ad.concat([real, fake], axis=1))
    return ad.mean(scores[:, :B], axis=(1, 2)) \
        - ad.mean(scores[:, B:], axis=(1, 2))


def stability_loss(chain_losses) -> Tensor:
    """Population variance of the five chain critic gaps.

    Discourages any one chain's adversarial game from running away from
    the others; invariant under adding a constant to every input.
    """
    losses = [ad.as_tensor(v) for v in chain_losses]
    n = float(len(losses))
    mean = losses[0]
    for v in losses[1:]:
        mean = mean + v
    mean = mean * (1.0 / n)
    var = ad.square(losses[0] - mean)
    for v in losses[1:]:
        var = var + ad.square(v - mean)
    return var * (1.0 / n)


def ground_truth_loss(pred, truth) -> Tensor:
    """Mean squared error over all entries."""
    pred = ad.as_tensor(pred)
    truth = ad.as_tensor(truth)
    if pred.shape != truth.shape:
        raise ValueError(f"prediction/truth shapes differ: "
                         f"{pred.shape} vs {truth.shape}")
    return ad.mean(ad.square(pred - truth))


def local_loss(weights: LossWeights, chain_wgan, stability, chain_gt) -> Tensor:
    """Chain-level objective: alpha * gap + beta * stability + gamma * mse."""
    return (ad.as_tensor(chain_wgan) * weights.alpha
            + ad.as_tensor(stability) * weights.beta
            + ad.as_tensor(chain_gt) * weights.gamma)


def consistency_loss(pred, last_observed) -> Tensor:
    """Sum of squared inter-frame differences over the predicted window.

    The first term penalises the seam between the last observed frame and
    the first predicted frame; batched inputs average over the batch.
    """
    pred = ad.as_tensor(pred)
    last = ad.as_tensor(last_observed)
    if pred.ndim == 2:
        pred = ad.reshape(pred, (1,) + tuple(pred.shape))
        last = ad.reshape(last, (1,) + tuple(last.shape))
    B, T, D = pred.shape
    if last.shape != (B, D):
        raise ValueError(f"last_observed must be ({B}, {D}), got {last.shape}")
    seam = pred[:, 0, :] - last
    total = ad.tensor_sum(ad.square(seam))
    if T > 1:
        steps = pred[:, 1:, :] - pred[:, :-1, :]
        total = total + ad.tensor_sum(ad.square(steps))
    return total * (1.0 / B)


def global_loss(weights: LossWeights, pose_wgan, consistency, pose_gt) -> Tensor:
    """Pose-level objective: lam * gap + mu * consistency + eta * mse."""
    return (ad.as_tensor(pose_wgan) * weights.lam
            + ad.as_tensor(consistency) * weights.mu
            + ad.as_tensor(pose_gt) * weights.eta)


def gradient_penalty(critic, real_batch, fake_batch, eps_hat) -> Tensor:
    """Two-sided gradient penalty on real/fake interpolates.

    x_hat = eps_hat * real + (1 - eps_hat) * fake with eps_hat uniform per
    sample; the penalty is the batch mean of (||d critic / d x_hat|| - 1)^2.
    The critic's input gradient is built in closed form, so one ordinary
    backward pass yields the penalty's parameter gradients.

    Single critics get a scalar; a stacked critic gets per-group penalties
    as a (G,) tensor.
    """
    real = np.asarray(real_batch.data if isinstance(real_batch, Tensor)
                      else real_batch)
    fake = np.asarray(fake_batch.data if isinstance(fake_batch, Tensor)
                      else fake_batch)
    if real.shape != fake.shape:
        raise ValueError(f"real/fake batch shapes differ: "
                         f"{real.shape} vs {fake.shape}")
    G = critic.n_groups
    if G == 1:
        real = real.reshape(real.shape[0], -1)
        fake = fake.reshape(fake.shape[0], -1)
        B = real.shape[0]
        eps = np.broadcast_to(np.asarray(eps_hat, dtype=real.dtype)
                              .reshape(-1, 1), (B, 1))
    else:
        real = real.reshape(G, real.shape[1], -1)
        fake = fake.reshape(G, fake.shape[1], -1)
        B = real.shape[1]
        eps = np.broadcast_to(np.asarray(eps_hat, dtype=real.dtype)
                              .reshape(-1, B, 1), (G, B, 1))
    x_hat = eps * real + (1.0 - eps) * fake
    grad = critic.input_gradient(Tensor(x_hat))           # (G, B, F)
    norm = ad.sqrt(ad.tensor_sum(ad.square(grad), axis=2) + NORM_EPS)
    per_group = ad.mean(ad.square(norm - 1.0), axis=1)
    if G == 1:
        return ad.reshape(per_group, ())
    return per_group


def kl_divergence(code) -> Tensor:
    """KL(q(z|x) || N(0, I)) summed over latent dims, averaged over batch.

    Accepts (B, L) mean/logvar or the stacked (G, B, L) layout, in which
    case per-chain divergences are summed.
    """
    mean, logvar = code.mean, code.logvar
    term = ad.exp(logvar) + ad.square(mean) - 1.0 - logvar
    if mean.ndim == 2:
        per_sample = ad.tensor_sum(term, axis=1)
    elif mean.ndim == 3:
        per_sample = ad.tensor_sum(term, axis=(0, 2))
    else:
        raise ValueError("latent code must be (B, L) or (G, B, L)")
    return ad.mean(per_sample) * 0.5
