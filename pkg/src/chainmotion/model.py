"""The composite motion-prediction model.

Five recurrent VAE generators (one per kinematic chain) run as a stacked
group; their decoded chain futures are fused frame-wise by an aggregation
layer into whole-body poses.  Five local critics score chain futures and a
global critic scores aggregated pose futures (unbounded Wasserstein-style
scores).  A single-group variant (one whole-pose generator, global critic
only) backs the no-decomposition ablation.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, asdict, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .kinematics import N_CHAINS, SkeletonTopology

CHECKPOINT_MAGIC = b"CMCKPT\x00"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class ModelConfig:
    """Network sizes; defaults follow the full-scale configuration."""

    hidden_size: int = 1024
    latent_size: int = 128
    aggregator_hidden: int = 1024
    local_critic_width: int = 512
    global_critic_width: int = 1024
    predict_len: int = 25
    single_generator: bool = False
    dtype: str = "float64"

    def np_dtype(self):
        return np.dtype(self.dtype)


@dataclass
class LatentCode:
    """Encoder output: per-chain latent mean and log-variance tensors."""

    mean: Tensor
    logvar: Tensor


def reparameterize(code: LatentCode, eps) -> Tensor:
    """sample = mean + exp(logvar / 2) * eps."""
    eps = ad.as_tensor(eps)
    return code.mean + ad.exp(code.logvar * 0.5) * eps


def _uniform_init(rng, fan_in: int, shape, dtype) -> np.ndarray:
    bound = 1.0 / np.sqrt(max(fan_in, 1))
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


class ChainGeneratorStack:
    """G per-chain recurrent VAE generators evaluated in lock step.

    Parameters carry a leading group axis; chains narrower than the padded
    feature width rely on zero padding (see autodiff kernel notes).
    """

    def __init__(self, chain_dims, hidden_size, latent_size, rng, dtype):
        self.chain_dims = list(chain_dims)
        G = len(self.chain_dims)
        H, L = hidden_size, latent_size
        dmax = max(self.chain_dims)
        self.d_max = dmax
        self.hidden_size = H
        self.latent_size = L

        def stacked(fan, shape_per_group, pad_axis=None):
            out = np.zeros((G,) + shape_per_group, dtype=dtype)
            for g, d in enumerate(self.chain_dims):
                shape = list(shape_per_group)
                if pad_axis is not None:
                    shape[pad_axis] = d
                block = _uniform_init(rng, d if fan == "chain" else fan,
                                      tuple(shape), dtype)
                if pad_axis is None:
                    out[g] = block
                elif pad_axis == 0:
                    out[g, :d] = block
                else:
                    out[g, :, :d] = block
            return ad.parameter(out)

        self.enc_wx = stacked("chain", (dmax, 3 * H), pad_axis=0)
        self.enc_wh = stacked(H, (H, 3 * H))
        self.enc_b = ad.parameter(np.zeros((G, 1, 3 * H), dtype=dtype))
        self.w_mean = stacked(H, (H, L))
        self.b_mean = ad.parameter(np.zeros((G, 1, L), dtype=dtype))
        self.w_logvar = stacked(H, (H, L))
        self.b_logvar = ad.parameter(np.zeros((G, 1, L), dtype=dtype))
        self.w_init = stacked(L, (L, H))
        self.b_init = ad.parameter(np.zeros((G, 1, H), dtype=dtype))
        self.dec_wx = stacked("chain", (dmax, 3 * H), pad_axis=0)
        self.dec_wh = stacked(H, (H, 3 * H))
        self.dec_b = ad.parameter(np.zeros((G, 1, 3 * H), dtype=dtype))
        self.dec_wo = stacked(H, (H, dmax), pad_axis=1)
        self.dec_bo = ad.parameter(np.zeros((G, 1, dmax), dtype=dtype))

    @property
    def n_groups(self) -> int:
        return len(self.chain_dims)

    def parameters(self):
        return {"enc_wx": self.enc_wx, "enc_wh": self.enc_wh,
                "enc_b": self.enc_b, "w_mean": self.w_mean,
                "b_mean": self.b_mean, "w_logvar": self.w_logvar,
                "b_logvar": self.b_logvar, "w_init": self.w_init,
                "b_init": self.b_init, "dec_wx": self.dec_wx,
                "dec_wh": self.dec_wh, "dec_b": self.dec_b,
                "dec_wo": self.dec_wo, "dec_bo": self.dec_bo}

    def encode(self, x_stack) -> LatentCode:
        """x_stack: (G, B, t, d_max) zero-padded chain sequences."""
        x_stack = ad.as_tensor(x_stack)
        G, B = x_stack.shape[0], x_stack.shape[1]
        h0 = np.zeros((G, B, self.hidden_size), dtype=x_stack.data.dtype)
        h = ad.gru_final_state(x_stack, Tensor(h0), self.enc_wx,
                               self.enc_wh, self.enc_b)
        mean = ad.bmatmul(h, self.w_mean) + self.b_mean
        logvar = ad.bmatmul(h, self.w_logvar) + self.b_logvar
        return LatentCode(mean, logvar)

    def decode(self, z, seed_stack, n_steps: int) -> Tensor:
        """Roll out (G, B, T, d_max) residual frames from latents z."""
        h0 = ad.bmatmul(z, self.w_init) + self.b_init
        return ad.gru_decode(ad.as_tensor(seed_stack), h0, self.dec_wx,
                             self.dec_wh, self.dec_b, self.dec_wo,
                             self.dec_bo, n_steps)


class Aggregator:
    """Frame-wise fusion of concatenated chain frames into a pose frame.

    A linear skip path (initialised to the chain-to-pose permutation, so
    the layer starts as a plain reorder) plus a one-hidden-layer tanh MLP
    correction.  Input rows outside ``active_rows`` (padding lanes of the
    stacked chain layout) are zero-initialised and stay zero.
    """

    def __init__(self, skip_init, hidden, rng, dtype, active_rows=None):
        d_in, d_out = skip_init.shape
        self.skip = ad.parameter(skip_init.astype(dtype))
        w1 = _uniform_init(rng, d_in if active_rows is None
                           else len(active_rows), (d_in, hidden), dtype)
        if active_rows is not None:
            inactive = np.setdiff1d(np.arange(d_in), active_rows)
            w1[inactive] = 0.0
        self.w1 = ad.parameter(w1)
        self.b1 = ad.parameter(np.zeros(hidden, dtype=dtype))
        self.w2 = ad.parameter(_uniform_init(rng, hidden, (hidden, d_out), dtype))
        self.b2 = ad.parameter(np.zeros(d_out, dtype=dtype))

    def parameters(self):
        return {"skip": self.skip, "w1": self.w1, "b1": self.b1,
                "w2": self.w2, "b2": self.b2}

    def forward(self, seq: Tensor) -> Tensor:
        """seq: (B, T, d_in) -> (B, T, d_out); no temporal mixing."""
        B, T, d_in = seq.shape
        flat = ad.reshape(seq, (B * T, d_in))
        hidden = ad.tanh(ad.affine(flat, self.w1, self.b1))
        out = ad.matmul(flat, self.skip) + ad.affine(hidden, self.w2, self.b2)
        return ad.reshape(out, (B, T, self.skip.shape[1]))


class Critic:
    """A stack of fully connected feedforward critics (one per group),
    each emitting one unbounded score per input sequence.

    n_groups = 1 is a single critic (the global critic, or any spec-level
    local critic); the five local critics run as one n_groups = 5 stack.
    hidden_widths = [] gives pure linear critics (used by tests); the
    standard configuration is two tanh hidden layers plus a linear head,
    i.e. three affine layers.  Per-group input widths below input_dim rely
    on zero padding (zero-initialised rows receive zero gradients).
    """

    def __init__(self, input_dim, hidden_widths, rng, dtype, n_groups=1,
                 active_input_rows=None):
        self.input_dim = input_dim
        self.n_groups = n_groups
        if active_input_rows is None:
            active_input_rows = [np.arange(input_dim)] * n_groups
        self.active_input_rows = [np.asarray(r, dtype=np.intp)
                                  for r in active_input_rows]
        self.weights = []
        self.biases = []
        widths = list(hidden_widths) + [1]
        prev = input_dim
        for li, w in enumerate(widths):
            block = np.zeros((n_groups, prev, w), dtype=dtype)
            for g in range(n_groups):
                if li == 0:
                    rows = self.active_input_rows[g]
                    block[g, rows] = _uniform_init(rng, rows.size,
                                                   (rows.size, w), dtype)
                else:
                    block[g] = _uniform_init(rng, prev, (prev, w), dtype)
            self.weights.append(ad.parameter(block))
            self.biases.append(ad.parameter(np.zeros((n_groups, 1, w),
                                                     dtype=dtype)))
            prev = w

    def parameters(self):
        params = {}
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            params[f"w{i}"] = w
            params[f"b{i}"] = b
        return params

    def _lift(self, seq):
        """Normalize input to (G, B, input_dim)."""
        seq = ad.as_tensor(seq)
        if self.n_groups == 1 and seq.ndim == 3:
            # (B, T, d) sequence for a single critic
            B = seq.shape[0]
            seq = ad.reshape(seq, (1, B, seq.shape[1] * seq.shape[2]))
        elif seq.ndim == 2:
            seq = ad.reshape(seq, (1,) + tuple(seq.shape))
        elif seq.ndim == 4:
            G, B = seq.shape[0], seq.shape[1]
            seq = ad.reshape(seq, (G, B, seq.shape[2] * seq.shape[3]))
        if seq.shape[0] != self.n_groups or seq.shape[2] != self.input_dim:
            raise ValueError(
                f"critic stack expects ({self.n_groups}, B, {self.input_dim}) "
                f"inputs, got {seq.shape}")
        return seq

    def score(self, seq) -> Tensor:
        """Flattened sequences -> (G, B, 1) scores (no output squashing).

        Accepts (G, B, F), (G, B, T, d), or for single-group critics the
        unstacked (B, F) / (B, T, d) layouts.
        """
        h = self._lift(seq)
        for w, b in zip(self.weights[:-1], self.biases[:-1]):
            h = ad.tanh(ad.baffine(h, w, b))
        return ad.baffine(h, self.weights[-1], self.biases[-1])

    def input_gradient(self, seq) -> Tensor:
        """d score / d input as a differentiable tape expression.

        Built in closed form from the layer structure so that one ordinary
        backward pass yields exact parameter gradients of gradient-norm
        penalties (no second-order tape support needed).
        """
        x = self._lift(seq)
        hiddens = []
        h = x
        for w, b in zip(self.weights[:-1], self.biases[:-1]):
            h = ad.tanh(ad.baffine(h, w, b))
            hiddens.append(h)
        B = x.shape[1]
        ones = Tensor(np.ones((self.n_groups, B, 1), dtype=x.data.dtype))
        g = ad.bmatmul(ones, ad.btranspose(self.weights[-1]))
        for h, w in zip(reversed(hiddens), reversed(self.weights[:-1])):
            g = ad.bmatmul(g * (1.0 - ad.square(h)), ad.btranspose(w))
        return g

    def group_view(self, g: int) -> "Critic":
        """A read-only single-critic view of group g (shared arrays)."""
        view = object.__new__(Critic)
        view.input_dim = self.input_dim
        view.n_groups = 1
        view.active_input_rows = [self.active_input_rows[g]]
        view.weights = [Tensor(w.data[g:g + 1]) for w in self.weights]
        view.biases = [Tensor(b.data[g:g + 1]) for b in self.biases]
        return view


@dataclass
class ForwardResult:
    """Everything a training step needs from one generator pass."""

    pose: Tensor                 # (B, T, D) aggregated prediction
    decoded: Tensor              # (G, B, T, d_max) padded chain predictions
    latent: LatentCode
    z: Tensor


class MotionGAN:
    """Generators, aggregator and critics bound to one skeleton topology."""

    def __init__(self, topology: SkeletonTopology, config: ModelConfig,
                 seed: int = 0, chain_order=None):
        self.topology = topology
        self.config = config
        dtype = config.np_dtype()
        rng = np.random.default_rng(np.random.SeedSequence(seed))

        if config.single_generator:
            self.chain_order = [0]
            self.chain_columns = [np.arange(topology.pose_dim)]
        else:
            self.chain_order = list(chain_order or range(1, N_CHAINS + 1))
            if sorted(self.chain_order) != list(range(1, N_CHAINS + 1)):
                raise ValueError("chain_order must permute 1..5")
            self.chain_columns = [topology.chain_columns(cid)
                                  for cid in self.chain_order]
        self.chain_dims = [len(c) for c in self.chain_columns]

        self.generators = ChainGeneratorStack(
            self.chain_dims, config.hidden_size, config.latent_size,
            rng, dtype)

        T = config.predict_len
        d_max = self.generators.d_max
        G = len(self.chain_dims)
        if config.single_generator:
            self.aggregator = None
            self.local_critic_stack = None
        else:
            # skip path maps the padded stacked layout (G * d_max lanes,
            # chain order) onto the pose layout; padding rows stay zero
            active = []
            skip = np.zeros((G * d_max, topology.pose_dim))
            for g, cols in enumerate(self.chain_columns):
                rows = g * d_max + np.arange(cols.size)
                skip[rows, cols] = 1.0
                active.extend(rows.tolist())
            self.aggregator = Aggregator(skip, config.aggregator_hidden,
                                         rng, dtype,
                                         active_rows=np.asarray(active))
            # flattened (T, d_max) layout interleaves padding per frame
            critic_rows = [
                (np.arange(T)[:, None] * d_max + np.arange(d)[None, :]).ravel()
                for d in self.chain_dims]
            self.local_critic_stack = Critic(
                T * d_max, [config.local_critic_width] * 2, rng, dtype,
                n_groups=G, active_input_rows=critic_rows)
        self.global_critic = Critic(T * topology.pose_dim,
                                    [config.global_critic_width] * 2,
                                    rng, dtype)

    # -- parameter bookkeeping -------------------------------------------

    def named_parameters(self):
        params = {}
        for name, p in self.generators.parameters().items():
            params[f"gen.{name}"] = p
        if self.aggregator is not None:
            for name, p in self.aggregator.parameters().items():
                params[f"agg.{name}"] = p
        if self.local_critic_stack is not None:
            for name, p in self.local_critic_stack.parameters().items():
                params[f"critic.local.{name}"] = p
        for name, p in self.global_critic.parameters().items():
            params[f"critic.global.{name}"] = p
        return params

    def generator_parameters(self):
        return {k: v for k, v in self.named_parameters().items()
                if k.startswith(("gen.", "agg."))}

    def critic_parameters(self):
        return {k: v for k, v in self.named_parameters().items()
                if k.startswith("critic.")}

    # -- data marshalling ---------------------------------------------------

    def stack_chains(self, frames: np.ndarray) -> np.ndarray:
        """(B, N, D) pose sequences -> zero-padded (G, B, N, d_max)."""
        frames = np.asarray(frames)
        B, N, _ = frames.shape
        G = len(self.chain_columns)
        out = np.zeros((G, B, N, self.generators.d_max),
                       dtype=self.config.np_dtype())
        for g, cols in enumerate(self.chain_columns):
            out[g, :, :, :cols.size] = frames[:, :, cols]
        return out

    def chain_futures(self, future: np.ndarray):
        """Real future windows restricted to each chain, for the critics."""
        future = np.asarray(future)
        if future.dtype != self.config.np_dtype():
            future = future.astype(self.config.np_dtype())
        return [future[:, :, cols] for cols in self.chain_columns]

    def assemble_pose(self, decoded: Tensor) -> Tensor:
        """(G, B, T, d_max) padded chain predictions -> (B, T, D) poses."""
        G, B, T, d_max = decoded.shape
        if self.aggregator is None:
            return ad.reshape(decoded, (B, T, d_max))
        stacked = ad.reshape(ad.permute(decoded, (1, 2, 0, 3)),
                             (B, T, G * d_max))
        return self.aggregator.forward(stacked)

    def split_decoded(self, decoded: np.ndarray):
        """Padded (G, B, T, d_max) array -> list of true (B, T, d_j)."""
        return [decoded[g, :, :, :d] for g, d in enumerate(self.chain_dims)]

    # -- forward paths ------------------------------------------------------

    def forward(self, observed: np.ndarray, noise=None,
                predict_len=None) -> ForwardResult:
        """observed: (B, t, D) pose windows; noise: (G, B, L) or None.

        None noise means the mean latent (deterministic prediction).
        """
        observed = np.asarray(observed)
        if observed.ndim != 3 or observed.shape[2] != self.topology.pose_dim:
            raise ValueError("observed must be (B, t, pose_dim)")
        T = predict_len or self.config.predict_len
        x = self.stack_chains(observed)
        code = self.generators.encode(x)
        if noise is None:
            z = code.mean
        else:
            z = reparameterize(code, np.asarray(
                noise, dtype=self.config.np_dtype()))
        seed = np.ascontiguousarray(x[:, :, -1, :])
        decoded = self.generators.decode(z, seed, T)
        pose = self.assemble_pose(decoded)
        return ForwardResult(pose=pose, decoded=decoded, latent=code, z=z)

    def predict_sequence(self, observed: np.ndarray, noise=None,
                         predict_len=None) -> np.ndarray:
        """Single-window prediction: (t, D) observed -> (T, D) future."""
        observed = np.asarray(observed)
        if observed.ndim != 2:
            raise ValueError("observed must be (t, pose_dim)")
        if noise is not None:
            noise = np.asarray(noise)[:, None, :]
        with ad.no_grad():
            result = self.forward(observed[None], noise, predict_len)
        return result.pose.data[0].astype(np.float64)

    # -- per-chain access (control mechanisms, tests) -------------------------

    def group_of_chain(self, chain_id: int) -> int:
        return self.chain_order.index(chain_id)

    def local_critic(self, chain_id: int) -> Critic:
        """Single-critic view of one chain's critic."""
        if self.local_critic_stack is None:
            raise ValueError("this model has no local critics")
        return self.local_critic_stack.group_view(self.group_of_chain(chain_id))

    def local_critic_score(self, chain_id: int, chain_seq) -> np.ndarray:
        """Critic scores (B,) for (B, T, d_j) or (T, d_j) chain futures."""
        g = self.group_of_chain(chain_id)
        seq = np.asarray(chain_seq, dtype=self.config.np_dtype())
        if seq.ndim == 2:
            seq = seq[None]
        B, T, d = seq.shape
        padded = np.zeros((B, T, self.generators.d_max),
                          dtype=self.config.np_dtype())
        padded[:, :, :d] = seq
        critic = self.local_critic(chain_id)
        with ad.no_grad():
            scores = critic.score(padded.reshape(1, B, -1))
        return scores.data[0, :, 0].astype(np.float64)

    def global_critic_score(self, pose_seq) -> np.ndarray:
        """Critic scores (B,) for (B, T, D) or (T, D) pose futures."""
        seq = np.asarray(pose_seq, dtype=self.config.np_dtype())
        if seq.ndim == 2:
            seq = seq[None]
        with ad.no_grad():
            scores = self.global_critic.score(seq)
        return scores.data[0, :, 0].astype(np.float64)

    def encode_chain(self, chain_id: int, chain_seq: np.ndarray) -> LatentCode:
        """Encode one chain's (t, d_j) or (B, t, d_j) sequence."""
        g = self.group_of_chain(chain_id)
        d = self.chain_dims[g]
        seq = np.asarray(chain_seq, dtype=self.config.np_dtype())
        if seq.ndim == 2:
            seq = seq[None]
        if seq.shape[2] != d:
            raise ValueError(f"chain {chain_id} expects {d} features")
        x = np.zeros((1, seq.shape[0], seq.shape[1], self.generators.d_max),
                     dtype=self.config.np_dtype())
        x[0, :, :, :d] = seq
        gens = self.generators
        h0 = Tensor(np.zeros((1, seq.shape[0], gens.hidden_size),
                             dtype=self.config.np_dtype()))
        h = ad.gru_final_state(Tensor(x), h0,
                               _slice_group(gens.enc_wx, g),
                               _slice_group(gens.enc_wh, g),
                               _slice_group(gens.enc_b, g))
        mean = ad.bmatmul(h, _slice_group(gens.w_mean, g)) \
            + _slice_group(gens.b_mean, g)
        logvar = ad.bmatmul(h, _slice_group(gens.w_logvar, g)) \
            + _slice_group(gens.b_logvar, g)
        return LatentCode(mean, logvar)

    def decode_chain(self, chain_id: int, z: np.ndarray, seed_frame: np.ndarray,
                     n_steps: int) -> np.ndarray:
        """Decode one chain: z (L,) + seed (d_j,) -> (T, d_j) prediction."""
        g = self.group_of_chain(chain_id)
        d = self.chain_dims[g]
        dtype = self.config.np_dtype()
        z = np.asarray(z, dtype=dtype).reshape(1, 1, -1)
        seed = np.zeros((1, 1, self.generators.d_max), dtype=dtype)
        seed[0, 0, :d] = np.asarray(seed_frame, dtype=dtype).ravel()
        gens = self.generators
        with ad.no_grad():
            h0 = ad.bmatmul(Tensor(z), _slice_group(gens.w_init, g)) \
                + _slice_group(gens.b_init, g)
            decoded = ad.gru_decode(Tensor(seed), h0,
                                    _slice_group(gens.dec_wx, g),
                                    _slice_group(gens.dec_wh, g),
                                    _slice_group(gens.dec_b, g),
                                    _slice_group(gens.dec_wo, g),
                                    _slice_group(gens.dec_bo, g), n_steps)
        return decoded.data[0, 0, :, :d].astype(np.float64)


def _slice_group(param: Tensor, g: int) -> Tensor:
    return Tensor(param.data[g:g + 1])


# -- checkpoint container ------------------------------------------------------
#
# magic | u16 version | u32 header_len | header JSON | raw blocks
#
# The header records the model config, the full topology (a checkpoint is
# self-contained), its hash, and the name/shape/dtype of every block in
# payload order.  Extra blocks (optimizer state, RNG state) ride along for
# training checkpoints.


def _topology_doc(topology: SkeletonTopology) -> dict:
    return {"joint_names": list(topology.joint_names),
            "parent_index": list(topology.parent_index),
            "bone_offsets": [[float(v) for v in row]
                             for row in topology.bone_offsets],
            "chain_assignment": list(topology.chain_assignment),
            "dof_per_joint": topology.dof_per_joint}


def _topology_from_doc(doc: dict) -> SkeletonTopology:
    return SkeletonTopology(tuple(doc["joint_names"]),
                            tuple(doc["parent_index"]),
                            np.asarray(doc["bone_offsets"]),
                            tuple(doc["chain_assignment"]),
                            doc["dof_per_joint"])


def save_checkpoint(path, model: MotionGAN, extra_arrays=None,
                    metadata=None) -> None:
    """Write the versioned binary checkpoint container."""
    params = model.named_parameters()
    blocks = [(f"param.{name}", p.data) for name, p in sorted(params.items())]
    for name, arr in sorted((extra_arrays or {}).items()):
        blocks.append((f"extra.{name}", np.asarray(arr)))
    header = {
        "config": asdict(model.config),
        "chain_order": model.chain_order,
        "topology": _topology_doc(model.topology),
        "topology_hash": model.topology.content_hash(),
        "metadata": metadata or {},
        "blocks": [{"name": name, "shape": list(arr.shape),
                    "dtype": str(arr.dtype)} for name, arr in blocks],
    }
    header_bytes = json.dumps(header, sort_keys=True,
                              separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<HI", CHECKPOINT_VERSION, len(header_bytes)))
        fh.write(header_bytes)
        for _, arr in blocks:
            fh.write(np.ascontiguousarray(arr).tobytes())


def load_checkpoint(path, topology: SkeletonTopology | None = None):
    """Load a checkpoint; returns (model, extra_arrays, metadata).

    Verifies the stored topology hash; if a topology is supplied it must
    match the stored one.
    """
    with open(path, "rb") as fh:
        magic = fh.read(len(CHECKPOINT_MAGIC))
        if magic != CHECKPOINT_MAGIC:
            raise ValueError(f"{path}: not a model checkpoint (bad magic)")
        version, header_len = struct.unpack("<HI", fh.read(6))
        if version != CHECKPOINT_VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {version}")
        header = json.loads(fh.read(header_len).decode("utf-8"))
        stored_topology = _topology_from_doc(header["topology"])
        if stored_topology.content_hash() != header["topology_hash"]:
            raise ValueError(f"{path}: topology hash mismatch (corrupt file)")
        if topology is not None and \
                topology.content_hash() != header["topology_hash"]:
            raise ValueError(f"{path}: checkpoint topology does not match "
                             f"the requested topology")
        arrays = {}
        for block in header["blocks"]:
            shape = tuple(block["shape"])
            dtype = np.dtype(block["dtype"])
            count = int(np.prod(shape)) if shape else 1
            raw = fh.read(count * dtype.itemsize)
            arrays[block["name"]] = np.frombuffer(raw, dtype=dtype) \
                .reshape(shape).copy()

    config = ModelConfig(**header["config"])
    model = MotionGAN(stored_topology, config,
                      chain_order=None if config.single_generator
                      else header["chain_order"])
    params = model.named_parameters()
    for name, p in params.items():
        key = f"param.{name}"
        if key not in arrays:
            raise ValueError(f"{path}: missing parameter block {name}")
        if arrays[key].shape != p.data.shape:
            raise ValueError(f"{path}: shape mismatch for {name}")
        p.data = arrays[key].astype(config.np_dtype())
    extra = {name[len("extra."):]: arr for name, arr in arrays.items()
             if name.startswith("extra.")}
    return model, extra, header["metadata"]
