"""Skeleton topology, the five-chain partition, and forward kinematics.

A skeleton is a rooted tree of joints.  Every joint belongs to exactly one
of five kinematic chains (torso plus four limbs); poses are flat vectors of
``n_joints * dof_per_joint`` values in either exponential-map angles or raw
3-D coordinates.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

EXPMAP = "expmap-angles"
COORDS_3D = "coords-3d"

N_CHAINS = 5
CHAIN_NAMES = {1: "torso", 2: "left_arm", 3: "right_arm",
               4: "left_leg", 5: "right_leg"}


class TopologyError(ValueError):
    """Raised for malformed skeleton descriptions."""


@dataclass(frozen=True)
class SkeletonTopology:
    """Joint tree plus the disjoint assignment of joints to the 5 chains.

    parent_index uses -1 for the root.  bone_offsets holds, per joint, the
    offset from its parent in the parent's frame (skeleton units).
    """

    joint_names: tuple
    parent_index: tuple
    bone_offsets: np.ndarray
    chain_assignment: tuple
    dof_per_joint: int = 3

    def __post_init__(self):
        n = len(self.joint_names)
        if len(self.parent_index) != n or len(self.chain_assignment) != n:
            raise TopologyError("joint_names, parent_index and "
                                "chain_assignment must have equal length")
        offsets = np.asarray(self.bone_offsets, dtype=np.float64)
        if offsets.shape != (n, 3):
            raise TopologyError(f"bone_offsets must be ({n}, 3)")
        object.__setattr__(self, "bone_offsets", offsets)

        roots = [j for j, p in enumerate(self.parent_index) if p == -1]
        if len(roots) != 1:
            raise TopologyError(f"expected exactly one root, found {len(roots)}")
        for j, p in enumerate(self.parent_index):
            if p != -1 and not (0 <= p < n):
                raise TopologyError(f"joint {j} has invalid parent {p}")
        # acyclicity: every joint must reach the root
        for j in range(n):
            seen = set()
            cur = j
            while cur != -1:
                if cur in seen:
                    raise TopologyError(f"parent links cycle at joint {j}")
                seen.add(cur)
                cur = self.parent_index[cur]

        chains = set(self.chain_assignment)
        if not chains <= set(range(1, N_CHAINS + 1)):
            raise TopologyError(f"chain ids must be 1..{N_CHAINS}, got {chains}")
        if chains != set(range(1, N_CHAINS + 1)):
            missing = set(range(1, N_CHAINS + 1)) - chains
            raise TopologyError(f"empty chains: {sorted(missing)}")
        if self.chain_assignment[roots[0]] != 1:
            raise TopologyError("the root joint must belong to chain 1 (torso)")
        if self.dof_per_joint != 3:
            raise TopologyError("dof_per_joint must be 3")

    @property
    def n_joints(self) -> int:
        return len(self.joint_names)

    @property
    def root_index(self) -> int:
        return self.parent_index.index(-1)

    @property
    def pose_dim(self) -> int:
        return self.n_joints * self.dof_per_joint

    def chain_joints(self, chain_id: int):
        """Joint indices assigned to a chain, in topology order."""
        return [j for j, c in enumerate(self.chain_assignment) if c == chain_id]

    def chain_columns(self, chain_id: int) -> np.ndarray:
        """Flat pose-vector column indices covered by a chain."""
        dof = self.dof_per_joint
        cols = [j * dof + k for j in self.chain_joints(chain_id)
                for k in range(dof)]
        return np.asarray(cols, dtype=np.intp)

    def chain_dim(self, chain_id: int) -> int:
        return len(self.chain_joints(chain_id)) * self.dof_per_joint

    def content_hash(self) -> str:
        """Stable hash of the topology; checkpoints embed and verify it."""
        h = hashlib.sha256()
        for name, parent, chain in zip(self.joint_names, self.parent_index,
                                       self.chain_assignment):
            h.update(f"{name}|{parent}|{chain}\n".encode())
        h.update(np.ascontiguousarray(self.bone_offsets).tobytes())
        h.update(str(self.dof_per_joint).encode())
        return h.hexdigest()


@dataclass(frozen=True)
class Pose:
    """Flat pose vector; length must equal topology.pose_dim."""

    values: np.ndarray
    representation: str = EXPMAP

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float64).ravel()
        if not np.all(np.isfinite(vals)):
            raise ValueError("pose contains non-finite values")
        if self.representation not in (EXPMAP, COORDS_3D):
            raise ValueError(f"unknown representation {self.representation!r}")
        object.__setattr__(self, "values", vals)


@dataclass(frozen=True)
class ChainVector:
    """The restriction of a pose to the joints of one chain."""

    chain_id: int
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        if not 1 <= self.chain_id <= N_CHAINS:
            raise ValueError(f"chain_id must be 1..{N_CHAINS}")
        object.__setattr__(
            self, "values", np.asarray(self.values, dtype=np.float64).ravel())


def split_pose(pose: Pose, topology: SkeletonTopology):
    """Split a pose into its 5 chain vectors (chain ids 1..5, in order)."""
    if pose.values.size != topology.pose_dim:
        raise ValueError(f"pose has {pose.values.size} values, topology "
                         f"expects {topology.pose_dim}")
    return [ChainVector(cid, pose.values[topology.chain_columns(cid)])
            for cid in range(1, N_CHAINS + 1)]


def merge_chains(chains, topology: SkeletonTopology,
                 representation: str = EXPMAP) -> Pose:
    """Exact inverse of split_pose."""
    ids = sorted(c.chain_id for c in chains)
    if ids != list(range(1, N_CHAINS + 1)):
        raise ValueError(f"need chains 1..{N_CHAINS} exactly once, got {ids}")
    values = np.empty(topology.pose_dim, dtype=np.float64)
    for chain in chains:
        cols = topology.chain_columns(chain.chain_id)
        if chain.values.size != cols.size:
            raise ValueError(
                f"chain {chain.chain_id} has {chain.values.size} values, "
                f"topology expects {cols.size}")
        values[cols] = chain.values
    return Pose(values, representation)


def rotation_from_expmap(v: np.ndarray) -> np.ndarray:
    """3x3 rotation matrix from an exponential-map (axis-angle) 3-vector."""
    v = np.asarray(v, dtype=np.float64)
    theta = float(np.linalg.norm(v))
    if theta < 1e-12:
        return np.eye(3)
    axis = v / theta
    kx, ky, kz = axis
    K = np.array([[0.0, -kz, ky],
                  [kz, 0.0, -kx],
                  [-ky, kx, 0.0]])
    return np.eye(3) + np.sin(theta) * K + (1.0 - np.cos(theta)) * (K @ K)


def forward_kinematics(pose: Pose, topology: SkeletonTopology,
                       root_translation=(0.0, 0.0, 0.0)) -> np.ndarray:
    """Joint positions (n_joints, 3) from exponential-map joint angles.

    The root sits at root_translation; each child is placed at its parent's
    position plus the parent's global rotation applied to the bone offset.
    """
    if pose.representation != EXPMAP:
        raise ValueError("forward kinematics requires exponential-map angles")
    if pose.values.size != topology.pose_dim:
        raise ValueError("pose length does not match topology")

    n = topology.n_joints
    positions = np.zeros((n, 3))
    global_rot = [None] * n
    order = _topological_order(topology)
    for j in order:
        local = rotation_from_expmap(pose.values[3 * j:3 * j + 3])
        p = topology.parent_index[j]
        if p == -1:
            positions[j] = np.asarray(root_translation, dtype=np.float64)
            global_rot[j] = local
        else:
            positions[j] = positions[p] + global_rot[p] @ topology.bone_offsets[j]
            global_rot[j] = global_rot[p] @ local
    return positions


def _topological_order(topology: SkeletonTopology):
    order = []
    pending = {j: topology.parent_index[j] for j in range(topology.n_joints)}
    placed = {-1}
    while pending:
        progressed = False
        for j in sorted(pending):
            if pending[j] in placed:
                order.append(j)
                placed.add(j)
                del pending[j]
                progressed = True
        if not progressed:  # unreachable for validated topologies
            raise TopologyError("parent links do not form a tree")
    return order


# -- topology files ----------------------------------------------------------
#
# One record per joint:  name  parent_index  off_x  off_y  off_z  chain_id
# '#' starts a comment; fields are whitespace-separated.


def load_topology(path) -> SkeletonTopology:
    names, parents, offsets, chains = [], [], [], []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            fields = line.split()
            if len(fields) != 6:
                raise TopologyError(
                    f"{path}:{lineno}: expected 6 fields, got {len(fields)}")
            try:
                names.append(fields[0])
                parents.append(int(fields[1]))
                offsets.append([float(x) for x in fields[2:5]])
                chains.append(int(fields[5]))
            except ValueError as exc:
                raise TopologyError(f"{path}:{lineno}: {exc}") from None
    if not names:
        raise TopologyError(f"{path}: no joint records")
    return SkeletonTopology(tuple(names), tuple(parents),
                            np.asarray(offsets), tuple(chains))


def save_topology(topology: SkeletonTopology, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# name parent_index offset_x offset_y offset_z chain_id\n")
        for j in range(topology.n_joints):
            ox, oy, oz = topology.bone_offsets[j]
            fh.write(f"{topology.joint_names[j]} {topology.parent_index[j]} "
                     f"{ox:.6f} {oy:.6f} {oz:.6f} "
                     f"{topology.chain_assignment[j]}\n")


def default_topology() -> SkeletonTopology:
    """The 25-joint skeleton shipped with the package."""
    from importlib.resources import files
    path = files("chainmotion").joinpath("topologies/default_25joint.txt")
    return load_topology(str(path))


def toy_topology(joints_per_chain: int = 2,
                 bone_length: float = 1.0) -> SkeletonTopology:
    """Small synthetic skeleton: a torso column with four limbs hanging off.

    Chain 1 is the torso (contains the root); chains 2..5 attach to the top
    (arms) or bottom (legs) of the torso.  Useful for desk-scale tests.
    """
    if joints_per_chain < 1:
        raise ValueError("joints_per_chain must be >= 1")
    names, parents, offsets, chains = [], [], [], []

    def add(name, parent, offset, chain):
        names.append(name)
        parents.append(parent)
        offsets.append(offset)
        chains.append(chain)
        return len(names) - 1

    root = add("root", -1, [0.0, 0.0, 0.0], 1)
    top = root
    for k in range(1, joints_per_chain):
        top = add(f"spine_{k}", top, [0.0, bone_length, 0.0], 1)
    for cid, (label, anchor, direction) in {
            2: ("l_arm", top, [-bone_length, 0.0, 0.0]),
            3: ("r_arm", top, [bone_length, 0.0, 0.0]),
            4: ("l_leg", root, [-0.4 * bone_length, -bone_length, 0.0]),
            5: ("r_leg", root, [0.4 * bone_length, -bone_length, 0.0]),
    }.items():
        prev = add(f"{label}_0", anchor, direction, cid)
        step = [np.sign(direction[0]) * bone_length, 0.0, 0.0] if cid in (2, 3) \
            else [0.0, -bone_length, 0.0]
        for k in range(1, joints_per_chain):
            prev = add(f"{label}_{k}", prev, step, cid)
    return SkeletonTopology(tuple(names), tuple(parents),
                            np.asarray(offsets), tuple(chains))
