"""Stick-figure rendering of pose sequences to numbered image frames.

Each frame is drawn as two orthographic projections (front: x/y, side:
z/y) with bones as line segments, matching the usual motion-prediction
figure style.  Axes are fixed across the sequence so frames animate
cleanly.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from .kinematics import COORDS_3D, EXPMAP, Pose, forward_kinematics

CHAIN_COLORS = {1: "#444444", 2: "#1f77b4", 3: "#d62728",
                4: "#2ca02c", 5: "#9467bd"}


def pose_positions(values: np.ndarray, topology,
                   representation: str = EXPMAP) -> np.ndarray:
    """Joint positions (J, 3) for one flat pose vector."""
    if representation == COORDS_3D:
        return np.asarray(values, dtype=np.float64).reshape(-1, 3)
    return forward_kinematics(Pose(values, EXPMAP), topology)


def render_sequence(frames: np.ndarray, topology, out_dir,
                    representation: str = EXPMAP, prefix: str = "frame",
                    dpi: int = 80):
    """Write one PNG per pose row; returns the image paths in order."""
    frames = np.asarray(frames, dtype=np.float64)
    if frames.ndim != 2:
        raise ValueError("frames must be (n_frames, pose_dim)")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    positions = np.stack([pose_positions(row, topology, representation)
                          for row in frames])
    lo = positions.min(axis=(0, 1))
    hi = positions.max(axis=(0, 1))
    span = float(max((hi - lo).max(), 1e-6)) * 0.55
    mid = (lo + hi) / 2.0

    paths = []
    fig, axes = plt.subplots(1, 2, figsize=(6, 3.2))
    for i, pos in enumerate(positions):
        for ax, (a, b), label in zip(axes, [(0, 1), (2, 1)],
                                     ["front", "side"]):
            ax.clear()
            for j, parent in enumerate(topology.parent_index):
                if parent == -1:
                    continue
                color = CHAIN_COLORS.get(topology.chain_assignment[j], "k")
                ax.plot([pos[parent, a], pos[j, a]],
                        [pos[parent, b], pos[j, b]],
                        color=color, linewidth=2)
            ax.set_xlim(mid[a] - span, mid[a] + span)
            ax.set_ylim(mid[b] - span, mid[b] + span)
            ax.set_aspect("equal")
            ax.set_title(label, fontsize=8)
            ax.tick_params(labelsize=6)
        fig.suptitle(f"{prefix} {i}", fontsize=9)
        path = out_dir / f"{prefix}_{i:04d}.png"
        fig.savefig(path, dpi=dpi)
        paths.append(path)
    plt.close(fig)
    return paths
