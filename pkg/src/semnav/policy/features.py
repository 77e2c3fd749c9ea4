"""State feature fusion: pooled key-objects semantic map + pose + last action."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..categories import CELL_SIZE
from ..errors import DimsMismatch
from ..perception import Pose
from ..priors import KeyObjectsMap
from ..semantic_map import SemanticMap
from .actions import N_ACTIONS


@dataclass(frozen=True, eq=False)
class FeatureVector:
    map_features: np.ndarray  # (P, P, K + 4)
    pose_features: np.ndarray  # (4,)
    action_features: np.ndarray  # (7,)

    @property
    def vector(self) -> np.ndarray:
        return np.concatenate([self.map_features.reshape(-1), self.pose_features, self.action_features])

    def __len__(self):
        return self.map_features.size + 4 + N_ACTIONS


def pool_stride(dims, P: int) -> tuple[int, int]:
    return math.ceil(dims[0] / P), math.ceil(dims[1] / P)


def block_max_pool(grid: np.ndarray, P: int) -> np.ndarray:
    """Max over ``stride x stride`` blocks to a ``P x P (x C)`` grid; block = cell // stride."""
    L, W = grid.shape[:2]
    sx, sy = pool_stride((L, W), P)
    rest = grid.shape[2:]
    pad = np.zeros((P * sx, P * sy) + rest, dtype=grid.dtype)
    pad[:L, :W] = grid
    return pad.reshape((P, sx, P, sy) + rest).max(axis=(1, 3))


def fuse_features(sem: SemanticMap, key: KeyObjectsMap, pose: Pose, last_action=None, P: int = 16) -> FeatureVector:
    if key.dims != sem.dims:
        raise DimsMismatch(f"key map {key.dims} vs semantic map {sem.dims}")
    stacked = np.concatenate([sem.counts > 0, key.layer_targets[..., None], key.layer_related[..., None]], axis=-1)
    pooled = block_max_pool(stacked, P).astype(np.float64)
    L, W = sem.dims
    pose_f = np.array([pose.x / (L * CELL_SIZE), pose.y / (W * CELL_SIZE), pose.heading / 360.0, pose.pitch_index], dtype=np.float64)
    act = np.zeros(N_ACTIONS)
    if last_action is not None:
        act[int(last_action)] = 1.0
    return FeatureVector(pooled, pose_f, act)
