"""Egocentric depth + segmentation rays and a segmentation-noise model.

This replaces rendered RGB-D frames plus a learned segmenter: each ray
reports what a depth camera and a perfect segmenter would report for one
image column, and :func:`corrupt_segmentation` degrades it.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np

from .categories import BANDS, CELL_SIZE, K_TOTAL
from .errors import InvalidPose
from .raycast import KIND_NAMES, NONE, OBJECT, WALL, first_true, stacked_stencils
from .scene import HEADINGS, Scene

PITCHES = (-30, 0, 30)


@dataclass(frozen=True)
class Pose:
    x: float
    y: float
    heading: int = 0
    pitch: int = 0

    @classmethod
    def from_cell(cls, cell, heading=0, pitch=0) -> "Pose":
        return cls(round(cell[0] * CELL_SIZE, 10), round(cell[1] * CELL_SIZE, 10), int(heading), int(pitch))

    @property
    def cell(self) -> tuple[int, int]:
        return int(round(self.x / CELL_SIZE)), int(round(self.y / CELL_SIZE))

    @property
    def pitch_index(self) -> int:
        return PITCHES.index(self.pitch)

    @property
    def band(self) -> str:
        return BANDS[self.pitch_index]


@dataclass(frozen=True)
class SensorParams:
    fov: float = 90.0
    ray_count: int = 61
    max_range: float = 5.0

    def bearings(self) -> np.ndarray:
        if self.ray_count == 1:
            return np.zeros(1)
        return np.linspace(-self.fov / 2, self.fov / 2, self.ray_count)

    @property
    def range_cells(self) -> float:
        return self.max_range / CELL_SIZE


@dataclass(frozen=True)
class NoiseParams:
    p_miss: float = 0.0
    p_confuse: float = 0.0
    depth_sigma: float = 0.0

    @property
    def is_identity(self) -> bool:
        return self.p_miss == 0 and self.p_confuse == 0 and self.depth_sigma == 0


@dataclass(frozen=True)
class RayHit:
    bearing: float
    depth: float | None
    hit_kind: str
    category: int | None
    instance_id: int | None


@dataclass(frozen=True, eq=False)
class Observation:
    """Per-ray arrays; ``depth`` is NaN and ids are -1 where nothing was hit."""

    pose: Pose
    bearings: np.ndarray
    depth: np.ndarray
    kind: np.ndarray
    category: np.ndarray
    instance: np.ndarray
    max_range: float

    def __eq__(self, other):
        if not isinstance(other, Observation):
            return NotImplemented
        return (
            self.pose == other.pose
            and self.max_range == other.max_range
            and np.array_equal(self.bearings, other.bearings)
            and np.array_equal(self.depth, other.depth, equal_nan=True)
            and np.array_equal(self.kind, other.kind)
            and np.array_equal(self.category, other.category)
            and np.array_equal(self.instance, other.instance)
        )

    def __len__(self):
        return len(self.bearings)

    @property
    def rays(self) -> list[RayHit]:
        out = []
        for b, d, k, c, i in zip(self.bearings, self.depth, self.kind, self.category, self.instance):
            out.append(
                RayHit(
                    float(b),
                    None if np.isnan(d) else float(d),
                    KIND_NAMES[int(k)],
                    None if c < 0 else int(c),
                    None if i < 0 else int(i),
                )
            )
        return out


@lru_cache(maxsize=64)
def hit_tables(scene: Scene, pad: int):
    """Padded lookup grids: per-pitch blocking masks, wall mask, instance ids."""
    L, W = scene.dims
    shape = (L + 2 * pad, W + 2 * pad)
    inner = (slice(pad, pad + L), slice(pad, pad + W))
    oob = np.ones(shape, dtype=bool)
    oob[inner] = False
    wall = np.zeros(shape, dtype=bool)
    wall[inner] = scene.occupancy
    inst = np.full(shape, -1, dtype=np.int32)
    inst[inner] = scene.object_grid
    band = np.full(shape, -1, dtype=np.int8)
    cat_grid = np.full(shape, -1, dtype=np.int32)
    for o in scene.objects:
        xs, ys = zip(*o.footprint)
        xs = np.asarray(xs) + pad
        ys = np.asarray(ys) + pad
        band[xs, ys] = o.band_index
        cat_grid[xs, ys] = o.category
    blocking = tuple(oob | wall | (band == p) for p in range(len(BANDS)))
    return blocking, wall, oob, inst, cat_grid


def check_pose(scene: Scene, pose: Pose):
    if pose.heading not in HEADINGS:
        raise InvalidPose(f"heading {pose.heading} not in {HEADINGS}")
    if pose.pitch not in PITCHES:
        raise InvalidPose(f"pitch {pose.pitch} not in {PITCHES}")
    cx, cy = pose.cell
    if abs(cx * CELL_SIZE - pose.x) > 1e-6 or abs(cy * CELL_SIZE - pose.y) > 1e-6:
        raise InvalidPose(f"position {(pose.x, pose.y)} is not on the {CELL_SIZE} m grid")
    if not scene.is_free((cx, cy)):
        raise InvalidPose(f"cell {(cx, cy)} is not a free cell")


def cast_from_cells(scene: Scene, cells: np.ndarray, angles: np.ndarray, pitch_index: int, max_cells: float):
    """First hits for every (cell, angle) pair.

    ``cells`` is ``(n, 2)`` and ``angles`` is ``(m,)``.  Returns arrays of
    shape ``(n, m)``: kind code, mid-segment depth in cells (NaN if none),
    and instance id.
    """
    pad = int(np.ceil(max_cells)) + 3
    blocking, wall, oob, inst, _ = hit_tables(scene, pad)
    offsets, t0, t1, valid = stacked_stencils(tuple(float(a) for a in angles), max_cells)
    block = blocking[pitch_index]
    gx = cells[:, None, None, 0] + pad + offsets[None, :, :, 0]
    gy = cells[:, None, None, 1] + pad + offsets[None, :, :, 1]
    hitmask = block[gx, gy] & valid[None]
    idx = first_true(hitmask)
    has = idx >= 0
    safe = np.where(has, idx, 0)
    mid = 0.5 * (t0 + t1)
    depth = np.take_along_axis(np.broadcast_to(mid, hitmask.shape), safe[..., None], axis=-1)[..., 0]
    hx = np.take_along_axis(gx, safe[..., None], axis=-1)[..., 0]
    hy = np.take_along_axis(gy, safe[..., None], axis=-1)[..., 0]
    is_oob = oob[hx, hy]
    is_wall = wall[hx, hy]
    ids = inst[hx, hy]
    in_range = depth <= max_cells + 1e-9
    kind = np.where(has & in_range & ~is_oob, np.where(is_wall, WALL, OBJECT), NONE).astype(np.int8)
    depth = np.where(kind != NONE, depth, np.nan)
    ids = np.where(kind == OBJECT, ids, -1)
    return kind, depth, ids


def observe(scene: Scene, pose: Pose, sensor: SensorParams = SensorParams()) -> Observation:
    """Cast the sensor's rays from ``pose``.

    Walls stop rays at every pitch; an object stops a ray only when its
    height band matches the camera pitch (down = low, level = eye, up = high).
    """
    check_pose(scene, pose)
    bearings = sensor.bearings()
    angles = pose.heading + bearings
    cell = np.array([pose.cell])
    kind, depth, ids = cast_from_cells(scene, cell, angles, pose.pitch_index, sensor.range_cells)
    kind, depth, ids = kind[0], depth[0], ids[0]
    cats = np.full(len(ids), -1, dtype=np.int32)
    for i, iid in enumerate(ids):
        if iid >= 0:
            cats[i] = scene.instances[int(iid)].category
    return Observation(
        pose=pose,
        bearings=bearings,
        depth=depth * CELL_SIZE,
        kind=kind,
        category=cats,
        instance=ids.astype(np.int32),
        max_range=sensor.max_range,
    )


def corrupt_segmentation(obs: Observation, noise: NoiseParams, rng: np.random.Generator, n_categories: int = K_TOTAL) -> Observation:
    """Drop, confuse and jitter segmentation per ray.

    Four random draws are consumed per ray regardless of outcome, so the
    stream position only depends on the ray count.
    """
    n = len(obs)
    u_miss = rng.random(n)
    u_conf = rng.random(n)
    shift = rng.integers(1, max(n_categories, 2), size=n)
    jitter = rng.standard_normal(n)
    if noise.is_identity:
        return obs
    cats = obs.category.copy()
    inst = obs.instance.copy()
    is_obj = obs.kind == OBJECT
    miss = is_obj & (u_miss < noise.p_miss)
    confuse = is_obj & ~miss & (u_conf < noise.p_confuse)
    cats[confuse] = (cats[confuse] + shift[confuse]) % n_categories
    cats[miss] = -1
    inst[miss] = -1
    depth = obs.depth.copy()
    if noise.depth_sigma > 0:
        hit = obs.kind != NONE
        noisy = depth[hit] + noise.depth_sigma * jitter[hit]
        depth[hit] = np.clip(noisy, CELL_SIZE * 1e-3, obs.max_range)
    return replace(obs, category=cats, instance=inst, depth=depth)
