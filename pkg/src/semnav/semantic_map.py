"""Per-agent top-down semantic map with count channels.

Channel layout: ``0..K-1`` per-category evidence, ``K`` occupied,
``K+1`` explored.  Grids are indexed ``[x, y]``.
"""
from __future__ import annotations

import struct

import numpy as np

from .categories import CELL_SIZE, K_TOTAL
from .errors import BadLength, DimsMismatch, EmptyGoalSet, InvalidPose
from .grid import bfs_distance
from .perception import Observation
from .raycast import NONE, OBJECT, stacked_stencils

COUNT_MAX = np.iinfo(np.uint16).max
MAGIC = b"SMAP"
VERSION = 1


class SemanticMap:
    def __init__(self, dims, n_categories: int = K_TOTAL, counts: np.ndarray | None = None):
        self.dims = (int(dims[0]), int(dims[1]))
        self.n_categories = int(n_categories)
        shape = self.dims + (self.n_categories + 2,)
        if counts is None:
            counts = np.zeros(shape, dtype=np.int32)
        else:
            counts = np.asarray(counts, dtype=np.int32)
            if counts.shape != shape:
                raise DimsMismatch(f"counts shape {counts.shape} != {shape}")
        self.counts = counts

    @property
    def occupied_channel(self) -> int:
        return self.n_categories

    @property
    def explored_channel(self) -> int:
        return self.n_categories + 1

    @property
    def occupied(self) -> np.ndarray:
        return self.counts[..., self.n_categories]

    @property
    def explored(self) -> np.ndarray:
        return self.counts[..., self.n_categories + 1]

    @property
    def categories(self) -> np.ndarray:
        return self.counts[..., : self.n_categories]

    def presence(self) -> np.ndarray:
        return self.counts > 0

    def copy(self) -> "SemanticMap":
        return SemanticMap(self.dims, self.n_categories, self.counts.copy())

    def __eq__(self, other):
        if not isinstance(other, SemanticMap):
            return NotImplemented
        return self.dims == other.dims and np.array_equal(self.counts, other.counts)

    def __repr__(self):
        return f"SemanticMap(dims={self.dims}, n_categories={self.n_categories}, total={int(self.counts.sum())})"

    def check_invariants(self) -> list[str]:
        problems = []
        if (self.counts < 0).any():
            problems.append("negative-count")
        if (self.explored < self.occupied).any():
            problems.append("occupied-not-explored")
        if ((self.categories > 0).any(axis=-1) & (self.explored == 0)).any():
            problems.append("category-not-explored")
        return problems

    def to_bytes(self) -> bytes:
        L, W = self.dims
        header = MAGIC + struct.pack("<HHHH", VERSION, L, W, self.n_categories + 2)
        body = np.clip(self.counts, 0, COUNT_MAX).astype("<u2").transpose(1, 0, 2)
        return header + np.ascontiguousarray(body).tobytes()

    @classmethod
    def from_bytes(cls, blob: bytes) -> "SemanticMap":
        if blob[:4] != MAGIC:
            raise BadLength("not a semantic map blob")
        version, L, W, C = struct.unpack("<HHHH", blob[4:12])
        if version != VERSION:
            raise BadLength(f"unsupported map version {version}")
        body = blob[12:]
        if len(body) != L * W * C * 2:
            raise BadLength(f"expected {L * W * C * 2} payload bytes, got {len(body)}")
        arr = np.frombuffer(body, dtype="<u2").reshape(W, L, C).transpose(1, 0, 2)
        return cls((L, W), C - 2, arr.astype(np.int32))


def _saturate(counts):
    # explored dominates every other channel of a cell, so checking it is enough
    if counts[..., -1].max(initial=0) > COUNT_MAX:
        np.minimum(counts, COUNT_MAX, out=counts)
    return counts


def ray_cells(dims, obs: Observation):
    """Cells covered by an observation's rays.

    Returns ``(tx, ty, hx, hy, hit_rows)``: in-bounds cells traversed before
    each ray's hit (or out to max range), and the in-bounds hit cells with the
    index of the ray that produced each.
    """
    L, W = dims
    cx, cy = obs.pose.cell
    if not (0 <= cx < L and 0 <= cy < W):
        raise InvalidPose(f"pose cell {(cx, cy)} outside map {tuple(dims)}")
    max_cells = obs.max_range / CELL_SIZE
    offsets, t0, t1, valid = stacked_stencils(obs.pose.heading + obs.bearings, max_cells)
    has_hit = obs.kind != NONE
    r = np.where(has_hit, np.nan_to_num(obs.depth) / CELL_SIZE, 0.0)
    # the hit segment is the first one whose exit lies beyond the hit depth
    n_before = np.where(
        has_hit,
        (t1 <= r[:, None]).sum(axis=1),
        (0.5 * (t0 + t1) <= max_cells + 1e-9).sum(axis=1),
    )
    S = t0.shape[1]
    trav = (np.arange(S)[None, :] < n_before[:, None]) & valid
    xs = offsets[..., 0] + cx
    ys = offsets[..., 1] + cy
    inside = (xs >= 0) & (xs < L) & (ys >= 0) & (ys < W)
    sel = trav & inside
    rows = np.nonzero(has_hit & (n_before < valid.sum(axis=1)))[0]
    hx = xs[rows, n_before[rows]]
    hy = ys[rows, n_before[rows]]
    ok = (hx >= 0) & (hx < L) & (hy >= 0) & (hy < W)
    return xs[sel], ys[sel], hx[ok], hy[ok], rows[ok]


def project_observation(smap: SemanticMap, obs: Observation, cells=None) -> SemanticMap:
    """Add one observation's evidence to ``smap`` in place and return it.

    Every ray adds +1 explored to each cell it crosses before its hit; the
    hit cell gets +1 occupied and +1 explored, plus +1 in its category
    channel when segmented.  Rays with no hit mark cells out to max range.
    The agent's own cell gets +1 explored once per call.  ``cells`` may pass
    a precomputed :func:`ray_cells` result.
    """
    K = smap.n_categories
    tx, ty, hx, hy, rows = cells if cells is not None else ray_cells(smap.dims, obs)
    cx, cy = obs.pose.cell
    np.add.at(smap.counts[..., K + 1], (tx, ty), 1)
    smap.counts[cx, cy, K + 1] += 1
    if len(rows):
        np.add.at(smap.counts[..., K], (hx, hy), 1)
        np.add.at(smap.counts[..., K + 1], (hx, hy), 1)
        hc = obs.category[rows]
        seg = (obs.kind[rows] == OBJECT) & (hc >= 0) & (hc < K)
        np.add.at(smap.counts, (hx[seg], hy[seg], hc[seg]), 1)
    _saturate(smap.counts)
    return smap


def merge_maps(local: SemanticMap, received: SemanticMap) -> SemanticMap:
    if local.dims != received.dims or local.n_categories != received.n_categories:
        raise DimsMismatch(f"{local.dims}x{local.n_categories} vs {received.dims}x{received.n_categories}")
    return SemanticMap(local.dims, local.n_categories, np.minimum(local.counts + received.counts, COUNT_MAX))


def passable_mask(smap: SemanticMap) -> np.ndarray:
    return smap.occupied == 0


def distance_field(smap: SemanticMap, goal_cells) -> np.ndarray:
    """Multi-source BFS hop counts over cells not marked occupied.

    Goal cells are 0 even when occupied; unreachable cells are ``inf``.
    """
    goals = [tuple(int(v) for v in c) for c in goal_cells]
    if not goals:
        raise EmptyGoalSet("distance_field needs at least one goal cell")
    return bfs_distance(passable_mask(smap), goals)
