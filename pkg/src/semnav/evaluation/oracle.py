"""Exact optimal makespan on the true map.

Poses are ``(cell, heading, pitch)`` nodes with unit-cost motion edges.  A
target category is "found" from every pose where some ray hits one of its
instances closer than 1.0 m.  For each agent and each subset ``S`` of
targets, ``cost(S)`` is the fewest actions that end with all of ``S``
declared Found (one step per Found) followed by Done.  The makespan is the
minimum over assignments of targets to agents of the largest agent cost.
"""
from __future__ import annotations

import math
from functools import lru_cache

import numpy as np
from scipy.sparse import csr_matrix, vstack, hstack
from scipy.sparse.csgraph import dijkstra

from ..categories import CELL_SIZE
from ..errors import InstanceTooLarge
from ..perception import PITCHES, SensorParams, cast_from_cells
from ..raycast import OBJECT
from ..scene import Scene, TaskSpec
from ..policy.lattice import lattice_graph

MAX_M = 6
MAX_N = 5
FOUND_RADIUS_M = 1.0
_CHUNK = 512
_HEADINGS = (0, 90, 180, 270)


def pose_index(dims, cell, heading: int, pitch: int) -> int:
    W = dims[1]
    return ((cell[0] * W + cell[1]) * 4 + _HEADINGS.index(heading % 360)) * len(PITCHES) + PITCHES.index(pitch)


@lru_cache(maxsize=16)
def pose_graph(scene: Scene):
    return lattice_graph(scene.free, n_pitch=len(PITCHES))


@lru_cache(maxsize=16)
def found_poses(scene: Scene, sensor: SensorParams = SensorParams(), radius_m: float = FOUND_RADIUS_M):
    """``{category: bool array over pose nodes}`` where Found would be valid."""
    L, W = scene.dims
    radius = radius_m / CELL_SIZE
    cells = np.argwhere(scene.free)
    inst_cat = {i: o.category for i, o in scene.instances.items()}
    n_inst = max(inst_cat) + 1 if inst_cat else 0
    lut = np.full(n_inst + 1, -1, dtype=np.int64)
    for i, c in inst_cat.items():
        lut[i] = c
    present = scene.present_categories()
    out = {c: np.zeros((L, W, 4, len(PITCHES)), dtype=bool) for c in present}
    bearings = sensor.bearings()
    for hi, h in enumerate(_HEADINGS):
        angles = h + bearings
        for pi in range(len(PITCHES)):
            for start in range(0, len(cells), _CHUNK):
                chunk = cells[start:start + _CHUNK]
                kind, depth, ids = cast_from_cells(scene, chunk, angles, pi, min(radius, sensor.range_cells))
                close = (kind == OBJECT) & (depth < radius - 1e-9)
                cats = np.where(close, lut[ids], -1)
                for c in present:
                    hit = (cats == c).any(axis=1)
                    if hit.any():
                        sel = chunk[hit]
                        out[c][sel[:, 0], sel[:, 1], hi, pi] = True
    return {c: m.reshape(-1) for c, m in out.items()}


def _seeded_dijkstra(graph: csr_matrix, seeds: np.ndarray) -> np.ndarray:
    """Shortest distances when node ``v`` may start with cost ``seeds[v]``."""
    n = graph.shape[0]
    finite = np.flatnonzero(np.isfinite(seeds))
    if len(finite) == 0:
        return np.full(n, np.inf)
    row = csr_matrix((seeds[finite], (np.zeros(len(finite), dtype=np.int64), finite)), shape=(1, n))
    aug = vstack([hstack([graph, csr_matrix((n, 1))]), hstack([row, csr_matrix((1, 1))])]).tocsr()
    return dijkstra(aug, directed=True, indices=n)[:n]


def agent_subset_costs(scene: Scene, start: int, targets, goals) -> dict[int, float]:
    """``{mask: actions}`` for one agent; the mask indexes ``targets``."""
    graph = pose_graph(scene)
    M = len(targets)
    dist = {0: dijkstra(graph, directed=True, indices=start, unweighted=True)}
    for mask in sorted(range(1, 1 << M), key=lambda m: (bin(m).count("1"), m)):
        seeds = np.full(graph.shape[0], np.inf)
        for k in range(M):
            if mask & (1 << k):
                g = goals.get(targets[k])
                if g is None:
                    continue
                prev = dist[mask ^ (1 << k)]
                seeds = np.minimum(seeds, np.where(g, prev + 1, np.inf))
        dist[mask] = _seeded_dijkstra(graph, seeds)
    return {m: float(d.min()) + 1 for m, d in dist.items()}


def best_partition(costs: list[dict[int, float]], M: int) -> float:
    """min over disjoint covers of max agent cost (agents may take nothing)."""
    full = (1 << M) - 1
    best = {m: costs[0][m] for m in range(1 << M)}
    for c in costs[1:]:
        nxt = {}
        for mask in range(1 << M):
            val = math.inf
            sub = mask
            while True:
                val = min(val, max(best[mask ^ sub], c[sub]))
                if sub == 0:
                    break
                sub = (sub - 1) & mask
            nxt[mask] = val
        best = nxt
    return best[full]


def oracle_makespan(scene: Scene, task: TaskSpec, sensor: SensorParams = SensorParams()) -> float:
    """Minimum number of rounds until the last agent performs Done (``inf`` if impossible)."""
    if task.M > MAX_M or task.N > MAX_N:
        raise InstanceTooLarge(f"oracle handles M <= {MAX_M} and N <= {MAX_N}, got M={task.M}, N={task.N}")
    goals = found_poses(scene, sensor)
    costs = []
    for cell, heading in task.agent_spawns:
        start = pose_index(scene.dims, cell, heading, 0)
        costs.append(agent_subset_costs(scene, start, task.targets, goals))
    return best_partition(costs, task.M)
