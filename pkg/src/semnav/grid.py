"""Breadth-first distances on 4-connected grids (scipy csgraph backed)."""
from __future__ import annotations

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra

NEIGHBOURS = ((1, 0), (-1, 0), (0, 1), (0, -1))


def grid_graph(passable: np.ndarray) -> csr_matrix:
    L, W = passable.shape
    idx = np.arange(L * W).reshape(L, W)
    rows, cols = [], []
    hm = passable[:-1, :] & passable[1:, :]
    rows.append(idx[:-1, :][hm])
    cols.append(idx[1:, :][hm])
    vm = passable[:, :-1] & passable[:, 1:]
    rows.append(idx[:, :-1][vm])
    cols.append(idx[:, 1:][vm])
    r = np.concatenate(rows)
    c = np.concatenate(cols)
    data = np.ones(len(r), dtype=np.float64)
    return csr_matrix((data, (r, c)), shape=(L * W, L * W))


def bfs_distance(passable: np.ndarray, sources) -> np.ndarray:
    """Hop counts from the nearest source through passable cells.

    Sources always get 0 and may themselves be impassable.  Unreachable
    cells are ``inf``.
    """
    L, W = passable.shape
    src = np.zeros((L, W), dtype=bool)
    src_idx = []
    for x, y in sources:
        src[x, y] = True
        src_idx.append(x * W + y)
    if not src_idx:
        return np.full((L, W), np.inf)
    graph = grid_graph(passable | src)
    dist = dijkstra(graph, directed=False, indices=sorted(set(src_idx)), min_only=True, unweighted=True)
    return dist.reshape(L, W)


def bfs_from_mask(passable: np.ndarray, sources: np.ndarray) -> np.ndarray:
    return bfs_distance(passable, [tuple(c) for c in np.argwhere(sources)])
