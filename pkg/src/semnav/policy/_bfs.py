"""Compiled breadth-first searches on the implicit (cell, heading) lattice."""
from __future__ import annotations

import numpy as np
from numba import njit

from .actions import MOVE_CELLS

_DX = np.array([1, 0, -1, 0], dtype=np.int64)
_DY = np.array([0, 1, 0, -1], dtype=np.int64)
UNREACHED = np.iinfo(np.int32).max


@njit(cache=True)
def _free(passable, x, y):
    L, W = passable.shape
    return 0 <= x < L and 0 <= y < W and passable[x, y]


@njit(cache=True)
def reverse_bfs(passable, goal, dx, dy, run):
    """Actions-to-go from every state to any passable ``goal`` cell (any heading)."""
    L, W = passable.shape
    dist = np.full((L, W, 4), 2147483647, dtype=np.int32)
    qx = np.empty(L * W * 4, dtype=np.int64)
    qy = np.empty(L * W * 4, dtype=np.int64)
    qh = np.empty(L * W * 4, dtype=np.int64)
    head = 0
    tail = 0
    for x in range(L):
        for y in range(W):
            if goal[x, y] and passable[x, y]:
                for h in range(4):
                    dist[x, y, h] = 0
                    qx[tail] = x
                    qy[tail] = y
                    qh[tail] = h
                    tail += 1
    while head < tail:
        x = qx[head]
        y = qy[head]
        h = qh[head]
        head += 1
        nd = dist[x, y, h] + 1
        # rotations are reversible: (x, y, h -/+ 1) reaches (x, y, h)
        for dh in (1, 3):
            ph = (h + dh) % 4
            if dist[x, y, ph] > nd:
                dist[x, y, ph] = nd
                qx[tail] = x
                qy[tail] = y
                qh[tail] = ph
                tail += 1
        # MoveAhead from k cells behind lands here if the run is clear and
        # either k == run or the next cell ahead is blocked
        ahead_blocked = not _free(passable, x + dx[h], y + dy[h])
        for k in range(1, run + 1):
            px = x - k * dx[h]
            py = y - k * dy[h]
            if not _free(passable, px, py):
                break
            if k == run or ahead_blocked:
                if dist[px, py, h] > nd:
                    dist[px, py, h] = nd
                    qx[tail] = px
                    qy[tail] = py
                    qh[tail] = h
                    tail += 1
    return dist


@njit(cache=True)
def forward_reach(passable, sx, sy, sh, dx, dy, run):
    """Boolean mask of cells reachable from state ``(sx, sy, sh)``."""
    L, W = passable.shape
    seen = np.zeros((L, W, 4), dtype=np.bool_)
    qx = np.empty(L * W * 4, dtype=np.int64)
    qy = np.empty(L * W * 4, dtype=np.int64)
    qh = np.empty(L * W * 4, dtype=np.int64)
    seen[sx, sy, sh] = True
    qx[0] = sx
    qy[0] = sy
    qh[0] = sh
    head = 0
    tail = 1
    while head < tail:
        x = qx[head]
        y = qy[head]
        h = qh[head]
        head += 1
        for dh in (1, 3):
            nh = (h + dh) % 4
            if not seen[x, y, nh]:
                seen[x, y, nh] = True
                qx[tail] = x
                qy[tail] = y
                qh[tail] = nh
                tail += 1
        nx, ny = x, y
        for _ in range(run):
            if not _free(passable, nx + dx[h], ny + dy[h]):
                break
            nx += dx[h]
            ny += dy[h]
        if not seen[nx, ny, h]:
            seen[nx, ny, h] = True
            qx[tail] = nx
            qy[tail] = ny
            qh[tail] = h
            tail += 1
    out = np.zeros((L, W), dtype=np.bool_)
    for x in range(L):
        for y in range(W):
            for h in range(4):
                if seen[x, y, h]:
                    out[x, y] = True
    return out


def actions_to_go(passable: np.ndarray, goal: np.ndarray, run: int = MOVE_CELLS) -> np.ndarray:
    d = reverse_bfs(np.ascontiguousarray(passable, dtype=np.bool_), np.ascontiguousarray(goal, dtype=np.bool_),
                    _DX, _DY, run)
    out = d.astype(np.float64)
    out[d == UNREACHED] = np.inf
    return out


def reachable_cells(passable: np.ndarray, cell, heading_index: int, run: int = MOVE_CELLS) -> np.ndarray:
    return forward_reach(np.ascontiguousarray(passable, dtype=np.bool_), int(cell[0]), int(cell[1]),
                         int(heading_index), _DX, _DY, run)
