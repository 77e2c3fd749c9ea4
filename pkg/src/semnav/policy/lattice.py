"""Pose lattice over (cell, heading) and optionally pitch, built with numpy.

Node index layout: ``((x * W + y) * 4 + h) * n_pitch + p``.  Edges are the
motion actions with unit cost; MoveAhead edges jump up to five cells.
"""
from __future__ import annotations

import numpy as np
from scipy.sparse import csr_matrix

from .actions import MOVE_CELLS

DIRS = np.array([(1, 0), (0, 1), (-1, 0), (0, -1)])  # heading index 0..3 = 0, 90, 180, 270


def move_targets(passable: np.ndarray, max_cells: int = MOVE_CELLS) -> tuple[np.ndarray, np.ndarray]:
    """Landing cell of MoveAhead for every cell and heading index.

    Returns ``(tx, ty)`` of shape ``(L, W, 4)``.
    """
    L, W = passable.shape
    xs, ys = np.meshgrid(np.arange(L), np.arange(W), indexing="ij")
    tx = np.repeat(xs[..., None], 4, axis=-1).copy()
    ty = np.repeat(ys[..., None], 4, axis=-1).copy()
    for h, (dx, dy) in enumerate(DIRS):
        alive = np.ones((L, W), dtype=bool)
        for k in range(1, max_cells + 1):
            nx, ny = xs + k * dx, ys + k * dy
            inb = (nx >= 0) & (nx < L) & (ny >= 0) & (ny < W)
            ok = np.zeros((L, W), dtype=bool)
            ok[inb] = passable[nx[inb], ny[inb]]
            alive &= ok
            tx[..., h] = np.where(alive, nx, tx[..., h])
            ty[..., h] = np.where(alive, ny, ty[..., h])
    return tx, ty


def lattice_graph(passable: np.ndarray, n_pitch: int = 1, max_cells: int = MOVE_CELLS) -> csr_matrix:
    """Directed unit-cost graph of motion actions between passable poses."""
    L, W = passable.shape
    tx, ty = move_targets(passable, max_cells)
    cell = np.arange(L * W).reshape(L, W)
    P = n_pitch
    src, dst = [], []
    fx, fy = np.nonzero(passable)
    base = cell[fx, fy]
    for h in range(4):
        for p in range(P):
            here = (base * 4 + h) * P + p
            # move
            mx, my = tx[fx, fy, h], ty[fx, fy, h]
            moved = (mx != fx) | (my != fy)
            src.append(here[moved])
            dst.append(((cell[mx, my][moved] * 4 + h) * P + p))
            # rotations
            for dh in (1, 3):
                src.append(here)
                dst.append((base * 4 + (h + dh) % 4) * P + p)
            # pitch
            for dp in (-1, 1):
                q = p + dp
                if 0 <= q < P:
                    src.append(here)
                    dst.append((base * 4 + h) * P + q)
    s = np.concatenate(src)
    d = np.concatenate(dst)
    n = L * W * 4 * P
    return csr_matrix((np.ones(len(s)), (s, d)), shape=(n, n))
