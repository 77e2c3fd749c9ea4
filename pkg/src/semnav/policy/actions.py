"""The primitive action set and its motion model."""
from __future__ import annotations

from enum import IntEnum

import numpy as np

from ..perception import PITCHES

MOVE_CELLS = 5  # 0.25 m forward step on a 0.05 m grid
PITCH_STEP = 30
STEP = {0: (1, 0), 90: (0, 1), 180: (-1, 0), 270: (0, -1)}


class Action(IntEnum):
    MOVE_AHEAD = 0
    ROTATE_RIGHT = 1
    ROTATE_LEFT = 2
    LOOK_UP = 3
    LOOK_DOWN = 4
    FOUND = 5
    DONE = 6


N_ACTIONS = len(Action)
MOTION_ACTIONS = (Action.MOVE_AHEAD, Action.ROTATE_RIGHT, Action.ROTATE_LEFT, Action.LOOK_UP, Action.LOOK_DOWN)
ACTION_NAMES = ("MoveAhead", "RotateRight", "RotateLeft", "LookUp", "LookDown", "Found", "Done")


def move_run(passable: np.ndarray, cell, heading: int, max_cells: int = MOVE_CELLS) -> tuple[int, int]:
    """Cell reached by MoveAhead: up to ``max_cells`` steps, stopping before a blocked cell."""
    dx, dy = STEP[heading % 360]
    x, y = cell
    L, W = passable.shape
    for _ in range(max_cells):
        nx, ny = x + dx, y + dy
        if not (0 <= nx < L and 0 <= ny < W) or not passable[nx, ny]:
            break
        x, y = nx, ny
    return x, y


def apply_action(passable: np.ndarray, cell, heading: int, pitch: int, action) -> tuple[tuple[int, int], int, int]:
    """Next ``(cell, heading, pitch)``; Found, Done and blocked moves leave the pose unchanged."""
    action = Action(action)
    if action == Action.MOVE_AHEAD:
        return move_run(passable, cell, heading), heading, pitch
    if action == Action.ROTATE_RIGHT:
        return tuple(cell), (heading + 90) % 360, pitch
    if action == Action.ROTATE_LEFT:
        return tuple(cell), (heading - 90) % 360, pitch
    if action == Action.LOOK_UP:
        return tuple(cell), heading, min(pitch + PITCH_STEP, PITCHES[-1])
    if action == Action.LOOK_DOWN:
        return tuple(cell), heading, max(pitch - PITCH_STEP, PITCHES[0])
    return tuple(cell), heading, pitch
