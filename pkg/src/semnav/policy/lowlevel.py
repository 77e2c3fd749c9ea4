"""Low-level planner: shortest action sequences on the (cell, heading) lattice.

The search is breadth-first in action count (all actions cost one step),
run backwards from the goal region so the table can be reused while the map
and goal stay the same.  A sub-goal counts as reached once the agent is
within ``ARRIVAL_RADIUS`` cells of it in both axes: MoveAhead jumps five
cells, so an exact cell can be impossible to land on.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import AgentCellOccupied, InvalidPose
from ._bfs import actions_to_go, reachable_cells
from .actions import Action, apply_action

ARRIVAL_RADIUS = 2
HEADING_INDEX = {0: 0, 90: 1, 180: 2, 270: 3}
# tie order when several actions are equally good
PRIORITY = (Action.MOVE_AHEAD, Action.ROTATE_RIGHT, Action.ROTATE_LEFT)


def goal_region(passable: np.ndarray, goal, radius: int = ARRIVAL_RADIUS) -> np.ndarray:
    L, W = passable.shape
    gx, gy = goal
    region = np.zeros((L, W), dtype=bool)
    region[max(gx - radius, 0): gx + radius + 1, max(gy - radius, 0): gy + radius + 1] = True
    return region & passable


def arrived(cell, goal, radius: int = ARRIVAL_RADIUS) -> bool:
    return max(abs(cell[0] - goal[0]), abs(cell[1] - goal[1])) <= radius


@dataclass
class Plan:
    action: Action | None  # None when already at the goal
    cost: float  # remaining actions to the goal region (inf if unreachable)
    target: tuple[int, int]  # the cell actually planned to (differs from sg when unreachable)


class LowLevelPlanner:
    """Caches the actions-to-go table while the grid and goal are unchanged."""

    def __init__(self, radius: int = ARRIVAL_RADIUS):
        self.radius = radius
        self._key = None
        self._dist = None
        self._target = None

    def plan(self, passable: np.ndarray, cell, heading: int, goal) -> Plan:
        L, W = passable.shape
        cell = (int(cell[0]), int(cell[1]))
        goal = (int(goal[0]), int(goal[1]))
        if not (0 <= goal[0] < L and 0 <= goal[1] < W):
            raise InvalidPose(f"sub-goal {goal} outside map {passable.shape}")
        if not passable[cell]:
            raise AgentCellOccupied(f"agent cell {cell} is marked occupied")
        if arrived(cell, goal, self.radius):
            return Plan(None, 0.0, goal)
        h = HEADING_INDEX[heading % 360]
        key = (goal, passable.tobytes())
        if key != self._key or not np.isfinite(self._dist[cell + (h,)]):
            dist = actions_to_go(passable, goal_region(passable, goal, self.radius))
            target = goal
            if not np.isfinite(dist[cell + (h,)]):
                target = self._fallback(passable, cell, h, goal)
                region = np.zeros_like(passable)
                region[target] = True
                dist = actions_to_go(passable, region)
            self._key, self._dist, self._target = key, dist, target
        if self._target != goal and cell == self._target:
            return Plan(None, 0.0, self._target)
        dist = self._dist
        best = None
        for a in PRIORITY:
            nc, nh, _ = apply_action(passable, cell, heading, 0, a)
            if a == Action.MOVE_AHEAD and nc == cell:
                continue
            d = dist[nc + (HEADING_INDEX[nh],)]
            if best is None or d < best[1]:
                best = (a, d)
        return Plan(best[0], float(dist[cell + (h,)]), self._target)

    @staticmethod
    def _fallback(passable, cell, h, goal):
        """Reachable cell nearest to ``goal`` (Euclidean), ties by smaller x then y."""
        cells = np.argwhere(reachable_cells(passable, cell, h))
        d2 = (cells[:, 0] - goal[0]) ** 2 + (cells[:, 1] - goal[1]) ** 2
        order = np.lexsort((cells[:, 1], cells[:, 0], d2))
        c = cells[order[0]]
        return int(c[0]), int(c[1])


def plan_low_level(passable: np.ndarray, cell, heading: int, goal, planner: LowLevelPlanner | None = None) -> Plan:
    """One-shot planning call; pass a :class:`LowLevelPlanner` to reuse tables."""
    return (planner or LowLevelPlanner()).plan(passable, cell, heading, goal)
