"""Independent reference implementations used only by the tests."""
from __future__ import annotations

import heapq
import math
from fractions import Fraction

import numpy as np


def dijkstra_grid(passable, sources):
    """Unit-weight 4-connected Dijkstra with a binary heap."""
    L, W = passable.shape
    dist = np.full((L, W), np.inf)
    heap = []
    for s in sources:
        dist[s] = 0
        heap.append((0, s))
    heapq.heapify(heap)
    while heap:
        d, (x, y) = heapq.heappop(heap)
        if d > dist[x, y]:
            continue
        for nx, ny in ((x + 1, y), (x - 1, y), (x, y + 1), (x, y - 1)):
            if 0 <= nx < L and 0 <= ny < W and passable[nx, ny] and d + 1 < dist[nx, ny]:
                dist[nx, ny] = d + 1
                heapq.heappush(heap, (d + 1, (nx, ny)))
    return dist


def point_sector_distance(apex, heading, half_angle, radius, point, samples=20_000):
    """Distance from ``point`` to a filled convex sector.

    Interior points give 0; points inside the angular range but beyond the
    arc give ``r - radius``; anything else is closest to one of the two
    straight edges, which are densely sampled.
    """
    ax, ay = apex
    px, py = point
    r = math.hypot(px - ax, py - ay)
    rel = (math.degrees(math.atan2(py - ay, px - ax)) - heading + 180) % 360 - 180
    if r == 0:
        return 0.0
    if abs(rel) <= half_angle:
        return max(r - radius, 0.0)
    ts = np.linspace(0, 1, samples)
    best = math.inf
    for edge in (-half_angle, half_angle):
        th = math.radians(heading + edge)
        xs = ax + ts * radius * math.cos(th)
        ys = ay + ts * radius * math.sin(th)
        best = min(best, float(np.min(np.hypot(xs - px, ys - py))))
    return best


_STEP = {0: (1, 0), 90: (0, 1), 180: (-1, 0), 270: (0, -1)}


def lattice_successors(passable, cell, heading, move_cells=5):
    """(cell, heading) after MoveAhead (early stop), RotateRight, RotateLeft."""
    L, W = passable.shape
    dx, dy = _STEP[heading]
    x, y = cell
    for _ in range(move_cells):
        nx, ny = x + dx, y + dy
        if not (0 <= nx < L and 0 <= ny < W and passable[nx, ny]):
            break
        x, y = nx, ny
    out = []
    if (x, y) != tuple(cell):
        out.append(((x, y), heading))
    out.append((tuple(cell), (heading + 90) % 360))
    out.append((tuple(cell), (heading - 90) % 360))
    return out


def lattice_dijkstra(passable, cell, heading, is_goal):
    """Fewest primitive actions from ``(cell, heading)`` to any cell with ``is_goal(cell)``."""
    start = (tuple(cell), heading)
    dist = {start: 0}
    heap = [(0, start)]
    while heap:
        d, state = heapq.heappop(heap)
        if d > dist[state]:
            continue
        if is_goal(state[0]):
            return d
        for nxt in lattice_successors(passable, *state):
            if d + 1 < dist.get(nxt, math.inf):
                dist[nxt] = d + 1
                heapq.heappush(heap, (d + 1, nxt))
    return math.inf


def lattice_reachable(passable, cell, heading):
    """Cells visitable from ``(cell, heading)`` under the primitive action lattice."""
    seen = {(tuple(cell), heading)}
    todo = [(tuple(cell), heading)]
    while todo:
        for nxt in lattice_successors(passable, *todo.pop()):
            if nxt not in seen:
                seen.add(nxt)
                todo.append(nxt)
    return {c for c, _ in seen}


def joint_walk_makespan(scene, task, found_from, max_rounds=200):
    """Exhaustive breadth-first search over joint agent states.

    A state is (poses, found categories, done flags); each round every
    active agent picks MoveAhead, RotateRight, RotateLeft, LookUp, LookDown,
    Found (any not-yet-found target valid at its pose) or Done.  Returns the
    fewest rounds until every agent is done with all targets found.
    ``found_from(pose)`` gives the categories Found is valid for at a pose.
    """
    from itertools import product

    free = scene.free
    targets = frozenset(task.targets)
    pitches = (-30, 0, 30)

    def moves(pose, found):
        (cell, h, p) = pose
        out = [((nc, nh, p), None) for nc, nh in lattice_successors(free, cell, h)]
        out += [((cell, h, q), None) for q in {min(p + 30, 30), max(p - 30, -30)} if q != p]
        out += [((cell, h, p), ("found", c)) for c in found_from(pose) & targets if c not in found]
        out.append(((cell, h, p), ("done", None)))
        return out

    start = (tuple((c, h, 0) for c, h in task.agent_spawns), frozenset(), (False,) * task.N)
    layer = {start}
    seen = {start}
    for rnd in range(1, max_rounds + 1):
        nxt = set()
        for poses, found, done in layer:
            options = [[(poses[i], None)] if done[i] else moves(poses[i], found) for i in range(task.N)]
            for combo in product(*options):
                f = set(found)
                d = list(done)
                for i, (_, ev) in enumerate(combo):
                    if ev and ev[0] == "found":
                        f.add(ev[1])
                    elif ev and ev[0] == "done":
                        d[i] = True
                state = (tuple(p for p, _ in combo), frozenset(f), tuple(d))
                if all(state[2]) and state[1] >= targets:
                    return rnd
                if all(state[2]) or state in seen:
                    continue
                seen.add(state)
                nxt.add(state)
        if not nxt:
            return math.inf
        layer = nxt
    return math.inf


# hand-substituted SPL and EI values: (success, L, D, expected L / max(D, L)) and (E, D, expected (E - D) / E)
SPL_CASES = [
    (True, 10, 20, Fraction(1, 2)),
    (False, 10, 20, Fraction(0)),
    (True, 7, 7, Fraction(1)),
    (True, 12, 48, Fraction(1, 4)),
    (True, 30, 45, Fraction(2, 3)),
    (False, 5, 500, Fraction(0)),
    (True, 9, 12, Fraction(3, 4)),
    (True, 100, 125, Fraction(4, 5)),
    (True, 3, 9, Fraction(1, 3)),
    (True, 21, 70, Fraction(3, 10)),
]
EI_CASES = [
    (100, 60, Fraction(2, 5)),
    (80, 80, Fraction(0)),
    (50, 75, Fraction(-1, 2)),
    (40, 10, Fraction(3, 4)),
    (200, 150, Fraction(1, 4)),
    (9, 6, Fraction(1, 3)),
    (120, 90, Fraction(1, 4)),
    (64, 48, Fraction(1, 4)),
    (30, 3, Fraction(9, 10)),
    (500, 499, Fraction(1, 500)),
]
