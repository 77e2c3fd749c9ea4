import math
from functools import lru_cache
from types import SimpleNamespace

import numpy as np
import pytest

from semnav import categories as cat
from semnav.errors import InstanceTooLarge
from semnav.evaluation.oracle import oracle_makespan
from semnav.perception import Pose, observe
from semnav.raycast import OBJECT
from semnav.scene import TaskSpec

from conftest import box_room
from oracles import joint_walk_makespan

SMALL = ["Laptop", "Apple", "Mug", "Book", "Bowl", "Vase"]


def _found_from(scene):
    @lru_cache(maxsize=None)
    def f(pose):
        (cell, h, p) = pose
        obs = observe(scene, Pose.from_cell(cell, h, p))
        close = (obs.kind == OBJECT) & (obs.depth < 1.0 - 1e-9)
        return frozenset(int(c) for c in obs.category[close])
    return f


def _instance(seed, N=1):
    rng = np.random.default_rng(seed)
    L, W = int(rng.integers(6, 9)), int(rng.integers(6, 9))
    interior = [(x, y) for x in range(1, L - 1) for y in range(1, W - 1)]
    picks = rng.permutation(len(interior))
    n_obj = int(rng.integers(1, 3))
    n_wall = int(rng.integers(0, 4))
    names = list(rng.choice(SMALL, n_obj, replace=False))
    objects = [(names[i], [interior[picks[i]]]) for i in range(n_obj)]
    walls = [interior[picks[n_obj + i]] for i in range(n_wall)]
    spawns = [interior[picks[n_obj + n_wall + i]] for i in range(N)]
    scene = box_room(L, W, objects, spawns=spawns, walls=walls, sid=f"tiny{seed}")
    present = sorted(scene.present_categories())
    M = int(rng.integers(1, min(2, len(present)) + 1))
    targets = tuple(int(c) for c in rng.choice(present, M, replace=False))
    heads = [int(h) for h in rng.choice([0, 90, 180, 270], N)]
    return scene, TaskSpec(scene.id, targets, tuple(zip(spawns, heads)), seed)


@pytest.mark.parametrize("seed", range(20))
def test_matches_joint_walk_search(seed):
    scene, task = _instance(seed)
    assert oracle_makespan(scene, task) == joint_walk_makespan(scene, task, _found_from(scene))


def _corridor(dist):
    scene = box_room(60, 5, [("Laptop", [(2 + dist, 2)], "eye")], spawns=[(2, 2)])
    return scene, TaskSpec(scene.id, (cat.category_id("Laptop"),), (((2, 2), 0),), 0)


def test_target_in_range_from_spawn():
    # 10 cells is 0.5 m, already inside the Found radius: Found + Done
    scene, task = _corridor(10)
    assert oracle_makespan(scene, task) == 2


def test_target_thirty_cells_ahead():
    # 30 -> 25 -> 20 (exactly 1.0 m, not in range) -> 15 cells: three moves, Found, Done
    scene, task = _corridor(30)
    assert oracle_makespan(scene, task) == 5
    assert joint_walk_makespan(scene, task, _found_from(scene)) == 5


def test_symmetric_two_agents_two_targets():
    scene = box_room(60, 5, [("Laptop", [(2, 2)], "eye"), ("Apple", [(57, 2)], "eye")], spawns=[(22, 2), (37, 2)])
    lap, app = cat.category_id("Laptop"), cat.category_id("Apple")
    pair_a = TaskSpec(scene.id, (lap,), (((22, 2), 180),), 0)
    pair_b = TaskSpec(scene.id, (app,), (((37, 2), 0),), 0)
    both = TaskSpec(scene.id, (lap, app), (((22, 2), 180), ((37, 2), 0)), 0)
    single = oracle_makespan(scene, pair_a)
    assert single == oracle_makespan(scene, pair_b) == 3  # one move, Found, Done
    assert oracle_makespan(scene, both) == single
    assert oracle_makespan(scene, both.with_agents(1)) > single


def test_small_joint_instance_two_agents():
    scene = box_room(5, 7, [("Mug", [(2, 5)], "eye")], spawns=[(1, 1), (3, 2)])
    task = TaskSpec(scene.id, (cat.category_id("Mug"),), (((1, 1), 180), ((3, 2), 270)), 0)
    assert oracle_makespan(scene, task) == joint_walk_makespan(scene, task, _found_from(scene))


def test_unreachable_target_is_infinite():
    walls = [(x, 3) for x in range(1, 9)]
    scene = box_room(10, 12, [("Mug", [(5, 9)], "eye")], spawns=[(2, 1)], walls=walls)
    task = TaskSpec(scene.id, (cat.category_id("Mug"),), (((2, 1), 0),), 0)
    assert math.isinf(oracle_makespan(scene, task))


def test_too_large():
    scene, _ = _corridor(10)
    task = SimpleNamespace(M=7, N=1, targets=tuple(range(7)), agent_spawns=(((2, 2), 0),))
    with pytest.raises(InstanceTooLarge):
        oracle_makespan(scene, task)
