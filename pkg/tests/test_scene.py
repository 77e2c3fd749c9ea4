import json

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import ndimage

from semnav import categories as cat
from semnav.errors import (ConfigError, InsufficientCategories, InsufficientSpawns, InvariantViolation, ParseError,
                           UnknownCategory)
from semnav.scene import (GenerationParams, TaskSpec, generate_scene, load_scene, sample_task, save_scene,
                          scene_from_dict, scene_to_dict)

from conftest import box_room


def test_generation_is_deterministic():
    a, b = generate_scene(7), generate_scene(7)
    assert a == b
    assert json.dumps(scene_to_dict(a)) == json.dumps(scene_to_dict(b))


def test_zero_density_gives_walls_only():
    s = generate_scene(3, GenerationParams(object_density=0))
    assert s.objects == ()
    assert s.occupancy.any()


def test_small_scene_free_cells_connected():
    s = generate_scene(1, GenerationParams(dims=(40, 40)))
    _, n = ndimage.label(s.free, structure=ndimage.generate_binary_structure(2, 1))
    assert n == 1


@given(st.integers(0, 10_000))
def test_generated_scene_invariants(seed):
    s = generate_scene(seed, GenerationParams(dims=(48, 48), rooms=2))
    _, n = ndimage.label(s.free, structure=ndimage.generate_binary_structure(2, 1))
    assert n == 1
    for c in s.spawn_cells:
        assert s.free[c]
    for o in s.objects:
        for c in o.footprint:
            assert not s.occupancy[c]
    assert len(s.category_table) <= cat.K_TOTAL


def test_invalid_dims_names_field():
    with pytest.raises(ConfigError, match="dims"):
        GenerationParams(dims=(8, 8)).validate()


def test_sample_task_forced_targets():
    s = box_room(30, 30, [("Laptop", [(5, 5)]), ("Box", [(10, 10)]), ("Apple", [(20, 20)])],
                 spawns=[(3, 3), (3, 20)])
    t = sample_task(s, 3, 1, seed=4)
    assert sorted(t.targets) == sorted(cat.category_id(n) for n in ("Laptop", "Box", "Apple"))


def test_sample_task_deterministic(scene80):
    assert sample_task(scene80, 1, 1, 9) == sample_task(scene80, 1, 1, 9)


def test_sample_task_errors():
    s = box_room(30, 30, [("Laptop", [(5, 5)]), ("Box", [(10, 10)])], spawns=[(3, 3)])
    with pytest.raises(InsufficientCategories):
        sample_task(s, 3, 1, 0)
    with pytest.raises(InsufficientSpawns):
        sample_task(s, 1, 2, 0)


@given(st.integers(0, 2**31 - 1), st.integers(1, 5), st.integers(1, 5))
def test_sampled_targets_have_instances(scene80, seed, M, N):
    t = sample_task(scene80, M, N, seed)
    for c in t.targets:
        assert scene80.instances_of(c)
    assert len({c for c, _ in t.agent_spawns}) == N


def test_task_invariants():
    with pytest.raises(InvariantViolation):
        TaskSpec("s", (0, 1, 2, 3, 4, 5), (((1, 1), 0),), 0)
    with pytest.raises(InvariantViolation):
        TaskSpec("s", (0,), (((1, 1), 0), ((1, 1), 90)), 0)


def test_round_trip(tmp_path, scene80):
    p = save_scene(scene80, tmp_path / "s.json")
    assert load_scene(p) == scene80


def test_footprint_on_wall_rejected():
    d = scene_to_dict(box_room(10, 10, [("Laptop", [(4, 4)])]))
    d["objects"][0]["footprint"] = [[0, 0]]
    with pytest.raises(InvariantViolation, match="footprint-on-wall"):
        scene_from_dict(d)


def test_unknown_category_listed():
    d = scene_to_dict(box_room(10, 10, [("Laptop", [(4, 4)])]))
    d["objects"][0]["category"] = "Spaceship"
    with pytest.raises((ParseError, UnknownCategory), match="Spaceship"):
        scene_from_dict(d)


def test_parse_error_has_line(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text('{\n "id": "x",\n "dims": [10, 10\n}')
    with pytest.raises(ParseError, match="line"):
        load_scene(p)
