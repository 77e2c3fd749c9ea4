from __future__ import annotations

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from semnav import categories as cat
from semnav.scene import GenerationParams, ObjectInstance, Scene, generate_scene

settings.register_profile("default", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def box_room(L, W, objects=(), spawns=None, walls=None, sid="fixture"):
    """A walled ``L x W`` room; ``objects`` are ``(name, cells[, band])`` tuples."""
    occ = np.zeros((L, W), dtype=bool)
    occ[0, :] = occ[-1, :] = occ[:, 0] = occ[:, -1] = True
    for x, y in walls or ():
        occ[x, y] = True
    objs = []
    for i, spec in enumerate(objects):
        name, cells = spec[0], spec[1]
        cid = cat.category_id(name)
        band = spec[2] if len(spec) > 2 else cat.VOCABULARY[cid].band
        objs.append(ObjectInstance(i, cid, tuple(tuple(c) for c in cells), band))
    if spawns is None:
        taken = occ.copy()
        for o in objs:
            for c in o.footprint:
                taken[c] = True
        spawns = [tuple(int(v) for v in np.argwhere(~taken)[0])]
    names = [cat.NAMES[c] for c in sorted({o.category for o in objs})]
    return Scene(sid, (L, W), occ, tuple(objs), tuple(spawns), tuple(names))


@pytest.fixture(scope="session")
def scene80():
    return generate_scene(0)


@pytest.fixture(scope="session")
def small_scenes():
    return [generate_scene(100 + i, GenerationParams(dims=(48, 48), rooms=1)) for i in range(3)]


ACCEPTANCE: list[tuple[int, bool, str]] = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n, ok, detail in sorted(ACCEPTANCE):
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
