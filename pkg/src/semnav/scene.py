"""Immutable grid scenes, procedural generation, task sampling and scene files."""
from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy import ndimage

from . import categories as cat
from .categories import BANDS, CELL_SIZE, K_TOTAL
from .errors import (
    ConfigError,
    GenerationError,
    InsufficientCategories,
    InsufficientSpawns,
    InvariantViolation,
    ParseError,
    UnknownCategory,
)

HEADINGS = (0, 90, 180, 270)
FOUR_CONNECTED = ndimage.generate_binary_structure(2, 1)


@dataclass(frozen=True)
class ObjectInstance:
    instance_id: int
    category: int
    footprint: tuple[tuple[int, int], ...]
    height_band: str

    @property
    def band_index(self) -> int:
        return BANDS.index(self.height_band)


def _four_connected(cells) -> bool:
    cells = set(cells)
    start = next(iter(cells))
    seen = {start}
    queue = deque([start])
    while queue:
        x, y = queue.popleft()
        for nb in ((x + 1, y), (x - 1, y), (x, y + 1), (x, y - 1)):
            if nb in cells and nb not in seen:
                seen.add(nb)
                queue.append(nb)
    return len(seen) == len(cells)


@dataclass(frozen=True, eq=False)
class Scene:
    """A static 2-D world.  Grids are indexed ``[x, y]`` with shape ``dims``."""

    id: str
    dims: tuple[int, int]
    occupancy: np.ndarray
    objects: tuple[ObjectInstance, ...]
    spawn_cells: tuple[tuple[int, int], ...]
    category_table: tuple[str, ...]
    cell_size: float = CELL_SIZE

    def __post_init__(self):
        occ = np.array(self.occupancy, dtype=bool, copy=True)
        occ.setflags(write=False)
        object.__setattr__(self, "occupancy", occ)
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))
        object.__setattr__(self, "objects", tuple(self.objects))
        object.__setattr__(
            self, "spawn_cells", tuple((int(x), int(y)) for x, y in self.spawn_cells)
        )
        object.__setattr__(self, "category_table", tuple(self.category_table))
        self._validate()

    def _validate(self):
        L, W = self.dims
        if self.cell_size != CELL_SIZE:
            raise InvariantViolation("cell-size", f"expected {CELL_SIZE}, got {self.cell_size}")
        if self.occupancy.shape != (L, W):
            raise InvariantViolation("dims", f"occupancy shape {self.occupancy.shape} != {self.dims}")
        if len(self.category_table) > K_TOTAL:
            raise InvariantViolation("category-count")
        taken = np.zeros((L, W), dtype=bool)
        for obj in self.objects:
            if not obj.footprint:
                raise InvariantViolation("footprint-empty", f"object {obj.instance_id}")
            if obj.height_band not in BANDS:
                raise InvariantViolation("height-band", f"object {obj.instance_id}")
            for x, y in obj.footprint:
                if not (0 <= x < L and 0 <= y < W):
                    raise InvariantViolation("footprint-out-of-bounds", f"object {obj.instance_id}")
                if self.occupancy[x, y]:
                    raise InvariantViolation("footprint-on-wall", f"object {obj.instance_id} at {(x, y)}")
                if taken[x, y]:
                    raise InvariantViolation("footprint-overlap", f"object {obj.instance_id} at {(x, y)}")
                taken[x, y] = True
            if not _four_connected(obj.footprint):
                raise InvariantViolation("footprint-not-connected", f"object {obj.instance_id}")
        for x, y in self.spawn_cells:
            if not (0 <= x < L and 0 <= y < W) or self.occupancy[x, y] or taken[x, y]:
                raise InvariantViolation("spawn-not-free", f"spawn {(x, y)}")
        present = tuple(cat.NAMES[c] for c in sorted({o.category for o in self.objects}))
        if present != self.category_table:
            raise InvariantViolation("category-table-mismatch", f"{self.category_table} vs {present}")

    def __eq__(self, other):
        if not isinstance(other, Scene):
            return NotImplemented
        return (
            self.id == other.id
            and self.dims == other.dims
            and self.cell_size == other.cell_size
            and np.array_equal(self.occupancy, other.occupancy)
            and self.objects == other.objects
            and self.spawn_cells == other.spawn_cells
            and self.category_table == other.category_table
        )

    __hash__ = object.__hash__

    # derived lookup grids, built lazily

    @cached_property
    def object_grid(self) -> np.ndarray:
        grid = np.full(self.dims, -1, dtype=np.int32)
        for obj in self.objects:
            xs, ys = zip(*obj.footprint)
            grid[list(xs), list(ys)] = obj.instance_id
        grid.setflags(write=False)
        return grid

    @cached_property
    def instances(self) -> dict[int, ObjectInstance]:
        return {o.instance_id: o for o in self.objects}

    @cached_property
    def blocked(self) -> np.ndarray:
        """Cells an agent cannot stand on: walls and object footprints."""
        grid = self.occupancy | (self.object_grid >= 0)
        grid.setflags(write=False)
        return grid

    @cached_property
    def free(self) -> np.ndarray:
        grid = ~self.blocked
        grid.setflags(write=False)
        return grid

    def instances_of(self, category: int) -> list[ObjectInstance]:
        return [o for o in self.objects if o.category == category]

    def present_categories(self) -> list[int]:
        return sorted({o.category for o in self.objects})

    def is_free(self, cell) -> bool:
        x, y = cell
        L, W = self.dims
        return 0 <= x < L and 0 <= y < W and bool(self.free[x, y])


@dataclass(frozen=True)
class TaskSpec:
    scene_id: str
    targets: tuple[int, ...]
    agent_spawns: tuple[tuple[tuple[int, int], int], ...]
    seed: int

    def __post_init__(self):
        object.__setattr__(self, "targets", tuple(int(t) for t in self.targets))
        object.__setattr__(
            self,
            "agent_spawns",
            tuple(((int(c[0]), int(c[1])), int(h)) for c, h in self.agent_spawns),
        )
        if not 1 <= len(self.targets) <= 5:
            raise InvariantViolation("target-count", str(len(self.targets)))
        if not 1 <= len(self.agent_spawns) <= 5:
            raise InvariantViolation("agent-count", str(len(self.agent_spawns)))
        if len({c for c, _ in self.agent_spawns}) != len(self.agent_spawns):
            raise InvariantViolation("spawns-distinct")

    @property
    def task_id(self) -> str:
        return f"{self.scene_id}/M{len(self.targets)}/s{self.seed}"

    @property
    def M(self) -> int:
        return len(self.targets)

    @property
    def N(self) -> int:
        return len(self.agent_spawns)

    def with_agents(self, n: int) -> "TaskSpec":
        if not 1 <= n <= len(self.agent_spawns):
            raise InsufficientSpawns(f"task has {len(self.agent_spawns)} spawns, asked for {n}")
        return TaskSpec(self.scene_id, self.targets, self.agent_spawns[:n], self.seed)

    def to_dict(self) -> dict:
        return {
            "scene_id": self.scene_id,
            "targets": [cat.NAMES[t] for t in self.targets],
            "agent_spawns": [[list(c), h] for c, h in self.agent_spawns],
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TaskSpec":
        return cls(
            d["scene_id"],
            tuple(cat.category_id(t) for t in d["targets"]),
            tuple((tuple(c), h) for c, h in d["agent_spawns"]),
            d["seed"],
        )


@dataclass(frozen=True)
class GenerationParams:
    dims: tuple[int, int] = (80, 80)
    rooms: int = 3
    object_density: float = 0.75  # objects per square metre of floor
    door_width: int = 16
    min_room: int = 24
    object_gap: int = 2
    anchor_affinity: float = 0.85
    categories: tuple[str, ...] | None = None
    n_spawns: int = 12
    spawn_clearance: int = 3
    max_retries: int = 25

    def validate(self):
        L, W = self.dims
        if not (16 <= L <= 240 and 16 <= W <= 240):
            raise ConfigError(f"dims: each side must be within [16, 240], got {self.dims}")
        if self.rooms < 1:
            raise ConfigError(f"rooms: must be >= 1, got {self.rooms}")
        if self.object_density < 0:
            raise ConfigError(f"object_density: must be >= 0, got {self.object_density}")
        if self.door_width < 2:
            raise ConfigError(f"door_width: must be >= 2, got {self.door_width}")
        if self.n_spawns < 1:
            raise ConfigError(f"n_spawns: must be >= 1, got {self.n_spawns}")
        if self.categories is not None:
            unknown = [c for c in self.categories if not cat.is_known(c)]
            if unknown:
                raise ConfigError(f"categories: unknown names {unknown}")


class _Retry(Exception):
    pass


def _connected(free: np.ndarray) -> bool:
    _, n = ndimage.label(free, structure=FOUR_CONNECTED)
    return n == 1


def _split_rooms(rng, walls, params):
    L, W = walls.shape
    rooms = [(1, 1, L - 1, W - 1)]
    doors = np.zeros_like(walls)
    for _ in range(params.rooms - 1):
        order = sorted(range(len(rooms)), key=lambda i: -(rooms[i][2] - rooms[i][0]) * (rooms[i][3] - rooms[i][1]))
        for i in order:
            x0, y0, x1, y1 = rooms[i]
            w, h = x1 - x0, y1 - y0
            m = params.min_room
            vertical = w >= h
            span = w if vertical else h
            if span < 2 * m + 1:
                continue
            s = int(rng.integers((x0 if vertical else y0) + m, (x1 if vertical else y1) - m))
            length = h if vertical else w
            dw = min(params.door_width, length - 4)
            lo = (y0 if vertical else x0) + 2
            d = int(rng.integers(lo, lo + length - 4 - dw + 1))
            if vertical:
                walls[s, y0:y1] = True
                walls[s, d:d + dw] = False
                doors[s, d:d + dw] = True
                rooms[i:i + 1] = [(x0, y0, s, y1), (s + 1, y0, x1, y1)]
            else:
                walls[x0:x1, s] = True
                walls[d:d + dw, s] = False
                doors[d:d + dw, s] = True
                rooms[i:i + 1] = [(x0, y0, x1, s), (x0, s + 1, x1, y1)]
            break
        else:
            break
    return rooms, doors


class _Placer:
    def __init__(self, rng, walls, doors, params):
        self.rng = rng
        self.walls = walls
        self.params = params
        self.objmask = np.zeros_like(walls)
        self.keepout = ndimage.binary_dilation(doors, iterations=4)
        self.objects: list[ObjectInstance] = []
        self.rects: dict[int, tuple[int, int, int, int]] = {}

    def _try(self, x0, y0, w, h, category, ignore=None):
        L, W = self.walls.shape
        if x0 < 1 or y0 < 1 or x0 + w > L - 1 or y0 + h > W - 1:
            return False
        sl = (slice(x0, x0 + w), slice(y0, y0 + h))
        if self.walls[sl].any() or self.keepout[sl].any():
            return False
        g = self.params.object_gap
        near = (slice(max(x0 - g, 0), x0 + w + g), slice(max(y0 - g, 0), y0 + h + g))
        if self.objmask[near].any():
            return False
        self.objmask[sl] = True
        if not _connected(~self.walls & ~self.objmask):
            self.objmask[sl] = False
            return False
        iid = len(self.objects)
        footprint = tuple((x, y) for x in range(x0, x0 + w) for y in range(y0, y0 + h))
        self.objects.append(ObjectInstance(iid, int(category), footprint, cat.VOCABULARY[category].band))
        self.rects[iid] = (x0, y0, w, h)
        return True

    def _size(self, category):
        w, h = cat.VOCABULARY[category].size
        if self.rng.random() < 0.5:
            w, h = h, w
        return w, h

    def place_against_wall(self, category, rooms, tries=40):
        for _ in range(tries):
            x0, y0, x1, y1 = rooms[int(self.rng.integers(len(rooms)))]
            w, h = self._size(category)
            side = int(self.rng.integers(4))
            if side == 0:
                px, py = x0, int(self.rng.integers(y0, max(y0 + 1, y1 - h + 1)))
            elif side == 1:
                px, py = x1 - w, int(self.rng.integers(y0, max(y0 + 1, y1 - h + 1)))
            elif side == 2:
                px, py = int(self.rng.integers(x0, max(x0 + 1, x1 - w + 1))), y0
            else:
                px, py = int(self.rng.integers(x0, max(x0 + 1, x1 - w + 1))), y1 - h
            if self._try(px, py, w, h, category):
                return True
        return False

    def place_near(self, category, anchor_iid, tries=40):
        ax, ay, aw, ah = self.rects[anchor_iid]
        g = self.params.object_gap
        for _ in range(tries):
            w, h = self._size(category)
            gap = g + int(self.rng.integers(0, 3))
            side = int(self.rng.integers(4))
            if side == 0:
                px, py = ax - gap - w, int(self.rng.integers(ay - h + 1, ay + ah))
            elif side == 1:
                px, py = ax + aw + gap, int(self.rng.integers(ay - h + 1, ay + ah))
            elif side == 2:
                px, py = int(self.rng.integers(ax - w + 1, ax + aw)), ay - gap - h
            else:
                px, py = int(self.rng.integers(ax - w + 1, ax + aw)), ay + ah + gap
            if self._try(px, py, w, h, category):
                return True
        return False

    def place_free(self, category, rooms, tries=40):
        for _ in range(tries):
            x0, y0, x1, y1 = rooms[int(self.rng.integers(len(rooms)))]
            w, h = self._size(category)
            if x1 - x0 <= w + 2 or y1 - y0 <= h + 2:
                continue
            px = int(self.rng.integers(x0 + 1, x1 - w))
            py = int(self.rng.integers(y0 + 1, y1 - h))
            if self._try(px, py, w, h, category):
                return True
        return False


def generate_scene(seed: int, params: GenerationParams | None = None, scene_id: str | None = None) -> Scene:
    """Build a deterministic room layout with furniture and small objects.

    Rooms come from recursive binary splits joined by door gaps; large
    "anchor" furniture is placed against walls and small objects are placed
    either beside their usual anchor or at a random interior spot.
    """
    params = params or GenerationParams()
    params.validate()
    rng = np.random.default_rng(seed)
    for _ in range(params.max_retries):
        try:
            return _generate_once(rng, params, scene_id or f"scene-{seed}")
        except _Retry:
            continue
    raise GenerationError(
        f"could not satisfy generation constraints in {params.max_retries} attempts (seed={seed})"
    )


def _generate_once(rng, params, scene_id):
    L, W = params.dims
    walls = np.zeros((L, W), dtype=bool)
    walls[0, :] = walls[-1, :] = walls[:, 0] = walls[:, -1] = True
    rooms, doors = _split_rooms(rng, walls, params)
    if not _connected(~walls):
        raise _Retry

    allowed = (
        [cat.category_id(n) for n in params.categories]
        if params.categories is not None
        else list(range(K_TOTAL))
    )
    anchors = [c for c in allowed if cat.VOCABULARY[c].anchor is None]
    smalls = [c for c in allowed if cat.VOCABULARY[c].anchor is not None]
    floor_m2 = float((~walls).sum()) * CELL_SIZE * CELL_SIZE
    n_objects = int(round(params.object_density * floor_m2))

    placer = _Placer(rng, walls, doors, params)
    n_anchor = min(len(anchors), math.ceil(n_objects / 2)) if anchors else 0
    if n_anchor:
        for c in rng.choice(anchors, size=n_anchor, replace=False):
            placer.place_against_wall(int(c), rooms)
    n_small = n_objects - len(placer.objects)
    for _ in range(max(n_small, 0)):
        if not smalls:
            break
        placed_anchors = [o for o in placer.objects if cat.VOCABULARY[o.category].anchor is None]
        if placed_anchors and rng.random() < params.anchor_affinity:
            a = placed_anchors[int(rng.integers(len(placed_anchors)))]
            deps = [d for d in cat.dependents_of(a.category) if d in smalls]
            if deps:
                placer.place_near(int(deps[int(rng.integers(len(deps)))]), a.instance_id)
                continue
        placer.place_free(int(smalls[int(rng.integers(len(smalls)))]), rooms)

    free = ~walls & ~placer.objmask
    clear = ndimage.binary_erosion(free, structure=np.ones((3, 3), bool), iterations=params.spawn_clearance)
    candidates = np.argwhere(clear)
    if len(candidates) < params.n_spawns:
        raise _Retry
    pick = rng.choice(len(candidates), size=params.n_spawns, replace=False)
    spawns = tuple((int(candidates[i][0]), int(candidates[i][1])) for i in pick)
    present = tuple(cat.NAMES[c] for c in sorted({o.category for o in placer.objects}))
    return Scene(scene_id, (L, W), walls, tuple(placer.objects), spawns, present)


def sample_task(scene: Scene, M: int, N: int, seed: int, pool=None) -> TaskSpec:
    """Draw M target categories and N spawn poses without replacement.

    ``pool`` optionally restricts which categories may become targets (used by
    the known/unknown split).
    """
    present = scene.present_categories()
    if pool is not None:
        pool = set(pool)
        present = [c for c in present if c in pool]
    if len(present) < M:
        raise InsufficientCategories(f"scene {scene.id} has {len(present)} eligible categories, need {M}")
    if len(scene.spawn_cells) < N:
        raise InsufficientSpawns(f"scene {scene.id} has {len(scene.spawn_cells)} spawns, need {N}")
    rng = np.random.default_rng(seed)
    targets = tuple(int(t) for t in rng.choice(present, size=M, replace=False))
    idx = rng.choice(len(scene.spawn_cells), size=N, replace=False)
    headings = rng.integers(0, 4, size=N) * 90
    spawns = tuple((scene.spawn_cells[i], int(h)) for i, h in zip(idx, headings))
    return TaskSpec(scene.id, targets, spawns, seed)


# scene files


def scene_to_dict(scene: Scene) -> dict:
    walls = np.argwhere(scene.occupancy)
    return {
        "id": scene.id,
        "dims": list(scene.dims),
        "cell_size": scene.cell_size,
        "walls": walls.tolist(),
        "objects": [
            {
                "id": o.instance_id,
                "category": cat.NAMES[o.category],
                "footprint": [list(c) for c in o.footprint],
                "height_band": o.height_band,
            }
            for o in scene.objects
        ],
        "spawns": [list(s) for s in scene.spawn_cells],
        "categories": list(scene.category_table),
    }


def _require(d, key, kind, where=""):
    if key not in d:
        raise ParseError("missing key", field=f"{where}{key}")
    if not isinstance(d[key], kind):
        raise ParseError(f"expected {getattr(kind, '__name__', kind)}", field=f"{where}{key}")
    return d[key]


def _cells(value, where):
    out = []
    for i, c in enumerate(value):
        if not (isinstance(c, list) and len(c) == 2 and all(isinstance(v, int) for v in c)):
            raise ParseError("expected [x, y] integer pair", field=f"{where}[{i}]")
        out.append((c[0], c[1]))
    return out


def scene_from_dict(d: dict) -> Scene:
    if not isinstance(d, dict):
        raise ParseError("scene document must be an object")
    sid = _require(d, "id", str)
    dims = _require(d, "dims", list)
    if len(dims) != 2 or not all(isinstance(v, int) and v > 0 for v in dims):
        raise ParseError("expected [L, W] positive integers", field="dims")
    cell_size = _require(d, "cell_size", (int, float))
    walls = _cells(_require(d, "walls", list), "walls")
    raw_objects = _require(d, "objects", list)
    spawns = _cells(_require(d, "spawns", list), "spawns")
    table = _require(d, "categories", list)

    unknown = sorted({n for n in table if not cat.is_known(n)})
    unknown += sorted({o.get("category") for o in raw_objects if isinstance(o, dict)} - set(cat.NAMES) - set(unknown) - {None})
    if unknown:
        raise UnknownCategory(f"unknown category names: {', '.join(map(str, unknown))}", field="categories")

    L, W = dims
    occ = np.zeros((L, W), dtype=bool)
    for x, y in walls:
        if not (0 <= x < L and 0 <= y < W):
            raise InvariantViolation("wall-out-of-bounds", f"{(x, y)}")
        occ[x, y] = True
    objects = []
    for i, o in enumerate(raw_objects):
        where = f"objects[{i}]."
        if not isinstance(o, dict):
            raise ParseError("expected object", field=f"objects[{i}]")
        iid = _require(o, "id", int, where)
        name = _require(o, "category", str, where)
        band = _require(o, "height_band", str, where)
        if band not in BANDS:
            raise ParseError(f"height_band must be one of {BANDS}", field=f"{where}height_band")
        fp = _cells(_require(o, "footprint", list, where), f"{where}footprint")
        objects.append(ObjectInstance(iid, cat.category_id(name), tuple(fp), band))
    return Scene(sid, (L, W), occ, tuple(objects), tuple(spawns), tuple(table), float(cell_size))


def save_scene(scene: Scene, path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(scene_to_dict(scene), separators=(",", ":")) + "\n")
    return path


def load_scene(path) -> Scene:
    text = Path(path).read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc.msg}", line=exc.lineno) from exc
    return scene_from_dict(doc)
