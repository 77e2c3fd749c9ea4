"""Scene-prior relation graph and the two-layer key-objects map."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path

import numpy as np
from scipy import ndimage

from . import categories as cat
from .errors import DimsMismatch, EmptySceneList, InvariantViolation, ParseError, UnknownCategory, WeightOutOfRange
from .scene import Scene
from .semantic_map import SemanticMap

NEAR_RADIUS_M = 1.0


@dataclass(frozen=True)
class Edge:
    a: int
    b: int
    relation: str = "near"
    weight: float = 1.0


@dataclass(frozen=True)
class PriorGraph:
    nodes: frozenset = frozenset()
    edges: tuple = ()
    _adj: dict = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        seen = set()
        adj: dict[int, set[int]] = {n: set() for n in self.nodes}
        for e in self.edges:
            if e.a == e.b:
                raise InvariantViolation("edge-self-loop", cat.category_name(e.a))
            if e.a not in self.nodes or e.b not in self.nodes:
                raise InvariantViolation("edge-endpoint-not-node", f"{e.a}-{e.b}")
            if not 0.0 <= e.weight <= 1.0:
                raise WeightOutOfRange(f"edge {cat.category_name(e.a)}-{cat.category_name(e.b)} weight {e.weight}")
            key = (e.a, e.b, e.relation)
            if key in seen:
                raise InvariantViolation("duplicate-edge", str(key))
            seen.add(key)
            adj[e.a].add(e.b)
            adj[e.b].add(e.a)
        object.__setattr__(self, "_adj", {k: frozenset(v) for k, v in adj.items()})

    def neighbours(self, node: int) -> frozenset:
        return self._adj.get(node, frozenset())

    def without_edges(self) -> "PriorGraph":
        return PriorGraph(self.nodes, ())

    def to_dict(self) -> dict:
        return {
            "nodes": [cat.category_name(n) for n in sorted(self.nodes)],
            "edges": [
                {"a": cat.category_name(e.a), "b": cat.category_name(e.b), "relation": e.relation, "weight": e.weight}
                for e in self.edges
            ],
        }


def prior_graph_from_dict(d: dict) -> PriorGraph:
    if not isinstance(d, dict):
        raise ParseError("prior graph must be an object", field="<root>")
    nodes_raw = d.get("nodes", [])
    edges_raw = d.get("edges")
    if edges_raw is None:
        raise ParseError("missing key 'edges'", field="edges")
    if not isinstance(nodes_raw, list) or not isinstance(edges_raw, list):
        raise ParseError("'nodes' and 'edges' must be lists", field="nodes/edges")
    names = set(nodes_raw)
    for i, e in enumerate(edges_raw):
        for k in ("a", "b", "weight"):
            if not isinstance(e, dict) or k not in e:
                raise ParseError(f"edge {i} missing '{k}'", field=f"edges[{i}].{k}")
        names.update((e["a"], e["b"]))
    unknown = sorted(str(n) for n in names if not cat.is_known(n))
    if unknown:
        raise UnknownCategory(f"unknown categories: {', '.join(unknown)}", field="nodes")
    edges = []
    for i, e in enumerate(edges_raw):
        try:
            w = float(e["weight"])
        except (TypeError, ValueError):
            raise ParseError(f"edge {i} weight is not a number", field=f"edges[{i}].weight") from None
        edges.append(Edge(cat.category_id(e["a"]), cat.category_id(e["b"]), str(e.get("relation", "near")), w))
    return PriorGraph(frozenset(cat.category_id(n) for n in names), tuple(edges))


def load_prior_graph(path) -> PriorGraph:
    text = Path(path).read_text()
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc.msg}", line=exc.lineno) from None
    return prior_graph_from_dict(d)


def save_prior_graph(graph: PriorGraph, path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(graph.to_dict(), indent=1) + "\n")
    return path


def _near_pairs(scene: Scene, radius_cells: float) -> set[tuple[int, int]]:
    """Unordered category pairs with some instances within ``radius_cells``.

    Footprint-to-footprint distance is measured between cell centres.
    """
    grids = {}
    for c in scene.present_categories():
        mask = np.zeros(scene.dims, dtype=bool)
        for o in scene.instances_of(c):
            mask[tuple(np.asarray(o.footprint).T)] = True
        grids[c] = ndimage.distance_transform_edt(~mask)
    pairs = set()
    for a, b in combinations(sorted(grids), 2):
        mask_b = grids[b] == 0
        if grids[a][mask_b].min() <= radius_cells + 1e-9:
            pairs.add((a, b))
    return pairs


def derive_prior_graph(scenes, min_weight: float = 0.0, radius_m: float = NEAR_RADIUS_M) -> PriorGraph:
    """Co-occurrence graph: weight = fraction of scenes where the pair is near."""
    scenes = list(scenes)
    if not scenes:
        raise EmptySceneList("derive_prior_graph needs at least one scene")
    counts: dict[tuple[int, int], int] = {}
    nodes = set()
    for s in scenes:
        nodes.update(s.present_categories())
        for p in _near_pairs(s, radius_m / cat.CELL_SIZE):
            counts[p] = counts.get(p, 0) + 1
    edges = []
    for (a, b) in sorted(counts):
        w = counts[(a, b)] / len(scenes)
        if w >= min_weight:
            edges.append(Edge(a, b, "near", w))
    return PriorGraph(frozenset(nodes), tuple(edges))


def related_categories(graph: PriorGraph | None, targets) -> set[int]:
    if graph is None:
        return set()
    targets = set(targets)
    out = set()
    for t in targets:
        out |= graph.neighbours(t)
    return out - targets


@dataclass(frozen=True, eq=False)
class KeyObjectsMap:
    layer_targets: np.ndarray
    layer_related: np.ndarray

    @property
    def dims(self) -> tuple[int, int]:
        return self.layer_targets.shape

    def stacked(self) -> np.ndarray:
        """``L x W x 2`` view with targets first."""
        return np.stack([self.layer_targets, self.layer_related], axis=-1)

    def __eq__(self, other):
        if not isinstance(other, KeyObjectsMap):
            return NotImplemented
        return np.array_equal(self.layer_targets, other.layer_targets) and np.array_equal(
            self.layer_related, other.layer_related
        )


def build_key_objects_map(sem: SemanticMap, targets, graph: PriorGraph | None, dims=None) -> KeyObjectsMap:
    if dims is not None and tuple(dims) != sem.dims:
        raise DimsMismatch(f"key map dims {tuple(dims)} != semantic map {sem.dims}")
    cats = sem.categories > 0
    tgt = sorted(int(t) for t in targets)
    rel = sorted(related_categories(graph, tgt))
    lt = cats[..., tgt].any(axis=-1) if tgt else np.zeros(sem.dims, dtype=bool)
    lr = cats[..., rel].any(axis=-1) if rel else np.zeros(sem.dims, dtype=bool)
    return KeyObjectsMap(lt, lr)
