"""Per-decision view of an agent's knowledge shared by all high-level policies."""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import ndimage

from ..grid import bfs_distance
from ..perception import Pose
from ..priors import KeyObjectsMap
from ..scene import FOUR_CONNECTED
from ..semantic_map import SemanticMap
from .features import FeatureVector, fuse_features

FRONTIER_MIN_CLUSTER = 3


@dataclass(eq=False)
class DecisionContext:
    sem: SemanticMap
    key: KeyObjectsMap
    pose: Pose
    passable: np.ndarray
    last_action: int | None = None
    P: int = 16
    claims: tuple = ()  # other agents' current sub-goal sources (central mode)
    claim_radius: int = 10
    tabu: np.ndarray | None = None
    band_seen: np.ndarray | None = None  # (3, L, W): cells covered by rays at each pitch

    @property
    def cell(self) -> tuple[int, int]:
        return self.pose.cell

    @property
    def dims(self):
        return self.sem.dims

    @cached_property
    def explored(self) -> np.ndarray:
        return self.sem.explored > 0

    @cached_property
    def agent_dist(self) -> np.ndarray:
        """Geodesic hop count from the agent over passable cells."""
        return bfs_distance(self.passable, [self.cell])

    @cached_property
    def reachable(self) -> np.ndarray:
        return np.isfinite(self.agent_dist) & self.passable

    @cached_property
    def frontier(self) -> np.ndarray:
        """Explored passable cells 4-adjacent to an unexplored cell, small clusters dropped."""
        unexplored = ~self.explored
        adj = ndimage.binary_dilation(unexplored, structure=FOUR_CONNECTED)
        f = self.explored & self.passable & adj & self.reachable
        labels, n = ndimage.label(f, structure=np.ones((3, 3), bool))
        if n == 0:
            return f
        sizes = np.bincount(labels.ravel())
        big = sizes >= FRONTIER_MIN_CLUSTER
        big[0] = False
        if big[1:].any():
            return big[labels]
        return f

    @cached_property
    def uncovered(self) -> np.ndarray:
        """Explored floor cells not yet seen at both the low and the high pitch."""
        if self.band_seen is None:
            return np.zeros(self.dims, dtype=bool)
        return self.explored & self.passable & ~(self.band_seen[0] & self.band_seen[2])

    @cached_property
    def features(self) -> FeatureVector:
        return fuse_features(self.sem, self.key, self.pose, self.last_action, self.P)

    def cost_to(self, mask: np.ndarray) -> np.ndarray:
        """Hop cost from the agent to each cell in ``mask``; occupied cells use their best neighbour."""
        d = self.agent_dist
        nb = np.full(d.shape, np.inf)
        nb[1:, :] = np.minimum(nb[1:, :], d[:-1, :])
        nb[:-1, :] = np.minimum(nb[:-1, :], d[1:, :])
        nb[:, 1:] = np.minimum(nb[:, 1:], d[:, :-1])
        nb[:, :-1] = np.minimum(nb[:, :-1], d[:, 1:])
        cost = np.where(self.passable, d, nb + 1)
        return np.where(mask, cost, np.inf)

    def unclaimed(self, mask: np.ndarray) -> np.ndarray:
        if not self.claims:
            return mask
        keep = mask.copy()
        r = self.claim_radius
        for cx, cy in self.claims:
            keep[max(cx - r, 0): cx + r + 1, max(cy - r, 0): cy + r + 1] = False
        return keep if keep.any() else mask


def nearest_cell(cost: np.ndarray):
    """Cell of minimum finite cost, ties by smaller x then y; None if none."""
    finite = np.isfinite(cost)
    if not finite.any():
        return None
    m = cost[finite].min()
    xs, ys = np.nonzero(cost == m)
    # np.nonzero scans row-major, so the first hit has the smallest x, then y
    return int(xs[0]), int(ys[0])


def snap_subgoal(ctx: DecisionContext, sg) -> tuple[int, int] | None:
    """Nearest explored, passable cell reachable from the agent, by geodesic distance from ``sg``."""
    L, W = ctx.dims
    sg = (min(max(int(sg[0]), 0), L - 1), min(max(int(sg[1]), 0), W - 1))
    valid = ctx.explored & ctx.reachable
    if not valid.any():
        return None
    if valid[sg]:
        return sg
    d = bfs_distance(ctx.passable, [sg])
    cost = np.where(valid, d, np.inf)
    if not np.isfinite(cost).any():
        xs, ys = np.meshgrid(np.arange(L), np.arange(W), indexing="ij")
        cost = np.where(valid, (xs - sg[0]) ** 2 + (ys - sg[1]) ** 2, np.inf).astype(float)
    return nearest_cell(cost)


def _field(passable, mask):
    cells = np.argwhere(mask)
    if len(cells) == 0:
        return None
    return bfs_distance(passable, [tuple(c) for c in cells])


def target_field(ctx: DecisionContext):
    """dis_to: hop distance to the nearest target-layer cell (None if no such cell)."""
    if "_dto" not in ctx.__dict__:
        ctx.__dict__["_dto"] = _field(ctx.passable, ctx.key.layer_targets)
    return ctx.__dict__["_dto"]


def related_field(ctx: DecisionContext):
    """dis_ko: hop distance to the nearest related-layer cell (None if no such cell)."""
    if "_dko" not in ctx.__dict__:
        ctx.__dict__["_dko"] = _field(ctx.passable, ctx.key.layer_related)
    return ctx.__dict__["_dko"]
