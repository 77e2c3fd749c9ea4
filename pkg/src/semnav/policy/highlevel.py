"""High-level sub-goal policies and the sub-goal reward.

Every policy exposes ``propose(ctx, rng) -> SubGoal``.  The learned policy
is a softmax over the ``P x P`` pooled blocks whose logits are a shared
linear function of per-block features plus a per-block bias; the critic is
linear in the block-averaged features.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage
from scipy.special import logsumexp

from ..errors import SemnavError
from .context import DecisionContext, nearest_cell, snap_subgoal
from .features import block_max_pool, pool_stride
from .lowlevel import ARRIVAL_RADIUS

ALPHA = 0.7
BETA = 0.3
BLOCK_EXTRA = 4  # frontier, explored-reachable fraction, unscanned fraction, distance


class NoCandidate(SemnavError):
    """No valid sub-goal exists on the current map."""


@dataclass(frozen=True)
class SubGoal:
    gx: int
    gy: int
    kind: str = "frontier"  # target | related | frontier | random | learned | fallback
    source: tuple | None = None  # the key/frontier cell the sub-goal was derived from
    info: dict | None = field(default=None, compare=False)

    @property
    def cell(self) -> tuple[int, int]:
        return self.gx, self.gy


def subgoal_reward(sg_new, sg_prev, dist_to_targets, dist_to_keys, alpha=ALPHA, beta=BETA):
    """``alpha * (dis_to(prev) - dis_to(new)) + beta * (dis_ko(prev) - dis_ko(new))``.

    A term is 0 when its field is ``None`` (no goal cells) or either
    distance is infinite.  Finite distances are converted to ``int`` so
    rational ``alpha``/``beta`` stay exact.
    """
    total = 0
    for w, field_ in ((alpha, dist_to_targets), (beta, dist_to_keys)):
        if field_ is None:
            continue
        a = field_[tuple(sg_prev)]
        b = field_[tuple(sg_new)]
        if not (math.isfinite(a) and math.isfinite(b)):
            continue
        total += w * (int(a) - int(b))
    return total


def _near_agent(ctx: DecisionContext) -> np.ndarray:
    L, W = ctx.dims
    x, y = ctx.cell
    r = ARRIVAL_RADIUS
    m = np.zeros((L, W), dtype=bool)
    m[max(x - r, 0): x + r + 1, max(y - r, 0): y + r + 1] = True
    return m


class GreedyPolicy:
    """Nearest remaining-target cell, else nearest related cell, else nearest frontier."""

    variant = "greedy"

    def propose(self, ctx: DecisionContext, rng=None) -> SubGoal:
        tabu = ctx.tabu if ctx.tabu is not None else np.zeros(ctx.dims, dtype=bool)
        for kind, layer in (("target", ctx.key.layer_targets), ("related", ctx.key.layer_related)):
            mask = ctx.unclaimed(layer & ~tabu)
            c = nearest_cell(ctx.cost_to(mask))
            if c is not None:
                sg = snap_subgoal(ctx, c)
                if sg is not None:
                    return SubGoal(sg[0], sg[1], kind, c)
        mask = ctx.unclaimed(ctx.frontier & ~tabu & ~_near_agent(ctx))
        c = nearest_cell(np.where(mask, ctx.agent_dist, np.inf))
        if c is not None:
            return SubGoal(c[0], c[1], "frontier", c)
        sg = look_subgoal(ctx, tabu)
        if sg is not None:
            return sg
        raise NoCandidate("no target, related, frontier or unscanned cell available")


LOOK_RANGE = (6, 15)  # viewing distance in cells for scanning the low/high bands
LOOK_MIN_CLUSTER = 10


def look_subgoal(ctx: DecisionContext, tabu) -> SubGoal | None:
    """A viewing spot for the nearest patch not yet seen looking down and up."""
    gap = ctx.uncovered & ~tabu
    labels, n = ndimage.label(gap, structure=np.ones((3, 3), bool))
    if n == 0:
        return None
    sizes = np.bincount(labels.ravel())
    sizes[0] = 0
    gap = ctx.unclaimed(sizes[labels] >= LOOK_MIN_CLUSTER)
    c = nearest_cell(np.where(gap, ctx.agent_dist, np.inf))
    if c is None:
        return None
    L, W = ctx.dims
    xs, ys = np.meshgrid(np.arange(L), np.arange(W), indexing="ij")
    r = np.hypot(xs - c[0], ys - c[1])
    spots = ctx.explored & ctx.reachable & (r >= LOOK_RANGE[0]) & (r <= LOOK_RANGE[1])
    v = nearest_cell(np.where(spots, ctx.agent_dist, np.inf))
    if v is None:
        v = c
    return SubGoal(v[0], v[1], "look", c)


class RandomSubgoalPolicy:
    """Uniform over explored, passable, reachable cells."""

    variant = "random"

    def propose(self, ctx: DecisionContext, rng) -> SubGoal:
        cand = ctx.explored & ctx.reachable & ~_near_agent(ctx)
        cells = np.argwhere(cand)
        if len(cells) == 0:
            raise NoCandidate("no explored reachable cell")
        c = cells[rng.integers(len(cells))]
        return SubGoal(int(c[0]), int(c[1]), "random", (int(c[0]), int(c[1])))


def block_features(ctx: DecisionContext) -> np.ndarray:
    """``(P*P, F)`` design matrix for the learned actor.

    Columns: pooled key-objects semantic map channels, frontier presence,
    fraction of explored reachable cells, fraction of cells not yet scanned
    at low and high pitch, normalized distance from the agent to the block
    centre.
    """
    P = ctx.P
    fm = ctx.features.map_features.reshape(P * P, -1)
    frontier = block_max_pool(ctx.frontier, P).reshape(P * P, 1).astype(float)
    L, W = ctx.dims
    sx, sy = pool_stride(ctx.dims, P)
    pad = np.zeros((P * sx, P * sy))
    pad[:L, :W] = ctx.explored & ctx.reachable
    frac = pad.reshape(P, sx, P, sy).mean(axis=(1, 3)).reshape(P * P, 1)
    pad[:L, :W] = ctx.uncovered
    gap = pad.reshape(P, sx, P, sy).mean(axis=(1, 3)).reshape(P * P, 1)
    cx, cy = block_centres(ctx.dims, P)
    x, y = ctx.cell
    dist = np.hypot(cx - x, cy - y).reshape(P * P, 1) / math.hypot(L, W)
    return np.concatenate([fm, frontier, frac, gap, dist], axis=1)


def block_centres(dims, P):
    sx, sy = pool_stride(dims, P)
    bx, by = np.meshgrid(np.arange(P), np.arange(P), indexing="ij")
    cx = np.minimum(bx * sx + sx // 2, dims[0] - 1)
    cy = np.minimum(by * sy + sy // 2, dims[1] - 1)
    return cx, cy


def critic_features(phi: np.ndarray) -> np.ndarray:
    return np.concatenate([phi.mean(axis=0), [1.0]])


@dataclass
class Hyperparams:
    gamma: float = 0.99
    learning_rate: float = 1e-4
    clip: float = 0.2
    d: int = 10
    P: int = 16
    alpha: float = ALPHA
    beta: float = BETA
    ppo_epochs: int = 4
    value_lr_scale: float = 10.0

    def validate(self):
        from ..errors import ConfigError

        if self.d < 1:
            raise ConfigError(f"d: must be >= 1, got {self.d}")
        if not 0 <= self.gamma <= 1:
            raise ConfigError(f"gamma: must be in [0, 1], got {self.gamma}")
        if self.learning_rate <= 0:
            raise ConfigError(f"learning_rate: must be > 0, got {self.learning_rate}")
        if self.P < 1:
            raise ConfigError(f"P: must be >= 1, got {self.P}")


class LearnedPolicy:
    """Linear-softmax actor over pooled blocks with a linear critic."""

    variant = "learned"

    def __init__(self, n_features: int, P: int = 16, hyper: Hyperparams | None = None, sample: bool = True):
        self.hyper = hyper or Hyperparams(P=P)
        self.P = self.hyper.P
        self.tables = {
            "actor_w": np.zeros(n_features),
            "actor_bias": np.zeros(self.P * self.P),
            "critic_w": np.zeros(n_features + 1),
        }
        self.sample = sample

    @property
    def n_features(self) -> int:
        return len(self.tables["actor_w"])

    def logits(self, phi: np.ndarray) -> np.ndarray:
        return phi @ self.tables["actor_w"] + self.tables["actor_bias"]

    def distribution(self, phi: np.ndarray) -> np.ndarray:
        z = self.logits(phi)
        return np.exp(z - logsumexp(z))

    def value(self, phi: np.ndarray) -> float:
        return float(critic_features(phi) @ self.tables["critic_w"])

    def propose(self, ctx: DecisionContext, rng) -> SubGoal:
        phi = block_features(ctx)
        z = self.logits(phi)
        logp = z - logsumexp(z)
        if self.sample:
            a = int(rng.choice(len(z), p=np.exp(logp)))
        else:
            a = int(np.argmax(z))
        cx, cy = block_centres(ctx.dims, self.P)
        target = (int(cx.reshape(-1)[a]), int(cy.reshape(-1)[a]))
        sg = snap_subgoal(ctx, target)
        if sg is None:
            raise NoCandidate("no explored reachable cell to snap to")
        info = {"phi": phi, "action": a, "logp": float(logp[a]), "value": self.value(phi)}
        return SubGoal(sg[0], sg[1], "learned", target, info)


def n_block_features() -> int:
    from ..categories import K_TOTAL

    return K_TOTAL + 4 + BLOCK_EXTRA


def make_policy(variant: str, checkpoint=None, **kw):
    from ..errors import ConfigError

    if variant == "greedy":
        return GreedyPolicy()
    if variant == "random":
        return RandomSubgoalPolicy()
    if variant in ("learned", "flat"):
        if checkpoint is None:
            raise ConfigError(f"policy '{variant}' needs a checkpoint (train one with 'semnav train')")
        from .checkpoint import load_checkpoint

        pol = load_checkpoint(checkpoint) if not hasattr(checkpoint, "tables") else checkpoint
        if pol.variant != variant:
            raise ConfigError(f"checkpoint holds a '{pol.variant}' policy, expected '{variant}'")
        return pol
    if variant == "random-actions":
        from .flat import RandomActionPolicy

        return RandomActionPolicy()
    raise ConfigError(f"policy: unknown variant {variant!r}")
