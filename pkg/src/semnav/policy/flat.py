"""Policies that pick primitive actions directly (no sub-goals)."""
from __future__ import annotations

import numpy as np
from scipy.special import logsumexp

from .actions import MOTION_ACTIONS, N_ACTIONS, Action, move_run
from .context import DecisionContext, _field, related_field, target_field
from .highlevel import Hyperparams, critic_features

FLAT_FEATURES = 8


def _delta(field, a, b):
    if field is None:
        return 0.0
    fa, fb = field[a], field[b]
    if not (np.isfinite(fa) and np.isfinite(fb)):
        return 0.0
    return (fa - fb) / 5.0


def action_features(ctx: DecisionContext, sweep_due: bool) -> np.ndarray:
    """``(5, 8)`` lookahead features, one row per motion action.

    Columns: progress toward targets, related objects and the frontier after
    the action (rotations look one move ahead in the new heading), blocked
    move flag, move/rotate/look indicators, look-while-sweep-due.
    """
    cell, h = ctx.cell, ctx.pose.heading
    dto = target_field(ctx)
    dko = related_field(ctx)
    if "_dfr" not in ctx.__dict__:
        ctx.__dict__["_dfr"] = _field(ctx.passable, ctx.frontier)
    dfr = ctx.__dict__["_dfr"]
    rows = []
    for a in MOTION_ACTIONS:
        if a == Action.MOVE_AHEAD:
            land = move_run(ctx.passable, cell, h)
        elif a == Action.ROTATE_RIGHT:
            land = move_run(ctx.passable, cell, (h + 90) % 360)
        elif a == Action.ROTATE_LEFT:
            land = move_run(ctx.passable, cell, (h - 90) % 360)
        else:
            land = cell
        look = a in (Action.LOOK_UP, Action.LOOK_DOWN)
        rows.append([
            _delta(dto, cell, land),
            _delta(dko, cell, land),
            _delta(dfr, cell, land),
            float(a == Action.MOVE_AHEAD and land == cell),
            float(a == Action.MOVE_AHEAD),
            float(a in (Action.ROTATE_RIGHT, Action.ROTATE_LEFT)),
            float(look),
            float(look and sweep_due),
        ])
    return np.asarray(rows)


class FlatPolicy:
    """Linear softmax over the five motion actions."""

    variant = "flat"

    def __init__(self, n_features: int = FLAT_FEATURES, hyper: Hyperparams | None = None, sample: bool = True):
        self.hyper = hyper or Hyperparams()
        self.P = self.hyper.P
        self.tables = {
            "actor_w": np.zeros(n_features),
            "actor_bias": np.zeros(len(MOTION_ACTIONS)),
            "critic_w": np.zeros(n_features + 1),
        }
        self.sample = sample

    @property
    def n_features(self) -> int:
        return len(self.tables["actor_w"])

    def logits(self, phi):
        return phi @ self.tables["actor_w"] + self.tables["actor_bias"]

    def value(self, phi) -> float:
        return float(critic_features(phi) @ self.tables["critic_w"])

    def act(self, ctx: DecisionContext, rng, sweep_due: bool = False):
        phi = action_features(ctx, sweep_due)
        z = self.logits(phi)
        logp = z - logsumexp(z)
        a = int(rng.choice(len(z), p=np.exp(logp))) if self.sample else int(np.argmax(z))
        return MOTION_ACTIONS[a], {"phi": phi, "action": a, "logp": float(logp[a]), "value": self.value(phi)}


class RandomActionPolicy:
    """Uniformly random primitive actions, Found and Done included."""

    variant = "random-actions"

    def act(self, rng) -> Action:
        return Action(int(rng.integers(N_ACTIONS)))
