"""Per-agent controller: map upkeep, Found/Done arbitration, sub-goals and motion."""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from ..categories import CELL_SIZE, K_TOTAL
from ..comms import FOUND_NOTICE, MAP_VECTOR
from ..perception import PITCHES, Observation, Pose, SensorParams
from ..priors import build_key_objects_map
from ..raycast import OBJECT
from ..semantic_map import SemanticMap, merge_maps, project_observation, ray_cells
from .actions import STEP, Action, move_run
from .context import DecisionContext, related_field, target_field
from .flat import FlatPolicy, RandomActionPolicy
from .highlevel import NoCandidate, SubGoal, subgoal_reward
from .lowlevel import LowLevelPlanner

FOUND_RADIUS_M = 1.0
_EPS = 1e-9


@dataclass
class AgentConfig:
    P: int = 16
    d: int = 10
    alpha: float = 0.7
    beta: float = 0.3
    found_radius: float = FOUND_RADIUS_M
    use_priors: bool = True
    sweep: bool = True
    sensor: SensorParams = SensorParams()


class SharedKnowledge:
    """Map and found set shared by all agents in the central variant."""

    def __init__(self, dims, n_categories=K_TOTAL):
        self.sem = SemanticMap(dims, n_categories)
        self.found: set[int] = set()
        self.claims: dict[int, tuple[int, int]] = {}


class AgentState:
    def __init__(self, agent_id: int, pose: Pose, dims, targets, n_categories: int = K_TOTAL,
                 shared: SharedKnowledge | None = None):
        self.agent_id = agent_id
        self.pose = pose
        self.targets = tuple(targets)
        self.own = SemanticMap(dims, n_categories)
        self.shared = shared
        self.sem = shared.sem if shared else SemanticMap(dims, n_categories)
        self.found = shared.found if shared else set()
        self.visited = np.zeros(dims, dtype=bool)
        self.band_seen = np.zeros((3,) + tuple(dims), dtype=bool)
        self.visited[pose.cell] = True
        self.steps = 0
        self.done = False
        self.last_action: Action | None = None
        self.subgoal: SubGoal | None = None
        self.since_replan = 0
        self.queue: deque = deque()
        self.last_sweep = -(10**9)
        self.tabu = np.zeros(dims, dtype=bool)
        self.planner = LowLevelPlanner()
        self.notices: list[int] = []
        self.decisions: list[dict] = []
        self.subgoal_log: list[tuple[int, tuple[int, int], str]] = []
        self._expected_move = None

    @property
    def remaining(self) -> list[int]:
        return [t for t in self.targets if t not in self.found]

    def passable(self) -> np.ndarray:
        """Planning grid: not occupied on the merged map, unless our own view or path says free."""
        own_free = (self.own.explored > 0) & (self.own.occupied == 0)
        return (self.sem.occupied == 0) | own_free | self.visited

    def context(self, graph, cfg: AgentConfig, claims=()) -> DecisionContext:
        key = build_key_objects_map(self.sem, self.remaining, graph if cfg.use_priors else None)
        return DecisionContext(
            sem=self.sem, key=key, pose=self.pose, passable=self.passable(), last_action=self.last_action,
            P=cfg.P, claims=tuple(claims), tabu=self.tabu, band_seen=self.band_seen,
        )

    # environment feedback

    def apply_result(self, action: Action, new_pose: Pose):
        """Record the executed action; a MoveAhead cut short marks the blocking cell occupied."""
        if action == Action.MOVE_AHEAD and self._expected_move is not None:
            expected = self._expected_move
            if new_pose.cell != expected:
                dx, dy = STEP[self.pose.heading]
                bx, by = new_pose.cell[0] + dx, new_pose.cell[1] + dy
                L, W = self.own.dims
                if 0 <= bx < L and 0 <= by < W:
                    for m in {id(self.own): self.own, id(self.sem): self.sem}.values():
                        m.counts[bx, by, m.occupied_channel] += 1
                        m.counts[bx, by, m.explored_channel] += 1
        self._expected_move = None
        self.pose = new_pose
        self.visited[new_pose.cell] = True
        self.steps += 1
        self.last_action = action
        if action == Action.DONE:
            self.done = True


def found_category(obs: Observation, candidates, radius_m: float = FOUND_RADIUS_M):
    """Lowest candidate category hit by a ray closer than ``radius_m``, else None."""
    if not candidates:
        return None
    close = (obs.kind == OBJECT) & (obs.depth / CELL_SIZE < radius_m / CELL_SIZE - _EPS)
    hits = np.isin(obs.category, list(candidates)) & close
    if not hits.any():
        return None
    return int(obs.category[hits].min())


def merge_inbox(state: AgentState, inbox, codec):
    for msg in inbox:
        if msg.kind == FOUND_NOTICE:
            state.found.add(int(msg.payload[0]))
        elif msg.kind == MAP_VECTOR:
            decoded = codec.decode(msg.payload)
            state.sem.counts = merge_maps(state.sem, decoded).counts


def _sweep_actions(pitch: int) -> list[Action]:
    seq = []
    p = pitch
    while p > PITCHES[0]:
        seq.append(Action.LOOK_DOWN)
        p -= 30
    while p < PITCHES[-1]:
        seq.append(Action.LOOK_UP)
        p += 30
    while p > 0:
        seq.append(Action.LOOK_DOWN)
        p -= 30
    return seq


def _face(cell, heading, target) -> list[Action]:
    vx, vy = target[0] - cell[0], target[1] - cell[1]
    best = max((0, 90, 180, 270), key=lambda h: (vx * STEP[h][0] + vy * STEP[h][1], h == heading))
    diff = (best - heading) % 360
    return {0: [], 90: [Action.ROTATE_RIGHT], 180: [Action.ROTATE_RIGHT, Action.ROTATE_RIGHT], 270: [Action.ROTATE_LEFT]}[diff]


def _on_arrival(state: AgentState, ctx: DecisionContext, cfg: AgentConfig):
    """Queue facing and pitch-sweep actions at a reached sub-goal and mark it tried."""
    sg = state.subgoal
    cell = state.pose.cell
    xs, ys = np.nonzero(ctx.key.layer_targets)
    face = None
    if len(xs):
        d2 = (xs - cell[0]) ** 2 + (ys - cell[1]) ** 2
        i = int(np.lexsort((ys, xs, d2))[0])
        if d2[i] < (cfg.found_radius / CELL_SIZE) ** 2:
            face = (int(xs[i]), int(ys[i]))
    if face is None and sg is not None and sg.kind in ("related", "look") and sg.source is not None:
        face = sg.source
    actions: list[Action] = []
    if face is not None:
        actions += _face(cell, state.pose.heading, face)
    if cfg.sweep and (face is not None or state.steps - state.last_sweep >= cfg.d):
        actions += _sweep_actions(state.pose.pitch)
        state.last_sweep = state.steps + len(actions)
    state.queue.extend(actions)
    if sg is not None and sg.source is not None:
        layer = {"target": ctx.key.layer_targets, "related": ctx.key.layer_related}.get(sg.kind)
        if layer is not None and layer[sg.source]:
            labels, _ = ndimage.label(layer, structure=np.ones((3, 3), bool))
            state.tabu |= labels == labels[sg.source]
        else:
            x, y = sg.source
            r = 3 if sg.kind == "look" else 2
            state.tabu[max(x - r, 0): x + r + 1, max(y - r, 0): y + r + 1] = True
    state.subgoal = None


def _invalid(state: AgentState, ctx: DecisionContext) -> bool:
    sg = state.subgoal
    if sg is None:
        return True
    if not ctx.passable[sg.cell]:
        return True
    if sg.kind == "target" and not ctx.key.layer_targets[sg.source]:
        return True
    if sg.kind == "related" and not ctx.key.layer_related[sg.source]:
        return True
    return False


def _choose_subgoal(state: AgentState, ctx: DecisionContext, policy, rng, cfg: AgentConfig):
    try:
        sg = policy.propose(ctx, rng)
    except NoCandidate:
        cand = np.argwhere(ctx.explored & ctx.reachable)
        if len(cand) == 0:
            cand = np.array([state.pose.cell])
        c = cand[rng.integers(len(cand))]
        sg = SubGoal(int(c[0]), int(c[1]), "fallback", (int(c[0]), int(c[1])))
    prev = state.subgoal.cell if state.subgoal is not None else state.pose.cell
    reward = subgoal_reward(sg.cell, prev, target_field(ctx), related_field(ctx), cfg.alpha, cfg.beta)
    state.decisions.append({**(sg.info or {}), "reward": float(reward)})
    state.subgoal = sg
    state.since_replan = 0
    state.subgoal_log.append((state.steps, sg.cell, sg.kind))
    if state.shared is not None:
        state.shared.claims[state.agent_id] = sg.source or sg.cell


def _flat_step(state, ctx, policy: FlatPolicy, rng, cfg):
    if state.decisions:
        prev = state.decisions[-1]
        prev["reward"] = float(subgoal_reward(state.pose.cell, prev["cell"], target_field(ctx), related_field(ctx),
                                              cfg.alpha, cfg.beta))
    sweep_due = cfg.sweep and state.steps - state.last_sweep >= cfg.d
    action, info = policy.act(ctx, rng, sweep_due)
    if action in (Action.LOOK_UP, Action.LOOK_DOWN):
        state.last_sweep = state.steps
    state.decisions.append({**info, "reward": 0.0, "cell": state.pose.cell})
    return action


def step_agent(state: AgentState, obs: Observation, inbox, rng, policy, cfg: AgentConfig, graph=None, codec=None,
               claims=()) -> Action:
    """Choose this step's primitive action (see module docstring for the order of checks)."""
    if state.done:
        raise RuntimeError(f"agent {state.agent_id} already performed Done")
    merge_inbox(state, inbox, codec)
    cells = ray_cells(state.own.dims, obs)
    project_observation(state.own, obs, cells)
    project_observation(state.sem, obs, cells)
    seen = state.band_seen[obs.pose.pitch_index]
    seen[cells[0], cells[1]] = True
    seen[cells[2], cells[3]] = True
    if isinstance(policy, RandomActionPolicy):
        return policy.act(rng)
    remaining = state.remaining
    if not remaining:
        return Action.DONE
    c = found_category(obs, remaining, cfg.found_radius)
    if c is not None:
        state.found.add(c)
        state.notices.append(c)
        return Action.FOUND
    if state.queue:
        return state.queue.popleft()
    ctx = state.context(graph, cfg, claims)
    if isinstance(policy, FlatPolicy):
        action = _flat_step(state, ctx, policy, rng, cfg)
    else:
        action = None
        for _ in range(3):
            if state.subgoal is None or state.since_replan >= cfg.d or _invalid(state, ctx):
                _choose_subgoal(state, ctx, policy, rng, cfg)
            plan = state.planner.plan(ctx.passable, state.pose.cell, state.pose.heading, state.subgoal.cell)
            if plan.action is None:
                _on_arrival(state, ctx, cfg)
                if state.queue:
                    action = state.queue.popleft()
                    break
                continue
            action = plan.action
            break
        if action is None:
            action = Action.ROTATE_RIGHT
        state.since_replan += 1
    if action == Action.MOVE_AHEAD:
        state._expected_move = move_run(ctx.passable, state.pose.cell, state.pose.heading)
    return action
