"""Barrier-synchronized multi-agent episode loop."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from ..categories import K_TOTAL, category_name
from ..comms import BandwidthLedger, Message, MAP_VECTOR, exchange, make_codec
from ..errors import ConfigError
from ..perception import NoiseParams, Pose, SensorParams, corrupt_segmentation, observe
from ..policy.actions import ACTION_NAMES, Action, apply_action
from ..policy.agent import AgentConfig, AgentState, SharedKnowledge, found_category, step_agent
from ..policy.flat import RandomActionPolicy
from ..scene import Scene, TaskSpec


@dataclass
class EpisodeConfig:
    max_steps: int = 500
    sensor: SensorParams = field(default_factory=SensorParams)
    noise: NoiseParams = field(default_factory=NoiseParams)
    codec: str = "quantized"
    budget: int = 256
    global_cap: int | None = None
    comm: bool = True
    central: bool = False
    use_priors: bool = True
    P: int = 16
    d: int = 10
    alpha: float = 0.7
    beta: float = 0.3
    sweep: bool = True

    def validate(self, scene: Scene | None = None):
        if self.max_steps < 1:
            raise ConfigError(f"max_steps: must be >= 1, got {self.max_steps}")
        if self.budget < 1:
            raise ConfigError(f"budget: must be >= 1, got {self.budget}")
        if self.d < 1:
            raise ConfigError(f"d: must be >= 1, got {self.d}")
        if self.codec not in ("quantized", "learned"):
            raise ConfigError(f"codec: expected 'quantized' or 'learned', got {self.codec!r}")

    def agent_config(self) -> AgentConfig:
        return AgentConfig(P=self.P, d=self.d, alpha=self.alpha, beta=self.beta, use_priors=self.use_priors,
                           sweep=self.sweep, sensor=self.sensor)


@dataclass
class EpisodeResult:
    task_id: str
    scene_id: str
    seed: int
    N: int
    M: int
    success: bool
    per_agent_steps: list
    D: int
    L: float | None
    found_events: list  # (category, agent, step)
    bandwidth: dict
    variant: str = ""
    trace: list | None = None
    subgoals: list | None = None

    def to_dict(self, with_trace: bool = True) -> dict:
        d = asdict(self)
        if not with_trace:
            d.pop("trace")
            d.pop("subgoals")
        return d

    def to_json(self, with_trace: bool = True) -> str:
        return json.dumps(self.to_dict(with_trace), sort_keys=True, default=_jsonable)


def _jsonable(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (set, frozenset)):
        return sorted(o)
    raise TypeError(f"not serializable: {type(o)}")


def valid_found(obs, env_found, targets, radius_m=1.0):
    remaining = [t for t in targets if t not in env_found]
    return found_category(obs, remaining, radius_m)


def run_episode(scene: Scene, task: TaskSpec, policy, config: EpisodeConfig | None = None, seed: int = 0,
                graph=None, codec=None, trace: bool = False, L: float | None = None, variant: str = "",
                record_decisions: list | None = None, record_maps: list | None = None) -> EpisodeResult:
    """Run one task to completion.

    Each round: every active agent observes and chooses an action against its
    current knowledge; all actions are then applied to the world; Found
    claims are checked against the clean observation; finally the round's
    messages are exchanged and become inboxes for the next round.
    """
    config = config or EpisodeConfig()
    config.validate()
    if task.scene_id != scene.id:
        raise ConfigError(f"task is for scene {task.scene_id!r}, got scene {scene.id!r}")
    if codec is None and config.comm and not config.central:
        codec = make_codec(config.codec, config.budget, scene.dims, K_TOTAL)
    acfg = config.agent_config()
    shared = SharedKnowledge(scene.dims) if config.central else None
    agents = [
        AgentState(i, Pose.from_cell(c, h, 0), scene.dims, task.targets, shared=shared)
        for i, (c, h) in enumerate(task.agent_spawns)
    ]
    rngs = [np.random.default_rng([seed, i]) for i in range(task.N)]
    noise_rngs = [np.random.default_rng([seed, i, 1]) for i in range(task.N)]
    inboxes = {i: [] for i in range(task.N)}
    ledger = BandwidthLedger()
    env_found: set[int] = set()
    events = []
    frames = [] if trace else None
    free = scene.free
    if frames is not None:
        frames.append(_frame(0, agents, [None] * task.N, events))
    for rnd in range(config.max_steps):
        active = [a for a in agents if not a.done]
        if not active:
            break
        clean, actions = {}, {}
        for a in active:
            obs = observe(scene, a.pose, config.sensor)
            clean[a.agent_id] = obs
            seen = corrupt_segmentation(obs, config.noise, noise_rngs[a.agent_id])
            claims = ()
            if shared is not None:
                claims = tuple(v for k, v in sorted(shared.claims.items()) if k != a.agent_id)
            actions[a.agent_id] = step_agent(a, seen, inboxes[a.agent_id], rngs[a.agent_id], policy, acfg, graph,
                                             codec, claims)
        for a in active:
            act = actions[a.agent_id]
            if act == Action.FOUND:
                if isinstance(policy, RandomActionPolicy):
                    claimed = valid_found(clean[a.agent_id], env_found, task.targets, acfg.found_radius)
                else:
                    claimed = a.notices[-1] if a.notices else None
                if (claimed is not None and claimed not in env_found
                        and _visible(clean[a.agent_id], claimed, acfg.found_radius)):
                    env_found.add(claimed)
                    events.append((int(claimed), a.agent_id, a.steps + 1))
            cell, h, p = apply_action(free, a.pose.cell, a.pose.heading, a.pose.pitch, act)
            a.apply_result(act, Pose.from_cell(cell, h, p))
        if frames is not None:
            frames.append(_frame(rnd + 1, agents, [actions.get(a.agent_id) for a in agents], events))
        inboxes = {i: [] for i in range(task.N)}
        if config.central:
            continue
        if not config.comm:
            for a in agents:
                a.notices.clear()
            continue
        outboxes = {}
        for a in active:
            msgs = [Message.found(a.agent_id, c, rnd) for c in a.notices]
            a.notices.clear()
            if not a.done:
                msgs.append(Message(a.agent_id, MAP_VECTOR, codec.encode(a.own)))
            outboxes[a.agent_id] = msgs
        poses = [a.pose if not a.done else None for a in agents]
        inboxes = exchange(outboxes, poses, ledger, config.sensor, config.global_cap, config.budget)
    steps = [a.steps for a in agents]
    success = all(a.done for a in agents) and set(task.targets) <= env_found
    if record_decisions is not None:
        record_decisions.extend(a.decisions for a in agents)
    if record_maps is not None:
        record_maps.extend(a.own.copy() for a in agents)
    return EpisodeResult(
        task_id=task.task_id, scene_id=scene.id, seed=seed, N=task.N, M=task.M, success=bool(success),
        per_agent_steps=steps, D=max(steps), L=L, found_events=events, bandwidth=ledger.snapshot(),
        variant=variant, trace=frames, subgoals=[a.subgoal_log for a in agents] if trace else None,
    )


def _visible(obs, category, radius_m):
    return found_category(obs, [category], radius_m) == category


def _frame(rnd, agents, actions, events):
    return {
        "round": rnd,
        "agents": [
            {
                "cell": list(a.pose.cell),
                "heading": a.pose.heading,
                "pitch": a.pose.pitch,
                "action": None if act is None else ACTION_NAMES[int(act)],
                "subgoal": None if a.subgoal is None else list(a.subgoal.cell),
                "done": a.done,
            }
            for a, act in zip(agents, actions)
        ],
        "found": [[category_name(c), ag, st] for c, ag, st in events],
    }
