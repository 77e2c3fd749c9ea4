"""Clipped-surrogate policy-gradient training for the learned policies.

Both learned policies are linear softmaxes over rows of a design matrix
``phi`` (blocks for the sub-goal policy, motion actions for the flat one):
``logits = phi @ actor_w + actor_bias``, with a linear critic on
``[phi.mean(0), 1]``.  Gradients are analytic, so training is plain numpy.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.special import logsumexp

from .._optim import adam_step
from ..errors import ConfigError, DivergenceDetected, InsufficientCategories
from ..scene import Scene, sample_task
from .checkpoint import TrainingState
from .flat import FLAT_FEATURES, FlatPolicy
from .highlevel import Hyperparams, LearnedPolicy, critic_features, n_block_features


@dataclass
class TrainConfig:
    epochs: int = 10
    episodes_per_epoch: int = 8
    M: tuple = (1, 2, 3)
    N: int = 1
    seed: int = 0
    variant: str = "learned"  # learned | flat
    normalize_advantages: bool = True

    def validate(self):
        if self.epochs < 0:
            raise ConfigError(f"epochs: must be >= 0, got {self.epochs}")
        if self.episodes_per_epoch < 1:
            raise ConfigError(f"episodes_per_epoch: must be >= 1, got {self.episodes_per_epoch}")
        if self.variant not in ("learned", "flat"):
            raise ConfigError(f"variant: expected 'learned' or 'flat', got {self.variant!r}")
        if not 1 <= self.N <= 5:
            raise ConfigError(f"N: must be in 1..5, got {self.N}")


def initial_policy(variant: str, hyper: Hyperparams | None = None):
    hyper = hyper or Hyperparams()
    hyper.validate()
    if variant == "learned":
        return LearnedPolicy(n_block_features(), hyper=hyper)
    if variant == "flat":
        return FlatPolicy(FLAT_FEATURES, hyper=hyper)
    raise ConfigError(f"variant: expected 'learned' or 'flat', got {variant!r}")


def discounted_returns(rewards, gamma: float) -> np.ndarray:
    out = np.zeros(len(rewards))
    g = 0.0
    for i in range(len(rewards) - 1, -1, -1):
        g = rewards[i] + gamma * g
        out[i] = g
    return out


def make_batch(trajectories, gamma: float) -> list[dict]:
    """Flatten per-agent decision lists, attaching returns and advantages."""
    batch = []
    for traj in trajectories:
        traj = [d for d in traj if "phi" in d]
        G = discounted_returns([d["reward"] for d in traj], gamma)
        for d, g in zip(traj, G):
            batch.append({**d, "return": float(g), "advantage": float(g - d["value"])})
    return batch


def ppo_gradients(policy, batch: list[dict], clip: float):
    """Loss values and gradients of the clipped surrogate and the critic's squared error.

    Returns ``(actor_loss, critic_loss, grads)`` where ``grads`` maps table
    names to arrays; losses are means over the batch.
    """
    t = policy.tables
    gw = np.zeros_like(t["actor_w"])
    gb = np.zeros_like(t["actor_bias"])
    gc = np.zeros_like(t["critic_w"])
    actor_loss = critic_loss = 0.0
    n = len(batch)
    for d in batch:
        phi, a, A = d["phi"], d["action"], d["advantage"]
        z = phi @ t["actor_w"] + t["actor_bias"]
        logp = z - logsumexp(z)
        p = np.exp(logp)
        ratio = float(np.exp(logp[a] - d["logp"]))
        clipped = min(max(ratio, 1 - clip), 1 + clip)
        actor_loss -= min(ratio * A, clipped * A) / n
        active = (A >= 0 and ratio < 1 + clip) or (A < 0 and ratio > 1 - clip)
        if active:
            coef = -ratio * A / n
            gw += coef * (phi[a] - p @ phi)
            gb += coef * (np.eye(len(z))[a] - p)
        c = critic_features(phi)
        err = float(c @ t["critic_w"]) - d["return"]
        critic_loss += err * err / n
        gc += 2 * err * c / n
    return actor_loss, critic_loss, {"actor_w": gw, "actor_bias": gb, "critic_w": gc}


def normalize_advantages(batch: list[dict]) -> list[dict]:
    adv = np.array([d["advantage"] for d in batch])
    if len(adv) < 2:
        return batch
    adv = (adv - adv.mean()) / (adv.std() + 1e-8)
    return [{**d, "advantage": float(a)} for d, a in zip(batch, adv)]


def ppo_update(state: TrainingState, batch: list[dict], normalize: bool = False) -> tuple[float, float]:
    """``ppo_epochs`` full-batch Adam steps; returns the last (actor, critic) losses.

    The critic always regresses on the raw returns; ``normalize`` only
    standardizes the advantages used by the actor.
    """
    pol = state.policy
    h = pol.hyper
    losses = (0.0, 0.0)
    if not batch:
        return losses
    if normalize:
        batch = normalize_advantages(batch)
    for _ in range(h.ppo_epochs):
        a_loss, c_loss, grads = ppo_gradients(pol, batch, h.clip)
        if not (np.isfinite(a_loss) and np.isfinite(c_loss)) or not all(np.all(np.isfinite(g)) for g in grads.values()):
            raise DivergenceDetected(f"non-finite loss (actor={a_loss}, critic={c_loss})", state.trace)
        state.adam_t += 1
        for k, g in grads.items():
            m = state.moments.setdefault(f"m/{k}", np.zeros_like(g))
            v = state.moments.setdefault(f"v/{k}", np.zeros_like(g))
            lr = h.learning_rate * (h.value_lr_scale if k == "critic_w" else 1.0)
            adam_step(pol.tables[k], g, m, v, state.adam_t, lr)
        losses = (a_loss, c_loss)
    return losses


def collect_episode(scene: Scene, policy, episode_config, rng_seed, cfg: TrainConfig, graph=None):
    """Run one sampled training task; returns ``(trajectories, EpisodeResult)`` or ``None`` if no task fits."""
    from ..evaluation.episode import run_episode

    rng = np.random.default_rng(rng_seed)
    M = int(rng.choice(cfg.M))
    try:
        task = sample_task(scene, M, cfg.N, int(rng.integers(2**31)))
    except InsufficientCategories:
        return None
    trajs: list = []
    result = run_episode(scene, task, policy, episode_config, seed=task.seed, graph=graph, record_decisions=trajs)
    return trajs, result


def train_high_level(scenes: list[Scene], cfg: TrainConfig, hyper: Hyperparams | None = None, episode_config=None,
                     graph=None, resume: TrainingState | None = None, progress=None) -> TrainingState:
    """Train (or continue training) a learned policy.

    Epoch ``e`` draws its episodes from RNG streams seeded by
    ``(cfg.seed, e, k)``, so resuming from a checkpoint saved after epoch
    ``e`` continues exactly as an uninterrupted run would.  The trace gets
    one entry per epoch: the mean undiscounted sub-goal reward sum per
    agent trajectory.
    """
    from ..evaluation.episode import EpisodeConfig

    cfg.validate()
    if not scenes:
        raise ConfigError("training needs at least one scene")
    if resume is not None:
        state = resume
        if state.policy.variant != cfg.variant:
            raise ConfigError(f"checkpoint holds a '{state.policy.variant}' policy, expected '{cfg.variant}'")
    else:
        state = TrainingState(initial_policy(cfg.variant, hyper), seed=cfg.seed)
    pol = state.policy
    h = pol.hyper
    ec = episode_config or EpisodeConfig()
    ec = replace(ec, P=h.P, d=h.d, alpha=h.alpha, beta=h.beta)
    pol.sample = True
    start = len(state.trace)
    for e in range(start, start + cfg.epochs):
        trajs, returns = [], []
        for k in range(cfg.episodes_per_epoch):
            scene = scenes[(e * cfg.episodes_per_epoch + k) % len(scenes)]
            out = collect_episode(scene, pol, ec, [cfg.seed, e, k], cfg, graph)
            if out is None:
                continue
            for t in out[0]:
                if t:
                    trajs.append(t)
                    returns.append(sum(d["reward"] for d in t))
        ppo_update(state, make_batch(trajs, h.gamma), cfg.normalize_advantages)
        state.trace.append(float(np.mean(returns)) if returns else 0.0)
        if progress:
            progress(e + 1, state.trace[-1])
    return state


def evaluate_returns(scenes, policy, cfg: TrainConfig, episode_config=None, graph=None, episodes: int = 20,
                     seed: int = 12345):
    """Mean sub-goal reward sum and success rate over ``episodes`` sampled tasks."""
    from ..evaluation.episode import EpisodeConfig

    ec = episode_config or EpisodeConfig()
    rets, succ = [], []
    for k in range(episodes):
        scene = scenes[k % len(scenes)]
        out = collect_episode(scene, policy, ec, [seed, k], cfg, graph)
        if out is None:
            continue
        trajs, res = out
        rets.append(float(np.mean([sum(d["reward"] for d in t) for t in trajs])) if trajs else 0.0)
        succ.append(res.success)
    return float(np.mean(rets)) if rets else 0.0, float(np.mean(succ)) if succ else 0.0
