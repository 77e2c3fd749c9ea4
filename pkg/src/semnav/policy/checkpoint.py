"""Versioned little-endian binary checkpoints for learned policies.

Layout (all integers unsigned, little-endian)::

    magic      4 bytes  b"SNPC"
    version    u16      1
    variant    u8       0 = learned (sub-goal), 1 = flat
    reserved   u8       0
    gamma, learning_rate, clip, alpha, beta, value_lr_scale   6 x f64
    d, P, ppo_epochs, seed, adam_t                            5 x u32
    n_trace    u32, then n_trace x f64   (per-epoch mean return)
    n_tables   u32, then per table:
        name_len u16, name (ascii), length u32, length x f64

Tables are the policy coefficients (``actor_w``, ``actor_bias``,
``critic_w``) and, when saved from a trainer, the Adam moments
(``m/<name>``, ``v/<name>``) so that training can resume exactly.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import ParseError
from .highlevel import Hyperparams, LearnedPolicy

MAGIC = b"SNPC"
VERSION = 1
VARIANTS = ("learned", "flat")
_HEAD = struct.Struct("<4sHBB6d5I")


@dataclass
class TrainingState:
    """A policy plus what is needed to resume its training."""

    policy: object
    trace: list = field(default_factory=list)
    moments: dict = field(default_factory=dict)
    adam_t: int = 0
    seed: int = 0


def _new_policy(variant, n_features, hyper):
    if variant == "learned":
        return LearnedPolicy(n_features, hyper=hyper)
    from .flat import FlatPolicy

    return FlatPolicy(n_features, hyper=hyper)


def checkpoint_bytes(state: TrainingState) -> bytes:
    pol = state.policy
    h = pol.hyper
    out = [_HEAD.pack(MAGIC, VERSION, VARIANTS.index(pol.variant), 0, h.gamma, h.learning_rate, h.clip, h.alpha,
                      h.beta, h.value_lr_scale, h.d, h.P, h.ppo_epochs, state.seed, state.adam_t)]
    out.append(struct.pack("<I", len(state.trace)))
    out.append(np.asarray(state.trace, "<f8").tobytes())
    tables = dict(pol.tables)
    for k in sorted(state.moments):
        tables[k] = state.moments[k]
    out.append(struct.pack("<I", len(tables)))
    for name, arr in tables.items():
        raw = name.encode("ascii")
        arr = np.asarray(arr, "<f8").reshape(-1)
        out.append(struct.pack("<H", len(raw)) + raw + struct.pack("<I", len(arr)))
        out.append(arr.tobytes())
    return b"".join(out)


def checkpoint_from_bytes(data: bytes) -> TrainingState:
    if len(data) < _HEAD.size:
        raise ParseError("checkpoint: file shorter than header")
    magic, version, vcode, _, gamma, lr, clip, alpha, beta, vscale, d, P, ppo_epochs, seed, adam_t = \
        _HEAD.unpack_from(data, 0)
    if magic != MAGIC:
        raise ParseError(f"checkpoint: bad magic {magic!r}")
    if version != VERSION:
        raise ParseError(f"checkpoint: unsupported version {version}")
    if vcode >= len(VARIANTS):
        raise ParseError(f"checkpoint: unknown variant code {vcode}")
    hyper = Hyperparams(gamma=gamma, learning_rate=lr, clip=clip, d=d, P=P, alpha=alpha, beta=beta,
                        ppo_epochs=ppo_epochs, value_lr_scale=vscale)
    off = _HEAD.size
    try:
        (n_trace,) = struct.unpack_from("<I", data, off)
        off += 4
        trace = np.frombuffer(data, "<f8", n_trace, off).tolist()
        off += 8 * n_trace
        (n_tables,) = struct.unpack_from("<I", data, off)
        off += 4
        tables = {}
        for _ in range(n_tables):
            (nl,) = struct.unpack_from("<H", data, off)
            off += 2
            name = data[off:off + nl].decode("ascii")
            off += nl
            (n,) = struct.unpack_from("<I", data, off)
            off += 4
            tables[name] = np.frombuffer(data, "<f8", n, off).astype(np.float64)
            off += 8 * n
    except (struct.error, ValueError, UnicodeDecodeError) as exc:
        raise ParseError(f"checkpoint: truncated or corrupt: {exc}") from None
    if off != len(data):
        raise ParseError(f"checkpoint: {len(data) - off} trailing bytes")
    for k in ("actor_w", "actor_bias", "critic_w"):
        if k not in tables:
            raise ParseError(f"checkpoint: missing table {k!r}")
    pol = _new_policy(VARIANTS[vcode], len(tables["actor_w"]), hyper)
    for k in pol.tables:
        if tables[k].shape != pol.tables[k].shape:
            raise ParseError(f"checkpoint: table {k!r} has length {len(tables[k])}, expected {pol.tables[k].size}")
        pol.tables[k] = tables.pop(k)
    return TrainingState(pol, trace, tables, adam_t, seed)


def save_checkpoint(state, path) -> Path:
    if not isinstance(state, TrainingState):
        state = TrainingState(state)
    path = Path(path)
    path.write_bytes(checkpoint_bytes(state))
    return path


def load_training_state(path) -> TrainingState:
    return checkpoint_from_bytes(Path(path).read_bytes())


def load_checkpoint(path):
    """Load just the policy (for evaluation)."""
    return load_training_state(path).policy
