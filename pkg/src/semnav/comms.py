"""Fixed-budget map messages, recipient selection and the per-round bus.

Two codecs share one contract: a semantic map becomes exactly ``V`` values
and decodes to a 0/1 presence map of the same shape.

* :class:`QuantizedCodec` tiles the map into ``b x b`` blocks (``b`` is the
  smallest size giving at most ``V`` blocks) and packs each block into one
  integer: dominant category plus bounding boxes of that category, of the
  occupied cells and of the explored cells inside the block.
* :class:`LearnedCodec` is an affine encoder/decoder pair trained on the
  pixel-wise squared reconstruction error of presence maps.
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from ._optim import adam_step
from .categories import K_TOTAL
from .errors import BadLength, ConfigError, DimsMismatch, DivergenceDetected, TooFewSamples
from .perception import Pose, SensorParams
from .semantic_map import SemanticMap

MAP_VECTOR = "map_vector"
FOUND_NOTICE = "found_notice"
DILATION_M = 1.0


@dataclass(frozen=True, eq=False)
class Message:
    sender: int
    kind: str
    payload: np.ndarray

    def __post_init__(self):
        if self.kind not in (MAP_VECTOR, FOUND_NOTICE):
            raise ValueError(f"unknown message kind {self.kind!r}")
        if self.kind == FOUND_NOTICE and len(self.payload) != 2:
            raise BadLength(f"found_notice payload must have 2 values, got {len(self.payload)}")

    @property
    def size(self) -> int:
        return len(self.payload)

    @classmethod
    def found(cls, sender: int, category: int, round_index: int) -> "Message":
        return cls(sender, FOUND_NOTICE, np.array([category, round_index], dtype=np.int64))


def _as_presence(X, n_channels=None) -> np.ndarray:
    """Stack maps (or count arrays) into an ``(n, L, W, C)`` boolean array."""
    if isinstance(X, SemanticMap):
        X = [X]
    if isinstance(X, np.ndarray):
        arr = X if X.ndim == 4 else X[None]
        return arr > 0
    return np.stack([m.counts > 0 for m in X])


def _to_maps(presence: np.ndarray, n_categories: int) -> list[SemanticMap]:
    out = []
    for p in presence:
        counts = p.astype(np.int32)
        # keep the map invariants on approximate reconstructions
        counts[..., n_categories + 1] |= counts[..., : n_categories + 1].max(axis=-1)
        out.append(SemanticMap(p.shape[:2], n_categories, counts))
    return out


def block_size_for(dims, budget: int) -> int:
    L, W = dims
    b = 1
    while math.ceil(L / b) * math.ceil(W / b) > budget:
        b += 1
    return b


class QuantizedCodec(BaseEstimator, TransformerMixin):
    """Block codec with one packed integer per ``b x b`` block.

    Bit layout of a block word (least significant first): 4-bit
    ``x0, x1, y0, y1`` box for the dominant category, 4-bit box for occupied,
    4-bit box for explored, then occupied flag, explored flag and a 6-bit
    category code (0 = none, ``k + 1`` otherwise).  Boxes are block-local.
    The explored box bounds every nonzero channel of the block, so decoded
    maps satisfy the map invariants and re-encode to the same words.
    """

    _COORD_BITS = 4

    def __init__(self, budget: int = 256, dims=(80, 80), n_categories: int = K_TOTAL):
        self.budget = budget
        self.dims = dims
        self.n_categories = n_categories

    def fit(self, X=None, y=None):
        if self.budget < 1:
            raise ConfigError(f"budget: must be >= 1, got {self.budget}")
        b = block_size_for(self.dims, self.budget)
        if b > 1 << self._COORD_BITS:
            raise ConfigError(f"budget {self.budget} too small for dims {self.dims}: block size {b} > 16")
        if self.n_categories + 1 >= 64:
            raise ConfigError("n_categories must be < 63 for the 6-bit category code")
        self.block_ = b
        self.grid_ = (math.ceil(self.dims[0] / b), math.ceil(self.dims[1] / b))
        return self

    def _check(self, P):
        if P.shape[1:] != tuple(self.dims) + (self.n_categories + 2,):
            raise DimsMismatch(f"map shape {P.shape[1:3]} does not match codec dims {tuple(self.dims)}")

    def _blocks(self, P):
        """Pad to whole blocks and view as ``(n, gx, gy, b, b, C)``."""
        b = self.block_
        gx, gy = self.grid_
        n, L, W, C = P.shape
        pad = np.zeros((n, gx * b, gy * b, C), dtype=bool)
        pad[:, :L, :W] = P
        return pad.reshape(n, gx, b, gy, b, C).transpose(0, 1, 3, 2, 4, 5)

    @staticmethod
    def _bbox(mask):
        """Per-block ``(any, x0, x1, y0, y1)`` for masks shaped ``(..., b, b)``."""
        b = mask.shape[-1]
        rows = mask.any(axis=-1)
        cols = mask.any(axis=-2)
        has = rows.any(axis=-1)
        x0 = rows.argmax(axis=-1)
        x1 = b - 1 - rows[..., ::-1].argmax(axis=-1)
        y0 = cols.argmax(axis=-1)
        y1 = b - 1 - cols[..., ::-1].argmax(axis=-1)
        box = np.stack([x0, x1, y0, y1], axis=-1) * has[..., None]
        return has, box.astype(np.int64)

    def transform(self, X):
        P = _as_presence(X)
        self._check(P)
        K = self.n_categories
        B = self._blocks(P)
        n, gx, gy = B.shape[:3]
        cat_counts = B[..., :K].sum(axis=(3, 4))
        code = np.where(cat_counts.max(axis=-1) > 0, cat_counts.argmax(axis=-1) + 1, 0)
        chosen = np.take_along_axis(
            B[..., :K], np.clip(code - 1, 0, K - 1)[:, :, :, None, None, None], axis=-1
        )[..., 0] & (code > 0)[..., None, None]
        _, cbox = self._bbox(chosen)
        occ, obox = self._bbox(B[..., K])
        # any evidence implies explored, so the explored box covers every channel
        exp, ebox = self._bbox(B.any(axis=-1))
        cb = self._COORD_BITS
        word = np.zeros((n, gx, gy), dtype=np.int64)
        shift = 0
        for box in (cbox, obox, ebox):
            for j in range(4):
                word |= box[..., j] << shift
                shift += cb
        word |= occ.astype(np.int64) << shift
        word |= exp.astype(np.int64) << (shift + 1)
        word |= code.astype(np.int64) << (shift + 2)
        out = np.zeros((n, self.budget), dtype=np.int64)
        out[:, : gx * gy] = word.reshape(n, -1)
        return out

    def inverse_transform(self, Z):
        Z = np.asarray(Z)
        if Z.ndim == 1:
            Z = Z[None]
        if Z.shape[-1] != self.budget:
            raise BadLength(f"payload length {Z.shape[-1]} != budget {self.budget}")
        Z = Z.astype(np.int64)
        K = self.n_categories
        b = self.block_
        gx, gy = self.grid_
        n = Z.shape[0]
        word = Z[:, : gx * gy].reshape(n, gx, gy)
        cb = self._COORD_BITS
        mask = (1 << cb) - 1
        boxes = []
        shift = 0
        for _ in range(3):
            boxes.append(np.stack([(word >> (shift + cb * j)) & mask for j in range(4)], axis=-1))
            shift += 4 * cb
        occ = (word >> shift) & 1
        exp = (word >> (shift + 1)) & 1
        code = (word >> (shift + 2)) & 63
        ar = np.arange(b)

        def fill(box, on):
            inx = (ar >= box[..., 0, None]) & (ar <= box[..., 1, None])
            iny = (ar >= box[..., 2, None]) & (ar <= box[..., 3, None])
            return inx[..., :, None] & iny[..., None, :] & on.astype(bool)[..., None, None]

        blocks = np.zeros((n, gx, gy, b, b, K + 2), dtype=bool)
        cmask = fill(boxes[0], code > 0)
        idx = np.nonzero(code > 0)
        if len(idx[0]):
            blocks[idx[0], idx[1], idx[2], :, :, code[idx] - 1] = cmask[idx]
        blocks[..., K] = fill(boxes[1], occ)
        blocks[..., K + 1] = fill(boxes[2], exp)
        full = blocks.transpose(0, 1, 3, 2, 4, 5).reshape(n, gx * b, gy * b, K + 2)
        L, W = self.dims
        return full[:, :L, :W]

    def encode(self, smap: SemanticMap) -> np.ndarray:
        return self.transform([smap])[0]

    def decode(self, payload) -> SemanticMap:
        return _to_maps(self.inverse_transform(payload), self.n_categories)[0]


def _pool_shape(dims, budget, stride):
    L, W = dims
    return math.ceil(L / stride), math.ceil(W / stride)


class LearnedCodec(BaseEstimator, TransformerMixin):
    """Affine encoder/decoder on block-averaged presence maps.

    The map is average-pooled with ``stride`` to a coarse grid, flattened and
    projected to ``budget`` values (stored as float16).  Decoding applies the
    second affine map, thresholds at 0.5 and repeats each coarse value over
    its block.  The training loss is the full-resolution mean squared error
    between the upsampled reconstruction and the presence map.
    """

    def __init__(self, budget: int = 256, dims=(80, 80), n_categories: int = K_TOTAL, stride: int = 8,
                 epochs: int = 500, learning_rate: float = 0.01, optimizer: str = "adam",
                 init_scale: float = 0.01, random_state: int = 0):
        self.budget = budget
        self.dims = dims
        self.n_categories = n_categories
        self.stride = stride
        self.epochs = epochs
        self.learning_rate = learning_rate
        self.optimizer = optimizer
        self.init_scale = init_scale
        self.random_state = random_state

    # pooled representation

    def _pool(self, P):
        """Block means ``(n, D)``, block variances summed ``(n,)`` and weights ``(D,)``."""
        s = self.stride
        n, L, W, C = P.shape
        gx, gy = _pool_shape(self.dims, self.budget, s)
        pad = np.zeros((n, gx * s, gy * s, C))
        pad[:, :L, :W] = P
        valid = np.zeros((gx * s, gy * s))
        valid[:L, :W] = 1
        counts = valid.reshape(gx, s, gy, s).sum(axis=(1, 3))
        sums = pad.reshape(n, gx, s, gy, s, C).sum(axis=(2, 4))
        means = sums / counts[None, :, :, None]
        # sum over cells of (x - mean)^2 = sum(x) - n * mean^2 for 0/1 data
        within = (sums - counts[None, :, :, None] * means**2).reshape(n, -1).sum(axis=1)
        weights = np.repeat(counts.reshape(-1), C)
        return means.reshape(n, -1), within, weights

    def _init_params(self):
        gx, gy = _pool_shape(self.dims, self.budget, self.stride)
        D = gx * gy * (self.n_categories + 2)
        rng = np.random.default_rng(self.random_state)
        self.enc_w_ = rng.standard_normal((D, self.budget)) * self.init_scale
        self.enc_b_ = np.zeros(self.budget)
        self.dec_w_ = np.zeros((self.budget, D))
        self.dec_b_ = np.zeros(D)
        self.coarse_ = (gx, gy)

    def _loss_grad(self, M, within, weights, total):
        Z = M @ self.enc_w_ + self.enc_b_
        R = Z @ self.dec_w_ + self.dec_b_
        E = R - M
        n = M.shape[0]
        loss = ((weights * E**2).sum() + within.sum()) / (n * total)
        G = 2.0 * weights * E / (n * total)
        g_dec_w = Z.T @ G
        g_dec_b = G.sum(axis=0)
        GZ = G @ self.dec_w_.T
        g_enc_w = M.T @ GZ
        g_enc_b = GZ.sum(axis=0)
        return loss, (g_enc_w, g_enc_b, g_dec_w, g_dec_b)

    def fit(self, X, y=None):
        P = _as_presence(X)
        self._check(P)
        if P.shape[0] < 32:
            raise TooFewSamples(f"learned codec needs >= 32 maps, got {P.shape[0]}")
        self._init_params()
        M, within, weights = self._pool(P.astype(np.float64))
        total = float(np.prod(P.shape[1:]))
        params = [self.enc_w_, self.enc_b_, self.dec_w_, self.dec_b_]
        m1 = [np.zeros_like(p) for p in params]
        m2 = [np.zeros_like(p) for p in params]
        b1, b2, eps = 0.9, 0.999, 1e-8
        trace = []
        for t in range(self.epochs + 1):
            loss, grads = self._loss_grad(M, within, weights, total)
            if not np.isfinite(loss):
                raise DivergenceDetected("learned codec loss became non-finite", trace=trace)
            trace.append(float(loss))
            if t == self.epochs:
                break
            for i, (p, g) in enumerate(zip(params, grads)):
                if self.optimizer == "adam":
                    adam_step(p, g, m1[i], m2[i], t + 1, self.learning_rate, b1, b2, eps)
                elif self.optimizer == "gd":
                    p -= self.learning_rate * g
                else:
                    raise ConfigError(f"optimizer: expected 'adam' or 'gd', got {self.optimizer!r}")
        self.loss_trace_ = trace
        return self

    def loss(self, X) -> float:
        """Mean per-cell, per-channel squared error of the real-valued reconstruction."""
        P = _as_presence(X)
        M, within, weights = self._pool(P.astype(np.float64))
        return float(self._loss_grad(M, within, weights, float(np.prod(P.shape[1:])))[0])

    def _check(self, P):
        if P.shape[1:] != tuple(self.dims) + (self.n_categories + 2,):
            raise DimsMismatch(f"map shape {P.shape[1:3]} does not match codec dims {tuple(self.dims)}")

    def transform(self, X):
        P = _as_presence(X)
        self._check(P)
        M, _, _ = self._pool(P.astype(np.float64))
        Z = M @ self.enc_w_ + self.enc_b_
        return Z.astype(np.float16).astype(np.float64)

    def inverse_transform(self, Z):
        Z = np.asarray(Z, dtype=np.float64)
        if Z.ndim == 1:
            Z = Z[None]
        if Z.shape[-1] != self.budget:
            raise BadLength(f"payload length {Z.shape[-1]} != budget {self.budget}")
        R = Z @ self.dec_w_ + self.dec_b_
        gx, gy = self.coarse_
        C = self.n_categories + 2
        s = self.stride
        coarse = (R > 0.5).reshape(-1, gx, gy, C)
        full = np.repeat(np.repeat(coarse, s, axis=1), s, axis=2)
        L, W = self.dims
        return full[:, :L, :W]

    def encode(self, smap: SemanticMap) -> np.ndarray:
        return self.transform([smap])[0]

    def decode(self, payload) -> SemanticMap:
        return _to_maps(self.inverse_transform(payload), self.n_categories)[0]


def make_codec(variant: str = "quantized", budget: int = 256, dims=(80, 80), n_categories: int = K_TOTAL, **kw):
    if variant == "quantized":
        return QuantizedCodec(budget, dims, n_categories).fit()
    if variant == "learned":
        return LearnedCodec(budget, dims, n_categories, **kw)
    raise ConfigError(f"codec: expected 'quantized' or 'learned', got {variant!r}")


def encode_map(codec, smap: SemanticMap) -> np.ndarray:
    return codec.encode(smap)


def decode_map(codec, payload) -> SemanticMap:
    return codec.decode(payload)


def train_learned_codec(maps, epochs: int = 500, learning_rate: float = 0.01, budget: int = 256, **kw):
    """Fit a :class:`LearnedCodec`; returns ``(codec, loss_trace)``."""
    maps = list(maps)
    if len(maps) < 32:
        raise TooFewSamples(f"learned codec needs >= 32 maps, got {len(maps)}")
    first = maps[0]
    codec = LearnedCodec(budget, first.dims, first.n_categories, epochs=epochs, learning_rate=learning_rate, **kw)
    codec.fit(maps)
    return codec, codec.loss_trace_


# recipient selection


def _segment_distance(q, a, b):
    ab = b - a
    t = np.clip(np.dot(q - a, ab) / max(np.dot(ab, ab), 1e-300), 0.0, 1.0)
    return float(np.linalg.norm(q - (a + t * ab)))


def sector_distance(apex, heading_deg: float, half_angle_deg: float, radius: float, point) -> float:
    """Euclidean distance from ``point`` to a filled circular sector."""
    apex = np.asarray(apex, dtype=float)
    q = np.asarray(point, dtype=float)
    v = q - apex
    r = float(np.hypot(*v))
    if r == 0.0:
        return 0.0
    diff = (math.degrees(math.atan2(v[1], v[0])) - heading_deg + 180.0) % 360.0 - 180.0
    if abs(diff) <= half_angle_deg:
        return max(0.0, r - radius)
    best = math.inf
    for side in (-1, 1):
        ang = math.radians(heading_deg + side * half_angle_deg)
        edge = apex + radius * np.array([math.cos(ang), math.sin(ang)])
        best = min(best, _segment_distance(q, apex, edge))
    return best


def select_recipients(sender: int, poses, sensor: SensorParams = SensorParams(), dilation: float = DILATION_M) -> set[int]:
    """Agents within ``dilation`` metres of the sender's view sector."""
    p = poses[sender]
    out = set()
    for i, other in enumerate(poses):
        if i == sender or other is None:
            continue
        d = sector_distance((p.x, p.y), p.heading, sensor.fov / 2, sensor.max_range, (other.x, other.y))
        if d <= dilation + 1e-12:
            out.add(i)
    return out


# the bus


@dataclass
class BandwidthLedger:
    total_values_sent: int = 0
    map_msgs: int = 0
    found_msgs: int = 0
    dropped_msgs: int = 0
    per_pair: dict = field(default_factory=dict)

    def record(self, sender: int, recipient: int, msg: Message):
        self.total_values_sent += msg.size
        key = (sender, recipient)
        self.per_pair[key] = self.per_pair.get(key, 0) + msg.size
        if msg.kind == MAP_VECTOR:
            self.map_msgs += 1
        else:
            self.found_msgs += 1

    def snapshot(self) -> dict:
        return {
            "total_values_sent": self.total_values_sent,
            "map_msgs": self.map_msgs,
            "found_msgs": self.found_msgs,
            "dropped_msgs": self.dropped_msgs,
            "per_pair": {f"{a}->{b}": v for (a, b), v in sorted(self.per_pair.items())},
        }


def exchange(outboxes, poses, ledger: BandwidthLedger, sensor: SensorParams = SensorParams(),
             global_cap: int | None = None, budget: int | None = None) -> dict[int, list[Message]]:
    """Deliver one round of messages; returns ``{agent: inbox}``.

    Map vectors go to the sender's selected recipients, one copy per
    recipient, in (sender id, recipient id) order; a copy that would push the
    round's delivered map values over ``global_cap`` is dropped.  Found
    notices are broadcast to every other agent and never dropped.
    """
    n = len(poses)
    inboxes: dict[int, list[Message]] = {i: [] for i in range(n)}
    used = 0
    for sender in sorted(outboxes):
        msgs = outboxes[sender]
        maps = [m for m in msgs if m.kind == MAP_VECTOR]
        if len(maps) > 1:
            raise ValueError(f"agent {sender} sent {len(maps)} map vectors in one round")
        for m in msgs:
            if m.kind == FOUND_NOTICE:
                for r in range(n):
                    if r != sender:
                        inboxes[r].append(m)
                        ledger.record(sender, r, m)
        for m in maps:
            if budget is not None and m.size != budget:
                raise BadLength(f"map vector of length {m.size} != budget {budget}")
            for r in sorted(select_recipients(sender, poses, sensor)):
                if global_cap is not None and used + m.size > global_cap:
                    ledger.dropped_msgs += 1
                    continue
                used += m.size
                inboxes[r].append(m)
                ledger.record(sender, r, m)
    return inboxes


# learned codec files

CODEC_MAGIC = b"SNCD"
CODEC_VERSION = 1
_CODEC_HEAD = struct.Struct("<4sH6I")


def codec_bytes(codec: LearnedCodec) -> bytes:
    """``SNCD`` header (version, budget, L, W, n_categories, stride, D) then
    enc_w (D x budget), enc_b, dec_w (budget x D), dec_b as little-endian f64."""
    D = codec.enc_w_.shape[0]
    head = _CODEC_HEAD.pack(CODEC_MAGIC, CODEC_VERSION, codec.budget, codec.dims[0], codec.dims[1],
                            codec.n_categories, codec.stride, D)
    body = b"".join(np.asarray(a, "<f8").tobytes() for a in (codec.enc_w_, codec.enc_b_, codec.dec_w_, codec.dec_b_))
    return head + body


def codec_from_bytes(data: bytes) -> LearnedCodec:
    from .errors import ParseError

    if len(data) < _CODEC_HEAD.size:
        raise ParseError("codec: file shorter than header")
    magic, version, budget, L, W, K, stride, D = _CODEC_HEAD.unpack_from(data)
    if magic != CODEC_MAGIC or version != CODEC_VERSION:
        raise ParseError(f"codec: bad magic/version {magic!r}/{version}")
    n = 2 * D * budget + budget + D
    if len(data) != _CODEC_HEAD.size + 8 * n:
        raise ParseError(f"codec: expected {_CODEC_HEAD.size + 8 * n} bytes, got {len(data)}")
    flat = np.frombuffer(data, "<f8", n, _CODEC_HEAD.size).astype(np.float64)
    codec = LearnedCodec(budget, (L, W), K, stride=stride)
    gx, gy = _pool_shape((L, W), budget, stride)
    if gx * gy * (K + 2) != D:
        raise ParseError(f"codec: D={D} inconsistent with dims/stride")
    o = 0
    codec.enc_w_ = flat[o:o + D * budget].reshape(D, budget); o += D * budget
    codec.enc_b_ = flat[o:o + budget]; o += budget
    codec.dec_w_ = flat[o:o + D * budget].reshape(budget, D); o += D * budget
    codec.dec_b_ = flat[o:o + D]
    codec.coarse_ = (gx, gy)
    return codec
