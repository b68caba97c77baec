"""Squeeze-and-excitation ResNet classifier built from the layer primitives.

Stack: conv7x7/2 -> BN -> ReLU -> maxpool3x3/2 -> four stages of SE basic
blocks -> global average pooling -> A-Softmax head. Parameters live in a
flat dict of named arrays so that optimizers and checkpoints can treat
them uniformly.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from . import layers as L
from .asoftmax import cosine_logits

BONAFIDE_CLASS = 0
SPOOF_CLASS = 1
MIN_STEM_OUTPUT = 8

DEFAULT_STAGES = ((3, 16, 1), (4, 32, 2), (6, 64, 1), (3, 128, 2))


class InputTooSmallError(ValueError):
    pass


@dataclass(frozen=True)
class SenetConfig:
    in_channels: int = 1
    stem_channels: int = 16
    stem_kernel: int = 7
    stem_stride: int = 2
    stem_padding: int = 3
    pool_kernel: int = 3
    pool_stride: int = 2
    pool_padding: int = 1
    stages: tuple = DEFAULT_STAGES
    se_reduction: int = 16
    num_classes: int = 2
    width_multiplier: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "stages", tuple(tuple(int(v) for v in s) for s in self.stages))
        if not self.stages:
            raise ValueError("at least one stage is required")
        for blocks, channels, stride in self.stages:
            if blocks < 1 or channels < 1 or stride < 1:
                raise ValueError(f"invalid stage {(blocks, channels, stride)}")
        if self.width_multiplier <= 0:
            raise ValueError("width_multiplier must be positive")

    def width(self, channels: int) -> int:
        return max(1, int(round(channels * self.width_multiplier)))

    @property
    def embedding_dim(self) -> int:
        return self.width(self.stages[-1][1])

    def blocks(self):
        """Yield (name, in_ch, out_ch, stride) for every SE block."""
        in_ch = self.width(self.stem_channels)
        for si, (count, channels, stride) in enumerate(self.stages, start=1):
            out_ch = self.width(channels)
            for bi in range(count):
                yield f"layer{si}.{bi}", in_ch, out_ch, stride if bi == 0 else 1
                in_ch = out_ch

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> SenetConfig:
        return cls(**json.loads(text))


@dataclass
class ModelState:
    config: SenetConfig
    params: dict = field(default_factory=dict)
    buffers: dict = field(default_factory=dict)
    adam_m: dict = field(default_factory=dict)
    adam_v: dict = field(default_factory=dict)
    step: int = 0

    @property
    def dtype(self):
        return next(iter(self.params.values())).dtype

    def copy(self) -> ModelState:
        dup = lambda d: {k: v.copy() for k, v in d.items()}  # noqa: E731
        return ModelState(self.config, dup(self.params), dup(self.buffers), dup(self.adam_m), dup(self.adam_v), self.step)

    def astype(self, dtype) -> ModelState:
        """Parameters and buffers cast to ``dtype``; optimizer moments are dropped."""
        cast = lambda d: {k: v.astype(dtype) for k, v in d.items()}  # noqa: E731
        return ModelState(self.config, cast(self.params), cast(self.buffers), step=self.step)

    def tensors(self):
        """All named arrays in a fixed order (used by checkpoints)."""
        for prefix, table in (("param", self.params), ("buffer", self.buffers),
                              ("adam_m", self.adam_m), ("adam_v", self.adam_v)):
            for name in sorted(table):
                yield f"{prefix}:{name}", table[name]


def is_decayed(name: str) -> bool:
    """Weight decay applies to conv / linear weights only, not BN, biases, or the head."""
    return name.endswith(".weight") and not name.startswith("head")


def _bn_init(state, prefix, channels, dtype):
    state.params[f"{prefix}.gamma"] = np.ones(channels, dtype=dtype)
    state.params[f"{prefix}.beta"] = np.zeros(channels, dtype=dtype)
    state.buffers[f"{prefix}.running_mean"] = np.zeros(channels, dtype=dtype)
    state.buffers[f"{prefix}.running_var"] = np.ones(channels, dtype=dtype)


def _kaiming(rng, shape, dtype):
    fan_in = int(np.prod(shape[1:]))
    return (rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)).astype(dtype)


def init_model(cfg: SenetConfig, seed: int = 0, dtype=np.float32) -> ModelState:
    rng = np.random.default_rng(seed)
    st = ModelState(cfg)
    p = st.params
    stem = cfg.width(cfg.stem_channels)
    p["stem.conv.weight"] = _kaiming(rng, (stem, cfg.in_channels, cfg.stem_kernel, cfg.stem_kernel), dtype)
    _bn_init(st, "stem.bn", stem, dtype)
    for name, cin, cout, stride in cfg.blocks():
        hidden = max(1, cout // cfg.se_reduction)
        p[f"{name}.conv1.weight"] = _kaiming(rng, (cout, cin, 3, 3), dtype)
        _bn_init(st, f"{name}.bn1", cout, dtype)
        p[f"{name}.conv2.weight"] = _kaiming(rng, (cout, cout, 3, 3), dtype)
        _bn_init(st, f"{name}.bn2", cout, dtype)
        p[f"{name}.se.fc1.weight"] = _kaiming(rng, (hidden, cout), dtype)
        p[f"{name}.se.fc1.bias"] = np.zeros(hidden, dtype=dtype)
        p[f"{name}.se.fc2.weight"] = _kaiming(rng, (cout, hidden), dtype)
        p[f"{name}.se.fc2.bias"] = np.zeros(cout, dtype=dtype)
        if stride != 1 or cin != cout:
            p[f"{name}.down.conv.weight"] = _kaiming(rng, (cout, cin, 1, 1), dtype)
            _bn_init(st, f"{name}.down.bn", cout, dtype)
    head = rng.standard_normal((cfg.num_classes, cfg.embedding_dim))
    p["head.weight"] = (head / np.linalg.norm(head, axis=1, keepdims=True)).astype(dtype)
    for k, v in p.items():
        st.adam_m[k] = np.zeros_like(v)
        st.adam_v[k] = np.zeros_like(v)
    return st


# --- building blocks ---------------------------------------------------------


def _bn(state, prefix, x, train):
    b = state.buffers
    return L.batchnorm_forward(
        x, state.params[f"{prefix}.gamma"], state.params[f"{prefix}.beta"],
        b[f"{prefix}.running_mean"], b[f"{prefix}.running_var"], train,
    )


def _acc(grads, name, g):
    if name in grads:
        grads[name] = grads[name] + g
    else:
        grads[name] = g


def se_block_forward(state, name, x, stride, train):
    """Basic residual block whose branch is rescaled channelwise by SE gates."""
    p = state.params
    c = {}
    h, c["conv1"] = L.conv2d_forward(x, p[f"{name}.conv1.weight"], None, stride, 1)
    h, c["bn1"] = _bn(state, f"{name}.bn1", h, train)
    h, c["relu1"] = L.relu_forward(h)
    h, c["conv2"] = L.conv2d_forward(h, p[f"{name}.conv2.weight"], None, 1, 1)
    branch, c["bn2"] = _bn(state, f"{name}.bn2", h, train)

    squeezed, c["gap"] = L.global_avg_pool_forward(branch)
    z, c["fc1"] = L.linear_forward(squeezed, p[f"{name}.se.fc1.weight"], p[f"{name}.se.fc1.bias"])
    z, c["relu_se"] = L.relu_forward(z)
    z, c["fc2"] = L.linear_forward(z, p[f"{name}.se.fc2.weight"], p[f"{name}.se.fc2.bias"])
    gate = L.sigmoid(z)
    scaled = branch * gate[:, :, None, None]

    if f"{name}.down.conv.weight" in p:
        short, c["down_conv"] = L.conv2d_forward(x, p[f"{name}.down.conv.weight"], None, stride, 0)
        short, c["down_bn"] = _bn(state, f"{name}.down.bn", short, train)
    else:
        short = x
    out, c["relu_out"] = L.relu_forward(scaled + short)
    c["branch"], c["gate"] = branch, gate
    return out, c


def se_block_backward(name, dout, c, grads):
    dsum = L.relu_backward(dout, c["relu_out"])
    branch, gate = c["branch"], c["gate"]

    if "down_conv" in c:
        d, gg, gb = L.batchnorm_backward(dsum, c["down_bn"])
        _acc(grads, f"{name}.down.bn.gamma", gg)
        _acc(grads, f"{name}.down.bn.beta", gb)
        dx_short, gw, _ = L.conv2d_backward(d, c["down_conv"])
        _acc(grads, f"{name}.down.conv.weight", gw)
    else:
        dx_short = dsum

    dbranch = dsum * gate[:, :, None, None]
    dgate = (dsum * branch).sum(axis=(2, 3))
    dz = dgate * gate * (1.0 - gate)
    dz, gw, gb = L.linear_backward(dz, c["fc2"])
    _acc(grads, f"{name}.se.fc2.weight", gw)
    _acc(grads, f"{name}.se.fc2.bias", gb)
    dz = L.relu_backward(dz, c["relu_se"])
    dz, gw, gb = L.linear_backward(dz, c["fc1"])
    _acc(grads, f"{name}.se.fc1.weight", gw)
    _acc(grads, f"{name}.se.fc1.bias", gb)
    dbranch = dbranch + L.global_avg_pool_backward(dz, c["gap"])

    d, gg, gb = L.batchnorm_backward(dbranch, c["bn2"])
    _acc(grads, f"{name}.bn2.gamma", gg)
    _acc(grads, f"{name}.bn2.beta", gb)
    d, gw, _ = L.conv2d_backward(d, c["conv2"])
    _acc(grads, f"{name}.conv2.weight", gw)
    d = L.relu_backward(d, c["relu1"])
    d, gg, gb = L.batchnorm_backward(d, c["bn1"])
    _acc(grads, f"{name}.bn1.gamma", gg)
    _acc(grads, f"{name}.bn1.beta", gb)
    d, gw, _ = L.conv2d_backward(d, c["conv1"])
    _acc(grads, f"{name}.conv1.weight", gw)
    return d + dx_short


# --- full network ------------------------------------------------------------


def stem_output_size(cfg: SenetConfig, h: int, w: int) -> tuple[int, int]:
    def one(n):
        n = L.conv_output_size(n, cfg.stem_kernel, cfg.stem_stride, cfg.stem_padding)
        return L.conv_output_size(n, cfg.pool_kernel, cfg.pool_stride, cfg.pool_padding)

    return one(h), one(w)


def check_input(cfg: SenetConfig, x: np.ndarray) -> None:
    if x.ndim != 4 or x.shape[1] != cfg.in_channels:
        raise ValueError(f"expected input (N, {cfg.in_channels}, H, W), got {x.shape}")
    sh, sw = stem_output_size(cfg, x.shape[2], x.shape[3])
    if min(sh, sw) < MIN_STEM_OUTPUT:
        raise InputTooSmallError(
            f"input {x.shape[2]}x{x.shape[3]} shrinks to {sh}x{sw} after the stem; "
            f"need at least {MIN_STEM_OUTPUT}x{MIN_STEM_OUTPUT}"
        )


def embed_forward(state: ModelState, x: np.ndarray, train: bool):
    """Input (N, C, H, W) -> pooled embedding (N, D) and a backward cache."""
    cfg = state.config
    check_input(cfg, x)
    x = x.astype(state.dtype, copy=False)
    cache = {}
    h, cache["stem_conv"] = L.conv2d_forward(x, state.params["stem.conv.weight"], None, cfg.stem_stride, cfg.stem_padding)
    h, cache["stem_bn"] = _bn(state, "stem.bn", h, train)
    h, cache["stem_relu"] = L.relu_forward(h)
    h, cache["pool"] = L.maxpool_forward(h, cfg.pool_kernel, cfg.pool_stride, cfg.pool_padding)
    blocks = []
    for name, _, _, stride in cfg.blocks():
        h, bc = se_block_forward(state, name, h, stride, train)
        blocks.append((name, bc))
    cache["blocks"] = blocks
    emb, cache["gap"] = L.global_avg_pool_forward(h)
    return emb, cache


def embed_backward(demb: np.ndarray, cache) -> tuple[dict, np.ndarray]:
    """Returns (parameter gradients, input gradient)."""
    grads = {}
    d = L.global_avg_pool_backward(demb, cache["gap"])
    for name, bc in reversed(cache["blocks"]):
        d = se_block_backward(name, d, bc, grads)
    d = L.maxpool_backward(d, cache["pool"])
    d = L.relu_backward(d, cache["stem_relu"])
    d, gg, gb = L.batchnorm_backward(d, cache["stem_bn"])
    grads["stem.bn.gamma"], grads["stem.bn.beta"] = gg, gb
    dx, gw, _ = L.conv2d_backward(d, cache["stem_conv"])
    grads["stem.conv.weight"] = gw
    return grads, dx


def forward(state: ModelState, x: np.ndarray, train: bool = False) -> np.ndarray:
    """Class logits (N, num_classes); column 0 is bonafide, column 1 spoof."""
    emb, _ = embed_forward(state, x, train)
    return cosine_logits(emb, state.params["head.weight"])


def log_softmax(z: np.ndarray) -> np.ndarray:
    zmax = z.max(axis=1, keepdims=True)
    return z - zmax - np.log(np.exp(z - zmax).sum(axis=1, keepdims=True))


def llr_scores(logits: np.ndarray) -> np.ndarray:
    """log p(bonafide) - log p(spoof); higher means more bonafide."""
    ls = log_softmax(logits.astype(np.float64))
    return ls[:, BONAFIDE_CLASS] - ls[:, SPOOF_CLASS]
