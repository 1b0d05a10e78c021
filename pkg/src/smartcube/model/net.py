"""Space-time factorized segmentation network.

Frames are first encoded independently by a small two-level encoder-decoder
with one skip connection (weights shared across frames), then mixed across
time per pixel by stacking frame features along channels, and finally mapped
to one construction probability per pixel and frame by a shared 1x1 head.

Shapes (T frames, C_in input channels):

    spatial   conv1  3x3  C_in -> 8           ReLU
              down   3x3  8 -> 16, stride 2   ReLU
              up     nearest x2, 3x3 16 -> 8  ReLU
              fuse   3x3  (8 + 8) -> F        ReLU
    temporal  mix1   1x1  T*F -> M            ReLU
              mid    3x3  M -> M              ReLU
              mix2   1x1  M -> T*G
    head      1x1    G -> 1, sigmoid (shared across frames)
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from ..errors import ConfigError, DataError
from . import layers
from .loss import bce_loss

MAGIC = b"SMCM1"
SPATIAL_C1 = 8
SPATIAL_C2 = 16

PARAM_ORDER = (
    "conv1.w", "conv1.b",
    "down.w", "down.b",
    "up.w", "up.b",
    "fuse.w", "fuse.b",
    "mix1.w", "mix1.b",
    "mid.w", "mid.b",
    "mix2.w", "mix2.b",
    "head.w", "head.b",
)  # fmt: skip


@dataclass(frozen=True)
class NetConfig:
    T: int = 10
    C_in: int = 4
    F: int = 8
    M: int = 16
    G: int = 8
    H: int = 16
    W: int = 16

    def __post_init__(self) -> None:
        for name in ("T", "C_in", "F", "M", "G", "H", "W"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"config {name} must be positive")
        if self.H % 2 or self.W % 2:
            raise ConfigError(f"H and W must be even, got {self.H}x{self.W}")

    def as_tuple(self) -> tuple[int, ...]:
        return (self.T, self.C_in, self.F, self.M, self.G, self.H, self.W)


def param_shapes(cfg: NetConfig) -> dict[str, tuple[int, ...]]:
    c1, c2 = SPATIAL_C1, SPATIAL_C2
    return {
        "conv1.w": (c1, cfg.C_in, 3, 3), "conv1.b": (c1,),
        "down.w": (c2, c1, 3, 3), "down.b": (c2,),
        "up.w": (c1, c2, 3, 3), "up.b": (c1,),
        "fuse.w": (cfg.F, 2 * c1, 3, 3), "fuse.b": (cfg.F,),
        "mix1.w": (cfg.M, cfg.T * cfg.F, 1, 1), "mix1.b": (cfg.M,),
        "mid.w": (cfg.M, cfg.M, 3, 3), "mid.b": (cfg.M,),
        "mix2.w": (cfg.T * cfg.G, cfg.M, 1, 1), "mix2.b": (cfg.T * cfg.G,),
        "head.w": (1, cfg.G, 1, 1), "head.b": (1,),
    }  # fmt: skip


@dataclass(frozen=True, eq=False)
class FactorizedNet:
    config: NetConfig
    params: dict[str, np.ndarray] = field(repr=False)

    def __post_init__(self) -> None:
        shapes = param_shapes(self.config)
        if set(self.params) != set(shapes):
            raise ConfigError(f"parameter groups {sorted(self.params)} do not match {sorted(shapes)}")
        for name, shape in shapes.items():
            if self.params[name].shape != shape:
                raise ConfigError(f"{name}: shape {self.params[name].shape}, expected {shape}")

    @property
    def n_params(self) -> int:
        return sum(p.size for p in self.params.values())

    def replace(self, params: dict[str, np.ndarray]) -> FactorizedNet:
        return FactorizedNet(self.config, params)


def init_net(cfg: NetConfig, seed: int = 0, bias_scale: float = 0.0) -> FactorizedNet:
    """He-normal weights; biases zero unless ``bias_scale`` > 0 (then N(0, bias_scale))."""
    rng = np.random.default_rng(seed)
    params = {}
    for name in PARAM_ORDER:
        shape = param_shapes(cfg)[name]
        if name.endswith(".w"):
            fan_in = int(np.prod(shape[1:]))
            params[name] = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=shape)
        else:
            params[name] = rng.normal(0.0, bias_scale, size=shape) if bias_scale > 0 else np.zeros(shape)
    return FactorizedNet(cfg, params)


def zero_net(cfg: NetConfig) -> FactorizedNet:
    return FactorizedNet(cfg, {k: np.zeros(s) for k, s in param_shapes(cfg).items()})


def _check_frames(net: FactorizedNet, frames: np.ndarray) -> np.ndarray:
    x = np.asarray(frames, dtype=np.float64)
    if x.ndim != 4:
        raise ConfigError(f"frames must be (T, C_in, H, W), got shape {x.shape}")
    t, c, h, w = x.shape
    if h % 2 or w % 2:
        raise ConfigError(f"H and W must be even, got {h}x{w}")
    if c != net.config.C_in:
        raise ConfigError(f"frames have {c} channels, net expects {net.config.C_in}")
    return x


def _spatial(net: FactorizedNet, x: np.ndarray) -> tuple[np.ndarray, dict[str, np.ndarray]]:
    p = net.params
    a1 = layers.relu(layers.conv(x, p["conv1.w"], p["conv1.b"]))
    a2 = layers.relu(layers.conv(a1, p["down.w"], p["down.b"], stride=2))
    u = layers.upsample2(a2)
    a3 = layers.relu(layers.conv(u, p["up.w"], p["up.b"]))
    cat = np.concatenate([a1, a3], axis=1)
    feat = layers.relu(layers.conv(cat, p["fuse.w"], p["fuse.b"]))
    return feat, {"x": x, "a1": a1, "a2": a2, "u": u, "a3": a3, "cat": cat, "feat": feat}


def _temporal(net: FactorizedNet, feat: np.ndarray) -> tuple[np.ndarray, dict[str, np.ndarray]]:
    cfg, p = net.config, net.params
    t, f, h, w = feat.shape
    if t != cfg.T or f != cfg.F:
        raise ConfigError(f"features shaped {feat.shape}, net expects (T={cfg.T}, F={cfg.F}, H, W)")
    stacked = feat.reshape(1, t * f, h, w)
    m1 = layers.relu(layers.conv(stacked, p["mix1.w"], p["mix1.b"]))
    m2 = layers.relu(layers.conv(m1, p["mid.w"], p["mid.b"]))
    m3 = layers.conv(m2, p["mix2.w"], p["mix2.b"])
    mixed = m3.reshape(t, cfg.G, h, w)
    return mixed, {"stacked": stacked, "m1": m1, "m2": m2, "mixed": mixed}


def forward_spatial(net: FactorizedNet, frames: np.ndarray) -> np.ndarray:
    """Per-frame features (T, F, H, W); frame t depends on input frame t only."""
    return _spatial(net, _check_frames(net, frames))[0]


def forward_temporal(net: FactorizedNet, features: np.ndarray) -> np.ndarray:
    """Mix per-frame features across time; returns (T, G, H, W)."""
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 4:
        raise ConfigError(f"features must be (T, F, H, W), got shape {x.shape}")
    return _temporal(net, x)[0]


def _head(net: FactorizedNet, mixed: np.ndarray) -> np.ndarray:
    z = layers.conv(mixed, net.params["head.w"], net.params["head.b"])
    return layers.sigmoid(z[:, 0])


def forward(net: FactorizedNet, frames: np.ndarray) -> np.ndarray:
    """Construction probabilities (T, H, W), each in (0, 1)."""
    feat, _ = _spatial(net, _check_frames(net, frames))
    mixed, _ = _temporal(net, feat)
    return _head(net, mixed)


@dataclass(frozen=True, eq=False)
class Sample:
    frames: np.ndarray  # (T, C_in, H, W)
    labels: np.ndarray  # (T, H, W), 0 / 1 / IGNORE
    valid: np.ndarray  # (T, H, W) bool

    def __post_init__(self) -> None:
        t, _, h, w = self.frames.shape
        if self.labels.shape != (t, h, w) or self.valid.shape != (t, h, w):
            raise ConfigError(
                f"sample shapes disagree: frames {self.frames.shape}, labels {self.labels.shape}, valid {self.valid.shape}"
            )


def loss(net: FactorizedNet, sample: Sample) -> float:
    """Masked BCE of the forward pass, without gradients."""
    return bce_loss(forward(net, sample.frames), sample.labels, sample.valid)[0]


def loss_and_grads(net: FactorizedNet, sample: Sample) -> tuple[float, dict[str, np.ndarray]]:
    """Masked BCE of ``forward(net, sample.frames)`` and its gradient for every parameter."""
    p = net.params
    feat, sc = _spatial(net, _check_frames(net, sample.frames))
    mixed, tc = _temporal(net, feat)
    z = layers.conv(mixed, p["head.w"], p["head.b"])
    probs = layers.sigmoid(z[:, 0])
    value, dprobs = bce_loss(probs, sample.labels, sample.valid)
    if not np.isfinite(value):
        raise DataError("non-finite loss")

    g: dict[str, np.ndarray] = {}
    dz = (dprobs * probs * (1.0 - probs))[:, None]
    dmixed, g["head.w"], g["head.b"] = layers.conv_backward(mixed, p["head.w"], dz)

    t, gch, h, w = dmixed.shape
    dm3 = dmixed.reshape(1, t * gch, h, w)
    dm2, g["mix2.w"], g["mix2.b"] = layers.conv_backward(tc["m2"], p["mix2.w"], dm3)
    dm2 = layers.relu_backward(tc["m2"], dm2)
    dm1, g["mid.w"], g["mid.b"] = layers.conv_backward(tc["m1"], p["mid.w"], dm2)
    dm1 = layers.relu_backward(tc["m1"], dm1)
    dstacked, g["mix1.w"], g["mix1.b"] = layers.conv_backward(tc["stacked"], p["mix1.w"], dm1)
    dfeat = dstacked.reshape(feat.shape)

    dfeat = layers.relu_backward(sc["feat"], dfeat)
    dcat, g["fuse.w"], g["fuse.b"] = layers.conv_backward(sc["cat"], p["fuse.w"], dfeat)
    c1 = sc["a1"].shape[1]
    da1, da3 = dcat[:, :c1], dcat[:, c1:]
    da3 = layers.relu_backward(sc["a3"], da3)
    du, g["up.w"], g["up.b"] = layers.conv_backward(sc["u"], p["up.w"], da3)
    da2 = layers.relu_backward(sc["a2"], layers.upsample2_backward(du))
    da1_down, g["down.w"], g["down.b"] = layers.conv_backward(sc["a1"], p["down.w"], da2, stride=2)
    da1 = layers.relu_backward(sc["a1"], da1 + da1_down)
    _, g["conv1.w"], g["conv1.b"] = layers.conv_backward(sc["x"], p["conv1.w"], da1)
    return value, {k: g[k] for k in PARAM_ORDER}


def backward(net: FactorizedNet, sample: Sample) -> dict[str, np.ndarray]:
    """Gradient of the masked BCE loss with respect to every parameter group."""
    return loss_and_grads(net, sample)[1]


def sgd_step(net: FactorizedNet, grads: dict[str, np.ndarray], lr: float) -> FactorizedNet:
    """Return a new net with ``w - lr * g`` applied to every parameter."""
    if lr < 0:
        raise ConfigError(f"learning rate must be >= 0, got {lr}")
    for name in PARAM_ORDER:
        if not np.all(np.isfinite(grads[name])):
            raise DataError(f"non-finite gradient in {name}")
    return net.replace({name: net.params[name] - lr * grads[name] for name in PARAM_ORDER})


def to_bytes(net: FactorizedNet) -> bytes:
    cfg = net.config.as_tuple()
    parts = [MAGIC, struct.pack(f"<{len(cfg)}q", *cfg)]
    parts += [np.ascontiguousarray(net.params[name], dtype="<f8").tobytes() for name in PARAM_ORDER]
    return b"".join(parts)


def from_bytes(data: bytes) -> FactorizedNet:
    if data[: len(MAGIC)] != MAGIC:
        raise DataError(f"not a model artifact (header {data[:len(MAGIC)]!r}, expected {MAGIC!r})")
    off = len(MAGIC)
    n_cfg = len(NetConfig().as_tuple())
    try:
        cfg = NetConfig(*struct.unpack_from(f"<{n_cfg}q", data, off))
    except struct.error:
        raise DataError("truncated model artifact") from None
    off += 8 * n_cfg
    params: dict[str, Any] = {}
    for name, shape in ((n, param_shapes(cfg)[n]) for n in PARAM_ORDER):
        count = int(np.prod(shape))
        chunk = data[off : off + 8 * count]
        if len(chunk) != 8 * count:
            raise DataError("truncated model artifact")
        params[name] = np.frombuffer(chunk, dtype="<f8").reshape(shape).astype(np.float64)
        off += 8 * count
    if off != len(data):
        raise DataError(f"{len(data) - off} trailing bytes in model artifact")
    return FactorizedNet(cfg, params)


def save(net: FactorizedNet, path: str) -> None:
    with open(path, "wb") as fh:
        fh.write(to_bytes(net))


def load(path: str) -> FactorizedNet:
    with open(path, "rb") as fh:
        return from_bytes(fh.read())
