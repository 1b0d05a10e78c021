"""Training, inference and gradient checking against cube stores."""

from __future__ import annotations

import logging
from collections.abc import Callable
from dataclasses import dataclass

import numpy as np

from ..datacube import read_window, write_store
from ..errors import ConfigError, DataError
from ..store import CubeSchema, CubeStore
from .loss import IGNORE
from .net import (
    PARAM_ORDER,
    FactorizedNet,
    NetConfig,
    Sample,
    forward,
    init_net,
    loss,
    loss_and_grads,
    sgd_step,
)
from .sampling import DEFAULT_K, sample_temporal_subset

log = logging.getLogger(__name__)

_SCALE = {"u8": 255.0, "u16": 65535.0, "f32": 1.0}


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 100
    lr: float = 0.01
    seed: int = 0
    k: int = DEFAULT_K

    def __post_init__(self) -> None:
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.lr < 0:
            raise ConfigError(f"lr must be >= 0, got {self.lr}")
        if self.k < 2:
            raise ConfigError(f"k must be >= 2, got {self.k}")


def _frames(store: CubeStore, indices: list[int]) -> tuple[np.ndarray, np.ndarray]:
    """Normalized (T, C, H, W) inputs and a (T, H, W) validity mask for the chosen frames."""
    schema = store.schema
    _, _, h, w = schema.shape
    values, valid = zip(*(read_window(store, (t, t + 1), None, (0, h), (0, w)) for t in indices))
    data = np.concatenate(values).astype(np.float64) / _SCALE[schema.dtype]
    ok = np.concatenate(valid)
    data[~ok] = 0.0
    return data, ok.all(axis=1)


def _labels(labels: CubeStore, indices: list[int]) -> np.ndarray:
    _, _, h, w = labels.schema.shape
    rows = [read_window(labels, (t, t + 1), [labels.schema.bands[0]], (0, h), (0, w))[0][:, 0] for t in indices]
    return np.concatenate(rows).astype(np.int64)


def check_aligned(store: CubeStore, labels: CubeStore) -> None:
    a, b = store.schema, labels.schema
    if a.grid != b.grid:
        raise DataError("image and label stores use different grids")
    if a.frames != b.frames:
        raise DataError("image and label stores have different frames")
    if b.dtype != "u8":
        raise DataError(f"label store must be u8, got {b.dtype}")


def load_sample(store: CubeStore, labels: CubeStore, indices: list[int]) -> Sample:
    frames, valid = _frames(store, indices)
    return Sample(frames, _labels(labels, indices), valid)


def subset_seed(seed: int, epoch: int) -> int:
    return int(np.random.SeedSequence([seed, epoch]).generate_state(1)[0])


def train(
    store: CubeStore,
    labels: CubeStore,
    config: TrainConfig,
    on_epoch: Callable[[int, float], None] | None = None,
) -> tuple[FactorizedNet, list[float]]:
    """One SGD step per epoch on a freshly drawn temporal subset.

    Returns the trained net and the per-epoch loss (measured before each step).
    Fully determined by ``config.seed``.
    """
    check_aligned(store, labels)
    n, c, h, w = store.schema.shape
    if n < config.k:
        raise DataError(f"store has {n} frames, fewer than k={config.k}")
    net = init_net(NetConfig(T=config.k, C_in=c, H=h, W=w), seed=config.seed)
    losses = []
    for epoch in range(config.epochs):
        indices = sample_temporal_subset(n, config.k, subset_seed(config.seed, epoch))
        sample = load_sample(store, labels, indices)
        value, grads = loss_and_grads(net, sample)
        if not np.isfinite(value):
            raise DataError(f"non-finite loss at epoch {epoch}")
        losses.append(value)
        if on_epoch is not None:
            on_epoch(epoch, value)
        net = sgd_step(net, grads, config.lr)
    return net, losses


def covering_subsets(unseen: list[int], n_frames: int, k: int) -> list[list[int]]:
    """Sorted k-frame subsets that together contain every ``unseen`` frame.

    Each subset keeps both endpoints, except when k = 2 leaves no room.
    """
    interior = [i for i in unseen if 0 < i < n_frames - 1]
    if k == 2:
        return [[0, i] for i in interior]
    subsets = []
    for start in range(0, len(interior), k - 2):
        batch = interior[start : start + k - 2]
        batch += [i for i in range(1, n_frames - 1) if i not in batch][: k - 2 - len(batch)]
        subsets.append(sorted([0, n_frames - 1] + batch))
    return subsets


def predict(net: FactorizedNet, store: CubeStore, seed: int = 0, passes: int = 4) -> np.ndarray:
    """Per-frame probabilities (n, H, W) for a whole store.

    ``passes`` temporal subsets are drawn as in training; frames the sampler
    never reached (its allocation can leave a third untouched when k is small)
    are then covered by extra subsets that keep both endpoints.  Each frame's
    output is averaged over the subsets that contained it.
    """
    n, c, h, w = store.schema.shape
    cfg = net.config
    if c != cfg.C_in:
        raise DataError(f"store has {c} bands, model expects {cfg.C_in}")
    if n < cfg.T:
        raise DataError(f"store has {n} frames, model needs at least {cfg.T}")
    if passes < 1:
        raise ConfigError(f"passes must be >= 1, got {passes}")
    total = np.zeros((n, h, w))
    seen = np.zeros(n, dtype=np.int64)

    def run(indices: list[int]) -> None:
        frames, _ = _frames(store, indices)
        total[indices] += forward(net, frames)
        seen[indices] += 1

    for i in range(1 if n == cfg.T else passes):
        run(sample_temporal_subset(n, cfg.T, subset_seed(seed, i)))
    for indices in covering_subsets([int(i) for i in np.flatnonzero(seen == 0)], n, cfg.T):
        run(indices)
    return total / seen[:, None, None]


def write_predictions(probs: np.ndarray, store: CubeStore, out: str) -> CubeStore:
    src = store.schema
    schema = CubeSchema(
        frames=src.frames,
        bands=("construction_prob",),
        grid=src.grid,
        dtype="f32",
        nodata=-9999.0,
        chunk=(src.chunk[0], 1, src.chunk[2], src.chunk[3]),
    )
    return write_store(probs.astype(np.float32)[:, None], out, schema)


def numeric_gradient(net: FactorizedNet, sample: Sample, name: str, step: float = 1e-5) -> np.ndarray:
    """Central finite differences of the loss for every element of parameter ``name``."""
    base = net.params[name]
    num = np.zeros_like(base)
    for idx in np.ndindex(base.shape):
        params = dict(net.params)
        plus = base.copy()
        plus[idx] += step
        params[name] = plus
        lp = loss(net.replace(params), sample)
        minus = base.copy()
        minus[idx] -= step
        params[name] = minus
        lm = loss(net.replace(params), sample)
        num[idx] = (lp - lm) / (2.0 * step)
    return num


def relative_error(a: np.ndarray, b: np.ndarray) -> float:
    scale = max(float(np.linalg.norm(a)), float(np.linalg.norm(b)))
    if scale < 1e-12:
        return 0.0
    return float(np.linalg.norm(a - b)) / scale


def toy_problem(T: int = 3, C_in: int = 2, H: int = 8, W: int = 8, seed: int = 0) -> tuple[FactorizedNet, Sample]:
    """Seeded net and sample for gradient checks; biases are randomized too."""
    net = init_net(NetConfig(T=T, C_in=C_in, H=H, W=W), seed=seed, bias_scale=0.1)
    rng = np.random.default_rng(seed + 1)
    labels = rng.integers(0, 2, size=(T, H, W))
    labels[rng.random((T, H, W)) < 0.1] = IGNORE
    sample = Sample(rng.random((T, C_in, H, W)), labels, rng.random((T, H, W)) > 0.1)
    return net, sample


def gradcheck(net: FactorizedNet, sample: Sample, step: float = 1e-5) -> dict[str, float]:
    """Relative error (L2, per parameter group) of the analytic gradient vs central differences."""
    _, grads = loss_and_grads(net, sample)
    return {name: relative_error(grads[name], numeric_gradient(net, sample, name, step)) for name in PARAM_ORDER}
