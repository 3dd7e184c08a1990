"""Stacked sparse LSTM auto-encoder: greedy layer-wise training and scoring.

Layer m > 0 is trained on the encoder hidden-state sequences of layer m - 1,
with every lower layer frozen. A clip's raw error is the mean of the per-layer
reconstruction losses.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Callable, Optional

import numpy as np

from .model import (
    AutoEncoderParams,
    SparsityConfig,
    clip_gradients,
    decode_batch,
    encode_batch,
    init_autoencoder,
    loss_and_gradients,
    mean_activation,
    reconstruction_losses,
    sgd_update,
)

logger = logging.getLogger(__name__)

# Called after every training epoch as on_epoch(layer_index, epoch, mean_loss).
EpochCallback = Callable[[int, int, float], None]


@dataclass(frozen=True)
class StackConfig:
    """Architecture and optimisation settings for the stacked auto-encoder.

    Defaults are the desk-scale configuration; the published model used hidden
    sizes 4096/2048/1024 on 8192-dimensional features.
    """

    input_dim: int = 64
    hidden_dims: tuple[int, ...] = (128, 64, 32)
    seq_len: int = 3
    rho: float = 0.05
    beta: float = 0.1
    eps: float = 1e-6
    lr_offline: float = 0.001
    lr_online: float = 0.0001
    batch_offline: int = 100
    epochs_offline: int = 50
    online_update_epochs: int = 2
    grad_clip: Optional[float] = 5.0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "hidden_dims", tuple(int(d) for d in self.hidden_dims))
        dims = self.hidden_dims
        if len(dims) < 1:
            raise ValueError("hidden_dims must name at least one layer")
        if self.input_dim < 1 or any(d < 1 for d in dims):
            raise ValueError(f"all dimensions must be >= 1 (input_dim={self.input_dim}, hidden_dims={dims})")
        if any(b >= a for a, b in zip(dims, dims[1:])):
            raise ValueError(f"hidden_dims must be strictly decreasing, got {list(dims)}")
        if self.seq_len < 1:
            raise ValueError(f"seq_len must be >= 1, got {self.seq_len}")
        if self.lr_offline < 0 or self.lr_online < 0:
            raise ValueError("learning rates must be >= 0")
        if self.batch_offline < 1:
            raise ValueError(f"batch_offline must be >= 1, got {self.batch_offline}")
        if self.epochs_offline < 0 or self.online_update_epochs < 0:
            raise ValueError("epoch counts must be >= 0")
        if self.grad_clip is not None and self.grad_clip <= 0:
            raise ValueError(f"grad_clip must be positive or None, got {self.grad_clip}")
        self.sparsity  # validates rho/beta/eps

    @property
    def num_layers(self) -> int:
        return len(self.hidden_dims)

    @property
    def sparsity(self) -> SparsityConfig:
        return SparsityConfig(rho=self.rho, beta=self.beta, eps=self.eps)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden_dims"] = list(self.hidden_dims)
        d["num_layers"] = self.num_layers
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "StackConfig":
        data = dict(data)
        num_layers = data.pop("num_layers", None)
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown StackConfig field(s): {sorted(unknown)}")
        cfg = cls(**data)
        if num_layers is not None and num_layers != cfg.num_layers:
            raise ValueError(
                f"num_layers={num_layers} disagrees with hidden_dims of length {cfg.num_layers}"
            )
        return cfg

    def replace(self, **changes) -> "StackConfig":
        return replace(self, **changes)


@dataclass
class StackedModel:
    layers: list[AutoEncoderParams]
    config: StackConfig = field(default_factory=StackConfig)

    def __post_init__(self):
        if len(self.layers) != self.config.num_layers:
            raise ValueError(f"model has {len(self.layers)} layers, config expects {self.config.num_layers}")
        expected_in = self.config.input_dim
        for m, (layer, hid) in enumerate(zip(self.layers, self.config.hidden_dims)):
            if layer.input_dim != expected_in or layer.hidden_dim != hid:
                raise ValueError(
                    f"layer {m} maps {layer.input_dim}->{layer.hidden_dim}, expected {expected_in}->{hid}"
                )
            expected_in = hid

    def copy(self) -> "StackedModel":
        return StackedModel([layer.copy() for layer in self.layers], self.config)

    def equals(self, other: "StackedModel") -> bool:
        return (
            self.config == other.config
            and len(self.layers) == len(other.layers)
            and all(a.equals(b) for a, b in zip(self.layers, other.layers))
        )


def init_stack(config: StackConfig) -> StackedModel:
    rng = np.random.default_rng(config.seed)
    layers = []
    in_dim = config.input_dim
    for hid in config.hidden_dims:
        layers.append(init_autoencoder(in_dim, hid, rng))
        in_dim = hid
    return StackedModel(layers, config)


def _check_batch(model: StackedModel, batch) -> np.ndarray:
    xs = np.asarray(batch, dtype=np.float64)
    if xs.ndim == 2:
        xs = xs[None]
    if xs.ndim != 3 or xs.shape[0] == 0 or xs.shape[1] == 0:
        raise ValueError(f"expected a non-empty batch of sequences (K, T, d), got shape {xs.shape}")
    if xs.shape[2] != model.config.input_dim:
        raise ValueError(f"feature dimension {xs.shape[2]} does not match input_dim {model.config.input_dim}")
    return xs


def _encode_up(layer: AutoEncoderParams, xs: np.ndarray) -> np.ndarray:
    hs, _, _, _ = encode_batch(layer, xs)
    return hs


def layer_inputs(model: StackedModel, m: int, x_seq) -> np.ndarray:
    """Inputs seen by layer ``m``: the raw clip for m = 0, else the hidden states below.

    Accepts one sequence (T, d) or a batch (K, T, d) and returns the same rank.
    """
    if not 0 <= m < model.config.num_layers:
        raise IndexError(f"layer index {m} out of range for a {model.config.num_layers}-layer model")
    single = np.ndim(x_seq) == 2
    xs = _check_batch(model, x_seq)
    for layer in model.layers[:m]:
        xs = _encode_up(layer, xs)
    return xs[0] if single else xs


def layer_losses(model: StackedModel, batch) -> np.ndarray:
    """Per-layer, per-sequence reconstruction losses, shape (M, K)."""
    xs = _check_batch(model, batch)
    out = []
    for layer in model.layers:
        hs, c_T, h_T, _ = encode_batch(layer, xs)
        ys, _, _ = decode_batch(layer, c_T, h_T, xs.shape[1])
        out.append(reconstruction_losses(xs, ys))
        xs = hs
    return np.array(out)


def stack_scores(model: StackedModel, batch) -> np.ndarray:
    """Raw error for each clip in a batch: the mean of its per-layer losses."""
    return layer_losses(model, batch).mean(axis=0)


def stack_score(model: StackedModel, x_seq) -> float:
    x = np.asarray(x_seq, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError(f"expected one sequence of shape (T, d), got shape {x.shape}")
    return float(stack_scores(model, x[None])[0])


def _train_layer(layer, xs, cfg: StackConfig, *, lr, batch_size, epochs, rng, on_epoch=None, index=0):
    sparsity = cfg.sparsity
    n = xs.shape[0]
    for epoch in range(epochs):
        order = rng.permutation(n) if rng is not None else np.arange(n)
        total = 0.0
        for start in range(0, n, batch_size):
            batch = xs[order[start:start + batch_size]]
            loss, grads = loss_and_gradients(layer, batch, sparsity)
            if cfg.grad_clip is not None:
                grads = clip_gradients(grads, cfg.grad_clip)
            layer = sgd_update(layer, grads, lr)
            total += loss
        if on_epoch is not None:
            on_epoch(index, epoch, total / n)
    return layer


def greedy_train(
    model: StackedModel,
    dataset,
    config: Optional[StackConfig] = None,
    on_epoch: Optional[EpochCallback] = None,
) -> StackedModel:
    """Offline greedy layer-wise training with minibatch SGD.

    Each layer sees a fresh seeded shuffle every epoch; the last partial
    minibatch is kept. ``on_epoch`` receives the mean per-sequence objective
    accumulated during the epoch.
    """
    cfg = config or model.config
    xs = _check_batch(model, dataset)
    layers = list(model.layers)
    for m in range(len(layers)):
        rng = np.random.default_rng([cfg.seed, m])
        layers[m] = _train_layer(
            layers[m], xs, cfg,
            lr=cfg.lr_offline, batch_size=cfg.batch_offline, epochs=cfg.epochs_offline,
            rng=rng, on_epoch=on_epoch, index=m,
        )
        xs = _encode_up(layers[m], xs)
    return StackedModel(layers, model.config)


def online_update(model: StackedModel, chunk_clips, config: Optional[StackConfig] = None) -> StackedModel:
    """Adapt the stack to one chunk of clips.

    Runs ``online_update_epochs`` bottom-up passes; each pass gives every layer
    one full-batch gradient step at ``lr_online``.
    """
    cfg = config or model.config
    xs0 = _check_batch(model, chunk_clips)
    layers = list(model.layers)
    for _ in range(cfg.online_update_epochs):
        xs = xs0
        for m in range(len(layers)):
            layers[m] = _train_layer(
                layers[m], xs, cfg,
                lr=cfg.lr_online, batch_size=xs.shape[0], epochs=1, rng=None,
            )
            xs = _encode_up(layers[m], xs)
    return StackedModel(layers, model.config)


def mean_context_activation(model: StackedModel, batch, m: int = 0) -> np.ndarray:
    """Batch-mean activation (h_T + 1) / 2 of layer ``m``'s encoder."""
    xs = layer_inputs(model, m, _check_batch(model, batch))
    _, _, h_T, _ = encode_batch(model.layers[m], xs)
    return mean_activation(h_T)
