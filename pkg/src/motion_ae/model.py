"""A single sparse LSTM auto-encoder layer.

The encoder LSTM reads a clip of T feature vectors from a zero state. Its final
memory/hidden pair (the motion context) seeds an unconditioned decoder LSTM
that consumes zero inputs and emits, through a linear read-out, the clip in
reverse order. Training minimises the summed mean-squared reconstruction error
plus a KL sparsity penalty on the batch-mean of the encoder's final hidden
state. Gradients are derived by hand (backpropagation through time) and are
checked against finite differences in the test suite.

Arrays are float64. Batched internals use shape ``(K, T, d)`` for K sequences
of length T; the public single-sequence helpers take ``(T, d)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

import numpy as np
from scipy.special import expit

LSTM_FIELDS = (
    "w_ix", "w_fx", "w_ox", "w_cx",
    "phi_ih", "phi_fh", "phi_oh", "phi_ch",
    "b_i", "b_f", "b_o", "b_c",
)


@dataclass
class LstmParams:
    w_ix: np.ndarray
    w_fx: np.ndarray
    w_ox: np.ndarray
    w_cx: np.ndarray
    phi_ih: np.ndarray
    phi_fh: np.ndarray
    phi_oh: np.ndarray
    phi_ch: np.ndarray
    b_i: np.ndarray
    b_f: np.ndarray
    b_o: np.ndarray
    b_c: np.ndarray

    def __post_init__(self):
        hidden, inp = np.shape(self.w_ix)
        for name in LSTM_FIELDS:
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            setattr(self, name, arr)
            if name.startswith("w_"):
                expected = (hidden, inp)
            elif name.startswith("phi_"):
                expected = (hidden, hidden)
            else:
                expected = (hidden,)
            if arr.shape != expected:
                raise ValueError(f"LstmParams.{name} has shape {arr.shape}, expected {expected}")

    @property
    def input_dim(self) -> int:
        return self.w_ix.shape[1]

    @property
    def hidden_dim(self) -> int:
        return self.w_ix.shape[0]

    @classmethod
    def zeros(cls, input_dim: int, hidden_dim: int) -> "LstmParams":
        shapes = _lstm_shapes(input_dim, hidden_dim)
        return cls(**{name: np.zeros(shapes[name]) for name in LSTM_FIELDS})


@dataclass(frozen=True)
class LstmState:
    c: np.ndarray
    h: np.ndarray


@dataclass
class AutoEncoderParams:
    """Trainable tensors of one encoder/decoder pair plus the linear read-out."""

    encoder: LstmParams
    decoder: LstmParams
    w_yh: np.ndarray
    b_h: np.ndarray

    def __post_init__(self):
        self.w_yh = np.asarray(self.w_yh, dtype=np.float64)
        self.b_h = np.asarray(self.b_h, dtype=np.float64)
        d, hid = self.encoder.input_dim, self.encoder.hidden_dim
        if self.decoder.hidden_dim != hid or self.decoder.input_dim != d:
            raise ValueError(
                f"decoder shape ({self.decoder.input_dim}->{self.decoder.hidden_dim}) "
                f"does not mirror encoder ({d}->{hid})"
            )
        if self.w_yh.shape != (d, hid):
            raise ValueError(f"w_yh has shape {self.w_yh.shape}, expected {(d, hid)}")
        if self.b_h.shape != (d,):
            raise ValueError(f"b_h has shape {self.b_h.shape}, expected {(d,)}")

    @property
    def input_dim(self) -> int:
        return self.encoder.input_dim

    @property
    def hidden_dim(self) -> int:
        return self.encoder.hidden_dim

    def named_arrays(self) -> Iterator[tuple[str, np.ndarray]]:
        """Yield ``(dotted_name, array)`` in a fixed order shared by every instance."""
        for part in ("encoder", "decoder"):
            lstm = getattr(self, part)
            for name in LSTM_FIELDS:
                yield f"{part}.{name}", getattr(lstm, name)
        yield "w_yh", self.w_yh
        yield "b_h", self.b_h

    @classmethod
    def from_named_arrays(cls, arrays: dict[str, np.ndarray]) -> "AutoEncoderParams":
        enc = LstmParams(**{n: arrays[f"encoder.{n}"] for n in LSTM_FIELDS})
        dec = LstmParams(**{n: arrays[f"decoder.{n}"] for n in LSTM_FIELDS})
        return cls(enc, dec, arrays["w_yh"], arrays["b_h"])

    def map(self, fn, *others: "AutoEncoderParams") -> "AutoEncoderParams":
        """Apply ``fn`` entry-array-wise across this and congruent parameter sets."""
        other_maps = [dict(o.named_arrays()) for o in others]
        out = {}
        for name, arr in self.named_arrays():
            rest = []
            for m in other_maps:
                if m[name].shape != arr.shape:
                    raise ValueError(f"shape mismatch for {name}: {arr.shape} vs {m[name].shape}")
                rest.append(m[name])
            out[name] = fn(arr, *rest)
        return AutoEncoderParams.from_named_arrays(out)

    def copy(self) -> "AutoEncoderParams":
        return self.map(np.copy)

    def flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for _, a in self.named_arrays()])

    def with_flat(self, vec: np.ndarray, share: bool = False) -> "AutoEncoderParams":
        """Unflatten ``vec``; with ``share`` the arrays are views into ``vec``."""
        if share and (not isinstance(vec, np.ndarray) or vec.dtype != np.float64 or not vec.flags.c_contiguous):
            raise ValueError("share=True needs a contiguous float64 array")
        out, pos = {}, 0
        for name, arr in self.named_arrays():
            piece = vec[pos:pos + arr.size]
            out[name] = (piece if share else np.array(piece, dtype=np.float64)).reshape(arr.shape)
            pos += arr.size
        if pos != len(vec):
            raise ValueError(f"flat vector has {len(vec)} entries, expected {pos}")
        return AutoEncoderParams.from_named_arrays(out)

    def equals(self, other: "AutoEncoderParams") -> bool:
        """Bitwise equality of every array."""
        b = dict(other.named_arrays())
        return all(
            name in b and a.shape == b[name].shape and a.tobytes() == b[name].tobytes()
            for name, a in self.named_arrays()
        )


# Gradients share the parameter container: one array per parameter, same shape.
Gradients = AutoEncoderParams


@dataclass(frozen=True)
class SparsityConfig:
    rho: float = 0.05
    beta: float = 0.1
    eps: float = 1e-6

    def __post_init__(self):
        if not 0.0 < self.rho < 1.0:
            raise ValueError(f"rho must lie in (0, 1), got {self.rho}")
        if self.beta < 0.0:
            raise ValueError(f"beta must be >= 0, got {self.beta}")
        if not 0.0 < self.eps < self.rho:
            raise ValueError(f"eps must lie in (0, rho), got {self.eps}")


def _lstm_shapes(input_dim, hidden_dim):
    shapes = {}
    for name in LSTM_FIELDS:
        if name.startswith("w_"):
            shapes[name] = (hidden_dim, input_dim)
        elif name.startswith("phi_"):
            shapes[name] = (hidden_dim, hidden_dim)
        else:
            shapes[name] = (hidden_dim,)
    return shapes


def init_lstm(input_dim: int, hidden_dim: int, rng: np.random.Generator) -> LstmParams:
    """Uniform init on [-s, s], s = 1/sqrt(fan_in).

    Input matrices use fan_in = input_dim; recurrent matrices and biases use
    fan_in = hidden_dim.
    """
    arrays = {}
    for name, shape in _lstm_shapes(input_dim, hidden_dim).items():
        fan_in = input_dim if name.startswith("w_") else hidden_dim
        s = 1.0 / np.sqrt(fan_in)
        arrays[name] = rng.uniform(-s, s, size=shape)
    return LstmParams(**arrays)


def init_autoencoder(input_dim: int, hidden_dim: int, rng: np.random.Generator) -> AutoEncoderParams:
    if input_dim < 1 or hidden_dim < 1:
        raise ValueError(f"dimensions must be >= 1, got input_dim={input_dim}, hidden_dim={hidden_dim}")
    encoder = init_lstm(input_dim, hidden_dim, rng)
    decoder = init_lstm(input_dim, hidden_dim, rng)
    s = 1.0 / np.sqrt(hidden_dim)
    w_yh = rng.uniform(-s, s, size=(input_dim, hidden_dim))
    b_h = rng.uniform(-s, s, size=input_dim)
    return AutoEncoderParams(encoder, decoder, w_yh, b_h)


# ---------------------------------------------------------------------------
# Forward pass


def _input_terms(p: LstmParams, x):
    """Input projection plus bias for the i, f, o and candidate pre-activations."""
    return (x @ p.w_ix.T + p.b_i, x @ p.w_fx.T + p.b_f, x @ p.w_ox.T + p.b_o, x @ p.w_cx.T + p.b_c)


def _gates(p: LstmParams, terms, h_prev):
    zi, zf, zo, zc = terms
    i = expit(zi + h_prev @ p.phi_ih.T)
    f = expit(zf + h_prev @ p.phi_fh.T)
    o = expit(zo + h_prev @ p.phi_oh.T)
    g = np.tanh(zc + h_prev @ p.phi_ch.T)
    return i, f, o, g


def lstm_step(params: LstmParams, x, prev: LstmState) -> LstmState:
    """One LSTM transition. ``x`` may be a vector or a ``(K, d)`` batch."""
    x = np.asarray(x, dtype=np.float64)
    c_prev = np.asarray(prev.c, dtype=np.float64)
    h_prev = np.asarray(prev.h, dtype=np.float64)
    if x.shape[-1] != params.input_dim:
        raise ValueError(f"input has dimension {x.shape[-1]}, expected {params.input_dim}")
    if c_prev.shape[-1] != params.hidden_dim or h_prev.shape[-1] != params.hidden_dim:
        raise ValueError(
            f"state dimensions ({c_prev.shape[-1]}, {h_prev.shape[-1]}) "
            f"do not match hidden_dim {params.hidden_dim}"
        )
    i, f, o, g = _gates(params, _input_terms(params, x), h_prev)
    c = i * g + f * c_prev
    return LstmState(c=c, h=o * np.tanh(c))


def _lstm_forward(p: LstmParams, xs, h0, c0):
    """Run over ``xs`` of shape (K, T, d). Returns hidden states (K, T, H) and a cache."""
    K, T, _ = xs.shape
    H = p.hidden_dim
    hs = np.empty((K, T, H))
    cache = {"xs": xs, "h_prev": [], "c_prev": [], "i": [], "f": [], "o": [], "g": [], "tc": []}
    h, c = h0, c0
    # all time steps at once; the recurrent part has to stay inside the loop
    terms = _input_terms(p, xs.reshape(K * T, -1))
    terms = [z.reshape(K, T, H) for z in terms]
    for t in range(T):
        i, f, o, g = _gates(p, [z[:, t] for z in terms], h)
        cache["h_prev"].append(h)
        cache["c_prev"].append(c)
        c = i * g + f * c
        tc = np.tanh(c)
        h = o * tc
        for key, val in (("i", i), ("f", f), ("o", o), ("g", g), ("tc", tc)):
            cache[key].append(val)
        hs[:, t] = h
    cache["c_last"] = c
    return hs, cache


def _lstm_backward(p: LstmParams, cache, dhs, dh_last, dc_last):
    """Backpropagate through a forward run.

    ``dhs`` holds the loss gradient w.r.t. every emitted hidden state (K, T, H);
    ``dh_last``/``dc_last`` are extra gradients on the final state. Returns the
    parameter gradients and the gradients w.r.t. the inputs and initial state.
    """
    xs = cache["xs"]
    T = xs.shape[1]
    grads = {name: np.zeros_like(getattr(p, name)) for name in LSTM_FIELDS}
    dxs = np.zeros_like(xs)
    dh_next = dh_last
    dc_next = dc_last
    for t in reversed(range(T)):
        i, f, o, g, tc = (cache[k][t] for k in ("i", "f", "o", "g", "tc"))
        h_prev, c_prev, x = cache["h_prev"][t], cache["c_prev"][t], xs[:, t]
        dh = dhs[:, t] + dh_next
        do = dh * tc
        dc = dc_next + dh * o * (1.0 - tc * tc)
        dzi = dc * g * i * (1.0 - i)
        dzf = dc * c_prev * f * (1.0 - f)
        dzo = do * o * (1.0 - o)
        dzg = dc * i * (1.0 - g * g)
        dh_next = np.zeros_like(h_prev)
        dx = np.zeros_like(x)
        for gate, dz in (("i", dzi), ("f", dzf), ("o", dzo), ("c", dzg)):
            w = getattr(p, f"w_{gate}x")
            phi = getattr(p, f"phi_{gate}h")
            grads[f"w_{gate}x"] += dz.T @ x
            grads[f"phi_{gate}h"] += dz.T @ h_prev
            grads[f"b_{gate}"] += dz.sum(axis=0)
            dx += dz @ w
            dh_next += dz @ phi
        dxs[:, t] = dx
        dc_next = dc * f
    return LstmParams(**grads), dxs, dh_next, dc_next


def _as_batch(x_seqs, input_dim=None):
    arr = np.asarray(x_seqs, dtype=np.float64)
    if arr.ndim != 3:
        raise ValueError(f"expected a batch of shape (K, T, d), got shape {arr.shape}")
    if arr.shape[0] == 0 or arr.shape[1] == 0:
        raise ValueError("batch must contain at least one non-empty sequence")
    if input_dim is not None and arr.shape[2] != input_dim:
        raise ValueError(f"sequence vectors have dimension {arr.shape[2]}, expected {input_dim}")
    return arr


def _as_sequence(x_seq, input_dim):
    arr = np.asarray(x_seq, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] == 0:
        raise ValueError(f"expected a non-empty sequence of shape (T, d), got shape {arr.shape}")
    if arr.shape[1] != input_dim:
        raise ValueError(f"sequence vectors have dimension {arr.shape[1]}, expected {input_dim}")
    return arr


def encode_batch(params: AutoEncoderParams, xs):
    """Encoder over a batch. Returns (hidden states (K, T, H), final c, final h, cache)."""
    xs = _as_batch(xs, params.input_dim)
    K = xs.shape[0]
    zero = np.zeros((K, params.hidden_dim))
    hs, cache = _lstm_forward(params.encoder, xs, zero, zero)
    return hs, cache["c_last"], hs[:, -1], cache


def decode_batch(params: AutoEncoderParams, c0, h0, steps: int):
    """Unconditioned decoder: zero inputs, initial state = context. Returns (Y, hs, cache)."""
    if steps < 1:
        raise ValueError(f"steps must be >= 1, got {steps}")
    K = c0.shape[0]
    zeros = np.zeros((K, steps, params.input_dim))
    hs, cache = _lstm_forward(params.decoder, zeros, h0, c0)
    ys = hs @ params.w_yh.T + params.b_h
    return ys, hs, cache


def encode(params: AutoEncoderParams, x_seq):
    """Encode one clip. Returns the hidden-state sequence (T, H) and the final state."""
    x = _as_sequence(x_seq, params.input_dim)
    hs, c, h, _ = encode_batch(params, x[None])
    return hs[0], LstmState(c=c[0], h=h[0])


def decode(params: AutoEncoderParams, context: LstmState, steps: int):
    """Decode a context into ``steps`` output vectors, in reversed clip order."""
    c = np.asarray(context.c, dtype=np.float64)
    h = np.asarray(context.h, dtype=np.float64)
    if c.shape != (params.hidden_dim,) or h.shape != (params.hidden_dim,):
        raise ValueError(
            f"context shapes {c.shape}/{h.shape} do not match hidden_dim {params.hidden_dim}"
        )
    ys, _, _ = decode_batch(params, c[None], h[None], steps)
    return ys[0]


# ---------------------------------------------------------------------------
# Losses


def reconstruction_losses(xs, ys) -> np.ndarray:
    """Per-sequence loss (1/2T) sum_t ||x_t - y_{T+1-t}||^2 for (K, T, d) batches."""
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    if xs.shape != ys.shape:
        raise ValueError(f"input shape {xs.shape} and reconstruction shape {ys.shape} differ")
    T = xs.shape[1]
    diff = xs - ys[:, ::-1]
    return (diff * diff).sum(axis=(1, 2)) / (2.0 * T)


def reconstruction_loss(x_seq, y_seq) -> float:
    """Loss of one clip; ``y_seq`` is the decoder output, which runs backwards in time."""
    x = np.asarray(x_seq, dtype=np.float64)
    y = np.asarray(y_seq, dtype=np.float64)
    if x.ndim != 2 or x.shape != y.shape:
        raise ValueError(f"sequence shapes {x.shape} and {y.shape} must match as (T, d)")
    if x.shape[0] == 0:
        raise ValueError("sequences must be non-empty")
    return float(reconstruction_losses(x[None], y[None])[0])


def _rho_hat(contexts, cfg: SparsityConfig):
    raw = ((np.asarray(contexts) + 1.0) / 2.0).mean(axis=0)
    return raw, np.clip(raw, cfg.eps, 1.0 - cfg.eps)


def mean_activation(contexts) -> np.ndarray:
    """Batch-mean of final hidden states mapped into (0, 1) via (h + 1) / 2."""
    return ((np.asarray(contexts, dtype=np.float64) + 1.0) / 2.0).mean(axis=0)


def sparsity_penalty(contexts, cfg: SparsityConfig) -> float:
    """Sum over hidden units of KL(rho || rho_hat_d)."""
    contexts = np.asarray(contexts, dtype=np.float64)
    if contexts.ndim != 2 or contexts.shape[0] == 0:
        raise ValueError(f"expected a non-empty (K, D) batch of contexts, got shape {contexts.shape}")
    _, rho_hat = _rho_hat(contexts, cfg)
    rho = cfg.rho
    kl = rho * np.log(rho / rho_hat) + (1.0 - rho) * np.log((1.0 - rho) / (1.0 - rho_hat))
    return float(kl.sum())


def _forward(params, xs):
    hs_enc, c_T, h_T, enc_cache = encode_batch(params, xs)
    ys, hs_dec, dec_cache = decode_batch(params, c_T, h_T, xs.shape[1])
    return hs_enc, h_T, ys, hs_dec, enc_cache, dec_cache


def total_loss(params: AutoEncoderParams, batch, cfg: SparsityConfig) -> float:
    xs = _as_batch(batch, params.input_dim)
    _, h_T, ys, _, _, _ = _forward(params, xs)
    loss = reconstruction_losses(xs, ys).sum()
    if cfg.beta:
        loss += cfg.beta * sparsity_penalty(h_T, cfg)
    return float(loss)


def loss_and_gradients(params: AutoEncoderParams, batch, cfg: SparsityConfig):
    """Objective value and its exact gradient in one forward/backward sweep."""
    xs = _as_batch(batch, params.input_dim)
    K, T, _ = xs.shape
    _, h_T, ys, hs_dec, enc_cache, dec_cache = _forward(params, xs)
    loss = reconstruction_losses(xs, ys).sum()

    # d/dy of (1/2T)||x_t - y_{T+1-t}||^2, with y indexed in decoder order
    dys = (ys - xs[:, ::-1]) / T
    d_w_yh = np.einsum("ktd,kth->dh", dys, hs_dec)
    d_b_h = dys.sum(axis=(0, 1))
    dhs_dec = dys @ params.w_yh

    zero = np.zeros((K, params.hidden_dim))
    g_dec, _, dh0, dc0 = _lstm_backward(params.decoder, dec_cache, dhs_dec, zero, zero)

    dh_T = dh0
    if cfg.beta:
        loss += cfg.beta * sparsity_penalty(h_T, cfg)
        raw, rho_hat = _rho_hat(h_T, cfg)
        dkl = -cfg.rho / rho_hat + (1.0 - cfg.rho) / (1.0 - rho_hat)
        # clamp is flat outside (eps, 1 - eps)
        dkl = np.where((raw > cfg.eps) & (raw < 1.0 - cfg.eps), dkl, 0.0)
        dh_T = dh_T + cfg.beta * dkl / (2.0 * K)

    enc_dhs = np.zeros((K, T, params.hidden_dim))
    g_enc, _, _, _ = _lstm_backward(params.encoder, enc_cache, enc_dhs, dh_T, dc0)
    return float(loss), AutoEncoderParams(g_enc, g_dec, d_w_yh, d_b_h)


def backward(params: AutoEncoderParams, batch, cfg: SparsityConfig) -> Gradients:
    """Exact gradient of ``total_loss`` by backpropagation through time."""
    return loss_and_gradients(params, batch, cfg)[1]


# ---------------------------------------------------------------------------
# Updates


def clip_gradients(grads: Gradients, limit: float) -> Gradients:
    """Elementwise clip to [-limit, limit]."""
    if limit <= 0:
        raise ValueError(f"clip limit must be positive, got {limit}")
    return grads.map(lambda g: np.clip(g, -limit, limit))


def sgd_update(params: AutoEncoderParams, grads: Gradients, lr: float) -> AutoEncoderParams:
    """Plain SGD step; returns a new parameter set."""
    if lr < 0:
        raise ValueError(f"learning rate must be >= 0, got {lr}")
    return params.map(lambda p, g: p - lr * g, grads)


def finite_difference_gradients(params: AutoEncoderParams, batch, cfg: SparsityConfig, step: float = 1e-5):
    """Central-difference estimate of every gradient entry (slow; for verification)."""
    base = params.flat()
    work = params.with_flat(base, share=True)  # perturb base in place
    est = np.empty_like(base)
    for j in range(base.size):
        orig = base[j]
        base[j] = orig + step
        up = total_loss(work, batch, cfg)
        base[j] = orig - step
        down = total_loss(work, batch, cfg)
        base[j] = orig
        est[j] = (up - down) / (2.0 * step)
    return params.with_flat(est)

