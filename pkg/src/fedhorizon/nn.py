"""From-scratch attention-enhanced LSTM binary classifier.

Architecture: single-head scaled dot-product self-attention over the 6
time steps (with residual connection), three LSTM layers of 16 units,
each followed by batch normalization and dropout, a dense layer to 8
units with batch normalization and dropout, and a single sigmoid output.

All gradients are exact (verified against finite differences); parameters
round-trip bit-exactly through a flat, documented vector layout used as
the federated exchange format.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field, asdict

import numpy as np

BN_EPS = 1e-5
BN_MOMENTUM = 0.1
CLAMP_EPS = 1e-7
GATE_ORDER = "ifgo"  # input, forget, cell, output


class ModelError(ValueError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    n_features: int  # F: 26, or 27 with the time channel
    lstm_units: int = 16
    lstm_layers: int = 3
    dense_units: int = 8
    dropout: float = 0.2
    attention_heads: int = 1
    seed: int = 0
    dtype: str = "float64"

    def __post_init__(self):
        if min(self.n_features, self.lstm_units, self.lstm_layers,
               self.dense_units, self.attention_heads) < 1:
            raise ModelError("all size fields must be positive")
        if not (0.0 <= self.dropout < 1.0):
            raise ModelError(f"dropout {self.dropout} outside [0, 1)")
        if self.attention_heads != 1:
            raise ModelError("only single-head attention is supported")

    @property
    def np_dtype(self):
        return np.dtype(self.dtype)


def param_layout(config: ModelConfig) -> list[tuple[str, tuple[int, ...]]]:
    """Ordered (name, shape) pairs defining the flat ParamVector layout.

    Order: attention q/k/v projections, then per LSTM layer the input
    weights, recurrent weights, gate bias (gates ordered i, f, g, o) and
    batch-norm scale/shift, then dense layer, its batch-norm, and the
    output neuron.
    """
    F, H, D = config.n_features, config.lstm_units, config.dense_units
    layout = [
        ("attn_wq", (F, F)), ("attn_bq", (F,)),
        ("attn_wk", (F, F)), ("attn_bk", (F,)),
        ("attn_wv", (F, F)), ("attn_bv", (F,)),
    ]
    for layer in range(config.lstm_layers):
        in_dim = F if layer == 0 else H
        layout += [
            (f"lstm{layer}_wx", (in_dim, 4 * H)),
            (f"lstm{layer}_wh", (H, 4 * H)),
            (f"lstm{layer}_b", (4 * H,)),
            (f"bn{layer}_gamma", (H,)),
            (f"bn{layer}_beta", (H,)),
        ]
    layout += [
        ("dense_w", (H, D)), ("dense_b", (D,)),
        ("bn_dense_gamma", (D,)), ("bn_dense_beta", (D,)),
        ("out_w", (D, 1)), ("out_b", (1,)),
    ]
    return layout


def buffer_layout(config: ModelConfig) -> list[tuple[str, tuple[int, ...]]]:
    """Batch-norm running statistics (non-trainable state)."""
    H, D = config.lstm_units, config.dense_units
    layout = []
    for layer in range(config.lstm_layers):
        layout += [(f"bn{layer}_mean", (H,)), (f"bn{layer}_var", (H,))]
    layout += [("bn_dense_mean", (D,)), ("bn_dense_var", (D,))]
    return layout


def n_params(config: ModelConfig) -> int:
    return sum(int(np.prod(shape)) for _, shape in param_layout(config))


def params_to_vector(params: dict[str, np.ndarray], layout) -> np.ndarray:
    return np.concatenate([params[name].ravel() for name, _ in layout])


def vector_to_params(vector: np.ndarray, layout) -> dict[str, np.ndarray]:
    expected = sum(int(np.prod(shape)) for _, shape in layout)
    if vector.shape != (expected,):
        raise ModelError(f"vector length {vector.shape} != expected ({expected},)")
    params = {}
    offset = 0
    for name, shape in layout:
        size = int(np.prod(shape))
        params[name] = vector[offset : offset + size].reshape(shape).copy()
        offset += size
    return params


def init_params(config: ModelConfig, seed: int | None = None) -> dict[str, np.ndarray]:
    """Fan-in scaled uniform init; forget-gate bias 1, batch-norm scale 1."""
    rng = np.random.default_rng(config.seed if seed is None else seed)
    H = config.lstm_units
    params = {}
    for name, shape in param_layout(config):
        if name.endswith(("gamma",)):
            arr = np.ones(shape)
        elif name.endswith(("beta", "_b", "bq", "bk", "bv")):
            arr = np.zeros(shape)
            if "_b" in name and name.startswith("lstm"):
                arr[H : 2 * H] = 1.0  # forget gate
        else:
            limit = np.sqrt(1.0 / shape[0])
            arr = rng.uniform(-limit, limit, size=shape)
        params[name] = arr.astype(config.np_dtype)
    return params


def init_buffers(config: ModelConfig) -> dict[str, np.ndarray]:
    buffers = {}
    for name, shape in buffer_layout(config):
        init = np.ones if name.endswith("var") else np.zeros
        buffers[name] = init(shape, dtype=config.np_dtype)
    return buffers


@dataclass
class ForwardState:
    """Everything backward needs, cached by a train-mode forward pass."""

    X: np.ndarray
    q: np.ndarray
    k: np.ndarray
    v: np.ndarray
    attn: np.ndarray  # (B, T, T) softmax weights, rows sum to 1
    layers: list = field(default_factory=list)  # per-LSTM-layer caches
    dense_in: np.ndarray | None = None
    dense_pre: np.ndarray | None = None
    dense_bn: dict | None = None
    dense_mask: np.ndarray | None = None
    logits: np.ndarray | None = None
    probs: np.ndarray | None = None


def _softmax(x, axis=-1):
    shifted = x - x.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=axis, keepdims=True)


def _sigmoid(x):
    # branch-free stable form: exp is only ever taken of -|x|
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def attention_forward(params, X):
    """Scaled dot-product self-attention context (pre-residual).

    Returns (context, weights): context = softmax(QK^T / sqrt(F)) V.
    """
    q = X @ params["attn_wq"] + params["attn_bq"]
    k = X @ params["attn_wk"] + params["attn_bk"]
    v = X @ params["attn_wv"] + params["attn_bv"]
    scale = 1.0 / np.sqrt(X.shape[-1])
    attn = _softmax((q @ k.transpose(0, 2, 1)) * scale)
    context = attn @ v
    return context, (q, k, v, attn)


def _bn_forward(x, gamma, beta, running_mean, running_var, train, axes):
    if train:
        mu = x.mean(axis=axes)
        var = x.var(axis=axes)
        # running stats updated in place by the caller
    else:
        mu, var = running_mean, running_var
    inv_std = 1.0 / np.sqrt(var + BN_EPS)
    xhat = (x - mu) * inv_std
    return gamma * xhat + beta, {"xhat": xhat, "mu": mu, "var": var,
                                 "inv_std": inv_std, "axes": axes}


def _bn_backward(dy, gamma, cache):
    axes = cache["axes"]
    n = np.prod([dy.shape[a] for a in (axes if isinstance(axes, tuple) else (axes,))])
    xhat, inv_std = cache["xhat"], cache["inv_std"]
    dgamma = (dy * xhat).sum(axis=axes)
    dbeta = dy.sum(axis=axes)
    dx = (gamma * inv_std) * (dy - dbeta / n - xhat * (dgamma / n))
    return dx, dgamma, dbeta


def forward(params, X, mode, rng=None, buffers=None, config: ModelConfig = None):
    """Run the network; returns (probabilities (B,), ForwardState).

    Train mode uses batch statistics (updating the running stats in
    ``buffers`` with momentum) and fresh dropout masks from ``rng``; eval
    mode uses running statistics and no dropout, and mutates nothing.
    """
    if config is None:
        raise ModelError("config is required")
    if X.ndim != 3:
        raise ModelError(f"expected (B, T, F) input, got shape {X.shape}")
    if not np.isfinite(X).all():
        raise ModelError("non-finite values in input batch")
    if mode not in ("train", "eval"):
        raise ModelError(f"unknown mode {mode!r}")
    train = mode == "train"
    B, T, F = X.shape
    if F != config.n_features:
        raise ModelError(f"input has {F} features, model expects {config.n_features}")
    if train and B < 2:
        raise ModelError("train mode needs batch size >= 2 (batch-norm variance)")
    if train and rng is None and config.dropout > 0:
        raise ModelError("train mode requires an rng for dropout")
    if buffers is None:
        buffers = init_buffers(config)
    H = config.lstm_units
    keep = 1.0 - config.dropout

    context, (q, k, v, attn) = attention_forward(params, X)
    layer_in = context + X  # residual

    state = ForwardState(X=X, q=q, k=k, v=v, attn=attn)
    for layer in range(config.lstm_layers):
        wx = params[f"lstm{layer}_wx"]
        wh = params[f"lstm{layer}_wh"]
        b = params[f"lstm{layer}_b"]
        zx = layer_in @ wx + b  # (B, T, 4H), input contribution for all steps
        h = np.zeros((B, H), dtype=X.dtype)
        c = np.zeros((B, H), dtype=X.dtype)
        gates_i = np.empty((B, T, H), dtype=X.dtype)
        gates_f = np.empty_like(gates_i)
        gates_g = np.empty_like(gates_i)
        gates_o = np.empty_like(gates_i)
        cells = np.empty_like(gates_i)
        hs = np.empty_like(gates_i)
        for t in range(T):
            z = zx[:, t, :] + h @ wh
            s = _sigmoid(z)  # one vectorized call; the g block is discarded
            i_g = s[:, :H]
            f_g = s[:, H : 2 * H]
            g_g = np.tanh(z[:, 2 * H : 3 * H])
            o_g = s[:, 3 * H :]
            c = f_g * c + i_g * g_g
            h = o_g * np.tanh(c)
            gates_i[:, t], gates_f[:, t] = i_g, f_g
            gates_g[:, t], gates_o[:, t] = g_g, o_g
            cells[:, t], hs[:, t] = c, h
        normed, bn_cache = _bn_forward(
            hs, params[f"bn{layer}_gamma"], params[f"bn{layer}_beta"],
            buffers[f"bn{layer}_mean"], buffers[f"bn{layer}_var"],
            train, axes=(0, 1),
        )
        if train:
            buffers[f"bn{layer}_mean"] *= 1.0 - BN_MOMENTUM
            buffers[f"bn{layer}_mean"] += BN_MOMENTUM * bn_cache["mu"]
            buffers[f"bn{layer}_var"] *= 1.0 - BN_MOMENTUM
            buffers[f"bn{layer}_var"] += BN_MOMENTUM * bn_cache["var"]
        if train and config.dropout > 0:
            mask = (rng.random(normed.shape) < keep).astype(X.dtype) / keep
            out = normed * mask
        else:
            mask = None
            out = normed
        state.layers.append({
            "input": layer_in, "i": gates_i, "f": gates_f, "g": gates_g,
            "o": gates_o, "c": cells, "h": hs, "bn": bn_cache, "mask": mask,
        })
        layer_in = out

    u = layer_in[:, -1, :]  # final hidden state of the top LSTM layer
    dense_pre = u @ params["dense_w"] + params["dense_b"]
    dense_out, dense_bn = _bn_forward(
        dense_pre, params["bn_dense_gamma"], params["bn_dense_beta"],
        buffers["bn_dense_mean"], buffers["bn_dense_var"], train, axes=0,
    )
    if train:
        buffers["bn_dense_mean"] *= 1.0 - BN_MOMENTUM
        buffers["bn_dense_mean"] += BN_MOMENTUM * dense_bn["mu"]
        buffers["bn_dense_var"] *= 1.0 - BN_MOMENTUM
        buffers["bn_dense_var"] += BN_MOMENTUM * dense_bn["var"]
    if train and config.dropout > 0:
        dmask = (rng.random(dense_out.shape) < keep).astype(X.dtype) / keep
        dense_out = dense_out * dmask
    else:
        dmask = None

    logits = (dense_out @ params["out_w"] + params["out_b"]).ravel()
    probs = _sigmoid(logits)

    state.dense_in = u
    state.dense_pre = dense_pre
    state.dense_bn = dense_bn
    state.dense_mask = dmask
    state.dense_out = dense_out
    state.logits = logits
    state.probs = probs
    return probs, state


def loss(probs, labels, pos_weight: float = 1.0) -> float:
    """Mean weighted binary cross-entropy with probability clamping."""
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    if probs.shape != labels.shape:
        raise ModelError(f"shape mismatch: probs {probs.shape}, labels {labels.shape}")
    p = np.clip(probs, CLAMP_EPS, 1.0 - CLAMP_EPS)
    w = np.where(labels == 1.0, pos_weight, 1.0)
    terms = -w * (labels * np.log(p) + (1.0 - labels) * np.log(1.0 - p))
    return float(terms.mean())


def backward(params, state: ForwardState, labels, pos_weight: float = 1.0,
             config: ModelConfig = None):
    """Exact gradient of the mean BCE loss w.r.t. every parameter.

    Requires a state produced by a matching train-mode forward call.
    """
    if config is None:
        raise ModelError("config is required")
    if state.probs is None or len(state.layers) != config.lstm_layers:
        raise ModelError("stale or mismatched forward state")
    labels = np.asarray(labels, dtype=np.float64)
    if labels.shape != state.probs.shape:
        raise ModelError("labels do not match the forward batch")
    B = labels.shape[0]
    H = config.lstm_units

    p_raw = state.probs
    p = np.clip(p_raw, CLAMP_EPS, 1.0 - CLAMP_EPS)
    w = np.where(labels == 1.0, pos_weight, 1.0)
    dp = -w * (labels / p - (1.0 - labels) / (1.0 - p)) / B
    dp = np.where((p_raw > CLAMP_EPS) & (p_raw < 1.0 - CLAMP_EPS), dp, 0.0)
    dlogits = dp * p_raw * (1.0 - p_raw)

    grads = {}
    dlog = dlogits[:, None]
    grads["out_w"] = state.dense_out.T @ dlog
    grads["out_b"] = dlog.sum(axis=0)
    d_dense_out = dlog @ params["out_w"].T
    if state.dense_mask is not None:
        d_dense_out = d_dense_out * state.dense_mask
    d_dense_pre, dgamma, dbeta = _bn_backward(
        d_dense_out, params["bn_dense_gamma"], state.dense_bn)
    grads["bn_dense_gamma"] = dgamma
    grads["bn_dense_beta"] = dbeta
    grads["dense_w"] = state.dense_in.T @ d_dense_pre
    grads["dense_b"] = d_dense_pre.sum(axis=0)
    du = d_dense_pre @ params["dense_w"].T

    T = state.X.shape[1]
    d_layer_out = np.zeros_like(state.layers[-1]["h"])
    d_layer_out[:, -1, :] = du

    for layer in reversed(range(config.lstm_layers)):
        cache = state.layers[layer]
        d_out = d_layer_out
        if cache["mask"] is not None:
            d_out = d_out * cache["mask"]
        dh_seq, dgamma, dbeta = _bn_backward(
            d_out, params[f"bn{layer}_gamma"], cache["bn"])
        grads[f"bn{layer}_gamma"] = dgamma
        grads[f"bn{layer}_beta"] = dbeta

        wx = params[f"lstm{layer}_wx"]
        wh = params[f"lstm{layer}_wh"]
        x_in = cache["input"]
        i_g, f_g, g_g, o_g = cache["i"], cache["f"], cache["g"], cache["o"]
        cells = cache["c"]
        dz_all = np.empty((B, T, 4 * H), dtype=dh_seq.dtype)
        dh_next = np.zeros((B, H), dtype=dh_seq.dtype)
        dc_next = np.zeros((B, H), dtype=dh_seq.dtype)
        for t in reversed(range(T)):
            dh = dh_seq[:, t] + dh_next
            tanh_c = np.tanh(cells[:, t])
            do = dh * tanh_c
            dc = dh * o_g[:, t] * (1.0 - tanh_c**2) + dc_next
            c_prev = cells[:, t - 1] if t > 0 else np.zeros_like(dc)
            di = dc * g_g[:, t]
            dg = dc * i_g[:, t]
            df = dc * c_prev
            dz = dz_all[:, t]
            dz[:, :H] = di * i_g[:, t] * (1.0 - i_g[:, t])
            dz[:, H : 2 * H] = df * f_g[:, t] * (1.0 - f_g[:, t])
            dz[:, 2 * H : 3 * H] = dg * (1.0 - g_g[:, t] ** 2)
            dz[:, 3 * H :] = do * o_g[:, t] * (1.0 - o_g[:, t])
            dh_next = dz @ wh.T
            dc_next = dc * f_g[:, t]
        h_prev = np.concatenate(
            [np.zeros((B, 1, H), dtype=dh_seq.dtype), cache["h"][:, :-1]], axis=1)
        grads[f"lstm{layer}_wx"] = x_in.reshape(-1, x_in.shape[-1]).T @ dz_all.reshape(-1, dz_all.shape[-1])
        grads[f"lstm{layer}_wh"] = h_prev.reshape(-1, h_prev.shape[-1]).T @ dz_all.reshape(-1, dz_all.shape[-1])
        grads[f"lstm{layer}_b"] = dz_all.sum(axis=(0, 1))
        d_layer_out = dz_all @ wx.T  # gradient w.r.t. this layer's input

    # attention (with residual): layer0 input = context + X
    d_attn_out = d_layer_out
    dX = d_attn_out.copy()  # residual branch
    attn, q, k, v = state.attn, state.q, state.k, state.v
    dV = attn.transpose(0, 2, 1) @ d_attn_out
    dA = d_attn_out @ v.transpose(0, 2, 1)
    dS = attn * (dA - (dA * attn).sum(axis=-1, keepdims=True))
    scale = 1.0 / np.sqrt(state.X.shape[-1])
    dQ = dS @ k * scale
    dK = dS.transpose(0, 2, 1) @ q * scale
    X = state.X
    grads["attn_wq"] = X.reshape(-1, X.shape[-1]).T @ dQ.reshape(-1, dQ.shape[-1])
    grads["attn_bq"] = dQ.sum(axis=(0, 1))
    grads["attn_wk"] = X.reshape(-1, X.shape[-1]).T @ dK.reshape(-1, dK.shape[-1])
    grads["attn_bk"] = dK.sum(axis=(0, 1))
    grads["attn_wv"] = X.reshape(-1, X.shape[-1]).T @ dV.reshape(-1, dV.shape[-1])
    grads["attn_bv"] = dV.sum(axis=(0, 1))
    # dX itself is not needed: inputs are data, not parameters.

    return {name: grads[name].astype(params[name].dtype) for name, _ in
            param_layout(config)}


# ---------------------------------------------------------------------------
# Optimizer
# ---------------------------------------------------------------------------

ADAM_LR = 1e-3
ADAM_BETAS = (0.9, 0.999)
ADAM_EPS = 1e-8


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0

    @classmethod
    def zeros(cls, n: int, dtype=np.float64) -> "AdamState":
        return cls(m=np.zeros(n, dtype=dtype), v=np.zeros(n, dtype=dtype))


def apply_update(params_vec, grad_vec, state: AdamState,
                 lr: float = ADAM_LR, betas=ADAM_BETAS, eps: float = ADAM_EPS):
    """One Adam step on the flat parameter vector; returns the new vector."""
    if params_vec.shape != grad_vec.shape:
        raise ModelError("parameter/gradient length mismatch")
    if not np.isfinite(grad_vec).all():
        raise ModelError("non-finite gradient; training aborted")
    b1, b2 = betas
    state.step += 1
    state.m = b1 * state.m + (1.0 - b1) * grad_vec
    state.v = b2 * state.v + (1.0 - b2) * grad_vec**2
    m_hat = state.m / (1.0 - b1**state.step)
    v_hat = state.v / (1.0 - b2**state.step)
    return params_vec - lr * m_hat / (np.sqrt(v_hat) + eps)


# ---------------------------------------------------------------------------
# Model wrapper and training loop
# ---------------------------------------------------------------------------


class Model:
    """Parameter/buffer container bound to one ModelConfig."""

    def __init__(self, config: ModelConfig, params=None, buffers=None):
        self.config = config
        self.layout = param_layout(config)
        self.params = params if params is not None else init_params(config)
        self.buffers = buffers if buffers is not None else init_buffers(config)

    def to_vector(self) -> np.ndarray:
        return params_to_vector(self.params, self.layout)

    def from_vector(self, vector: np.ndarray) -> None:
        self.params = vector_to_params(vector, self.layout)

    def buffers_to_vector(self) -> np.ndarray:
        return params_to_vector(self.buffers, buffer_layout(self.config))

    def buffers_from_vector(self, vector: np.ndarray) -> None:
        self.buffers = vector_to_params(vector, buffer_layout(self.config))

    def copy(self) -> "Model":
        return Model(self.config,
                     params={k: v.copy() for k, v in self.params.items()},
                     buffers={k: v.copy() for k, v in self.buffers.items()})

    def predict_proba(self, X, batch_size: int = 512) -> np.ndarray:
        """Eval-mode probabilities; pure, safe for concurrent readers."""
        out = np.empty(X.shape[0])
        for start in range(0, X.shape[0], batch_size):
            chunk = X[start : start + batch_size]
            probs, _ = forward(self.params, chunk, "eval",
                               buffers=self.buffers, config=self.config)
            out[start : start + chunk.shape[0]] = probs
        return out


def train_epochs(model: Model, X, y, epochs: int, batch_size: int, seed: int,
                 lr: float = ADAM_LR, pos_weight: float = 1.0,
                 adam: AdamState | None = None) -> AdamState:
    """Train in place for full seeded-shuffle passes over (X, y).

    Remainder batches of size 1 are dropped (batch-norm needs variance).
    Returns the optimizer state for callers that continue training.
    """
    if X.shape[0] == 0:
        raise ModelError("empty sample list")
    if epochs < 0:
        raise ModelError("epochs must be >= 0")
    rng = np.random.default_rng([seed, 0x7E41])
    n = X.shape[0]
    if adam is None:
        adam = AdamState.zeros(n_params(model.config), dtype=model.config.np_dtype)
    vec = model.to_vector()
    for _ in range(epochs):
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            idx = order[start : start + batch_size]
            if idx.shape[0] < 2:
                continue
            params = vector_to_params(vec, model.layout)
            probs, fstate = forward(params, X[idx], "train", rng=rng,
                                    buffers=model.buffers, config=model.config)
            grads = backward(params, fstate, y[idx], pos_weight=pos_weight,
                             config=model.config)
            gvec = params_to_vector(grads, model.layout)
            vec = apply_update(vec, gvec, adam, lr=lr)
    model.from_vector(vec)
    return adam


# ---------------------------------------------------------------------------
# Checkpoint format
# ---------------------------------------------------------------------------
#
# Little-endian binary layout:
#   magic   8 bytes  b"FHZCKPT1"
#   hlen    uint32   header length in bytes
#   header  JSON     {"config": {...}, "layout_version": 1, "sections": [...]}
#   then for each section, float64 little-endian raw array bytes in the
#   order listed in header["sections"]: params, buffers, adam_m, adam_v,
#   norm_mean, norm_std. header carries each section's element count and
#   the adam step counter.

CHECKPOINT_MAGIC = b"FHZCKPT1"
LAYOUT_VERSION = 1


def save_checkpoint(path, model: Model, adam: AdamState | None = None,
                    norm_mean=None, norm_std=None) -> None:
    sections = {
        "params": model.to_vector().astype("<f8"),
        "buffers": model.buffers_to_vector().astype("<f8"),
    }
    if adam is not None:
        sections["adam_m"] = adam.m.astype("<f8")
        sections["adam_v"] = adam.v.astype("<f8")
    if norm_mean is not None:
        sections["norm_mean"] = np.asarray(norm_mean, dtype="<f8")
        sections["norm_std"] = np.asarray(norm_std, dtype="<f8")
    header = {
        "config": asdict(model.config),
        "layout_version": LAYOUT_VERSION,
        "adam_step": adam.step if adam is not None else None,
        "sections": [[name, int(arr.size)] for name, arr in sections.items()],
    }
    blob = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for _, arr in sections.items():
            fh.write(arr.tobytes())


def load_checkpoint(path):
    """Returns (model, adam_state_or_None, norm_mean_or_None, norm_std_or_None)."""
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != CHECKPOINT_MAGIC:
            raise ModelError(f"{path}: not a checkpoint file")
        (hlen,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(hlen))
        if header["layout_version"] != LAYOUT_VERSION:
            raise ModelError(f"unsupported layout version {header['layout_version']}")
        config = ModelConfig(**header["config"])
        arrays = {}
        for name, size in header["sections"]:
            arrays[name] = np.frombuffer(fh.read(8 * size), dtype="<f8").astype(
                config.np_dtype)
    model = Model(config)
    model.from_vector(arrays["params"])
    model.buffers_from_vector(arrays["buffers"])
    adam = None
    if "adam_m" in arrays:
        adam = AdamState(m=arrays["adam_m"], v=arrays["adam_v"],
                         step=header["adam_step"])
    return model, adam, arrays.get("norm_mean"), arrays.get("norm_std")
