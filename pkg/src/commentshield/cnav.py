"""Comment-news fusion classifier with analytic gradients.

Architecture: the news text and each of the M comments runs through a
shared single-layer multi-head self-attention followed by mean pooling,
producing one d-vector per branch. The M+1 branch vectors are
concatenated, projected back to dimension d by a learned aggregation
matrix, and classified by a small tanh MLP with a sigmoid output.

Everything is plain numpy in float64; the backward pass is derived by
hand and verified against central finite differences in the test suite.
"""

import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

PROB_EPS = 1e-7

# Logits are clamped so probabilities stay inside [eps, 1-eps].
LOGIT_CAP = math.log((1.0 - PROB_EPS) / PROB_EPS)

CHECKPOINT_MAGIC = b"CNAV"
CHECKPOINT_VERSION = 1


class ModelError(ValueError):
    """Raised on shape mismatches, invalid inputs, or bad checkpoints."""


@dataclass(frozen=True)
class CnavConfig:
    d: int
    m: int
    mlp_hidden: tuple[int, ...] = ()
    attention_heads: int = 1

    def __post_init__(self):
        if self.d < 2:
            raise ModelError(f"hidden dimension must be >= 2, got {self.d}")
        if self.m < 1:
            raise ModelError(f"comment count must be >= 1, got {self.m}")
        if self.attention_heads < 1 or self.d % self.attention_heads:
            raise ModelError(
                f"attention heads ({self.attention_heads}) must divide d ({self.d})"
            )
        if not self.mlp_hidden:
            object.__setattr__(self, "mlp_hidden", (self.d,))


def param_shapes(config: CnavConfig) -> dict[str, tuple[int, ...]]:
    """Parameter shapes in declaration order (dicts preserve order)."""
    shapes: dict[str, tuple[int, ...]] = {
        "w_query": (config.d, config.d),
        "w_key": (config.d, config.d),
        "w_value": (config.d, config.d),
        "w_agg": (config.d, (config.m + 1) * config.d),
        "b_agg": (config.d,),
    }
    widths = [config.d] + list(config.mlp_hidden) + [1]
    for i, (fan_in, fan_out) in enumerate(zip(widths[:-1], widths[1:])):
        shapes[f"mlp{i}_w"] = (fan_out, fan_in)
        shapes[f"mlp{i}_b"] = (fan_out,)
    return shapes


@dataclass
class CnavModel:
    config: CnavConfig
    params: dict[str, np.ndarray]

    def check_finite(self):
        for name, value in self.params.items():
            if not np.all(np.isfinite(value)):
                raise ModelError(f"parameter {name} contains non-finite values")


@dataclass
class Prediction:
    probability: float
    logit: float


def init_model(config: CnavConfig, seed: int) -> CnavModel:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases."""
    rng = np.random.default_rng(seed)
    params: dict[str, np.ndarray] = {}
    for name, shape in param_shapes(config).items():
        if name.endswith("_b") or name == "b_agg":
            params[name] = np.zeros(shape)
        else:
            bound = 1.0 / math.sqrt(shape[-1])
            params[name] = rng.uniform(-bound, bound, size=shape)
    return CnavModel(config=config, params=params)


def _as_matrix(seq) -> np.ndarray:
    vectors = getattr(seq, "vectors", seq)
    return np.asarray(vectors, dtype=np.float64)


def _softmax(scores: np.ndarray) -> np.ndarray:
    shifted = scores - scores.max(axis=-1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=-1, keepdims=True)


def _split_heads(x: np.ndarray, heads: int) -> np.ndarray:
    t, d = x.shape
    return x.reshape(t, heads, d // heads).transpose(1, 0, 2)


def _merge_heads(x: np.ndarray) -> np.ndarray:
    h, t, dh = x.shape
    return x.transpose(1, 0, 2).reshape(t, h * dh)


def _branch_forward(model: CnavModel, x: np.ndarray) -> tuple[np.ndarray, dict]:
    """Self-attention followed by mean pooling; returns (pooled, cache)."""
    heads = model.config.attention_heads
    dh = model.config.d // heads
    q = x @ model.params["w_query"]
    k = x @ model.params["w_key"]
    v = x @ model.params["w_value"]
    qh, kh, vh = (_split_heads(m, heads) for m in (q, k, v))
    scores = qh @ kh.transpose(0, 2, 1) / math.sqrt(dh)
    attn = _softmax(scores)
    out = _merge_heads(attn @ vh)
    pooled = out.mean(axis=0)
    cache = {"x": x, "qh": qh, "kh": kh, "vh": vh, "attn": attn}
    return pooled, cache


def _branch_backward(model: CnavModel, dpooled: np.ndarray, cache: dict, grads: dict):
    heads = model.config.attention_heads
    dh = model.config.d // heads
    x = cache["x"]
    t = x.shape[0]
    dout = np.repeat(dpooled[None, :] / t, t, axis=0)
    douth = _split_heads(dout, heads)
    attn, qh, kh, vh = cache["attn"], cache["qh"], cache["kh"], cache["vh"]
    dattn = douth @ vh.transpose(0, 2, 1)
    dvh = attn.transpose(0, 2, 1) @ douth
    dscores = attn * (dattn - (dattn * attn).sum(axis=-1, keepdims=True))
    dqh = dscores @ kh / math.sqrt(dh)
    dkh = dscores.transpose(0, 2, 1) @ qh / math.sqrt(dh)
    dq, dk, dv = (_merge_heads(m) for m in (dqh, dkh, dvh))
    grads["w_query"] += x.T @ dq
    grads["w_key"] += x.T @ dk
    grads["w_value"] += x.T @ dv


def _mlp_forward(model: CnavModel, z: np.ndarray) -> tuple[float, list[np.ndarray]]:
    n_layers = len(model.config.mlp_hidden) + 1
    activations = [z]
    a = z
    for i in range(n_layers - 1):
        a = np.tanh(model.params[f"mlp{i}_w"] @ a + model.params[f"mlp{i}_b"])
        activations.append(a)
    last = n_layers - 1
    logit_raw = model.params[f"mlp{last}_w"] @ a + model.params[f"mlp{last}_b"]
    return float(logit_raw[0]), activations


def _mlp_backward(model: CnavModel, dlogit: float, activations: list[np.ndarray], grads: dict) -> np.ndarray:
    n_layers = len(model.config.mlp_hidden) + 1
    last = n_layers - 1
    da = np.array([dlogit])
    grads[f"mlp{last}_w"] += np.outer(da, activations[-1])
    grads[f"mlp{last}_b"] += da
    upstream = model.params[f"mlp{last}_w"].T @ da
    for i in range(last - 1, -1, -1):
        dpre = upstream * (1.0 - activations[i + 1] ** 2)
        grads[f"mlp{i}_w"] += np.outer(dpre, activations[i])
        grads[f"mlp{i}_b"] += dpre
        upstream = model.params[f"mlp{i}_w"].T @ dpre
    return upstream


def _check_sequences(model: CnavModel, news, comments) -> list[np.ndarray]:
    d, m = model.config.d, model.config.m
    if len(comments) > m:
        comments = comments[:m]
    if len(comments) < m:
        raise ModelError(f"expected {m} comments, got {len(comments)}")
    seqs = [_as_matrix(news)] + [_as_matrix(c) for c in comments]
    for i, seq in enumerate(seqs):
        if seq.ndim != 2 or seq.shape[1] != d:
            raise ModelError(f"branch {i}: expected (T, {d}) sequence, got {seq.shape}")
        if seq.shape[0] < 1:
            raise ModelError(f"branch {i}: empty token sequence")
        if not np.all(np.isfinite(seq)):
            raise ModelError(f"branch {i}: non-finite values in input")
    return seqs


def _forward_cached(model: CnavModel, seqs: list[np.ndarray]) -> tuple[Prediction, dict]:
    d = model.config.d
    pooled = []
    branch_caches = []
    for x in seqs:
        p, cache = _branch_forward(model, x)
        pooled.append(p)
        branch_caches.append(cache)
    h_concat = np.concatenate(pooled)
    assert h_concat.shape == ((model.config.m + 1) * d,)
    z = model.params["w_agg"] @ h_concat + model.params["b_agg"]
    assert z.shape == (d,)
    logit_raw, activations = _mlp_forward(model, z)
    logit = min(max(logit_raw, -LOGIT_CAP), LOGIT_CAP)
    probability = 1.0 / (1.0 + math.exp(-logit))
    pred = Prediction(probability=probability, logit=logit)
    cache = {
        "branches": branch_caches,
        "h_concat": h_concat,
        "activations": activations,
        "logit_raw": logit_raw,
    }
    return pred, cache


def forward(model: CnavModel, news, comments) -> Prediction:
    """Classify one news item with its M comment sequences.

    Deterministic given model and inputs; the returned probability is
    sigmoid(logit) with the logit clamped so it stays in [eps, 1-eps].
    """
    seqs = _check_sequences(model, news, comments)
    pred, _ = _forward_cached(model, seqs)
    return pred


def loss(pred: Prediction, label: int) -> float:
    """Binary cross-entropy with epsilon-clamped probability."""
    p = min(max(pred.probability, PROB_EPS), 1.0 - PROB_EPS)
    y = float(label)
    return -(y * math.log(p) + (1.0 - y) * math.log(1.0 - p))


def zero_grads(model: CnavModel) -> dict[str, np.ndarray]:
    return {name: np.zeros_like(value) for name, value in model.params.items()}


def backward(model: CnavModel, batch) -> tuple[dict[str, np.ndarray], float]:
    """Mean-over-batch gradients of the loss w.r.t. every parameter.

    batch is a list of (news, comments, label) triples. Returns
    (gradients keyed like model.params, mean loss).
    """
    if not batch:
        raise ModelError("backward needs a non-empty batch")
    grads = zero_grads(model)
    total_loss = 0.0
    d = model.config.d
    for news, comments, label in batch:
        seqs = _check_sequences(model, news, comments)
        pred, cache = _forward_cached(model, seqs)
        total_loss += loss(pred, label)
        # d(BCE)/d(logit) = p - y; the clamp gates the gradient when active.
        dlogit = pred.probability - float(label)
        if abs(cache["logit_raw"]) >= LOGIT_CAP:
            dlogit = 0.0
        dz = _mlp_backward(model, dlogit, cache["activations"], grads)
        grads["w_agg"] += np.outer(dz, cache["h_concat"])
        grads["b_agg"] += dz
        dh_concat = model.params["w_agg"].T @ dz
        for b, branch_cache in enumerate(cache["branches"]):
            _branch_backward(model, dh_concat[b * d : (b + 1) * d], branch_cache, grads)
    n = len(batch)
    for name in grads:
        grads[name] /= n
    return grads, total_loss / n


@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    t: int = 0

    beta1: float = field(default=0.9, repr=False)
    beta2: float = field(default=0.999, repr=False)
    eps: float = field(default=1e-8, repr=False)


def init_adam_state(model: CnavModel) -> AdamState:
    return AdamState(m=zero_grads(model), v=zero_grads(model))


def adam_step(
    model: CnavModel, grads: dict[str, np.ndarray], state: AdamState, lr: float
) -> tuple[CnavModel, AdamState]:
    """One Adam update (beta1=0.9, beta2=0.999, eps=1e-8), bias-corrected."""
    t = state.t + 1
    new_params: dict[str, np.ndarray] = {}
    new_m: dict[str, np.ndarray] = {}
    new_v: dict[str, np.ndarray] = {}
    for name, value in model.params.items():
        g = grads[name]
        m = state.beta1 * state.m[name] + (1.0 - state.beta1) * g
        v = state.beta2 * state.v[name] + (1.0 - state.beta2) * g * g
        m_hat = m / (1.0 - state.beta1**t)
        v_hat = v / (1.0 - state.beta2**t)
        new_params[name] = value - lr * m_hat / (np.sqrt(v_hat) + state.eps)
        new_m[name] = m
        new_v[name] = v
    new_model = CnavModel(config=model.config, params=new_params)
    new_model.check_finite()
    return new_model, AdamState(m=new_m, v=new_v, t=t, beta1=state.beta1, beta2=state.beta2, eps=state.eps)


def save_model(model: CnavModel, path: str | Path) -> None:
    """Checkpoint: config header then flat little-endian float32 arrays
    in declaration order."""
    cfg = model.config
    with Path(path).open("wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(
            struct.pack(
                "<IIIII",
                CHECKPOINT_VERSION,
                cfg.d,
                cfg.m,
                cfg.attention_heads,
                len(cfg.mlp_hidden),
            )
        )
        for width in cfg.mlp_hidden:
            fh.write(struct.pack("<I", width))
        for name in param_shapes(cfg):
            fh.write(np.ascontiguousarray(model.params[name], dtype="<f4").tobytes())


def load_model(path: str | Path) -> CnavModel:
    data = Path(path).read_bytes()
    if len(data) < 24 or data[:4] != CHECKPOINT_MAGIC:
        raise ModelError("not a model checkpoint (magic mismatch)")
    version, d, m, heads, n_hidden = struct.unpack_from("<IIIII", data, 4)
    if version != CHECKPOINT_VERSION:
        raise ModelError(f"unsupported checkpoint version {version}")
    offset = 24
    widths = struct.unpack_from(f"<{n_hidden}I", data, offset) if n_hidden else ()
    offset += 4 * n_hidden
    config = CnavConfig(d=d, m=m, mlp_hidden=tuple(widths), attention_heads=heads)
    params: dict[str, np.ndarray] = {}
    for name, shape in param_shapes(config).items():
        count = int(np.prod(shape))
        nbytes = count * 4
        if offset + nbytes > len(data):
            raise ModelError("truncated checkpoint")
        flat = np.frombuffer(data, dtype="<f4", count=count, offset=offset)
        params[name] = flat.reshape(shape).astype(np.float64)
        offset += nbytes
    if offset != len(data):
        raise ModelError("trailing bytes after parameters")
    return CnavModel(config=config, params=params)
