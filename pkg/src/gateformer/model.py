"""Gateformer network.

Each variate's look-back series is embedded independently along two paths,
patch-level self-attention and a shared global MLP, which are merged by a
learned sigmoid gate. The resulting per-variate embeddings attend to each
other along the variate axis; a second gate mixes that output with the
embeddings it started from. A shared linear head maps every variate to the
forecast horizon and RevIN statistics restore the input scale.

All functions are batched: inputs carry a leading batch axis ``B`` and a
variate axis ``N``. No parameter depends on ``N``.
"""

from __future__ import annotations

import math
from collections import OrderedDict
from dataclasses import asdict, dataclass, fields
from typing import Iterator

import numpy as np

from . import tensor as T
from .errors import ConfigError
from .revin import revin_denormalize, revin_normalize
from .tensor import Tensor


@dataclass(frozen=True)
class ModelConfig:
    lookback: int = 96
    horizon: int = 96
    patch_len: int = 16
    d_model: int = 64
    n_heads: int = 8
    n_temporal_blocks: int = 1
    n_variate_blocks: int = 1
    ffn_hidden: int = 0  # 0 means 2 * d_model
    dropout: float = 0.0
    use_temporal_attn: bool = True
    use_global_embed: bool = True
    use_variate_gate: bool = True
    use_variate_attn: bool = True

    def __post_init__(self):
        if self.ffn_hidden == 0:
            object.__setattr__(self, "ffn_hidden", 2 * self.d_model)
        self.validate()

    def validate(self) -> None:
        for name in ("lookback", "horizon", "patch_len", "d_model", "n_heads", "ffn_hidden"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.n_temporal_blocks < 0 or self.n_variate_blocks < 0:
            raise ConfigError("block counts must be >= 0")
        if self.d_model % self.n_heads:
            raise ConfigError(f"d_model={self.d_model} is not divisible by n_heads={self.n_heads}")
        if self.patch_len > self.lookback:
            raise ConfigError(f"patch_len={self.patch_len} exceeds lookback={self.lookback}")
        if self.lookback < 2:
            raise ConfigError("lookback must be at least 2")
        if not (self.use_temporal_attn or self.use_global_embed):
            raise ConfigError("at least one of use_temporal_attn / use_global_embed must be on")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must lie in [0, 1), got {self.dropout}")

    @property
    def n_patches(self) -> int:
        return math.ceil(self.lookback / self.patch_len)

    @property
    def d_head(self) -> int:
        return self.d_model // self.n_heads

    def replace(self, **changes) -> "ModelConfig":
        d = asdict(self)
        d.update(changes)
        return ModelConfig(**d)

    def to_items(self) -> list[tuple[str, str]]:
        return [(f.name, _fmt(getattr(self, f.name))) for f in fields(self)]

    @classmethod
    def from_items(cls, items: dict[str, str]) -> "ModelConfig":
        kw = {}
        known = {f.name: f for f in fields(cls)}
        for key, raw in items.items():
            if key not in known:
                raise ConfigError(f"unknown model key {key!r}")
            kw[key] = _parse(raw, known[key].type)
        return cls(**kw)


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    return repr(v) if isinstance(v, float) else str(v)


def _parse(raw: str, typ):
    typ = typ if isinstance(typ, str) else typ.__name__
    raw = raw.strip()
    if typ == "bool":
        low = raw.lower()
        if low in ("true", "1", "yes", "on"):
            return True
        if low in ("false", "0", "no", "off"):
            return False
        raise ConfigError(f"not a boolean: {raw!r}")
    try:
        return int(raw) if typ == "int" else float(raw)
    except ValueError:
        raise ConfigError(f"not a valid {typ}: {raw!r}") from None


# --------------------------------------------------------------------------
# parameters


def _block_shapes(prefix: str, d: int, h: int) -> list[tuple[str, tuple[int, ...], str]]:
    out = [(f"{prefix}.norm1.gamma", (d,), "ones"), (f"{prefix}.norm1.beta", (d,), "zeros")]
    for p in ("q", "k", "v", "o"):
        out += [(f"{prefix}.attn.w{p}", (d, d), "glorot"), (f"{prefix}.attn.b{p}", (d,), "zeros")]
    out += [
        (f"{prefix}.norm2.gamma", (d,), "ones"), (f"{prefix}.norm2.beta", (d,), "zeros"),
        (f"{prefix}.ffn.w1", (d, h), "glorot"), (f"{prefix}.ffn.b1", (h,), "zeros"),
        (f"{prefix}.ffn.w2", (h, d), "glorot"), (f"{prefix}.ffn.b2", (d,), "zeros"),
    ]
    return out


def param_shapes(config: ModelConfig) -> list[tuple[str, tuple[int, ...], str]]:
    """Declared ``(name, shape, init)`` triples, in checkpoint order."""
    d, h, P = config.d_model, config.ffn_hidden, config.n_patches
    out: list[tuple[str, tuple[int, ...], str]] = []
    if config.use_temporal_attn:
        out += [
            ("temporal.patch.weight", (config.patch_len, d), "glorot"),
            ("temporal.patch.bias", (d,), "zeros"),
            ("temporal.pos.embedding", (P, d), "glorot"),
        ]
        for i in range(config.n_temporal_blocks):
            out += _block_shapes(f"temporal.block{i}", d, h)
        out += [
            ("temporal.norm.gamma", (d,), "ones"), ("temporal.norm.beta", (d,), "zeros"),
            ("temporal.head.w1", (P * d, h), "glorot"), ("temporal.head.b1", (h,), "zeros"),
            ("temporal.head.w2", (h, d), "glorot"), ("temporal.head.b2", (d,), "zeros"),
        ]
    if config.use_global_embed:
        out += [
            ("global.w1", (config.lookback, d), "glorot"), ("global.b1", (d,), "zeros"),
            ("global.w2", (d, d), "glorot"), ("global.b2", (d,), "zeros"),
        ]
    if config.use_temporal_attn and config.use_global_embed:
        out += [
            ("fusion.w_temporal", (d, d), "glorot"),
            ("fusion.w_global", (d, d), "glorot"),
            ("fusion.bias", (d,), "zeros"),
        ]
    if config.use_variate_attn:
        for i in range(config.n_variate_blocks):
            out += _block_shapes(f"variate.block{i}", d, h)
        out += [("variate.norm.gamma", (d,), "ones"), ("variate.norm.beta", (d,), "zeros")]
        if config.use_variate_gate:
            out += [
                ("variate.gate.w_attn", (d, d), "glorot"),
                ("variate.gate.w_input", (d, d), "glorot"),
                ("variate.gate.bias", (d,), "zeros"),
            ]
    out += [("head.weight", (d, config.horizon), "glorot"), ("head.bias", (config.horizon,), "zeros")]
    return out


class GateformerParams:
    """Named learnable arrays in declared order."""

    def __init__(self, tensors: "OrderedDict[str, Tensor]"):
        self._t = tensors

    def __getitem__(self, name: str) -> Tensor:
        return self._t[name]

    def __contains__(self, name: str) -> bool:
        return name in self._t

    def __iter__(self) -> Iterator[str]:
        return iter(self._t)

    def __len__(self) -> int:
        return len(self._t)

    def names(self) -> list[str]:
        return list(self._t)

    def tensors(self) -> list[Tensor]:
        return list(self._t.values())

    def items(self):
        return self._t.items()

    @property
    def dtype(self):
        return next(iter(self._t.values())).dtype

    def n_parameters(self) -> int:
        return sum(t.size for t in self._t.values())

    def groups(self) -> "OrderedDict[str, list[str]]":
        """Parameter names grouped by their owning layer (name minus the last component)."""
        g: OrderedDict[str, list[str]] = OrderedDict()
        for n in self._t:
            g.setdefault(n.rsplit(".", 1)[0], []).append(n)
        return g

    def arrays(self) -> "OrderedDict[str, np.ndarray]":
        return OrderedDict((n, t.data) for n, t in self._t.items())

    def copy(self, dtype=None) -> "GateformerParams":
        return GateformerParams(OrderedDict(
            (n, Tensor(t.data.astype(dtype or t.dtype, copy=True), requires_grad=True, name=n))
            for n, t in self._t.items()))

    @classmethod
    def from_arrays(cls, arrays, dtype=None) -> "GateformerParams":
        return cls(OrderedDict(
            (n, Tensor(np.array(a, dtype=dtype or np.asarray(a).dtype), requires_grad=True, name=n))
            for n, a in arrays.items()))


def init_params(config: ModelConfig, seed: int = 0, dtype=np.float32) -> GateformerParams:
    """Glorot-uniform weights, zero biases, unit norm scales."""
    rng = np.random.default_rng(seed)
    out = OrderedDict()
    for name, shape, kind in param_shapes(config):
        if kind == "glorot":
            fan_in, fan_out = shape[0], shape[-1]
            limit = math.sqrt(6.0 / (fan_in + fan_out))
            arr = rng.uniform(-limit, limit, size=shape)
        elif kind == "ones":
            arr = np.ones(shape)
        else:
            arr = np.zeros(shape)
        out[name] = Tensor(arr.astype(dtype), requires_grad=True, name=name)
    return GateformerParams(out)


# --------------------------------------------------------------------------
# building blocks


def _linear(x: Tensor, params: GateformerParams, w: str, b: str) -> Tensor:
    return T.add(T.matmul(x, params[w]), params[b])


def _layer_norm(x: Tensor, params: GateformerParams, prefix: str) -> Tensor:
    return T.layer_norm(x, params[f"{prefix}.gamma"], params[f"{prefix}.beta"])


def multi_head_attention(h: Tensor, params: GateformerParams, prefix: str, n_heads: int,
                         trace: dict | None = None, trace_key: str = "attn") -> Tensor:
    """Self-attention over axis 1 of ``h`` (shape ``(Bt, S, d)``), scaled by 1/sqrt(d_head)."""
    bt, s, d = h.shape
    dk = d // n_heads

    def heads(name, axes):
        proj = _linear(h, params, f"{prefix}.w{name}", f"{prefix}.b{name}")
        return T.transpose(T.reshape(proj, (bt, s, n_heads, dk)), axes)

    q = heads("q", (0, 2, 1, 3))
    k_t = heads("k", (0, 2, 3, 1))
    v = heads("v", (0, 2, 1, 3))
    scores = T.scale(T.matmul(q, k_t), 1.0 / math.sqrt(dk))
    attn = T.softmax_lastdim(scores)
    if trace is not None:
        trace.setdefault(trace_key, []).append(attn.data)
    ctx = T.reshape(T.transpose(T.matmul(attn, v), (0, 2, 1, 3)), (bt, s, d))
    return _linear(ctx, params, f"{prefix}.wo", f"{prefix}.bo")


def encoder_block(x: Tensor, params: GateformerParams, prefix: str, config: ModelConfig,
                  rng: np.random.Generator | None, trace: dict | None, trace_key: str) -> Tensor:
    """Pre-norm block: attention and FFN sublayers, each with a residual connection."""
    a = multi_head_attention(_layer_norm(x, params, f"{prefix}.norm1"), params, f"{prefix}.attn",
                             config.n_heads, trace, trace_key)
    x = T.add(x, T.dropout(a, config.dropout, rng))
    f = _layer_norm(x, params, f"{prefix}.norm2")
    f = _linear(T.gelu(_linear(f, params, f"{prefix}.ffn.w1", f"{prefix}.ffn.b1")), params,
                f"{prefix}.ffn.w2", f"{prefix}.ffn.b2")
    return T.add(x, T.dropout(f, config.dropout, rng))


# --------------------------------------------------------------------------
# cross-time path


def patchify(x_norm: np.ndarray, patch_len: int) -> np.ndarray:
    """Split the last axis into non-overlapping patches.

    A short final patch is right-padded by repeating the last observed value.
    """
    L = x_norm.shape[-1]
    if patch_len < 1 or patch_len > L:
        raise ConfigError(f"patch_len={patch_len} must lie in [1, {L}]")
    n = math.ceil(L / patch_len)
    pad = n * patch_len - L
    if pad:
        tail = np.repeat(x_norm[..., -1:], pad, axis=-1)
        x_norm = np.concatenate([x_norm, tail], axis=-1)
    return x_norm.reshape(x_norm.shape[:-1] + (n, patch_len))


def patch_embed(x_norm: np.ndarray, params: GateformerParams, config: ModelConfig) -> Tensor:
    """``(..., L)`` series to ``(..., P, d_model)`` tokens with positional embeddings."""
    patches = Tensor(patchify(x_norm, config.patch_len).astype(params.dtype, copy=False))
    tok = _linear(patches, params, "temporal.patch.weight", "temporal.patch.bias")
    return T.add(tok, params["temporal.pos.embedding"])


def temporal_encode(tokens: Tensor, params: GateformerParams, config: ModelConfig,
                    rng: np.random.Generator | None = None, trace: dict | None = None) -> Tensor:
    """``(Bt, P, d)`` patch tokens to one ``(Bt, d)`` temporal embedding per series."""
    x = tokens
    for i in range(config.n_temporal_blocks):
        x = encoder_block(x, params, f"temporal.block{i}", config, rng, trace, "temporal_attn")
    x = _layer_norm(x, params, "temporal.norm")
    bt, p, d = x.shape
    flat = T.reshape(x, (bt, p * d))
    hid = T.gelu(_linear(flat, params, "temporal.head.w1", "temporal.head.b1"))
    return _linear(hid, params, "temporal.head.w2", "temporal.head.b2")


def global_embed(x_norm: np.ndarray, params: GateformerParams) -> Tensor:
    """Shared two-layer MLP over each whole look-back series: ``(..., L) -> (..., d)``."""
    x = Tensor(np.asarray(x_norm, dtype=params.dtype))
    hid = T.gelu(_linear(x, params, "global.w1", "global.b1"))
    return _linear(hid, params, "global.w2", "global.b2")


def gated_fuse(v_t: Tensor, v_g: Tensor, params: GateformerParams,
               trace: dict | None = None) -> Tensor:
    """``g * v_t + (1 - g) * v_g`` with ``g = sigmoid(v_t W_t + v_g W_g + b)``."""
    pre = T.add(T.add(T.matmul(v_t, params["fusion.w_temporal"]),
                      T.matmul(v_g, params["fusion.w_global"])), params["fusion.bias"])
    gate = T.sigmoid(pre)
    if trace is not None:
        trace["fusion_gate"] = gate.data
    return T.lerp(v_g, v_t, gate)


def embed_variates(x_norm: np.ndarray, params: GateformerParams, config: ModelConfig,
                   rng: np.random.Generator | None = None, trace: dict | None = None) -> Tensor:
    """Normalized ``(B, N, L)`` windows to fused ``(B, N, d)`` variate embeddings."""
    b, n, _ = x_norm.shape
    d = config.d_model
    v_t = v_g = None
    if config.use_temporal_attn:
        tok = patch_embed(x_norm, params, config)
        tok = T.reshape(tok, (b * n, config.n_patches, d))
        v_t = T.reshape(temporal_encode(tok, params, config, rng, trace), (b, n, d))
    if config.use_global_embed:
        v_g = global_embed(x_norm, params)
    if trace is not None:
        trace["v_T"] = None if v_t is None else v_t.data
        trace["v_G"] = None if v_g is None else v_g.data
    if v_t is not None and v_g is not None:
        return gated_fuse(v_t, v_g, params, trace)
    return v_t if v_t is not None else v_g


# --------------------------------------------------------------------------
# cross-variate path and head


def variate_encode(s: Tensor, params: GateformerParams, config: ModelConfig,
                   rng: np.random.Generator | None = None, trace: dict | None = None) -> Tensor:
    """Attention along the variate axis of ``(B, N, d)``, gated against its input.

    No positional information is added on this axis.
    """
    if not config.use_variate_attn:
        return s
    a = s
    for i in range(config.n_variate_blocks):
        a = encoder_block(a, params, f"variate.block{i}", config, rng, trace, "variate_attn")
    a = _layer_norm(a, params, "variate.norm")
    if trace is not None:
        trace["A"] = a.data
    if not config.use_variate_gate:
        return T.add(a, s)
    pre = T.add(T.add(T.matmul(a, params["variate.gate.w_attn"]),
                      T.matmul(s, params["variate.gate.w_input"])), params["variate.gate.bias"])
    gate = T.sigmoid(pre)
    if trace is not None:
        trace["variate_gate"] = gate.data
    return T.lerp(s, a, gate)


def project(o: Tensor, params: GateformerParams) -> Tensor:
    """Shared linear head ``d_model -> horizon`` applied to every variate row."""
    return _linear(o, params, "head.weight", "head.bias")


def canonical_order(x: np.ndarray) -> np.ndarray:
    """Per-sample row order sorting the variates of ``(B, N, L)`` lexicographically.

    Running the variate axis in this order makes floating-point reductions
    across variates independent of how the caller ordered them.
    """
    return np.stack([np.lexsort(xb.T[::-1]) for xb in x])


def forward(x: np.ndarray, params: GateformerParams, config: ModelConfig, *,
            training: bool = False, rng: np.random.Generator | None = None,
            trace: dict | None = None) -> Tensor:
    """Forecast ``(B, N, F)`` (or ``(N, F)`` for a single window) from look-back windows."""
    x = np.asarray(x, dtype=params.dtype)
    single = x.ndim == 2
    if single:
        x = x[None]
    if x.ndim != 3 or x.shape[-1] != config.lookback:
        raise ConfigError(f"expected windows of shape (B, N, {config.lookback}), got {x.shape}")
    b, n, _ = x.shape
    drop_rng = rng if training else None

    order = None
    if config.use_variate_attn and n > 1:
        order = canonical_order(x)
        x = np.take_along_axis(x, order[..., None], axis=1)
        if trace is not None:
            trace["order"] = order

    x_norm, stats = revin_normalize(x)
    s = embed_variates(x_norm, params, config, drop_rng, trace)
    if trace is not None:
        trace["s"] = s.data
    o = variate_encode(s, params, config, drop_rng, trace)
    if trace is not None:
        trace["o"] = o.data
    y = revin_denormalize(project(o, params), stats)
    if order is not None:
        y = T.take_rows(y, np.argsort(order, axis=1))
    if single:
        y = T.reshape(y, (n, config.horizon))
    return y


def predict(x: np.ndarray, params: GateformerParams, config: ModelConfig) -> np.ndarray:
    """Inference without recording a tape."""
    with T.no_grad():
        return forward(x, params, config).data
