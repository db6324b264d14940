"""A small pre-norm encoder-decoder over the bin-token vocabulary."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from ..errors import LengthExceeded, TokenOutOfRange, ValidationError
from ..tokenizer import PAD
from . import layers as L


@dataclass(frozen=True)
class ModelConfig:
    n_bins: int = 100
    d_model: int = 64
    n_heads: int = 4
    d_ff: int = 128
    n_enc: int = 2
    n_dec: int = 2
    context_len: int = 512
    horizon_len: int = 64

    def __post_init__(self):
        dims = (self.n_bins, self.d_model, self.n_heads, self.d_ff, self.n_enc, self.n_dec,
                self.context_len, self.horizon_len)
        if min(dims) < 1:
            raise ValidationError("all model dimensions must be at least 1")
        if self.d_model % self.n_heads:
            raise ValidationError("d_model must be divisible by n_heads")

    @property
    def vocab(self) -> int:
        return self.n_bins + 2

    @property
    def d_head(self) -> int:
        return self.d_model // self.n_heads

    def to_json(self) -> dict:
        return asdict(self)


@dataclass
class ModelParams:
    """Weights keyed by name, in a fixed canonical order."""

    config: ModelConfig
    tensors: dict[str, np.ndarray]

    def __getitem__(self, name: str) -> np.ndarray:
        return self.tensors[name]

    def astype(self, dtype) -> "ModelParams":
        return ModelParams(self.config, {k: v.astype(dtype) for k, v in self.tensors.items()})

    def copy(self) -> "ModelParams":
        return ModelParams(self.config, {k: v.copy() for k, v in self.tensors.items()})

    def n_parameters(self) -> int:
        return sum(v.size for v in self.tensors.values())


_ATTN = ("wq", "wk", "wv", "wo")


def param_shapes(cfg: ModelConfig) -> dict[str, tuple[int, ...]]:
    d, f = cfg.d_model, cfg.d_ff
    shapes: dict[str, tuple[int, ...]] = {"embed": (cfg.vocab, d)}

    def ffn(prefix):
        shapes.update({f"{prefix}.w1": (d, f), f"{prefix}.b1": (f,),
                       f"{prefix}.w2": (f, d), f"{prefix}.b2": (d,)})

    for i in range(cfg.n_enc):
        p = f"enc.{i}"
        shapes[f"{p}.ln1"] = (d,)
        shapes.update({f"{p}.self.{w}": (d, d) for w in _ATTN})
        shapes[f"{p}.ln2"] = (d,)
        ffn(f"{p}.ffn")
    shapes["enc.ln_f"] = (d,)
    for i in range(cfg.n_dec):
        p = f"dec.{i}"
        shapes[f"{p}.ln1"] = (d,)
        shapes.update({f"{p}.self.{w}": (d, d) for w in _ATTN})
        shapes[f"{p}.ln2"] = (d,)
        shapes.update({f"{p}.cross.{w}": (d, d) for w in _ATTN})
        shapes[f"{p}.ln3"] = (d,)
        ffn(f"{p}.ffn")
    shapes["dec.ln_f"] = (d,)
    shapes["out"] = (d, cfg.vocab)
    return shapes


def init_params(cfg: ModelConfig, seed: int = 0, dtype=np.float64) -> ModelParams:
    """Gaussian fan-in initialisation; layer-norm scales 1, biases 0."""
    rng = np.random.Generator(np.random.PCG64(seed))
    tensors = {}
    for name, shape in param_shapes(cfg).items():
        leaf = name.rsplit(".", 1)[-1]
        if leaf.startswith("ln"):
            t = np.ones(shape)
        elif leaf in ("b1", "b2"):
            t = np.zeros(shape)
        elif name == "embed":
            t = rng.normal(0.0, 1.0, shape)
        else:
            t = rng.normal(0.0, 1.0 / np.sqrt(shape[0]), shape)
        tensors[name] = t.astype(dtype)
    return ModelParams(cfg, tensors)


def _check_tokens(cfg: ModelConfig, enc: np.ndarray, dec: np.ndarray):
    if enc.ndim != 2 or dec.ndim != 2 or enc.shape[0] != dec.shape[0]:
        raise ValidationError("token batches must be 2-D with a shared batch size")
    for arr in (enc, dec):
        if arr.size and (arr.min() < 0 or arr.max() >= cfg.vocab):
            raise TokenOutOfRange(f"token ids must lie in [0, {cfg.vocab})")
    if enc.shape[1] > cfg.context_len:
        raise LengthExceeded(f"encoder length {enc.shape[1]} exceeds {cfg.context_len}")
    if dec.shape[1] > cfg.horizon_len:
        raise LengthExceeded(f"decoder length {dec.shape[1]} exceeds {cfg.horizon_len}")
    if not (enc != PAD).any(axis=1).all():
        raise ValidationError("every encoder row needs at least one non-PAD token")


def _embed(params, tokens, dtype):
    t = tokens.shape[1]
    pe = L.positional_table(t, params.config.d_model).astype(dtype)
    return params["embed"][tokens] + pe


def encode(params: ModelParams, enc: np.ndarray, caches: list | None = None) -> np.ndarray:
    cfg = params.config
    x = _embed(params, enc, params["embed"].dtype)
    key_mask = (enc != PAD)[:, None, None, :]
    for i in range(cfg.n_enc):
        p = f"enc.{i}"
        h, c_ln1 = L.layer_norm_forward(x, params[f"{p}.ln1"])
        a, c_att = L.attention_forward(h, h, *(params[f"{p}.self.{w}"] for w in _ATTN),
                                       cfg.n_heads, key_mask)
        x = x + a
        h, c_ln2 = L.layer_norm_forward(x, params[f"{p}.ln2"])
        f, c_ffn = L.ffn_forward(h, params[f"{p}.ffn.w1"], params[f"{p}.ffn.b1"],
                                 params[f"{p}.ffn.w2"], params[f"{p}.ffn.b2"])
        x = x + f
        if caches is not None:
            caches.append((c_ln1, c_att, c_ln2, c_ffn))
    mem, c_lnf = L.layer_norm_forward(x, params["enc.ln_f"])
    if caches is not None:
        caches.append(c_lnf)
    return mem


def decode(params: ModelParams, mem: np.ndarray, enc_mask: np.ndarray, dec: np.ndarray,
           caches: list | None = None) -> np.ndarray:
    cfg = params.config
    x = _embed(params, dec, params["embed"].dtype)
    self_mask = L.causal_mask(dec.shape[1])
    cross_mask = enc_mask[:, None, None, :]
    for i in range(cfg.n_dec):
        p = f"dec.{i}"
        h, c_ln1 = L.layer_norm_forward(x, params[f"{p}.ln1"])
        a, c_self = L.attention_forward(h, h, *(params[f"{p}.self.{w}"] for w in _ATTN),
                                        cfg.n_heads, self_mask)
        x = x + a
        h, c_ln2 = L.layer_norm_forward(x, params[f"{p}.ln2"])
        a, c_cross = L.attention_forward(h, mem, *(params[f"{p}.cross.{w}"] for w in _ATTN),
                                         cfg.n_heads, cross_mask)
        x = x + a
        h, c_ln3 = L.layer_norm_forward(x, params[f"{p}.ln3"])
        f, c_ffn = L.ffn_forward(h, params[f"{p}.ffn.w1"], params[f"{p}.ffn.b1"],
                                 params[f"{p}.ffn.w2"], params[f"{p}.ffn.b2"])
        x = x + f
        if caches is not None:
            caches.append((c_ln1, c_self, c_ln2, c_cross, c_ln3, c_ffn))
    y, c_lnf = L.layer_norm_forward(x, params["dec.ln_f"])
    logits = y @ params["out"]
    if caches is not None:
        caches.append((c_lnf, y))
    return logits


def forward(params: ModelParams, enc_tokens, dec_tokens) -> np.ndarray:
    """Logits of shape ``(B, T_dec, vocab)``; 1-D inputs are treated as one row."""
    enc = np.asarray(enc_tokens, dtype=np.int64)
    dec = np.asarray(dec_tokens, dtype=np.int64)
    single = enc.ndim == 1
    if single:
        enc, dec = enc[None], dec[None]
    _check_tokens(params.config, enc, dec)
    mem = encode(params, enc)
    logits = decode(params, mem, enc != PAD, dec)
    return logits[0] if single else logits


def cross_entropy_loss(logits: np.ndarray, targets: np.ndarray, with_grad: bool = False):
    """Mean negative log-likelihood of the targets over non-PAD positions."""
    logits = np.asarray(logits, dtype=float)
    targets = np.asarray(targets, dtype=np.int64)
    valid = targets != PAD
    count = max(int(valid.sum()), 1)
    logp = L.log_softmax(logits, axis=-1)
    picked = np.take_along_axis(logp, targets[..., None], axis=-1)[..., 0]
    loss = float(-np.sum(picked * valid) / count)
    if not with_grad:
        return loss
    grad = np.exp(logp)
    np.put_along_axis(grad, targets[..., None],
                      np.take_along_axis(grad, targets[..., None], axis=-1) - 1.0, axis=-1)
    grad *= valid[..., None] / count
    return loss, grad


def loss_and_grad(params: ModelParams, enc: np.ndarray, dec_in: np.ndarray,
                  targets: np.ndarray) -> tuple[float, dict[str, np.ndarray]]:
    """Teacher-forced loss and its gradient for every tensor."""
    cfg = params.config
    enc = np.asarray(enc, dtype=np.int64)
    dec_in = np.asarray(dec_in, dtype=np.int64)
    _check_tokens(cfg, enc, dec_in)
    enc_caches: list = []
    dec_caches: list = []
    enc_mask = enc != PAD
    mem = encode(params, enc, enc_caches)
    logits = decode(params, mem, enc_mask, dec_in, dec_caches)
    loss, dlogits = cross_entropy_loss(logits, targets, with_grad=True)

    g = {k: np.zeros_like(v) for k, v in params.tensors.items()}

    c_lnf, y = dec_caches.pop()
    g["out"] = np.tensordot(y, dlogits, axes=((0, 1), (0, 1)))
    dx, g["dec.ln_f"] = L.layer_norm_backward(dlogits @ params["out"].T, c_lnf)
    dmem = np.zeros_like(mem)
    for i in reversed(range(cfg.n_dec)):
        p = f"dec.{i}"
        c_ln1, c_self, c_ln2, c_cross, c_ln3, c_ffn = dec_caches[i]
        dh, *dw = L.ffn_backward(dx, c_ffn)
        for name, val in zip(("w1", "b1", "w2", "b2"), dw):
            g[f"{p}.ffn.{name}"] = val
        dres, g[f"{p}.ln3"] = L.layer_norm_backward(dh, c_ln3)
        dx = dx + dres
        dq, dkv, *dw = L.attention_backward(dx, c_cross)
        for name, val in zip(_ATTN, dw):
            g[f"{p}.cross.{name}"] = val
        dmem += dkv
        dres, g[f"{p}.ln2"] = L.layer_norm_backward(dq, c_ln2)
        dx = dx + dres
        dq, dkv, *dw = L.attention_backward(dx, c_self)
        for name, val in zip(_ATTN, dw):
            g[f"{p}.self.{name}"] = val
        dres, g[f"{p}.ln1"] = L.layer_norm_backward(dq + dkv, c_ln1)
        dx = dx + dres
    np.add.at(g["embed"], dec_in, dx)

    c_lnf = enc_caches.pop()
    dx, g["enc.ln_f"] = L.layer_norm_backward(dmem, c_lnf)
    for i in reversed(range(cfg.n_enc)):
        p = f"enc.{i}"
        c_ln1, c_att, c_ln2, c_ffn = enc_caches[i]
        dh, *dw = L.ffn_backward(dx, c_ffn)
        for name, val in zip(("w1", "b1", "w2", "b2"), dw):
            g[f"{p}.ffn.{name}"] = val
        dres, g[f"{p}.ln2"] = L.layer_norm_backward(dh, c_ln2)
        dx = dx + dres
        dq, dkv, *dw = L.attention_backward(dx, c_att)
        for name, val in zip(_ATTN, dw):
            g[f"{p}.self.{name}"] = val
        dres, g[f"{p}.ln1"] = L.layer_norm_backward(dq + dkv, c_ln1)
        dx = dx + dres
    np.add.at(g["embed"], enc, dx)
    return loss, g


def batch_loss(params: ModelParams, enc, dec_in, targets) -> float:
    logits = forward(params, np.asarray(enc), np.asarray(dec_in))
    return cross_entropy_loss(logits, targets)
