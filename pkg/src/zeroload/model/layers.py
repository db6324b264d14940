"""Transformer building blocks with explicit forward and backward passes.

Orientation is rows-as-tokens throughout: an input of shape ``(..., T, d)``
is projected as ``Q = X @ W_q``. Every ``*_forward`` returns ``(out, cache)``
and the matching ``*_backward`` consumes that cache.
"""
from __future__ import annotations

import numpy as np

from ..errors import ShapeMismatch

LN_EPS = 1e-5


def positional_encoding(pos: int, d_model: int) -> np.ndarray:
    """Sine on even dimensions, cosine on odd ones, shared frequency per pair."""
    return positional_table(pos + 1, d_model)[pos]


def positional_table(length: int, d_model: int) -> np.ndarray:
    pos = np.arange(length, dtype=float)[:, None]
    pair = np.arange(d_model) // 2
    angle = pos / np.power(10000.0, 2.0 * pair / d_model)
    return np.where(np.arange(d_model) % 2 == 0, np.sin(angle), np.cos(angle))


def softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    z = x - np.max(x, axis=axis, keepdims=True)
    e = np.exp(z)
    return e / np.sum(e, axis=axis, keepdims=True)


def log_softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    z = x - np.max(x, axis=axis, keepdims=True)
    return z - np.log(np.sum(np.exp(z), axis=axis, keepdims=True))


# -- layer norm -------------------------------------------------------------

def layer_norm_forward(x: np.ndarray, gamma: np.ndarray, eps: float = LN_EPS):
    xc = x - x.mean(axis=-1, keepdims=True)
    # second pass removes the rounding left by the first mean
    xc = xc - xc.mean(axis=-1, keepdims=True)
    sigma = np.sqrt(np.mean(xc * xc, axis=-1, keepdims=True))
    denom = sigma + eps
    n = xc / denom
    return n * gamma, (xc, sigma, denom, n, gamma)


def layer_norm_backward(dy: np.ndarray, cache):
    xc, sigma, denom, n, gamma = cache
    d = xc.shape[-1]
    dgamma = np.sum(dy * n, axis=tuple(range(dy.ndim - 1)))
    dn = dy * gamma
    dxc = dn / denom
    ddenom = -np.sum(dn * xc, axis=-1, keepdims=True) / denom**2
    # d sigma / d xc = xc / (d * sigma); xc is 0 wherever sigma is 0
    safe = np.where(sigma > 0, sigma, 1.0)
    dxc = dxc + ddenom * xc / (d * safe)
    dx = dxc - dxc.mean(axis=-1, keepdims=True)
    return dx, dgamma


def layer_norm(x: np.ndarray, gamma: np.ndarray, eps: float = LN_EPS) -> np.ndarray:
    """``(x - mean) / (std + eps) * gamma`` over the last axis, population std."""
    return layer_norm_forward(np.asarray(x, dtype=float), np.asarray(gamma, dtype=float), eps)[0]


# -- feed-forward -----------------------------------------------------------

def ffn_forward(x, w1, b1, w2, b2):
    if x.shape[-1] != w1.shape[0] or w1.shape[1] != w2.shape[0] or b1.shape != (w1.shape[1],) \
            or b2.shape != (w2.shape[1],):
        raise ShapeMismatch("feed-forward weights do not chain")
    h1 = x @ w1 + b1
    a1 = np.maximum(h1, 0.0)
    h2 = a1 @ w2 + b2
    out = np.maximum(h2, 0.0)
    return out, (x, h1, a1, h2, w1, w2)


def ffn_backward(dout, cache):
    x, h1, a1, h2, w1, w2 = cache
    dh2 = dout * (h2 > 0)
    lead = tuple(range(dout.ndim - 1))
    dw2 = np.tensordot(a1, dh2, axes=(lead, lead))
    db2 = dh2.sum(axis=lead)
    da1 = dh2 @ w2.T
    dh1 = da1 * (h1 > 0)
    dw1 = np.tensordot(x, dh1, axes=(lead, lead))
    db1 = dh1.sum(axis=lead)
    dx = dh1 @ w1.T
    return dx, dw1, db1, dw2, db2


def ffn(x, w1, b1, w2, b2) -> np.ndarray:
    """Two dense layers, each followed by ReLU (the outer ReLU included)."""
    args = [np.asarray(a, dtype=float) for a in (x, w1, b1, w2, b2)]
    return ffn_forward(*args)[0]


def residual(x, fx) -> np.ndarray:
    x, fx = np.asarray(x, dtype=float), np.asarray(fx, dtype=float)
    if x.shape != fx.shape:
        raise ShapeMismatch(f"residual shapes differ: {x.shape} vs {fx.shape}")
    return fx + x


# -- attention --------------------------------------------------------------

NEG_INF = -1e30


def _split(x, n_heads):
    b, t, d = x.shape
    return x.reshape(b, t, n_heads, d // n_heads).transpose(0, 2, 1, 3)


def _merge(x):
    b, h, t, dh = x.shape
    return x.transpose(0, 2, 1, 3).reshape(b, t, h * dh)


def attention_forward(xq, xkv, wq, wk, wv, wo, n_heads: int, mask=None):
    """Multi-head scaled dot-product attention.

    ``xq`` is ``(B, Tq, d)``, ``xkv`` is ``(B, Tk, d)``. ``mask`` is a
    boolean array broadcastable to ``(B, H, Tq, Tk)``; False entries get zero
    weight. Every query row must keep at least one allowed key.
    """
    d = xq.shape[-1]
    if xkv.shape[-1] != d or d % n_heads:
        raise ShapeMismatch("attention width must match and divide by the head count")
    for w in (wq, wk, wv, wo):
        if w.shape != (d, d):
            raise ShapeMismatch(f"attention weight has shape {w.shape}, expected {(d, d)}")
    dh = d // n_heads
    q = _split(xq @ wq, n_heads)
    k = _split(xkv @ wk, n_heads)
    v = _split(xkv @ wv, n_heads)
    scores = q @ k.transpose(0, 1, 3, 2) / np.sqrt(dh)
    if mask is not None:
        scores = np.where(mask, scores, NEG_INF)
    attn = softmax(scores, axis=-1)
    ctx = _merge(attn @ v)
    out = ctx @ wo
    return out, (xq, xkv, q, k, v, attn, ctx, wq, wk, wv, wo, n_heads)


def attention_backward(dout, cache):
    """Returns ``(dxq, dxkv, dwq, dwk, dwv, dwo)``."""
    xq, xkv, q, k, v, attn, ctx, wq, wk, wv, wo, n_heads = cache
    dh = q.shape[-1]
    dwo = np.tensordot(ctx, dout, axes=((0, 1), (0, 1)))
    dctx = _split(dout @ wo.T, n_heads)
    dattn = dctx @ v.transpose(0, 1, 3, 2)
    dv = attn.transpose(0, 1, 3, 2) @ dctx
    dscores = attn * (dattn - np.sum(dattn * attn, axis=-1, keepdims=True))
    dscores /= np.sqrt(dh)
    dq = _merge(dscores @ k)
    dk = _merge(dscores.transpose(0, 1, 3, 2) @ q)
    dv = _merge(dv)
    dwq = np.tensordot(xq, dq, axes=((0, 1), (0, 1)))
    dwk = np.tensordot(xkv, dk, axes=((0, 1), (0, 1)))
    dwv = np.tensordot(xkv, dv, axes=((0, 1), (0, 1)))
    dxq = dq @ wq.T
    dxkv = dk @ wk.T + dv @ wv.T
    return dxq, dxkv, dwq, dwk, dwv, dwo


def causal_mask(t: int) -> np.ndarray:
    return np.tril(np.ones((t, t), dtype=bool))[None, None]


def self_attention(x, weights: dict, n_heads: int = 1, causal: bool = False,
                   return_weights: bool = False):
    """Attention of a single ``(T, d)`` sequence over itself.

    ``weights`` holds ``wq``, ``wk``, ``wv`` and optionally ``wo`` (identity
    when absent).
    """
    x = np.asarray(x, dtype=float)
    if x.ndim != 2:
        raise ShapeMismatch("expected a (T, d) matrix")
    d = x.shape[1]
    wo = weights.get("wo", np.eye(d))
    mask = causal_mask(x.shape[0]) if causal else None
    out, cache = attention_forward(
        x[None], x[None], np.asarray(weights["wq"], float), np.asarray(weights["wk"], float),
        np.asarray(weights["wv"], float), np.asarray(wo, float), n_heads, mask,
    )
    if return_weights:
        return out[0], cache[5][0]
    return out[0]
