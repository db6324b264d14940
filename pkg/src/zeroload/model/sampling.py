"""Autoregressive sampling of token paths and their conversion to quantiles."""
from __future__ import annotations

from typing import Sequence

import numpy as np

from ..errors import LengthExceeded, ValidationError
from ..forecast import QuantileForecast
from ..series import DEFAULT_QUANTILES
from ..tokenizer import PAD, TokenizerSpec, dequantize, eos_token, fit_context_bins, mean_scale, quantize
from .layers import softmax
from .network import ModelParams, decode, encode


def _draw(logits: np.ndarray, temperature: float, rng: np.random.Generator) -> np.ndarray:
    """One bin index (0-based) per row by inverse-CDF sampling, or argmax at temperature 0."""
    if temperature <= 0:
        return np.argmax(logits, axis=-1)
    probs = softmax(logits / temperature, axis=-1)
    cdf = np.cumsum(probs, axis=-1)
    u = rng.random(len(probs)) * cdf[:, -1]
    idx = np.array([np.searchsorted(c, x, side="right") for c, x in zip(cdf, u)])
    return np.minimum(idx, probs.shape[-1] - 1)


def sample_tokens(params: ModelParams, enc_tokens: np.ndarray, horizon: int, n_samples: int,
                  rng: np.random.Generator, temperature: float = 1.0) -> np.ndarray:
    """Sample ``n_samples`` bin-token paths of length ``horizon``.

    Only value bins ``1..N`` are eligible at each step.
    """
    cfg = params.config
    if horizon > cfg.horizon_len:
        raise LengthExceeded(f"horizon {horizon} exceeds the model limit {cfg.horizon_len}")
    if len(enc_tokens) > cfg.context_len:
        raise LengthExceeded(f"context of {len(enc_tokens)} tokens exceeds {cfg.context_len}")
    if params["embed"].dtype != np.float64:
        params = params.astype(np.float64)
    enc = np.asarray(enc_tokens, dtype=np.int64)[None]
    mem = np.repeat(encode(params, enc), n_samples, axis=0)
    mask = np.repeat(enc != PAD, n_samples, axis=0)
    dec = np.full((n_samples, 1), PAD, dtype=np.int64)
    for _ in range(horizon):
        logits = decode(params, mem, mask, dec)[:, -1, 1 : cfg.n_bins + 1]
        nxt = _draw(logits, temperature, rng) + 1
        dec = np.concatenate([dec, nxt[:, None]], axis=1)
    return dec[:, 1:]


def sample_forecast(params: ModelParams, context: Sequence[float], horizon: int,
                    n_samples: int = 20, rng: np.random.Generator | None = None,
                    levels: Sequence[float] = DEFAULT_QUANTILES, temperature: float = 1.0,
                    strategy: str = "uniform") -> QuantileForecast:
    """Forecast ``horizon`` steps after ``context`` by sampling token paths.

    The context is mean-scaled and binned on its own, sampled paths are
    mapped back to bin centres in original units, and quantiles are read off
    the sample ensemble by nearest rank.
    """
    if n_samples < 1:
        raise ValidationError("need at least one sample path")
    x = np.asarray(context, dtype=float)
    if x.size < 1:
        raise ValidationError("context must hold at least one value")
    cfg = params.config
    x = x[-(cfg.context_len - 1):]
    rng = rng if rng is not None else np.random.default_rng(0)
    scaled, scaling = mean_scale(x)
    bins = fit_context_bins(scaled, cfg.n_bins, strategy)
    enc = np.append(quantize(scaled, bins).tokens, eos_token(cfg.n_bins))
    paths = sample_tokens(params, enc, horizon, n_samples, rng, temperature)
    samples = np.stack([dequantize(p, bins, scaling) for p in paths])
    spec = TokenizerSpec(scaling, bins)
    return QuantileForecast.from_samples(samples, levels, meta={"tokenizer": spec.to_json()})
