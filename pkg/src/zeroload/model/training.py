"""Tokenized training windows, batching, and AdamW training with a linear decay."""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

from ..errors import DivergedLoss, ValidationError
from ..series import TimeSeries
from ..tokenizer import PAD, eos_token, fit_context_bins, mean_scale, quantize
from .network import ModelConfig, ModelParams, batch_loss, init_params, loss_and_grad

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainSpec:
    steps: int = 1000
    batch_size: int = 32
    lr: float = 1e-3
    weight_decay: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    clip_norm: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.steps < 1:
            raise ValidationError("steps must be at least 1")
        if self.batch_size < 1:
            raise ValidationError("batch_size must be at least 1")
        if self.lr < 0 or self.weight_decay < 0:
            raise ValidationError("lr and weight_decay must be non-negative")

    def learning_rate(self, step: int) -> float:
        """Linear decay from ``lr`` at step 0 to exactly 0 at the last step."""
        if self.steps == 1:
            return 0.0
        return self.lr * (1.0 - step / (self.steps - 1))

    def to_json(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class TokenWindow:
    """Encoder input (context tokens then EOS) and the target bin tokens."""

    enc: np.ndarray
    target: np.ndarray


@dataclass
class TrainResult:
    params: ModelParams
    losses: list[float] = field(default_factory=list)
    heldout_initial: float | None = None
    heldout_final: float | None = None


def tokenize_window(context: Sequence[float], future: Sequence[float], n_bins: int,
                    strategy: str = "uniform") -> TokenWindow:
    """Tokenize a (context, future) pair with scaling and bins fit on the context."""
    scaled, scaling = mean_scale(context)
    bins = fit_context_bins(scaled, n_bins, strategy)
    ctx = quantize(scaled, bins).tokens
    fut = quantize(scaling.apply(future), bins).tokens
    return TokenWindow(np.append(ctx, eos_token(n_bins)), fut)


def make_windows(series: Sequence[TimeSeries], context: int, horizon: int, n_bins: int,
                 per_series: int = 1, seed: int = 0, strategy: str = "uniform") -> list[TokenWindow]:
    """Cut ``per_series`` random (context, horizon) windows from each series."""
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, 0x5EED])))
    out = []
    for ts in series:
        span = context + horizon
        if len(ts) < span:
            continue
        for _ in range(per_series):
            start = int(rng.integers(0, len(ts) - span + 1))
            v = ts.values[start : start + span]
            out.append(tokenize_window(v[:context], v[context:], n_bins, strategy))
    if not out:
        raise ValidationError("no series is long enough for the requested windows")
    return out


def collate(windows: Sequence[TokenWindow]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Right-pad into ``(enc, dec_in, targets)``; the decoder starts from PAD."""
    te = max(len(w.enc) for w in windows)
    td = max(len(w.target) for w in windows)
    enc = np.full((len(windows), te), PAD, dtype=np.int64)
    tgt = np.full((len(windows), td), PAD, dtype=np.int64)
    for i, w in enumerate(windows):
        enc[i, : len(w.enc)] = w.enc
        tgt[i, : len(w.target)] = w.target
    dec_in = np.full_like(tgt, PAD)
    dec_in[:, 1:] = tgt[:, :-1]
    return enc, dec_in, tgt


class AdamW:
    """Adam with decoupled weight decay; layer-norm scales and biases are not decayed."""

    def __init__(self, params: ModelParams, spec: TrainSpec):
        self.spec = spec
        self.m = {k: np.zeros_like(v) for k, v in params.tensors.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.tensors.items()}
        self.t = 0

    def step(self, params: ModelParams, grads: dict[str, np.ndarray], lr: float) -> None:
        s = self.spec
        self.t += 1
        c1 = 1.0 - s.beta1**self.t
        c2 = 1.0 - s.beta2**self.t
        for name, p in params.tensors.items():
            g = grads[name]
            m, v = self.m[name], self.v[name]
            m *= s.beta1
            m += (1 - s.beta1) * g
            v *= s.beta2
            v += (1 - s.beta2) * g * g
            update = (m / c1) / (np.sqrt(v / c2) + s.adam_eps)
            if p.ndim >= 2:
                update = update + s.weight_decay * p
            p -= lr * update


def clip_gradients(grads: dict[str, np.ndarray], max_norm: float) -> float:
    norm = float(np.sqrt(sum(float(np.sum(g * g)) for g in grads.values())))
    if max_norm > 0 and norm > max_norm:
        scale = max_norm / (norm + 1e-12)
        for g in grads.values():
            g *= scale
    return norm


def train(corpus: Sequence[TokenWindow], config: ModelConfig, spec: TrainSpec,
          heldout: Sequence[TokenWindow] | None = None,
          init: ModelParams | None = None,
          callback: Callable[[int, float], None] | None = None) -> TrainResult:
    """Fit the model on ``corpus`` with teacher forcing.

    Training runs in float64; the returned parameters are cast to float32,
    which is the checkpoint storage precision.
    """
    if not corpus:
        raise ValidationError("training corpus is empty")
    if max(int(w.target.max()) for w in corpus) > config.n_bins:
        raise ValidationError("corpus tokens exceed the model's bin count")
    params = (init.astype(np.float64) if init is not None
              else init_params(config, spec.seed, np.float64))
    opt = AdamW(params, spec)
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([spec.seed, 1])))
    held = collate(heldout) if heldout else None
    result = TrainResult(params)
    if held is not None:
        result.heldout_initial = batch_loss(params, *held)

    order = rng.permutation(len(corpus))
    cursor = 0
    for step in range(spec.steps):
        if cursor + spec.batch_size > len(order):
            order = rng.permutation(len(corpus))
            cursor = 0
        idx = order[cursor : cursor + spec.batch_size]
        cursor += spec.batch_size
        loss, grads = loss_and_grad(params, *collate([corpus[i] for i in idx]))
        if not np.isfinite(loss):
            raise DivergedLoss(f"loss became {loss} at step {step}")
        clip_gradients(grads, spec.clip_norm)
        opt.step(params, grads, spec.learning_rate(step))
        result.losses.append(loss)
        if callback is not None:
            callback(step, loss)
        if step % 100 == 0:
            log.debug("step %d loss %.4f", step, loss)

    if not all(np.isfinite(v).all() for v in params.tensors.values()):
        raise DivergedLoss("non-finite parameters after training")
    result.params = params.astype(np.float32)
    if held is not None:
        result.heldout_final = batch_loss(result.params.astype(np.float64), *held)
    return result
