"""Central-difference check of the analytic gradients."""
from __future__ import annotations

import numpy as np

from .network import ModelParams, batch_loss, loss_and_grad


def relative_error(analytic: float, numeric: float, floor: float = 1e-8) -> float:
    """``|a - n| / max(|a|, |n|, floor)``; the floor keeps near-zero gradients from dominating."""
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)


def numeric_grad(params: ModelParams, batch, name: str, index: tuple, eps: float) -> float:
    enc, dec_in, targets = batch
    t = params.tensors[name]
    orig = t[index]
    try:
        t[index] = orig + eps
        up = batch_loss(params, enc, dec_in, targets)
        t[index] = orig - eps
        down = batch_loss(params, enc, dec_in, targets)
    finally:
        t[index] = orig
    return (up - down) / (2 * eps)


def sample_coordinates(params: ModelParams, count: int, rng: np.random.Generator):
    """Spread ``count`` coordinates over every tensor, then fill at random."""
    names = list(params.tensors)
    coords = []
    for i in range(count):
        name = names[i % len(names)] if i < len(names) else names[rng.integers(len(names))]
        shape = params.tensors[name].shape
        coords.append((name, tuple(int(rng.integers(s)) for s in shape)))
    return coords


def grad_check(params: ModelParams, batch, eps: float = 1e-5, count: int = 200,
               seed: int = 0, details: bool = False):
    """Compare analytic and finite-difference gradients on sampled coordinates.

    ``params`` must be float64. Returns the max relative error, or with
    ``details`` a list of ``(name, index, analytic, numeric, rel_err)``.
    """
    if any(v.dtype != np.float64 for v in params.tensors.values()):
        raise ValueError("gradient checks need float64 parameters")
    _, grads = loss_and_grad(params, *batch)
    rng = np.random.Generator(np.random.PCG64(seed))
    rows = []
    for name, index in sample_coordinates(params, count, rng):
        a = float(grads[name][index])
        n = numeric_grad(params, batch, name, index, eps)
        rows.append((name, index, a, n, relative_error(a, n)))
    if details:
        return rows
    return max(r[4] for r in rows)
