"""Training objectives, the adversarial value estimate, and finite-difference gradient checks."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from loggan.corpus import BOS, PAD
from loggan.neural import autograd as ag
from loggan.neural.autograd import Tensor, no_grad
from loggan.neural.nets import PROB_EPS, DiscriminatorNet, GeneratorNet, Module


class DomainError(ValueError):
    """A probability argument lies outside the open interval (0, 1)."""


def _check_open_unit(values: Sequence[float], what: str) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if arr.size == 0:
        raise DomainError(f"{what}: empty")
    if not np.all((arr > 0.0) & (arr < 1.0)):
        raise DomainError(f"{what}: values must lie strictly inside (0, 1)")
    return arr


def clamped_log(p: np.ndarray) -> np.ndarray:
    return np.log(np.clip(p, PROB_EPS, 1.0 - PROB_EPS))


def value_function(d_real: Sequence[float], d_fake: Sequence[float]) -> float:
    """Empirical minimax value: mean log D(x) over reals plus mean log(1 - D(G(z))) over fakes."""
    real = _check_open_unit(d_real, "d_real")
    fake = _check_open_unit(d_fake, "d_fake")
    return float(clamped_log(real).mean() + clamped_log(1.0 - fake).mean())


def teacher_forcing(ids: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Split EOS-terminated padded ids into (inputs with BOS, targets, mask)."""
    ids = np.asarray(ids)
    inputs = np.concatenate([np.full((ids.shape[0], 1), BOS, dtype=ids.dtype), ids[:, :-1]], axis=1)
    mask = (ids != PAD)
    return inputs, ids, mask


def sequence_log_probs(g: GeneratorNet, ids: np.ndarray) -> tuple[Tensor, np.ndarray]:
    """Per-token log-probabilities of ``ids`` under ``g``, shape (batch, steps), and the token mask."""
    inputs, targets, mask = teacher_forcing(ids)
    lp = g.log_probs(inputs)
    return ag.pick(lp, targets), mask


def mle_loss(g: GeneratorNet, ids: np.ndarray) -> Tensor:
    """Mean per-token negative log-likelihood."""
    tok_lp, mask = sequence_log_probs(g, ids)
    m = mask.astype(tok_lp.dtype)
    return -(tok_lp * m).sum() * (1.0 / max(float(m.sum()), 1.0))


def nll_per_token(g: GeneratorNet, ids: np.ndarray, batch_size: int = 256) -> float:
    total, count = 0.0, 0
    with no_grad():
        for i in range(0, len(ids), batch_size):
            chunk = ids[i:i + batch_size]
            chunk = chunk[:, : max(int((chunk != PAD).sum(axis=1).max()), 1)]
            tok_lp, mask = sequence_log_probs(g, chunk)
            total -= float((tok_lp.data.astype(np.float64) * mask).sum())
            count += int(mask.sum())
    return total / max(count, 1)


def bce_loss(d: DiscriminatorNet, ids: np.ndarray, labels: np.ndarray) -> Tensor:
    """Mean binary cross-entropy of the discriminator (labels 1 = real)."""
    z = d.logits(ids)
    y = np.asarray(labels, dtype=z.dtype)
    # log D = log_sigmoid(z); log(1 - D) = log_sigmoid(-z)
    ll = ag.log_sigmoid(z) * y + ag.log_sigmoid(-z) * (1.0 - y)
    return -ll.mean()


def grad_check(net: Module, loss: Callable[[Module], Tensor], epsilon: float = 1e-3,
               n_samples: int = 40, seed: int = 0, dtype=np.float64) -> float:
    """Max relative error between reverse-mode and central-difference gradients.

    The check runs on a ``dtype`` copy of ``net`` (float64 by default so the
    finite differences are not swamped by rounding) over a random subset of
    parameter entries. ``loss`` must be deterministic in the parameters.
    """
    net = net.to_dtype(dtype)
    net.zero_grad()
    out = loss(net)
    out.backward()
    analytic = {k: (p.grad if p.grad is not None else np.zeros_like(p.data)) for k, p in net.params.items()}

    rng = np.random.default_rng(seed)
    names = list(net.params)
    sizes = np.array([net.params[k].data.size for k in names], dtype=float)
    worst = 0.0
    with no_grad():
        for _ in range(n_samples):
            k = names[rng.choice(len(names), p=sizes / sizes.sum())]
            p = net.params[k]
            flat = p.data.reshape(-1)
            i = int(rng.integers(flat.size))
            orig = flat[i]
            flat[i] = orig + epsilon
            up = loss(net).item()
            flat[i] = orig - epsilon
            down = loss(net).item()
            flat[i] = orig
            numeric = (up - down) / (2 * epsilon)
            a = float(analytic[k].reshape(-1)[i])
            err = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
            worst = max(worst, err)
    return worst
