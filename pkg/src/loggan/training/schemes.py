"""MLE pretraining and the three adversarial/cooperative training schemes.

All randomness flows through :class:`NoiseSource` streams keyed by
``(seed, tag, epoch, batch, ...)``, so runs are reproducible bit for bit and
rollouts can fan out to threads without changing results.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from loggan.corpus import EOS, PAD, CorpusSplit, Vocabulary, encode_batch
from loggan.neural import autograd as ag
from loggan.neural.autograd import NumericalError, Tensor, no_grad
from loggan.neural.nets import (
    DiscriminatorNet,
    GeneratorNet,
    MediatorNet,
    NoiseSource,
    Sampled,
    clamp_prob,
    sample_batch,
)
from loggan.neural.objectives import DomainError, bce_loss, mle_loss, sequence_log_probs, teacher_forcing
from loggan.training.config import Scheme, TrainConfig
from loggan.training.metrics import MetricsRow, TrainingMetrics, compute_metrics, discriminator_scores
from loggan.training.optim import clip_grads, make_optimizer

log = logging.getLogger(__name__)

EpochHook = Callable[[MetricsRow], None]

TAG_SHUFFLE, TAG_GEN, TAG_ROLLOUT, TAG_DFAKE, TAG_DSHUFFLE, TAG_MIX, TAG_AUX = 1, 2, 3, 4, 5, 6, 9


@dataclass(frozen=True)
class EncodedSplit:
    """Train/test id matrices (EOS-terminated, PAD-padded) over one vocabulary."""

    train: np.ndarray
    test: np.ndarray
    vocab: Vocabulary

    @classmethod
    def from_split(cls, split: CorpusSplit, vocab: Vocabulary, max_len: int) -> "EncodedSplit":
        return cls.from_lines(split.train_lines(), split.test_lines(), vocab, max_len)

    @classmethod
    def from_lines(cls, train: Sequence[str], test: Sequence[str], vocab: Vocabulary, max_len: int) -> "EncodedSplit":
        return cls(encode_batch(list(train), vocab, max_len), encode_batch(list(test), vocab, max_len), vocab)


def _batches(n: int, batch_size: int, noise: NoiseSource) -> list[np.ndarray]:
    order = noise.rng.permutation(n)
    return [order[i:i + batch_size] for i in range(0, n, batch_size)]


def _trim(ids: np.ndarray) -> np.ndarray:
    width = max(int((ids != PAD).sum(axis=1).max()), 1)
    return ids[:, :width]


def _step(net, loss: Tensor, opt, clip: float) -> float:
    net.zero_grad()
    loss.backward()
    clip_grads(net, clip)
    opt.step()
    return loss.item()


# --------------------------------------------------------------------------- MLE

def pretrain_mle(g: GeneratorNet, data: EncodedSplit, cfg: TrainConfig, epochs: int | None = None,
                 start_epoch: int = 0, lr: float | None = None, on_epoch: EpochHook | None = None) -> TrainingMetrics:
    """Teacher-forced maximum likelihood; one metrics row per epoch.

    On a non-finite value the generator is restored to its state at the end
    of the last good epoch and the error is re-raised.
    """
    epochs = cfg.mle_epochs if epochs is None else epochs
    opt = make_optimizer(cfg.optimizer, g, cfg.g_lr_mle if lr is None else lr)
    history = TrainingMetrics()
    good = g.state_dict()
    for e in range(start_epoch + 1, start_epoch + epochs + 1):
        losses = []
        try:
            for b, idx in enumerate(_batches(len(data.train), cfg.batch_size, NoiseSource.derive(cfg.seed, TAG_SHUFFLE, e))):
                losses.append(_step(g, mle_loss(g, _trim(data.train[idx])), opt, cfg.grad_clip))
        except NumericalError:
            g.load_state_dict(good)
            raise
        good = g.state_dict()
        row = compute_metrics(g, None, data.test, e, cfg.seed, cfg.max_len, g_loss=float(np.mean(losses)),
                              probe_samples=cfg.probe_samples, phase="mle")
        log.info("mle epoch %d: loss %.4f held-out nll %.4f", e, row.g_loss, row.g_nll)
        history.append(row)
        if on_epoch:
            on_epoch(row)
    return history


# --------------------------------------------------------------------------- discriminator

def d_step(d: DiscriminatorNet, opt, reals: np.ndarray, fakes: np.ndarray, clip: float) -> float:
    """One binary cross-entropy update on equal numbers of real and generated sequences."""
    n = min(len(reals), len(fakes))
    reals, fakes = reals[:n], fakes[:n]
    width = max(reals.shape[1], fakes.shape[1])
    ids = np.full((2 * n, width), PAD, dtype=np.int64)
    ids[:n, :reals.shape[1]] = reals
    ids[n:, :fakes.shape[1]] = fakes
    labels = np.concatenate([np.ones(n), np.zeros(n)])
    return _step(d, bce_loss(d, _trim(ids), labels), opt, clip)


def pretrain_discriminator(d: DiscriminatorNet, g: GeneratorNet, data: EncodedSplit, cfg: TrainConfig,
                           epochs: int | None = None, tag: int = TAG_DSHUFFLE,
                           fakes: np.ndarray | None = None) -> float:
    """Train D on real vs G samples (or a given fake pool) for whole passes over the training set."""
    epochs = cfg.d_pretrain_epochs if epochs is None else epochs
    opt = make_optimizer(cfg.optimizer, d, cfg.d_lr)
    losses = [math.nan]
    for e in range(epochs):
        for b, idx in enumerate(_batches(len(data.train), cfg.batch_size, NoiseSource.derive(cfg.seed, tag, e))):
            if fakes is None:
                fk = sample_batch(g, NoiseSource.derive(cfg.seed, tag, e, b), len(idx), cfg.max_len).ids
            else:
                fk = fakes[NoiseSource.derive(cfg.seed, tag, e, b, 1).integers(0, len(fakes), len(idx))]
            losses.append(d_step(d, opt, data.train[idx], fk, cfg.grad_clip))
    return float(np.nanmean(losses)) if len(losses) > 1 else math.nan


# --------------------------------------------------------------------------- policy gradient

def rollout_rewards(g: GeneratorNet, d: DiscriminatorNet, sampled: Sampled, k: int, noise_key: tuple[int, ...],
                    max_len: int, workers: int = 1) -> np.ndarray:
    """Q(prefix) per generated token: mean D score over ``k`` Monte-Carlo completions.

    The final token of each sequence is scored by D on the sequence itself.
    ``sampled`` must carry hidden states (``keep_hiddens=True``).
    """
    ids = sampled.ids
    B, L = ids.shape
    lengths = np.where((ids == EOS).any(axis=1), np.argmax(ids == EOS, axis=1) + 1, (ids != PAD).sum(axis=1))
    rewards = np.zeros((B, L), dtype=np.float64)
    full = discriminator_scores(d, ids)
    rewards[np.arange(B), lengths - 1] = full

    def one_prefix(t: int) -> tuple[int, np.ndarray, np.ndarray]:
        rows = np.nonzero(lengths > t + 1)[0]
        if rows.size == 0:
            return t, rows, np.zeros(0)
        noise = NoiseSource.derive(*noise_key, t)
        rep = np.repeat(rows, k)
        completed = _complete(g, ids[rep, :t + 1], sampled.hiddens[t][rep], noise, max_len)
        scores = discriminator_scores(d, completed).reshape(rows.size, k).mean(axis=1)
        return t, rows, scores

    ts = range(L - 1)
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(one_prefix, ts))
    else:
        results = [one_prefix(t) for t in ts]
    for t, rows, scores in results:
        rewards[rows, t] = scores
    return rewards


def _complete(g: GeneratorNet, prefix: np.ndarray, h: np.ndarray, noise: NoiseSource, max_len: int) -> np.ndarray:
    """Continue sampling after ``prefix`` (whose last token is not EOS) until EOS or ``max_len``."""
    n, t0 = prefix.shape
    out = np.full((n, max_len), PAD, dtype=np.int64)
    out[:, :t0] = prefix
    tokens = prefix[:, -1]
    done = np.zeros(n, dtype=bool)
    for t in range(t0, max_len):
        logits, h = g.step_np(tokens, h)
        probs = ag.softmax_np(logits.astype(np.float64))
        cdf = np.cumsum(probs, axis=1)
        u = noise.uniform(n)[:, None] * cdf[:, -1:]
        nxt = np.minimum((cdf < u).sum(axis=1), g.vocab_size - 1)
        if t == max_len - 1:
            nxt = np.full(n, EOS)
        nxt = np.where(done, PAD, nxt)
        out[:, t] = nxt
        done |= nxt == EOS
        tokens = np.where(done, EOS, nxt)
        if done.all():
            break
    return out


def pg_surrogate(g: GeneratorNet, ids: np.ndarray, advantages: np.ndarray) -> Tensor:
    """REINFORCE surrogate: -sum(advantage * log p(token)) over tokens / token count."""
    tok_lp, mask = sequence_log_probs(g, ids)
    weight = (advantages[:, : ids.shape[1]] * mask).astype(tok_lp.dtype)
    return -(tok_lp * weight).sum() * (1.0 / max(float(mask.sum()), 1.0))


class MovingBaseline:
    def __init__(self, decay: float):
        self.decay = decay
        self.value: float | None = None

    def advantage(self, rewards: np.ndarray, mask: np.ndarray) -> np.ndarray:
        """Rewards minus the baseline as it stood before this batch; then fold the batch mean in."""
        mean_r = float(rewards[mask].mean()) if mask.any() else 0.0
        if self.value is None:
            self.value = mean_r
        adv = (rewards - self.value) * mask
        self.value = self.decay * self.value + (1.0 - self.decay) * mean_r
        return adv


def train_adversarial_pg(g: GeneratorNet, d: DiscriminatorNet, data: EncodedSplit, cfg: TrainConfig,
                         start_epoch: int = 0, on_epoch: EpochHook | None = None) -> TrainingMetrics:
    return _train_adversarial(g, d, data, cfg, Scheme.POLICY_GRADIENT, start_epoch, on_epoch)


def train_adversarial_iw(g: GeneratorNet, d: DiscriminatorNet, data: EncodedSplit, cfg: TrainConfig,
                         start_epoch: int = 0, on_epoch: EpochHook | None = None) -> TrainingMetrics:
    return _train_adversarial(g, d, data, cfg, Scheme.IMPORTANCE_WEIGHTED, start_epoch, on_epoch)


# --------------------------------------------------------------------------- importance weighting

def importance_weights(d_probs: np.ndarray) -> np.ndarray:
    """Normalized r = D/(1-D) weights over a batch (non-negative, summing to 1)."""
    p = clamp_prob(np.asarray(d_probs, dtype=np.float64))
    if np.any(p <= 0.0) or np.any(p >= 1.0):
        raise DomainError("discriminator output at 0 or 1 after clamping")
    r = p / (1.0 - p)
    return r / r.sum()


def iw_surrogate(g: GeneratorNet, ids: np.ndarray, weights: np.ndarray) -> Tensor:
    """-sum_i (w_i - 1/B) * log G(x_i), sequence log-likelihoods summed over tokens."""
    tok_lp, mask = sequence_log_probs(g, ids)
    coef = (np.asarray(weights, dtype=np.float64) - 1.0 / len(ids))[:, None] * mask
    return -(tok_lp * coef.astype(tok_lp.dtype)).sum()


def _train_adversarial(g, d, data: EncodedSplit, cfg: TrainConfig, scheme: Scheme, start_epoch: int,
                       on_epoch: EpochHook | None) -> TrainingMetrics:
    g_opt = make_optimizer(cfg.optimizer, g, cfg.g_lr_adv)
    d_opt = make_optimizer(cfg.optimizer, d, cfg.d_lr)
    baseline = MovingBaseline(cfg.baseline_decay)
    history = TrainingMetrics()
    good = (g.state_dict(), d.state_dict())
    for e in range(start_epoch + 1, start_epoch + cfg.adv_epochs + 1):
        g_losses, d_losses = [], []
        try:
            batches = _batches(len(data.train), cfg.batch_size, NoiseSource.derive(cfg.seed, TAG_SHUFFLE, e))
            for b, idx in enumerate(batches):
                sampled = sample_batch(g, NoiseSource.derive(cfg.seed, TAG_GEN, e, b), cfg.batch_size, cfg.max_len,
                                       keep_hiddens=scheme is Scheme.POLICY_GRADIENT)
                ids = _trim(sampled.ids)
                if scheme is Scheme.POLICY_GRADIENT:
                    rewards = rollout_rewards(g, d, sampled, cfg.rollouts, (cfg.seed, TAG_ROLLOUT, e, b),
                                              cfg.max_len, cfg.workers)[:, : ids.shape[1]]
                    mask = ids != PAD
                    adv = baseline.advantage(rewards, mask)
                    loss = pg_surrogate(g, ids, adv)
                    with no_grad():
                        report = -float((sequence_log_probs(g, ids)[0].data * rewards * mask).sum() / mask.sum())
                else:
                    w = importance_weights(discriminator_scores(d, ids))
                    loss = iw_surrogate(g, ids, w)
                    with no_grad():
                        tok_lp, mask = sequence_log_probs(g, ids)
                        report = -float(((tok_lp.data * mask).sum(axis=1) * w).sum())
                _step(g, loss, g_opt, cfg.grad_clip)
                g_losses.append(report)
                fakes = sample_batch(g, NoiseSource.derive(cfg.seed, TAG_DFAKE, e, b), len(idx), cfg.max_len).ids
                d_losses.append(d_step(d, d_opt, data.train[idx], fakes, cfg.grad_clip))
        except NumericalError:
            g.load_state_dict(good[0])
            d.load_state_dict(good[1])
            raise
        good = (g.state_dict(), d.state_dict())
        row = compute_metrics(g, d, data.test, e, cfg.seed, cfg.max_len, g_loss=float(np.mean(g_losses)),
                              d_loss=float(np.mean(d_losses)), probe_samples=cfg.probe_samples, phase=scheme.value)
        log.info("%s epoch %d: g %.4f d %.4f nll %.4f acc %.3f", scheme.label, e, row.g_loss, row.d_loss,
                 row.g_nll, row.acc)
        history.append(row)
        if on_epoch:
            on_epoch(row)
    return history


# --------------------------------------------------------------------------- cooperative

def mixture_batch(reals: np.ndarray, g: GeneratorNet, noise: NoiseSource, max_len: int) -> np.ndarray:
    """Half real, half generated (equal counts; one real dropped if the batch is odd)."""
    half = len(reals) // 2
    fakes = sample_batch(g, noise, half, max_len).ids
    width = max(reals.shape[1], fakes.shape[1])
    out = np.full((2 * half, width), PAD, dtype=np.int64)
    out[:half, :reals.shape[1]] = reals[:half]
    out[half:, :fakes.shape[1]] = fakes
    return _trim(out)


def cooperative_objective(g: GeneratorNet, m: MediatorNet, ids: np.ndarray) -> Tensor:
    """Mean per-step KL(G || M) along G's own sequences; G descends it (M held fixed)."""
    inputs, _, mask = teacher_forcing(ids)
    lp_g = g.log_probs(inputs)
    with no_grad():
        lp_m = m.log_probs(inputs).data
    p_g = ag.exp(lp_g)
    kl = (p_g * (lp_g - Tensor(lp_m.astype(lp_g.dtype)))).sum(axis=-1)
    w = mask.astype(lp_g.dtype)
    return (kl * w).sum() * (1.0 / max(float(w.sum()), 1.0))


def train_cooperative(g: GeneratorNet, m: MediatorNet, data: EncodedSplit, cfg: TrainConfig,
                      start_epoch: int = 0, aux: DiscriminatorNet | None = None,
                      on_epoch: EpochHook | None = None) -> TrainingMetrics:
    """Alternate mediator MLE on real/generated mixtures with G steps against the mediator.

    Accuracy is reported from an auxiliary discriminator trained afresh after
    each epoch on real vs generated sequences (it never feeds back into G).
    """
    g_opt = make_optimizer(cfg.optimizer, g, cfg.g_lr_adv)
    m_opt = make_optimizer(cfg.optimizer, m, cfg.g_lr_mle)
    history = TrainingMetrics()
    good = (g.state_dict(), m.state_dict())
    for e in range(start_epoch + 1, start_epoch + cfg.adv_epochs + 1):
        g_losses, m_losses = [], []
        try:
            batches = _batches(len(data.train), cfg.batch_size, NoiseSource.derive(cfg.seed, TAG_SHUFFLE, e))
            for b, idx in enumerate(batches):
                mix = mixture_batch(_trim(data.train[idx]), g, NoiseSource.derive(cfg.seed, TAG_MIX, e, b), cfg.max_len)
                m_losses.append(_step(m, mle_loss(m, mix), m_opt, cfg.grad_clip))
                ids = _trim(sample_batch(g, NoiseSource.derive(cfg.seed, TAG_GEN, e, b), cfg.batch_size,
                                         cfg.max_len).ids)
                g_losses.append(_step(g, cooperative_objective(g, m, ids), g_opt, cfg.grad_clip))
        except NumericalError:
            g.load_state_dict(good[0])
            m.load_state_dict(good[1])
            raise
        good = (g.state_dict(), m.state_dict())
        d = aux_discriminator(g, data, cfg, e, aux)
        row = compute_metrics(g, d, data.test, e, cfg.seed, cfg.max_len, g_loss=float(np.mean(g_losses)),
                              d_loss=float(np.mean(m_losses)), probe_samples=cfg.probe_samples, phase="coop")
        log.info("CoT epoch %d: g %.4f m %.4f nll %.4f acc %.3f", e, row.g_loss, row.d_loss, row.g_nll, row.acc)
        history.append(row)
        if on_epoch:
            on_epoch(row)
    return history


def aux_discriminator(g: GeneratorNet, data: EncodedSplit, cfg: TrainConfig, epoch: int,
                      template: DiscriminatorNet | None = None) -> DiscriminatorNet:
    """Fresh discriminator (same architecture) trained for one pass on real vs current G samples."""
    if template is not None:
        d = template.copy()
    else:
        d = DiscriminatorNet(len(data.vocab), cfg.emb_dim, cfg.hidden, seed=cfg.seed + 1)
    pretrain_discriminator(d, g, data, cfg, epochs=max(cfg.d_pretrain_epochs, 1), tag=TAG_AUX * 1000 + epoch)
    return d


def train_scheme(g: GeneratorNet, d: DiscriminatorNet, data: EncodedSplit, cfg: TrainConfig,
                 start_epoch: int = 0, mediator: MediatorNet | None = None,
                 on_epoch: EpochHook | None = None) -> TrainingMetrics:
    if cfg.scheme is Scheme.POLICY_GRADIENT:
        return train_adversarial_pg(g, d, data, cfg, start_epoch, on_epoch)
    if cfg.scheme is Scheme.IMPORTANCE_WEIGHTED:
        return train_adversarial_iw(g, d, data, cfg, start_epoch, on_epoch)
    if mediator is None:
        mediator = MediatorNet(g.vocab_size, g.emb_dim, g.hidden, seed=cfg.seed + 2)
        mediator.load_state_dict(g.state_dict())
    return train_cooperative(g, mediator, data, cfg, start_epoch, aux=d, on_epoch=on_epoch)
