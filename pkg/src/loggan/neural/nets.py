"""Generator, mediator and discriminator networks over token sequences."""

from __future__ import annotations

import copy
from dataclasses import dataclass

import numpy as np

from loggan.corpus import BOS, EOS, PAD, TokenSequence
from loggan.neural import autograd as ag
from loggan.neural.autograd import Tensor, no_grad

INIT_SCALE = 0.08
MASKED_LOGIT = -1e4


class NoiseSource:
    """Counter-based (Philox) random stream: the sampling noise fed to the generator."""

    def __init__(self, seed: int | np.random.SeedSequence):
        ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
        self.seed_sequence = ss
        self.rng = np.random.Generator(np.random.Philox(ss))

    @classmethod
    def derive(cls, *keys: int) -> "NoiseSource":
        """Stream keyed by a tuple such as ``(run_seed, epoch, batch, rollout)``."""
        return cls(np.random.SeedSequence([int(k) & 0xFFFFFFFFFFFFFFFF for k in keys]))

    def uniform(self, size) -> np.ndarray:
        return self.rng.random(size)

    def normal(self, size) -> np.ndarray:
        return self.rng.standard_normal(size)

    def integers(self, low: int, high: int, size=None):
        return self.rng.integers(low, high, size)


class Module:
    """Named parameter container."""

    kind = "module"

    def __init__(self) -> None:
        self.params: dict[str, Tensor] = {}

    def config(self) -> dict:
        raise NotImplementedError

    def _param(self, name: str, shape, rng: np.random.Generator | None, zero: bool = False) -> Tensor:
        if zero or rng is None:
            data = np.zeros(shape, dtype=ag.DTYPE)
        else:
            data = rng.uniform(-INIT_SCALE, INIT_SCALE, size=shape).astype(ag.DTYPE)
        t = Tensor(data, requires_grad=True, name=name)
        self.params[name] = t
        return t

    def parameters(self) -> list[Tensor]:
        return list(self.params.values())

    def n_params(self) -> int:
        return int(sum(p.data.size for p in self.params.values()))

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: v.data.copy() for k, v in self.params.items()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        if set(state) != set(self.params):
            raise KeyError(f"parameter names differ: {sorted(set(state) ^ set(self.params))}")
        for k, v in state.items():
            p = self.params[k]
            if v.shape != p.data.shape:
                raise ValueError(f"shape mismatch for {k}: {v.shape} vs {p.data.shape}")
            p.data = np.array(v, dtype=p.data.dtype)

    def copy(self):
        return copy.deepcopy(self)

    def to_dtype(self, dtype):
        """Copy whose parameters are stored as ``dtype`` (e.g. float64 for gradient checks)."""
        out = self.copy()
        for p in out.params.values():
            p.data = p.data.astype(dtype)
            p.grad = None
        return out


class GRUCell:
    """Single-layer gated recurrent cell; gate order in fused matrices is update, reset, candidate."""

    def __init__(self, owner: Module, prefix: str, n_in: int, n_hidden: int, rng):
        self.n_hidden = n_hidden
        self.w = owner._param(f"{prefix}.w", (n_in, 3 * n_hidden), rng)
        self.u = owner._param(f"{prefix}.u", (n_hidden, 3 * n_hidden), rng)
        self.b = owner._param(f"{prefix}.b", (3 * n_hidden,), rng)

    def __call__(self, x: Tensor, h: Tensor) -> Tensor:
        H = self.n_hidden
        xw = ag.matmul(x, self.w) + self.b
        hu = ag.matmul(h, self.u)
        z = ag.sigmoid(xw[:, :H] + hu[:, :H])
        r = ag.sigmoid(xw[:, H:2 * H] + hu[:, H:2 * H])
        n = ag.tanh(xw[:, 2 * H:] + r * hu[:, 2 * H:])
        return n + z * (h - n)

    def step_np(self, x: np.ndarray, h: np.ndarray) -> np.ndarray:
        """Forward only, on raw arrays (rollouts and sampling)."""
        H = self.n_hidden
        xw = x @ self.w.data + self.b.data
        hu = h @ self.u.data
        z = ag._stable_sigmoid(xw[:, :H] + hu[:, :H])
        r = ag._stable_sigmoid(xw[:, H:2 * H] + hu[:, H:2 * H])
        n = np.tanh(xw[:, 2 * H:] + r * hu[:, 2 * H:])
        return n + z * (h - n)


class GeneratorNet(Module):
    """Autoregressive token model: embedding -> GRU -> vocabulary logits."""

    kind = "generator"

    def __init__(self, vocab_size: int, emb_dim: int = 32, hidden: int = 64, seed: int = 0):
        super().__init__()
        rng = np.random.default_rng(np.random.SeedSequence([seed, 101]))
        self.vocab_size, self.emb_dim, self.hidden, self.seed = vocab_size, emb_dim, hidden, seed
        self.emb = self._param("emb", (vocab_size, emb_dim), rng)
        self.cell = GRUCell(self, "gru", emb_dim, hidden, rng)
        self.out_w = self._param("out.w", (hidden, vocab_size), rng)
        self.out_b = self._param("out.b", (vocab_size,), rng)

    @property
    def logit_mask(self) -> np.ndarray:
        """Additive mask that keeps PAD and BOS from ever being emitted."""
        m = np.zeros(self.vocab_size, dtype=self.emb.data.dtype)
        m[[PAD, BOS]] = MASKED_LOGIT
        return m

    def config(self) -> dict:
        return {"vocab_size": self.vocab_size, "emb_dim": self.emb_dim, "hidden": self.hidden, "seed": self.seed}

    def initial_state(self, batch: int) -> np.ndarray:
        return np.zeros((batch, self.hidden), dtype=self.emb.data.dtype)

    def log_probs(self, inputs: np.ndarray, h0: np.ndarray | None = None) -> Tensor:
        """Teacher-forced per-step log-probabilities, shape ``(batch, steps, vocab)``.

        ``inputs`` are token ids starting with BOS.
        """
        inputs = np.asarray(inputs)
        B, T = inputs.shape
        h = Tensor(self.initial_state(B) if h0 is None else h0.astype(self.emb.data.dtype))
        x_all = ag.embedding(self.emb, inputs)
        hs = []
        for t in range(T):
            h = self.cell(x_all[:, t, :], h)
            hs.append(h)
        hid = ag.stack(hs, axis=1)
        logits = ag.matmul(hid, self.out_w) + self.out_b + self.logit_mask
        return ag.log_softmax(logits, axis=-1)

    def step_np(self, tokens: np.ndarray, h: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """One sampling step: returns ``(logits, new_hidden)`` on raw arrays."""
        h = self.cell.step_np(self.emb.data[tokens], h)
        return h @ self.out_w.data + self.out_b.data + self.logit_mask, h


class MediatorNet(GeneratorNet):
    """Same family as the generator; models the real/generated mixture in cooperative training."""

    kind = "mediator"


class DiscriminatorNet(Module):
    """Embedding -> GRU -> masked mean pool -> scalar logit -> logistic."""

    kind = "discriminator"

    def __init__(self, vocab_size: int, emb_dim: int = 32, hidden: int = 64, seed: int = 0):
        super().__init__()
        rng = np.random.default_rng(np.random.SeedSequence([seed, 202]))
        self.vocab_size, self.emb_dim, self.hidden, self.seed = vocab_size, emb_dim, hidden, seed
        self.emb = self._param("emb", (vocab_size, emb_dim), rng)
        self.cell = GRUCell(self, "gru", emb_dim, hidden, rng)
        self.out_w = self._param("out.w", (hidden, 1), rng)
        self.out_b = self._param("out.b", (1,), rng, zero=True)

    def config(self) -> dict:
        return {"vocab_size": self.vocab_size, "emb_dim": self.emb_dim, "hidden": self.hidden, "seed": self.seed}

    def zero_head(self) -> None:
        """Zero the output layer so every input scores exactly 0.5."""
        self.out_w.data[...] = 0
        self.out_b.data[...] = 0

    def logits(self, ids: np.ndarray) -> Tensor:
        """Pre-squash scores for a padded ``(batch, steps)`` id array (EOS-terminated, no BOS)."""
        ids = np.asarray(ids)
        B, T = ids.shape
        mask = (ids != PAD).astype(self.emb.data.dtype)
        counts = np.maximum(mask.sum(axis=1, keepdims=True), 1.0)
        h = Tensor(np.zeros((B, self.hidden), dtype=self.emb.data.dtype))
        x_all = ag.embedding(self.emb, ids)
        pooled = None
        for t in range(T):
            h_new = self.cell(x_all[:, t, :], h)
            m = mask[:, t:t + 1]
            # Frozen state past the end of a sequence.
            h = h_new * m + h * (1.0 - m)
            term = h * (m / counts)
            pooled = term if pooled is None else pooled + term
        return (ag.matmul(pooled, self.out_w) + self.out_b)[:, 0]

    def probs_np(self, ids: np.ndarray) -> np.ndarray:
        with no_grad():
            return clamp_prob(ag._stable_sigmoid(self.logits(ids).data))


PROB_EPS = 1e-7


def clamp_prob(p):
    return np.clip(p, PROB_EPS, 1.0 - PROB_EPS)


@dataclass
class Sampled:
    ids: np.ndarray  # (batch, max_len) padded, EOS-terminated where complete
    hiddens: list[np.ndarray]  # hidden state after consuming each input position


def forward_generator(g: GeneratorNet, prefix: TokenSequence | list[int]) -> np.ndarray:
    """Per-step next-token distributions for one prefix that starts with BOS."""
    ids = prefix.ids if isinstance(prefix, TokenSequence) else list(prefix)
    if not ids or ids[0] != BOS:
        raise ValueError("prefix must start with BOS")
    with no_grad():
        lp = g.log_probs(np.asarray([ids]))
    return np.exp(lp.data[0].astype(np.float64))


def sample_batch(g: GeneratorNet, noise: NoiseSource, batch: int, max_len: int, temperature: float = 1.0,
                 h0_noise: float = 0.0, keep_hiddens: bool = False) -> Sampled:
    """Ancestral sampling of ``batch`` sequences until EOS or ``max_len`` tokens.

    Each step consumes one uniform draw per row (inverse-CDF sampling), so the
    result is a pure function of the noise stream. ``h0_noise`` scales a
    standard-normal perturbation of the initial hidden state.
    """
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    h = g.initial_state(batch)
    if h0_noise:
        h = h + (h0_noise * noise.normal(h.shape)).astype(h.dtype)
    tokens = np.full(batch, BOS, dtype=np.int64)
    out = np.full((batch, max_len), PAD, dtype=np.int64)
    done = np.zeros(batch, dtype=bool)
    hiddens = []
    for t in range(max_len):
        logits, h = g.step_np(tokens, h)
        if keep_hiddens:
            hiddens.append(h)
        probs = ag.softmax_np(logits.astype(np.float64) / temperature)
        cdf = np.cumsum(probs, axis=1)
        u = noise.uniform(batch)[:, None] * cdf[:, -1:]
        nxt = np.minimum((cdf < u).sum(axis=1), g.vocab_size - 1)
        if t == max_len - 1:
            nxt = np.full(batch, EOS)
        nxt = np.where(done, PAD, nxt)
        out[:, t] = nxt
        done |= nxt == EOS
        tokens = np.where(done, EOS, nxt)
        if done.all():
            break
    return Sampled(out, hiddens)


def sample_sequence(g: GeneratorNet, noise: NoiseSource, max_len: int, temperature: float = 1.0) -> TokenSequence:
    ids = sample_batch(g, noise, 1, max_len, temperature).ids[0]
    stop = int(np.argmax(ids == EOS)) if (ids == EOS).any() else len(ids) - 1
    return TokenSequence([int(i) for i in ids[: stop + 1]])


def discriminate(d: DiscriminatorNet, x: TokenSequence | list[int]) -> float:
    ids = x.ids if isinstance(x, TokenSequence) else list(x)
    if not ids:
        raise ValueError("cannot score an empty sequence")
    return float(d.probs_np(np.asarray([ids]))[0])
