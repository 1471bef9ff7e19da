from __future__ import annotations

import numpy as np

from loggan.neural.nets import Module


def clip_grads(net: Module, max_norm: float) -> float:
    """Scale gradients in place so their global norm is at most ``max_norm``; returns the pre-clip norm."""
    grads = [p.grad for p in net.parameters() if p.grad is not None]
    norm = float(np.sqrt(sum(float((g.astype(np.float64) ** 2).sum()) for g in grads)))
    if max_norm > 0 and norm > max_norm:
        scale = max_norm / norm
        for p in net.parameters():
            if p.grad is not None:
                p.grad = p.grad * np.asarray(scale, dtype=p.grad.dtype)
    return norm


class SGD:
    def __init__(self, net: Module, lr: float):
        self.net, self.lr = net, lr

    def step(self) -> None:
        for p in self.net.parameters():
            if p.grad is not None:
                p.data -= np.asarray(self.lr, dtype=p.data.dtype) * p.grad


class Adam:
    def __init__(self, net: Module, lr: float, betas: tuple[float, float] = (0.9, 0.999), eps: float = 1e-8):
        self.net, self.lr, self.betas, self.eps = net, lr, betas, eps
        self.t = 0
        self.m = {k: np.zeros_like(p.data) for k, p in net.params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in net.params.items()}

    def step(self) -> None:
        self.t += 1
        b1, b2 = self.betas
        c1 = 1.0 - b1 ** self.t
        c2 = 1.0 - b2 ** self.t
        for k, p in self.net.params.items():
            if p.grad is None:
                continue
            g = p.grad
            self.m[k] = b1 * self.m[k] + (1 - b1) * g
            self.v[k] = b2 * self.v[k] + (1 - b2) * g * g
            update = self.lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)
            p.data -= update.astype(p.data.dtype)


def make_optimizer(kind: str, net: Module, lr: float):
    return Adam(net, lr) if kind == "adam" else SGD(net, lr)
