"""Smooth toy models exposing the attack-model interface."""

import numpy as np


class LogisticToy:
    """Two-class linear classifier with logits ``(0, w.x + b)``."""

    stochastic = False

    def __init__(self, w, b=0.0):
        self.w = np.asarray(w, dtype=np.float64)
        self.b = float(b)

    def logits(self, x, rng=None):
        s = np.asarray(x) @ self.w + self.b
        return np.stack([np.zeros_like(s), s], axis=1)

    def predict(self, x, rng=None):
        return np.argmax(self.logits(x), axis=1)

    def loss_grad(self, x, y, sg=None, rng=None):
        z = self.logits(x)
        m = z.max(axis=1, keepdims=True)
        lse = m[:, 0] + np.log(np.exp(z - m).sum(axis=1))
        y = np.asarray(y)
        loss = lse - z[np.arange(len(y)), y]
        p1 = 1.0 / (1.0 + np.exp(-z[:, 1]))
        # d loss / d s = p1 - [y == 1]
        g = (p1 - (y == 1))[:, None] * self.w[None, :]
        return loss, z, g


class QuadraticToy:
    """Loss ``(x - c)^2`` per coordinate sum; predicts class 1 when loss > 1."""

    stochastic = False

    def __init__(self, c):
        self.c = np.asarray(c, dtype=np.float64)

    def logits(self, x, rng=None):
        l = ((np.asarray(x) - self.c) ** 2).sum(axis=1)
        return np.stack([np.ones_like(l), l], axis=1)

    def predict(self, x, rng=None):
        return np.argmax(self.logits(x), axis=1)

    def loss_grad(self, x, y, sg=None, rng=None):
        d = np.asarray(x) - self.c
        return (d * d).sum(axis=1), self.logits(x), 2.0 * d


class LinearToy:
    """Loss ``w.x`` with a constant gradient; always predicts class 0."""

    stochastic = False

    def __init__(self, w):
        self.w = np.asarray(w, dtype=np.float64)

    def logits(self, x, rng=None):
        n = np.asarray(x).shape[0]
        return np.tile([1.0, 0.0], (n, 1))

    def predict(self, x, rng=None):
        return np.zeros(np.asarray(x).shape[0], dtype=np.int64)

    def loss_grad(self, x, y, sg=None, rng=None):
        x = np.asarray(x)
        return x @ self.w, self.logits(x), np.tile(self.w, (x.shape[0], 1))
