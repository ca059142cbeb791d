"""Adaptive-sharpness state for the arctangent surrogate.

Every (sample, layer, timestep, neuron) keeps an EMA ``M`` of ``|u|`` and
an EMA ``D`` of the absolute deviation of ``|u|`` from ``M``.  The sharpness
used by the backward pass is the largest one whose expected vanishing
degree stays below ``A`` when ``E|u|`` is estimated by ``M + gamma * D``.

Arrays are stored per layer with the trace layout ``(T, batch, neurons)``
because layers differ in width.
"""

import csv
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .numerics import ContractError
from .surrogate import atan_g


@dataclass(frozen=True)
class AssgParams:
    A: float = 0.87
    beta1: float = 0.9
    beta2: float = 0.9
    gamma: float = 1.5
    M0: float = 1.0
    D0: float = 0.0

    def __post_init__(self):
        if not 0.0 < self.A < 1.0:
            raise ContractError(f"A must lie in (0, 1), got {self.A}")
        for name in ("beta1", "beta2"):
            b = getattr(self, name)
            if not 0.0 < b < 1.0:
                raise ContractError(f"{name} must lie in (0, 1), got {b}")
        if self.gamma < 0:
            raise ContractError("gamma must be non-negative")
        if self.M0 <= 0:
            raise ContractError("M0 must be positive")
        if self.D0 < 0:
            raise ContractError("D0 must be non-negative")

    @property
    def tan_term(self):
        return math.tan(0.5 * math.pi * self.A)


class AssgState:
    """Mutable EMA grids, lazily shaped on first contact with a trace."""

    def __init__(self, params=None):
        self.params = params if params is not None else AssgParams()
        self.M = None
        self.D = None
        self.frozen = False
        self.skipped_updates = 0
        self.n_updates = 0

    def reset(self):
        """Drop the grids; the next contact re-initialises them to (M0, D0)."""
        self.M = None
        self.D = None
        self.n_updates = 0

    def ensure(self, shapes):
        shapes = [tuple(s) for s in shapes]
        if self.M is not None and [m.shape for m in self.M] == shapes:
            return
        if self.M is not None:
            raise ContractError(
                f"AssgState shaped {[m.shape for m in self.M]} cannot serve {shapes}")
        self.M = [np.full(s, self.params.M0) for s in shapes]
        self.D = [np.full(s, self.params.D0) for s in shapes]

    def update(self, us):
        """Advance both EMAs by one observation per layer; M first, then D."""
        if self.frozen:
            self.skipped_updates += 1
            warnings.warn("assg_update called on a frozen state; ignored", RuntimeWarning,
                          stacklevel=2)
            return self
        us = [np.asarray(u, dtype=np.float64) for u in us]
        for u in us:
            if np.isnan(u).any():
                raise ContractError("NaN in pre-activation passed to assg_update")
        self.ensure([u.shape for u in us])
        b1, b2 = self.params.beta1, self.params.beta2
        for M, D, u in zip(self.M, self.D, us):
            a = np.abs(u)
            M *= b1
            M += (1.0 - b1) * a
            D *= b2
            D += (1.0 - b2) * np.abs(a - M)
        self.n_updates += 1
        return self

    def alpha(self, layer):
        denom = self.M[layer] + self.params.gamma * self.D[layer]
        if np.any(denom <= 0):
            raise ContractError("non-positive ASSG denominator")
        return (2.0 / math.pi) * self.params.tan_term / denom

    def alphas(self):
        return [self.alpha(i) for i in range(len(self.M))]

    def grad(self, layer, u):
        if self.M is None:
            raise ContractError("AssgState has no grids yet; update or ensure first")
        if self.M[layer].shape != np.shape(u):
            raise ContractError(f"shape mismatch: state {self.M[layer].shape} vs u {np.shape(u)}")
        return atan_g(u, self.alpha(layer))

    def freeze(self):
        self.frozen = True
        return self

    def unfreeze(self):
        self.frozen = False
        return self

    def snapshot(self):
        """Copies of the grids, for bit-identity checks."""
        if self.M is None:
            return None
        return [m.copy() for m in self.M], [d.copy() for d in self.D]


def assg_update(state, u):
    """Functional alias accepting a single array or a per-layer list."""
    return state.update(u if isinstance(u, (list, tuple)) else [u])


def assg_alpha(state):
    a = state.alphas()
    return a[0] if len(a) == 1 else a


def assg_grad(state, u, layer=0):
    return state.grad(layer, u)


def freeze(state):
    return state.freeze()


def unfreeze(state):
    return state.unfreeze()


def alpha_histogram(state, bins=20):
    """Per (layer, t) histogram of sharpness values over samples and neurons.

    Bin edges are log-spaced over the global range of all sharpness values.
    Returns ``(rows, summaries)``: rows are ``(layer, t, lo, hi, count)`` and
    summaries ``(layer, t, mean, p90)``.
    """
    alphas = state.alphas()
    flat = np.concatenate([a.ravel() for a in alphas])
    lo, hi = float(flat.min()), float(flat.max())
    if hi <= lo:
        hi = lo * (1.0 + 1e-9) + 1e-12
    edges = np.geomspace(lo, hi, bins + 1)
    rows, summaries = [], []
    for li, a in enumerate(alphas):
        for t in range(a.shape[0]):
            vals = a[t].ravel()
            counts, _ = np.histogram(vals, bins=edges)
            rows.extend((li, t, float(edges[i]), float(edges[i + 1]), int(c))
                        for i, c in enumerate(counts))
            summaries.append((li, t, float(vals.mean()), float(np.percentile(vals, 90))))
    return rows, summaries


def write_histogram_csv(state, path, bins=20):
    """Columns ``layer,t,alpha_bin_lo,alpha_bin_hi,count,stat``.

    Bin rows leave ``stat`` empty. Each (layer, t) also gets a ``mean`` and a
    ``p90`` row carrying the value in both bin-edge columns and no count.
    """
    rows, summaries = alpha_histogram(state, bins)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["layer", "t", "alpha_bin_lo", "alpha_bin_hi", "count", "stat"])
        for r in rows:
            w.writerow([*r, ""])
        for li, t, mean, p90 in summaries:
            w.writerow([li, t, mean, mean, "", "mean"])
            w.writerow([li, t, p90, p90, "", "p90"])
