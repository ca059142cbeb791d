"""Layered spiking MLPs: simulation, STBP input gradients and losses.

Shapes follow ``(T, batch, units)``.  Layer ``l`` receives the spike train
of layer ``l - 1`` (the encoded input for the first layer) through ``W``;
a linear readout maps the last layer's spikes to per-timestep logits.
"""

import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .numerics import ContractError, as_tensor, load_tensor, make_rng, save_tensor

SPIKING_KINDS = ("LIF", "LIF2", "IF")
ENCODERS = ("direct", "poisson")


@dataclass
class NeuronConfig:
    kind: str = "LIF"
    lam: float = 0.5
    v_th: float = 1.0
    detach_reset: bool = False

    def __post_init__(self):
        if self.kind not in SPIKING_KINDS:
            raise ContractError(f"NeuronConfig kind must be one of {SPIKING_KINDS}, got "
                                f"{self.kind!r} (PSN layers take a PsnConfig)")
        if self.kind in ("LIF", "LIF2") and not 0.0 < self.lam < 1.0:
            raise ContractError(f"decay lam must lie in (0, 1), got {self.lam}")

    @property
    def decay(self):
        return 1.0 if self.kind == "IF" else self.lam

    @property
    def in_scale(self):
        return 1.0 - self.lam if self.kind == "LIF" else 1.0


@dataclass
class PsnConfig:
    W_T: np.ndarray
    B: np.ndarray
    kind: str = field(default="PSN", init=False)

    def __post_init__(self):
        self.W_T = as_tensor(self.W_T)
        self.B = as_tensor(self.B)
        T = self.W_T.shape[0]
        if self.W_T.shape != (T, T) or self.B.shape != (T,):
            raise ContractError(f"PSN expects W_T (T, T) and B (T,), got "
                                f"{self.W_T.shape} and {self.B.shape}")


@dataclass
class LayerSpec:
    W: np.ndarray
    neuron: object

    def __post_init__(self):
        self.W = as_tensor(self.W)


@dataclass
class NetworkSpec:
    layers: list
    readout: np.ndarray
    T: int = 4
    encoder: str = "direct"
    version: int = field(default=0, compare=False)

    def __post_init__(self):
        self.readout = as_tensor(self.readout)
        if self.T < 1:
            raise ContractError("T must be >= 1")
        if not self.layers:
            raise ContractError("a network needs at least one spiking layer")
        if self.encoder not in ENCODERS:
            raise ContractError(f"encoder must be one of {ENCODERS}")
        for a, b in zip(self.layers, self.layers[1:]):
            if b.W.shape[1] != a.W.shape[0]:
                raise ContractError(f"layer widths do not chain: {a.W.shape} -> {b.W.shape}")
        if self.readout.shape[1] != self.layers[-1].W.shape[0]:
            raise ContractError("readout width does not match the last layer")
        for layer in self.layers:
            if isinstance(layer.neuron, PsnConfig) and layer.neuron.W_T.shape[0] != self.T:
                raise ContractError("PSN W_T extent must equal T")

    @property
    def n_inputs(self):
        return self.layers[0].W.shape[1]

    @property
    def n_classes(self):
        return self.readout.shape[0]

    def bump(self):
        """Mark parameters as changed; traces taken earlier become stale."""
        self.version += 1

    def parameters(self):
        """Name -> array views of every trainable parameter."""
        params = {}
        for i, layer in enumerate(self.layers):
            params[f"layer{i}.W"] = layer.W
            if isinstance(layer.neuron, PsnConfig):
                params[f"layer{i}.W_T"] = layer.neuron.W_T
                params[f"layer{i}.B"] = layer.neuron.B
        params["readout"] = self.readout
        return params


@dataclass
class ForwardTrace:
    inputs: list     # per layer: spike train (or encoding) feeding the layer
    currents: list   # per layer: W-projected inputs
    V: list
    S: list
    U: list
    logits_t: np.ndarray
    net_id: int
    net_version: int
    relax_alpha: float = 0.0

    @property
    def logits(self):
        return self.logits_t.mean(axis=0)


def init_network(rng, n_inputs, hidden=(64, 64), n_classes=2, kind="LIF", T=4,
                 encoder="direct", lam=0.5, v_th=1.0, gain=1.0, detach_reset=False):
    layers = []
    fan_in = n_inputs
    for width in hidden:
        bound = gain * math.sqrt(3.0 / fan_in)
        W = rng.uniform(-bound, bound, size=(width, fan_in))
        if kind == "PSN":
            W_T = np.eye(T) + rng.uniform(-0.1, 0.1, size=(T, T)) / T
            neuron = PsnConfig(W_T, np.full(T, v_th))
        else:
            neuron = NeuronConfig(kind, lam, v_th, detach_reset)
        layers.append(LayerSpec(W, neuron))
        fan_in = width
    bound = math.sqrt(3.0 / fan_in)
    readout = rng.uniform(-bound, bound, size=(n_classes, fan_in))
    return NetworkSpec(layers, readout, T, encoder)


def encode(x, net, rng=None):
    """Replicate (direct) or Bernoulli-sample (poisson) ``x`` over T steps."""
    x = as_tensor(x)
    if x.ndim != 2:
        raise ContractError("encode expects a (batch, features) array")
    if np.any(x < 0.0) or np.any(x > 1.0):
        raise ContractError("encoder inputs must lie in [0, 1]")
    if net.encoder == "direct":
        return np.broadcast_to(x, (net.T,) + x.shape).copy()
    if rng is None:
        raise ContractError("poisson encoding needs an rng")
    return (rng.random((net.T,) + x.shape) < x).astype(np.float64)


def neuron_step(cfg, V, s_prev, I):
    """One timestep of a reset neuron: returns ``(V_next, s_next, u)``."""
    if not isinstance(cfg, NeuronConfig):
        raise ContractError("neuron_step handles LIF/LIF2/IF; use psn_forward for PSN")
    V, s_prev, I = (np.asarray(a, dtype=np.float64) for a in (V, s_prev, I))
    if not (V.shape == s_prev.shape == I.shape):
        raise ContractError("neuron_step operands must share a shape")
    if np.any((s_prev != 0.0) & (s_prev != 1.0)):
        raise ContractError("s_prev must be binary")
    u = cfg.decay * V * (1.0 - s_prev) + cfg.in_scale * I - cfg.v_th
    v = u + cfg.v_th
    return v, (u >= 0.0).astype(np.float64), u


def psn_forward(cfg, X, relax_alpha=0.0):
    """Parallel spiking neuron: time-mixed potentials, per-step thresholds."""
    X = as_tensor(X)
    T = cfg.W_T.shape[0]
    if X.shape[0] != T:
        raise ContractError(f"PSN with T={T} got input with {X.shape[0]} timesteps")
    B = cfg.B.reshape((T,) + (1,) * (X.ndim - 1))
    U = np.tensordot(cfg.W_T, X, axes=(1, 0)) - B
    V = U + B
    if relax_alpha > 0:
        S = np.arctan(0.5 * math.pi * relax_alpha * U) / math.pi + 0.5
    else:
        S = (U >= 0.0).astype(np.float64)
    return V, S, U


def forward(net, encoded, relax_alpha=0.0, gates=None):
    """Run every layer over every timestep and record the trace.

    ``relax_alpha > 0`` swaps the Heaviside for the smooth arctangent step
    of that sharpness.  ``gates`` (one array per layer, or None) replaces
    the spikes inside the reset factor by fixed values.
    """
    x = as_tensor(encoded)
    if x.ndim != 3 or x.shape[0] != net.T or x.shape[2] != net.n_inputs:
        raise ContractError(f"encoded input must be (T={net.T}, batch, {net.n_inputs}), "
                            f"got {x.shape}")
    T, B = x.shape[:2]
    trace = ForwardTrace([], [], [], [], [], None, id(net), net.version, relax_alpha)
    for li, layer in enumerate(net.layers):
        I = (x.reshape(T * B, -1) @ layer.W.T).reshape(T, B, -1)
        cfg = layer.neuron
        if isinstance(cfg, PsnConfig):
            V, S, U = psn_forward(cfg, I, relax_alpha)
        else:
            gate = None if gates is None else gates[li]
            V, S, U = kernels.recur_forward(I, cfg.decay, cfg.in_scale, cfg.v_th,
                                            relax_alpha, gate)
        trace.inputs.append(x)
        trace.currents.append(I)
        trace.V.append(V)
        trace.S.append(S)
        trace.U.append(U)
        x = S
    trace.logits_t = (x.reshape(T * B, -1) @ net.readout.T).reshape(T, B, -1)
    return trace, trace.logits


def backward_input(net, trace, dlogits_t, sg, param_grads=False):
    """Reverse-mode pass through the unrolled network.

    ``dlogits_t`` is the loss gradient w.r.t. per-timestep logits; the
    Heaviside derivative is replaced by ``sg`` evaluated at the recorded
    pre-activations.  Returns the input gradient summed over timesteps
    (and a name -> gradient dict when ``param_grads``).
    """
    if trace.net_id != id(net) or trace.net_version != net.version:
        raise ContractError("trace is stale: network changed since the forward pass")
    dlogits_t = as_tensor(dlogits_t)
    T, B, C = dlogits_t.shape
    grads = {}
    S_last = trace.S[-1]
    if param_grads:
        grads["readout"] = dlogits_t.reshape(T * B, C).T @ S_last.reshape(T * B, -1)
    dS = (dlogits_t.reshape(T * B, C) @ net.readout).reshape(T, B, -1)
    for li in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[li]
        cfg = layer.neuron
        SG = sg.grad(li, trace.U[li])
        if isinstance(cfg, PsnConfig):
            dV = dS * SG
            dI = np.tensordot(cfg.W_T, dV, axes=(0, 0))
            if param_grads:
                grads[f"layer{li}.W_T"] = np.tensordot(dV, trace.currents[li],
                                                       axes=([1, 2], [1, 2]))
                grads[f"layer{li}.B"] = -dV.sum(axis=(1, 2))
        else:
            dI = kernels.recur_backward(dS, trace.V[li], trace.S[li], SG, cfg.decay,
                                        cfg.in_scale, cfg.detach_reset)
        x_in = trace.inputs[li]
        if param_grads:
            grads[f"layer{li}.W"] = dI.reshape(T * B, -1).T @ x_in.reshape(T * B, -1)
        dS = (dI.reshape(T * B, -1) @ layer.W).reshape(T, B, -1)
    # direct: the input is replicated over T; poisson: straight-through on the sample
    dx = dS.sum(axis=0)
    return (dx, grads) if param_grads else dx


def _softmax(z):
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _log_softmax(z):
    z = z - z.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


_LOSS_ALIASES = {"ce": "ce", "ce_mean_logits": "ce", "tet": "tet"}


def loss(kind, per_t_logits, labels, reduction="mean"):
    """Cross-entropy of time-averaged logits (``"ce"``) or TET (``"tet"``).

    Returns ``(value, grad)`` with ``grad`` shaped like ``per_t_logits``.
    ``reduction="none"`` gives per-sample values and the gradient of their sum.
    """
    key = _LOSS_ALIASES.get(str(kind).lower())
    if key is None:
        raise ContractError(f"unknown loss kind {kind!r}")
    z = as_tensor(per_t_logits)
    T, B, C = z.shape
    y = np.asarray(labels)
    if y.shape != (B,) or np.any(y < 0) or np.any(y >= C) or not np.all(y == np.round(y)):
        raise ContractError("labels must be integer class indices in [0, C)")
    y = y.astype(np.int64)
    onehot = np.zeros((B, C))
    onehot[np.arange(B), y] = 1.0
    if key == "ce":
        zm = z.mean(axis=0)
        per = -_log_softmax(zm)[np.arange(B), y]
        g = np.broadcast_to((_softmax(zm) - onehot) / T, z.shape).copy()
    else:
        ls = _log_softmax(z)
        per = -ls[:, np.arange(B), y].mean(axis=0)
        g = (_softmax(z) - onehot) / T
    if reduction == "none":
        return per, g
    return float(per.mean()), g / B


class SpikingClassifier:
    """A network plus the loss an attacker maximises on it."""

    def __init__(self, net, loss_kind="tet", eval_seed=0):
        self.net = net
        self.loss_kind = loss_kind
        self.eval_seed = eval_seed

    @property
    def stochastic(self):
        return self.net.encoder == "poisson"

    def logits(self, x, rng=None):
        if rng is None and self.stochastic:
            rng = make_rng(self.eval_seed)
        _, z = forward(self.net, encode(x, self.net, rng))
        return z

    def predict(self, x, rng=None):
        return np.argmax(self.logits(x, rng), axis=1)

    def loss_grad(self, x, y, sg, rng=None, update_assg=True):
        """Per-sample losses, mean logits and the input gradient at ``x``.

        An unfrozen adaptive surrogate first absorbs this forward pass's
        pre-activations, so the backward pass sees the updated sharpness.
        """
        trace, z = forward(self.net, encode(x, self.net, rng))
        per, dl = loss(self.loss_kind, trace.logits_t, y, reduction="none")
        if sg.adaptive:
            if update_assg and not sg.state.frozen:
                sg.state.update(trace.U)
            else:
                sg.state.ensure([u.shape for u in trace.U])
        return per, z, backward_input(self.net, trace, dl, sg)


def relaxed_loss(net, x, y, alpha, loss_kind="ce", gates=None):
    """Per-sample loss of the network with H replaced by its smooth step."""
    enc = np.broadcast_to(as_tensor(x), (net.T,) + np.shape(x)).copy()
    trace, _ = forward(net, enc, relax_alpha=alpha, gates=gates)
    per, _ = loss(loss_kind, trace.logits_t, y, reduction="none")
    return per


def relaxed_input_grad(net, x, y, alpha, loss_kind="ce"):
    """STBP gradient of the relaxed network with the matching atan surrogate."""
    from .surrogate import SurrogateSpec

    enc = np.broadcast_to(as_tensor(x), (net.T,) + np.shape(x)).copy()
    trace, _ = forward(net, enc, relax_alpha=alpha)
    _, dl = loss(loss_kind, trace.logits_t, y, reduction="none")
    return backward_input(net, trace, dl, SurrogateSpec.atan(alpha))


def soft_forward_grad_oracle(net, x, y, alpha, h=1e-6, loss_kind="ce"):
    """Central-difference input gradient of the relaxed network's loss.

    Layers that detach the reset keep their reset factor fixed at the values
    seen at ``x``, which is exactly the function a detached backward
    differentiates.
    """
    if not 1e-7 <= h <= 1e-5:
        raise ContractError("finite-difference step must lie in [1e-7, 1e-5]")
    x = as_tensor(x)
    gates = None
    if any(isinstance(l.neuron, NeuronConfig) and l.neuron.detach_reset for l in net.layers):
        enc = np.broadcast_to(x, (net.T,) + x.shape).copy()
        base, _ = forward(net, enc, relax_alpha=alpha)
        gates = [S if isinstance(l.neuron, NeuronConfig) and l.neuron.detach_reset else None
                 for l, S in zip(net.layers, base.S)]
    grad = np.zeros_like(x)
    # samples are independent, so one coordinate is perturbed across the batch at once
    for j in range(x.shape[1]):
        xp = x.copy()
        xm = x.copy()
        xp[:, j] += h
        xm[:, j] -= h
        grad[:, j] = (relaxed_loss(net, xp, y, alpha, loss_kind, gates)
                      - relaxed_loss(net, xm, y, alpha, loss_kind, gates)) / (2.0 * h)
    return grad


def save_network(net, directory):
    """Per-array SPKT files plus a JSON manifest describing the layers."""
    os.makedirs(directory, exist_ok=True)
    layers = []
    for i, layer in enumerate(net.layers):
        save_tensor(os.path.join(directory, f"layer{i}_W.spkt"), layer.W)
        cfg = layer.neuron
        if isinstance(cfg, PsnConfig):
            save_tensor(os.path.join(directory, f"layer{i}_WT.spkt"), cfg.W_T)
            save_tensor(os.path.join(directory, f"layer{i}_B.spkt"), cfg.B)
            layers.append({"kind": "PSN"})
        else:
            layers.append({"kind": cfg.kind, "lambda": cfg.lam, "v_th": cfg.v_th,
                           "detach_reset": cfg.detach_reset})
    save_tensor(os.path.join(directory, "readout.spkt"), net.readout)
    manifest = {"T": net.T, "encoder": net.encoder, "layers": layers}
    with open(os.path.join(directory, "network.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)


def load_network(directory):
    with open(os.path.join(directory, "network.json"), encoding="utf-8") as fh:
        manifest = json.load(fh)
    layers = []
    for i, spec in enumerate(manifest["layers"]):
        W = load_tensor(os.path.join(directory, f"layer{i}_W.spkt"))
        if spec["kind"] == "PSN":
            neuron = PsnConfig(load_tensor(os.path.join(directory, f"layer{i}_WT.spkt")),
                               load_tensor(os.path.join(directory, f"layer{i}_B.spkt")))
        else:
            neuron = NeuronConfig(spec["kind"], spec["lambda"], spec["v_th"],
                                  spec["detach_reset"])
        layers.append(LayerSpec(W, neuron))
    readout = load_tensor(os.path.join(directory, "readout.spkt"))
    return NetworkSpec(layers, readout, manifest["T"], manifest["encoder"])
