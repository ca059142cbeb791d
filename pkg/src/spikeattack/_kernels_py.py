"""Pure numpy membrane recurrences; reference for the compiled kernels.

Arrays are ``(T, ...)`` with time leading. ``gate`` replaces the spike
train in the reset factor (used to hold the reset fixed at a base point).
"""

import math

import numpy as np

BACKEND = "python"


def recur_forward(I, decay, in_scale, v_th, relax_alpha=0.0, gate=None):
    I = np.ascontiguousarray(I, dtype=np.float64)
    V = np.empty_like(I)
    S = np.empty_like(I)
    U = np.empty_like(I)
    v = np.zeros(I.shape[1:])
    prev = np.zeros(I.shape[1:])
    c = 0.5 * math.pi * relax_alpha
    for t in range(I.shape[0]):
        v = decay * v * (1.0 - prev) + in_scale * I[t]
        u = v - v_th
        # keep the membrane in threshold-relative form so u + v_th == V exactly
        v = u + v_th
        if relax_alpha > 0.0:
            s = np.arctan(c * u) / math.pi + 0.5
        else:
            s = (u >= 0.0).astype(np.float64)
        V[t] = v
        U[t] = u
        S[t] = s
        prev = s if gate is None else gate[t]
    return V, S, U


def recur_backward(dS, V, S, SG, decay, in_scale, detach):
    dS = np.ascontiguousarray(dS, dtype=np.float64)
    dI = np.empty_like(dS)
    T = dS.shape[0]
    dv_next = None
    for t in range(T - 1, -1, -1):
        if dv_next is None:
            dv = dS[t] * SG[t]
        else:
            ds = dS[t] if detach else dS[t] - decay * V[t] * dv_next
            dv = ds * SG[t] + dv_next * (decay * (1.0 - S[t]))
        dI[t] = in_scale * dv
        dv_next = dv
    return dI
