# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled membrane recurrences; same arithmetic order as _kernels_py."""

import numpy as np
cimport numpy as cnp
from libc.math cimport atan, M_PI

cnp.import_array()

BACKEND = "cython"


def recur_forward(I, double decay, double in_scale, double v_th,
                  double relax_alpha=0.0, gate=None):
    shape = I.shape
    cdef Py_ssize_t T = shape[0]
    cdef double[:, ::1] Iv = np.ascontiguousarray(I, dtype=np.float64).reshape(T, -1)
    cdef Py_ssize_t n = Iv.shape[1], t, j
    V = np.empty((T, n))
    S = np.empty((T, n))
    U = np.empty((T, n))
    cdef double[:, ::1] Vv = V, Sv = S, Uv = U
    cdef double[:, ::1] Gv = None
    cdef bint use_gate = gate is not None
    cdef bint relaxed = relax_alpha > 0.0
    if use_gate:
        Gv = np.ascontiguousarray(gate, dtype=np.float64).reshape(T, n)
    cdef double c = 0.5 * M_PI * relax_alpha, u, v, keep
    with nogil:
        for t in range(T):
            for j in range(n):
                # the previous step's membrane and reset gate are read back from the outputs
                if t == 0:
                    v = 0.0 + in_scale * Iv[t, j]
                else:
                    keep = 1.0 - (Gv[t - 1, j] if use_gate else Sv[t - 1, j])
                    v = decay * Vv[t - 1, j] * keep + in_scale * Iv[t, j]
                u = v - v_th
                # keep the membrane in threshold-relative form so u + v_th == V exactly
                Vv[t, j] = u + v_th
                Uv[t, j] = u
                if relaxed:
                    Sv[t, j] = atan(c * u) / M_PI + 0.5
                else:
                    Sv[t, j] = 1.0 if u >= 0.0 else 0.0
    return V.reshape(shape), S.reshape(shape), U.reshape(shape)


def recur_backward(dS, V, S, SG, double decay, double in_scale, bint detach):
    shape = dS.shape
    cdef Py_ssize_t T = shape[0]
    cdef double[:, ::1] dSv = np.ascontiguousarray(dS, dtype=np.float64).reshape(T, -1)
    cdef double[:, ::1] Vv = np.ascontiguousarray(V, dtype=np.float64).reshape(T, -1)
    cdef double[:, ::1] Sv = np.ascontiguousarray(S, dtype=np.float64).reshape(T, -1)
    cdef double[:, ::1] Gv = np.ascontiguousarray(SG, dtype=np.float64).reshape(T, -1)
    cdef Py_ssize_t n = dSv.shape[1], t, j
    dI = np.empty((T, n))
    cdef double[:, ::1] dIv = dI
    cdef double[::1] nxt = np.zeros(n)
    cdef double ds, dv
    with nogil:
        for t in range(T - 1, -1, -1):
            for j in range(n):
                if t == T - 1:
                    dv = dSv[t, j] * Gv[t, j]
                else:
                    if detach:
                        ds = dSv[t, j]
                    else:
                        ds = dSv[t, j] - decay * Vv[t, j] * nxt[j]
                    dv = ds * Gv[t, j] + nxt[j] * (decay * (1.0 - Sv[t, j]))
                dIv[t, j] = in_scale * dv
                nxt[j] = dv
    return dI.reshape(shape)
