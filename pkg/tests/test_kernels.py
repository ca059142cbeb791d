import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spikeattack import _kernels_py, kernels
from spikeattack.numerics import make_rng

needs_compiled = pytest.mark.skipif(not kernels.compiled_available(),
                                    reason="compiled kernels not built")


def _case(seed, T, B, N):
    r = make_rng(seed)
    I = r.normal(0.8, 1.0, (T, B, N))
    dS = r.standard_normal((T, B, N))
    SG = r.uniform(0, 2, (T, B, N))
    gate = (r.random((T, B, N)) < 0.3).astype(np.float64)
    return I, dS, SG, gate


@needs_compiled
@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10**6), st.integers(1, 6), st.integers(1, 5), st.integers(1, 7),
       st.sampled_from([(0.5, 0.5), (0.5, 1.0), (1.0, 1.0)]), st.booleans(),
       st.sampled_from([0.0, 2.0]), st.booleans())
def test_backends_agree(seed, T, B, N, dec, detach, relax, use_gate):
    from spikeattack import _kernels

    I, dS, SG, gate = _case(seed, T, B, N)
    decay, scale = dec
    g = gate if use_gate else None
    fp = _kernels_py.recur_forward(I, decay, scale, 1.0, relax, g)
    fc = _kernels.recur_forward(I, decay, scale, 1.0, relax, g)
    for a, b in zip(fp, fc):
        np.testing.assert_allclose(b, a, rtol=1e-14, atol=1e-14)
    V, S, _ = fp
    bp = _kernels_py.recur_backward(dS, V, S, SG, decay, scale, detach)
    bc = _kernels.recur_backward(dS, V, S, SG, decay, scale, detach)
    np.testing.assert_allclose(bc, bp, rtol=1e-13, atol=1e-14)


def test_backend_switch_roundtrip():
    prev = kernels.backend()
    try:
        kernels.use("python")
        assert kernels.backend() == "python"
        with pytest.raises(ValueError):
            kernels.use("fortran")
    finally:
        if prev == "cython":
            kernels.use("cython")
    assert kernels.backend() == prev


def test_forward_hand_values():
    # LIF with lambda=0.5: V1 = 0.5 * 2 = 1 -> spike with H(0)=1, then reset
    I = np.array([[[2.0]], [[2.0]], [[0.0]]])
    V, S, U = kernels.recur_forward(I, 0.5, 0.5, 1.0)
    np.testing.assert_allclose(V.ravel(), [1.0, 1.0, 0.0])
    np.testing.assert_array_equal(S.ravel(), [1.0, 1.0, 0.0])
    np.testing.assert_allclose(U.ravel(), [0.0, 0.0, -1.0])
