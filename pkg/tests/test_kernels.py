import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from mg1kit import _kernels_py, kernels, oracle, presets
from mg1kit.mapg1 import Exponential, Pareto, PhaseType

try:
    from mg1kit import _kernels as compiled
except ImportError:
    compiled = None

BACKENDS = [_kernels_py] + ([compiled] if compiled is not None else [])


def _stochastic(x):
    x = x + 1e-3
    return x / x.sum(axis=1, keepdims=True)


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(2, 12)).map(lambda t: (t[0], t[0])),
              elements=st.floats(0, 1)))
def test_gth_is_stationary(x):
    P = _stochastic(x)
    for mod in BACKENDS:
        pi, bad = mod.gth(P)
        assert bad == -1
        assert np.abs(pi @ P - pi).max() < 1e-13
        assert pi.sum() == pytest.approx(1.0)
    assert np.allclose(_kernels_py.gth(P)[0], oracle.gth(P), atol=1e-14)


def test_gth_relative_accuracy_on_tiny_entries():
    # birth-death chain with probabilities spanning 1e-30: GTH keeps relative accuracy
    n = 12
    P = np.zeros((n, n))
    for i in range(n):
        if i + 1 < n:
            P[i, i + 1] = 1e-3
        if i > 0:
            P[i, i - 1] = 0.9
        P[i, i] = 1 - P[i].sum()
    pi, _ = kernels.gth(P)
    ratio = 1e-3 / 0.9
    ref = ratio ** np.arange(n)
    ref /= ref.sum()
    assert np.allclose(pi, ref, rtol=1e-12, atol=0)


@pytest.mark.skipif(compiled is None, reason="extension not built")
def test_backends_agree():
    rng = np.random.default_rng(1)
    coeffs = rng.random((9, 3, 3))
    X = rng.random((3, 3)) / 4
    assert np.allclose(compiled.horner_right(coeffs, X), _kernels_py.horner_right(coeffs, X),
                       rtol=1e-14)
    c = rng.random((50, 2))
    R = rng.random((6, 2, 2)) / 10
    assert np.allclose(compiled.ramaswami(c, R), _kernels_py.ramaswami(c, R), rtol=1e-13)


def test_horner_matches_power_sum():
    rng = np.random.default_rng(2)
    coeffs = rng.random((6, 2, 2))
    X = rng.random((2, 2)) / 3
    ref = sum(coeffs[j] @ np.linalg.matrix_power(X, j) for j in range(6))
    assert np.allclose(kernels.horner_right(coeffs, X), ref, rtol=1e-14)


@pytest.mark.skipif(compiled is None, reason="extension not built")
@pytest.mark.parametrize("svc", [Exponential(4.0), Pareto(3.5, 2.5),
                                 PhaseType([0.5, 0.5], [[-8.0, 2.0], [0.0, -6.0]])])
def test_simulation_paths_identical(svc):
    mp = presets.mp2_map()
    cum, rates, arr = oracle._map_tables(mp)
    kind, params, ph_cum, ph_rates = svc.sampler()
    out = []
    for mod in BACKENDS:
        a, l = mod.simulate_queue(np.random.Philox(5), cum, rates, arr, 0, 4, 20000, 4,
                                  kind, params, ph_cum, ph_rates)
        out.append((np.asarray(a), np.asarray(l)))
    assert (out[0][0] == out[1][0]).all() and (out[0][1] == out[1][1]).all()


def test_pure_python_switch():
    env = dict(os.environ, MG1KIT_PURE_PYTHON="1")
    r = subprocess.run([sys.executable, "-c", "from mg1kit import kernels; print(kernels.BACKEND)"],
                       env=env, capture_output=True, text=True, check=True)
    assert r.stdout.strip() == "python"
