import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mg1kit.errors import DivergenceError
from mg1kit.mapg1 import Deterministic, Exponential
from mg1kit.tails import (GeometricWeights, MixedPoissonWeights, PoissonWeights,
                          PowerLawWeights, ShiftedWeights, weights_from_dict)


def brute(w, k, p, n=200_000):
    j = np.arange(k + 1, n)
    return float((j.astype(float) ** p * w.w(j)).sum())


@pytest.mark.parametrize("w", [PowerLawWeights(4.5), PowerLawWeights(5.0, start=3),
                               GeometricWeights(0.7), GeometricWeights(0.4, start=2),
                               PoissonWeights(2.5), ShiftedWeights(PoissonWeights(1.5), 1)])
@pytest.mark.parametrize("p", [0, 1, 2])
def test_moment_sf_matches_direct_sum(w, p):
    # the brute-force sum misses ~n^(p+1-beta) of a power tail
    rel = 1e-6 if isinstance(w, PowerLawWeights) else 1e-9
    for k in (0, 3, 10):
        assert w.moment_sf(k, p) == pytest.approx(brute(w, k, p), rel=rel, abs=1e-13)


@settings(max_examples=40, deadline=None)
@given(beta=st.floats(3.1, 8.0), n=st.integers(0, 60))
def test_double_sf_telescopes(beta, n):
    w = PowerLawWeights(beta)
    # sum_{m > n} sf(m) = double_sf(n)
    m = np.arange(n + 1, n + 1 + 20000)
    direct = float(w.sf(m).sum())
    rest = float(w.double_sf(n + 20000))
    assert float(w.double_sf(n)) == pytest.approx(direct + rest, rel=1e-10)


def test_power_divergent_moment_raises():
    with pytest.raises(DivergenceError):
        PowerLawWeights(2.5).moment_sf(0, 2)
    with pytest.raises(ValueError):
        PowerLawWeights(1.0)


def test_mixed_poisson_exponential_is_geometric():
    # Poisson(lam) counts during Exp(mu) service are geometric(lam/(lam+mu))
    lam, mu = 1.0, 2.0
    w = MixedPoissonWeights(lam, Exponential(mu))
    r = lam / (lam + mu)
    k = np.arange(8)
    assert np.allclose(w.w(k), (1 - r) * r ** k, rtol=1e-11, atol=1e-15)
    assert float(w.sf(3)) == pytest.approx(r ** 4, rel=1e-11)
    assert float(w.moment_sf(0, 1)) == pytest.approx(r / (1 - r), rel=1e-10)


def test_deterministic_counts_are_poisson():
    w, scale = Deterministic(0.5).count_weights(1.0)
    k = np.arange(10)
    assert np.allclose(scale * w.w(k), PoissonWeights(0.5).w(k), rtol=1e-12, atol=1e-16)


@pytest.mark.parametrize("w", [PowerLawWeights(4.5, start=2), GeometricWeights(0.3),
                               ShiftedWeights(PoissonWeights(1.0), 1), PoissonWeights(3.0)])
def test_dict_roundtrip(w):
    w2 = weights_from_dict(w.to_dict())
    k = np.arange(6)
    assert np.allclose(w.w(k), w2.w(k))
