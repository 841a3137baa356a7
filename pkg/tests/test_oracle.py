import numpy as np
import pytest

from mg1kit import mapg1, oracle, presets
from mg1kit.errors import ConvergenceError, InconsistencyError, ValidationError


def test_gth_and_lu_agree():
    P = oracle.truncated_chain(presets.mp2(), 60)
    assert np.abs(oracle.gth(P) - oracle.lu_stationary(P)).max() < 1e-13


def test_gth_two_closed_classes():
    with pytest.raises(InconsistencyError):
        oracle.gth(np.eye(3))


def test_truncated_chain_stochastic():
    P = oracle.truncated_chain(presets.hc1(), 50)
    assert np.abs(P.sum(1) - 1).max() < 1e-13


def test_power_sums_periodic_rejected():
    P = np.array([[0.0, 1.0], [1.0, 0.0]])
    pi = np.array([0.5, 0.5])
    with pytest.raises(ConvergenceError):
        oracle.power_partial_sums(P, pi, 100)
    S = oracle.power_partial_sums(P, pi, 2000, cesaro=True)
    # group inverse of the flip chain is [[1/4, -1/4], [-1/4, 1/4]]
    assert np.allclose(S, [[0.25, -0.25], [-0.25, 0.25]], atol=1e-3)


def test_power_sums_match_group_inverse():
    P = np.array([[0.5, 0.5, 0.0], [0.25, 0.5, 0.25], [0.0, 0.5, 0.5]])
    pi = oracle.gth(P)
    E = np.outer(np.ones(3), pi)
    D = np.linalg.inv(np.eye(3) - P + E) - E
    assert np.abs(oracle.power_partial_sums(P, pi, 200) - D).max() < 1e-12


def test_first_passage_leak_guard():
    with pytest.raises(ConvergenceError):
        oracle.first_passage_solve(presets.sc1(), 12, targets=range(11))
    with pytest.raises(ValidationError):
        oracle.first_passage_solve(presets.sc1(), 5, targets=range(11))


def test_mc_reproducible():
    mp, svc = mapg1.MapSpec.poisson(1.0), mapg1.Exponential(2.0)
    a = oracle.mc_queue(mp, svc, 3, arrivals=200_000, seed=9, streams=2)
    b = oracle.mc_queue(mp, svc, 3, arrivals=200_000, seed=9, streams=2, workers=2)
    assert a == b
    assert a["arrivals"] == 200_000
    assert abs(a["loss"] - mapg1.mm1k_loss(1, 2, 3)) < 4 * a["se"]


def test_mc_requires_enough_arrivals():
    with pytest.raises(ValidationError):
        oracle.mc_queue(mapg1.MapSpec.poisson(1.0), mapg1.Exponential(2.0), 3, arrivals=10)


def test_h_definitional_poisson():
    ref = oracle.h_definitional(presets.sc1(), 120, window=4)
    assert ref["poisson_residual"] < 1e-12
    # one visit to the reference state before returning, minus pi(0) E_0[T_0] = 1
    assert ref["H"][0, 0] == pytest.approx(0.0, abs=1e-12)
