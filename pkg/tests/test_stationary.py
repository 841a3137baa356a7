import numpy as np
import pytest

from mg1kit import matan, oracle, presets, stationary
from mg1kit.chain import assemble_finite, build_finite
from mg1kit.errors import InconsistencyError


def test_sc1_geometric_solution(solved):
    _, _, pi = solved("SC1")
    k = np.arange(1, 20)
    assert pi[0][0] == pytest.approx(0.6, abs=1e-15)
    assert np.allclose(pi.body[:19, 0], 0.6 * 0.4 ** k, rtol=1e-13)
    assert pi.tail_mass(0) == pytest.approx(0.4, abs=1e-14)


@pytest.mark.parametrize("name", ["SC1", "HC1", "MM1", "MP2"])
def test_infinite_solution_is_stationary(name, solved):
    spec, _, pi = solved(name)
    assert stationary.stationarity_residual(spec, pi, 40) < 1e-12
    total = pi.v0.sum() + pi.tail0.sum()
    assert total == pytest.approx(1.0, abs=1e-13)


@pytest.mark.parametrize("name", ["SC1", "MP2"])
def test_censored_p0_is_stochastic(name):
    spec = presets.get(name)
    sol = matan.solve(spec, kmax=4)
    P0, pit = stationary.censored_p0(spec, sol)
    assert np.abs(P0.sum(1) - 1).max() < 1e-13
    assert np.abs(pit @ P0 - pit).max() < 1e-14


@pytest.mark.parametrize("name", ["SC1", "HC1", "MP2"])
def test_finite_gth_matches_dense_solve(name):
    fs = build_finite(presets.get(name), 40)
    x = stationary.solve_finite(fs).flat()
    ref = oracle.lu_stationary(assemble_finite(fs))
    assert np.abs(x - ref).max() < 1e-12


def test_gth_rejects_two_closed_classes():
    P = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.5, 0.25, 0.25]])
    with pytest.raises(InconsistencyError):
        stationary.stationary_gth(P)


def test_gth_handles_transient_states():
    P = np.array([[0.5, 0.5, 0.0], [0.5, 0.5, 0.0], [0.2, 0.2, 0.6]])
    x = stationary.stationary_gth(P)
    assert np.allclose(x, [0.5, 0.5, 0.0])


def test_level_vector_csv_and_tails(solved):
    _, _, pi = solved("MP2")
    lines = pi.to_csv().splitlines()
    assert lines[0] == "level,phase,value"
    assert len(lines) == 1 + pi.v0.size + pi.body.size
    n = 7
    assert pi.tail_mass(n) == pytest.approx(pi.tail_vector(n).sum(), abs=1e-15)
    with pytest.raises(IndexError):
        pi[pi.truncation + 1]


def test_finite_vector_beyond_n_is_zero():
    fv = stationary.solve_finite(build_finite(presets.sc1(), 5))
    assert fv.tail_mass(5) == 0.0
    assert np.all(fv[9] == 0)
