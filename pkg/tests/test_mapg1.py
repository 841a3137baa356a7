import numpy as np
import pytest
from scipy import integrate

from mg1kit import mapg1, presets
from mg1kit.errors import InapplicableError, ValidationError
from mg1kit.mapg1 import Deterministic, Exponential, MapSpec, Pareto, PhaseType


def test_map_validation():
    with pytest.raises(ValidationError):
        MapSpec([[-1.0]], [[0.5]])
    with pytest.raises(ValidationError):
        MapSpec([[-1.0, 0.0], [0.0, -1.0]], [[1.0, 0.0], [0.0, 1.0]])  # reducible
    mp = presets.mp2_map()
    assert mp.lam == pytest.approx(0.9)
    assert mp.varpi == pytest.approx([0.6, 0.4])


def test_unstable_queue_rejected():
    with pytest.raises(ValidationError):
        mapg1.embed_chain(MapSpec.poisson(2.0), Exponential(1.0))


@pytest.mark.parametrize("svc", [Exponential(2.0), Pareto(3.5, 2.5),
                                 PhaseType([0.3, 0.7], [[-3.0, 1.0], [0.0, -2.0]])])
def test_service_consistency(svc):
    assert integrate.quad(svc.pdf, 0, np.inf)[0] == pytest.approx(1.0, rel=1e-8)
    assert integrate.quad(svc.sf, 0, np.inf)[0] == pytest.approx(svc.mean, rel=1e-8)
    x = 0.7
    assert float(svc.partial_moment(x, 1)) == pytest.approx(
        integrate.quad(lambda t: t * svc.pdf(t), x, np.inf)[0], rel=1e-8)
    eq = integrate.quad(svc.sf, x, np.inf)[0] / svc.mean
    assert float(svc.equilibrium_tail(x)) == pytest.approx(eq, rel=1e-8)


def test_pareto_from_mean():
    svc = mapg1.service_from_dict({"kind": "pareto", "shape": 3.5, "mean": 1.0})
    assert svc.mean == pytest.approx(1.0)
    assert svc.subexponential_equilibrium


@pytest.mark.parametrize("svc", [Exponential(2.0), Deterministic(0.5), Pareto(3.5, 2.5)])
def test_sigma_identity_poisson(svc):
    mp = MapSpec.poisson(0.5 if isinstance(svc, Pareto) else 1.0)
    out = mapg1.sigma_identity(mp, svc, mapg1.embed_chain(mp, svc))
    assert out["residual"] < 1e-10


def test_sigma_identity_mp2():
    mp = presets.mp2_map()
    out = mapg1.sigma_identity(mp, Exponential(4.0), presets.mp2())
    assert out["residual"] < 1e-12 and out["varpi_residual"] < 1e-12


def test_mp2_embedding_rows():
    ch = presets.mp2()
    assert np.abs(ch.a_sum.sum(1) - 1).max() < 1e-14
    assert np.abs(ch.b0.sum(1) + ch.moment_b(0).sum(1) - 1).max() < 1e-14


def test_mm1k_closed_form():
    mp, svc = MapSpec.poisson(1.0), Exponential(2.0)
    ch = mapg1.embed_chain(mp, svc)
    for N in (1, 4, 10):
        assert mapg1.loss_exact(mp, svc, N, chain=ch) == pytest.approx(
            mapg1.mm1k_loss(1.0, 2.0, N), abs=1e-14)
    assert mapg1.mm1k_loss(1.0, 1.0, 3) == pytest.approx(0.2)


def test_md1_loss_decreases():
    mp, svc = MapSpec.poisson(1.0), Deterministic(0.5)
    ch = mapg1.embed_chain(mp, svc)
    losses = [mapg1.loss_exact(mp, svc, N, chain=ch) for N in (1, 2, 4, 8)]
    assert all(a > b for a, b in zip(losses, losses[1:]))


def test_asymptotic_loss():
    mp, svc = presets.m_pareto()
    # N = 0: every service straddles the boundary
    assert mapg1.loss_asymptotic(mp, svc, 0) == pytest.approx(0.5 / 1.5)
    with pytest.raises(InapplicableError):
        mapg1.loss_asymptotic(mp, Exponential(2.0), 10)


def test_loss_rejects_n0():
    with pytest.raises(ValidationError):
        mapg1.loss_exact(MapSpec.poisson(1.0), Exponential(2.0), 0)


def test_phase_type_matches_exponential():
    mp = MapSpec.poisson(1.0)
    a = mapg1.loss_exact(mp, Exponential(2.0), 5)
    b = mapg1.loss_exact(mp, PhaseType([1.0], [[-2.0]]), 5)
    assert a == pytest.approx(b, rel=1e-9)
