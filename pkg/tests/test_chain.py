import numpy as np
import pytest

from mg1kit import presets
from mg1kit.chain import (ChainSpec, assemble_finite, assemble_p_window, build_finite,
                          drift_parameters, validate)
from mg1kit.errors import ValidationError


def test_sc1_validates():
    rep = validate(presets.sc1())
    assert rep.valid
    assert rep.sigma == pytest.approx(-0.3)
    assert rep.sigma_check == pytest.approx(-0.3)
    assert all(rep.flags.values())


def test_rowsum_error_reported():
    bad = ChainSpec([[[0.5]], [[0.3]], [[0.25]]], [[0.5]], [[0.8]], [[[0.2]]])
    with pytest.raises(ValidationError) as exc:
        validate(bad)
    assert exc.value.residual == pytest.approx(0.05)
    rep = validate(bad, raise_on_error=False)
    assert not rep.valid and rep.errors


def test_positive_drift_flagged():
    up = ChainSpec([[[0.2]], [[0.3]], [[0.5]]], [[0.2]], [[0.5]], [[[0.5]]])
    rep = validate(up)
    assert rep.sigma > 0 and not rep.flags["negative_drift"]


def test_reducible_a_rejected():
    A = np.zeros((3, 2, 2))
    A[0] = np.diag([0.5, 0.5])
    A[2] = np.diag([0.5, 0.5])
    ch = ChainSpec(A, np.diag([0.5, 0.5]), np.eye(2) * 0.5,
                   np.eye(2)[None] * 0.5)
    with pytest.raises(ValidationError):
        validate(ch)


@pytest.mark.parametrize("name", ["SC1", "HC1", "MM1", "MP2"])
def test_finite_chain_is_stochastic(name):
    spec = presets.get(name)
    for N in (1, 2, 7, 30):
        P = assemble_finite(build_finite(spec, N))
        assert (P >= 0).all()
        assert np.abs(P.sum(axis=1) - 1).max() < 1e-12


def test_p_window_deficiency_accounts_for_mass():
    spec = presets.hc1()
    win = assemble_p_window(spec, 10)
    assert np.allclose(win.matrix.sum(axis=1) + win.deficiency, 1.0, atol=1e-13)


def test_hc1_tails_consistent():
    spec = presets.hc1()
    for k in (0, 3, 12):
        assert spec.tail_a(k)[0, 0] == pytest.approx(spec.a(k + 1)[0, 0] + spec.tail_a(k + 1)[0, 0])
    # double tail: sum of tails beyond n
    n = 4
    direct = sum(spec.tail_a(m)[0, 0] for m in range(n + 1, 4000))
    assert spec.double_tail_a(n, strict=False)[0, 0] == pytest.approx(direct, rel=1e-6)


def test_custom_augmentation_checked():
    spec = presets.sc1()
    N = 3
    aug_a = np.stack([spec.tail_a(k - 1) for k in range(N)])
    aug_b = spec.tail_b(N - 1)
    fs = build_finite(spec, N, "Custom", aug_a, aug_b)
    assert np.allclose(assemble_finite(fs).sum(1), 1)
    with pytest.raises(ValidationError):
        build_finite(spec, N, "Custom", aug_a * 0.5, aug_b)
    with pytest.raises(ValidationError):
        build_finite(spec, 0)


def test_drift_parameters_mp2():
    varpi, beta, sigma = drift_parameters(presets.mp2())
    assert varpi.sum() == pytest.approx(1)
    assert sigma == pytest.approx(0.9 * 0.25 - 1, abs=1e-12)
