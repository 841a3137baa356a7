import numpy as np
import pytest

from mg1kit import asymptotics as asy
from mg1kit import presets
from mg1kit.errors import InapplicableError, ValidationError


def test_tail_model_validation():
    with pytest.raises(ValidationError):
        asy.TailModel(lambda k: 1.0 - 0.001 * np.asarray(k, float), n_check=2000)
    with pytest.raises(ValidationError):
        asy.TailModel(lambda k: 0.5 + 0.0001 * np.asarray(k, float), n_check=10)


def test_power_tail_is_subexponential():
    r = asy.subexponential_evidence(asy.TailModel.power(2.5), 2000)
    assert r[-1] == pytest.approx(2.0, abs=0.01)


def test_geometric_tail_is_not():
    r = asy.subexponential_evidence(asy.TailModel.geometric(0.9), 200)
    assert r[-1] > 10


def test_pmf_sums_to_one():
    F = asy.TailModel.power(3.0)
    p = F.pmf(200)
    assert p.sum() + float(F.sf(200)) == pytest.approx(1.0, abs=1e-14)
    assert (p >= 0).all() and p[0] == 0.0


def test_long_tail_evidence():
    assert asy.TailModel.power(2.5).long_tail_evidence()["k0"] is not None
    assert asy.TailModel.geometric(0.5).long_tail_evidence(n_max=200)["k0"] is None


@pytest.mark.parametrize("vals, ok", [([5, 4, 3, 2, 1], True), ([5, 4, 3, 3.5, 2], True),
                                      ([1, 2, 3, 4, 5], False), ([5, 1, 2, 3, 4], False)])
def test_trend_decreasing(vals, ok):
    assert asy.trend_decreasing(vals) is ok


def test_hc1_constants_match_power_law():
    # ooA(N) = Z sum_{j > N+1} (j - N - 1) j^-4.5 ~ Z N^-2.5 / (3.5 * 2.5), against (1 + N)^-2.5
    spec = presets.hc1()
    c = asy.fit_constants(spec, asy.TailModel.power(2.5), [200, 400, 800, 1600])
    Z = spec.tail.profile_a[0, 0]
    assert c.c_a[0] == pytest.approx(Z / 8.75, rel=0.02)
    assert not c.violated


def test_light_tail_constants_vanish():
    spec = presets.mm1()
    F = asy.TailModel.power(2.5)
    c = asy.fit_constants(spec, F, [20, 40, 80])
    assert not c.nonzero
    with pytest.raises(InapplicableError):
        asy.tail_ratio(spec, None, F, [20, 40, 80], constants=c)


def test_study_flags_wrong_tail_model():
    spec = presets.sc1()
    st = asy.convergence_study(spec, asy.TailModel.power(2.5), [0, 1], [10, 20, 40])
    assert st.summary["status"] == "assumption-violated"
    st2 = asy.convergence_study(spec, None, [1], [10, 20])
    assert st2.summary["status"] == "assumption-unchecked"
    assert st2.to_csv().startswith("N,k,phase,r_N")


def test_study_parallel_matches_serial():
    spec = presets.hc1()
    F = asy.TailModel.chain_double_tail(spec)
    a = asy.convergence_study(spec, F, [1], [20, 40, 80])
    b = asy.convergence_study(spec, F, [1], [20, 40, 80], workers=3)
    assert a.rows == b.rows


def test_empty_grid():
    with pytest.raises(ValidationError):
        asy.convergence_study(presets.sc1(), None, [1], [])
