import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from nonclassical.errors import OrderTooLarge
from nonclassical.phase_space import (PhasePoint, StateModel, base_cdf, base_pdf, covariance_matrix,
                                      cut_weight_integral, eval_wigner, marginal_by_line_integral,
                                      quadrature_moment, radon_marginal, scale_u)

SP = StateModel()
angles = st.floats(min_value=0.0, max_value=math.pi, exclude_max=True)
lams = st.floats(min_value=0.2, max_value=5.0)


def test_wigner_at_origin_is_negative():
    assert eval_wigner(SP, 0.0, 0.0) == pytest.approx(-1 / math.pi)


def test_wigner_normalized():
    val, _ = integrate.dblquad(lambda p, x: eval_wigner(SP, x, p), -10, 10, -10, 10)
    assert val == pytest.approx(1.0, abs=1e-8)


def test_wigner_broadcasts():
    x = np.linspace(-1, 1, 5)
    out = eval_wigner(SP, x[:, None], x[None, :])
    assert out.shape == (5, 5)


def test_vacuum_wigner_positive():
    vac = StateModel("vacuum_control")
    x = np.linspace(-3, 3, 31)
    assert np.all(eval_wigner(vac, x[:, None], x[None, :]) > 0)


def test_single_photon_rejects_squeeze():
    with pytest.raises(ValueError):
        StateModel("single_photon", 2.0)


@pytest.mark.parametrize("bad", [0.0, -1.0, math.inf, math.nan])
def test_model_rejects_bad_lambda(bad):
    with pytest.raises(ValueError):
        StateModel("squeezed_single_photon", bad)


def test_model_roundtrip():
    m = StateModel("squeezed_single_photon", 2.5)
    assert StateModel.from_dict(m.to_dict()) == m


def test_phase_point_rejects_nonfinite():
    with pytest.raises(ValueError):
        PhasePoint(math.nan, 0.0)


def test_radon_marginal_rejects_out_of_range_angle():
    with pytest.raises(ValueError):
        radon_marginal(SP, math.pi)


@settings(max_examples=25, deadline=None)
@given(theta=angles, lam=lams, s=st.floats(min_value=-4, max_value=4))
def test_marginal_matches_line_integral(theta, lam, s):
    model = StateModel("squeezed_single_photon", lam)
    assert radon_marginal(model, theta).density(s) == pytest.approx(
        marginal_by_line_integral(model, theta, s), abs=1e-7)


@settings(max_examples=25, deadline=None)
@given(theta=angles, lam=lams)
def test_marginal_normalized(theta, lam):
    marg = radon_marginal(StateModel("squeezed_single_photon", lam), theta)
    assert marg.cdf(60.0) - marg.cdf(-60.0) == pytest.approx(1.0, abs=1e-12)


def test_base_cdf_matches_pdf():
    for base in ("single_photon", "vacuum_control"):
        val, _ = integrate.quad(lambda t: base_pdf(base, t), -np.inf, 0.7)
        assert base_cdf(base, 0.7) == pytest.approx(val, abs=1e-12)


@given(lam=lams, theta=angles)
def test_scale_u_symmetric(lam, theta):
    assert scale_u(lam, theta) == pytest.approx(scale_u(1 / lam, theta + math.pi / 2))


@pytest.mark.parametrize("k", [1, 2, 3, 4])
def test_single_photon_moments(k):
    dfact = math.prod(range(2 * k + 1, 0, -2))
    assert quadrature_moment(SP, 0.4, 2 * k) == pytest.approx(dfact / 2**k, rel=1e-14)
    assert quadrature_moment(SP, 0.4, 2 * k - 1) == 0.0


def test_moments_are_isotropic():
    vals = [quadrature_moment(SP, th, 10) for th in np.linspace(0, 3, 7)]
    assert max(vals) - min(vals) < 1e-10


def test_squeezed_second_moment():
    lam, th = 2.0, 0.3
    u = scale_u(lam, th)
    assert quadrature_moment(StateModel("squeezed_single_photon", lam), th, 2) == pytest.approx(1.5 * u**2)


def test_moment_order_cap():
    with pytest.raises(OrderTooLarge):
        quadrature_moment(SP, 0.0, 65)


def test_covariance_positive_semidefinite():
    g = covariance_matrix(SP, 0.0, 8)
    assert np.min(np.linalg.eigvalsh(g)) > -1e-10


@pytest.mark.parametrize("lam", [0.2, 1.0, 3.0])
def test_cut_weight_integrals(lam):
    assert cut_weight_integral(lam, 2) == pytest.approx(math.pi, abs=1e-10)
    assert cut_weight_integral(lam, 4) == pytest.approx(math.pi / 2 * (lam**2 + lam**-2), rel=1e-10)
