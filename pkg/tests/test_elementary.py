import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nonclassical import elementary as el
from nonclassical.errors import CutMismatch, InsufficientCuts, InsufficientSamples, NonConvergence, RankDeficient
from nonclassical.phase_space import StateModel, covariance_matrix
from nonclassical.sampler import CutPlan, QuadratureDataset, sample_per_cut

SP = StateModel()
VAC = StateModel("vacuum_control")


def test_radial_weight_values():
    assert el.radial_t_coefficient(1, 2) == pytest.approx(1.0)
    assert el.radial_t_coefficient(2, 3) == pytest.approx(16 / 18)
    with pytest.raises(InsufficientCuts):
        el.radial_t_coefficient(3, 3)


def test_radial_identity_fails_with_too_few_cuts():
    pts = [(1.0, 0.3), (0.2, -1.5)]
    assert el.verify_radial_identity(3, 4, pts) < 1e-12
    assert el.verify_radial_identity(3, 3, pts) > 1e-3


@settings(max_examples=20, deadline=None)
@given(N=st.integers(1, 4), extra=st.integers(0, 3), seed=st.integers(0, 2**32 - 1))
def test_general_constraint_on_random_cuts(N, extra, seed):
    rng = np.random.default_rng(seed)
    m = 2 * N + 1 + extra
    cuts = np.sort(rng.uniform(0, math.pi, m))
    if np.min(np.diff(cuts)) < 0.05:
        return
    for strategy in ("least_norm", "equal_weight"):
        T = el.solve_general_constraint(N, cuts, strategy)
        assert el.general_constraint_residual(T, cuts) < 1e-9


def test_equal_weight_is_uniform_for_radial_target():
    N = 2
    T = el.solve_general_constraint(N, el.uniform_cuts(7), "equal_weight")
    # x^2 + p^2 = sum_j w_j Q_j^2 with equal w_j
    w = T[1][0] + T[1][2]
    assert np.ptp(w) < 1e-12


def test_coincident_cuts_rejected():
    with pytest.raises(RankDeficient):
        el.solve_general_constraint(1, [0.0, 1.0, math.pi])
    with pytest.raises(InsufficientCuts):
        el.solve_general_constraint(2, [0.0, 1.0, 2.0])


def test_reconstruction_matches_test_function():
    rng = np.random.default_rng(3)
    x, p = rng.normal(size=(2, 50))
    for spec in (el.ElementaryTestSpec.radial(4, [-0.5, 0.1], 6),
                 el.ElementaryTestSpec.general(2, [[0.2, 0.1], [-0.3, 0.0, -0.2]])):
        np.testing.assert_allclose(el.reconstruct(spec, x, p), spec.test_function(x, p), rtol=1e-10, atol=1e-10)


def test_spec_roundtrip():
    spec = el.ElementaryTestSpec.radial(6, [-0.7, 0.2, -0.01], 9)
    back = el.ElementaryTestSpec.from_dict(json.loads(json.dumps(spec.to_dict())))
    np.testing.assert_array_equal(back.t, spec.t)
    gen = el.ElementaryTestSpec.general(1, [[0.1, 0.2]])
    back = el.ElementaryTestSpec.from_dict(gen.to_dict())
    assert back.mode == "general" and back.m == 3


def test_corrupted_weights_rejected():
    spec = el.ElementaryTestSpec.radial(4, [-0.5, 0.1])
    data = spec.to_dict()
    data["T"][0][0] *= 1.01
    with pytest.raises(ValueError):
        el.ElementaryTestSpec.from_dict(data)


def test_optimum_known_values():
    assert el.radial_optimum(SP, 2).G == pytest.approx(0.1327889773712069, rel=1e-12)
    assert el.radial_optimum(SP, 4).G == pytest.approx(-0.13312516060742693, rel=1e-12)
    assert el.radial_optimum(SP, 8).G == pytest.approx(-0.46345529659695384, rel=1e-12)


def test_optimal_G_non_increasing():
    Gs = [G for _, G in el.optimal_G_curve(SP, range(2, 13, 2))]
    assert all(b <= a + 1e-14 for a, b in zip(Gs, Gs[1:]))


def test_G_independent_of_cut_count():
    d = el.radial_optimum(SP, 6).d
    Gs = [float(el.analytic_G(SP, el.ElementaryTestSpec.radial(6, d, m))) for m in (7, 10, 15)]
    assert max(Gs) - min(Gs) < 1e-12


def test_optimize_radial_rejects_squeezed_model():
    with pytest.raises(ValueError):
        el.optimize_radial(StateModel("squeezed_single_photon", 2.0), 4)


def test_nonconvergence_reported():
    el._radial_optimum.cache_clear()
    try:
        with pytest.raises(NonConvergence):
            el.optimize_radial(SP, 10, max_iter=1)
    finally:
        el._radial_optimum.cache_clear()


@pytest.mark.parametrize("lam", [0.5, 3.0])
def test_squeeze_transform_preserves_statistics(lam):
    spec = el.ElementaryTestSpec.radial(6, el.radial_optimum(SP, 6).d)
    model = StateModel("squeezed_single_photon", lam)
    sq = el.squeeze_transform(spec, lam)
    a = el.analytic_outcome(SP, spec, 10**5)
    b = el.analytic_outcome(model, sq, 10**5)
    assert b.mean == pytest.approx(a.mean, rel=1e-12)
    assert b.variance == pytest.approx(a.variance, rel=1e-12)
    x, p = 0.3, -0.8
    assert sq.test_function(x, p) == pytest.approx(spec.test_function(lam * x, p / lam))


def test_squeeze_transform_general():
    spec = el.ElementaryTestSpec.general(2, [[0.2, 0.1], [-0.3, 0.05, -0.2]])
    sq = el.squeeze_transform(spec, 2.0)
    a = el.analytic_G(SP, spec)
    b = el.analytic_G(StateModel("squeezed_single_photon", 2.0), sq)
    assert float(b) == pytest.approx(float(a), rel=1e-10)


def test_vacuum_mean_non_negative():
    for N in (4, 8):
        spec = el.ElementaryTestSpec.radial(N, el.radial_optimum(SP, N).d)
        assert el.analytic_outcome(VAC, spec, 10**6).mean >= 0


def test_evaluate_matches_analytic():
    spec = el.ElementaryTestSpec.radial(4, el.radial_optimum(SP, 4).d, 5)
    M, runs = 50_000, 40
    want = el.analytic_outcome(SP, spec, M)
    out = [el.evaluate_test(sample_per_cut(SP, CutPlan(spec.cuts, (M // 5,) * 5), seed), spec)
           for seed in range(runs)]
    means = np.array([r.mean for r in out])
    # single variance estimates of a degree-16 statistic are skewed; their average is unbiased
    assert np.mean([r.variance for r in out]) == pytest.approx(want.variance, rel=0.25)
    assert np.var(means, ddof=1) == pytest.approx(want.variance, rel=0.5)
    assert abs(means.mean() - want.mean) < 4 * math.sqrt(want.variance / runs)
    assert np.all(means < 0)


def test_evaluate_threads_identical():
    spec = el.ElementaryTestSpec.radial(4, el.radial_optimum(SP, 4).d, 5)
    ds = sample_per_cut(SP, CutPlan(spec.cuts, (5000,) * 5), 1)
    assert el.evaluate_test(ds, spec, threads=1) == el.evaluate_test(ds, spec, threads=3)


def test_evaluate_preconditions():
    spec = el.ElementaryTestSpec.radial(4, [-0.5, 0.1], 5)
    ds = sample_per_cut(SP, CutPlan(spec.cuts[:4], (10,) * 4), 1)
    with pytest.raises(CutMismatch):
        el.evaluate_test(ds, spec)
    ds = sample_per_cut(SP, CutPlan(spec.cuts, (10, 10, 10, 10, 1)), 1)
    with pytest.raises(InsufficientSamples):
        el.evaluate_test(ds, spec)


def test_constant_test_has_undefined_significance():
    spec = el.ElementaryTestSpec.radial(1, [], 2)
    ds = QuadratureDataset([(c, np.zeros(3)) for c in spec.cuts], None)
    out = el.evaluate_test(ds, spec)
    assert out.mean == 1.0 and math.isnan(out.g_stat)
    assert out.to_dict()["g_stat"] is None


def test_split_variance_independent_of_counts():
    spec = el.ElementaryTestSpec.radial(4, el.radial_optimum(SP, 4).d, 5)
    K = el.radial_constraint_constants(spec)
    g = covariance_matrix(SP, 0.0, 8)
    M, m = 500, 5
    ref = None
    for counts in ([100] * 5, [2, 2, 2, 2, 492], [50, 150, 100, 120, 80]):
        T, v = el.optimal_measurement_split(K, g, M, m, counts)
        assert el.split_variance(T, g, counts) == pytest.approx(v, rel=1e-12)
        ref = v if ref is None else ref
        assert v == ref
