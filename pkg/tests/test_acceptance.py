"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line at its stated tolerance."""

import math
import time

import numpy as np
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from nonclassical import backprojection as bp
from nonclassical import elementary as el
from nonclassical.phase_space import StateModel, base_pdf_max, cut_weight_integral
from nonclassical.sampler import CutPlan, sample_joint, sample_per_cut

SP = StateModel()
SP_BASE_MAX = base_pdf_max("single_photon")
ORACLE = (1 - 3 / math.e) / math.pi


def squeezed(lam):
    return StateModel("squeezed_single_photon", lam)


def test_violation_onset(report):
    t0 = time.perf_counter()
    G = {}
    for N in range(1, 5):
        spec, out = el.optimize_radial(SP, N)
        G[N] = el.radial_optimum(SP, N).G
    elapsed = time.perf_counter() - t0
    ok = all(G[N] >= 0 for N in (1, 2, 3)) and G[4] < 0 and elapsed < 60
    report(1, ok, f"G(1..3) = {G[1]}, {G[2]:.6f}, {G[3]:.6f} (>= 0), G(4) = {G[4]:.6f} (< 0), {elapsed:.1f}s")
    assert ok


def test_saturation(report):
    t0 = time.perf_counter()
    G16 = el.radial_optimum(SP, 16)
    G20 = el.radial_optimum(SP, 20)
    elapsed = time.perf_counter() - t0
    rel = abs(G20.G - G16.G) / abs(G16.G)
    ok = rel <= 0.05 and elapsed < 600
    report(2, ok, f"|G20 - G16| / |G16| = {rel:.4f} (tol 0.05); G16 = {G16.G:.12f}, G20 = {G20.G:.12f}, "
                  f"gradient norms {G16.grad_norm:.1e}, {G20.grad_norm:.1e}, {elapsed:.1f}s")
    # converged stationary points, so the relative change is a property of the optimum
    assert G16.grad_norm < 1e-8 and G20.grad_norm < 1e-8
    assert ok


def test_radial_identity(report):
    rng = np.random.default_rng(2024)
    pts = rng.uniform(-3, 3, size=(100, 2))
    res = {n: el.verify_radial_identity(n, n + 1, pts) for n in range(1, 9)}
    worst = max(res.values())
    ok = worst < 1e-9
    report(3, ok, f"max residual over n <= 8, m = n + 1: {worst:.2e} (tol 1e-9)")
    assert ok


def test_squeeze_invariance(report):
    t0 = time.perf_counter()
    worst = 0.0
    for N in (4, 8, 16):
        opt = el.radial_optimum(SP, N)
        spec = el.ElementaryTestSpec.radial(N, opt.d)
        for lam in (0.5, 2.0, 5.0):
            G = float(el.analytic_G(squeezed(lam), el.squeeze_transform(spec, lam)))
            worst = max(worst, abs(G - opt.G))
    elapsed = time.perf_counter() - t0
    ok = worst < 1e-9 and elapsed < 60
    report(4, ok, f"max |G_lam - G_opt| over N in (4, 8, 16), lam in (0.5, 2, 5): {worst:.2e} (tol 1e-9), {elapsed:.1f}s")
    assert ok


def test_u_integrals(report):
    worst = 0.0
    for lam in (0.2, 1.0, 5.0):
        worst = max(worst, abs(cut_weight_integral(lam, 2) - math.pi),
                    abs(cut_weight_integral(lam, 4) - math.pi / 2 * (lam**2 + lam**-2)))
    ok = worst < 1e-8
    report(5, ok, f"max deviation of the u^-2 and u^-4 integrals: {worst:.2e} (tol 1e-8)")
    assert ok


def test_backprojection_oracle(report):
    t0 = time.perf_counter()
    k = bp.KernelSpec(1.0, 1.0, 1e-4)
    val = bp.analytic_backprojection(SP, k)
    oracle = bp.disc_average_oracle(1.0)
    delta = bp.systematic_error_bound(k, SP_BASE_MAX)
    elapsed = time.perf_counter() - t0
    dev = abs(val - oracle)
    ok = dev <= delta + 1e-5 and abs(oracle - ORACLE) < 1e-10 and elapsed < 60
    report(6, ok, f"|FBP - oracle| = {dev:.4e} <= Delta + 1e-5 = {delta + 1e-5:.4e}; oracle {oracle:.9f}, {elapsed:.1f}s")
    assert ok


def test_monte_carlo_consistency(report):
    t0 = time.perf_counter()
    M, eps = 10**6, 1e-6
    est = {}
    for lam, seed in ((1.0, 11), (5.0, 12)):
        stream = sample_joint(squeezed(lam), "optimal", M, seed)
        est[lam] = bp.mc_estimate(stream, bp.KernelSpec(1.0, lam, eps))
    ref = bp.analytic_mc(SP, bp.KernelSpec(1.0, 1.0, eps), "optimal", M)
    # spread of the estimated variance from the kernel's fourth moment
    m2 = bp.kernel_moment("single_photon", 1.0, eps, 2)
    m4 = bp.kernel_moment("single_photon", 1.0, eps, 4)
    var_tol = 5 * math.sqrt((m4 - m2**2) / M) / (M - 1)
    lines, ok = [], True
    for lam, e in est.items():
        z = (e.mean - ORACLE) / math.sqrt(e.variance)
        ok &= abs(z) <= 3
        lines.append(f"lam={lam:g}: (mean - oracle)/sd = {z:+.2f}")
    z5 = (est[5.0].mean - ref.mean) / math.sqrt(ref.variance)
    dv = abs(est[5.0].variance - ref.variance)
    ok &= abs(z5) <= 3 and dv <= var_tol
    elapsed = time.perf_counter() - t0
    ok &= elapsed < 300
    report(7, ok, "; ".join(lines) + f"; lam=5 vs lam=1 analytic: mean z = {z5:+.2f}, "
                  f"|dvar| = {dv:.2e} <= {var_tol:.2e}; {elapsed:.1f}s")
    assert ok


def test_finite_cuts(report):
    t0 = time.perf_counter()
    errs = [bp.finite_cut_plan(5.0, m).error for m in (4, 8, 12, 16, 20)]
    elapsed = time.perf_counter() - t0
    mono = all(b <= a for a, b in zip(errs, errs[1:]))
    ok = errs[2] <= 0.03 and mono and elapsed < 300
    report(8, ok, f"E(lam=5, m=12) = {errs[2]:.4f} (tol 0.03); E over m=4..20: "
                  + ", ".join(f"{e:.3e}" for e in errs) + f" non-increasing={mono}; {elapsed:.1f}s")
    assert ok


def test_comparison_ratio(report):
    t0 = time.perf_counter()
    spec = el.ElementaryTestSpec.radial(16, el.radial_optimum(SP, 16).d, 17)
    R = {}
    for M in (10**5, 10**6, 10**7):
        elem = el.analytic_outcome(SP, spec, M)
        opt = bp.optimize_filter(M, SP)
        R[M] = bp.compare_R(elem, opt.estimate)
    elapsed = time.perf_counter() - t0
    ok = R[10**6] > 1 and R[10**5] <= R[10**6] <= R[10**7] and elapsed < 1800
    report(9, ok, "R(1e5, 1e6, 1e7) = " + ", ".join(f"{r:.4f}" for r in R.values())
                  + f" (R(1e6) > 1 and non-decreasing); {elapsed:.1f}s")
    assert ok


_VAC = StateModel("vacuum_control")
_VAC_SPEC = el.ElementaryTestSpec.radial(4, el.radial_optimum(SP, 4).d, 5)
_VAC_KERNEL = bp.KernelSpec(1.0, 1.0, 1e-6)
_worst_z = {"elementary": math.inf, "backprojection": math.inf, "runs": 0}


@settings(max_examples=100, derandomize=True, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(seed=st.integers(min_value=0, max_value=2**64 - 1))
def _classical_control(seed):
    M = 10**5
    ds = sample_per_cut(_VAC, CutPlan(_VAC_SPEC.cuts, (M // 5,) * 5), seed)
    out = el.evaluate_test(ds, _VAC_SPEC)
    z_el = out.mean / math.sqrt(out.variance)
    est = bp.mc_estimate(sample_joint(_VAC, "optimal", M, seed), _VAC_KERNEL)
    z_bp = est.mean / math.sqrt(est.variance)
    _worst_z["elementary"] = min(_worst_z["elementary"], z_el)
    _worst_z["backprojection"] = min(_worst_z["backprojection"], z_bp)
    _worst_z["runs"] += 1
    assert z_el > -3 and z_bp > -3


def test_classical_control(report):
    t0 = time.perf_counter()
    try:
        _classical_control()
        ok = True
    except AssertionError:
        ok = False
    elapsed = time.perf_counter() - t0
    ok &= elapsed < 600
    report(10, ok, f"{_worst_z['runs']} seeded vacuum runs; lowest mean/sd: elementary {_worst_z['elementary']:+.1f}, "
                   f"back-projection {_worst_z['backprojection']:+.1f} (fail at <= -3); {elapsed:.1f}s")
    assert ok


def test_measurement_allocation(report):
    W, M, sigma2 = np.array([0.9, 0.1]), 102, 1.0
    counts = [int(c) for c in bp.allocate_measurements(W, M)]
    ideal = 1 + (M - len(W)) * W / W.sum()
    var = bp.allocation_variance(W, ideal, sigma2)
    dev = abs(var - sigma2 / (M - len(W)))
    ok = counts == [91, 11] and dev < 1e-12
    report(11, ok, f"counts {counts} (want [91, 11]); |var - sigma^2/(M - m)| = {dev:.1e} (tol 1e-12)")
    assert ok
