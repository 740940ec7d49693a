"""Fast invariant suite behind ``nonclassical verify``.

Each check returns ``(passed, detail)``; :func:`run_all` collects them in order.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from . import backprojection as bp
from . import elementary as el
from .errors import PreconditionError
from .phase_space import (StateModel, covariance_matrix, cut_weight_integral, eval_wigner,
                          marginal_by_line_integral, quadrature_moment, radon_marginal)

SP = StateModel()


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float


def _wigner_normalization():
    worst = 0.0
    for kind, lam in (("single_photon", 1.0), ("squeezed_single_photon", 2.0), ("vacuum_control", 1.0)):
        model = StateModel(kind, lam)
        val, _ = integrate.dblquad(lambda p, x: eval_wigner(model, x, p), -12, 12, -12, 12,
                                   epsabs=1e-10, epsrel=1e-10)
        worst = max(worst, abs(val - 1))
    return worst < 1e-6, f"max |int W - 1| = {worst:.2e}"


def _marginal_consistency():
    worst = 0.0
    for model, theta in ((SP, 0.3), (StateModel("squeezed_single_photon", 2.0), 1.1)):
        marg = radon_marginal(model, theta)
        for s in np.linspace(-4, 4, 17):
            worst = max(worst, abs(marg.density(s) - marginal_by_line_integral(model, theta, s)))
    return worst < 1e-6, f"max density deviation {worst:.2e}"


def _moment_isotropy():
    vals = [quadrature_moment(SP, th, 8) for th in np.linspace(0, math.pi, 32, endpoint=False)]
    dev = max(vals) - min(vals)
    return dev < 1e-9, f"spread of <Q^8> over 32 angles {dev:.2e}"


def _u_integrals():
    worst = 0.0
    for lam in (0.2, 1.0, 5.0):
        worst = max(worst, abs(cut_weight_integral(lam, 2) - math.pi),
                    abs(cut_weight_integral(lam, 4) - math.pi / 2 * (lam**2 + lam**-2)))
    return worst < 1e-8, f"max deviation {worst:.2e}"


def _radial_identity():
    rng = np.random.default_rng(0)
    pts = rng.uniform(-3, 3, size=(100, 2))
    worst = max(el.verify_radial_identity(n, n + 1, pts) for n in range(1, 9))
    return worst < 1e-9, f"max residual {worst:.2e}"


def _general_constraint():
    T = el.solve_general_constraint(2, el.uniform_cuts(5))
    r = el.general_constraint_residual(T, el.uniform_cuts(5))
    return r < 1e-10, f"residual {r:.2e}"


def _reconstruction_identity():
    rng = np.random.default_rng(1)
    x, p = rng.uniform(-2, 2, size=(2, 200))
    worst = 0.0
    specs = [el.ElementaryTestSpec.radial(6, [-0.7, 0.2, -0.01], 9),
             el.ElementaryTestSpec.general(2, [[0.3, -0.2], [0.1, -0.4, 0.05]])]
    for spec in specs:
        F = spec.test_function(x, p)
        R = el.reconstruct(spec, x, p)
        worst = max(worst, float(np.max(np.abs(F - R) / np.maximum(1, np.abs(F)))))
    return worst < 1e-9, f"max relative mismatch {worst:.2e}"


def _cut_independence():
    d = el.radial_optimum(SP, 6).d
    Gs = [float(el.analytic_G(SP, el.ElementaryTestSpec.radial(6, d, m))) for m in (7, 9, 17)]
    dev = max(Gs) - min(Gs)
    return dev < 1e-9, f"G spread over m in (7, 9, 17): {dev:.2e}"


def _violation_onset():
    G3, G4 = el.radial_optimum(SP, 3).G, el.radial_optimum(SP, 4).G
    return G3 >= 0 > G4, f"G(3) = {G3:.6f}, G(4) = {G4:.6f}"


def _squeeze_invariance():
    opt = el.radial_optimum(SP, 8)
    spec = el.ElementaryTestSpec.radial(8, opt.d)
    G0 = float(el.analytic_G(SP, spec))
    worst = 0.0
    for lam in (0.5, 2.0, 5.0):
        G = float(el.analytic_G(StateModel("squeezed_single_photon", lam), el.squeeze_transform(spec, lam)))
        worst = max(worst, abs(G - G0))
    return worst < 1e-9, f"max |G_lam - G_1| {worst:.2e}"


def _vacuum_nonnegative():
    vac = StateModel("vacuum_control")
    means = [el.analytic_outcome(vac, el.ElementaryTestSpec.radial(N, el.radial_optimum(SP, N).d), 10**6).mean
             for N in (4, 8, 12)]
    return min(means) >= 0, f"min vacuum mean {min(means):.4f}"


def _split_invariance():
    spec = el.ElementaryTestSpec.radial(4, el.radial_optimum(SP, 4).d, 5)
    K = el.radial_constraint_constants(spec)
    g = covariance_matrix(SP, 0.0, 8)
    M, m = 1000, 5
    rng = np.random.default_rng(2)
    vals = []
    for _ in range(10):
        cuts = rng.multinomial(M - 2 * m, np.ones(m) / m) + 2
        T, v = el.optimal_measurement_split(K, g, M, m, cuts)
        vals.append(el.split_variance(T, g, cuts))
    dev = max(abs(x - v) / v for x in vals)
    return dev < 1e-12, f"relative spread {dev:.2e}"


def _adjoint():
    pts = [(0.0, 0.0), (3.0, 0.0), (0.2, -0.5), (1.6, 1.1)]
    r1 = bp.adjoint_radon_check(bp.KernelSpec(1, 1, 0), bp.FilterSpec(1, 1), pts)
    r2 = bp.adjoint_radon_check(bp.KernelSpec(1, 2, 0), bp.FilterSpec(1, 2), [(0.4, 0.0), (0.0, 1.5), (1.0, 0.0)])
    return max(r1, r2) < 1e-4, f"max residual {max(r1, r2):.2e}"


def _delta_scaling():
    k1, k4 = bp.KernelSpec(1, 1, 1e-4), bp.KernelSpec(1, 1, 4e-4)
    ratio = bp.systematic_error_bound(k4, 1.0) / bp.systematic_error_bound(k1, 1.0)
    return abs(ratio - 2) < 0.1, f"bound(4 eps) / bound(eps) = {ratio:.4f}"


def _disc_oracle():
    dev = abs(bp.disc_average_oracle(1.0) - bp.disc_average_closed_form(1.0))
    return dev < 1e-10, f"|quadrature - closed form| {dev:.2e}"


def _excision_consistency():
    exact = bp.disc_average_closed_form(1.0)
    ok = True
    parts = []
    for eps in (1e-2, 1e-3, 1e-4):
        k = bp.KernelSpec(1, 1, eps)
        bias = abs(bp.kernel_statistics("single_photon", 1, eps).mean - exact)
        bound = bp.systematic_error_bound(k, bp.base_pdf_max("single_photon"))
        ok &= bias <= bound
        parts.append(f"{eps:g}: {bias:.2e} <= {bound:.2e}")
    return ok, "; ".join(parts)


def _mc_lambda_invariance():
    ref = bp.analytic_mc(SP, bp.KernelSpec(1, 1, 1e-4), "optimal", 10**6)
    worst = 0.0
    for lam in (2.0, 5.0):
        est = bp.analytic_mc(StateModel("squeezed_single_photon", lam), bp.KernelSpec(1, lam, 1e-4), "optimal", 10**6)
        worst = max(worst, abs(est.mean - ref.mean) / abs(ref.mean), abs(est.variance - ref.variance) / ref.variance,
                    abs(est.ratio - ref.ratio) / abs(ref.ratio))
    return worst < 1e-6, f"max relative deviation {worst:.2e}"


def _uniform_penalty():
    worst = 0.0
    for lam in (2.0, 5.0):
        wu = bp.angular_weight(bp.CutDistribution("uniform", lam), lam)
        wo = bp.angular_weight(bp.CutDistribution("optimal", lam), lam)
        worst = max(worst, abs(wu / wo - (lam**2 + lam**-2) / 2))
    return worst < 1e-6, f"max deviation of second-moment ratio {worst:.2e}"


class _Perturbed:
    def __init__(self, lam, center, sign):
        self.lam, self.center, self.sign = lam, center, sign
        base = bp.CutDistribution("optimal", lam)
        raw = lambda th: base.density(th) * (1 + sign * 0.05 * math.exp(-((th - center) / 0.2) ** 2))
        self.norm = integrate.quad(raw, -math.pi / 2, math.pi / 2, points=[0.0, center], limit=200)[0]
        self._raw = raw

    def density(self, th):
        return self._raw(th) / self.norm


def _second_variation():
    lam = 3.0
    w0 = bp.angular_weight(bp.CutDistribution("optimal", lam), lam)
    ok = True
    for center in (-1.0, -0.2, 0.0, 0.4, 1.2):
        for sign in (-1, 1):
            ok &= bp.angular_weight(_Perturbed(lam, center, sign), lam) >= w0 - 1e-12
    return ok, f"optimal second-moment weight {w0:.12f}"


def _finite_cut_exact():
    errs = [bp.uniform_finite_plan(1.0, m).error for m in (2, 4, 8, 16)]
    return max(errs) == 0.0, f"max E at lambda = 1: {max(errs):.1e}"


def _allocation():
    counts = bp.allocate_measurements([0.9, 0.1], 102)
    counts = [int(c) for c in counts]
    return counts == [91, 11], f"counts {counts}"


CHECKS = [
    ("wigner normalization", _wigner_normalization),
    ("marginal equals line integral", _marginal_consistency),
    ("moment isotropy", _moment_isotropy),
    ("u integrals", _u_integrals),
    ("radial identity", _radial_identity),
    ("general constraint", _general_constraint),
    ("reconstruction identity", _reconstruction_identity),
    ("G independent of cut count", _cut_independence),
    ("violation onset", _violation_onset),
    ("squeeze invariance", _squeeze_invariance),
    ("vacuum control non-negative", _vacuum_nonnegative),
    ("measurement split invariance", _split_invariance),
    ("adjoint Radon relation", _adjoint),
    ("excision bound scaling", _delta_scaling),
    ("disc average oracle", _disc_oracle),
    ("excision consistency", _excision_consistency),
    ("Monte Carlo lambda invariance", _mc_lambda_invariance),
    ("uniform cut penalty", _uniform_penalty),
    ("optimal cut distribution is a minimum", _second_variation),
    ("finite cuts exact at lambda 1", _finite_cut_exact),
    ("measurement allocation", _allocation),
]


def run_all(names=None) -> list[CheckResult]:
    unknown = set(names or ()) - {name for name, _ in CHECKS}
    if unknown:
        raise PreconditionError(f"unknown checks: {sorted(unknown)}")
    out = []
    for name, fn in CHECKS:
        if names and name not in names:
            continue
        t0 = time.perf_counter()
        try:
            ok, detail = fn()
        except Exception as exc:  # a crashing check is a failing check
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        out.append(CheckResult(name, bool(ok), detail, time.perf_counter() - t0))
    return out
