"""Filtered back-projection estimate of a disc-averaged phase-space density.

The disc filter ``F_a`` is reached from measured marginals through the kernel
``omega_a`` solving ``R^dagger omega = F``:

    omega_a(t) = 1/(pi a^2)                                  |t| <= a
    omega_a(t) = (1 - |t| / sqrt(t^2 - a^2)) / (pi a^2)       |t| > a

For a state squeezed by ``lam`` the kernel is stretched,
``omega_{a,lam}(theta, s) = omega_a(s/u) / u^2`` with ``u = u(lam, theta)``,
and a band ``a < |s|/u < a + eps`` next to the edge singularity is excised.

Integrals against the kernel are computed in the variable ``t = s/u`` of the
unsqueezed marginal; the outer branch is handled with ``t = a cosh(v)``, which
removes the inverse square-root singularity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import integrate, optimize

from .errors import CutMismatch, InsufficientSamples, NonConvergence, PreconditionError
from .phase_space import (SINGLE_PHOTON, VACUUM_CONTROL, StateModel, base_cdf,
                          base_pdf, base_pdf_max, eval_wigner, scale_u)
from .sampler import CutDistribution, JointSampleStream, QuadratureDataset

_TAIL = 12.0


# ---------------------------------------------------------------------------
# Specs
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FilterSpec:
    """Normalized indicator of the disc ``(l (x-x0))^2 + ((p-p0)/l)^2 <= a^2``."""

    a: float = 1.0
    l: float = 1.0
    center: tuple = (0.0, 0.0)

    def __post_init__(self):
        if not (self.a > 0 and self.l > 0):
            raise PreconditionError("filter radius and stretch must be positive")


@dataclass(frozen=True)
class KernelSpec:
    a: float = 1.0
    lam: float = 1.0
    epsilon: float = 0.0
    center: tuple = (0.0, 0.0)

    def __post_init__(self):
        if not (self.a > 0 and self.lam > 0):
            raise PreconditionError("kernel radius and stretch must be positive")
        if self.epsilon < 0:
            raise PreconditionError("excision width must be non-negative")

    @property
    def norm(self) -> float:
        return 1.0 / (math.pi * self.a * self.a)


@dataclass(frozen=True)
class BackprojectionPlan:
    a: float
    lam: float
    epsilon: float
    distribution: str
    M: int
    seed: int

    @classmethod
    def from_dict(cls, data: dict) -> "BackprojectionPlan":
        return cls(a=float(data["a"]), lam=float(data.get("lambda", 1.0)), epsilon=float(data["epsilon"]),
                   distribution=data.get("distribution", "optimal"), M=int(data["M"]), seed=int(data["seed"]))

    @property
    def kernel(self) -> KernelSpec:
        return KernelSpec(self.a, self.lam, self.epsilon)


@dataclass
class MCEstimate:
    """Back-projection estimate.

    ``variance`` is the variance of the mean, ``sample_variance`` that of a
    single term; ``ratio = mean / (sqrt(variance) + delta_bound + numerical_error * |mean|)``.
    """

    mean: float
    variance: float
    delta_bound: float
    M: int
    ratio: float
    sample_variance: float = math.nan
    numerical_error: float = 0.0

    @classmethod
    def build(cls, mean, variance, delta, M, sample_variance=math.nan, numerical_error=0.0) -> "MCEstimate":
        total = math.sqrt(variance) + delta + numerical_error * abs(mean)
        ratio = mean / total if total > 0 else math.nan
        return cls(float(mean), float(variance), float(delta), int(M), float(ratio),
                   float(sample_variance), float(numerical_error))

    @property
    def total_error(self) -> float:
        return math.sqrt(self.variance) + self.delta_bound + self.numerical_error * abs(self.mean)

    def to_dict(self) -> dict:
        def clean(v):
            return None if isinstance(v, float) and not math.isfinite(v) else v
        keys = ("mean", "variance", "delta_bound", "ratio", "numerical_error", "M")
        return {k: clean(getattr(self, k)) for k in keys}


# ---------------------------------------------------------------------------
# Filter and kernel
# ---------------------------------------------------------------------------

def filter_eval(f: FilterSpec, x, p):
    x = np.asarray(x, dtype=float) - f.center[0]
    p = np.asarray(p, dtype=float) - f.center[1]
    inside = (f.l * x) ** 2 + (p / f.l) ** 2 <= f.a * f.a
    out = np.where(inside, 1.0 / (math.pi * f.a * f.a), 0.0)
    return float(out) if out.ndim == 0 else out


def omega(a: float, t, epsilon: float = 0.0):
    """Unstretched kernel ``omega_a(t)``, zero on the band ``a < |t| < a + epsilon``."""
    t = np.abs(np.asarray(t, dtype=float))
    k = 1.0 / (math.pi * a * a)
    out = np.full(t.shape, k)
    outer = t > a
    if np.any(outer):
        to = t[outer]
        out[outer] = k * (1.0 - to / np.sqrt((to - a) * (to + a)))
    if epsilon > 0:
        out[(t > a) & (t < a + epsilon)] = 0.0
    return float(out) if out.ndim == 0 else out


def kernel_eval(k: KernelSpec, theta, s):
    theta = np.asarray(theta, dtype=float)
    s = np.asarray(s, dtype=float)
    if k.center != (0.0, 0.0):
        s = s - (k.center[0] * np.cos(theta) + k.center[1] * np.sin(theta))
    u = scale_u(k.lam, theta)
    out = omega(k.a, s / u, k.epsilon) / (u * u)
    return float(out) if np.ndim(out) == 0 else out


def adjoint_radon(k: KernelSpec, x: float, p: float) -> float:
    """``(1/pi) int_{-pi/2}^{pi/2} omega(theta, x cos + p sin) dtheta``, split at the edge crossings."""
    x -= k.center[0]
    p -= k.center[1]
    unshifted = KernelSpec(k.a, k.lam, k.epsilon)

    def edge(th):
        return abs(x * math.cos(th) + p * math.sin(th)) - k.a * scale_u(k.lam, th)

    grid = np.linspace(-math.pi / 2, math.pi / 2, 2001)
    vals = np.array([edge(t) for t in grid])
    brk = [grid[0]]
    for i in range(len(grid) - 1):
        if vals[i] == 0.0:
            brk.append(grid[i])
        elif vals[i] * vals[i + 1] < 0:
            brk.append(optimize.brentq(edge, grid[i], grid[i + 1], xtol=1e-15))
    brk.append(grid[-1])
    brk = sorted(set(brk))

    def integrand(th):
        return kernel_eval(unshifted, th, x * math.cos(th) + p * math.sin(th))

    total = 0.0
    for lo, hi in zip(brk[:-1], brk[1:]):
        if hi - lo > 0:
            total += integrate.quad(integrand, lo, hi, limit=400, epsabs=1e-12, epsrel=1e-10)[0]
    return total / math.pi


def adjoint_radon_check(k: KernelSpec, f: FilterSpec, points=None) -> float:
    """Max ``|R^dagger omega - F|`` over points outside the band ``|r - a| < 0.05 a`` of the disc edge.

    ``r`` is the filter's stretched radius about its center.  Default points are
    an 11 x 11 grid covering two and a half radii.
    """
    if k.epsilon != 0:
        raise PreconditionError("adjoint check needs the raw kernel (epsilon = 0)")
    if k.lam != f.l:
        raise PreconditionError("kernel stretch must equal filter stretch")
    if points is None:
        g = np.linspace(-2.5 * f.a, 2.5 * f.a, 11)
        points = [(f.center[0] + xx / f.l, f.center[1] + pp * f.l) for xx in g for pp in g]
    worst = 0.0
    for pt in points:
        x, p = tuple(pt)
        r = math.hypot(f.l * (x - f.center[0]), (p - f.center[1]) / f.l)
        if abs(r - f.a) < 0.05 * f.a:
            continue
        worst = max(worst, abs(adjoint_radon(k, x, p) - filter_eval(f, x, p)))
    return worst


# ---------------------------------------------------------------------------
# Systematic error of the excision
# ---------------------------------------------------------------------------

def excised_kernel_mass(a: float, epsilon: float) -> float:
    """``int_{a < |t| < a + eps} |omega_a(t)| dt`` (both sides of the origin), in closed form."""
    if epsilon <= 0:
        return 0.0
    return 2.0 / (math.pi * a * a) * (math.sqrt(epsilon * (2 * a + epsilon)) - epsilon)


def systematic_error_bound(k: KernelSpec, marginal_max: float) -> float:
    """Upper bound on the bias from excising the band: ``marginal_max`` times the excised kernel mass.

    The bound does not depend on the stretch; the mass is taken over both
    branches ``t > a`` and ``t < -a``.
    """
    if marginal_max < 0:
        raise PreconditionError("marginal maximum must be non-negative")
    return marginal_max * excised_kernel_mass(k.a, k.epsilon)


def _outer_pieces(base: str, a: float, epsilon: float) -> tuple:
    """One-sided ``int_{a+eps}^inf m(t) omega_a(t) dt`` and ``... omega_a(t)^2 dt`` divided by ``norm`` and ``norm^2``."""
    ve = math.acosh(1 + epsilon / a) if epsilon > 0 else 0.0
    vmax = math.acosh(max(_TAIL / a, 1.0 + 1e-3))
    if ve >= vmax:
        return 0.0, 0.0
    tail = float(1.0 - base_cdf(base, a + epsilon))

    def lin(v):
        t = a * math.cosh(v)
        return float(base_pdf(base, t)) * t

    o2 = integrate.quad(lin, ve, vmax, limit=400, epsabs=1e-15, epsrel=1e-13)[0]
    first = tail - o2
    if epsilon <= 0:
        return first, math.inf

    def sq(w):
        v = math.exp(w)
        t = a * math.cosh(v)
        return float(base_pdf(base, t)) * a * math.exp(-2 * v) / math.sinh(v) * v

    second = integrate.quad(sq, math.log(ve), math.log(vmax), limit=400, epsabs=1e-15, epsrel=1e-12)[0]
    return first, second


@dataclass(frozen=True)
class KernelStats:
    """Moments of ``omega_{a,eps}(t)`` with ``t`` drawn from the unsqueezed marginal."""

    mean: float
    second: float

    @property
    def variance(self) -> float:
        return self.second - self.mean**2


def kernel_statistics(base: str, a: float, epsilon: float) -> KernelStats:
    k = 1.0 / (math.pi * a * a)
    inner = 2.0 * (float(base_cdf(base, a)) - 0.5)
    first, second = _outer_pieces(base, a, epsilon)
    return KernelStats(mean=k * (inner + 2.0 * first), second=k * k * (inner + 2.0 * second))


def kernel_moment(base: str, a: float, epsilon: float, power: int) -> float:
    """``E[omega_{a,eps}(t)^power]`` under the unsqueezed marginal (needs ``epsilon > 0`` for ``power >= 2``)."""
    k = 1.0 / (math.pi * a * a)
    inner = 2.0 * (float(base_cdf(base, a)) - 0.5)
    if power == 1:
        return kernel_statistics(base, a, epsilon).mean
    if epsilon <= 0:
        return math.inf
    ve = math.acosh(1 + epsilon / a)
    vmax = math.acosh(max(_TAIL / a, 1.0 + 1e-3))
    if ve >= vmax:
        return k**power * inner

    # 1 - coth(v) = -exp(-v) / sinh(v); dt = a sinh(v) dv; v = exp(w)
    def f(w):
        v = math.exp(w)
        t = a * math.cosh(v)
        return float(base_pdf(base, t)) * (-math.exp(-v) / math.sinh(v)) ** power * a * math.sinh(v) * v

    outer = integrate.quad(f, math.log(ve), math.log(vmax), limit=400, epsabs=0.0, epsrel=1e-11)[0]
    return k**power * (inner + 2.0 * outer)


def systematic_error_exact(k: KernelSpec, base: str = SINGLE_PHOTON) -> float:
    """Actual bias ``<omega_{a,eps}> - <omega_a>`` under the unsqueezed marginal."""
    return kernel_statistics(base, k.a, k.epsilon).mean - kernel_statistics(base, k.a, 0.0).mean


# ---------------------------------------------------------------------------
# Oracles
# ---------------------------------------------------------------------------

def disc_average_closed_form(a: float, model: StateModel | None = None) -> float:
    base = (model or StateModel()).base
    if base == VACUUM_CONTROL:
        return (1.0 - math.exp(-a * a)) / (math.pi * a * a)
    return (1.0 - (2 * a * a + 1) * math.exp(-a * a)) / (math.pi * a * a)


def disc_average_oracle(a: float, model: StateModel | None = None) -> float:
    """``(1/(pi a^2)) * (integral of W over the disc of radius a)`` by 2-D polar quadrature."""
    if a <= 0:
        raise PreconditionError("a must be positive")
    model = model or StateModel()
    unsq = StateModel(model.base)
    val, _ = integrate.dblquad(lambda r, phi: eval_wigner(unsq, r * math.cos(phi), r * math.sin(phi)) * r,
                               0.0, 2 * math.pi, 0.0, a, epsabs=1e-14, epsrel=1e-12)
    return val / (math.pi * a * a)


def analytic_backprojection(model: StateModel, k: KernelSpec) -> float:
    """``(1/pi) int dtheta int ds RW(theta, s) omega_{a,lam,eps}(theta, s)`` by nested adaptive quadrature.

    Works directly in ``s`` with breakpoints at the kernel edges; independent
    of the ``t = a cosh v`` route used by :func:`kernel_statistics`.
    """
    lam = model.squeeze
    base = model.base

    def slice_(theta):
        u = scale_u(lam, theta)
        edge, outer = k.a * scale_u(k.lam, theta), (k.a + k.epsilon) * scale_u(k.lam, theta)

        def f(s):
            return float(base_pdf(base, s / u)) / u * kernel_eval(k, theta, s)

        inner = integrate.quad(f, 0.0, edge, limit=200, epsabs=1e-14, epsrel=1e-12)[0]
        top = max(outer, _TAIL * u)
        near = integrate.quad(f, outer, outer + (top - outer) * 1e-3, limit=400, epsabs=1e-14, epsrel=1e-12)[0]
        far = integrate.quad(f, outer + (top - outer) * 1e-3, top, limit=400, epsabs=1e-14, epsrel=1e-12)[0]
        return 2.0 * (inner + near + far)

    val = integrate.quad(slice_, -math.pi / 2, math.pi / 2, points=[0.0], limit=200,
                         epsabs=1e-12, epsrel=1e-10)[0]
    return val / math.pi


# ---------------------------------------------------------------------------
# Monte Carlo
# ---------------------------------------------------------------------------

def optimal_cut_distribution(lam: float) -> CutDistribution:
    """``C_o(theta) = 1 / (pi u^2(lam, theta))`` on ``(-pi/2, pi/2]``."""
    return CutDistribution("optimal", lam)


def angular_weight(dist: CutDistribution, lam: float) -> float:
    """``int dtheta / (pi^2 C(theta) u^4)``, the factor multiplying the kernel's second moment."""
    val = integrate.quad(lambda th: 1.0 / (math.pi**2 * dist.density(th) * scale_u(lam, th) ** 4),
                         -math.pi / 2, math.pi / 2, points=[0.0], limit=400, epsabs=1e-14, epsrel=1e-13)[0]
    return val


def empirical_marginal_max(t: np.ndarray, width: float = 0.1) -> float:
    """Maximum of a fixed-width histogram density estimate of the rescaled quadratures."""
    edges = np.arange(-8.0, 8.0 + width / 2, width)
    hist, _ = np.histogram(t, bins=edges, density=True)
    return float(hist.max())


def mc_estimate(stream: JointSampleStream, k: KernelSpec, cut_distribution=None) -> MCEstimate:
    """Monte Carlo estimate from joint ``(theta, s)`` samples.

    Terms are ``I = omega_{a,lam,eps}(theta, s) / (pi C(theta))``; ``variance`` is
    that of their mean, ``sum (I - mean)^2 / (M (M - 1))``.
    """
    dist = stream.distribution if cut_distribution is None else \
        CutDistribution.from_descriptor(cut_distribution, k.lam)
    M = stream.M
    if M < 2:
        raise InsufficientSamples("Monte Carlo estimate needs M >= 2")
    I = kernel_eval(k, stream.thetas, stream.s) / (math.pi * dist.density(stream.thetas))
    mean = math.fsum(I) / M
    dev = I - mean
    pop = math.fsum(dev * dev) / M
    lam_state = stream.model.squeeze if stream.model is not None else k.lam
    mmax = empirical_marginal_max(stream.s / scale_u(lam_state, stream.thetas))
    delta = systematic_error_bound(k, mmax)
    return MCEstimate.build(mean, pop / (M - 1), delta, M, sample_variance=pop * M / (M - 1))


def analytic_mc(model: StateModel, k: KernelSpec, cut_distribution, M: int) -> MCEstimate:
    """Population values of :func:`mc_estimate` (analytic marginal maximum in the bound)."""
    dist = CutDistribution.from_descriptor(cut_distribution, k.lam)
    stats = kernel_statistics(model.base, k.a, k.epsilon)
    lam = model.squeeze
    if k.lam != lam:
        raise PreconditionError("analytic Monte Carlo values assume the kernel stretch equals the squeezing")
    second = stats.second * angular_weight(dist, lam)
    pop = second - stats.mean**2
    delta = systematic_error_bound(k, base_pdf_max(model.base))
    return MCEstimate.build(stats.mean, pop / (M - 1), delta, M, sample_variance=pop)


# ---------------------------------------------------------------------------
# Finite cuts
# ---------------------------------------------------------------------------

@dataclass
class FiniteCutPlan:
    """Symmetric partition of ``(-pi/2, pi/2]`` evaluated by the middle-point rule."""

    lam: float
    cuts: np.ndarray
    widths: np.ndarray
    error: float
    counts: np.ndarray | None = None
    sweeps: int = 0

    @property
    def m(self) -> int:
        return len(self.cuts)

    @property
    def w(self) -> np.ndarray:
        return self.widths / math.pi

    @property
    def W(self) -> np.ndarray:
        return self.w / scale_u(self.lam, self.cuts) ** 2

    @property
    def signed_error(self) -> float:
        return 1.0 - float(np.sum(self.W))

    def to_dict(self) -> dict:
        return {"cuts": self.cuts.tolist(), "widths": self.widths.tolist(),
                "counts": None if self.counts is None else [int(c) for c in self.counts]}


def _half_error(b: np.ndarray, lam: float) -> float:
    w = np.diff(b)
    mid = 0.5 * (b[1:] + b[:-1])
    return abs(1.0 - 2.0 / math.pi * float(np.sum(w / scale_u(lam, mid) ** 2)))


def _plan_from_half(lam: float, b: np.ndarray, error: float, sweeps: int) -> FiniteCutPlan:
    w = np.diff(b)
    mid = 0.5 * (b[1:] + b[:-1])
    cuts = np.concatenate([-mid[::-1], mid])
    widths = np.concatenate([w[::-1], w])
    return FiniteCutPlan(lam=lam, cuts=cuts, widths=widths, error=error, sweeps=sweeps)


def uniform_finite_plan(lam: float, m: int) -> FiniteCutPlan:
    if m < 2 or m % 2:
        raise PreconditionError("m must be even and >= 2")
    b = np.linspace(0.0, math.pi / 2, m // 2 + 1)
    return _plan_from_half(lam, b, _half_error(b, lam), 0)


def finite_cut_plan(lam: float, m: int, max_sweeps: int = 2000, xatol: float = 1e-14) -> FiniteCutPlan:
    """Optimize the boundaries of a symmetric ``m``-cut partition to minimize ``E``.

    ``E = |1 - (1/pi) sum_j dtheta_j / u^2(theta_j)|``.  Starts from the
    equal-mass partition of ``1/u^2`` and runs coordinate descent on the
    interior boundaries of ``[0, pi/2]``.
    """
    if m < 2 or m % 2:
        raise PreconditionError("m must be even and >= 2 (theta = 0 is a partition point)")
    if lam <= 0:
        raise PreconditionError("lambda must be positive")
    h = m // 2
    b = np.arctan(np.tan(np.linspace(0.0, math.pi / 2, h + 1)) / lam**2)
    b[0], b[-1] = 0.0, math.pi / 2
    err = _half_error(b, lam)
    sweeps = 0
    converged = h == 1 or err == 0.0
    while not converged and sweeps < max_sweeps:
        sweeps += 1
        before = err
        for k in range(1, h):
            def f(x, k=k):
                bb = b.copy()
                bb[k] = x
                return _half_error(bb, lam)

            res = optimize.minimize_scalar(f, bounds=(b[k - 1], b[k + 1]), method="bounded",
                                           options={"xatol": xatol})
            if res.fun < err:
                b[k], err = res.x, res.fun
        converged = err == 0.0 or before - err <= max(1e-15, 1e-9 * err)
    if not converged:
        raise NonConvergence(f"finite-cut optimization did not settle in {max_sweeps} sweeps (E = {err:.3e})")
    return _plan_from_half(lam, b, err, sweeps)


def allocate_measurements(plan_or_W, M: int) -> np.ndarray:
    """Counts with ``M_j - 1`` proportional to ``W_j``, rounded by largest remainder so they sum to ``M``."""
    W = np.asarray(plan_or_W.W if isinstance(plan_or_W, FiniteCutPlan) else plan_or_W, dtype=float)
    m = len(W)
    if M <= m:
        raise PreconditionError("need M > m")
    if np.any(W <= 0):
        raise PreconditionError("weights must be positive")
    ideal = (M - m) * W / W.sum()
    base = np.floor(ideal).astype(np.int64)
    short = (M - m) - int(base.sum())
    order = np.argsort(-(ideal - base), kind="stable")
    base[order[:short]] += 1
    return base + 1


def allocation_variance(W, counts, sigma2: float) -> float:
    """``sum_j W_j^2 sigma2 / (M_j - 1)``; ``counts`` may be non-integer."""
    W = np.asarray(W, dtype=float)
    counts = np.asarray(counts, dtype=float)
    return float(np.sum(W * W * sigma2 / (counts - 1)))


def optimal_allocation_variance(W, M: int, sigma2: float) -> float:
    """Variance at the unrounded optimum, ``(sum W)^2 sigma2 / (M - m)``."""
    W = np.asarray(W, dtype=float)
    return float(W.sum() ** 2 * sigma2 / (M - len(W)))


def finite_cut_estimate(datasets: QuadratureDataset, plan: FiniteCutPlan, k: KernelSpec,
                        marginal_max: float | None = None) -> MCEstimate:
    """Weighted middle-point estimate from per-cut samples.

    Each cut contributes ``w_j`` times the sample mean of ``omega_{a,lam,eps}(theta_j, s)``.
    """
    if len(datasets.entries) != plan.m:
        raise CutMismatch(f"dataset has {len(datasets.entries)} cuts, plan has {plan.m}")
    means, variances, scaled = [], [], []
    for (theta, s), cut in zip(datasets.entries, plan.cuts):
        if abs(math.remainder(theta - cut, math.pi)) > 1e-12:
            raise CutMismatch(f"dataset cut {theta} does not match plan cut {cut}")
        s = np.asarray(s, dtype=float)
        n = len(s)
        if n < 2:
            raise InsufficientSamples("every cut needs at least 2 samples")
        vals = kernel_eval(k, cut, s)
        mu = math.fsum(vals) / n
        means.append(mu)
        variances.append(math.fsum((vals - mu) ** 2) / n / (n - 1))
        scaled.append(s / scale_u(k.lam, cut))
    w = plan.w
    mean = math.fsum(w * np.asarray(means))
    variance = math.fsum(w * w * np.asarray(variances))
    mmax = empirical_marginal_max(np.concatenate(scaled)) if marginal_max is None else marginal_max
    M = sum(len(s) for _, s in datasets.entries)
    return MCEstimate.build(mean, variance, systematic_error_bound(k, mmax), M,
                            numerical_error=plan.error)


def finite_cut_analytic(model: StateModel, plan: FiniteCutPlan, k: KernelSpec,
                        counts: Sequence[int] | None = None) -> MCEstimate:
    """:func:`finite_cut_estimate` with the exact marginals in place of samples."""
    stats = kernel_statistics(model.base, k.a, k.epsilon)
    u_state = scale_u(model.squeeze, plan.cuts)
    u_kernel = scale_u(k.lam, plan.cuts)
    if k.lam == model.squeeze:
        g = stats.mean / u_kernel**2
        var_cut = stats.variance / u_kernel**4
    else:
        g = np.array([_slice_mean(model.base, k, th, us) for th, us in zip(plan.cuts, u_state)])
        var_cut = np.full(plan.m, math.nan)
    mean = float(np.sum(plan.w * g))
    counts = plan.counts if counts is None else counts
    variance = 0.0 if counts is None else float(np.sum(plan.w**2 * var_cut / (np.asarray(counts) - 1)))
    M = 0 if counts is None else int(np.sum(counts))
    return MCEstimate.build(mean, variance, systematic_error_bound(k, base_pdf_max(model.base)), M,
                            numerical_error=plan.error)


def _slice_mean(base: str, k: KernelSpec, theta: float, u: float) -> float:
    edge = k.a * scale_u(k.lam, theta)
    outer = (k.a + k.epsilon) * scale_u(k.lam, theta)

    def f(s):
        return float(base_pdf(base, s / u)) / u * kernel_eval(k, theta, s)

    inner = integrate.quad(f, 0.0, edge, limit=200)[0]
    far = integrate.quad(f, outer, max(outer, _TAIL * u) + outer, limit=400)[0]
    return 2.0 * (inner + far)


# ---------------------------------------------------------------------------
# Filter optimization and comparison
# ---------------------------------------------------------------------------

@dataclass
class FilterOptimum:
    a: float
    epsilon: float
    estimate: MCEstimate
    grid_best: tuple = field(default=())


def filter_ratio(base: str, a: float, epsilon: float, M: int) -> float:
    """Population ratio ``mean / (sqrt(var / (M - 1)) + Delta)`` under the optimal cut distribution."""
    stats = kernel_statistics(base, a, epsilon)
    delta = base_pdf_max(base) * excised_kernel_mass(a, epsilon)
    return stats.mean / (math.sqrt(stats.variance / (M - 1)) + delta)


def optimize_filter(M: int, model: StateModel | None = None,
                    a_grid: Sequence[float] | None = None,
                    eps_grid: Sequence[float] | None = None) -> FilterOptimum:
    """Minimize the back-projection ratio over ``(a, epsilon)``: grid search plus one local refinement.

    The ratio is invariant in ``lambda`` under the optimal cut distribution, so
    the search runs on the unsqueezed marginal.
    """
    model = model or StateModel()
    base = model.base
    a_grid = np.geomspace(0.2, 2.0, 25) if a_grid is None else np.asarray(a_grid)
    eps_grid = np.geomspace(1e-12, 1e-1, 56) if eps_grid is None else np.asarray(eps_grid)
    best = None
    for a in a_grid:
        for eps in eps_grid:
            r = filter_ratio(base, float(a), float(eps), M)
            if best is None or r < best[0]:
                best = (r, float(a), float(eps))
    lo_a, hi_a = float(a_grid.min()), float(a_grid.max())
    lo_e, hi_e = math.log(float(eps_grid.min())), math.log(float(eps_grid.max()))

    def obj(z):
        a = min(max(z[0], lo_a), hi_a)
        le = min(max(z[1], lo_e), hi_e)
        return filter_ratio(base, a, math.exp(le), M)

    res = optimize.minimize(obj, [best[1], math.log(best[2])], method="Nelder-Mead",
                            options={"xatol": 1e-6, "fatol": 1e-13, "maxiter": 400})
    if res.fun < best[0]:
        a = min(max(res.x[0], lo_a), hi_a)
        eps = math.exp(min(max(res.x[1], lo_e), hi_e))
    else:
        a, eps = best[1], best[2]
    k = KernelSpec(a, model.squeeze, eps)
    est = analytic_mc(model, k, "optimal", M)
    return FilterOptimum(a=a, epsilon=eps, estimate=est, grid_best=best)


def compare_R(elementary, radon: MCEstimate) -> float:
    """``R = (mean_F / sigma_F) * (sigma_B + Delta) / mean_B``; ``R > 1`` favours the elementary test."""
    if elementary.M != radon.M:
        raise PreconditionError(f"outcomes use different budgets: M={elementary.M} vs M={radon.M}")
    return elementary.g_stat / radon.ratio


def compare_R_checked(elementary, radon: MCEstimate) -> tuple:
    """``(R, valid)``; ``valid`` is False unless both means are negative."""
    return compare_R(elementary, radon), bool(elementary.mean < 0 and radon.mean < 0)

