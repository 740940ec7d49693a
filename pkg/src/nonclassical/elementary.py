"""Elementary polynomial non-classicality test.

A test is a squared polynomial ``F = P(x, p)^2`` with ``P = 1 + sum D_{i;k}
x^(i-k) p^k`` (general mode) or ``P = 1 + sum_i d_i rho^i`` with ``rho =
(lam x)^2 + (p / lam)^2`` (radial mode).  Monomials are rewritten as linear
combinations of measured quadrature powers ``Q_theta_j^i`` so that ``F = 1 +
sum_j H_j(Q_theta_j)``.  A negative expectation certifies non-classicality;
the figure of merit ``G`` is the large-M limit of ``mean / (sigma sqrt(M - m))``.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

import mpmath as mp
import numpy as np

from .errors import (CutMismatch, InsufficientCuts, InsufficientSamples, NonConvergence,
                     PreconditionError, RankDeficient)
from .phase_space import StateModel, base_moment_mp, moment_mp, scale_u
from .sampler import QuadratureDataset

RADIAL = "radial"
GENERAL = "general"

N_CAP = 24
# variance needs moments up to 2 * degree = 4N
MOMENT_CAP = 4 * N_CAP
ANGLE_TOL = 1e-12
CONSTRAINT_TOL = 1e-10
DPS = 60


# ---------------------------------------------------------------------------
# Reconstruction coefficients
# ---------------------------------------------------------------------------

def radial_t_coefficient(n: int, m: int) -> float:
    """Equal per-cut weight ``t`` with ``r^(2n) = t sum_j Q_{j pi/m}^(2n)``."""
    if n < 1:
        raise PreconditionError(f"n must be >= 1, got {n}")
    if m < n + 1:
        raise InsufficientCuts(f"radial identity of order {n} needs m >= {n + 1} cuts, got {m}")
    return 4**n / (math.comb(2 * n, n) * m)


def _tau_mp(n: int):
    """``m`` times the uniform radial weight, i.e. ``4^n / binom(2n, n)``."""
    return mp.mpf(4) ** n / mp.binomial(2 * n, n)


def uniform_cuts(m: int) -> tuple:
    return tuple(j * math.pi / m for j in range(m))


def verify_radial_identity(n: int, m: int, points) -> float:
    """Max relative residual of ``r^(2n) = t sum_j Q_j^(2n)`` over uniform cuts.

    The weight is evaluated even when ``m < n + 1`` so that the failure of the
    identity with too few cuts can be observed.
    """
    pts = np.asarray([tuple(p) for p in points], dtype=float).reshape(-1, 2)
    x, p = pts[:, 0], pts[:, 1]
    t = 4**n / (math.comb(2 * n, n) * m)
    theta = np.asarray(uniform_cuts(m))
    Q = np.cos(theta)[None, :] * x[:, None] + np.sin(theta)[None, :] * p[:, None]
    rhs = t * np.sum(Q ** (2 * n), axis=1)
    lhs = (x * x + p * p) ** n
    return float(np.max(np.abs(lhs - rhs) / np.maximum(1.0, lhs)))


def _constraint_matrix(i: int, cuts: np.ndarray) -> np.ndarray:
    """``A[k, j] = binom(i, k) cos^(i-k) sin^k`` so that ``Q_j^i = sum_k A[k, j] x^(i-k) p^k``."""
    k = np.arange(i + 1)[:, None]
    binom = np.array([math.comb(i, kk) for kk in range(i + 1)], dtype=float)[:, None]
    return binom * np.cos(cuts)[None, :] ** (i - k) * np.sin(cuts)[None, :] ** k


def _check_distinct(cuts: np.ndarray):
    wrapped = np.sort(np.mod(cuts, math.pi))
    gaps = np.diff(np.concatenate([wrapped, [wrapped[0] + math.pi]]))
    if np.any(gaps < ANGLE_TOL):
        raise RankDeficient("cut angles coincide modulo pi; the constraint system is degenerate")


def solve_general_constraint(N: int, cuts: Sequence[float], strategy: str = "least_norm") -> list:
    """Coefficients ``T[i-1][k, j]`` with ``x^(i-k) p^k = sum_j T[i-1][k, j] Q_j^i`` for ``i = 1..2N``.

    Parameters
    ----------
    strategy : {"least_norm", "equal_weight"}
        ``least_norm`` takes the minimum-Euclidean-norm solution.  ``equal_weight``
        minimizes the spread of each row across cuts (its distance to its own
        cut average) and breaks ties by norm; on uniform cuts both give equal
        weights for rotation-invariant targets.
    """
    cuts = np.asarray(cuts, dtype=float)
    m = len(cuts)
    if m < 2 * N + 1:
        raise InsufficientCuts(f"general test of order N={N} needs m >= {2 * N + 1} cuts, got {m}")
    if strategy not in ("least_norm", "equal_weight"):
        raise PreconditionError(f"unknown strategy {strategy!r}")
    _check_distinct(cuts)
    out = []
    for i in range(1, 2 * N + 1):
        A = _constraint_matrix(i, cuts)
        U, sv, Vt = np.linalg.svd(A)
        if sv[-1] <= 1e-12 * sv[0]:
            raise RankDeficient(f"constraint matrix of order {i} is rank deficient")
        T = (Vt[: i + 1].T / sv) @ U.T          # pinv(A), shape (m, i+1)
        if strategy == "equal_weight" and m > i + 1:
            Z = Vt[i + 1:].T                    # orthonormal null-space basis
            P = np.eye(m) - 1.0 / m
            y, *_ = np.linalg.lstsq(P @ Z, -P @ T, rcond=None)
            T = T + Z @ y
        out.append(np.ascontiguousarray(T.T))
    return out


def general_constraint_residual(T: list, cuts: Sequence[float]) -> float:
    cuts = np.asarray(cuts, dtype=float)
    res = 0.0
    for i, Ti in enumerate(T, start=1):
        A = _constraint_matrix(i, cuts)
        res = max(res, float(np.max(np.abs(A @ Ti.T - np.eye(i + 1)))))
    return res


def radial_constraint_residual(t: np.ndarray, cuts: Sequence[float], lam: float = 1.0) -> float:
    """Residual of ``((lam x)^2 + (p/lam)^2)^i = sum_j t[i-1, j] Q_j^(2i)`` as a polynomial identity.

    Each coefficient error is scaled by the magnitude of the terms summed to
    produce it, which is the attainable floating point accuracy.
    """
    cuts = np.asarray(cuts, dtype=float)
    res = 0.0
    for i in range(1, t.shape[0] + 1):
        A = _constraint_matrix(2 * i, cuts)
        terms = A * t[i - 1][None, :]
        got = terms.sum(axis=1)
        want = np.zeros(2 * i + 1)
        for h in range(i + 1):
            want[2 * h] = math.comb(i, h) * lam ** (2 * (i - 2 * h))
        scale = np.maximum(1.0, np.abs(terms).sum(axis=1))
        res = max(res, float(np.max(np.abs(got - want) / scale)))
    return res


# ---------------------------------------------------------------------------
# Test specification
# ---------------------------------------------------------------------------

def radial_order(N: int) -> int:
    return N // 2


def _expand_radial(d) -> list:
    """``c`` with ``P^2 = sum_i c_i rho^i`` (``c_0 = 1``), i.e. ``c_i = 2 d_i + sum d_a d_a'``."""
    v = [1] + list(d)
    c = [0] * (2 * len(v) - 1)
    for a, va in enumerate(v):
        for b, vb in enumerate(v):
            c[a + b] += va * vb
    return c


def _expand_general(D: list, N: int) -> list:
    """``C[i-1][k]`` for ``i = 1..2N`` with ``F = 1 + sum C_{i;k} x^(i-k) p^k``."""
    full = [np.array([1.0])] + [np.asarray(Di, dtype=float) for Di in D]
    C = [np.zeros(i + 1) for i in range(1, 2 * N + 1)]
    for a in range(N + 1):
        for b in range(N + 1):
            if a + b == 0:
                continue
            C[a + b - 1] += np.convolve(full[a], full[b])
    return C


@dataclass
class ElementaryTestSpec:
    """A complete test: degree, coefficients, cuts and reconstruction weights.

    Radial mode stores ``d`` (length ``N // 2``), ``t`` of shape ``(2 * (N // 2), m)``
    and the anisotropy ``lam`` of the radius.  General mode stores ``D[i-1]``
    (length ``i + 1``) and ``T[i-1]`` of shape ``(i + 1, m)`` for ``i = 1..2N``.
    """

    N: int
    mode: str
    cuts: tuple
    d: np.ndarray | None = None
    t: np.ndarray | None = None
    lam: float = 1.0
    D: list | None = None
    T: list | None = None
    validate: bool = field(default=True, repr=False)

    def __post_init__(self):
        self.cuts = tuple(float(c) for c in self.cuts)
        m = len(self.cuts)
        if self.N < 1:
            raise PreconditionError("N must be >= 1")
        if self.mode == RADIAL:
            K = radial_order(self.N)
            self.d = np.asarray(self.d if self.d is not None else np.zeros(K), dtype=float).reshape(K)
            if m < self.N + 1:
                raise InsufficientCuts(f"radial test of order N={self.N} needs m >= {self.N + 1} cuts")
            self.t = np.asarray(self.t, dtype=float).reshape(2 * K, m)
            if self.validate and K:
                r = radial_constraint_residual(self.t, self.cuts, self.lam)
                if r > CONSTRAINT_TOL:
                    raise PreconditionError(f"radial reconstruction weights violate the identity (residual {r:.2e})")
        elif self.mode == GENERAL:
            if m < 2 * self.N + 1:
                raise InsufficientCuts(f"general test of order N={self.N} needs m >= {2 * self.N + 1} cuts")
            D = self.D if self.D is not None else [np.zeros(i + 1) for i in range(1, self.N + 1)]
            self.D = [np.asarray(Di, dtype=float).reshape(i + 1) for i, Di in enumerate(D, start=1)]
            if len(self.D) != self.N:
                raise PreconditionError("D must have N rows")
            self.T = [np.asarray(Ti, dtype=float).reshape(i + 1, m) for i, Ti in enumerate(self.T, start=1)]
            if len(self.T) != 2 * self.N:
                raise PreconditionError("T must have 2N blocks")
            if self.validate:
                r = general_constraint_residual(self.T, self.cuts)
                if r > CONSTRAINT_TOL:
                    raise PreconditionError(f"reconstruction coefficients violate the linear constraint (residual {r:.2e})")
        else:
            raise PreconditionError(f"mode must be 'radial' or 'general', got {self.mode!r}")

    @classmethod
    def radial(cls, N: int, d=None, m: int | None = None) -> "ElementaryTestSpec":
        """Radial test on ``m`` uniform cuts (default ``N + 1``) with equal weights."""
        m = N + 1 if m is None else m
        K = radial_order(N)
        t = np.array([[radial_t_coefficient(i, m)] * m for i in range(1, 2 * K + 1)]).reshape(2 * K, m)
        return cls(N=N, mode=RADIAL, cuts=uniform_cuts(m), d=d, t=t)

    @classmethod
    def general(cls, N: int, D=None, cuts=None, strategy: str = "least_norm") -> "ElementaryTestSpec":
        cuts = uniform_cuts(2 * N + 1) if cuts is None else cuts
        return cls(N=N, mode=GENERAL, cuts=cuts, D=D, T=solve_general_constraint(N, cuts, strategy))

    @property
    def m(self) -> int:
        return len(self.cuts)

    def test_function(self, x, p):
        """Evaluate ``F(x, p)`` directly from the coefficients."""
        x = np.asarray(x, dtype=float)
        p = np.asarray(p, dtype=float)
        if self.mode == RADIAL:
            rho = (self.lam * x) ** 2 + (p / self.lam) ** 2
            P = np.polynomial.polynomial.polyval(rho, np.concatenate([[1.0], self.d]))
        else:
            P = np.ones(np.broadcast(x, p).shape)
            for i, Di in enumerate(self.D, start=1):
                for k, coef in enumerate(Di):
                    P = P + coef * x ** (i - k) * p**k
        return P * P

    def to_dict(self) -> dict:
        out = {"N": self.N, "mode": self.mode, "cuts": list(self.cuts)}
        if self.mode == RADIAL:
            out.update(d=self.d.tolist(), T=self.t.tolist(), **{"lambda": float(self.lam)})
        else:
            out.update(D=[Di.tolist() for Di in self.D], T=[Ti.tolist() for Ti in self.T])
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "ElementaryTestSpec":
        if data["mode"] == RADIAL:
            return cls(N=int(data["N"]), mode=RADIAL, cuts=data["cuts"], d=data.get("d"),
                       t=data["T"], lam=float(data.get("lambda", 1.0)))
        return cls(N=int(data["N"]), mode=GENERAL, cuts=data["cuts"], D=data.get("D"), T=data["T"])


@dataclass
class DerivedCoeffs:
    """``C`` (general) or ``c`` (radial, ``c[0] = 1``) and per-cut polynomials.

    ``H[j, i]`` is the coefficient of ``Q_j^i`` in ``H_j`` (``H[:, 0] = 0``).
    """

    C: list | None
    c: np.ndarray | None
    H: np.ndarray


def build_H(spec: ElementaryTestSpec) -> DerivedCoeffs:
    m, N = spec.m, spec.N
    H = np.zeros((m, 2 * N + 1))
    if spec.mode == RADIAL:
        c = np.asarray(_expand_radial(spec.d), dtype=float)
        for i in range(1, len(c)):
            H[:, 2 * i] = c[i] * spec.t[i - 1]
        return DerivedCoeffs(C=None, c=c, H=H)
    C = _expand_general(spec.D, N)
    for i in range(1, 2 * N + 1):
        H[:, i] = C[i - 1] @ spec.T[i - 1]
    return DerivedCoeffs(C=C, c=None, H=H)


def _H_mp(spec: ElementaryTestSpec) -> list:
    """Per-cut coefficients in extended precision (computed from the float spec data)."""
    m, N = spec.m, spec.N
    H = [[mp.mpf(0)] * (2 * N + 1) for _ in range(m)]
    if spec.mode == RADIAL:
        c = _expand_radial([mp.mpf(v) for v in spec.d])
        for i in range(1, len(c)):
            for j in range(m):
                H[j][2 * i] = c[i] * mp.mpf(spec.t[i - 1, j])
        return H
    full = [[mp.mpf(1)]] + [[mp.mpf(v) for v in Di] for Di in spec.D]
    for a in range(N + 1):
        for b in range(N + 1):
            if a + b == 0:
                continue
            i = a + b
            Ti = spec.T[i - 1]
            for ka, va in enumerate(full[a]):
                for kb, vb in enumerate(full[b]):
                    w = va * vb
                    if w:
                        for j in range(m):
                            H[j][i] += w * mp.mpf(Ti[ka + kb, j])
    return H


def reconstruct(spec: ElementaryTestSpec, x, p, derived: DerivedCoeffs | None = None):
    """``1 + sum_j H_j(Q_j(x, p))``; equals :meth:`ElementaryTestSpec.test_function`."""
    derived = derived or build_H(spec)
    x = np.asarray(x, dtype=float)
    p = np.asarray(p, dtype=float)
    out = np.ones(np.broadcast(x, p).shape)
    for j, theta in enumerate(spec.cuts):
        Q = math.cos(theta) * x + math.sin(theta) * p
        out = out + np.polynomial.polynomial.polyval(Q, derived.H[j])
    return out


# ---------------------------------------------------------------------------
# Outcomes
# ---------------------------------------------------------------------------

@dataclass
class TestOutcome:
    mean: float
    variance: float
    g_stat: float
    G: float
    M: int
    m: int

    __test__ = False  # not a pytest class

    @classmethod
    def build(cls, mean: float, variance: float, M: int, m: int) -> "TestOutcome":
        if variance > 0:
            g = mean / math.sqrt(variance)
            G = g / math.sqrt(M - m) if M > m else math.nan
        else:
            g = G = math.nan
        return cls(float(mean), float(variance), float(g), float(G), int(M), int(m))

    @property
    def significance(self) -> float:
        """Number of standard deviations by which the mean is negative."""
        return -self.g_stat

    def to_dict(self) -> dict:
        def clean(v):
            return None if isinstance(v, float) and not math.isfinite(v) else v
        return {k: clean(getattr(self, k)) for k in ("mean", "variance", "g_stat", "G", "M", "m")}


def _match_cuts(dataset: QuadratureDataset, spec: ElementaryTestSpec) -> list:
    if len(dataset.entries) != spec.m:
        raise CutMismatch(f"dataset has {len(dataset.entries)} cuts, spec has {spec.m}")
    order = []
    used = set()
    for theta in spec.cuts:
        hits = [k for k, (th, _) in enumerate(dataset.entries) if abs(th - theta) <= ANGLE_TOL and k not in used]
        if not hits:
            raise CutMismatch(f"no dataset cut matches spec angle {theta!r}")
        used.add(hits[0])
        order.append(hits[0])
    return order


def _cut_statistics(coeffs: np.ndarray, samples: np.ndarray) -> tuple:
    n = len(samples)
    h = np.polynomial.polynomial.polyval(samples, coeffs)
    mean = math.fsum(h) / n
    dev = h - mean
    var_pop = math.fsum(dev * dev) / n
    return mean, var_pop / (n - 1)


def evaluate_test(dataset: QuadratureDataset, spec: ElementaryTestSpec, threads: int = 1) -> TestOutcome:
    """Estimate ``<F>`` and its variance from per-cut samples.

    ``mean = 1 + sum_j avg(H_j)`` and ``variance = sum_j (avg(H_j^2) - avg(H_j)^2) / (M_j - 1)``.
    """
    order = _match_cuts(dataset, spec)
    counts = [len(dataset.entries[k][1]) for k in order]
    if min(counts) < 2:
        raise InsufficientSamples("every cut needs at least 2 samples")
    H = build_H(spec).H
    jobs = [(H[j], np.asarray(dataset.entries[k][1], dtype=float)) for j, k in enumerate(order)]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            stats = list(pool.map(lambda a: _cut_statistics(*a), jobs))
    else:
        stats = [_cut_statistics(*a) for a in jobs]
    mean = 1.0 + math.fsum(s[0] for s in stats)
    variance = math.fsum(s[1] for s in stats)
    return TestOutcome.build(mean, variance, sum(counts), spec.m)


def _cut_moments(model: StateModel, theta: float, order: int) -> list:
    return [moment_mp(model, theta, k, MOMENT_CAP) for k in range(order + 1)]


def analytic_moments(model: StateModel, spec: ElementaryTestSpec, dps: int = DPS) -> tuple:
    """Population mean of ``F`` and per-cut population variances of ``H_j`` (mpmath)."""
    with mp.workdps(dps):
        H = _H_mp(spec)
        deg = 2 * spec.N
        mean = mp.mpf(1)
        variances = []
        cache: dict = {}
        for j, theta in enumerate(spec.cuts):
            key = round(scale_u(model.squeeze, theta), 15) if model.squeeze != 1.0 else 1.0
            if key not in cache:
                cache[key] = _cut_moments(model, theta, 2 * deg)
            mom = cache[key]
            h = H[j]
            mu = mp.fsum(h[i] * mom[i] for i in range(1, deg + 1))
            second = mp.fsum(h[i] * h[k] * mom[i + k] for i in range(1, deg + 1) if h[i]
                             for k in range(1, deg + 1) if h[k])
            mean += mu
            variances.append(second - mu * mu)
        return mean, variances


def analytic_outcome(model: StateModel, spec: ElementaryTestSpec, M: int, dps: int = DPS) -> TestOutcome:
    """Population-level outcome with equal counts ``M_j = M / m``."""
    m = spec.m
    if M <= m:
        raise InsufficientSamples(f"need M > m, got M={M}, m={m}")
    with mp.workdps(dps):
        mean, variances = analytic_moments(model, spec, dps)
        variance = mp.fsum(variances) / (mp.mpf(M) / m - 1)
        return TestOutcome.build(float(mean), float(variance), M, m)


def analytic_G(model: StateModel, spec: ElementaryTestSpec, dps: int = DPS):
    """``G`` as an mpmath number: ``mean / sqrt(m sum_j Var(H_j))`` (independent of ``M``)."""
    with mp.workdps(dps):
        mean, variances = analytic_moments(model, spec, dps)
        total = spec.m * mp.fsum(variances)
        return mean / mp.sqrt(total) if total > 0 else mp.nan


# ---------------------------------------------------------------------------
# Optimizer
# ---------------------------------------------------------------------------

class _RadialObjective:
    """``G(v) = A / sqrt(B)`` with ``A = mu . c``, ``B = c' S c`` and ``c = v * v``.

    ``mu_k = <rho^k>`` and ``S_kl = Cov(tau_k Q^2k, tau_l Q^2l)`` use the exact
    quadrature moments of a rotation-invariant model, ``v = (1, d)``.
    """

    def __init__(self, base: str, K: int):
        self.K = K
        L = 2 * K
        q = [base_moment_mp(base, 2 * i) for i in range(2 * L + 1)]
        tau = [_tau_mp(i) if i else mp.mpf(1) for i in range(L + 1)]
        self.mu = [tau[i] * q[i] for i in range(L + 1)]
        self.S = mp.matrix(L + 1, L + 1)
        for i in range(L + 1):
            for j in range(L + 1):
                self.S[i, j] = tau[i] * tau[j] * (q[i + j] - q[i] * q[j])

    def value(self, d) -> mp.mpf:
        c = _expand_radial(d)
        A = mp.fsum(a * b for a, b in zip(self.mu, c))
        Sc = self.S * mp.matrix(c)
        B = mp.fsum(c[k] * Sc[k] for k in range(len(c)))
        return A / mp.sqrt(B)

    def derivatives(self, d) -> tuple:
        """Value, gradient and Hessian with respect to ``d``."""
        K = self.K
        v = [mp.mpf(1)] + list(d)
        n = K + 1
        c = _expand_radial(d)
        L = len(c)
        Sc = self.S * mp.matrix(c)
        A = mp.fsum(a * b for a, b in zip(self.mu, c))
        B = mp.fsum(c[k] * Sc[k] for k in range(L))
        J = mp.matrix(L, n)
        for k in range(L):
            for i in range(n):
                if 0 <= k - i <= K:
                    J[k, i] = 2 * v[k - i]
        gA = J.T * mp.matrix(self.mu)
        gB = 2 * (J.T * Sc)
        HA = mp.matrix(n, n)
        HB = mp.matrix(n, n)
        for i in range(n):
            for j in range(n):
                HA[i, j] = 2 * self.mu[i + j]
                HB[i, j] = 4 * Sc[i + j]
        HB += 2 * (J.T * self.S * J)
        sB = mp.sqrt(B)
        g = gA / sB - A * gB / (2 * B * sB)
        H = (HA / sB - (gA * gB.T + gB * gA.T) / (2 * B * sB) - A * HB / (2 * B * sB)
             + 3 * A * (gB * gB.T) / (4 * B * B * sB))
        gd = mp.matrix([g[i] for i in range(1, n)])
        Hd = mp.matrix(K, K)
        for i in range(K):
            for j in range(K):
                Hd[i, j] = H[i + 1, j + 1]
        return A / sB, gd, Hd

    def mean_seed(self) -> list | None:
        """Minimizer of ``<P^2> / |v|_B^2`` from a generalized eigenproblem."""
        K = self.K
        Hm = mp.matrix(K + 1, K + 1)
        Bm = mp.matrix(K + 1, K + 1)
        for i in range(K + 1):
            for j in range(K + 1):
                Hm[i, j] = self.mu[i + j]
                Bm[i, j] = mp.factorial(i + j)
        Lc = mp.cholesky(Bm)
        Li = mp.inverse(Lc)
        E, Q = mp.eighe(Li * Hm * Li.T)
        k = min(range(K + 1), key=lambda i: E[i])
        v = Li.T * Q[:, k]
        if abs(v[0]) < mp.mpf(10) ** (-mp.mp.dps // 3):
            return None
        return [v[i] / v[0] for i in range(1, K + 1)]

    def newton(self, d0, max_iter: int = 300) -> tuple:
        """Modified Newton (absolute-eigenvalue Hessian) with backtracking."""
        d = list(d0)
        floor = mp.mpf(10) ** (-mp.mp.dps // 2)
        f, g, H = self.derivatives(d)
        for it in range(max_iter):
            gn = mp.norm(g)
            if gn < floor:
                break
            E, Q = mp.eighe(H)
            inv = mp.diag([1 / max(abs(e), floor) for e in E])
            step = -(Q * inv * Q.T * g)
            t = mp.mpf(1)
            while t > floor:
                trial = [d[i] + t * step[i] for i in range(self.K)]
                ft = self.value(trial)
                if ft < f:
                    break
                t /= 2
            else:
                break
            d = trial
            f, g, H = self.derivatives(d)
        return d, f, mp.norm(g), it


@dataclass
class RadialOptimum:
    N: int
    d: list
    G: float
    grad_norm: float
    G_mp: object = field(repr=False, default=None)


@lru_cache(maxsize=None)
def _radial_optimum(base: str, K: int, dps: int, max_iter: int) -> tuple:
    """Optimal ``d`` (mpmath strings) for order ``K`` by continuation from ``K - 1``."""
    with mp.workdps(dps):
        obj = _RadialObjective(base, K)
        seeds = []
        if K > 1:
            prev = [mp.mpf(s) for s in _radial_optimum(base, K - 1, dps, max_iter)[0]]
            seeds.append(prev + [mp.mpf(0)])
        eig = obj.mean_seed()
        if eig is not None:
            seeds.append(eig)
        if not seeds:
            seeds.append([mp.mpf(-1) / (2 * K)] * K)
        best = None
        for s in seeds:
            d, f, gn, _ = obj.newton(s, max_iter)
            if best is None or f < best[1]:
                best = (d, f, gn)
        d, f, gn = best
        return tuple(mp.nstr(x, dps) for x in d), mp.nstr(f, dps), mp.nstr(gn, 5)


def optimize_radial(model: StateModel, N: int, m: int | None = None, M: int = 10**6,
                    dps: int = DPS, max_iter: int = 300, grad_tol: float = 1e-8) -> tuple:
    """Minimize ``G`` over the radial coefficients ``d`` on uniform cuts.

    Returns ``(spec, outcome)``; ``outcome`` is :func:`analytic_outcome` at ``M``.

    Raises
    ------
    NonConvergence
        If the final gradient norm in ``d`` exceeds ``grad_tol``.
    """
    if not model.rotationally_symmetric:
        raise PreconditionError("optimize_radial needs a rotation-invariant model; squeeze the result afterwards")
    if N < 1 or N > N_CAP:
        raise PreconditionError(f"N must lie in 1..{N_CAP}")
    m = N + 1 if m is None else m
    K = radial_order(N)
    if K == 0:
        spec = ElementaryTestSpec.radial(N, [], m)
        return spec, analytic_outcome(model, spec, M, dps)
    d, _, gn = _radial_optimum(model.base, K, dps, max_iter)
    if float(gn) > grad_tol:
        raise NonConvergence(f"radial optimizer stopped with gradient norm {gn} at N={N}")
    spec = ElementaryTestSpec.radial(N, [float(x) for x in d], m)
    return spec, analytic_outcome(model, spec, M, dps)


def radial_optimum(model: StateModel, N: int, dps: int = DPS, max_iter: int = 300) -> RadialOptimum:
    """Optimal coefficients and ``G`` for order ``N`` in extended precision."""
    K = radial_order(N)
    if K == 0:
        # F = 1 has zero variance and positive mean
        return RadialOptimum(N, [], math.inf, 0.0)
    d, f, gn = _radial_optimum(model.base, K, dps, max_iter)
    return RadialOptimum(N, [float(x) for x in d], float(mp.mpf(f)), float(gn), mp.mpf(f))


def optimal_G_curve(model: StateModel, Ns: Sequence[int], dps: int = DPS) -> list:
    """``(N, G)`` pairs of the optimal radial test for each order in ``Ns``."""
    return [(N, radial_optimum(model, N, dps).G) for N in Ns]


# ---------------------------------------------------------------------------
# Squeezing and measurement split
# ---------------------------------------------------------------------------

def squeeze_transform(spec: ElementaryTestSpec, lam: float) -> ElementaryTestSpec:
    """Test for ``W(lam x, p / lam)`` with the same statistics as ``spec`` on ``W``.

    Cuts map by ``tan(theta') = tan(theta) / lam^2`` (kept in ``[0, pi)``) and
    ``F'(x, p) = F(lam x, p / lam)``.
    """
    if lam <= 0:
        raise PreconditionError("lambda must be positive")
    if lam == 1.0:
        return spec
    th = np.asarray(spec.cuts)
    c, s = np.cos(th), np.sin(th)
    new = np.mod(np.arctan2(s / lam, lam * c), math.pi)
    ratio = np.sqrt(lam**2 * c * c + s * s / lam**2)      # Q_theta(lam x, p/lam) = ratio * Q_new(x, p)
    if spec.mode == RADIAL:
        powers = np.arange(1, spec.t.shape[0] + 1)[:, None]
        t = spec.t * ratio[None, :] ** (2 * powers)
        return ElementaryTestSpec(N=spec.N, mode=RADIAL, cuts=tuple(new), d=spec.d.copy(), t=t,
                                  lam=spec.lam * lam)
    D = [Di * lam ** (i - 2.0 * np.arange(i + 1)) for i, Di in enumerate(spec.D, start=1)]
    T = [Ti * ratio[None, :] ** i * lam ** (-(i - 2.0 * np.arange(i + 1)))[:, None]
         for i, Ti in enumerate(spec.T, start=1)]
    return ElementaryTestSpec(N=spec.N, mode=GENERAL, cuts=tuple(new), D=D, T=T)


def radial_constraint_constants(spec: ElementaryTestSpec) -> np.ndarray:
    """``K_i = sum_j`` (coefficient of ``Q_j^i`` in ``H_j``), ``i = 1..2N``."""
    return build_H(spec).H[:, 1:].sum(axis=0)


def optimal_measurement_split(K, g, M: int, m: int, counts: Sequence[int] | None = None) -> tuple:
    """Per-cut weights minimizing the variance for fixed per-cut sums ``K_i``.

    Returns ``T`` with ``T[i-1, j] = K_i (M_j - 1) / (M - m)`` and the minimum
    variance ``0.5 K' g K / (M - m)``, which does not depend on the split.
    """
    K = np.asarray(K, dtype=float)
    g = np.asarray(g, dtype=float)
    if M <= m:
        raise InsufficientSamples("need M > m")
    if counts is None:
        share = np.full(m, 1.0 / m)
    else:
        counts = np.asarray(counts, dtype=float)
        if len(counts) != m or counts.sum() != M or np.any(counts < 2):
            raise PreconditionError("counts must be m integers >= 2 summing to M")
        share = (counts - 1) / (M - m)
    T = K[:, None] * share[None, :]
    return T, 0.5 * float(K @ g @ K) / (M - m)


def split_variance(T, g, counts: Sequence[int]) -> float:
    """``0.5 sum_j sum_ii' g^ii' T_ij T_i'j / (M_j - 1)``."""
    T = np.asarray(T, dtype=float)
    g = np.asarray(g, dtype=float)
    counts = np.asarray(counts, dtype=float)
    per_cut = np.einsum("ij,ik,kj->j", T, g, T)
    return 0.5 * float(np.sum(per_cut / (counts - 1)))
