"""Analytic phase-space models and their quadrature marginals.

Units follow the dimensionless convention in which the single-photon Wigner
function reads ``W(x, p) = (2 r^2 - 1) exp(-r^2) / pi``.  Squeezing acts as
``W_lam(x, p) = W(lam x, p / lam)``; the marginal of ``Q_theta`` under a
squeezed state is the unsqueezed marginal stretched by ``u(lam, theta)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import mpmath as mp
import numpy as np
from scipy import integrate, special

from .errors import OrderTooLarge, PreconditionError

SINGLE_PHOTON = "single_photon"
SQUEEZED_SINGLE_PHOTON = "squeezed_single_photon"
VACUUM_CONTROL = "vacuum_control"
KINDS = (SINGLE_PHOTON, SQUEEZED_SINGLE_PHOTON, VACUUM_CONTROL)

MAX_MOMENT_ORDER = 64

_SQRT_PI = math.sqrt(math.pi)


@dataclass(frozen=True)
class PhasePoint:
    x: float
    p: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.p)):
            raise PreconditionError(f"phase point must be finite, got ({self.x}, {self.p})")

    def __iter__(self):
        yield self.x
        yield self.p


@dataclass(frozen=True)
class StateModel:
    """A state with a closed-form Wigner function.

    ``lam`` is the squeezing parameter.  It must be 1 for ``single_photon``
    and is ignored by ``vacuum_control``.
    """

    kind: str = SINGLE_PHOTON
    lam: float = 1.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise PreconditionError(f"unknown model kind {self.kind!r}; expected one of {KINDS}")
        if not (self.lam > 0 and math.isfinite(self.lam)):
            raise PreconditionError(f"lambda must be a positive finite number, got {self.lam}")
        if self.kind == SINGLE_PHOTON and self.lam != 1.0:
            raise PreconditionError("single_photon has lambda = 1; use squeezed_single_photon")

    @property
    def squeeze(self) -> float:
        """Effective squeezing parameter (1 for the vacuum control)."""
        return 1.0 if self.kind == VACUUM_CONTROL else float(self.lam)

    @property
    def base(self) -> str:
        """Kind of the unsqueezed state this model is derived from."""
        return VACUUM_CONTROL if self.kind == VACUUM_CONTROL else SINGLE_PHOTON

    @property
    def rotationally_symmetric(self) -> bool:
        return self.squeeze == 1.0

    def to_dict(self) -> dict:
        return {"kind": self.kind, "lambda": float(self.lam)}

    @classmethod
    def from_dict(cls, data: dict) -> "StateModel":
        return cls(kind=data["kind"], lam=float(data.get("lambda", 1.0)))


def scale_u(lam, theta):
    """Per-angle stretch factor ``u(lam, theta)`` of a squeezed marginal.

    Uses ``sqrt(cos^2/lam^2 + lam^2 sin^2)``, which equals
    ``cos(theta)/lam * sqrt(1 + lam^4 tan^2 theta)`` wherever the latter is
    defined and stays finite at ``theta = pi/2``.
    """
    c = np.cos(theta)
    s = np.sin(theta)
    out = np.sqrt(c * c / (lam * lam) + lam * lam * s * s)
    return float(out) if np.ndim(out) == 0 else out


def _scale_u_mp(lam, theta):
    lam = mp.mpf(lam)
    theta = mp.mpf(theta)
    return mp.sqrt(mp.cos(theta) ** 2 / lam**2 + lam**2 * mp.sin(theta) ** 2)


# ---------------------------------------------------------------------------
# Unsqueezed building blocks
# ---------------------------------------------------------------------------

def _base_wigner(base: str, r2):
    if base == SINGLE_PHOTON:
        return (2.0 * r2 - 1.0) * np.exp(-r2) / math.pi
    return np.exp(-r2) / math.pi


def base_pdf(base: str, t):
    """Density of ``Q_theta`` for the unsqueezed state (any ``theta``)."""
    t = np.asarray(t, dtype=float)
    g = np.exp(-t * t) / _SQRT_PI
    return 2.0 * t * t * g if base == SINGLE_PHOTON else g


def base_cdf(base: str, t):
    t = np.asarray(t, dtype=float)
    gauss = 0.5 * special.erfc(-t)
    if base == SINGLE_PHOTON:
        return gauss - t * np.exp(-t * t) / _SQRT_PI
    return gauss


def base_pdf_max(base: str) -> float:
    """Maximum of :func:`base_pdf` (attained at ``t = +-1`` resp. ``t = 0``)."""
    if base == SINGLE_PHOTON:
        return 2.0 / (math.e * _SQRT_PI)
    return 1.0 / _SQRT_PI


@lru_cache(maxsize=None)
def base_moment_mp(base: str, order: int) -> mp.mpf:
    """Exact ``<t^order>`` of the unsqueezed marginal as an mpmath number."""
    if order % 2:
        return mp.mpf(0)
    k = order // 2
    if base == SINGLE_PHOTON:
        # 2/sqrt(pi) * Gamma(k + 3/2) = (2k+1)!! / 2^k
        return mp.mpf(mp.fac2(2 * k + 1)) / mp.mpf(2) ** k
    return mp.mpf(mp.fac2(2 * k - 1)) / mp.mpf(2) ** k


# ---------------------------------------------------------------------------
# Public operations
# ---------------------------------------------------------------------------

def eval_wigner(model: StateModel, x, p):
    """Wigner function ``W_lam(x, p)``; broadcasts over array inputs."""
    lam = model.squeeze
    x = np.asarray(x, dtype=float) * lam
    p = np.asarray(p, dtype=float) / lam
    out = _base_wigner(model.base, x * x + p * p)
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class Marginal:
    """Density of ``Q_theta``: ``density(s) = base_pdf(s / scale) / scale``."""

    theta: float
    scale: float
    base: str

    def density(self, s):
        s = np.asarray(s, dtype=float)
        out = base_pdf(self.base, s / self.scale) / self.scale
        return float(out) if np.ndim(out) == 0 else out

    def cdf(self, s):
        out = base_cdf(self.base, np.asarray(s, dtype=float) / self.scale)
        return float(out) if np.ndim(out) == 0 else out

    def max_density(self) -> float:
        return base_pdf_max(self.base) / self.scale

    __call__ = density


def radon_marginal(model: StateModel, theta: float) -> Marginal:
    if not 0.0 <= theta < math.pi:
        raise PreconditionError(f"theta must lie in [0, pi), got {theta}")
    return Marginal(theta=float(theta), scale=scale_u(model.squeeze, theta), base=model.base)


def marginal_by_line_integral(model: StateModel, theta: float, s: float) -> float:
    """Radon transform of :func:`eval_wigner` by direct quadrature along the ray.

    Independent of the closed-form marginal; used to validate it.
    """
    c, sn = math.cos(theta), math.sin(theta)

    def along(v):
        return eval_wigner(model, s * c - v * sn, s * sn + v * c)

    lam = model.squeeze
    reach = 12.0 * max(lam, 1.0 / lam)
    val, _ = integrate.quad(along, -reach, reach, epsabs=1e-13, epsrel=1e-12, limit=400)
    return val


def _check_order(order: int, max_order: int):
    if order < 0:
        raise PreconditionError(f"moment order must be >= 0, got {order}")
    if order > max_order:
        raise OrderTooLarge(f"moment order {order} exceeds configured maximum {max_order}")


def moment_mp(model: StateModel, theta, order: int, max_order: int = MAX_MOMENT_ORDER):
    """``<Q_theta^order>`` in extended precision (``u^order`` times the base moment)."""
    _check_order(order, max_order)
    base = base_moment_mp(model.base, order)
    if order % 2 or model.squeeze == 1.0:
        return base
    return _scale_u_mp(model.squeeze, theta) ** order * base


def quadrature_moment(model: StateModel, theta: float, order: int,
                      max_order: int = MAX_MOMENT_ORDER) -> float:
    return float(moment_mp(model, theta, order, max_order))


def covariance_matrix(model: StateModel, theta: float, max_order: int,
                      moment_cap: int = MAX_MOMENT_ORDER) -> np.ndarray:
    """Quadrature covariance ``g^{ii'} = 2(<Q^{i+i'}> - <Q^i><Q^{i'}>)``.

    Entry ``[i-1, i'-1]`` holds ``g^{ii'}`` for ``i, i' = 1..max_order``.
    """
    _check_order(2 * max_order, moment_cap)
    mom = [moment_mp(model, theta, k, moment_cap) for k in range(2 * max_order + 1)]
    g = np.empty((max_order, max_order))
    for i in range(1, max_order + 1):
        for j in range(i, max_order + 1):
            g[i - 1, j - 1] = g[j - 1, i - 1] = float(2 * (mom[i + j] - mom[i] * mom[j]))
    return g


def cut_weight_integral(lam: float, power: int = 2) -> float:
    """``int_{-pi/2}^{pi/2} u(lam, theta)^(-power) dtheta`` by adaptive quadrature."""
    peak = [0.0]
    val, _ = integrate.quad(lambda t: scale_u(lam, t) ** (-power), -math.pi / 2, math.pi / 2,
                            points=peak, epsabs=1e-13, epsrel=1e-13, limit=500)
    return val


DensityFn = Callable[[np.ndarray], np.ndarray]
