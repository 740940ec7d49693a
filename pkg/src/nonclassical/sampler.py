"""Seedable simulation of homodyne outcomes.

Seeding rule
------------
Every stream is drawn from ``np.random.Generator(PCG64(SeedSequence(seed,
spawn_key=key)))``.  Per-cut datasets use ``key = (j, c)`` for cut ``j`` and
chunk ``c`` of :data:`CHUNK` samples; joint ``(theta, s)`` streams use
``key = (c,)``.  Chunks are generated independently and concatenated in order,
so the output does not depend on how many threads were used.
"""

from __future__ import annotations

import csv
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np
from scipy.interpolate import PchipInterpolator

from . import __version__
from .errors import PreconditionError, UnknownDistribution
from .phase_space import StateModel, base_cdf, scale_u

CHUNK = 1 << 16
TABLE_KNOTS = 1 << 16
TABLE_RANGE = 8.0


# ---------------------------------------------------------------------------
# Cut distributions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CutDistribution:
    """Angular density on ``(-pi/2, pi/2]``.

    ``uniform`` is ``1/pi``.  ``optimal`` is ``1/(pi u^2(lam, theta))``, whose
    CDF is ``(arctan(lam^2 tan theta) + pi/2) / pi``.
    """

    kind: str = "uniform"
    lam: float = 1.0

    KINDS = ("uniform", "optimal")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise UnknownDistribution(f"unknown cut distribution {self.kind!r}; expected one of {self.KINDS}")
        if not self.lam > 0:
            raise PreconditionError(f"lambda must be positive, got {self.lam}")

    @classmethod
    def from_descriptor(cls, desc, lam: float = 1.0) -> "CutDistribution":
        if isinstance(desc, CutDistribution):
            return desc
        if isinstance(desc, dict):
            return cls(kind=desc.get("kind"), lam=float(desc.get("lambda", lam)))
        if isinstance(desc, str):
            return cls(kind=desc, lam=float(lam))
        raise UnknownDistribution(f"cannot interpret cut distribution descriptor {desc!r}")

    @property
    def is_uniform(self) -> bool:
        return self.kind == "uniform" or self.lam == 1.0

    def to_dict(self) -> dict:
        return {"kind": self.kind, "lambda": float(self.lam)}

    def density(self, theta):
        theta = np.asarray(theta, dtype=float)
        if self.is_uniform:
            out = np.full_like(theta, 1.0 / math.pi)
        else:
            out = 1.0 / (math.pi * np.asarray(scale_u(self.lam, theta)) ** 2)
        return float(out) if out.ndim == 0 else out

    def cdf(self, theta):
        theta = np.asarray(theta, dtype=float)
        if self.is_uniform:
            out = theta / math.pi + 0.5
        else:
            # write lam^2 tan(theta) as lam^2 sin / cos so theta = pi/2 maps to 1
            out = (np.arctan2(self.lam**2 * np.sin(theta), np.cos(theta)) + math.pi / 2) / math.pi
        return float(out) if out.ndim == 0 else out

    def ppf(self, v):
        v = np.asarray(v, dtype=float)
        base = math.pi * (v - 0.5)
        if self.is_uniform:
            return base
        return np.arctan(np.tan(base) / self.lam**2)


# ---------------------------------------------------------------------------
# Inverse-CDF tables
# ---------------------------------------------------------------------------

@lru_cache(maxsize=None)
def inverse_cdf_table(base: str) -> PchipInterpolator:
    """Monotone cubic interpolant of the inverse CDF of the unsqueezed marginal."""
    t = np.linspace(-TABLE_RANGE, TABLE_RANGE, TABLE_KNOTS)
    F = base_cdf(base, t)
    keep = np.concatenate([[True], np.diff(F) > 0])
    return PchipInterpolator(F[keep], t[keep], extrapolate=False)


def _draw_base(base: str, rng: np.random.Generator, n: int) -> np.ndarray:
    table = inverse_cdf_table(base)
    lo, hi = table.x[0], table.x[-1]
    v = np.clip(rng.random(n), lo, hi)
    return table(v)


def _rng(seed: int, key: tuple) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=key)))


def _chunks(n: int) -> list[tuple[int, int]]:
    return [(c, min(CHUNK, n - c * CHUNK)) for c in range(-(-n // CHUNK))]


def _map(fn, jobs, threads: int):
    if threads > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, jobs))
    return [fn(job) for job in jobs]


# ---------------------------------------------------------------------------
# Data containers
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CutPlan:
    cuts: tuple
    per_cut_counts: tuple

    def __post_init__(self):
        cuts = tuple(float(c) for c in self.cuts)
        counts = tuple(int(c) for c in self.per_cut_counts)
        object.__setattr__(self, "cuts", cuts)
        object.__setattr__(self, "per_cut_counts", counts)
        if len(cuts) < 1 or len(cuts) != len(counts):
            raise PreconditionError("cut plan needs m >= 1 cuts and one count per cut")
        if any(c <= 0 for c in counts):
            raise PreconditionError("per-cut counts must be positive")
        if any(not 0.0 <= c < math.pi for c in cuts):
            raise PreconditionError("cut angles must lie in [0, pi)")
        if len(set(cuts)) != len(cuts):
            raise PreconditionError("cut angles must be pairwise distinct")

    @classmethod
    def uniform(cls, m: int, per_cut: int) -> "CutPlan":
        return cls(tuple(j * math.pi / m for j in range(m)), (per_cut,) * m)

    @property
    def m(self) -> int:
        return len(self.cuts)

    @property
    def total(self) -> int:
        return sum(self.per_cut_counts)


@dataclass
class QuadratureDataset:
    entries: list
    seed: int | None
    model: StateModel | None = None

    @property
    def cuts(self) -> list[float]:
        return [theta for theta, _ in self.entries]

    @property
    def counts(self) -> list[int]:
        return [len(s) for _, s in self.entries]

    @property
    def total(self) -> int:
        return sum(self.counts)

    def manifest(self) -> dict:
        return {
            "model": self.model.to_dict() if self.model else None,
            "cuts": self.cuts,
            "counts": self.counts,
            "seed": self.seed,
            "generator_version": __version__,
        }

    def to_csv(self, path: str | os.PathLike) -> None:
        with open(path, "w", newline="") as fh:
            fh.write("theta,s\n")
            for theta, samples in self.entries:
                th = "%.17g" % theta
                fh.writelines(f"{th},{v:.17g}\n" for v in samples)

    def write(self, csv_path: str | os.PathLike, manifest_path: str | os.PathLike) -> None:
        self.to_csv(csv_path)
        with open(manifest_path, "w") as fh:
            json.dump(self.manifest(), fh, indent=2)

    @classmethod
    def from_csv(cls, path: str | os.PathLike, seed: int | None = None,
                 model: StateModel | None = None) -> "QuadratureDataset":
        groups: dict[float, list[float]] = {}
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames != ["theta", "s"]:
                raise PreconditionError(f"expected header theta,s in {path}")
            for row in reader:
                groups.setdefault(float(row["theta"]), []).append(float(row["s"]))
        return cls([(th, np.asarray(v)) for th, v in groups.items()], seed, model)


@dataclass
class JointSampleStream:
    thetas: np.ndarray
    s: np.ndarray
    distribution: CutDistribution
    seed: int | None
    model: StateModel | None = None
    extra: dict = field(default_factory=dict)

    @property
    def M(self) -> int:
        return len(self.s)

    @property
    def pairs(self):
        return np.column_stack([self.thetas, self.s])


# ---------------------------------------------------------------------------
# Sampling
# ---------------------------------------------------------------------------

def sample_marginal(model: StateModel, theta: float, n: int, rng: np.random.Generator) -> np.ndarray:
    """``n`` draws of ``Q_theta`` for ``model`` using a single generator."""
    return scale_u(model.squeeze, theta) * _draw_base(model.base, rng, n)


def sample_per_cut(model: StateModel, plan: CutPlan, seed: int, threads: int = 1) -> QuadratureDataset:
    base = model.base
    jobs = []
    for j, (theta, n) in enumerate(zip(plan.cuts, plan.per_cut_counts)):
        u = scale_u(model.squeeze, theta)
        jobs.extend((j, c, size, u) for c, size in _chunks(n))

    def work(job):
        j, c, size, u = job
        return u * _draw_base(base, _rng(seed, (j, c)), size)

    parts = _map(work, jobs, threads)
    entries = []
    pos = 0
    for theta, n in zip(plan.cuts, plan.per_cut_counts):
        k = len(_chunks(n))
        entries.append((theta, np.concatenate(parts[pos:pos + k])))
        pos += k
    return QuadratureDataset(entries, seed, model)


def sample_joint(model: StateModel, cut_distribution, M: int, seed: int,
                 threads: int = 1) -> JointSampleStream:
    """Draw ``M`` pairs from ``RW_lam(theta, s) C(theta)``.

    ``theta`` lies in ``(-pi/2, pi/2)``; the marginal only depends on
    ``u(lam, theta)`` so no wrapping to ``[0, pi)`` is needed.
    """
    dist = CutDistribution.from_descriptor(cut_distribution, model.squeeze)
    if M < 1:
        raise PreconditionError("M must be >= 1")
    base, lam = model.base, model.squeeze

    def work(job):
        c, size = job
        rng = _rng(seed, (c,))
        theta = dist.ppf(rng.random(size))
        return theta, scale_u(lam, theta) * _draw_base(base, rng, size)

    parts = _map(work, _chunks(M), threads)
    thetas = np.concatenate([p[0] for p in parts])
    s = np.concatenate([p[1] for p in parts])
    return JointSampleStream(thetas, s, dist, seed, model)


def sample_cuts(model: StateModel, cuts: Sequence[float], counts: Sequence[int], seed: int,
                threads: int = 1) -> QuadratureDataset:
    """Like :func:`sample_per_cut` but accepts any real angles (e.g. negative cut mid-points)."""
    wrapped = [float(np.mod(c, math.pi)) for c in cuts]
    ds = sample_per_cut(model, CutPlan(tuple(wrapped), tuple(counts)), seed, threads)
    ds.entries = [(float(c), s) for c, (_, s) in zip(cuts, ds.entries)]
    return ds
