"""Potential bases on the circle and reproducible random kick sequences.

A kick at integer time ``j`` is the potential ``sum_k c_k(j) F^k(x)`` where
the ``F^k`` are sampled on the uniform grid ``x_i = i / M``.  Coefficient
vectors come from a counter-keyed stream so that any kick can be regenerated
from ``(master_seed, j)`` alone, in any order and from any worker.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

__all__ = [
    "PotentialBasis",
    "Distribution",
    "KickSequence",
    "KickPotential",
    "EmbeddingReport",
    "make_fourier_basis",
    "parse_basis",
    "parse_distribution",
    "parse_mode",
    "check_embedding",
    "check_distribution",
    "kick_at",
    "eval_potential",
    "eval_gradient",
    "potential_row",
]

EMBEDDING_TOL = 1e-6


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class PotentialBasis:
    """K periodic potentials sampled on an M-point grid.

    ``values[k, i]`` is ``F^k(i / M)`` and ``gradients[k, i]`` its
    derivative.  ``curvatures`` (second derivatives) and ``modes`` are only
    known for analytic bases such as the Fourier one.
    """

    values: np.ndarray
    gradients: np.ndarray
    curvatures: Optional[np.ndarray] = None
    modes: Optional[tuple] = None
    labels: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen(np.atleast_2d(self.values)))
        object.__setattr__(self, "gradients", _frozen(np.atleast_2d(self.gradients)))
        if self.curvatures is not None:
            object.__setattr__(self, "curvatures", _frozen(np.atleast_2d(self.curvatures)))
        if self.values.shape != self.gradients.shape:
            raise ValueError("values and gradients must have the same shape")
        if self.curvatures is not None and self.curvatures.shape != self.values.shape:
            raise ValueError("curvatures must match values in shape")

    @property
    def K(self) -> int:
        return self.values.shape[0]

    @property
    def M(self) -> int:
        return self.values.shape[1]

    @property
    def grid(self) -> np.ndarray:
        return np.arange(self.M) / self.M

    def rolled(self, shift: int) -> "PotentialBasis":
        """Basis rotated by ``shift`` grid cells: new[i] = old[i - shift]."""
        curv = None if self.curvatures is None else np.roll(self.curvatures, shift, axis=1)
        return PotentialBasis(
            np.roll(self.values, shift, axis=1),
            np.roll(self.gradients, shift, axis=1),
            curv,
            None,
            self.labels,
        )


def make_fourier_basis(modes: Sequence[tuple], M: int) -> PotentialBasis:
    """Rows ``cos(2 pi f x - phase)`` for each ``(f, phase)`` in ``modes``.

    The phase is a lag, so ``(1, 0)`` gives ``cos 2 pi x`` and
    ``(1, pi/2)`` gives ``sin 2 pi x``.
    """
    if M < 8:
        raise ValueError(f"grid size M={M} is too small (need M >= 8)")
    modes = [(int(f), float(ph)) for f, ph in modes]
    if not modes:
        raise ValueError("empty mode list")
    if any(f <= 0 for f, _ in modes):
        raise ValueError("frequencies must be positive integers")
    x = np.arange(M) / M
    vals, grads, curvs, labels = [], [], [], []
    for f, ph in modes:
        w = 2 * np.pi * f
        arg = w * x - ph
        vals.append(np.cos(arg))
        grads.append(-w * np.sin(arg))
        curvs.append(-w * w * np.cos(arg))
        labels.append(f"{f}:{ph:g}")
    return PotentialBasis(np.array(vals), np.array(grads), np.array(curvs), tuple(modes), tuple(labels))


def parse_basis(spec: str, M: int) -> PotentialBasis:
    """Parse ``fourier:1c,1s,2c`` style tokens (frequency + cos/sin)."""
    kind, _, body = spec.strip().partition(":")
    if kind.strip() != "fourier" or not body.strip():
        raise ValueError(f"unsupported basis specification {spec!r}")
    modes = []
    for tok in body.split(","):
        tok = tok.strip()
        if len(tok) < 2 or tok[-1] not in "cs" or not tok[:-1].isdigit():
            raise ValueError(f"bad basis token {tok!r}")
        modes.append((int(tok[:-1]), 0.0 if tok[-1] == "c" else np.pi / 2))
    return make_fourier_basis(modes, M)


@dataclass(frozen=True)
class Distribution:
    """Law of one coefficient vector: uniform on [-sigma, sigma]^K or N(0, sigma^2 I)."""

    kind: str = "uniform"
    sigma: float = 1.0

    def __post_init__(self):
        if self.kind not in ("uniform", "gauss"):
            raise ValueError(f"unknown distribution {self.kind!r}")
        if not (self.sigma >= 0 and math.isfinite(self.sigma)):
            raise ValueError("sigma must be a finite non-negative number")

    def __str__(self):
        return f"{self.kind}:{self.sigma!r}"


def parse_distribution(spec: str) -> Distribution:
    kind, _, sigma = spec.strip().partition(":")
    try:
        return Distribution(kind.strip(), float(sigma))
    except ValueError as exc:
        raise ValueError(f"bad distribution {spec!r}: {exc}") from None


def parse_mode(spec: str) -> int:
    """Return sub-steps per unit time: 1 for ``kicked``, P for ``white:P``."""
    spec = spec.strip()
    if spec == "kicked":
        return 1
    kind, _, p = spec.partition(":")
    if kind == "white" and p.isdigit() and int(p) >= 1:
        return int(p)
    raise ValueError(f"bad forcing mode {spec!r}")


def _zigzag(j: int) -> int:
    return 2 * j if j >= 0 else -2 * j - 1


@dataclass(frozen=True)
class KickSequence:
    """Seed-keyed stream of coefficient vectors ``c(j)``.

    With ``substeps == 1`` (kicked model) each ``c(j)`` follows
    ``distribution``.  With ``substeps == P`` (white model) ``j`` counts
    sub-steps of length ``1/P`` and ``c(j) ~ N(0, sigma^2 / P)``, i.e. Wiener
    increments.  ``stream`` prefixes the per-kick key and is extended by
    :meth:`derive` to obtain independent realizations.
    """

    master_seed: int
    distribution: Distribution
    K: int
    substeps: int = 1
    stream: tuple = ()

    def __post_init__(self):
        if not 0 <= self.master_seed < 2**64:
            raise ValueError("master_seed must be an unsigned 64-bit integer")
        if self.substeps < 1:
            raise ValueError("substeps must be >= 1")

    @property
    def white(self) -> bool:
        return self.substeps > 1

    def derive(self, *keys: int) -> "KickSequence":
        return replace(self, stream=self.stream + tuple(int(k) for k in keys))

    def coefficients(self, j: int) -> np.ndarray:
        sigma = self.distribution.sigma
        if sigma == 0:
            return np.zeros(self.K)
        ss = np.random.SeedSequence(self.master_seed, spawn_key=self.stream + (_zigzag(int(j)),))
        rng = np.random.Generator(np.random.PCG64(ss))
        if self.white:
            return rng.normal(0.0, sigma / math.sqrt(self.substeps), self.K)
        if self.distribution.kind == "uniform":
            return rng.uniform(-sigma, sigma, self.K)
        return rng.normal(0.0, sigma, self.K)


@dataclass(frozen=True, eq=False)
class KickPotential:
    coefficients: np.ndarray
    time_index: int


def kick_at(seq: KickSequence, basis: PotentialBasis, j: int) -> KickPotential:
    if seq.K != basis.K:
        raise ValueError(f"kick sequence has K={seq.K} but basis has K={basis.K}")
    return KickPotential(_frozen(seq.coefficients(j)), int(j))


def potential_row(kick: KickPotential, basis: PotentialBasis) -> np.ndarray:
    """The kick potential sampled on the whole grid."""
    return kick.coefficients @ basis.values


def eval_potential(kick: KickPotential, basis: PotentialBasis, i: int) -> float:
    if not 0 <= i < basis.M:
        raise IndexError(f"grid index {i} out of range for M={basis.M}")
    return float(kick.coefficients @ basis.values[:, i])


def eval_gradient(kick: KickPotential, basis: PotentialBasis, i: int) -> float:
    if not 0 <= i < basis.M:
        raise IndexError(f"grid index {i} out of range for M={basis.M}")
    return float(kick.coefficients @ basis.gradients[:, i])


@dataclass(frozen=True)
class EmbeddingReport:
    passed: bool
    witness: Optional[tuple] = None
    reason: str = ""

    def __bool__(self):
        return self.passed


def check_embedding(basis: PotentialBasis, tol: float = EMBEDDING_TOL) -> EmbeddingReport:
    """Grid test that ``x -> (F^1(x), ..., F^K(x))`` is an embedding of the circle.

    Fails on the first pair of grid points whose images are closer than
    ``tol`` times their circle distance, or on the first point where the
    gradient vector has norm ``<= tol``.
    """
    M = basis.M
    pts = basis.values.T
    idx = np.arange(M)
    for i in range(M - 1):
        j = idx[i + 1:]
        gap = np.abs(j - i)
        circ = np.minimum(gap, M - gap) / M
        sep = np.linalg.norm(pts[j] - pts[i], axis=1)
        bad = np.flatnonzero(sep <= tol * circ)
        if bad.size:
            return EmbeddingReport(False, (i, int(j[bad[0]])), "not injective")
    gnorm = np.linalg.norm(basis.gradients, axis=0)
    bad = np.flatnonzero(gnorm <= tol)
    if bad.size:
        return EmbeddingReport(False, (int(bad[0]),), "vanishing derivative")
    return EmbeddingReport(True)


@dataclass(frozen=True)
class DistributionReport:
    absolutely_continuous: bool
    zero_in_support: bool

    @property
    def passed(self) -> bool:
        return self.absolutely_continuous and self.zero_in_support


def check_distribution(dist: Distribution) -> DistributionReport:
    """Both supported laws are centred at the origin; only sigma = 0 degenerates."""
    return DistributionReport(dist.sigma > 0, True)
