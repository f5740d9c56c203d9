"""Monte-Carlo and diagnostic experiments on minimizer contraction.

All experiments use ``s = 0`` and start the evolution one unit of time
earlier, at ``r = -1`` (``-P`` sub-steps in white mode).  Horizons are
``t - s`` in units of time.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import combinations
from typing import Optional, Sequence

import numpy as np

from .forcing import Distribution, KickSequence, PotentialBasis
from .omega import circle_hausdorff, diameter_of_points
from .solver import MinimizerPath, SolverConfig, backtrack_all, evolve, extend

__all__ = [
    "DecaySeries",
    "FitResult",
    "FitError",
    "HalvingResult",
    "SeparationCertificate",
    "SeparationError",
    "ProofConstants",
    "LyapunovResult",
    "EventEstimate",
    "SplicedKicks",
    "decay_experiment",
    "fit_lambda",
    "scaled_diameter_bound",
    "halving_frequency",
    "halving_scan",
    "two_solution_convergence",
    "kick_jacobian",
    "lyapunov_from_curvatures",
    "lyapunov_exponent",
    "auto_candidates",
    "separation_check",
    "constants_from",
    "proof_constants",
    "event_probability",
    "psi_bump",
    "worker_count",
]


def worker_count(default: int = 1) -> int:
    """Worker cap from ``MINLAB_THREADS`` (at least 1)."""
    try:
        return max(1, int(os.environ.get("MINLAB_THREADS", default)))
    except ValueError:
        return default


def _pmap(fn, items, workers: int):
    if workers <= 1:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(workers) as pool:
        return list(pool.map(fn, items))


def _span(cfg: SolverConfig, horizon: int) -> SolverConfig:
    P = cfg.substeps
    return cfg.with_span(-P, horizon * P)


def _diameters(ev, horizons, P: int) -> np.ndarray:
    """d(Omega_{0,h}) for each horizon h, reusing one evolution."""
    out = np.empty(len(horizons))
    for i, h in enumerate(horizons):
        pos = backtrack_all(ev, (h + 1) * P, P)
        out[i] = diameter_of_points(pos, ev.M)
    return out


def psi_bump(M: int, center: float = 0.0, amplitude: float = 1.0) -> np.ndarray:
    """Smooth initial condition ``amplitude * (1 - cos 2 pi (x - center))``, minimal at ``center``."""
    x = np.arange(M) / M
    return amplitude * (1 - np.cos(2 * np.pi * (x - center)))


# -- decay ------------------------------------------------------------------


@dataclass(eq=False)
class DecaySeries:
    horizons: np.ndarray
    per_sample: np.ndarray
    mean: np.ndarray
    M: int
    config: dict = field(default_factory=dict)

    @property
    def n_samples(self) -> int:
        return self.per_sample.shape[0]


def decay_experiment(cfg: SolverConfig, basis: PotentialBasis, seq: KickSequence,
                     n_samples: int, horizons: Sequence[int], workers: int = 1) -> DecaySeries:
    """Diameters of Omega_{s,t} for every sample and horizon.

    Sample ``i`` uses the kick stream ``seq.derive(i)``; one evolution to the
    largest horizon serves all smaller ones, so the per-sample rows are nested.
    """
    horizons = np.asarray(list(horizons), dtype=int)
    if n_samples < 1:
        raise ValueError("need at least one sample")
    if horizons.size == 0 or np.any(horizons < 0) or np.any(np.diff(horizons) <= 0):
        raise ValueError("horizons must be non-negative and strictly increasing")
    span = _span(cfg, int(horizons[-1]))

    def one(i):
        ev = evolve(span, seq.derive(i), basis)
        return _diameters(ev, horizons, cfg.substeps)

    rows = np.array(_pmap(one, range(n_samples), workers))
    snapshot = dict(M=cfg.M, b=cfg.b, winding_max=cfg.winding_max, substeps=cfg.substeps,
                    master_seed=seq.master_seed, distribution=str(seq.distribution), K=seq.K)
    return DecaySeries(horizons, rows, rows.mean(axis=0), cfg.M, snapshot)


class FitError(ValueError):
    """Not enough usable points for the exponential fit."""


@dataclass(frozen=True)
class FitResult:
    lambda_hat: float
    C_hat: float
    r_squared: float
    n_used: int
    burn_in: int


def fit_lambda(series: DecaySeries, burn_in: Optional[int] = None, floor: Optional[float] = None) -> FitResult:
    """Least-squares fit of ``log mean = log C - lambda h``.

    Skips the first ``burn_in`` horizons (20% by default) and every mean below
    the grid floor ``2 / M``.
    """
    h = np.asarray(series.horizons, dtype=float)
    mean = np.asarray(series.mean, dtype=float)
    if burn_in is None:
        burn_in = int(round(0.2 * len(h)))
    if floor is None:
        floor = 2.0 / series.M
    keep = np.zeros(len(h), dtype=bool)
    keep[burn_in:] = True
    keep &= mean >= floor
    if keep.sum() < 4:
        raise FitError(f"only {int(keep.sum())} points above the grid floor after burn-in (need 4)")
    x, y = h[keep], np.log(mean[keep])
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_res = float(resid @ resid)
    ss_tot = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else (1.0 if ss_res <= 1e-24 else 0.0)
    lam = -float(slope)
    if abs(lam) < 1e-12:
        lam = 0.0
    return FitResult(lam, float(np.exp(intercept)), r2, int(keep.sum()), int(burn_in))


def scaled_diameter_bound(series: DecaySeries, lambda_hat: float) -> float:
    """Largest ``d(Omega_{s,t}) exp(lambda_hat (t - s) / 2)`` over samples and horizons."""
    scale = np.exp(lambda_hat * np.asarray(series.horizons) / 2)
    return float((series.per_sample * scale).max())


# -- halving ------------------------------------------------------------------


class SplicedKicks:
    """Kicks from ``past`` before time ``split`` and from ``future`` after."""

    def __init__(self, past, future, split: int):
        if past.K != future.K or past.substeps != future.substeps:
            raise ValueError("past and future streams are incompatible")
        self.past, self.future, self.split = past, future, split
        self.K, self.substeps = past.K, past.substeps

    def coefficients(self, j: int) -> np.ndarray:
        return (self.past if j < self.split else self.future).coefficients(j)


@dataclass(frozen=True)
class HalvingResult:
    T: int
    frequency: float
    min_past_frequency: float
    excluded: int
    n_trials: int
    confidence: float
    per_past: tuple = ()


def halving_frequency(cfg: SolverConfig, basis: PotentialBasis, seq: KickSequence, T: int,
                      n_pasts: int = 10, n_futures: int = 20, past_horizon: int = 1,
                      future_seq: Optional[KickSequence] = None, workers: int = 1) -> HalvingResult:
    """Frequency of ``d(Omega_{s,t+T}) <= d(Omega_{s,t}) / 2`` over independent futures.

    Each past ``p`` fixes the kicks before ``t = s + past_horizon``; each of
    its futures redraws the kicks on ``[t, t + T)``.  Pasts whose diameter is
    already below the grid floor ``2 / M`` are excluded and counted.
    ``future_seq`` overrides the law of the future kicks (same K and mode).
    """
    if T < 0:
        raise ValueError("T must be non-negative")
    P = cfg.substeps
    M = cfg.M
    future_seq = seq if future_seq is None else future_seq
    t_split = past_horizon * P

    def one(p):
        past = seq.derive(0, p)
        ev0 = evolve(cfg.with_span(-P, t_split), past, basis)
        d0 = diameter_of_points(backtrack_all(ev0, ev0.steps, P), M)
        if d0 < 2.0 / M:
            return None
        hits = 0
        for f in range(n_futures):
            kicks = SplicedKicks(past, future_seq.derive(1, p, f), t_split)
            ev = extend(ev0, kicks, basis, t_split + T * P)
            d1 = diameter_of_points(backtrack_all(ev, ev.steps, P), M)
            hits += d1 <= d0 / 2
        return hits

    results = _pmap(one, range(n_pasts), workers)
    used = [r for r in results if r is not None]
    excluded = (n_pasts - len(used)) * n_futures
    n = len(used) * n_futures
    freq = sum(used) / n if n else 0.0
    per_past = tuple(r / n_futures for r in used)
    half = 1.96 * math.sqrt(freq * (1 - freq) / n) if n else float("nan")
    return HalvingResult(int(T), freq, min(per_past) if per_past else 0.0, excluded, n, half, per_past)


def halving_scan(cfg, basis, seq, Ts=range(1, 11), **kw) -> tuple:
    """Run :func:`halving_frequency` for each T; return ``(best, all_results)``.

    Best means largest minimum-over-pasts frequency, then largest pooled one.
    """
    results = [halving_frequency(cfg, basis, seq, T, **kw) for T in Ts]
    best = max(results, key=lambda r: (r.min_past_frequency, r.frequency, -r.T))
    return best, results


# -- two initial conditions ---------------------------------------------------


def two_solution_convergence(cfg: SolverConfig, basis: PotentialBasis, seq, psi1, psi2,
                             horizons: Sequence[int], lead: int = 1) -> np.ndarray:
    """Circle Hausdorff distance between Omega_{s,t} under ``psi1`` and ``psi2``.

    Both initial conditions are imposed at ``r = s - lead`` on the same
    forcing realization.  With ``lead = 1`` the limit point of Omega_{s,t}
    still depends on psi through the single step from ``r`` to ``s``; a long
    lead lets both sets approach the global minimizer at time ``s``.
    """
    horizons = list(horizons)
    if lead < 1:
        raise ValueError("lead must be >= 1")
    P = cfg.substeps
    span = cfg.with_span(-lead * P, max(horizons) * P)
    ev1 = evolve(span.with_span(span.r, span.t, psi=psi1), seq, basis)
    ev2 = evolve(span.with_span(span.r, span.t, psi=psi2), seq, basis)
    s_level = lead * P
    out = np.empty(len(horizons))
    for i, h in enumerate(horizons):
        a = backtrack_all(ev1, s_level + h * P, s_level)
        b = backtrack_all(ev2, s_level + h * P, s_level)
        out[i] = circle_hausdorff(a, b, cfg.M)
    return out


# -- Lyapunov -------------------------------------------------------------------


def kick_jacobian(kappa: float, dt: float = 1.0) -> np.ndarray:
    """Linearization of ``v' = v + G'(x)``, ``x' = x + dt v'`` at ``kappa = G''(x)``."""
    return np.array([[1.0 + dt * kappa, dt], [kappa, 1.0]])


@dataclass(frozen=True)
class LyapunovResult:
    exponent: float
    second: float
    n_kicks: int
    max_det_error: float


def lyapunov_from_curvatures(kappas, dt: float = 1.0) -> LyapunovResult:
    """Lyapunov exponents of the product of kick Jacobians, via 2x2 QR renormalization."""
    kappas = np.asarray(kappas, dtype=float)
    Q = np.eye(2)
    logs = np.zeros(2)
    det_err = 0.0
    for kappa in kappas:
        J = kick_jacobian(kappa, dt)
        det_err = max(det_err, abs(np.linalg.det(J) - 1.0))
        Q, R = np.linalg.qr(J @ Q)
        d = np.diag(R)
        # Q is orthogonal, so |R00 R11| is the determinant of the renormalized step
        det_err = max(det_err, abs(abs(d[0] * d[1]) - 1.0))
        logs += np.log(np.abs(d))
        Q = Q * np.sign(d)
    n = len(kappas)
    return LyapunovResult(logs[0] / n, logs[1] / n, n, det_err)


def lyapunov_exponent(path: MinimizerPath, seq, basis: PotentialBasis, min_kicks: int = 10) -> LyapunovResult:
    """Top Lyapunov exponent of the kick dynamics linearized along ``path``.

    The action subtracts the kick potential, so its Euler-Lagrange map is
    ``v' = v - F'(x)``: the curvature fed to :func:`kick_jacobian` is ``-F''``.
    """
    n = len(path.windings)
    if n < min_kicks:
        raise ValueError(f"path has {n} kicks; need at least {min_kicks}")
    if basis.curvatures is None:
        raise ValueError("basis has no analytic second derivatives")
    dt = 1.0 / getattr(seq, "substeps", 1)
    kappas = [
        -float(seq.coefficients(path.r + k) @ basis.curvatures[:, int(path.positions[k])])
        for k in range(n)
    ]
    return lyapunov_from_curvatures(kappas, dt)


# -- separation property ---------------------------------------------------------


class SeparationError(ValueError):
    def __init__(self, reason: str, detail: str = ""):
        super().__init__(f"{reason}: {detail}" if detail else reason)
        self.reason = reason
        self.detail = detail


@dataclass(frozen=True, eq=False)
class SeparationCertificate:
    coefficients: np.ndarray  # (3, K)
    maxima: np.ndarray  # grid indices x_i
    peak_values: np.ndarray  # max of each candidate on the grid
    J: tuple  # ((a_i, b_i), ...) arc endpoints in turns, a_i < b_i lifted
    alpha0: float
    alpha: Optional[float]
    I: Optional[tuple]
    M: int

    @property
    def x(self) -> np.ndarray:
        return self.maxima / self.M


def auto_candidates(basis: PotentialBasis, n: int = 3) -> np.ndarray:
    """Coefficient vectors ``c_k = F^k(i / n)``; with a cos/sin pair these are
    the rotated cosines ``cos 2 pi (x - i / n)``."""
    if basis.modes is None:
        raise ValueError("automatic candidates need an analytic Fourier basis")
    out = []
    for i in range(n):
        theta = i / n
        out.append([math.cos(2 * math.pi * f * theta - ph) for f, ph in basis.modes])
    return np.array(out)


def _arc(mask: np.ndarray, center: int) -> np.ndarray:
    """Grid indices of the maximal run of ``mask`` containing ``center`` (circularly)."""
    M = len(mask)
    if mask.all():
        return np.arange(center, center + M) % M
    lo = center
    while mask[(lo - 1) % M]:
        lo -= 1
    hi = center
    while mask[(hi + 1) % M]:
        hi += 1
    return np.arange(lo, hi + 1) % M


def _arc_bounds(idx: np.ndarray, M: int) -> tuple:
    """Open arc in turns spanning grid cells ``idx`` (consecutive), half a cell past each end."""
    first = int(idx[0])
    return ((first - 0.5) / M, (first + len(idx) - 0.5) / M)


def _separate(vals: np.ndarray, tol: float) -> tuple:
    """Largest-margin disjoint superlevel arcs for three sampled candidates."""
    M = vals.shape[1]
    peaks = vals.max(axis=1)
    argm = vals.argmax(axis=1)
    for i in range(len(vals)):
        others = np.delete(vals[i], argm[i])
        if others.size and others.max() >= peaks[i] - tol:
            raise SeparationError("non-unique maximum", f"candidate {i} has two grid maxima")
    if len(set(argm.tolist())) < len(argm):
        raise SeparationError("overlap", "two candidates peak at the same grid point")

    def arcs(level):
        out = []
        for i in range(len(vals)):
            mask = vals[i] > peaks[i] - level
            arc = _arc(mask, int(argm[i]))
            if len(arc) < mask.sum():  # another component rises above the level
                return None
            out.append(arc)
        owned = np.zeros(M, dtype=int)
        for a in out:
            owned[a] += 1
        return out if owned.max() <= 1 else None

    gaps = np.unique((peaks[:, None] - vals).ravel())
    gaps = gaps[gaps > 0]
    # validity is monotone in the level: binary search the largest valid one
    lo, hi = 0, len(gaps) - 1
    if arcs(gaps[0]) is None:
        raise SeparationError("overlap", "superlevel arcs intersect at every level")
    while lo < hi:
        mid = (lo + hi + 1) // 2
        if arcs(gaps[mid]) is not None:
            lo = mid
        else:
            hi = mid - 1
    J = arcs(gaps[lo])
    margins = []
    for i, arc in enumerate(J):
        outside = np.delete(vals[i], arc)
        margins.append(peaks[i] - outside.max() if outside.size else peaks[i] - vals[i].min())
    return argm, peaks, J, float(min(margins))


def separation_check(basis: PotentialBasis, candidates, alpha: Optional[float] = None,
                     tol: float = 1e-9) -> SeparationCertificate:
    """Certify the separation property on the grid for three of ``candidates``.

    Each candidate potential must have a unique grid maximum; the arcs ``J_i``
    are the largest disjoint superlevel arcs around the maxima and ``alpha0``
    is the smallest drop from a peak to its values outside ``J_i``.  With more
    than three candidates the triple with largest ``alpha0`` is returned.
    Raises :class:`SeparationError` on failure.
    """
    cand = np.atleast_2d(np.asarray(candidates, dtype=float))
    if cand.shape[0] < 3:
        raise ValueError("need at least three candidate coefficient vectors")
    if cand.shape[1] != basis.K:
        raise ValueError("candidate length differs from the basis size")
    M = basis.M
    best, err = None, None
    for triple in combinations(range(cand.shape[0]), 3):
        try:
            res = _separate(cand[list(triple)] @ basis.values, tol)
        except SeparationError as exc:
            err = err or exc
            continue
        if best is None or res[3] > best[1][3]:
            best = (triple, res)
    if best is None:
        raise err
    triple, (argm, peaks, J, alpha0) = best
    vals = cand[list(triple)] @ basis.values
    if alpha is not None and not 0 < alpha <= alpha0:
        masks = vals > (peaks[:, None] - alpha)
        if alpha > 0 and (masks.sum(axis=0) > 1).any():
            raise SeparationError("overlap", f"superlevel sets at alpha={alpha} intersect")
        raise SeparationError("alpha too large", f"alpha={alpha} exceeds alpha0={alpha0}")
    I = None
    if alpha is not None:
        I = []
        for i, arc in enumerate(J):
            inside = np.flatnonzero(vals[i][arc] > peaks[i] - alpha)
            I.append(_arc_bounds(arc[inside[0]:inside[-1] + 1], M))
        I = tuple(I)
    return SeparationCertificate(
        cand[list(triple)], argm, peaks, tuple(_arc_bounds(a, M) for a in J), alpha0, alpha, I, M
    )


# -- proof constants --------------------------------------------------------------


@dataclass(frozen=True)
class ProofConstants:
    C: Fraction
    alpha: Fraction
    N_prime: int
    N: int
    c1_norm: float

    @property
    def N_prime_interval(self) -> tuple:
        return (2 + self.alpha ** -3, 2 * self.alpha ** -3)

    @property
    def N_interval(self) -> tuple:
        return (2 * self.alpha ** -10 + 1, 4 * self.alpha ** -10)


def _smallest_int_above(q: Fraction) -> int:
    return math.floor(q) + 1


def constants_from(alpha0, c1_max, b: Optional[float] = None) -> ProofConstants:
    """Constants C, alpha, N', N from the separation margin and the largest C^1 norm.

    ``b`` switches to the white-force variant of alpha.  Exact rational
    arithmetic throughout; N' and N are the smallest integers strictly inside
    their intervals.
    """
    c1 = Fraction(c1_max)
    C = 3 * (c1 + 1)
    alpha = min(Fraction(alpha0), 1 / (10 * C))
    if b is not None:
        alpha = min(alpha, 1 / (10 * (Fraction(abs(b)) + 1) ** 2))
    if not 0 < alpha < Fraction(1, 30):
        raise ValueError(f"alpha={float(alpha)} must lie in (0, 1/30)")
    lo1, hi1 = 2 + alpha ** -3, 2 * alpha ** -3
    lo2, hi2 = 2 * alpha ** -10 + 1, 4 * alpha ** -10
    n1, n2 = _smallest_int_above(lo1), _smallest_int_above(lo2)
    if not n1 < hi1:
        raise ValueError("no integer N' strictly inside its interval")
    if not n2 < hi2:
        raise ValueError("no integer N strictly inside its interval")
    return ProofConstants(C, alpha, n1, n2, float(c1_max))


def proof_constants(cert: SeparationCertificate, basis: PotentialBasis, b: Optional[float] = None) -> ProofConstants:
    """Constants for a certificate; C^1 norm is ``max|F| + max|F'|`` on the grid."""
    vals = cert.coefficients @ basis.values
    grads = cert.coefficients @ basis.gradients
    c1 = float((np.abs(vals).max(axis=1) + np.abs(grads).max(axis=1)).max())
    return constants_from(cert.alpha0, c1, b)


# -- small-potential events --------------------------------------------------------


@dataclass(frozen=True)
class EventEstimate:
    probability: float
    half_width: float
    n_samples: int


def event_probability(basis: PotentialBasis, dist: Distribution, eps: float, n_kicks: int,
                      n_samples: int, seed: int = 0, chunk: int = 8192) -> EventEstimate:
    """Monte-Carlo probability that ``n_kicks`` consecutive kicks all have
    grid sup-norm ``<= eps``, with a 95% normal-approximation half-width."""
    if eps < 0:
        raise ValueError("eps must be non-negative")
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    K = basis.K
    hits = 0
    done = 0
    while done < n_samples:
        m = min(chunk, n_samples - done)
        if dist.kind == "uniform":
            c = rng.uniform(-dist.sigma, dist.sigma, (m, n_kicks, K))
        else:
            c = rng.normal(0.0, dist.sigma, (m, n_kicks, K))
        sup = np.abs(c @ basis.values).max(axis=2)
        hits += int(np.all(sup <= eps, axis=1).sum())
        done += m
    p = hits / n_samples
    return EventEstimate(p, 1.96 * math.sqrt(p * (1 - p) / n_samples), n_samples)
