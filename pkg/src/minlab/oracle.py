"""Exhaustive path enumeration, used to check the dynamic-programming solver.

Everything here works from first principles: kinetic costs by looping over
windings, actions by summing over every grid path.  Nothing is shared with
the solver except the tie tolerance and the shock-map assignment rule.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .forcing import Distribution, KickSequence, PotentialBasis
from .omega import ShockMapTable, assign_shock_map
from .solver import TIE_RTOL, SolverConfig, backtrack, evolve

__all__ = [
    "brute_kinetic",
    "path_values",
    "joint_path_values",
    "brute_optimum",
    "brute_extremes",
    "brute_shock_map",
    "delta_basis",
    "OracleReport",
    "run_oracle_case",
    "run_oracle_suite",
]


def brute_kinetic(M: int, b: float, dt: float, W: int) -> tuple:
    """Matrices ``[y, x]`` of the cheapest step cost and its smallest minimizing winding."""
    cost = np.full((M, M), np.inf)
    wind = np.zeros((M, M), dtype=np.int64)
    for y in range(M):
        for x in range(M):
            delta = ((x - y) % M) / M
            vals = [(delta + w - b * dt) ** 2 / (2 * dt) for w in range(-W, W + 1)]
            best = min(vals)
            tol = TIE_RTOL * max(1.0, abs(best))
            cost[y, x] = best
            wind[y, x] = next(w for w, v in zip(range(-W, W + 1), vals) if v <= best + tol)
    return cost, wind


def _axis(a, k, ndim):
    shape = [1] * ndim
    shape[k] = a.shape[0]
    return a.reshape(shape)


def path_values(psi, pots, b: float, dt: float, W: int) -> np.ndarray:
    """Action of every grid path; axis ``k`` is the position at step ``k``.

    Windings are minimized segment by segment, which is exact because each
    winding enters only its own kinetic term.
    """
    pots = np.atleast_2d(pots) if len(pots) else np.empty((0, len(psi)))
    n, M = pots.shape[0], len(psi)
    kin, _ = brute_kinetic(M, b, dt, W)
    nd = n + 1
    total = _axis(np.asarray(psi, float), 0, nd).copy()
    for k in range(n):
        total = total - _axis(pots[k], k, nd)
        shape = [1] * nd
        shape[k], shape[k + 1] = M, M
        total = total + kin.reshape(shape)
    return np.broadcast_to(total, (M,) * nd)


def joint_path_values(psi, pots, b: float, dt: float, W: int) -> tuple:
    """Action and lifted step displacements over every path *and* winding.

    Returns ``(values, disp)``; ``values`` has axes ``(y_0..y_n, w_1..w_n)``
    and ``disp[k]`` broadcasts to it, giving step ``k``'s lifted displacement
    in grid units.
    """
    pots = np.atleast_2d(pots)
    n, M = pots.shape[0], len(psi)
    ws = np.arange(-W, W + 1)
    nd = 2 * n + 1
    total = _axis(np.asarray(psi, float), 0, nd).copy()
    disp = []
    for k in range(n):
        total = total - _axis(pots[k], k, nd)
        off = np.mod(np.arange(M)[None, :] - np.arange(M)[:, None], M)  # [y, x]
        shape = [1] * nd
        shape[k], shape[k + 1], shape[n + 1 + k] = M, M, len(ws)
        d = (off[:, :, None] + M * ws[None, None, :]).reshape(shape)
        total = total + (d / M - b * dt) ** 2 / (2 * dt)
        disp.append(d)
    return total, disp


def _optimal_mask(vals: np.ndarray, axis_terminal: int) -> np.ndarray:
    best = np.moveaxis(vals, axis_terminal, -1).reshape(-1, vals.shape[axis_terminal]).min(axis=0)
    bshape = [1] * vals.ndim
    bshape[axis_terminal] = -1
    best = best.reshape(bshape)
    return vals <= best + TIE_RTOL * np.maximum(1.0, np.abs(best))


def brute_optimum(psi, pots, b: float, dt: float, W: int) -> tuple:
    """Minimal action per terminal and the tie-broken optimal paths.

    Among optimal paths to a terminal, the one kept has the smallest position
    one step earlier, then the smallest position two steps earlier, and so on.
    Returns ``(values, paths, windings)``.
    """
    vals = path_values(psi, pots, b, dt, W)
    n = vals.ndim - 1
    M = vals.shape[0]
    best = vals.reshape(-1, M).min(axis=0)
    opt = _optimal_mask(vals, n)
    _, wind = brute_kinetic(M, b, dt, W)
    paths = np.zeros((M, n + 1), dtype=np.int64)
    winds = np.zeros((M, n), dtype=np.int64)
    for x in range(M):
        sub = opt[..., x]
        chosen = [x]
        for _ in range(n):
            hits = sub.reshape(-1, M).any(axis=0)
            y = int(np.flatnonzero(hits)[0])
            sub = sub[..., y]
            chosen.append(y)
        chosen = chosen[::-1]
        paths[x] = chosen
        winds[x] = [wind[chosen[k], chosen[k + 1]] for k in range(n)]
    return best, paths, winds


def brute_extremes(psi, pots, b: float, dt: float, W: int, level_s: int) -> tuple:
    """Leftmost/rightmost lifted positions at ``level_s`` over all optimal
    (path, winding) combinations, plus the tie-broken canonical position."""
    vals, disp = joint_path_values(psi, pots, b, dt, W)
    n = len(disp)
    M = vals.shape[0]
    opt = _optimal_mask(vals, n)
    xs = _axis(np.arange(M), n, vals.ndim)
    lifted = np.broadcast_to(xs, vals.shape).astype(np.int64)
    for k in range(level_s, n):
        lifted = lifted - disp[k]
    lifted = np.broadcast_to(lifted, vals.shape)
    lo = np.empty(M, dtype=np.int64)
    hi = np.empty(M, dtype=np.int64)
    for x in range(M):
        sel = np.take(opt, x, axis=n)
        lv = np.take(lifted, x, axis=n)[sel]
        lo[x], hi[x] = lv.min(), lv.max()
    _, paths, winds = brute_optimum(psi, pots, b, dt, W)
    canon = np.arange(M) - sum(
        np.mod(paths[:, k + 1] - paths[:, k], M) + M * winds[:, k] for k in range(level_s, n)
    )
    return lo, hi, np.asarray(canon, dtype=np.int64)


def brute_shock_map(psi, pots, b: float, dt: float, W: int, level_s: int) -> ShockMapTable:
    lo, hi, canon = brute_extremes(psi, pots, b, dt, W, level_s)
    return assign_shock_map(lo, hi, canon, len(psi))


def delta_basis(M: int) -> PotentialBasis:
    """Indicator basis: with Gaussian coefficients every kick is white noise on the grid."""
    return PotentialBasis(np.eye(M), np.zeros((M, M)))


@dataclass
class OracleReport:
    cases: int = 0
    mismatches: list = field(default_factory=list)
    max_rel_error: float = 0.0

    @property
    def ok(self) -> bool:
        return not self.mismatches


def run_oracle_case(M: int, steps: int, seed: int, W: int = 2, report: OracleReport | None = None) -> OracleReport:
    report = OracleReport() if report is None else report
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(M, steps)))
    b = float(rng.uniform(-1, 1))
    psi = rng.normal(size=M)
    basis = delta_basis(M)
    seq = KickSequence(seed, Distribution("gauss", 1.0), M, stream=(M, steps))
    cfg = SolverConfig(M, b=b, winding_max=W, r=0, t=steps, psi=psi)
    ev = evolve(cfg, seq, basis)
    best, paths, winds = brute_optimum(psi, ev.potentials, b, 1.0, W)
    rel = np.abs(ev.phi[-1] - best) / np.maximum(1.0, np.abs(best))
    report.cases += 1
    report.max_rel_error = max(report.max_rel_error, float(rel.max()))
    tag = dict(M=M, steps=steps, seed=seed)
    if np.any(rel > 1e-12):
        report.mismatches.append({**tag, "what": "value", "max_rel": float(rel.max())})
    for x in range(M):
        p = backtrack(ev, x)
        if not (np.array_equal(p.positions, paths[x]) and np.array_equal(p.windings, winds[x])):
            report.mismatches.append({**tag, "what": "path", "terminal": x})
            break
    return report


def run_oracle_suite(max_m: int = 16, max_steps: int = 4, seeds: int = 50, W: int = 2,
                     grids=(8, 12, 16)) -> OracleReport:
    report = OracleReport()
    for M in [m for m in grids if m <= max_m]:
        for steps in range(1, max_steps + 1):
            for seed in range(seeds):
                run_oracle_case(M, steps, seed, W, report)
    return report
