"""Sets of minimizer positions at an intermediate time, their diameter, and
the shock map that sends each point at time ``s`` to a terminal at time ``t``."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .solver import TIE_RTOL, ValueEvolution, _offsets, backtrack_all, kinetic_table

__all__ = [
    "OmegaSet",
    "ShockMapTable",
    "NonCrossingError",
    "omega_set",
    "diameter",
    "diameter_of_points",
    "circle_hausdorff",
    "extreme_positions",
    "canonical_lifts",
    "assign_shock_map",
    "shock_map",
]


class NonCrossingError(RuntimeError):
    """Minimizers for different terminals cross; the solver output is inconsistent."""


@dataclass(frozen=True, eq=False)
class OmegaSet:
    points: np.ndarray
    M: int
    s: int
    t: int
    provenance: np.ndarray

    def __len__(self):
        return len(self.points)

    def __contains__(self, i):
        return bool(np.any(self.points == i))


def _first_of_runs(lifted: np.ndarray, M: int) -> dict:
    """Map each grid point ``v`` hit by the lifted positions ``lifted`` (indexed
    by terminal) to the first terminal of the run of terminals reaching it.

    Runs are delimited on the lift, so a run wrapping past terminal 0 starts
    where the lifted position last changed; this keeps the rule rotation
    equivariant.
    """
    lifted = np.asarray(lifted, dtype=np.int64)
    prev = np.roll(lifted, 1)
    prev[0] -= M
    starts = np.flatnonzero(lifted != prev)
    return {int(lifted[x] % M): int(x) for x in starts}


def _run_start(inside: np.ndarray, lifted: np.ndarray, M: int) -> int:
    prev_in = np.roll(inside, 1)
    prev = np.roll(lifted, 1)
    prev[0] -= M
    starts = np.flatnonzero(inside & ~(prev_in & (prev == lifted)))
    return int(starts[0])


def canonical_lifts(ev: ValueEvolution, level_to: int, terminals=None) -> np.ndarray:
    """Lifted grid positions at ``level_to`` of the canonical paths from each terminal."""
    M = ev.M
    pos = np.arange(M) if terminals is None else np.asarray(terminals, dtype=np.int64)
    lift = pos.copy()
    for k in range(ev.steps - 1, level_to - 1, -1):
        y = ev.backptr[k][pos]
        lift = lift - (np.mod(pos - y, M) + M * ev.winding[k][pos])
        pos = y
    return lift


def omega_set(ev: ValueEvolution, s: int, terminals=None) -> OmegaSet:
    """Positions at time ``s`` of the canonical minimizers ending at time ``t``.

    ``terminals`` restricts the terminal grid points (all of them by default).
    """
    ls = ev.level(s)
    M = ev.M
    term = np.arange(M) if terminals is None else np.asarray(terminals, dtype=np.int64)
    pos = backtrack_all(ev, ev.steps, ls, term)
    if terminals is None:
        first = _first_of_runs(canonical_lifts(ev, ls), M)
        points = np.array(sorted(first))
        prov = np.array([first[int(p)] for p in points], dtype=np.int64)
    else:
        points, idx = np.unique(pos, return_index=True)
        prov = term[idx]
    return OmegaSet(points, M, s, ev.t, prov)


def diameter_of_points(points, M: int) -> float:
    """Minimal arc length containing the grid points ``points`` (in turns)."""
    p = np.unique(np.asarray(points, dtype=np.int64) % M)
    if p.size == 0:
        raise ValueError("diameter of an empty set")
    gaps = np.diff(np.append(p, p[0] + M))
    return (M - int(gaps.max())) / M


def diameter(omega: OmegaSet) -> float:
    return diameter_of_points(omega.points, omega.M)


def circle_hausdorff(a, b, M: int) -> float:
    """Hausdorff distance on the circle between two sets of grid points, in turns."""
    a = np.unique(np.asarray(a, dtype=np.int64) % M)
    b = np.unique(np.asarray(b, dtype=np.int64) % M)
    if a.size == 0 or b.size == 0:
        raise ValueError("Hausdorff distance needs non-empty sets")
    d = np.abs(a[:, None] - b[None, :])
    d = np.minimum(d, M - d)
    return max(d.min(axis=1).max(), d.min(axis=0).max()) / M


def extreme_positions(ev: ValueEvolution, s: int) -> tuple:
    """Leftmost, rightmost and canonical lifted positions at time ``s``.

    Returns three integer arrays indexed by the terminal ``x`` at time ``t``;
    each entry is a lifted grid coordinate congruent to the position mod M,
    measured continuously along the path from ``x``.  Leftmost/rightmost range
    over all tied optimal paths.
    """
    ls = ev.level(s)
    cfg = ev.cfg
    M = ev.M
    cost, w_lo, w_hi = kinetic_table(M, float(cfg.b), cfg.dt, int(cfg.winding_max))
    offs = _offsets(M)
    disp_lo = offs + M * w_lo[offs]
    disp_hi = offs + M * w_hi[offs]
    kmat = cost[offs]
    cols = np.arange(M)
    left = np.zeros(M, dtype=np.int64)
    right = np.zeros(M, dtype=np.int64)
    canon = np.zeros(M, dtype=np.int64)
    for k in range(ls, ev.steps):
        cand = (ev.phi[k] - ev.potentials[k])[:, None] + kmat
        best = cand.min(axis=0)
        mask = cand <= best + TIE_RTOL * np.maximum(1.0, np.abs(best))
        left = np.where(mask, left[:, None] - disp_hi, np.iinfo(np.int64).max).min(axis=0)
        right = np.where(mask, right[:, None] - disp_lo, np.iinfo(np.int64).min).max(axis=0)
        src = ev.backptr[k]
        canon = canon[src] - (offs[src, cols] + M * ev.winding[k])
    x = np.arange(M)
    return x + left, x + right, x + canon


@dataclass(frozen=True, eq=False)
class ShockMapTable:
    map: np.ndarray
    kind: np.ndarray
    M: int
    s: int
    t: int

    def is_monotone(self) -> bool:
        """Circular monotonicity: at most one cyclic descent."""
        nxt = np.roll(self.map, -1)
        return int(np.sum(nxt < self.map)) <= 1


def assign_shock_map(lo, hi, canon, M: int, s: int = 0, t: int = 0) -> ShockMapTable:
    """Build the shock map from per-terminal lifted position ranges.

    Points hit by a canonical minimizer map to the first terminal of the run
    reaching them; other points inside some ``[lo_x, hi_x]`` map to the first
    such ``x`` (flagged shock unless they are an endpoint); points in a gap
    between ``hi_x`` and ``lo_{x+1}`` map to the nearer side.
    """
    lo, hi, canon = (np.asarray(a, dtype=np.int64) for a in (lo, hi, canon))
    if np.any(hi < lo):
        raise NonCrossingError("rightmost position left of leftmost position")
    nxt_lo = np.append(lo[1:], lo[0] + M)
    if np.any(np.diff(lo) < 0) or np.any(np.diff(hi) < 0) or np.any(hi > nxt_lo):
        raise NonCrossingError("minimizers from different terminals cross")
    first = _first_of_runs(canon, M)
    S = np.empty(M, dtype=np.int64)
    kind = np.empty(M, dtype=object)
    for y in range(M):
        if y in first:
            S[y], kind[y] = first[y], "minimizer"
            continue
        # lift of y relative to each terminal interval
        m = np.floor_divide(lo - y + M - 1, M)  # smallest lift y + m M >= lo
        yl = y + m * M
        inside = yl <= hi
        if inside.any():
            x = _run_start(inside, yl, M)
            end = yl[x] == lo[x] or yl[x] == hi[x]
            S[y], kind[y] = x, "minimizer" if end else "shock"
            continue
        # gap (hi_x, lo_{x+1}); lift y above hi_x
        yh = y + np.floor_divide(hi - y + M, M) * M
        in_gap = yh < nxt_lo
        x = int(np.flatnonzero(in_gap)[0])
        right_dist = nxt_lo[x] - yh[x]
        left_dist = yh[x] - hi[x]
        S[y] = x if left_dist <= right_dist else (x + 1) % M
        kind[y] = "shock"
    return ShockMapTable(S, kind.astype(str), M, s, t)


def shock_map(ev: ValueEvolution, s: int) -> ShockMapTable:
    lo, hi, canon = extreme_positions(ev, s)
    return assign_shock_map(lo, hi, canon, ev.M, s, ev.t)
