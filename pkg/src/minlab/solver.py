"""Lax-Oleinik dynamic programming for kicked action minimizers on the grid.

Paths are piecewise linear with breakpoints at kick times and positions on
the grid ``i / M``.  A step of length ``dt`` from grid point ``y`` to ``x``
with winding ``w`` has lifted displacement ``((x - y) mod M) / M + w`` and
kinetic cost ``(displacement - b dt)^2 / (2 dt)``.  The value table obeys::

    phi[n + 1][x] = min_{y, w} phi[n][y] - F(r + n)(y) + kinetic(y -> x, w)

Ties (within ``TIE_RTOL`` relative) go to the smallest source index, then to
the smallest winding.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import lru_cache
from typing import Optional

import numpy as np

from .forcing import KickPotential, PotentialBasis, potential_row

__all__ = [
    "BIG",
    "TIE_RTOL",
    "WindingBoundError",
    "SolverConfig",
    "ValueEvolution",
    "MinimizerPath",
    "kinetic_cost",
    "kinetic_table",
    "lax_oleinik_step",
    "evolve",
    "extend",
    "truncate",
    "backtrack",
    "backtrack_all",
    "path_action",
    "lifted_sources",
    "is_noncrossing",
    "min_winding_bound",
]

BIG = 1e15
TIE_RTOL = 1e-12


class WindingBoundError(ArithmeticError):
    """The winding search range does not bracket the kinetic minimum."""


def min_winding_bound(b: float, dt: float = 1.0) -> int:
    return 1 + math.ceil(abs(b * dt))


@dataclass(frozen=True, eq=False)
class SolverConfig:
    """Grid, drift and time span for one evolution.

    ``r`` and ``t`` count steps of length ``1 / substeps``; ``psi`` is the
    initial value table at time ``r`` (zeros when omitted).
    """

    M: int
    b: float = 0.0
    winding_max: Optional[int] = None
    r: int = 0
    t: int = 0
    psi: Optional[np.ndarray] = None
    substeps: int = 1

    def __post_init__(self):
        if self.M < 2:
            raise ValueError("grid size must be at least 2")
        if self.substeps < 1:
            raise ValueError("substeps must be >= 1")
        if self.winding_max is None:
            object.__setattr__(self, "winding_max", min_winding_bound(self.b, self.dt) + 1)
        if self.winding_max < min_winding_bound(self.b, self.dt):
            raise ValueError(
                f"winding_max={self.winding_max} < 1 + ceil(|b dt|) = {min_winding_bound(self.b, self.dt)}"
            )
        if self.r > self.t:
            raise ValueError(f"start time {self.r} exceeds end time {self.t}")
        psi = np.zeros(self.M) if self.psi is None else np.array(self.psi, dtype=float)
        if psi.shape != (self.M,):
            raise ValueError(f"psi must have length {self.M}")
        psi.setflags(write=False)
        object.__setattr__(self, "psi", psi)

    @property
    def dt(self) -> float:
        return 1.0 / self.substeps

    def with_span(self, r: int, t: int, psi=None) -> "SolverConfig":
        return replace(self, r=r, t=t, psi=self.psi if psi is None else psi)


@dataclass(frozen=True, eq=False)
class ValueEvolution:
    """DP history from time ``r`` to ``t``.

    ``phi[n]`` is the value table at time ``r + n``; ``backptr[n]`` and
    ``winding[n]`` describe the optimal last step into time ``r + n + 1``;
    ``potentials[n]`` is the kick applied at time ``r + n``.
    """

    phi: np.ndarray
    backptr: np.ndarray
    winding: np.ndarray
    potentials: np.ndarray
    cfg: SolverConfig

    @property
    def r(self) -> int:
        return self.cfg.r

    @property
    def t(self) -> int:
        return self.cfg.t

    @property
    def M(self) -> int:
        return self.cfg.M

    @property
    def steps(self) -> int:
        return self.backptr.shape[0]

    def level(self, time: int) -> int:
        n = time - self.r
        if not 0 <= n <= self.steps:
            raise ValueError(f"time {time} outside evolution span [{self.r}, {self.t}]")
        return n


@dataclass(frozen=True, eq=False)
class MinimizerPath:
    positions: np.ndarray
    windings: np.ndarray
    r: int

    @property
    def terminal(self) -> int:
        return int(self.positions[-1])

    @property
    def t(self) -> int:
        return self.r + len(self.windings)

    def displacements(self, M: int) -> np.ndarray:
        """Lifted displacement of each step, in turns."""
        p = self.positions
        return (np.mod(p[1:] - p[:-1], M) + M * self.windings) / M


def _kinetic_value(delta: float, w: int, b: float, dt: float) -> float:
    return (delta + w - b * dt) ** 2 / (2 * dt)


def kinetic_cost(i_from: int, i_to: int, b: float, dt: float, W: int, M: int) -> tuple:
    """Cheapest straight step between two grid points over windings in [-W, W].

    Returns ``(cost, w)``.  Raises :class:`WindingBoundError` when a winding
    just outside the range would be strictly cheaper.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    k = (i_to - i_from) % M
    cost, wind, _ = kinetic_table(M, float(b), float(dt), int(W))
    return float(cost[k]), int(wind[k])


@lru_cache(maxsize=64)
def kinetic_table(M: int, b: float, dt: float, W: int) -> tuple:
    """Kinetic cost by grid offset ``k = (x - y) mod M``.

    Returns ``(cost, w_lo, w_hi)``: the minimum over windings and the
    smallest / largest tied minimizing windings.
    """
    if W < 1:
        raise WindingBoundError("winding bound must be >= 1")
    delta = np.arange(M) / M
    ws = np.arange(-W - 1, W + 2)
    all_costs = (delta[:, None] + ws[None, :] - b * dt) ** 2 / (2 * dt)
    inner = all_costs[:, 1:-1]
    cost = inner.min(axis=1)
    edge = np.minimum(all_costs[:, 0], all_costs[:, -1])
    if np.any(edge < cost):
        k = int(np.flatnonzero(edge < cost)[0])
        raise WindingBoundError(
            f"winding bound W={W} does not bracket the kinetic minimum (b={b}, dt={dt}, offset={k}/{M})"
        )
    tied = inner <= cost[:, None] * (1 + TIE_RTOL) + TIE_RTOL
    w_lo = ws[1:-1][np.argmax(tied, axis=1)]
    w_hi = ws[1:-1][tied.shape[1] - 1 - np.argmax(tied[:, ::-1], axis=1)]
    for a in (cost, w_lo, w_hi):
        a.setflags(write=False)
    return cost, w_lo, w_hi


def _offsets(M: int) -> np.ndarray:
    i = np.arange(M)
    return np.mod(i[None, :] - i[:, None], M)  # [y, x] -> (x - y) mod M


@lru_cache(maxsize=16)
def _transition(M: int, b: float, dt: float, W: int) -> tuple:
    """Dense ``[y, x]`` tables of kinetic cost and canonical winding."""
    cost, w_lo, _ = kinetic_table(M, b, dt, W)
    offs = _offsets(M)
    kmat, wmat = cost[offs], w_lo[offs]
    _freeze(kmat, wmat)
    return kmat, wmat


def _tie_mask(cand: np.ndarray) -> tuple:
    best = cand.min(axis=0)
    return cand <= best + TIE_RTOL * np.maximum(1.0, np.abs(best)), best


def _step(phi_n, pot, kmat, wmat):
    cand = (phi_n - pot)[:, None] + kmat
    mask, _ = _tie_mask(cand)
    src = np.argmax(mask, axis=0)
    cols = np.arange(cand.shape[1])
    return cand[src, cols], src, wmat[src, cols]


def lax_oleinik_step(phi_n, kick, basis: PotentialBasis, cfg: SolverConfig) -> tuple:
    """One DP transition; returns ``(phi_next, backptr_row, winding_row)``.

    ``kick`` may be a :class:`KickPotential` or an already sampled row.
    """
    phi_n = np.asarray(phi_n, dtype=float)
    pot = potential_row(kick, basis) if isinstance(kick, KickPotential) else np.asarray(kick, dtype=float)
    if phi_n.shape != (cfg.M,) or pot.shape != (cfg.M,):
        raise ValueError("value and potential tables must have length M")
    return _step(phi_n, pot, *_transition(cfg.M, float(cfg.b), cfg.dt, int(cfg.winding_max)))


def _run(phi0, pots, cfg):
    M = cfg.M
    n = len(pots)
    kmat, wmat = _transition(M, float(cfg.b), cfg.dt, int(cfg.winding_max))
    phi = np.empty((n + 1, M))
    back = np.empty((n, M), dtype=np.int64)
    wind = np.empty((n, M), dtype=np.int64)
    phi[0] = phi0
    for k in range(n):
        phi[k + 1], back[k], wind[k] = _step(phi[k], pots[k], kmat, wmat)
    return phi, back, wind


def _potentials(seq, basis, times) -> np.ndarray:
    if seq.K != basis.K:
        raise ValueError(f"kick sequence has K={seq.K} but basis has K={basis.K}")
    if len(times) == 0:
        return np.empty((0, basis.M))
    coeffs = np.array([seq.coefficients(j) for j in times])
    return coeffs @ basis.values


def _freeze(*arrays):
    for a in arrays:
        a.setflags(write=False)


def evolve(cfg: SolverConfig, seq, basis: PotentialBasis) -> ValueEvolution:
    """Iterate the Lax-Oleinik step with kicks at times ``r, ..., t - 1``.

    ``seq`` is anything with ``K`` and ``coefficients(j)``.
    """
    if basis.M != cfg.M:
        raise ValueError(f"basis grid M={basis.M} differs from solver grid M={cfg.M}")
    if getattr(seq, "substeps", cfg.substeps) != cfg.substeps:
        raise ValueError("forcing mode does not match solver step length")
    pots = _potentials(seq, basis, range(cfg.r, cfg.t))
    phi, back, wind = _run(cfg.psi, pots, cfg)
    _freeze(phi, back, wind, pots)
    return ValueEvolution(phi, back, wind, pots, cfg)


def extend(ev: ValueEvolution, seq, basis: PotentialBasis, t_new: int) -> ValueEvolution:
    """Continue ``ev`` to time ``t_new`` using kicks of ``seq`` from ``ev.t`` on."""
    if t_new < ev.t:
        raise ValueError("cannot extend backwards in time")
    pots = _potentials(seq, basis, range(ev.t, t_new))
    phi, back, wind = _run(ev.phi[-1], pots, ev.cfg)
    phi = np.concatenate([ev.phi, phi[1:]])
    back = np.concatenate([ev.backptr, back])
    wind = np.concatenate([ev.winding, wind])
    pots = np.concatenate([ev.potentials, pots])
    _freeze(phi, back, wind, pots)
    return ValueEvolution(phi, back, wind, pots, replace(ev.cfg, t=t_new))


def truncate(ev: ValueEvolution, t: int) -> ValueEvolution:
    """The evolution stopped at time ``t``; values only depend on earlier kicks."""
    if not ev.r <= t <= ev.t:
        raise ValueError(f"time {t} outside [{ev.r}, {ev.t}]")
    n = t - ev.r
    return ValueEvolution(ev.phi[: n + 1], ev.backptr[:n], ev.winding[:n], ev.potentials[:n],
                          replace(ev.cfg, t=t))


def backtrack(ev: ValueEvolution, terminal: int) -> MinimizerPath:
    if not 0 <= terminal < ev.M:
        raise IndexError(f"terminal {terminal} out of range for M={ev.M}")
    n = ev.steps
    pos = np.empty(n + 1, dtype=np.int64)
    wnd = np.empty(n, dtype=np.int64)
    pos[n] = terminal
    for k in range(n - 1, -1, -1):
        pos[k] = ev.backptr[k, pos[k + 1]]
        wnd[k] = ev.winding[k, pos[k + 1]]
    return MinimizerPath(pos, wnd, ev.r)


def backtrack_all(ev: ValueEvolution, level_from: int, level_to: int, terminals=None) -> np.ndarray:
    """Grid positions at level ``level_to`` of the canonical paths ending at ``level_from``."""
    if not 0 <= level_to <= level_from <= ev.steps:
        raise ValueError("levels out of range")
    pos = np.arange(ev.M) if terminals is None else np.asarray(terminals, dtype=np.int64)
    for k in range(level_from - 1, level_to - 1, -1):
        pos = ev.backptr[k][pos]
    return pos


def path_action(path: MinimizerPath, seq, basis: PotentialBasis, cfg: SolverConfig) -> float:
    """Direct evaluation of kinetic + kick terms + psi along a grid path."""
    n = len(path.windings)
    if len(path.positions) != n + 1 or path.r != cfg.r or path.r + n != cfg.t:
        raise ValueError("path does not match the configured time span")
    M, dt, b = cfg.M, cfg.dt, cfg.b
    p = [int(v) for v in path.positions]
    total = float(cfg.psi[p[0]])
    for k in range(n):
        delta = ((p[k + 1] - p[k]) % M) / M
        total += _kinetic_value(delta, int(path.windings[k]), b, dt)
        total -= float(seq.coefficients(cfg.r + k) @ basis.values[:, p[k]])
    return total


def lifted_sources(ev: ValueEvolution, k: int) -> np.ndarray:
    """Lifted source position (grid units) of the optimal step into level ``k + 1``."""
    M = ev.M
    x = np.arange(M)
    return x - np.mod(x - ev.backptr[k], M) - M * ev.winding[k]


def is_noncrossing(ev: ValueEvolution) -> bool:
    """Every lifted backpointer map is non-decreasing with total winding M."""
    for k in range(ev.steps):
        lift = lifted_sources(ev, k)
        if np.any(np.diff(lift) < 0) or lift[0] + ev.M < lift[-1]:
            return False
    return True
