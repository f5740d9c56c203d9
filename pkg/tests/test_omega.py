import logging

import numpy as np
import pytest
from hypothesis import given, strategies as st

from minlab.forcing import Distribution, KickSequence, parse_basis
from minlab.omega import (
    NonCrossingError,
    assign_shock_map,
    circle_hausdorff,
    diameter,
    diameter_of_points,
    extreme_positions,
    omega_set,
    shock_map,
)
from minlab.oracle import brute_extremes, brute_optimum, brute_shock_map, delta_basis
from minlab.solver import SolverConfig, backtrack, evolve

log = logging.getLogger(__name__)


def run(M=64, seed=0, sigma=1.0, r=-1, t=8, psi=None, basis=None, b=0.0):
    basis = basis or parse_basis("fourier:1c,1s", M)
    seq = KickSequence(seed, Distribution("uniform", sigma), basis.K)
    return evolve(SolverConfig(M, b=b, r=r, t=t, psi=psi), seq, basis), seq, basis


def test_zero_forcing_omega_is_everything():
    ev, _, _ = run(M=32, sigma=0.0)
    om = omega_set(ev, 0)
    np.testing.assert_array_equal(om.points, np.arange(32))
    assert diameter(om) == pytest.approx(1 - 1 / 32)


def test_single_terminal_gives_singleton():
    ev, _, _ = run(seed=3)
    om = omega_set(ev, 2, terminals=[11])
    assert len(om) == 1
    assert om.points[0] == backtrack(ev, 11).positions[ev.level(2)]
    assert diameter(om) == 0.0


@pytest.mark.parametrize(
    "points, M, d",
    [(range(16), 16, 1 - 1 / 16), ([5], 16, 0.0), ([1, 4], 10, 0.3), ([0, 9], 10, 0.1), ([0, 5], 10, 0.5)],
)
def test_diameter_examples(points, M, d):
    assert diameter_of_points(list(points), M) == pytest.approx(d, abs=1e-15)


def test_diameter_empty_raises():
    with pytest.raises(ValueError):
        diameter_of_points([], 8)


@given(st.sets(st.integers(0, 63), min_size=1), st.integers(0, 63))
def test_diameter_rotation_invariant(points, k):
    pts = np.array(sorted(points))
    assert diameter_of_points(pts, 64) == diameter_of_points((pts + k) % 64, 64)


def test_hausdorff():
    assert circle_hausdorff([0], [0], 8) == 0
    assert circle_hausdorff([0], [7], 8) == 1 / 8
    assert circle_hausdorff([0, 4], [0], 8) == 0.5


def test_single_well_concentrates_and_matches_brute_force():
    M, steps = 12, 3
    B = parse_basis("fourier:1c", M)
    pots = np.tile(10 * B.values[0], (steps, 1))
    from minlab.solver import _run  # drive the DP with fixed potentials

    cfg = SolverConfig(M, r=0, t=steps)
    phi, back, wind = _run(cfg.psi, pots, cfg)
    from minlab.solver import ValueEvolution

    ev = ValueEvolution(phi, back, wind, pots, cfg)
    om = omega_set(ev, 1)
    _, paths, _ = brute_optimum(cfg.psi, pots, 0.0, 1.0, int(cfg.winding_max))
    np.testing.assert_array_equal(om.points, np.unique(paths[:, 1]))
    assert diameter(om) <= 2 / M
    assert set(om.points) <= {11, 0, 1}


def test_zero_forcing_shock_map_is_identity():
    ev, _, _ = run(M=32, sigma=0.0)
    sm = shock_map(ev, 0)
    np.testing.assert_array_equal(sm.map, np.arange(32))
    assert set(sm.kind) == {"minimizer"}


@pytest.mark.parametrize("seed", range(10))
def test_omega_points_map_to_provenance(seed):
    ev, _, _ = run(seed=seed, sigma=0.3)
    om = omega_set(ev, 0)
    sm = shock_map(ev, 0)
    for y, x in zip(om.points, om.provenance):
        assert sm.map[y] == x
        assert sm.kind[y] == "minimizer"
    assert sm.is_monotone()


def _funnel(M, steps, seed):
    rng = np.random.default_rng(seed)
    x = np.arange(M) / M
    pots = np.array([3 * np.cos(2 * np.pi * x) + 0.5 * rng.normal(size=M) for _ in range(steps)])
    psi = rng.normal(size=M)
    return psi, pots


@pytest.mark.parametrize("seed", range(15))
@pytest.mark.parametrize("s_level", [0, 1, 2])
def test_shock_map_matches_exhaustive_oracle(seed, s_level):
    M, steps = 12, 3
    psi, pots = _funnel(M, steps, seed)
    from minlab.solver import ValueEvolution, _run

    cfg = SolverConfig(M, r=0, t=steps, psi=psi, winding_max=2)
    ev = ValueEvolution(*_run(cfg.psi, pots, cfg), pots, cfg)
    lo, hi, canon = extreme_positions(ev, s_level)
    blo, bhi, bcanon = brute_extremes(psi, pots, 0.0, 1.0, 2, s_level)
    np.testing.assert_array_equal(lo, blo)
    np.testing.assert_array_equal(hi, bhi)
    np.testing.assert_array_equal(canon, bcanon)
    sm = shock_map(ev, s_level)
    ref = brute_shock_map(psi, pots, 0.0, 1.0, 2, s_level)
    np.testing.assert_array_equal(sm.map, ref.map)
    np.testing.assert_array_equal(sm.kind, ref.kind)


def test_extremes_see_exact_ties():
    # even psi and no kicks: the antipodal terminal has two optimal sources
    M = 8
    psi = np.array([0, 1, 4, 9, 16, 9, 4, 1], dtype=float)
    pots = np.zeros((1, M))
    from minlab.solver import ValueEvolution, _run

    cfg = SolverConfig(M, r=0, t=1, psi=psi, winding_max=2)
    ev = ValueEvolution(*_run(cfg.psi, pots, cfg), pots, cfg)
    lo, hi, _ = extreme_positions(ev, 0)
    blo, bhi, _ = brute_extremes(psi, pots, 0.0, 1.0, 2, 0)
    np.testing.assert_array_equal(lo, blo)
    np.testing.assert_array_equal(hi, bhi)


def test_crossing_input_rejected():
    with pytest.raises(NonCrossingError):
        assign_shock_map([0, 5, 3, 6], [0, 5, 3, 6], [0, 5, 3, 6], 8)
    with pytest.raises(NonCrossingError):
        assign_shock_map([0, 1], [2, 1], [0, 1], 4)


def test_nesting_and_monotone_diameter():
    slack_hits = 0
    for seed in range(100):
        ev, _, _ = run(M=128, seed=seed, r=-1, t=10)
        prev, prev_d = None, None
        for h in range(0, 11):
            sub = evolve(ev.cfg.with_span(-1, h), KickSequence(seed, Distribution("uniform", 1.0), 2),
                         parse_basis("fourier:1c,1s", 128))
            pts = set(omega_set(sub, 0).points.tolist())
            d = diameter_of_points(list(pts), 128)
            if prev is not None:
                extra = pts - prev
                if extra:
                    far = [p for p in extra if min(min(abs(p - q), 128 - abs(p - q)) for q in prev) > 1]
                    assert not far, (seed, h, far)
                    slack_hits += 1
                assert d <= prev_d + 1 / 128
            prev, prev_d = pts, d
    if slack_hits:
        log.info("nesting held only up to one cell in %d cases", slack_hits)


@pytest.mark.parametrize("seed", range(8))
@pytest.mark.parametrize("shift", [1, 13, 40])
def test_rotation_equivariance(seed, shift):
    M = 64
    B = parse_basis("fourier:1c,1s,2c", M)
    psi = np.random.default_rng(seed).normal(size=M)
    seq = KickSequence(seed, Distribution("uniform", 1.0), B.K)
    ev = evolve(SolverConfig(M, r=-1, t=4, psi=psi), seq, B)
    evr = evolve(SolverConfig(M, r=-1, t=4, psi=np.roll(psi, shift)), seq, B.rolled(shift))
    om, omr = omega_set(ev, 0), omega_set(evr, 0)
    np.testing.assert_array_equal(np.sort((om.points + shift) % M), omr.points)
    assert diameter(om) == diameter(omr)
    sm, smr = shock_map(ev, 0), shock_map(evr, 0)
    np.testing.assert_array_equal(np.roll((sm.map + shift) % M, shift), smr.map)
    np.testing.assert_array_equal(np.roll(sm.kind, shift), smr.kind)


def test_delta_basis_is_identity():
    B = delta_basis(5)
    np.testing.assert_array_equal(B.values, np.eye(5))
