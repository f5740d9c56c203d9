"""Print the shock map of one forcing realization at a few horizons.

Run:  python demos/shock_map_tour.py

Each row shows, for a point y at time s = 0, which terminal the map S sends
it to.  Runs of 'm' are points reached by minimizers; 's' marks points swept
into a shock.  As the horizon grows almost everything becomes 's' and all
points drain into a single terminal.
"""

import numpy as np

from minlab.forcing import Distribution, KickSequence, parse_basis
from minlab.omega import diameter, omega_set, shock_map
from minlab.solver import SolverConfig, evolve, truncate

M = 64
basis = parse_basis("fourier:1c,1s", M)
seq = KickSequence(3, Distribution("uniform", 0.3), basis.K)
ev = evolve(SolverConfig(M, r=-1, t=8), seq, basis)

for h in (1, 2, 4, 8):
    part = truncate(ev, h)
    om = omega_set(part, 0)
    sm = shock_map(part, 0)
    kinds = "".join("m" if k == "minimizer" else "s" for k in sm.kind)
    print(f"t - s = {h}:  |Omega| = {len(om):2d}  d = {diameter(om):.3f}  monotone = {sm.is_monotone()}")
    print(f"   {kinds}")
    print(f"   terminals hit: {np.unique(sm.map).tolist()}")
