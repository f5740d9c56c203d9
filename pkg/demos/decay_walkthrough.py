"""Watch the set of minimizer positions shrink as the horizon grows.

Run:  python demos/decay_walkthrough.py [sigma]

Two regimes are shown.  Strong kicks (sigma = 1) squeeze Omega below one grid
cell within two or three kicks; weak kicks (sigma = 0.02) give a long,
clean exponential tail that the log-linear fit can use.
"""

import sys

from minlab import experiments as ex
from minlab.forcing import Distribution, KickSequence, parse_basis
from minlab.solver import SolverConfig

M = 256
basis = parse_basis("fourier:1c,1s", M)
horizons = range(1, 31)

sigmas = [float(a) for a in sys.argv[1:]] or [1.0, 0.02]
for sigma in sigmas:
    seq = KickSequence(0, Distribution("uniform", sigma), basis.K)
    series = ex.decay_experiment(SolverConfig(M), basis, seq, 100, horizons, ex.worker_count())
    print(f"\nsigma = {sigma}")
    print(" h   mean d(Omega)")
    for h, d in zip(series.horizons, series.mean):
        bar = "#" * int(40 * d)
        print(f"{h:2d}   {d:.3e}  {bar}")
        if d == 0:
            print("     (collapsed to one grid point)")
            break
    try:
        fit = ex.fit_lambda(series)
        print(f"fit: lambda = {fit.lambda_hat:.3f}, C = {fit.C_hat:.3f}, r^2 = {fit.r_squared:.3f}")
        print(f"max over samples of d * exp(lambda h / 2): {ex.scaled_diameter_bound(series, fit.lambda_hat):.3f}")
    except ex.FitError as exc:
        print(f"no fit: {exc}")
