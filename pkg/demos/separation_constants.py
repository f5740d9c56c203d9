"""From a separation certificate to the (astronomical) proof constants.

Run:  python demos/separation_constants.py
"""

from minlab import experiments as ex
from minlab.forcing import Distribution, check_embedding, parse_basis

basis = parse_basis("fourier:1c,1s", 256)
print("embedding check:", check_embedding(basis))

cert = ex.separation_check(basis, ex.auto_candidates(basis))
print("maxima x_i:", cert.x.round(4).tolist())
print("arcs J_i:", [tuple(round(v, 4) for v in j) for j in cert.J])
print(f"alpha0 = {cert.alpha0:.4f}")

pc = ex.proof_constants(cert, basis)
print(f"C = {float(pc.C):.4f}, alpha = {float(pc.alpha):.3e}")
print(f"N' = {pc.N_prime}, N = {pc.N:.3e}")

# the small-potential event can only be sampled at user-chosen tolerances
for eps in (0.5, 0.2, 0.1):
    est = ex.event_probability(basis, Distribution("uniform", 1.0), eps, 1, 50_000)
    print(f"P(sup |F| <= {eps}) ~ {est.probability:.4f} +/- {est.half_width:.4f}")
