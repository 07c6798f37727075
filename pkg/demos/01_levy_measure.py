"""Tour of the truncated jump measure: density, moments, rates, sampling.

The measure is kappa(z) dz with kappa(z) = chi(|z|) |z|^(-d-alpha): a stable
profile of order alpha, flat up to delta/2 and smoothly truncated at delta.
Everything the simulator consumes (rates, truncated moments, samples) comes
from this one object, so Monte-Carlo output can always be checked against
radial quadrature of the same measure.
"""

import numpy as np

from levylab import levy
from levylab.flow import path_rng

model = levy.LevyModel(dim=1, alpha=1.0, delta=1.0, trunc_low=0.1)
print("model:", model)

print("\nplateau density at z = 0.1:", levy.density(model, np.array([0.1])))
print("outside the support, z = 2:", levy.density(model, np.array([2.0])))

print("\nsecond moment up to delta/2:",
      levy.small_jump_moment(model, 2.0, 0.5), "(analytic: 1.0)")
for eps in (1e-2, 1e-3, 1e-4):
    scaled = eps ** (model.alpha - 2) * levy.small_jump_moment(model, 2.0, eps)
    print(f"order-condition constant at eps={eps:g}: {scaled:.6f}")

hard = levy.LevyModel(dim=1, alpha=1.0, delta=1.0, trunc_low=0.1,
                      cutoff=levy.HardTruncation(1.0, 0.5))
print("\njump rate, hard cutoff at 1/2:", levy.jump_rate(hard),
      "(analytic: 16)")
print("jump rate, smooth cutoff:", levy.jump_rate(model))

print("\nplateau median radius:", levy.plateau_inverse_cdf(model, 0.5),
      "(closed form: 1/6)")

rng = path_rng(seed=7, index=0)
n = 200_000
zs = levy.sample_jumps(model, rng, n)
lam = levy.jump_rate(model)
mom = (levy.small_jump_moment(model, 2.0, 1.0)
       - levy.small_jump_moment(model, 2.0, 0.1))
print(f"\nempirical E|z|^2 over {n} draws: {(zs**2).sum(1).mean():.6f}")
print(f"quadrature value:               {mom / lam:.6f}")

w = levy.CubicWeight(1.0)
print("\ncubic weight on its plateau, w(0.2) =", w(np.array([0.2])),
      "(= 0.2^3)")
print("beyond delta/2, w(0.6) =", w(np.array([0.6])))
