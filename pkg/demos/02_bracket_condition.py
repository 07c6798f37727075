"""Certifying the uniform spanning condition on a grid.

The kinetic benchmark (drift b = (x2, 0), noise only in x2) is the smallest
genuinely degenerate example: the jump direction field alone spans nothing
in x1, but one drift bracket rotates it there, so the spanning constant
jumps from 0 to 1 between depths 1 and 2.
"""

import numpy as np

from levylab import brackets, coeffs

kin = coeffs.kinetic()
grid = brackets.GridSpec(lo=(-2.0, -2.0), hi=(2.0, 2.0), shape=(9, 9))

for depth in (1, 2):
    rep = brackets.check_uh(brackets.bracket_chain(kin, depth), grid)
    print(f"depth {depth}: c0 = {rep.c0:.6f}, witness u = "
          f"{np.round(rep.witness_u, 3)}, sphere cross-check = "
          f"{rep.sphere_c0:.6f}")

print("\nbracket fields at x = (0.5, -1):")
chain = brackets.bracket_chain(kin, 2)
vals = brackets.evaluate_chain(chain, np.array([[0.5, -1.0]]))
print("B1 =\n", vals[0][0])
print("B2 =\n", vals[1][0])

# the two published recursions differ whenever grad b and B_j do not commute
gap = brackets.convention_gap(kin, 2, np.array([[0.5, -1.0]]))
print("\nconvention discrepancy |B2_left - B2_right| =", gap)
other = brackets.check_uh(brackets.bracket_chain(kin, 2, "B_NABLA_RIGHT"),
                          grid)
print("c0 at depth 2 under the transposed convention:", other.c0)

# a state-dependent d=1 example: degenerate at x = 0, restored at depth 2
sine = coeffs.sine1d()
grid1 = brackets.GridSpec(lo=(-3.0,), hi=(3.0,), shape=(61,))
rep = brackets.check_uh(brackets.bracket_chain(sine, 2), grid1)
print(f"\nsine system: c0 = {rep.c0:.6f} at witness x = {rep.witness_x}")
