"""
Jump-corrected stencil rows
===========================

A planar interface cuts one arm of a compute cell. When a piecewise-linear
function with the prescribed jumps is substituted, the row's residual is zero
to rounding. That makes it a sharp test of the sign and scaling of each jump
term.
"""

import numpy as np

from neuroboot import kernel, oracles
from neuroboot.geometry import AnalyticLevelSet
from neuroboot.kernel import ProblemSpec, assemble

# Interface at x = 0.1. Coefficients 1 and 3, jumps [u] = 2 and [mu du/dn] = -1.
problem = ProblemSpec.from_strings(
    AnalyticLevelSet("x-0.1"),
    mu_minus="1", mu_plus="3", k_minus="0", k_plus="0",
    f_minus="0", f_plus="0", alpha="2", beta="-1", g="0",
)
row = assemble(problem, (0.0, 0.0, 0.0), 0.25)
for point, side, coef in row.terms:
    print(f"{str(point):>22} {side.name:>5} {coef:10.4f}")
print("rhs", row.rhs, "diagonal", row.diagonal)

# Exact solution: slope 0.7 on the minus side; the plus slope follows from the flux jump.
um = lambda x: 0.3 + 0.7 * x  # noqa: E731
up = lambda x: um(0.1) + 2 + (-1 + 0.7) / 3 * (x - 0.1)  # noqa: E731
vals = [up(p[0]) if side.name == "PLUS" else um(p[0]) for p, side, _ in row.terms]
print("raw residual:", np.dot([t[2] for t in row.terms], vals) - row.rhs)

# The full suite covers every combination of theta, mu and jump values.
print(oracles.jump_exactness().line())

# Flipping the jump sign breaks it, which is why the oracle exists.
kernel.JUMP_CORRECTION_SIGN = 1.0
print(oracles.jump_exactness().line())
kernel.JUMP_CORRECTION_SIGN = -1.0
