"""
Expressions and level sets
==========================

Problem data are plain strings in x, y and z. This script parses a few,
evaluates them on arrays of points, and locates interface crossings on a
sphere, first analytically and then from a sampled grid.
"""

import numpy as np

from neuroboot.expr import parse, to_string
from neuroboot.geometry import SampledLevelSet, sphere

# Parse a diffusion coefficient and evaluate it at one point and on a batch.
mu = parse("y^2*log(x+2)+4")
print("mu(0,0,0) =", mu((0.0, 0.0, 0.0)))
pts = np.random.default_rng(0).uniform(-1, 1, size=(5, 3))
print("mu on a batch:", mu(pts))

# The printer keeps only the parentheses it needs.
print(to_string(parse("((x+1))*(y-(2))")))

# A sphere of radius 0.5. Negative phi is the minus side, and phi == 0 counts as minus too.
ls = sphere(0.5)
print("sides:", ls.side(np.array([[0, 0, 0], [0.9, 0, 0], [0.5, 0, 0]])))

# Where does the segment from (0.4,0,0) to (0.6,0,0) cross the interface?
c = ls.find_crossing((0.4, 0, 0), (0.6, 0, 0))
print(f"theta={c.theta:.6f} location={c.location} normal={c.normal}")

# The same geometry sampled on a 32^3 grid with trilinear interpolation.
sampled = SampledLevelSet.from_level_set(ls, 32)
c2 = sampled.find_crossing((0.4, 0, 0), (0.6, 0, 0))
print(f"sampled theta={c2.theta:.6f} (hc^2 = {sampled.hc**2:.2e})")
