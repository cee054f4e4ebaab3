"""bklab: a mechanism-design laboratory.

Auctions (second price with lazy reserves, Myerson, VCG variants, a
single-parameter procedure with critical payments), Lagrangian-duality revenue
benchmarks over discrete type spaces, an exact revenue LP with a built-in
simplex solver, downward-closed set systems and matroids, and a seeded Monte
Carlo engine for competition-complexity experiments.
"""

__version__ = "0.1.0"
