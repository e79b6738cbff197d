"""Decorated-tree renormalisation machinery for flow-equation SPDE analysis.

Exact-rational tree combinatorics (grafts, cutting and extraction coproducts,
localisation), elementary differentials, symbolic renormalised evaluation maps,
an identity verifier, and a small discrete-torus numeric back end.
"""

__version__ = "0.1.0"
