"""quasitwist: exact R-matrices, quasi-Hopf twists, and classical limits."""

__version__ = "0.1.0"
