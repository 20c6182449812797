"""Polarization-entangled photon pairs from birefringent SFWM in a fiber Sagnac loop.

Phase matching, path-imbalance overlap model, two-qubit metrics, simulated
coincidence tomography with maximum-likelihood reconstruction, and visibility
fringes.
"""

__version__ = "0.1.0"
