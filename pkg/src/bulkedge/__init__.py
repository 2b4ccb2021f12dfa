"""Magnetized lattice fermions in finite boxes: exact diagonalization, free
fermions, dual-edge currents and the thermodynamics of edge and bulk."""

__version__ = "0.1.0"
