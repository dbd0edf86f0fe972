"""Eigenvalue counts for Schrodinger operators with two-scale radial potentials."""
