"""Orthotropic p-Laplacian Steklov eigenvalues on convex planar domains."""

__version__ = "0.1.0"
