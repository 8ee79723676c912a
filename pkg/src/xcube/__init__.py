"""X-cube fracton model, its plaquette-Ising dual, and the tools to probe the
transition between them (exact enumeration at small L, Metropolis beyond)."""

from xcube.lattice import Axis, LatticeGeometry, build_geometry

__version__ = "0.1.0"

__all__ = ["Axis", "LatticeGeometry", "build_geometry", "__version__"]
