"""Numerical laboratory for point perturbations of the Laplacian.

Explicit spectral backends (flat tori, round sphere), self-adjoint delta
couplings described by Lagrangian frames, secular-equation spectra, Green
combinations with window diagnostics, pointwise Weyl remainders, and
semiclassical phase-space reports.
"""

__version__ = "0.1.0"

from .backends import ManifoldSpec, PointSet, make_backend
from .errors import ConfigError, PointScatterError
from .frames import LagrangianFrame, frame_from_hermitian, isotropic_frame, trivial_frame

__all__ = [
    "ConfigError",
    "LagrangianFrame",
    "ManifoldSpec",
    "PointScatterError",
    "PointSet",
    "__version__",
    "frame_from_hermitian",
    "isotropic_frame",
    "make_backend",
    "trivial_frame",
]
