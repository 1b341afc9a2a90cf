"""Exception taxonomy shared across the package."""


class PointScatterError(Exception):
    """Base class for all package-specific errors."""


class FrameValidationError(PointScatterError):
    """Raised when a candidate boundary frame fails the Lagrangian identities."""

    def __init__(self, ortho_residual, commute_residual, tol):
        self.ortho_residual = float(ortho_residual)
        self.commute_residual = float(commute_residual)
        self.tol = float(tol)
        super().__init__(
            f"not a Lagrangian frame: ||C*C+S*S-I||={self.ortho_residual:.3e}, "
            f"||C*S-S*C||={self.commute_residual:.3e} (tol {self.tol:.1e})"
        )


class PoleError(PointScatterError):
    """Spectral parameter too close to an eigenvalue of the unperturbed operator."""

    def __init__(self, eta, nearest_lam_sq):
        self.eta = float(eta)
        self.nearest_lam_sq = float(nearest_lam_sq)
        super().__init__(
            f"eta={self.eta!r} is within the pole guard of the eigenvalue "
            f"lambda^2={self.nearest_lam_sq!r}"
        )


class SecularSingularError(PointScatterError):
    """The secular matrix is numerically singular: eta is (close to) a perturbed eigenvalue."""


class ResourceLimitError(PointScatterError):
    """An enumeration or series request exceeds the configured budget."""

    def __init__(self, needed, budget, what="lattice modes"):
        self.needed = int(needed)
        self.budget = int(budget)
        super().__init__(
            f"request needs about {self.needed} {what}, budget is {self.budget}; "
            "raise the budget or lower the cutoff"
        )


class InsufficientCutoffError(PointScatterError):
    """A truncation cutoff is too small for the requested window or parameter."""


class ZeroMassError(PointScatterError):
    """A ratio over an empty or zero-mass spectral window is undefined."""


class UnsupportedBackendError(PointScatterError):
    """Operation not defined for this manifold backend."""


class ConfigError(PointScatterError):
    """Invalid run configuration; carries the offending field path."""

    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")
