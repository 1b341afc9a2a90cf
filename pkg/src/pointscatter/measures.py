"""Phase-space pairings of torus functions at a finite frequency scale.

A symbol e^{im.x} chi(|xi|) acts on a Fourier expansion by the exact midpoint
rule: the coefficient at k contributes c_k * chi(h|k + m/2|) to the mode
k + m.  For the quadratic Hamiltonian H = |xi|^2 this makes the calculus
exact, not asymptotic: the scaled commutator of a quantized symbol with h^2
times the Laplacian IS the quantization of the bracket symbol
2i (m . xi) e^{im.x} chi(|xi|), with no remainder.  The diagnostics built on
top measure, per function, how much coefficient mass escapes the unit
frequency shell and how far the function is from commuting with the flow.

Everything in this module is torus-only.  Sphere inputs are rejected rather
than approximated; mode expansions are intrinsically toral, and scans check
their backend explicitly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .backends import DEFAULT_MODE_BUDGET, as_points, n_le
from .errors import ResourceLimitError, UnsupportedBackendError, ZeroMassError
from .extension import find_new_eigenvalues
from .green import GreenCombination, _shell_arrays, _window_mask, combination_at_root
from .modes import ModeExpansion, green_mode_coefficients

_KINDS = ("plain", "energy", "bracket")


@dataclass(frozen=True)
class RadialBump:
    """Smooth compactly supported profile, equal to 1 at the center.

    chi(s) = exp(1 - 1/(1 - u^2)) with u = (s - center)/width for |u| < 1,
    zero outside; values lie in [0, 1].
    """

    center: float = 1.0
    width: float = 0.5

    def __call__(self, s):
        u = (np.asarray(s, dtype=float) - self.center) / self.width
        out = np.zeros_like(u)
        inside = np.abs(u) < 1.0
        z = u[inside]
        out[inside] = np.exp(1.0 - 1.0 / (1.0 - z * z))
        return out

    @property
    def id(self):
        return f"bump({self.center:g},{self.width:g})"


@dataclass(frozen=True)
class Symbol:
    """a(x, xi) = e^{im.x} f(|xi|, xi) with f selected by `kind`.

    kind "plain" is the bare radial profile chi; "energy" multiplies it by
    (|xi|^2 - 1); "bracket" is the flow derivative 2i (m . xi) chi(|xi|).
    The family is closed under the two derived forms via the methods below.
    """

    m: tuple
    chi: RadialBump = field(default_factory=RadialBump)
    kind: str = "plain"

    def __post_init__(self):
        object.__setattr__(self, "m", tuple(int(x) for x in self.m))
        if self.kind not in _KINDS:
            raise ValueError(f"unknown symbol kind {self.kind!r}")

    def multiplier(self, h, mid):
        """Mode factors at midpoints `mid` = k + m/2, shape (M, d) -> (M,)."""
        s = h * np.linalg.norm(np.atleast_2d(mid), axis=-1)
        base = self.chi(s)
        if self.kind == "plain":
            return base.astype(complex)
        if self.kind == "energy":
            return ((s * s - 1.0) * base).astype(complex)
        mv = np.atleast_2d(mid) @ np.asarray(self.m, dtype=float)
        return 2j * h * mv * base

    def times_energy_defect(self):
        return replace(self, kind="energy")

    def poisson_with_hamiltonian(self):
        return replace(self, kind="bracket")

    @property
    def id(self):
        return f"m={self.m}:{self.chi.id}:{self.kind}"


def default_symbol_family(d, max_norm=3, chi=None):
    """Plain symbols for every m in Z^d with |m| <= max_norm, sorted."""
    chi = chi if chi is not None else RadialBump()
    r = int(max_norm)
    ms = []
    grids = np.meshgrid(*[np.arange(-r, r + 1)] * d, indexing="ij")
    for m in sorted(map(tuple, np.stack([g.ravel() for g in grids], axis=1).tolist())):
        if sum(x * x for x in m) <= max_norm * max_norm:
            ms.append(m)
    return [Symbol(m, chi) for m in ms]


def weyl_quantize_apply(h, a, u):
    """Apply the quantized symbol to a finite mode expansion.  Exact."""
    if h <= 0:
        raise ValueError("frequency scale h must be positive")
    m = np.asarray(a.m, dtype=np.int64)
    if u.d != len(m):
        raise ValueError(f"symbol is {len(m)}-dimensional, expansion is {u.d}")
    mid = u.ks.astype(float) + 0.5 * m
    return ModeExpansion(u.ks + m, a.multiplier(h, mid) * u.coeffs)


def wigner_pairing(h, a, u):
    """<u, Op_h(a) u> / ||u||^2 for a mode expansion or Green combination."""
    return _pairer_for(u).pairing(h, a)


def commutator_identity_defect(h, a, u):
    """Largest coefficient of (i/h)[Op_h(H), Op_h(a)]u - Op_h({a,H})u.

    H = |xi|^2 quantizes to the multiplier (h|k|)^2, so both sides live on
    the shifted modes of u and the defect is pure rounding; anything above
    that means the quantization rule and the bracket disagree.
    """
    Au = weyl_quantize_apply(h, a, u)
    H_Au = (h * h) * Au.lam_sq() * Au.coeffs
    A_Hu = weyl_quantize_apply(h, a, ModeExpansion(u.ks, (h * h) * u.lam_sq() * u.coeffs))
    lhs = (1j / h) * (H_Au - A_Hu.coeffs)
    rhs = weyl_quantize_apply(h, a.poisson_with_hamiltonian(), u)
    return float(np.max(np.abs(lhs - rhs.coeffs), initial=0.0))


# -- coefficient access for the two function representations ------------------


class _ModePairer:
    def __init__(self, u):
        self.u = u
        self.nsq = u.norm_sq()
        if self.nsq <= 0:
            raise ZeroMassError("cannot pair the zero expansion")

    def pairing(self, h, a):
        return self.u.inner(weyl_quantize_apply(h, a, self.u)) / self.nsq


class _DensePairer:
    """Green combination coefficients on the full lattice block [-K, K]^d.

    The expansion of a combination is supported on every lattice mode up to
    its cutoff, so shifted-mode pairings need random access; a dense block
    makes each pairing one strided multiply.
    """

    def __init__(self, g, budget=DEFAULT_MODE_BUDGET):
        backend = g.Q.backend
        if backend.spec.kind == "sphere2":
            raise UnsupportedBackendError("phase-space pairings are torus-only")
        d = backend.dimension
        K = int(math.floor(g.cutoff))
        side = 2 * K + 1
        if side ** d > budget:
            raise ResourceLimitError(side ** d, budget)
        grids = np.meshgrid(*[np.arange(-K, K + 1)] * d, indexing="ij")
        ks = np.stack([x.ravel() for x in grids], axis=1)
        n = np.sum(ks * ks, axis=1)
        sel = n <= n_le(g.cutoff)
        if g.drop_shell is not None:
            sel &= n != g.drop_shell
        if g.window is not None:
            sel &= _window_mask(n, g.window)
        c = np.zeros(side ** d, dtype=complex)
        c[sel] = green_mode_coefficients(g.Q.coords, g.beta, g.eta, ks[sel])
        self.d = d
        self.K = K
        self.C = c.reshape((side,) * d)
        self.nsq = float(np.sum(np.abs(c) ** 2))
        if self.nsq <= 0:
            raise ZeroMassError("combination has no modes under its cutoff")

    def pairing(self, h, a):
        K, d = self.K, self.d
        m = tuple(int(x) for x in a.m)
        if len(m) != d:
            raise ValueError(f"symbol is {len(m)}-dimensional, combination is {d}")
        src, dst, axes = [], [], []
        for i, mi in enumerate(m):
            lo = max(0, -mi)
            hi = min(2 * K, 2 * K - mi)
            if lo > hi:
                return 0.0 + 0.0j
            src.append(slice(lo, hi + 1))
            dst.append(slice(lo + mi, hi + mi + 1))
            axes.append(np.arange(lo - K, hi - K + 1, dtype=float) + 0.5 * mi)
        grids = np.meshgrid(*axes, indexing="ij")
        mid = np.stack([x.ravel() for x in grids], axis=1)
        fac = a.multiplier(h, mid).reshape(grids[0].shape)
        block = np.conj(self.C[tuple(dst)]) * fac * self.C[tuple(src)]
        return complex(np.sum(block)) / self.nsq


def _pairer_for(u):
    if isinstance(u, ModeExpansion) or hasattr(u, "coeffs"):
        return _ModePairer(u)
    if isinstance(u, GreenCombination):
        return _DensePairer(u)
    raise TypeError(f"cannot pair objects of type {type(u).__name__}")


# -- diagnostics ---------------------------------------------------------------


def support_defect(h, u, delta_grid):
    """Fraction of coefficient mass outside the unit shell, per delta.

    Returns [(delta, fraction with |h lambda - 1| > delta)], one entry per
    grid value.  Scale-invariant in u, so normalization is not required.
    """
    if h <= 0:
        raise ValueError("frequency scale h must be positive")
    lam, mass = _mass_profile(u)
    total = float(np.sum(mass))
    if total <= 0:
        raise ZeroMassError("function carries no coefficient mass")
    out = []
    for delta in delta_grid:
        if delta <= 0:
            raise ValueError("delta grid values must be positive")
        outside = float(np.sum(mass[np.abs(h * lam - 1.0) > delta]))
        out.append((float(delta), outside / total))
    return out


def _mass_profile(u):
    if isinstance(u, GreenCombination):
        backend = u.Q.backend
        if backend.spec.kind == "sphere2":
            raise UnsupportedBackendError("phase-space diagnostics are torus-only")
        n_int, W = _shell_arrays(backend, u.Q, u.beta, u.cutoff)
        keep = W > 0
        if u.drop_shell is not None:
            keep &= n_int != u.drop_shell
        if u.window is not None:
            keep &= _window_mask(n_int, u.window)
        n = n_int[keep].astype(float)
        return np.sqrt(n), W[keep] / (n - u.eta) ** 2
    return np.sqrt(u.lam_sq()), np.abs(u.coeffs) ** 2


def _worst_invariance(h, pairer, family):
    worst, worst_id = 0.0, None
    for a in family:
        bracket = a.poisson_with_hamiltonian()
        val = abs(pairer.pairing(h, bracket))
        if worst_id is None or val > worst:
            worst, worst_id = val, bracket.id
    return worst, worst_id


def invariance_defect(h, u, family):
    """max over the family of |<u, Op_h({a,H}) u>| / ||u||^2."""
    worst, _ = _worst_invariance(h, _pairer_for(u), family)
    return worst


@dataclass
class WignerReport:
    """Phase-space diagnostics of one function at one frequency scale."""

    eta_star: float
    h: float
    pairings: dict                 # symbol id -> normalized pairing value
    shell_concentration: dict      # delta -> fraction of mass inside the shell
    invariance_defect: float
    invariance_symbol: str | None = None   # id of the bracket attaining the max
    error: str | None = None


def wigner_report(h, u, family, delta_grid=(0.05, 0.1, 0.2), eta_star=None):
    """Assemble the full report for one function."""
    pairer = _pairer_for(u)
    pairings = {a.id: pairer.pairing(h, a) for a in family}
    conc = {d: 1.0 - frac for d, frac in support_defect(h, u, delta_grid)}
    inv, inv_id = _worst_invariance(h, pairer, family)
    return WignerReport(
        eta_star=float(eta_star) if eta_star is not None else 1.0 / h ** 2,
        h=float(h),
        pairings=pairings,
        shell_concentration=conc,
        invariance_defect=inv,
        invariance_symbol=inv_id,
    )


def measure_scan(backend, frame, Q, interval, family=None, delta_grid=(0.05, 0.1, 0.2),
                 **scan_kwargs):
    """Reports for every new eigenvalue in the interval, in eta order.

    Per-root failures become error rows instead of aborting the scan; an
    empty interval or a trivial frame produces an empty list.
    """
    if backend.spec.kind == "sphere2":
        raise UnsupportedBackendError("phase-space scans are torus-only")
    Q = as_points(backend, Q)
    if family is None:
        family = default_symbol_family(backend.dimension)
    reports = []
    for root in find_new_eigenvalues(frame, backend, Q, interval, **scan_kwargs):
        try:
            if root.eta <= 0:
                raise ZeroMassError("nonpositive spectral parameter has no frequency scale")
            h = 1.0 / math.sqrt(root.eta)
            g, _ = combination_at_root(frame, backend, Q, root)
            reports.append(wigner_report(h, g, family, delta_grid, eta_star=root.eta))
        except Exception as exc:  # noqa: BLE001 - aggregated per contract
            reports.append(WignerReport(
                eta_star=root.eta,
                h=float("nan") if root.eta <= 0 else 1.0 / math.sqrt(root.eta),
                pairings={},
                shell_concentration={},
                invariance_defect=float("nan"),
                error=f"{type(exc).__name__}: {exc}",
            ))
    return reports
