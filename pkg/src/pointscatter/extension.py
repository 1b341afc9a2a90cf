"""Perturbed operators: Green matrix, coupling matrix, secular equation, resolvent.

The perturbation of the Laplacian by delta potentials at points Q, encoded by a
Lagrangian frame (C, S), is resolved entirely through the N x N matrix

    G(eta)_{q,p} = regularized Green function column values,

whose off-diagonal entries are the shell sums  sum_lambda Z_lambda^q(p) / (lambda^2 - eta)
and whose diagonal is the renormalized series

    sum_lambda Z_lambda^q(q) * ( 1/(lambda^2 - eta)  -  lambda^2/(lambda^4 + 1) ),

absolutely convergent for d <= 3.  (Any other renormalization convention shifts
the diagonal by an eta-independent constant; that shift is absorbed into the
frame and never affects convention-independent outputs.)

New eigenvalues are the roots of det(C - G(eta) S) inside the spectral gaps,
and the coupling matrix A(eta) = S (C - G(eta) S)^{-1} drives the rank-N
resolvent correction.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad
from scipy.optimize import brentq, minimize_scalar

from .backends import as_points
from .errors import PoleError, SecularSingularError
from .modes import green_mode_coefficients

POLE_GUARD = 1e-8
COND_LIMIT = 1e12
SINGULAR_REL = 1e-10
ROOT_MERGE_REL = 1e-9


class RootScanWarning(UserWarning):
    """A spectral gap produced an unexpected root count; the grid may be too coarse."""


@dataclass
class GreenMatrix:
    eta: float
    entries: np.ndarray      # (N, N) real symmetric
    cutoff: float            # lambda truncation of the shell sums
    tail_bound: float        # entries are stable under cutoff doubling within this

    @property
    def N(self):
        return self.entries.shape[0]


@dataclass
class CouplingMatrix:
    eta: float
    matrix: np.ndarray       # (N, N) complex; Hermitian for real eta

    def hermiticity_defect(self):
        return float(np.linalg.norm(self.matrix - self.matrix.conj().T))


@dataclass
class SecularRoot:
    eta: float
    residual: float          # |det| at the root
    gap: tuple               # (left, right) bounding lambda^2 values (inf-free interior gaps)


def _table_for_nmax(backend, n_max):
    return backend.shell_table(math.sqrt(n_max + 0.5))


def _cesaro_weights(n_int, lo, hi):
    """Weights realizing the average of partial sums over integer cutoffs in (lo, hi]."""
    nxt = np.append(n_int[1:], hi + 1)
    a = np.maximum(n_int, lo + 1)
    b = np.minimum(nxt - 1, hi)
    w = np.maximum(0, b - a + 1).astype(float)
    tot = w.sum()
    if tot <= 0:
        raise ValueError("empty averaging window")
    return w / tot


class GreenAssembler:
    """Shared per-(backend, Q, cutoff) state for evaluating G(eta) at many eta.

    Off-diagonal entries are conditionally convergent and are estimated by
    averaging the partial sums over a range of cutoffs; two averaging windows
    (the last and the previous quarter of the cutoff range) give independent
    tail estimates whose disagreement is the reported error.  The diagonal is
    summed directly and completed with the integral of the smooth Weyl density
    against the renormalized weight over (cutoff, infinity).
    """

    def __init__(self, backend, Q, n_max):
        self.backend = backend
        self.Q = as_points(backend, Q)
        self.n_max = int(n_max)
        table = _table_for_nmax(backend, self.n_max)
        self.table = table
        self.n_int = table.lam_sq.astype(np.int64)
        self.n = table.lam_sq.astype(np.float64)
        self.diag = backend.diag_values(table)
        self.renorm = self.n / (self.n * self.n + 1.0)
        self.renorm_total = float(self.diag @ self.renorm)
        self.w_last = _cesaro_weights(self.n_int, 3 * self.n_max // 4, self.n_max)
        self.w_prev = _cesaro_weights(self.n_int, self.n_max // 2, 3 * self.n_max // 4)
        self.half_mask = self.n_int <= self.n_max // 2
        self.renorm_half = float(self.diag[self.half_mask] @ self.renorm[self.half_mask])
        self.w_last_half = _cesaro_weights(self.n_int[self.half_mask],
                                           3 * (self.n_max // 2) // 4, self.n_max // 2)
        N = len(self.Q)
        self.pair = {}
        for i in range(N):
            for j in range(i + 1, N):
                self.pair[(i, j)] = backend.pair_values(table, self.Q[i], self.Q[j])
        kind = backend.spec.kind
        self._constant_density = kind in ("torus2", "sphere2")
        self._rho0 = float(backend.mean_level_density(float(self.n_max)))

    # -- tails ---------------------------------------------------------------

    def _smooth_diag_tail(self, eta, T=None):
        """integral_T^inf rho(t) [1/(t-eta) - t/(t^2+1)] dt for the mean density rho."""
        T = (self.n_max if T is None else T) + 0.5
        if self._constant_density:
            return self._rho0 * math.log(math.sqrt(T * T + 1.0) / (T - eta))
        rho = self.backend.mean_level_density
        val, _ = quad(lambda t: rho(t) * (1.0 / (t - eta) - t / (t * t + 1.0)),
                      T, np.inf, limit=200)
        return val

    # -- guards --------------------------------------------------------------

    def pole_distance(self, eta):
        if len(self.n) == 0:
            return math.inf
        return float(np.min(np.abs(self.n - eta)))

    def check_pole(self, eta):
        dist = self.pole_distance(eta)
        if dist < POLE_GUARD:
            idx = int(np.argmin(np.abs(self.n - eta)))
            raise PoleError(eta, self.n[idx])

    # -- entries -------------------------------------------------------------

    def diag_value(self, eta):
        inv = 1.0 / (self.n - eta)
        return float(self.diag @ inv) - self.renorm_total + self._smooth_diag_tail(eta)

    def diag_err(self, eta):
        inv = 1.0 / (self.n - eta)
        full = float(self.diag @ inv) - self.renorm_total + self._smooth_diag_tail(eta)
        m = self.half_mask
        half = (float(self.diag[m] @ inv[m]) - self.renorm_half
                + self._smooth_diag_tail(eta, T=self.n_max // 2))
        return abs(full - half)

    def offdiag_value(self, i, j, eta, with_err=False):
        key = (i, j) if i < j else (j, i)
        ps = np.cumsum(self.pair[key] / (self.n - eta))
        e1 = float(self.w_last @ ps)
        if not with_err:
            return e1
        e2 = float(self.w_prev @ ps)
        return e1, abs(e1 - e2)

    def matrix(self, eta):
        N = len(self.Q)
        g = np.empty((N, N))
        dv = self.diag_value(eta)
        for i in range(N):
            g[i, i] = dv
        for (i, j) in self.pair:
            g[i, j] = g[j, i] = self.offdiag_value(i, j, eta)
        return g

    def matrix_with_err(self, eta):
        N = len(self.Q)
        g = np.empty((N, N))
        err = self.diag_err(eta)
        for i in range(N):
            g[i, i] = self.diag_value(eta)
        for (i, j) in self.pair:
            v, e = self.offdiag_value(i, j, eta, with_err=True)
            g[i, j] = g[j, i] = v
            err = max(err, e)
        return g, err

    def secular_matrix(self, frame, eta):
        return frame.C - self.matrix(eta) @ frame.S

    def secular_det(self, frame, eta):
        return complex(np.linalg.det(self.secular_matrix(frame, eta)))


def default_cutoff(eta):
    """Series truncation in lambda^2 units used when none is requested."""
    return max(1024, int(4.0 * (abs(eta) + 1.0)) + 16)


def green_matrix(backend, Q, eta, tol=1e-8, n_max=None, max_n=1 << 22):
    """G(eta) with entries stable under cutoff doubling within the reported bound."""
    eta = float(eta)
    n_max = default_cutoff(eta) if n_max is None else int(n_max)
    asm = GreenAssembler(backend, Q, n_max)
    asm.check_pole(eta)
    entries, err = asm.matrix_with_err(eta)
    while err > tol and 2 * asm.n_max <= max_n:
        bigger = GreenAssembler(backend, Q, 2 * asm.n_max)
        new_entries, new_err = bigger.matrix_with_err(eta)
        err = max(new_err, float(np.max(np.abs(new_entries - entries))))
        entries, asm = new_entries, bigger
        if new_err <= tol:
            err = new_err
            break
    return GreenMatrix(eta, entries, math.sqrt(asm.n_max), err)


def coupling_matrix(frame, backend, Q, eta, green=None, tol=1e-8):
    """A(eta) = S (C - G(eta) S)^{-1}; Hermitian for real eta, frame-choice invariant."""
    if green is None:
        green = green_matrix(backend, Q, eta, tol=tol)
    M = frame.C - green.entries @ frame.S
    sv = np.linalg.svd(M, compute_uv=False)
    # natural size of M absent cancellation; cond alone is blind to the 1x1 case
    scale = (np.linalg.norm(frame.C, 2)
             + np.linalg.norm(green.entries, 2) * np.linalg.norm(frame.S, 2))
    if sv[-1] <= SINGULAR_REL * max(scale, 1e-300) or sv[0] > COND_LIMIT * sv[-1]:
        raise SecularSingularError(
            f"secular matrix at eta={eta!r} is singular: eta is a perturbed eigenvalue"
        )
    return CouplingMatrix(green.eta, frame.S @ np.linalg.inv(M))


def secular_det(frame, backend, Q, eta, green=None, tol=1e-8):
    if green is None:
        green = green_matrix(backend, Q, eta, tol=tol)
    return complex(np.linalg.det(frame.C - green.entries @ frame.S))


# -- root scan ----------------------------------------------------------------


def _gap_segments(n_occ, a, b):
    """Open segments of (a, b) free of eigenvalues, with gap metadata."""
    segs = []
    inside = n_occ[(n_occ >= a - 1e-12) & (n_occ <= b + 1e-12)]
    marks = sorted(set(float(x) for x in inside))
    edges = [a] + marks + [b]
    for lo, hi in zip(edges[:-1], edges[1:]):
        if hi - lo > 2e-6:
            complete = lo in marks and hi in marks
            segs.append((lo, hi, complete))
    return segs


def _chebyshev_grid(lo, hi, m):
    mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
    theta = np.linspace(math.pi, 0.0, m)
    return mid + half * np.cos(theta)


def find_new_eigenvalues(frame, backend, Q, interval, grid=41, n_max=None,
                         refine_rel=1e-13, accept_factor=1e-8, threads=1):
    """All roots of the secular determinant with eta in `interval` (lambda^2 units).

    Scans every eigenvalue-free segment on a Chebyshev grid (denser near the
    poles at the gap ends), brackets sign changes of the real determinant for
    real frames, or polishes local minima of |det| for complex ones, and
    bisects/refines to relative accuracy `refine_rel`.  Roots closer than
    ROOT_MERGE_REL (relatively) are merged.  Gaps whose root count is not the
    generic one emit a RootScanWarning.
    """
    a, b = float(interval[0]), float(interval[1])
    if not a < b:
        raise ValueError("empty search interval")
    if n_max is None:
        n_max = max(default_cutoff(b), int(b) + 2048)
    asm = GreenAssembler(backend, Q, n_max)
    margin = max(1e-6, POLE_GUARD * 10.0)
    real_path = frame.is_real

    def det_real(eta):
        return asm.secular_det(frame, eta).real

    def det_abs(eta):
        return abs(asm.secular_det(frame, eta))

    def scan_segment(seg):
        lo, hi, complete = seg
        glo, ghi = lo + margin, hi - margin
        if ghi <= glo:
            return []
        xs = _chebyshev_grid(glo, ghi, grid)
        found = []
        if real_path:
            vals = np.array([det_real(x) for x in xs])
            for k in range(len(xs) - 1):
                if vals[k] == 0.0:
                    found.append((xs[k], 0.0))
                elif vals[k] * vals[k + 1] < 0.0:
                    root = brentq(det_real, xs[k], xs[k + 1],
                                  xtol=refine_rel * max(1.0, abs(hi)), rtol=8.9e-16,
                                  maxiter=200)
                    found.append((root, abs(asm.secular_det(frame, root))))
        else:
            vals = np.array([det_abs(x) for x in xs])
            scale = max(float(np.median(vals)), 1e-300)
            for k in range(1, len(xs) - 1):
                if vals[k] <= vals[k - 1] and vals[k] <= vals[k + 1]:
                    # |det|^2 is smooth at a simple root, so parabolic steps work
                    res = minimize_scalar(lambda x: det_abs(x) ** 2,
                                          bounds=(xs[k - 1], xs[k + 1]),
                                          method="bounded",
                                          options={"xatol": refine_rel * max(1.0, abs(hi))})
                    x0 = float(res.x)
                    # polish along the local phase direction, where det crosses
                    # zero linearly and bisection applies
                    delta = 1e-7 * max(1.0, abs(x0))
                    dp = asm.secular_det(frame, x0 + delta)
                    dm = asm.secular_det(frame, x0 - delta)
                    ph = dp - dm
                    if abs(ph) > 0:
                        ph /= abs(ph)

                        def aligned(t):
                            return (np.conj(ph) * asm.secular_det(frame, t)).real

                        fa, fb = aligned(x0 - delta), aligned(x0 + delta)
                        if fa * fb < 0:
                            x0 = brentq(aligned, x0 - delta, x0 + delta,
                                        xtol=refine_rel * max(1.0, abs(hi)),
                                        rtol=8.9e-16, maxiter=200)
                    resid = det_abs(x0)
                    if resid <= accept_factor * scale:
                        found.append((float(x0), float(resid)))
        return [(r, resid, (lo, hi, complete)) for r, resid in found]

    segments = _gap_segments(asm.n_int, a, b)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            per_seg = list(ex.map(scan_segment, segments))
    else:
        per_seg = [scan_segment(s) for s in segments]

    roots = []
    for seg, hits in zip(segments, per_seg):
        merged = []
        for r, resid, gap in sorted(hits):
            if merged and abs(r - merged[-1][0]) <= ROOT_MERGE_REL * max(1.0, abs(r)):
                if resid < merged[-1][1]:
                    merged[-1] = (r, resid, gap)
            else:
                merged.append((r, resid, gap))
        if seg[2] and len(merged) > len(Q if not hasattr(Q, "coords") else Q.coords):
            warnings.warn(
                f"gap ({seg[0]}, {seg[1]}) produced {len(merged)} roots; grid may be too coarse",
                RootScanWarning,
            )
        roots.extend(SecularRoot(r, resid, (gap[0], gap[1])) for r, resid, gap in merged)
    roots.sort(key=lambda s: s.eta)
    return roots


def polish_root(asm, frame, eta, lo=None, hi=None, refine_rel=1e-12):
    """Re-refine a secular root against a (possibly finer) Green truncation.

    A root found at one cutoff sits slightly off the determinant zero of
    another; this locates the nearby sign change of the phase-aligned
    determinant and bisects it.  Returns eta unchanged if no bracket is found
    within the allowed interval.
    """
    span = max(1e-9, 1e-9 * abs(eta))
    cap_lo = eta - (eta - lo) / 2 if lo is not None else eta - 0.1 * max(1.0, abs(eta))
    cap_hi = eta + (hi - eta) / 2 if hi is not None else eta + 0.1 * max(1.0, abs(eta))
    d0 = asm.secular_det(frame, eta)
    dp = asm.secular_det(frame, min(eta + span, cap_hi))
    ph = dp - d0
    if abs(ph) == 0:
        return eta
    ph /= abs(ph)

    def aligned(t):
        return (np.conj(ph) * asm.secular_det(frame, t)).real

    while span < (cap_hi - cap_lo):
        a = max(eta - span, cap_lo)
        b = min(eta + span, cap_hi)
        fa, fb = aligned(a), aligned(b)
        if fa == 0.0:
            return a
        if fb == 0.0:
            return b
        if fa * fb < 0:
            return brentq(aligned, a, b, xtol=refine_rel * max(1.0, abs(eta)),
                          rtol=8.9e-16, maxiter=200)
        span *= 8.0
    return eta


# -- resolvent and energy pairing ---------------------------------------------


@dataclass
class PerturbedFunction:
    """u + sum_q beta_q G_eta^q: a finite mode part plus an explicit Green tail."""

    smooth: object           # ModeExpansion
    beta: np.ndarray
    eta: float
    Q: object                # PointSet
    green: GreenMatrix
    coupling: CouplingMatrix

    def boundary_coordinates(self):
        """(a_plus, a_minus): values and delta-coefficients at the points Q."""
        u_Q = np.asarray(self.smooth.evaluate(self.Q.coords), dtype=complex)
        return self.green.entries @ self.beta + u_Q, self.beta

    def frame_membership_residual(self, frame):
        """Relative distance of the boundary coordinates from the frame's column space."""
        a_plus, a_minus = self.boundary_coordinates()
        rhs = np.concatenate([a_plus, a_minus])
        stack = frame.stacked()
        alpha = np.linalg.lstsq(stack, rhs, rcond=None)[0]
        denom = max(np.linalg.norm(rhs), 1e-300)
        return float(np.linalg.norm(stack @ alpha - rhs)) / denom

    def coefficients_on(self, ks):
        """Fourier coefficients of the full function at the given wavevectors."""
        ks = np.atleast_2d(np.asarray(ks, dtype=np.int64))
        tail = green_mode_coefficients(self.Q.coords, self.beta, self.eta, ks)
        out = np.array(tail, dtype=complex)
        idx = {tuple(k): i for i, k in enumerate(self.smooth.ks)}
        for row, k in enumerate(ks):
            i = idx.get(tuple(int(x) for x in k))
            if i is not None:
                out[row] += self.smooth.coeffs[i]
        return out


def resolvent_apply(frame, backend, Q, eta, u, green=None, tol=1e-8):
    """Image of u under the perturbed-resolvent correction at spectral parameter eta.

    The result is u itself plus the Green-tail combination with coefficients
    beta = A(eta) (u at Q); its boundary coordinates land in the frame's
    subspace, which is the defining property of the perturbed domain.
    """
    Q = as_points(backend, Q)
    if green is None:
        green = green_matrix(backend, Q, eta, tol=tol)
    coup = coupling_matrix(frame, backend, Q, eta, green=green)
    u_Q = np.asarray(u.evaluate(Q.coords), dtype=complex)
    beta = coup.matrix @ u_Q
    return PerturbedFunction(u, beta, float(eta), Q, green, coup)


def energy_pairing(frame, backend, Q, eta, u, green=None, tol=1e-8):
    """<u, (Delta - eta) u> plus the point-coupling correction sum.

    Equals <P u, (Delta_L - eta) P u> for the perturbed operator; the second
    code path for that equality lives in the tests via explicit coefficients.
    """
    Q = as_points(backend, Q)
    if green is None:
        green = green_matrix(backend, Q, eta, tol=tol)
    coup = coupling_matrix(frame, backend, Q, eta, green=green)
    u_Q = np.asarray(u.evaluate(Q.coords), dtype=complex)
    beta = coup.matrix @ u_Q
    bulk = complex(np.sum((u.lam_sq() - eta) * np.abs(u.coeffs) ** 2))
    return bulk + complex(np.vdot(beta, u_Q))
