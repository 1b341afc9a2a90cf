"""Green combinations, their L2 expansions, window projections, quasimode residuals.

A Green combination at semiclassical parameter h is sum_q beta_q G^q with
spectral parameter eta = h^{-2}; its L2 norm expands over eigenvalue shells as

    ||G||^2 = sum_n  W_n / (n - eta)^2,     W_n = || sum_q beta_q Z_n^q ||^2,

with W_n a Gram form in beta over the shell kernel.  Everything here is a pure
function of (backend, Q, beta, h, cutoff): the shell arrays are re-derived per
call from the backend's cached tables, so combinations stay immutable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .backends import PointSet, as_points
from .errors import InsufficientCutoffError, PoleError, ZeroMassError
from .extension import GreenAssembler, GreenMatrix, green_matrix, polish_root

COINCIDENT_REL = 1e-9     # |h^{-2} - n| below this counts as hitting the shell
ANNIHILATION_REL = 1e-14  # shell weight below this (relative) counts as annihilated


@dataclass
class SpectralWindow:
    center: float          # = h^{-1}
    half_width: float

    def __post_init__(self):
        if self.half_width <= 0:
            raise ValueError("window half-width must be positive")

    @property
    def lo(self):
        return self.center - self.half_width

    @property
    def hi(self):
        return self.center + self.half_width


@dataclass
class GreenCombination:
    h: float
    Q: PointSet
    beta: np.ndarray
    cutoff: float                  # lambda truncation of the shell expansion
    l2_norm: float | None = None
    window: SpectralWindow | None = None
    drop_shell: int | None = None  # coincident shell excluded from the sums

    @property
    def eta(self):
        return self.h ** -2


def default_combination_cutoff(h):
    # both tail regimes of the window splitting must be represented, with margin
    return 1.25 * max(4.0 / h, 1.0 / h + 50.0)


def _shell_arrays(backend, Q, beta, lam_cutoff):
    """Occupied (n, W_n) arrays for n = lambda^2 <= cutoff^2."""
    table = backend.shell_table(lam_cutoff)
    n = table.lam_sq.astype(np.float64)
    beta = np.asarray(beta, dtype=complex).ravel()
    W = np.zeros_like(n)
    for i in range(len(Q)):
        W += abs(beta[i]) ** 2 * backend.diag_values(table)
    for i in range(len(Q)):
        for j in range(i + 1, len(Q)):
            cross = 2.0 * (np.conj(beta[i]) * beta[j]).real
            W += cross * backend.pair_values(table, Q[i], Q[j])
    return table.lam_sq, np.maximum(W, 0.0)


def _window_mask(n_int, window):
    lam = np.sqrt(n_int.astype(np.float64))
    return (lam > window.lo) & (lam < window.hi)


def _tail_envelope(backend, Q, beta, lam_cutoff, eta):
    """Envelope bound on the expansion mass beyond the cutoff.

    W_n <= N [sum |beta|^2] mult_n / vol pointwise (Gram operator norm), so the
    tail is at most that factor times the smooth density integral; doubled to
    absorb density fluctuation.
    """
    s = float(np.sum(np.abs(np.asarray(beta)) ** 2))
    T = lam_cutoff ** 2
    rho = backend.mean_level_density
    if backend.spec.dimension == 2:
        integral = rho(T) * 1.0 / (T - eta)
    else:
        # rho(t) = rho(1) sqrt(t); int_T^inf sqrt(t) (t-eta)^-2 dt in closed form
        c1 = rho(1.0)
        rt = math.sqrt(T)
        if eta > 0:
            a = math.sqrt(eta)
            integral = c1 * (rt / (T - eta)
                             - (1.0 / (2.0 * a)) * math.log((rt - a) / (rt + a)))
        elif eta < 0:
            a = math.sqrt(-eta)
            integral = c1 * ((math.pi / 2.0 - math.atan(rt / a)) / a + rt / (T - eta))
        else:
            integral = c1 * 2.0 / rt
    return 2.0 * len(Q) * s * integral


def make_green_combination(backend, Q, beta, h, cutoff=None, on_coincident="exclude"):
    """Build the combination, handling a spectral parameter that hits a shell.

    The expansion always runs over shells with lambda != 1/h.  When 1/h is an
    eigenvalue, `on_coincident` picks the policy for the dropped shell:
    "exclude" silently omits it (the generic quasimode convention), while
    "require" additionally insists that beta annihilate it, as true
    eigenfunctions at an old eigenvalue must.
    """
    if h <= 0:
        raise ValueError("h must be positive")
    Q = as_points(backend, Q)
    beta = np.asarray(beta, dtype=complex).ravel()
    if len(beta) != len(Q):
        raise ValueError("beta length must match the point count")
    if not np.any(beta):
        raise ValueError("beta must be nonzero")
    if on_coincident not in ("exclude", "require"):
        raise ValueError("on_coincident must be 'exclude' or 'require'")
    cutoff = default_combination_cutoff(h) if cutoff is None else float(cutoff)
    eta = h ** -2
    n_int, W = _shell_arrays(backend, Q, beta, cutoff)
    drop = None
    near = np.abs(n_int.astype(float) - eta) < COINCIDENT_REL * max(1.0, eta)
    if np.any(near):
        k = int(np.argmax(near))
        annihilated = W[k] <= ANNIHILATION_REL * max(1.0, float(np.max(W)))
        if on_coincident == "require" and not annihilated:
            raise PoleError(eta, float(n_int[k]))
        drop = int(n_int[k])
    g = GreenCombination(float(h), Q, beta, cutoff, drop_shell=drop)
    g.l2_norm = math.sqrt(l2_norm_sq(backend, g)["value"])
    return g


def _masked_arrays(backend, g):
    n_int, W = _shell_arrays(backend, g.Q, g.beta, g.cutoff)
    keep = np.ones(len(n_int), dtype=bool)
    if g.drop_shell is not None:
        keep &= n_int != g.drop_shell
    if g.window is not None:
        keep &= _window_mask(n_int, g.window)
    return n_int[keep].astype(np.float64), W[keep]


def l2_norm_sq(backend, g):
    """{value, tail_bound} for the shell expansion of ||g||^2 up to the cutoff."""
    if g.cutoff < 2.0 / g.h:
        raise InsufficientCutoffError(
            f"cutoff {g.cutoff} below twice the frequency {1.0 / g.h}")
    n, W = _masked_arrays(backend, g)
    value = float(np.sum(W / (n - g.eta) ** 2))
    if g.window is not None and g.window.hi <= g.cutoff:
        tail = 0.0
    else:
        tail = _tail_envelope(backend, g.Q, g.beta, g.cutoff, g.eta)
    return {"value": value, "tail_bound": tail}


def shell_coefficient(backend, Q, beta, shell):
    """||sum_q beta_q Z^q||^2 for one shell, summed over the explicit kernel.

    Deliberately does not touch the cached shell tables: this is the
    independent code path the expansion identities are checked against.
    """
    Q = as_points(backend, Q)
    beta = np.asarray(beta, dtype=complex).ravel()
    total = 0.0 + 0.0j
    for i in range(len(Q)):
        for j in range(len(Q)):
            total += np.conj(beta[i]) * beta[j] * backend.kernel(shell, Q[i], Q[j])
    return max(total.real, 0.0)


def project_window(g, window):
    """Restrict the expansion to shells with lambda inside the window."""
    if abs(window.center - 1.0 / g.h) > 1e-9 * max(1.0, window.center):
        raise ValueError("window must be centered at the combination's frequency")
    if g.window is not None:
        window = SpectralWindow(window.center,
                                min(window.half_width, g.window.half_width))
    return replace(g, window=window, l2_norm=None)


def window_mass(backend, g, window):
    """||Pi g||^2 / ||g||^2 for the given window."""
    total = l2_norm_sq(backend, g)["value"]
    part = l2_norm_sq(backend, project_window(g, window))["value"]
    return part / total


def window_mass_profile(backend, Q, beta, h, r_list, cutoff=None):
    g = make_green_combination(backend, Q, beta, h, cutoff=cutoff)
    total = l2_norm_sq(backend, g)["value"]
    out = []
    for r in r_list:
        part = l2_norm_sq(backend, project_window(g, SpectralWindow(1.0 / h, r)))
        out.append((float(r), part["value"] / total))
    return out


def quasimode_residual(backend, g, window):
    """||(h^2 Delta - 1) Pi g|| / ||Pi g||; bounded by 3 r h for half-width r.

    Accepts either a GreenCombination or a finite mode expansion (the latter
    covers the exact-eigenfunction degenerate case, where the residual is 0).
    """
    if hasattr(g, "coeffs"):
        h = 1.0 / window.center
        lam = np.sqrt(g.lam_sq())
        mask = (lam > window.lo) & (lam < window.hi)
        den = float(np.sum(np.abs(g.coeffs[mask]) ** 2))
        if den == 0.0:
            raise ZeroMassError("window captures no coefficient mass")
        num = float(np.sum((h * h * g.lam_sq()[mask] - 1.0) ** 2
                           * np.abs(g.coeffs[mask]) ** 2))
        return math.sqrt(num / den)
    proj = project_window(g, window)
    n, W = _masked_arrays(backend, proj)
    terms = W / (n - g.eta) ** 2
    den = float(np.sum(terms))
    if den == 0.0:
        raise ZeroMassError("window captures no shell mass")
    num = float(np.sum((g.h ** 2 * n - 1.0) ** 2 * terms))
    return math.sqrt(num / den)


# -- eigenfunctions at secular roots ------------------------------------------


def null_coefficients(frame, green_entries):
    """beta* = S v with v spanning ker(C - G S), normalized to sum |beta|^2 = 1."""
    M = frame.C - green_entries @ frame.S
    _, sv, vh = np.linalg.svd(M)
    v = vh[-1].conj()
    beta = frame.S @ v
    nb = np.linalg.norm(beta)
    # S v = 0 would force C v = 0 and then v = 0 by the frame identity
    if nb < 1e-8:
        raise ZeroMassError("null vector annihilated by S; frame identity violated")
    return beta / nb, float(sv[-1])


def combination_at_root(frame, backend, Q, root, cutoff=None, n_max=None, tol=1e-8,
                        polish=True):
    """Normalized Green combination for the eigenfunction at a secular root.

    The root is re-refined against the fresh Green truncation before the null
    vector is extracted; a root located at one cutoff sits roughly one
    truncation error away from the determinant zero of another, and that shift
    would otherwise dominate the smallest singular value.
    """
    eta = root.eta if hasattr(root, "eta") else float(root)
    g_eta = green_matrix(backend, Q, eta, tol=tol, **({} if n_max is None else {"n_max": n_max}))
    if polish:
        asm = GreenAssembler(backend, Q, int(round(g_eta.cutoff ** 2)))
        gap = getattr(root, "gap", None)
        lo, hi = gap if gap is not None else (None, None)
        eta = polish_root(asm, frame, eta, lo=lo, hi=hi)
        entries, err = asm.matrix_with_err(eta)
        g_eta = GreenMatrix(eta, entries, g_eta.cutoff, max(err, g_eta.tail_bound))
    beta, _ = null_coefficients(frame, g_eta.entries)
    h = 1.0 / math.sqrt(eta)
    return make_green_combination(backend, Q, beta, h, cutoff=cutoff), g_eta


def boundary_membership_residual(frame, green_entries, beta):
    """Distance of (G beta, beta) from the frame's column space, relative."""
    beta = np.asarray(beta, dtype=complex).ravel()
    rhs = np.concatenate([green_entries @ beta, beta])
    stack = frame.stacked()
    alpha = np.linalg.lstsq(stack, rhs, rcond=None)[0]
    return float(np.linalg.norm(stack @ alpha - rhs) / max(np.linalg.norm(rhs), 1e-300))
