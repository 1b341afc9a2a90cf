"""Counting-function diagnostics against the leading Weyl growth.

The pointwise counting function Z(q, p; X) sums shell kernels up to frequency
X.  On the diagonal its leading growth is vol(B^d) X^d / vol(M); everything
here measures what is left after subtracting that, either at a single cutoff
or over a frequency window (X, X + gamma].  Window sums are taken from one
shell table by masking, and must agree with differences of the backend's
`spectral_function` to rounding; the tests pin that identity, which is the
cross-check that the masking and the table share one shell convention.

Whether the improved (windowed) remainder can decay is a property of the
geodesic flow, surfaced here only through the backend's
`all_directions_loop` flag: tori carry a measure-zero set of looping
directions and the windowed defect shrinks, while on the round sphere every
geodesic closes and the defect stays cluster-sized no matter the window.
"""

from __future__ import annotations

import numpy as np

from .backends import as_points, n_le, unit_ball_volume
from .green import _shell_arrays


def window_main_term(backend, X, gamma):
    """Smooth prediction for the diagonal mass of the window (X, X+gamma]."""
    d = backend.dimension
    return d * unit_ball_volume(d) * gamma * X ** (d - 1) / backend.volume


def _window_table(backend, X, gamma):
    table = backend.shell_table(X + gamma)
    mask = (table.lam_sq > n_le(X)) & (table.lam_sq <= n_le(X + gamma))
    return table, mask


def diagonal_remainder(backend, q, X):
    """Z(q, q; X) minus vol(B^d) X^d / vol(M).  Normalized for X >= 1."""
    if X < 1:
        raise ValueError("diagonal remainder requires X >= 1")
    return backend.spectral_function(q, q, X) - backend.counting_main_term(X)


def window_diagonal(backend, q, X, gamma):
    """Diagonal mass of (X, X+gamma] minus its smooth prediction."""
    if gamma <= 0:
        raise ValueError("window width gamma must be positive")
    table, mask = _window_table(backend, X, gamma)
    mass = float(np.sum(backend.diag_values(table)[mask]))
    return mass - window_main_term(backend, X, gamma)


def off_diagonal_window(backend, q, p, X, gamma):
    """Windowed off-diagonal sum of Z_lambda^q(p) over X < lambda <= X+gamma.

    There is no main term to subtract: off the diagonal the smooth prediction
    vanishes, so the raw sum is itself the defect.
    """
    if gamma <= 0:
        raise ValueError("window width gamma must be positive")
    if backend.distance(q, p) < 1e-12:
        raise ValueError("coincident points: the diagonal window is window_diagonal")
    table, mask = _window_table(backend, X, gamma)
    return float(np.sum(backend.pair_values(table, q, p)[mask]))


def normalized_window_defect(backend, q, X, gamma):
    """|window defect| / (gamma X^(d-1)): the epsilon of the improved remainder."""
    d = backend.dimension
    return abs(window_diagonal(backend, q, X, gamma)) / (gamma * X ** (d - 1))


def shell_density_bounds(backend, Q, beta, X, gamma):
    """Windowed combination mass against the two Weyl normalizations.

    The window sum of ||sum_q beta_q Z_lambda^q||^2 over X < lambda <= X+gamma
    is divided by [sum |beta|^2] X^(d-1) (`lower_ratio`) and additionally by
    gamma (`upper_ratio`).  lower_ratio grows linearly with the window width
    while upper_ratio stays width-independent, which is the two-sided density
    statement in ratio form.
    """
    if gamma <= 0:
        raise ValueError("window width gamma must be positive")
    Q = as_points(backend, Q)
    beta = np.asarray(beta, dtype=complex).ravel()
    b2 = float(np.sum(np.abs(beta) ** 2))
    if b2 <= 0:
        raise ValueError("beta must carry positive mass")
    n_int, W = _shell_arrays(backend, Q, beta, X + gamma)
    mask = (n_int > n_le(X)) & (n_int <= n_le(X + gamma))
    s = float(np.sum(W[mask]))
    base = b2 * X ** (backend.dimension - 1)
    return {"lower_ratio": s / base, "upper_ratio": s / (gamma * base)}
