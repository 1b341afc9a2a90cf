import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pointscatter.backends import enumerate_shells, make_backend
from pointscatter.errors import InsufficientCutoffError, PoleError, ZeroMassError
from pointscatter.extension import find_new_eigenvalues
from pointscatter.frames import isotropic_frame
from pointscatter.green import (
    SpectralWindow,
    boundary_membership_residual,
    combination_at_root,
    l2_norm_sq,
    make_green_combination,
    null_coefficients,
    project_window,
    quasimode_residual,
    shell_coefficient,
    window_mass,
    window_mass_profile,
)
from pointscatter.modes import ModeExpansion

T2 = make_backend("torus2")
T3 = make_backend("torus3")
Q1 = [[1.0, 2.0]]
Q2 = [[1.0, 2.0], [4.0, 0.7]]


def test_shell_coefficient_single_point():
    s1 = next(s for s in enumerate_shells(T2, 1.2) if s.lam_sq == 1)
    assert np.isclose(shell_coefficient(T2, Q1, [1.0], s1), 1.0 / np.pi ** 2)


def test_shell_coefficient_nonnegative_gram():
    rng = np.random.default_rng(5)
    shells = enumerate_shells(T2, 3.0)
    for _ in range(10):
        beta = rng.normal(size=2) + 1j * rng.normal(size=2)
        for s in shells:
            assert shell_coefficient(T2, Q2, beta, s) >= 0.0


def test_l2_matches_bruteforce_tiny_cutoff():
    h = 1 / 2.2
    g = make_green_combination(T2, Q1, [1.0], h, cutoff=5.0)
    v = l2_norm_sq(T2, g)["value"]
    brute = sum(shell_coefficient(T2, Q1, [1.0], s) / (s.lam_sq - g.eta) ** 2
                for s in enumerate_shells(T2, 5.0))
    assert abs(v - brute) < 1e-12 * brute


def test_l2_homogeneity():
    h = 1 / 7.3
    a = l2_norm_sq(T2, make_green_combination(T2, Q2, [1.0, 0.5j], h))["value"]
    b = l2_norm_sq(T2, make_green_combination(T2, Q2, [3.0, 1.5j], h))["value"]
    assert np.isclose(b, 9.0 * a, rtol=1e-12)


def test_insufficient_cutoff():
    with pytest.raises(InsufficientCutoffError):
        g = make_green_combination(T2, Q1, [1.0], 1 / 7.3, cutoff=20.0)
        g.cutoff = 10.0   # below 2 * 7.3
        l2_norm_sq(T2, g)


def test_window_identity_and_empty():
    h = 1 / 7.3
    g = make_green_combination(T2, Q1, [1.0], h, cutoff=30.0)
    total = l2_norm_sq(T2, g)["value"]
    wide = l2_norm_sq(T2, project_window(g, SpectralWindow(7.3, 31.0)))["value"]
    assert np.isclose(wide, total, rtol=1e-15)
    # (7.285, 7.375) covers lambda^2 in (53.07, 54.39); 54 = 2*27 is not a sum
    # of two squares, so the window is empty
    g2 = make_green_combination(T2, Q1, [1.0], 1 / 7.33, cutoff=30.0)
    narrow = l2_norm_sq(T2, project_window(g2, SpectralWindow(7.33, 0.045)))
    assert narrow["value"] == 0.0


def test_window_projection_idempotent():
    h = 1 / 7.3
    g = make_green_combination(T2, Q1, [1.0], h)
    w = SpectralWindow(7.3, 2.0)
    once = project_window(g, w)
    twice = project_window(once, w)
    assert l2_norm_sq(T2, once)["value"] == l2_norm_sq(T2, twice)["value"]


@settings(max_examples=20, deadline=None)
@given(r1=st.floats(0.1, 10.0), r2=st.floats(0.1, 10.0))
def test_window_mass_monotone(r1, r2):
    lo, hi = sorted((r1, r2))
    g = make_green_combination(T2, Q1, [1.0], 1 / 7.3)
    assert window_mass(T2, g, SpectralWindow(7.3, lo)) <= \
        window_mass(T2, g, SpectralWindow(7.3, hi)) + 1e-15


def test_orthogonal_split_small_case():
    # complement computed through the independent explicit-kernel path
    h = 1 / 2.2
    g = make_green_combination(T2, Q1, [1.0], h, cutoff=6.0)
    total = l2_norm_sq(T2, g)["value"]
    w = SpectralWindow(2.2, 0.9)
    inside = l2_norm_sq(T2, project_window(g, w))["value"]
    outside = sum(
        shell_coefficient(T2, Q1, [1.0], s) / (s.lam_sq - g.eta) ** 2
        for s in enumerate_shells(T2, 6.0)
        if not (w.lo < math.sqrt(s.lam_sq) < w.hi))
    assert abs(total - inside - outside) < 1e-12 * total


def test_profile_mass_tends_to_one():
    prof = window_mass_profile(T2, Q1, [1.0], 1 / 20.3, [0.5, 2.0, 8.0, 80.0])
    masses = [m for _, m in prof]
    assert all(x <= y + 1e-15 for x, y in zip(masses, masses[1:]))
    assert masses[-1] > 0.999


def test_quasimode_residual_bound():
    for c in (7.3, 20.3, 41.7):
        g = make_green_combination(T2, Q1, [1.0], 1 / c)
        for r in (0.5, 1.0, 3.0):
            res = quasimode_residual(T2, g, SpectralWindow(c, r))
            assert res <= 3.0 * r / c


def _mode_for_shell(n):
    # one integer vector (a, b) with a^2 + b^2 = n
    for a in range(int(math.isqrt(n)) + 1):
        b2 = n - a * a
        b = math.isqrt(b2)
        if b * b == b2:
            return (a, b)
    raise AssertionError(f"{n} is not a sum of two squares")


def test_quasimode_residual_h_scaling():
    # a Green combination's residual is dominated by the single shell nearest
    # the spectral parameter and decays faster than h; the O(h) operator rate
    # shows cleanly on a window function with equal weight on every shell, for
    # which the residual is the r.m.s. of |h^2 lambda^2 - 1| over the window
    hs, vals = [], []
    for c in (20.5, 41.0, 82.0):
        table = T2.shell_table(c + 2.0)
        lam = np.sqrt(table.lam_sq.astype(float))
        inside = table.lam_sq[np.abs(lam - c) < 0.97]
        pairs = [(_mode_for_shell(int(n)), 1.0) for n in inside]
        u = ModeExpansion.from_pairs(pairs, d=2)
        res = quasimode_residual(T2, u, SpectralWindow(c, 1.0))
        assert res <= 3.0 / c
        hs.append(1 / c)
        vals.append(res)
    slope = np.polyfit(np.log(hs), np.log(vals), 1)[0]
    assert 0.9 <= slope <= 1.1


def test_residual_zero_for_exact_shell_mode():
    u = ModeExpansion.from_pairs([((5, 0), 1.0)], d=2)
    res = quasimode_residual(T2, u, SpectralWindow(5.0, 0.25))
    assert res < 1e-12
    with pytest.raises(ZeroMassError):
        quasimode_residual(T2, u, SpectralWindow(9.0, 0.25))


def test_tail_slope_versus_window_width():
    # tail norm grows like gamma^{-1/2} as the window narrows, so the slope of
    # log-residual against log-gamma is about -1/2 (it cannot be positive:
    # narrower windows capture less mass)
    c = 60.3
    g = make_green_combination(T2, Q1, [1.0], 1 / c, cutoff=4.2 * c)
    total = l2_norm_sq(T2, g)["value"]
    gammas = [0.5, 0.25, 0.125]
    tails = []
    for gam in gammas:
        part = l2_norm_sq(T2, project_window(g, SpectralWindow(c, gam * c / 4)))["value"]
        tails.append(math.sqrt(max(total - part, 0.0) / total))
    slope = np.polyfit(np.log(gammas), np.log(tails), 1)[0]
    assert slope <= -0.3


def test_tail_scaling_in_h_at_fixed_width():
    # raw tail mass beyond a width-R window scales like h^{3-d}/R; checked as
    # stability of the compensated product across octaves of h on both tori
    for bk, d, Q in ((T2, 2, Q1), (T3, 3, [[1.0, 2.0, 0.5]])):
        comp = []
        for c in (30.3, 60.3, 120.3):
            g = make_green_combination(bk, Q, [1.0], 1 / c, cutoff=4.2 * c)
            total = l2_norm_sq(bk, g)["value"]
            part = l2_norm_sq(bk, project_window(g, SpectralWindow(c, 6.0)))["value"]
            comp.append((total - part) * c ** (3 - d))
    assert max(comp) / min(comp) < 4.0


def test_coincident_shell_excluded_and_strict_mode():
    g = make_green_combination(T2, Q1, [1.0], 0.5)
    assert g.drop_shell == 4
    with pytest.raises(PoleError):
        make_green_combination(T2, Q1, [1.0], 0.5, on_coincident="require")


def test_coincident_shell_annihilation():
    # Z_4 kernels at q and q + (pi/2, pi/2) are opposite, so (1,1) annihilates
    q = np.array([1.0, 2.0])
    p = q + np.pi / 2
    beta = np.array([1.0, 1.0]) / np.sqrt(2)
    g = make_green_combination(T2, [q, p], beta, 0.5, on_coincident="require")
    assert g.drop_shell == 4
    with pytest.raises(PoleError):
        make_green_combination(T2, [q, p], np.array([1.0, -1.0]) / np.sqrt(2),
                               0.5, on_coincident="require")


def test_eigenfunction_boundary_law():
    fr = isotropic_frame(0.4, 1)
    roots = find_new_eigenvalues(fr, T2, Q1, (30.0, 45.0))
    assert len(roots) >= 3
    for r in roots[:3]:
        g, geta = combination_at_root(fr, T2, Q1, r, tol=1e-10)
        resid = boundary_membership_residual(fr, geta.entries, g.beta)
        assert resid < 1e-6
        assert np.isclose(np.sum(np.abs(g.beta) ** 2), 1.0)


def test_null_vector_never_annihilated_by_S():
    fr = isotropic_frame(1.1, 2)
    roots = find_new_eigenvalues(fr, T2, Q2, (20.0, 26.0))
    for r in roots:
        g, geta = combination_at_root(fr, T2, Q2, r, tol=1e-10)
        beta, smin = null_coefficients(fr, geta.entries)
        assert smin < 1e-9
        assert np.linalg.norm(beta) > 0.99
