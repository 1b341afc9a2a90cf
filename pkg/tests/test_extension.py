import math
import warnings

import numpy as np
import pytest

from pointscatter.backends import make_backend
from pointscatter.errors import PoleError, SecularSingularError
from pointscatter.extension import (
    GreenAssembler,
    coupling_matrix,
    energy_pairing,
    find_new_eigenvalues,
    green_matrix,
    resolvent_apply,
    secular_det,
)
from pointscatter.frames import (
    frame_from_hermitian,
    isotropic_frame,
    random_frame,
    random_unitary,
    rotate_frame,
    trivial_frame,
)
from pointscatter.modes import ModeExpansion

T2 = make_backend("torus2")
T3 = make_backend("torus3")
S2 = make_backend("sphere2")


def brute_offdiag_difference(bk, q, p, eta1, eta2, n_big=200_000):
    """G(eta1) - G(eta2) off-diagonal entry via its absolutely convergent series.

    The difference series has terms (eta1 - eta2) Z / ((n - eta1)(n - eta2)),
    summable without any averaging; the smooth mean-density integral supplies
    the tiny remainder beyond the brute cutoff.
    """
    table = bk.shell_table(math.sqrt(n_big + 0.5))
    vals = bk.pair_values(table, q, p)
    n = table.lam_sq.astype(float)
    s = (eta1 - eta2) * float(vals @ (1.0 / ((n - eta1) * (n - eta2))))
    return s


def brute_diag_difference(bk, eta1, eta2, n_big=200_000):
    table = bk.shell_table(math.sqrt(n_big + 0.5))
    vals = bk.diag_values(table)
    n = table.lam_sq.astype(float)
    s = (eta1 - eta2) * float(vals @ (1.0 / ((n - eta1) * (n - eta2))))
    # constant-density tail of the difference series past the cutoff
    rho0 = bk.mean_level_density(float(n_big))
    T = n_big + 0.5
    s += rho0 * math.log((T - eta2) / (T - eta1))
    return s


def test_difference_series_oracle_torus2():
    q, p = np.array([1.0, 2.0]), np.array([4.0, 0.7])
    g1 = green_matrix(T2, [q, p], -3.0, tol=1e-9)
    g2 = green_matrix(T2, [q, p], -11.0, tol=1e-9)
    diff = g1.entries - g2.entries
    assert abs(diff[0, 1] - brute_offdiag_difference(T2, q, p, -3.0, -11.0)) < 1e-7
    assert abs(diff[0, 0] - brute_diag_difference(T2, -3.0, -11.0)) < 1e-7


def test_difference_series_oracle_sphere():
    q, p = np.array([0.4, 1.0]), np.array([2.0, 3.5])
    g1 = green_matrix(S2, [q, p], -2.0, tol=1e-9)
    g2 = green_matrix(S2, [q, p], -9.0, tol=1e-9)
    diff = g1.entries - g2.entries
    assert abs(diff[0, 1] - brute_offdiag_difference(S2, q, p, -2.0, -9.0)) < 1e-7
    assert abs(diff[0, 0] - brute_diag_difference(S2, -2.0, -9.0)) < 1e-7


def test_cutoff_doubling_within_reported_bound():
    Q = [[1.0, 2.0], [4.0, 0.7]]
    g = green_matrix(T2, Q, -7.0, tol=1e-7, n_max=4096)
    big = green_matrix(T2, Q, -7.0, tol=1e-9, n_max=65536)
    assert np.max(np.abs(g.entries - big.entries)) < 5 * g.tail_bound


def test_entries_real_and_symmetric():
    g = green_matrix(T3, [[0.3, 1.0, 2.2], [2.0, 2.0, 0.1]], -6.0, tol=1e-6)
    assert g.entries.dtype == np.float64
    assert np.array_equal(g.entries, g.entries.T)


def test_offdiagonal_decay_towards_minus_infinity():
    q, p = np.array([1.0, 2.0]), np.array([4.0, 0.7])
    vals = [abs(green_matrix(T2, [q, p], eta, tol=1e-7).entries[0, 1])
            for eta in (-10.0, -100.0, -1000.0)]
    assert vals[0] > vals[1] > vals[2]
    assert vals[2] < 1e-3


def test_diagonal_monotone_in_eta():
    # every term 1/(n - eta) increases with eta, as does the smooth tail
    asm = GreenAssembler(T2, [[1.0, 2.0]], 8192)
    etas = [2.1, 2.3, 2.5, 2.7, 2.9]     # inside the gap (2, 4)
    vals = [asm.diag_value(e) for e in etas]
    assert all(a < b for a, b in zip(vals, vals[1:]))


def test_pole_guard():
    with pytest.raises(PoleError):
        green_matrix(T2, [[1.0, 2.0]], 2.0 + 1e-10)


def test_trivial_frame_has_zero_coupling():
    fr = trivial_frame(2)
    cp = coupling_matrix(fr, T2, [[1.0, 2.0], [4.0, 0.7]], -4.0)
    assert np.all(cp.matrix == 0)
    # and the resolvent leaves u untouched
    u = ModeExpansion.from_pairs([((1, 1), 1.0)], d=2)
    P = resolvent_apply(fr, T2, [[1.0, 2.0], [4.0, 0.7]], -4.0, u)
    assert np.all(P.beta == 0)


def test_coupling_hermitian_and_rotation_invariant():
    rng = np.random.default_rng(11)
    Q = [[1.0, 2.0], [4.0, 0.7]]
    g = green_matrix(T2, Q, -3.7, tol=1e-9)
    for _ in range(4):
        fr = random_frame(rng, 2)
        cp = coupling_matrix(fr, T2, Q, -3.7, green=g)
        assert cp.hermiticity_defect() < 1e-12
        fr2 = rotate_frame(fr, random_unitary(rng, 2))
        cp2 = coupling_matrix(fr2, T2, Q, -3.7, green=g)
        assert np.max(np.abs(cp.matrix - cp2.matrix)) < 1e-12


def test_single_point_interlacing():
    fr = isotropic_frame(0.4, 1)
    roots = find_new_eigenvalues(fr, T2, [[1.0, 2.0]], (0.5, 10.0), grid=33)
    gaps = [(1, 2), (2, 4), (4, 5), (5, 8), (8, 9)]
    complete = [r for r in roots if r.gap in [(float(a), float(b)) for a, b in gaps]]
    assert len(complete) == len(gaps)
    for r in complete:
        assert r.gap[0] < r.eta < r.gap[1]
        assert r.residual < 1e-9


def test_roots_invariant_under_frame_rotation():
    rng = np.random.default_rng(3)
    fr = frame_from_hermitian(np.array([[0.7, 0.2], [0.2, -0.4]]))
    fr2 = rotate_frame(fr, random_unitary(rng, 2))
    Q = [[1.0, 2.0], [4.0, 0.7]]
    r1 = find_new_eigenvalues(fr, T2, Q, (4.0, 8.0), grid=41)
    r2 = find_new_eigenvalues(fr2, T2, Q, (4.0, 8.0), grid=41)
    assert len(r1) == len(r2) > 0
    for a, b in zip(r1, r2):
        assert abs(a.eta - b.eta) < 1e-8 * max(1.0, abs(a.eta))


def test_complex_frame_roots_match_determinant_minima():
    rng = np.random.default_rng(19)
    fr = random_frame(rng, 1)
    assert not fr.is_real
    Q = [[1.0, 2.0]]
    roots = find_new_eigenvalues(fr, T2, Q, (2.0, 5.0), grid=41)
    assert roots
    for r in roots:
        assert abs(secular_det(fr, T2, Q, r.eta, green=green_matrix(T2, Q, r.eta))) < 1e-6


def test_root_count_warning_channel_exists():
    # scanning with an insanely coarse grid must not crash; warnings are advisory
    fr = isotropic_frame(0.4, 1)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        find_new_eigenvalues(fr, T2, [[1.0, 2.0]], (1.0, 4.0), grid=5)


def test_secular_singular_at_root():
    fr = isotropic_frame(0.4, 1)
    Q = [[1.0, 2.0]]
    roots = find_new_eigenvalues(fr, T2, Q, (4.0, 5.0), grid=33, n_max=4096)
    assert len(roots) == 1
    # evaluate with the same truncation the scan used so the root stays exact
    g = green_matrix(T2, Q, roots[0].eta, n_max=4096, tol=np.inf)
    with pytest.raises(SecularSingularError):
        coupling_matrix(fr, T2, Q, roots[0].eta, green=g)


def test_secular_singular_constructed():
    from pointscatter.frames import LagrangianFrame
    Q = [[1.0, 2.0]]
    g = green_matrix(T2, Q, -4.0)
    g0 = g.entries[0, 0]
    nrm = math.hypot(g0, 1.0)
    fr = LagrangianFrame(np.array([[g0 / nrm]]), np.array([[1.0 / nrm]]))
    with pytest.raises(SecularSingularError):
        coupling_matrix(fr, T2, Q, -4.0, green=g)


def test_resolvent_membership_and_energy_pairing():
    rng = np.random.default_rng(7)
    Q = [[1.0, 2.0], [4.0, 0.7]]
    eta = -3.7
    fr = random_frame(rng, 2)
    u = ModeExpansion.from_pairs(
        [((1, 0), 0.8), ((2, 1), 0.4 - 0.3j), ((0, 3), 0.1j)], d=2)
    g = green_matrix(T2, Q, eta, tol=1e-10)
    P = resolvent_apply(fr, T2, Q, eta, u, green=g)
    assert P.frame_membership_residual(fr) < 1e-12

    lhs = energy_pairing(fr, T2, Q, eta, u, green=g)
    # second route: pair the full coefficients of Pu against (Delta - eta) u
    coeffs = P.coefficients_on(u.ks)
    rhs = complex(np.vdot(coeffs, u.apply_helmholtz(eta).coeffs))
    assert abs(lhs - rhs) < 1e-10 * max(1.0, abs(lhs))


def test_membership_fails_for_wrong_frame():
    rng = np.random.default_rng(23)
    Q = [[1.0, 2.0]]
    fr = isotropic_frame(0.3, 1)
    other = isotropic_frame(1.2, 1)
    u = ModeExpansion.from_pairs([((2, 0), 1.0)], d=2)
    P = resolvent_apply(fr, T2, Q, -2.5, u)
    assert P.frame_membership_residual(fr) < 1e-12
    assert P.frame_membership_residual(other) > 1e-3
