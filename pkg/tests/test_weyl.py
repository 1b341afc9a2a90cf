import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pointscatter.backends import make_backend
from pointscatter.weyl import (
    diagonal_remainder,
    normalized_window_defect,
    off_diagonal_window,
    shell_density_bounds,
    window_diagonal,
    window_main_term,
)

T2 = make_backend("torus2")
T3 = make_backend("torus3")
S2 = make_backend("sphere2")
q2 = (0.3, 0.7)
p2 = (1.1371, 2.9123)
q3 = (0.3, 0.7, 1.9)
p3 = (2.1, 0.4, 4.4)
qs = (0.9, 1.3)
ps = (2.0, 4.1)


def test_main_terms_closed_form_torus2():
    X = 37.2
    assert math.isclose(T2.counting_main_term(X), X * X / (4 * math.pi), rel_tol=1e-15)
    assert math.isclose(window_main_term(T2, X, 1.7), 1.7 * X / (2 * math.pi), rel_tol=1e-15)


def test_diagonal_remainder_below_first_sphere_shell():
    # X = 1.2 sits under lambda_1 = sqrt(2), so only the constant mode counts
    rem = diagonal_remainder(S2, qs, 1.2)
    assert abs(rem - (1 / (4 * math.pi) - 1.2 ** 2 / 4)) < 1e-15


def test_diagonal_remainder_requires_unit_frequency():
    with pytest.raises(ValueError):
        diagonal_remainder(T2, q2, 0.5)


def test_remainder_ratio_bounded_torus2():
    Xs = np.concatenate([np.arange(10, 201, 1.0), np.arange(10.5, 200.6, 1.0)])
    worst = max(abs(diagonal_remainder(T2, q2, X)) / X for X in Xs)
    assert worst <= 0.03


@settings(max_examples=25, deadline=None)
@given(
    st.floats(min_value=1.0, max_value=60.0),
    st.floats(min_value=1e-3, max_value=10.0),
)
def test_window_is_difference_of_counting(X, gamma):
    for b, a, c in ((T2, q2, p2), (S2, qs, ps)):
        diff = b.spectral_function(a, a, X + gamma) - b.spectral_function(a, a, X)
        got = window_diagonal(b, a, X, gamma) + window_main_term(b, X, gamma)
        assert abs(got - diff) <= 1e-12 * (1.0 + abs(diff))
        od = off_diagonal_window(b, a, c, X, gamma)
        od_diff = b.spectral_function(a, c, X + gamma) - b.spectral_function(a, c, X)
        assert abs(od - od_diff) <= 1e-12 * (1.0 + abs(od_diff))


def test_window_difference_torus3():
    diff = T3.spectral_function(q3, q3, 41.7) - T3.spectral_function(q3, q3, 40.2)
    got = window_diagonal(T3, q3, 40.2, 1.5) + window_main_term(T3, 40.2, 1.5)
    assert abs(got - diff) <= 1e-12 * (1.0 + abs(diff))


def test_empty_window_defect_is_minus_main_term():
    # (400.4, 400.6] holds no lattice shell
    assert window_diagonal(T2, q2, 20.01, 0.005) == -window_main_term(T2, 20.01, 0.005)
    assert off_diagonal_window(T2, q2, p2, 20.01, 0.005) == 0.0


def test_off_diagonal_symmetry_and_coincidence():
    v1 = off_diagonal_window(T2, q2, p2, 30.0, 2.0)
    v2 = off_diagonal_window(T2, p2, q2, 30.0, 2.0)
    assert v1 == pytest.approx(v2, abs=1e-14)
    with pytest.raises(ValueError):
        off_diagonal_window(T2, q2, (q2[0] + 2 * math.pi, q2[1]), 30.0, 2.0)
    with pytest.raises(ValueError):
        window_diagonal(T2, q2, 30.0, 0.0)


def test_off_diagonal_normalized_stays_small_torus2():
    vals = [abs(off_diagonal_window(T2, q2, p2, X, 1.0)) / X
            for X in np.arange(20.0, 200.0, 1.5)]
    assert max(vals) <= 0.03
    assert np.mean(vals) <= 0.01


def _block_mean(b, point, lo, hi, gamma):
    Xs = np.arange(lo, hi, 0.5)
    return float(np.mean([normalized_window_defect(b, point, X, gamma) for X in Xs]))


def test_windowed_defect_decays_on_torus_not_on_sphere():
    lo_t = _block_mean(T2, q2, 20, 40, 1.0)
    hi_t = _block_mean(T2, q2, 160, 200, 1.0)
    assert lo_t / hi_t >= 2.0

    # clusters at lambda ~ l + 1/2 keep the gamma=0.5 defect cluster-sized
    lo_s = _block_mean(S2, qs, 10, 20, 0.5)
    hi_s = _block_mean(S2, qs, 40, 50, 0.5)
    assert min(lo_s, hi_s) >= 0.2
    assert 0.7 <= lo_s / hi_s <= 1.4


def test_sphere_zero_mass_windows_between_clusters():
    count = 0
    for l in range(1, 60):
        lam = math.sqrt(l * (l + 1))
        if not 10.0 <= lam <= 50.0:
            continue
        X = lam + 0.25
        assert window_diagonal(S2, qs, X, 0.5) == -window_main_term(S2, X, 0.5)
        count += 1
    assert count >= 35


def test_looping_direction_flags():
    assert T2.all_directions_loop is False
    assert T3.all_directions_loop is False
    assert S2.all_directions_loop is True


def test_shell_density_single_point_reduces_to_diagonal():
    X, gamma = 33.3, 1.0
    r = shell_density_bounds(T2, [q2], [1.0], X, gamma)
    mass = window_diagonal(T2, q2, X, gamma) + window_main_term(T2, X, gamma)
    assert r["lower_ratio"] * X == pytest.approx(mass, rel=1e-12)
    assert r["upper_ratio"] == pytest.approx(r["lower_ratio"] / gamma, rel=1e-14)


def test_shell_density_scan_torus3():
    # the window sum scales linearly in gamma: lower_ratio climbs with the
    # window while upper_ratio stays put, with the slope set by the lattice
    # count of the annulus against the volume normalization of the kernels
    rng = np.random.default_rng(5)
    beta = rng.normal(size=2) + 1j * rng.normal(size=2)
    Xs = np.arange(20.0, 101.0, 10.0)
    prev_min = 0.0
    for gamma in (1.0, 2.0, 4.0, 8.0):
        rs = [shell_density_bounds(T3, [q3, p3], beta, X, gamma) for X in Xs]
        low = min(r["lower_ratio"] for r in rs)
        up = max(r["upper_ratio"] for r in rs)
        assert low >= 0.045 * gamma
        assert up <= 0.08
        assert low >= 1.8 * prev_min
        prev_min = low


def test_shell_density_rejects_zero_mass():
    with pytest.raises(ValueError):
        shell_density_bounds(T2, [q2], [0.0], 20.0, 1.0)
