import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from seedbank.diffusion import (DiffusionState, dual_moment_lhs, dual_moment_rhs, fixation_check,
                                martingale_functional, martingale_trace, simulate_paths, step_em)
from seedbank.measure import RateMeasure
from seedbank.oracles import fixation_weight, solve_f

DELTA1 = RateMeasure.dirac(1.0)
TWO_ATOMS = RateMeasure.atoms([(1.0, 0.5), (2.0, 0.5)])


def test_step_em_drift_only():
    s = step_em(DiffusionState(1.0, [0.0]), DELTA1, 0.01, None, noise=False)
    assert s.x == pytest.approx(0.99, abs=1e-15)
    assert s.y[0] == pytest.approx(0.01, abs=1e-15)
    assert s.t == 0.01


@pytest.mark.parametrize("corner", [0.0, 1.0])
def test_step_em_corners_fixed(corner, rng):
    s = DiffusionState(corner, [corner, corner])
    for _ in range(200):
        s = step_em(s, TWO_ATOMS, 0.01, rng)
    assert s.x == corner and np.all(s.y == corner)


@settings(max_examples=30, deadline=None)
@given(st.floats(0, 1), st.floats(0, 1), st.floats(1e-4, 0.2), st.integers(0, 2**32 - 1))
def test_step_em_stays_in_domain(x, y, dt, seed):
    rng = np.random.default_rng(seed)
    s = DiffusionState(x, [y, 1 - y])
    for _ in range(20):
        s = step_em(s, TWO_ATOMS, dt, rng)
        assert 0 <= s.x <= 1 and np.all((s.y >= 0) & (s.y <= 1))


@pytest.mark.parametrize("scheme", ["beta", "em"])
def test_paths_stay_in_domain(scheme, rng):
    xs, ys = simulate_paths(0.5, [0.1, 0.9], TWO_ATOMS, [0.5, 2.0], 1e-2, 500, rng, scheme)
    assert xs.shape == (2, 500) and ys.shape == (2, 500, 2)
    assert np.all((xs >= 0) & (xs <= 1)) and np.all((ys >= 0) & (ys <= 1))


def test_paths_corners_absorbing(rng):
    xs, ys = simulate_paths(1.0, 1.0, TWO_ATOMS, [5.0], 1e-2, 200, rng)
    assert np.all(xs == 1.0) and np.all(ys == 1.0)


def test_paths_reproducible():
    a = simulate_paths(0.3, 0.6, DELTA1, [1.0], 1e-2, 100, np.random.default_rng(4))
    b = simulate_paths(0.3, 0.6, DELTA1, [1.0], 1e-2, 100, np.random.default_rng(4))
    assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])


def test_moments_at_time_zero(rng):
    assert dual_moment_lhs(0.3, 0.6, 2, 1, 0.0, 1e-3, 10, rng, DELTA1) == (0.3**2 * 0.6, 0.0)
    assert dual_moment_rhs(0.3, 0.6, 2, 1, 0.0, 10, rng, DELTA1) == (0.3**2 * 0.6, 0.0)


def test_moments_at_corner(rng):
    lhs, se = dual_moment_lhs(1.0, 1.0, 2, 1, 1.0, 1e-2, 50, rng, DELTA1)
    rhs, se_r = dual_moment_rhs(1.0, 1.0, 2, 1, 1.0, 50, rng, DELTA1)
    assert lhs == 1.0 and rhs == 1.0 and se == 0.0 and se_r == 0.0


def test_duality_small(rng):
    lhs, se_l = dual_moment_lhs(0.5, 0.5, 1, 1, 1.0, 1e-3, 4000, rng, DELTA1)
    rhs, se_r = dual_moment_rhs(0.5, 0.5, 1, 1, 1.0, 4000, rng, DELTA1)
    assert abs(lhs - rhs) <= 3 * (se_l + se_r) + 0.05


def test_duality_two_atoms_second_moment(rng):
    y0 = [0.3, 0.8]
    lhs, se_l = dual_moment_lhs(0.6, y0, 2, [1, 0], 0.7, 1e-3, 4000, rng, TWO_ATOMS)
    rhs, se_r = dual_moment_rhs(0.6, y0, 2, [1, 0], 0.7, 4000, rng, TWO_ATOMS)
    assert abs(lhs - rhs) <= 3 * (se_l + se_r) + 0.02


def test_heterozygosity_matches_coalescent(rng):
    # E[X_t (1 - X_t)] from x0 = 1/2, y0 = 1/2 equals 1/4 P(T_MRCA(2,0) > t) via duality
    t = 2.0
    xs, _ = simulate_paths(0.5, 0.5, DELTA1, [t], 1e-3, 4000, rng)
    h = xs[0] * (1 - xs[0])
    lhs = 0.5 - dual_moment_rhs(0.5, 0.5, 2, 0, t, 20_000, rng, DELTA1)[0]
    # x0^N with x0 = 1/2: E = 1/4 + 1/4 P(N_t = 1, no dormant) etc.; compare directly
    assert abs(h.mean() - lhs) <= 3 * h.std() / math.sqrt(h.size) + 0.01


def test_rhs_long_time_fixation_weight(rng):
    rhs, se = dual_moment_rhs(0.7, 0.2, 1, 1, 60.0, 4000, rng, DELTA1)
    assert abs(rhs - fixation_weight(0.7, 0.2, DELTA1)) <= 3 * se + 0.01


def test_martingale_functional_values():
    assert martingale_functional(1.0, np.array([1.0, 1.0]), TWO_ATOMS) == pytest.approx(1.0)
    assert martingale_functional(0.5, np.array([0.5]), DELTA1) == pytest.approx(0.5)


def test_martingale_trace_flat(rng):
    rows = martingale_trace(0.3, [0.9, 0.1], TWO_ATOMS, [0.0, 1.0, 5.0], 1e-3, 3000, rng)
    m0 = rows[0][1]
    for _, m, se in rows[1:]:
        assert abs(m - m0) <= 3 * se + 0.02


def test_fixation_corner(rng):
    rep = fixation_check(1.0, 1.0, DELTA1, 2.0, 1e-2, 100, rng)
    assert rep.fixed_high == 1.0 and rep.interior_mass == 0.0


def test_fixation_needs_finite_dormancy(rng):
    with pytest.raises((ValueError, TypeError)):
        fixation_check(0.5, 0.5, RateMeasure.gamma(1, 1, 1), 1.0, 1e-2, 10, rng)


def test_beta_scheme_beats_clamped_em_on_long_horizon(rng):
    # exact dual heterozygosity at t=10: 1/4 P(T_MRCA(2,0) > 10)
    from seedbank.engine import Variant, simulate_many
    from seedbank.experiments import derive_seeds
    t = 10.0
    T = simulate_many(derive_seeds(8, 8, 100_000), 2, 0, Variant(), DELTA1)["t"]
    exact = 0.25 * np.mean(T > t)
    got = {}
    for scheme in ("beta", "em"):
        xs, _ = simulate_paths(0.5, 0.5, DELTA1, [t], 1e-3, 3000, rng, scheme)
        got[scheme] = np.mean(xs[0] * (1 - xs[0]))
    assert abs(got["beta"] - exact) < abs(got["em"] - exact)
    assert abs(got["beta"] - exact) < 0.01
    assert solve_f(DELTA1).tmrca_active_pair() == pytest.approx(4.0)
