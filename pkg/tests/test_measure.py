import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, stats

from seedbank.measure import EmptyMeasureError, RateMeasure


def quad_0_inf(fn):
    # substitution lam = u / (1 - u) on (0, 1)
    val, _ = integrate.quad(lambda u: fn(u / (1 - u)) / (1 - u) ** 2, 0, 1,
                            epsabs=1e-13, epsrel=1e-10, limit=400)
    return val


def test_total_mass_examples():
    assert RateMeasure.atoms([(0.5, 2.0)]).total_mass() == 2.0
    assert RateMeasure.gamma(2, 3, 1).total_mass() == 1.0
    assert RateMeasure.empty().total_mass() == 0.0


def test_invalid_measures_rejected():
    with pytest.raises(ValueError):
        RateMeasure.atoms([(1.0, 1.0), (1.0, 2.0)])
    with pytest.raises(ValueError):
        RateMeasure.atoms([(-1.0, 1.0)])
    with pytest.raises(ValueError):
        RateMeasure.gamma(0, 1, 1)


def test_sample_rate_single_atom(rng):
    mu = RateMeasure.atoms([(1.0, 1.0)])
    assert all(mu.sample_rate(rng) == 1.0 for _ in range(20))


def test_sample_rate_weight_ratio(rng):
    mu = RateMeasure.atoms([(1.0, 1.0), (3.0, 3.0)])
    draws = mu.sample_rate(rng, size=200_000)
    p = np.mean(draws == 3.0)
    assert abs(p - 0.75) <= 3 * math.sqrt(0.75 * 0.25 / draws.size)


def test_sample_rate_gamma_mean(rng):
    # shape a, rate b: mean a / b
    draws = RateMeasure.gamma(2, 3, 1).sample_rate(rng, size=200_000)
    assert abs(draws.mean() - 2 / 3) <= 3 * draws.std() / math.sqrt(draws.size)


def test_gamma_sampler_matches_dormancy_law(rng):
    # an Exp(lam) time with lam ~ nu is Lomax: P(T > t) = (1 + t/b)**-a
    mu = RateMeasure.gamma(2.5, 3.0, 1.0)
    lam = mu.sample_rate(rng, size=200_000)
    T = rng.exponential(1.0 / lam)
    for t in (0.5, 2.0, 6.0):
        p = np.mean(T > t)
        assert abs(p - mu.survival_laplace(t)) <= 3 * math.sqrt(p * (1 - p) / T.size)


def test_sample_rate_empty_errors(rng):
    with pytest.raises(EmptyMeasureError, match="no dormancy possible"):
        RateMeasure.empty().sample_rate(rng)


def test_integrate_reciprocal_examples():
    assert RateMeasure.atoms([(0.5, 2.0)]).integrate_reciprocal() == 4.0
    assert math.isinf(RateMeasure.gamma(1, 1, 1).integrate_reciprocal())
    assert RateMeasure.gamma(2, 1, 1).integrate_reciprocal() == pytest.approx(1.0, rel=1e-12)


def test_gamma_a1_reciprocal_diverges_numerically():
    # truncated integrals of lam**-1 e**-lam grow like log(1/eps)
    dens = stats.gamma(1.0, scale=1.0).pdf
    vals = [integrate.quad(lambda x: dens(x) / x, eps, 50)[0] for eps in (1e-2, 1e-4, 1e-6)]
    assert vals[1] - vals[0] > 4 and vals[2] - vals[1] > 4


@pytest.mark.parametrize("a,b,c", [(2.0, 1.0, 1.0), (3.5, 0.4, 2.0), (1.7, 3.0, 0.5)])
def test_gamma_integrals_against_quadrature(a, b, c):
    mu = RateMeasure.gamma(a, b, c)
    dens = stats.gamma(a, scale=1 / b).pdf
    assert mu.integrate_reciprocal() == pytest.approx(c * quad_0_inf(lambda x: dens(x) / x), rel=1e-8)
    assert mu.integrate_rate() == pytest.approx(c * quad_0_inf(lambda x: dens(x) * x), rel=1e-8)
    for t in (0.3, 2.0, 7.0):
        q = quad_0_inf(lambda x: dens(x) * math.exp(-x * t))
        assert mu.survival_laplace(t) == pytest.approx(q, rel=1e-8)
    assert mu.reciprocal_weight(0.5, 2.0) == pytest.approx(
        c * integrate.quad(lambda x: dens(x) / x, 0.5, 2.0, epsrel=1e-12)[0], rel=1e-8)


def test_dormancy_cdf_examples():
    assert RateMeasure.gamma(2, 3, 1).dormancy_cdf(0.0) == 0.0
    assert RateMeasure.gamma(2, 3, 1).dormancy_cdf(3.0) == pytest.approx(0.75, abs=1e-15)
    assert RateMeasure.atoms([(1.0, 1.0)]).dormancy_cdf(math.log(2)) == pytest.approx(0.5, abs=1e-15)


def test_survival_examples():
    assert RateMeasure.gamma(2, 3, 1).survival_laplace(0.0) == 1.0
    assert RateMeasure.gamma(2, 3, 1).survival_laplace(3.0) == pytest.approx(0.25, abs=1e-15)
    assert RateMeasure.atoms([(2.0, 1.0)]).survival_laplace(1.0) == pytest.approx(math.exp(-2), abs=1e-15)
    with pytest.raises(EmptyMeasureError):
        RateMeasure.empty().dormancy_cdf(1.0)


def test_atom_integrals_are_finite_sums():
    pairs = [(0.3, 1.2), (1.1, 0.4), (4.0, 2.5)]
    mu = RateMeasure.atoms(pairs)
    c = sum(w for _, w in pairs)
    assert mu.integrate_reciprocal() == pytest.approx(sum(w / r for r, w in pairs), abs=1e-12)
    assert mu.integrate_rate() == pytest.approx(sum(w * r for r, w in pairs), abs=1e-12)
    t = 0.7
    assert mu.survival_laplace(t) == pytest.approx(sum(w * math.exp(-r * t) for r, w in pairs) / c, abs=1e-12)
    assert mu.dormancy_density(t) == pytest.approx(sum(w * r * math.exp(-r * t) for r, w in pairs) / c,
                                                   abs=1e-12)


measures = st.one_of(
    st.lists(st.tuples(st.floats(0.01, 50), st.floats(0.01, 10)), min_size=1, max_size=6,
             unique_by=lambda p: p[0]).map(RateMeasure.atoms),
    st.builds(RateMeasure.gamma, st.floats(0.2, 8), st.floats(0.05, 5), st.floats(0.1, 5)),
)


@settings(max_examples=60, deadline=None)
@given(measures)
def test_cdf_shape_and_complement(mu):
    grid = np.concatenate([[0.0], np.logspace(-3, 4, 60)])
    K = mu.dormancy_cdf(grid)
    S = mu.survival_laplace(grid)
    assert K[0] == 0.0
    assert np.all(np.diff(K) >= -1e-15)
    assert np.allclose(K + S, 1.0, atol=1e-14, rtol=0)
    assert mu.dormancy_cdf(1e12) > 0.99


@settings(max_examples=40, deadline=None)
@given(measures)
def test_config_round_trip(mu):
    assert RateMeasure.from_config(mu.to_config()) == mu


def test_config_from_inline_json_and_file(tmp_path):
    text = '{"type": "atoms", "atoms": [[1.0, 0.5], [2.0, 0.5]]}'
    mu = RateMeasure.from_config(text)
    path = tmp_path / "mu.json"
    path.write_text(text)
    assert RateMeasure.from_config(str(path)) == mu
    assert mu.total_mass() == 1.0
    with pytest.raises(ValueError):
        RateMeasure.from_config({"type": "lognormal"})
