import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.special import spence

from bergheat.heat import HeatParams, eigen_log_density
from bergheat.oracle import (
    BiPotentialQuery, QuadratureError, amplitude, bipotential_difference, d_rho_bipotential,
    d_rho_limit, dilog, energy_entropy_exponent, gaussian_vandermonde_identity, hciz,
    hciz_monte_carlo, j_integral, small_rho_integral,
)

# dI/drho from the unsimplified integrand in 100-digit arithmetic (mpmath), frozen
FROZEN_D_RHO = [
    (1.0, 0.3, 0.844667087660412),
    (1.0, 0.6, 1.02482521399674),
    (5.0, 0.5, 1.3677519680188),
    (0.5, 0.9, 0.866246433065923),
    (2.0, 0.01, 0.900127514031556),
]


@pytest.mark.parametrize("t,rho,value", FROZEN_D_RHO)
def test_d_rho_frozen(t, rho, value):
    rep = d_rho_bipotential(t, rho)
    assert rep.value == pytest.approx(value, rel=1e-10)
    assert rep.abs_error_estimate < 1e-10
    assert rep.evaluations > 0


def test_query_validation():
    with pytest.raises(ValueError):
        BiPotentialQuery(1.0, 1.0)
    with pytest.raises(ValueError):
        BiPotentialQuery(-1.0, 0.5)
    rep = d_rho_bipotential(BiPotentialQuery(1.0, 0.3))
    assert rep.to_dict()["value"] == pytest.approx(FROZEN_D_RHO[0][2], rel=1e-10)


def test_unreachable_tolerance_raises():
    with pytest.raises(QuadratureError) as info:
        d_rho_bipotential(1.0, 0.5, tolerance=1e-30)
    assert math.isfinite(info.value.estimate)


def test_amplitude_basics():
    assert amplitude(0.0, 0.4) == 0.0
    lam = np.array([0.3, 1.7])
    assert np.allclose(amplitude(lam, 0.4), amplitude(-lam, 0.4))
    # rho = 0: A = 2 tanh(lam) log(cosh lam + sinh lam) = 2 lam tanh(lam)
    assert np.allclose(amplitude(lam, 0.0), 2 * lam * np.tanh(lam), rtol=1e-14)


@pytest.mark.parametrize("t", [0.1, 1.0, 10.0, 100.0])
def test_small_rho_integral_is_two_t(t):
    assert small_rho_integral(t) == pytest.approx(2 * t, rel=1e-11)


def test_small_rho_branch_is_continuous():
    t = 1.5
    lo = d_rho_bipotential(t, 0.999e-3).value
    hi = d_rho_bipotential(t, 1.001e-3).value
    assert lo == pytest.approx(hi, abs=1e-5)
    below = d_rho_bipotential(t, 1e-3, rho_switch=1.0).value
    above = d_rho_bipotential(t, 1e-3, rho_switch=0.0).value
    assert below == pytest.approx(above, rel=1e-8)


def test_d_rho_finite_as_rho_to_zero():
    vals = [d_rho_bipotential(2.0, r).value for r in (1e-4, 1e-6, 1e-8)]
    assert max(vals) - min(vals) < 1e-3
    assert all(math.isfinite(v) for v in vals)


def test_d_rho_increasing_in_rho():
    rhos = np.linspace(0.05, 0.95, 10)
    vals = [d_rho_bipotential(1.0, r).value for r in rhos]
    assert np.all(np.diff(vals) > 0)


def test_large_t_limit():
    for rho in (0.2, 0.5, 0.8):
        assert d_rho_bipotential(200.0, rho).value == pytest.approx(float(d_rho_limit(rho)), rel=1e-8)
    assert d_rho_limit(0.0) == 1.0


def test_convergence_to_limit_is_exponential():
    errs = [abs(d_rho_bipotential(t, 0.5).value - float(d_rho_limit(0.5))) for t in (10.0, 20.0, 40.0)]
    assert errs[0] > errs[1] > errs[2]
    # successive doublings shrink the error far faster than 1/t would
    assert errs[2] / errs[1] < 0.1


def test_bipotential_difference():
    rep = bipotential_difference(1.0, 0.3, 0.6)
    assert rep.value == pytest.approx(0.27781272694827913, rel=1e-9)
    big = bipotential_difference(200.0, 0.3, 0.6)
    assert big.value == pytest.approx(dilog(0.6) - dilog(0.3), rel=1e-8)
    with pytest.raises(ValueError):
        bipotential_difference(1.0, 0.6, 0.3)


def test_dilog_special_values():
    assert dilog(0.0) == 0.0
    assert dilog(1.0) == pytest.approx(math.pi**2 / 6, rel=1e-15)
    assert dilog(0.5) == pytest.approx(math.pi**2 / 12 - math.log(2) ** 2 / 2, rel=1e-14)
    with pytest.raises(ValueError):
        dilog(1.5)


@given(st.floats(0.0, 1.0))
def test_dilog_matches_spence(x):
    assert dilog(x) == pytest.approx(float(spence(1.0 - x)), rel=1e-12, abs=1e-15)


def test_hciz_small_cases():
    assert hciz([0.7], [1.3], mu=2.0) == pytest.approx(math.exp(2 * 0.7 * 1.3), rel=1e-14)
    assert hciz([1.0, 2.0], [3.0, -1.0], mu=0) == 1.0
    a, b = np.array([0.5, -0.2]), np.array([1.1, 0.4])
    expected = (math.exp(a[0] * b[0] + a[1] * b[1]) - math.exp(a[0] * b[1] + a[1] * b[0])) / (
        (a[0] - a[1]) * (b[0] - b[1]))
    assert hciz(a, b) == pytest.approx(expected, rel=1e-13)


def test_hciz_symmetry_and_zero_argument():
    a, b = [0.3, -0.1, 0.9], [1.0, 0.2, -0.5]
    assert hciz(a, b) == pytest.approx(hciz(b, a), rel=1e-12)
    assert hciz(a, b) == pytest.approx(hciz(a[::-1], b), rel=1e-12)
    # B = c I gives exp(mu c Tr A)
    assert hciz(a, [0.4] * 3) == pytest.approx(math.exp(0.4 * sum(a)), rel=1e-9)


def test_hciz_confluent_is_continuous():
    a = [0.6, 0.6, -0.3]
    b = [0.2, -0.4, 1.0]
    near = hciz([0.6 + 1e-4, 0.6 - 1e-4, -0.3], b)
    assert hciz(a, b) == pytest.approx(near, rel=1e-6)


def test_hciz_against_monte_carlo():
    a, b = [0.5, 0.0, -0.5], [0.8, -0.1, -0.7]
    mean, se = hciz_monte_carlo(a, b, n=200_000, random_state=1)
    assert abs(mean - hciz(a, b)) < 4 * se
    with pytest.raises(ValueError):
        hciz([1.0], [1.0, 2.0])


@pytest.mark.parametrize("mu,t", [([0.3, -0.3], 1.0), ([0.5, 0.1, -0.6], 0.7), ([1.0, 0.2, -0.4, -0.8], 0.5)])
def test_gaussian_vandermonde_identity(mu, t):
    lhs, rhs = gaussian_vandermonde_identity(np.array(mu), t)
    assert lhs == pytest.approx(rhs, rel=1e-10)


def test_energy_entropy_exponent_n2():
    value = energy_entropy_exponent(np.array([1.0, -1.0]), 1.0, 1)
    assert value == pytest.approx(math.log(2) + math.log(2 * math.sinh(1.0)) - 1.0, rel=1e-14)
    assert value == pytest.approx(0.5477337226910861, rel=1e-14)
    with pytest.raises(ValueError):
        energy_entropy_exponent(np.array([1.0, -1.0]), 1.0, 3)


@given(st.lists(st.floats(-4, 4), min_size=2, max_size=7, unique=True), st.floats(0.2, 5))
def test_energy_entropy_matches_density(values, t):
    lam = np.array(values) - np.mean(values)
    if np.min(np.abs(np.subtract.outer(lam, lam))[~np.eye(lam.size, dtype=bool)]) < 1e-6:
        return
    N = lam.size
    lhs = energy_entropy_exponent(lam, t, N - 1)
    rhs = eigen_log_density(lam, HeatParams(N, t / N))
    assert lhs == pytest.approx(rhs, rel=1e-10, abs=1e-10)


def test_j_integral_report():
    rep = j_integral(1.0, 0.0)
    assert rep.value == pytest.approx(2.0, rel=1e-12)
