import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from bergheat.geometry import build_basis
from bergheat.heat import haar_unitary
from bergheat.matrix_metric import (
    KahlerPotentialSample, PolarBatch, PolarCoords, PositiveMatrix, delta_vector,
    density_ratio, density_ratio_batch, haar_volume_density, kahler_potential, metric_density,
    polar_decompose, potential_values,
)
from bergheat.sphere import integrate_sphere
from conftest import random_positive


def test_delta_vector():
    assert np.allclose(delta_vector(4), [-1.5, -0.5, 0.5, 1.5])
    assert delta_vector(5).sum() == 0


def test_positive_matrix_invariants():
    with pytest.raises(ValueError):
        PositiveMatrix(2.0 * np.eye(3))
    with pytest.raises(ValueError):
        PositiveMatrix(np.diag([2.0, -0.5]))
    with pytest.raises(ValueError):
        PositiveMatrix(np.array([[1.0, 1.0], [0.0, 1.0]]))
    P = PositiveMatrix.normalized(3.0 * np.eye(3))
    assert np.allclose(P.entries, np.eye(3))


def test_positive_matrix_json(rng):
    P = PositiveMatrix(random_positive(rng, 3))
    assert np.allclose(PositiveMatrix.from_json(P.to_json()).entries, P.entries)


def test_potential_identity_is_background():
    k = 5
    basis = build_basis(k)
    z = np.array([0, 0.3 + 0.4j, -2.0 + 1j])
    phi = kahler_potential(KahlerPotentialSample.identity(k), basis, z)
    B = (k + 1) * (1 + np.abs(z) ** 2) ** k
    assert np.allclose(phi, np.log(B) / k, rtol=0, atol=1e-14)


def test_potential_example_k1():
    sample = KahlerPotentialSample.from_matrix(np.diag([2.0, 0.5]), 1)
    assert kahler_potential(sample, build_basis(1), 0.0) == pytest.approx(math.log(4), rel=1e-14)


def test_potential_at_infinity():
    sample = KahlerPotentialSample.from_matrix(np.diag([2.0, 0.5]), 1)
    # flipped frame at infinity only sees the top section: 0.5 * |s_1|^2 = 0.5 * 2
    assert kahler_potential(sample, build_basis(1), None, at_infinity=True) == pytest.approx(0.0, abs=1e-14)


def test_potential_rejects_mismatched_k():
    with pytest.raises(ValueError):
        kahler_potential(KahlerPotentialSample.identity(2), build_basis(3), 0.0)


def test_density_background_is_round():
    k = 4
    z = np.array([0, 0.5j, 3 - 1j, -10.0])
    r = density_ratio(KahlerPotentialSample.identity(k), build_basis(k), z)
    assert np.allclose(r, 1.0, atol=1e-12)


def test_density_k1_rational_formula():
    sample = KahlerPotentialSample.from_matrix(np.diag([4.0, 0.25]), 1)
    basis = build_basis(1)
    # Q = 8 + |z|^2 / 2, dd log Q = a b / (a + b |z|^2)^2 with a = 8, b = 1/2
    g0 = metric_density(sample, basis, 0.0)
    assert g0 == pytest.approx(0.5 / 8, rel=1e-14)
    # round-normalized ratio is b / a at 0 and a / b at infinity
    r_inf = density_ratio(sample, basis, 1e7)
    assert density_ratio(sample, basis, 0.0) / r_inf == pytest.approx(1 / 256, rel=1e-6)


def test_density_matches_finite_differences(rng):
    k = 3
    sample = KahlerPotentialSample.from_matrix(random_positive(rng, k + 1, 0.5), k)
    basis = build_basis(k)
    z, h = 0.3 - 0.2j, 1e-3
    phi = lambda w: kahler_potential(sample, basis, w)
    lap = (phi(z + h) + phi(z - h) + phi(z + 1j * h) + phi(z - 1j * h) - 4 * phi(z)) / h**2
    assert metric_density(sample, basis, z) == pytest.approx(lap / 4, rel=1e-5)


def test_cohomology_invariance(rng):
    for k in (1, 3, 8):
        for _ in range(3):
            sample = KahlerPotentialSample.from_matrix(random_positive(rng, k + 1, 0.7), k)
            basis = build_basis(k)
            total = integrate_sphere(lambda z: density_ratio(sample, basis, z), rtol=1e-9)[0]
            assert total == pytest.approx(2 * math.pi, abs=1e-6)


def test_positivity_on_grid(rng):
    k = 6
    sample = KahlerPotentialSample.from_matrix(random_positive(rng, k + 1, 1.5), k)
    x = np.linspace(-4, 4, 41)
    z = x[:, None] + 1j * x[None, :]
    assert np.all(metric_density(sample, build_basis(k), z) > 0)


def test_gauge_invariance(rng):
    k = 4
    P = random_positive(rng, k + 1)
    U = haar_unitary(k + 1, 7)
    basis = build_basis(k)
    z = np.array([0.1, -1 + 2j, 0.5j])
    a = kahler_potential(KahlerPotentialSample.from_matrix(P, k), basis, z)
    Q = U.conj().T @ P @ U
    b = kahler_potential(KahlerPotentialSample.from_matrix(Q, k), basis.rotated(U.conj().T), z)
    assert np.allclose(a, b, atol=1e-10)


def test_polar_identity():
    pc = polar_decompose(PositiveMatrix(np.eye(3)))
    assert np.allclose(pc.lam, 0)
    assert np.allclose(pc.U, np.eye(3))


@pytest.mark.parametrize("N", [2, 5, 16, 64])
def test_polar_round_trip(rng, N):
    P = random_positive(rng, N, 1.0 / math.sqrt(N))
    pc = polar_decompose(P)
    assert np.all(np.diff(pc.lam) <= 0)
    assert abs(pc.lam.sum()) < 1e-10
    assert np.max(np.abs(pc.matrix().entries - P)) <= 1e-10 * max(1.0, np.max(np.abs(P)))


def test_polar_degenerate_gap():
    eps = 1e-14
    lam = np.array([0.5 + eps, 0.5, -1.0 - eps])
    U = haar_unitary(3, 3)
    P = (U.conj().T * np.exp(lam)) @ U
    pc = polar_decompose(P)
    assert np.allclose(pc.U @ pc.U.conj().T, np.eye(3), atol=1e-12)
    assert np.allclose(pc.matrix().entries, P, atol=1e-10)


def test_polar_deterministic_phase(rng):
    P = random_positive(rng, 4)
    a, b = polar_decompose(P), polar_decompose(P.copy())
    assert np.array_equal(a.U, b.U)
    first = np.array([row[np.flatnonzero(np.abs(row) > 1e-8)[0]] for row in a.U.conj()])
    assert np.allclose(first.imag, 0, atol=1e-12) and np.all(first.real > 0)


def test_polar_rejects_non_hermitian():
    with pytest.raises(ValueError):
        polar_decompose(np.array([[1.0, 2.0], [0.0, 1.0]]))


def test_polar_coords_validation():
    with pytest.raises(ValueError):
        PolarCoords(np.array([1.0, 1.0]), np.eye(2))
    with pytest.raises(ValueError):
        PolarCoords(np.array([1.0, -1.0]), 2 * np.eye(2))
    with pytest.raises(OverflowError):
        PolarCoords(np.array([800.0, -800.0]), np.eye(2)).matrix()


def test_haar_volume_density_examples():
    a = 0.7
    assert haar_volume_density([a, -a]) == pytest.approx((math.exp(-a) - math.exp(a)) ** 2, rel=1e-13)
    assert haar_volume_density([0.0, 0.0]) == 0.0
    assert haar_volume_density([0.0, 0.0], log=True) == -math.inf
    e = math.e
    direct = ((1 - e) * (1 / e - e) * (1 / e - 1)) ** 2
    assert haar_volume_density([1.0, 0.0, -1.0]) == pytest.approx(direct, rel=1e-13)


def test_batch_helpers_match_single(rng):
    k = 3
    coords = [polar_decompose(random_positive(rng, k + 1)) for _ in range(4)]
    batch = PolarBatch.from_coords(coords)
    basis = build_basis(k)
    z = np.array([0.2, 1 - 1j])
    vals = potential_values(batch, basis, z)
    ratios = density_ratio_batch(batch, basis, z)
    for i, c in enumerate(coords):
        s = KahlerPotentialSample(c, k)
        assert np.allclose(vals[i], kahler_potential(s, basis, z), atol=1e-13)
        assert np.allclose(ratios[i], density_ratio(s, basis, z), rtol=1e-12)
    assert len(batch[1:3]) == 2


@given(st.lists(st.floats(-3, 3), min_size=2, max_size=6))
def test_haar_density_log_consistent(values):
    lam = np.array(values) - np.mean(values)
    d = haar_volume_density(lam)
    ld = haar_volume_density(lam, log=True)
    if d > 1e-300:
        assert math.log(d) == pytest.approx(ld, rel=1e-9, abs=1e-9)
