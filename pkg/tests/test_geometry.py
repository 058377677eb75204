import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from bergheat.geometry import (
    ManifoldModel, PointPair, SectionBasis, berezin_rho, berezin_rho_round, bergman_kernel,
    build_basis, diastasis, gram_matrix, gram_schmidt_basis, point_at_rho, scaled_pair,
)
from bergheat.heat import haar_unitary

coord = st.complex_numbers(max_magnitude=5.0, allow_nan=False, allow_infinity=False)


def test_model_validation():
    assert ManifoldModel(3).N == 4
    with pytest.raises(ValueError):
        ManifoldModel(0)
    with pytest.raises(ValueError):
        ManifoldModel(2, area_normalization=-1.0)


@pytest.mark.parametrize("k", [1, 2, 5, 8])
def test_closed_form_basis_is_orthonormal(k):
    G = gram_matrix(build_basis(k))
    assert np.allclose(G, np.eye(k + 1), atol=1e-10)


@pytest.mark.parametrize("k", [1, 4, 9, 16])
def test_numerical_basis_reproduces_kernel(k):
    num, exact = gram_schmidt_basis(k), build_basis(k)
    z1 = np.array([0.3 + 0.1j, -1.2 + 0.5j, 2.0j])
    z2 = np.array([0.0, 0.7 - 0.2j, -0.4 + 1.1j])
    a, b = bergman_kernel(num, z1, z2), bergman_kernel(exact, z1, z2)
    scale = np.sqrt(bergman_kernel(exact, z1, z1).real * bergman_kernel(exact, z2, z2).real)
    assert np.max(np.abs(a - b) / scale) <= 1e-8


def test_kernel_diagonal_closed_form():
    k, z = 6, 0.4 - 0.9j
    B = bergman_kernel(build_basis(k), z, z)
    assert B.real == pytest.approx((k + 1) * (1 + abs(z) ** 2) ** k, rel=1e-12)


def test_rho_examples():
    assert berezin_rho(build_basis(3), PointPair(0.5j, 0.5j)).rho == pytest.approx(1.0)
    assert berezin_rho(build_basis(1), PointPair(0, 1)).rho == pytest.approx(0.5, abs=1e-15)
    assert berezin_rho(build_basis(4), PointPair(0, 1)).rho == pytest.approx(1 / 16, abs=1e-15)


def test_rho_with_point_at_infinity():
    basis = build_basis(3)
    assert berezin_rho(basis, PointPair(0, 0, inf2=True)).rho == pytest.approx(0.0, abs=1e-15)
    r = berezin_rho(basis, PointPair(1.0, 0, inf2=True)).rho
    assert r == pytest.approx(berezin_rho_round(3, 1.0, 1e8), rel=1e-6)


def test_point_pair_rejects_non_finite():
    with pytest.raises(ValueError):
        PointPair(complex(np.inf), 0)


def test_diastasis_examples():
    assert diastasis(build_basis(2), PointPair(1j, 1j)) == pytest.approx(0.0, abs=1e-15)
    assert diastasis(build_basis(1), PointPair(0, 1)) == pytest.approx(math.log(2), rel=1e-14)
    pair = PointPair(0.2 + 0.3j, -0.7j)
    assert diastasis(build_basis(1), pair) == pytest.approx(diastasis(build_basis(8), pair), rel=1e-12)
    with pytest.raises(ValueError):
        diastasis(build_basis(2), PointPair(0, 0, inf2=True))


def test_off_diagonal_decay_is_log_linear():
    pair = PointPair(0.3, -0.5 + 0.2j)
    ks = np.arange(1, 12)
    logs = [math.log(berezin_rho(build_basis(int(k)), pair).rho) for k in ks]
    assert np.allclose(np.diff(logs), logs[0], rtol=1e-10)


def test_scaled_pair():
    assert berezin_rho(build_basis(16), scaled_pair(0, 0, 16)).rho == pytest.approx(1.0)
    r64 = berezin_rho(build_basis(64), scaled_pair(0, 1.0, 64)).rho
    assert abs(r64 / math.exp(-1) - 1) < 1 / math.sqrt(64)
    r256 = berezin_rho(build_basis(256), scaled_pair(0, 2.0, 256)).rho
    assert abs(r256 / math.exp(-4) - 1) < 0.1
    with pytest.raises(ValueError):
        scaled_pair(0, 100.0, 16)


def test_point_at_rho_hits_target():
    for z0 in (0, 0.4 - 0.3j, 2.0):
        w = point_at_rho(5, 0.37, z0, 1j)
        assert berezin_rho_round(5, z0, w) == pytest.approx(0.37, rel=1e-12)


def test_basis_json_round_trip():
    basis = build_basis(3).rotated(haar_unitary(4, 1))
    back = SectionBasis.from_json(basis.to_json())
    assert np.allclose(back.coeffs, basis.coeffs)


def test_basis_shape_validation():
    with pytest.raises(ValueError):
        SectionBasis(2, np.eye(2))


@given(coord, coord)
def test_rho_symmetric_and_bounded(z1, z2):
    basis = build_basis(5)
    a = berezin_rho(basis, PointPair(z1, z2)).rho
    b = berezin_rho(basis, PointPair(z2, z1)).rho
    assert a == b
    assert 0.0 <= a <= 1.0
    assert a == pytest.approx(float(berezin_rho_round(5, z1, z2)), rel=1e-9, abs=1e-14)


@given(coord, coord, st.integers(0, 2**32 - 1))
def test_rho_basis_independent(z1, z2, seed):
    basis = build_basis(4)
    U = haar_unitary(5, seed)
    a = berezin_rho(basis, PointPair(z1, z2)).rho
    b = berezin_rho(basis.rotated(U), PointPair(z1, z2)).rho
    assert abs(a - b) <= 1e-12
