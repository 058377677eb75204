"""Background Kahler geometry of the Riemann sphere.

The line bundle is O(k) with the Fubini-Study weight ``(1 + |z|^2)^{-k}`` and
the round area form of total area ``2 pi``.  Holomorphic sections are
polynomials of degree <= k in the affine coordinate ``z``; a point at infinity
is handled in the flipped chart ``w = 1/z``.
"""

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln

from . import sphere
from ._validation import check_positive_int


@dataclass(frozen=True)
class ManifoldModel:
    k: int
    area_normalization: float = 2.0 * np.pi

    def __post_init__(self):
        check_positive_int(self.k, "k")
        if not self.area_normalization > 0:
            raise ValueError("area_normalization must be positive")

    @property
    def N(self):
        return self.k + 1


@dataclass(frozen=True)
class PointPair:
    """Two points of the sphere.  ``inf1``/``inf2`` mark the point at infinity."""

    z1: complex
    z2: complex
    inf1: bool = False
    inf2: bool = False

    def __post_init__(self):
        for z, flag in ((self.z1, self.inf1), (self.z2, self.inf2)):
            if not flag and not np.isfinite(complex(z)):
                raise ValueError("finite chart coordinate required unless the infinity flag is set")

    def swapped(self):
        return PointPair(self.z2, self.z1, self.inf2, self.inf1)


@dataclass(frozen=True)
class BerezinValue:
    rho: float

    def __post_init__(self):
        if not -1e-12 <= self.rho <= 1 + 1e-12:
            raise ValueError(f"Berezin kernel must lie in [0, 1], got {self.rho}")

    def __float__(self):
        return float(self.rho)


def _monomial_norms(k):
    """Squared norms of ``z^j`` in the normalized background inner product."""
    j = np.arange(k + 1)
    return np.exp(gammaln(j + 1) + gammaln(k - j + 1) - gammaln(k + 2))


@dataclass(frozen=True, eq=False)
class SectionBasis:
    """Orthonormal sections ``s_i(z) = sum_j coeffs[i, j] z^j``."""

    k: int
    coeffs: np.ndarray = field(repr=False)

    def __post_init__(self):
        check_positive_int(self.k, "k")
        c = np.asarray(self.coeffs, dtype=complex)
        if c.shape != (self.k + 1, self.k + 1):
            raise ValueError(f"coeffs must have shape {(self.k + 1, self.k + 1)}, got {c.shape}")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @property
    def N(self):
        return self.k + 1

    def values(self, z, at_infinity=False):
        """Section vector ``s(z)`` with shape ``z.shape + (N,)``.

        At infinity the flipped-chart frame is used, where only the top
        monomial survives.
        """
        if at_infinity:
            e = np.zeros(self.N)
            e[-1] = 1.0
            return self.coeffs @ e
        z = np.asarray(z, dtype=complex)
        powers = z[..., None] ** np.arange(self.N)
        return powers @ self.coeffs.T

    def derivatives(self, z):
        """``d s / dz`` in the affine chart, same shape as :meth:`values`."""
        z = np.asarray(z, dtype=complex)
        j = np.arange(self.N)
        powers = np.where(j > 0, j * z[..., None] ** np.maximum(j - 1, 0), 0.0)
        return powers @ self.coeffs.T

    def flipped_values(self, w):
        """Section vector in the chart ``w = 1/z`` (frame ``z^k``)."""
        w = np.asarray(w, dtype=complex)
        powers = w[..., None] ** (self.k - np.arange(self.N))
        return powers @ self.coeffs.T

    def flipped_derivatives(self, w):
        w = np.asarray(w, dtype=complex)
        e = self.k - np.arange(self.N)
        powers = np.where(e > 0, e * w[..., None] ** np.maximum(e - 1, 0), 0.0)
        return powers @ self.coeffs.T

    def rotated(self, U):
        """Basis ``U s``; still orthonormal when ``U`` is unitary."""
        return SectionBasis(self.k, np.asarray(U) @ self.coeffs)

    def to_json(self):
        c = self.coeffs.ravel()
        return json.dumps({"k": self.k, "coeffs": [[float(x.real), float(x.imag)] for x in c]})

    @classmethod
    def from_json(cls, text):
        data = json.loads(text)
        k = int(data["k"])
        flat = np.array([complex(re, im) for re, im in data["coeffs"]])
        return cls(k, flat.reshape(k + 1, k + 1))


def build_basis(k):
    """Closed-form orthonormal basis ``s_j = sqrt((k+1) binom(k, j)) z^j``."""
    k = check_positive_int(k, "k")
    c = 1.0 / np.sqrt(_monomial_norms(k))
    return SectionBasis(k, np.diag(c).astype(complex))


def gram_matrix(basis, rtol=1e-10):
    """Gram matrix of ``basis`` under the background inner product, by quadrature."""
    k = basis.k

    def integrand(z):
        s = basis.values(z)
        weight = (1.0 + np.abs(z) ** 2) ** (-k)
        return np.einsum("...i,...j->...ij", s.conj(), s) * weight[..., None, None]

    n = 8
    prev = None
    while True:
        z, W = sphere.tensor_rule(n, max(2 * k + 2, 8))
        G = np.einsum("ab,abij->ij", W, integrand(z)) / sphere.AREA
        if prev is not None and np.max(np.abs(G - prev)) <= rtol * np.max(np.abs(G)):
            return G
        if n > 1024:
            raise RuntimeError("Gram matrix quadrature did not converge")
        prev = G
        n *= 2


def gram_schmidt_basis(k, rtol=1e-12):
    """Orthonormalize the monomials numerically (Cholesky of the Gram matrix)."""
    k = check_positive_int(k, "k")
    monomials = SectionBasis(k, np.eye(k + 1, dtype=complex))
    G = gram_matrix(monomials, rtol=rtol)
    L = np.linalg.cholesky(G)
    # s = L^{-1} m has identity Gram matrix when G = L L^H and G_ij = <m_i, m_j>
    coeffs = np.linalg.inv(L.conj())
    return SectionBasis(k, coeffs)


def _section_vector(basis, z, at_infinity):
    return basis.values(z, at_infinity=at_infinity)


def bergman_kernel(basis, z1, z2):
    """``B_k(z1, z2) = sum_j s_j(z1) conj(s_j(z2))`` (broadcasts over arrays)."""
    s1 = basis.values(z1)
    s2 = basis.values(z2)
    return np.sum(s1 * s2.conj(), axis=-1)


def berezin_rho(basis, pair):
    """Berezin kernel ``|B(z1,z2)|^2 / (B(z1,z1) B(z2,z2))`` of a point pair."""
    s1 = _section_vector(basis, pair.z1, pair.inf1)
    s2 = _section_vector(basis, pair.z2, pair.inf2)
    num = abs(np.vdot(s2, s1)) ** 2
    den = np.vdot(s1, s1).real * np.vdot(s2, s2).real
    return BerezinValue(float(min(1.0, num / den)))


def berezin_rho_round(k, z1, z2):
    """Closed form of the Berezin kernel for the round sphere (arrays allowed)."""
    z1 = np.asarray(z1, dtype=complex)
    z2 = np.asarray(z2, dtype=complex)
    base = np.abs(1 + z1 * z2.conj()) ** 2 / ((1 + np.abs(z1) ** 2) * (1 + np.abs(z2) ** 2))
    return base**k


def diastasis(basis, pair):
    """Calabi diastasis ``-(1/k) log rho``."""
    rho = berezin_rho(basis, pair).rho
    if rho <= 0.0:
        raise ValueError("antipodal pair: the diastasis is infinite")
    return max(0.0, -np.log(rho) / basis.k)


def local_scale(z):
    """Background metric density ``d dbar log(1 + |z|^2)`` at ``z``.

    This is the constant that turns ``z + u / sqrt(k * local_scale(z))`` into a
    pair with Berezin kernel tending to ``exp(-|u|^2)``; it equals 1 at z = 0.
    """
    return 1.0 / (1.0 + abs(z) ** 2) ** 2


def scaled_pair(z, u, k, b=2.0):
    """Near-diagonal pair ``(z, z + u / sqrt(k * local_scale(z)))``."""
    k = check_positive_int(k, "k")
    z = complex(z)
    u = complex(u)
    if not np.isfinite(z):
        raise ValueError("base point must lie in the affine chart")
    bound = b * np.sqrt(np.log(k)) if k > 1 else b
    if abs(u) > bound:
        raise ValueError(f"|u| = {abs(u):.3g} exceeds the near-diagonal bound {bound:.3g}")
    z2 = z + u / np.sqrt(k * local_scale(z))
    if not np.isfinite(z2):
        raise ValueError("scaled point leaves the chart")
    return PointPair(z, z2)


def point_at_rho(k, rho, z0=0.0, direction=1.0):
    """A point ``w`` with ``rho(z0, w) = rho`` on the round sphere.

    The partner is placed along ``direction`` from ``z0`` using the Mobius
    isometry that moves 0 to ``z0``.
    """
    if not 0.0 < rho <= 1.0:
        raise ValueError("rho must lie in (0, 1]")
    r = np.sqrt(rho ** (-1.0 / k) - 1.0)
    w = r * complex(direction) / abs(direction)
    return mobius_from_origin(z0, w)


def mobius_from_origin(z0, w):
    """Image of ``w`` under the rotation of the sphere that sends 0 to ``z0``."""
    z0 = complex(z0)
    return (w + z0) / (1.0 - np.conj(z0) * w)
