"""Matrix-metric correspondence: positive Hermitian matrices to Bergman metrics.

A positive matrix ``P = U^H exp(Lambda) U`` (``det P = 1``) gives the Kahler
potential ``phi_P = (1/k) log(conj(s)^T P s)``.  Everything is evaluated in
polar coordinates with a log-sum-exp shift, so matrices far out in the
symmetric space (large ``|lambda|``) never need their entries formed.
"""

import json
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.special import logsumexp

from ._validation import check_hermitian, check_positive_int, check_traceless


def delta_vector(N):
    """Half sum of positive roots ``(-(N-1)/2, ..., (N-1)/2)``."""
    N = check_positive_int(N, "N")
    return np.arange(N) - (N - 1) / 2.0


@dataclass(frozen=True, eq=False)
class PositiveMatrix:
    """Positive definite Hermitian matrix normalized to ``det P = 1``."""

    entries: np.ndarray = field(repr=False)

    def __post_init__(self):
        P = check_hermitian(self.entries, name="P")
        P = 0.5 * (P + P.conj().T)
        w = np.linalg.eigvalsh(P)
        if w[0] <= 0:
            raise ValueError("P must be positive definite")
        logdet = np.sum(np.log(w))
        if abs(logdet) > 1e-10:
            raise ValueError(f"det P must be 1, got log det {logdet:.3e}; use PositiveMatrix.normalized")
        P.setflags(write=False)
        object.__setattr__(self, "entries", P)

    @classmethod
    def normalized(cls, A):
        """Rescale a positive Hermitian matrix to unit determinant."""
        A = check_hermitian(A, name="P")
        A = 0.5 * (A + A.conj().T)
        w = np.linalg.eigvalsh(A)
        if w[0] <= 0:
            raise ValueError("P must be positive definite")
        return cls(A * np.exp(-np.mean(np.log(w))))

    @property
    def N(self):
        return self.entries.shape[0]

    def to_json(self):
        return json.dumps({
            "N": self.N,
            "entries": [[float(x.real), float(x.imag)] for x in self.entries.ravel()],
        })

    @classmethod
    def from_json(cls, text):
        data = json.loads(text)
        N = int(data["N"])
        flat = np.array([complex(re, im) for re, im in data["entries"]])
        return cls(flat.reshape(N, N))


@dataclass(frozen=True, eq=False)
class PolarCoords:
    """``P = U^H diag(exp(lam)) U`` with ``lam`` descending and summing to zero."""

    lam: np.ndarray
    U: np.ndarray = field(repr=False)

    def __post_init__(self):
        lam = check_traceless(self.lam)
        U = np.asarray(self.U, dtype=complex)
        N = lam.size
        if U.shape != (N, N):
            raise ValueError(f"U must be {N}x{N}")
        if np.max(np.abs(U.conj().T @ U - np.eye(N))) > 1e-10:
            raise ValueError("U must be unitary")
        if np.any(np.diff(lam) > 0):
            order = np.argsort(-lam, kind="stable")
            lam, U = lam[order], U[order]
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "U", U)

    @property
    def N(self):
        return self.lam.size

    def matrix(self):
        if np.max(self.lam) > 700:
            raise OverflowError("matrix entries overflow; keep the sample in polar form")
        return PositiveMatrix.normalized((self.U.conj().T * np.exp(self.lam)) @ self.U)


def polar_decompose(P):
    """Polar coordinates of ``P`` with a deterministic eigenvector phase.

    Eigenvalues are sorted descending; each eigenvector is rotated so its
    first non-negligible component is real and positive.
    """
    A = P.entries if isinstance(P, PositiveMatrix) else check_hermitian(P, name="P")
    A = 0.5 * (A + A.conj().T)
    w, V = np.linalg.eigh(A)
    if w[0] <= 0:
        raise ValueError("P must be positive definite")
    order = np.argsort(-w, kind="stable")
    w, V = w[order], V[:, order]
    for i in range(V.shape[1]):
        v = V[:, i]
        idx = np.flatnonzero(np.abs(v) > 1e-8)[0]
        V[:, i] = v * (abs(v[idx]) / v[idx])
    lam = np.log(w)
    lam = lam - lam.mean()
    return PolarCoords(lam, V.conj().T)


def haar_volume_density(lam, log=False):
    """Radial Haar density ``prod_{i<j} (e^{lam_j} - e^{lam_i})^2``.

    With ``log=True`` returns the log-density (``-inf`` at coincident
    eigenvalues).
    """
    lam = check_traceless(lam)
    i, j = np.triu_indices(lam.size, 1)
    a, b = lam[i], lam[j]
    gap = np.abs(a - b)
    with np.errstate(divide="ignore"):
        logs = np.maximum(a, b) + np.log(-np.expm1(-gap))
    value = 2.0 * float(np.sum(logs))
    return value if log else float(np.exp(value))


@dataclass(frozen=True, eq=False)
class PolarBatch:
    """A batch of polar samples: ``lam`` of shape (n, N), ``U`` of shape (n, N, N)."""

    lam: np.ndarray
    U: np.ndarray = field(repr=False)
    manifest: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        lam = np.atleast_2d(np.asarray(self.lam, dtype=float))
        U = np.asarray(self.U, dtype=complex)
        if U.ndim == 2:
            U = U[None]
        if U.shape != lam.shape + (lam.shape[1],):
            raise ValueError(f"U shape {U.shape} does not match lam shape {lam.shape}")
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "U", U)

    def __len__(self):
        return self.lam.shape[0]

    def __getitem__(self, idx):
        if isinstance(idx, (int, np.integer)):
            return PolarCoords(self.lam[idx], self.U[idx])
        return PolarBatch(self.lam[idx], self.U[idx], self.manifest)

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]

    @property
    def N(self):
        return self.lam.shape[1]

    @classmethod
    def from_coords(cls, coords, manifest=None):
        coords = list(coords)
        return cls(np.stack([c.lam for c in coords]), np.stack([c.U for c in coords]), manifest or {})


@dataclass(eq=False)
class KahlerPotentialSample:
    """A random matrix together with the tensor power it is paired with."""

    polar: PolarCoords
    k: int
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        check_positive_int(self.k, "k")
        if isinstance(self.polar, PositiveMatrix):
            self.polar = polar_decompose(self.polar)
        if self.polar.N != self.k + 1:
            raise ValueError(f"matrix size {self.polar.N} does not match N = k + 1 = {self.k + 1}")

    @classmethod
    def from_matrix(cls, P, k):
        if not isinstance(P, PositiveMatrix):
            P = PositiveMatrix(P)
        return cls(polar_decompose(P), k)

    @cached_property
    def P(self):
        return self.polar.matrix()

    @classmethod
    def identity(cls, k):
        N = k + 1
        return cls(PolarCoords(np.zeros(N), np.eye(N)), k)


def _log_quadratic_form(lam, U, svals):
    """``log sum_i exp(lam_i) |(U s)_i|^2`` for batches.

    lam: (n, N); U: (n, N, N); svals: (m, N)  ->  (n, m)
    """
    V = np.einsum("nij,mj->nim", U, svals)
    with np.errstate(divide="ignore"):
        logs = np.log(np.abs(V) ** 2) + lam[:, :, None]
    return logsumexp(logs, axis=1)


def _chart_vectors(basis, z, at_infinity):
    if at_infinity:
        return basis.values(0, at_infinity=True)[None]
    return basis.values(np.atleast_1d(np.asarray(z, dtype=complex)))


def kahler_potential(sample, basis, z, at_infinity=False):
    """``phi_P(z) = (1/k) log(conj(s(z))^T P s(z))``.

    At infinity the flipped chart frame is used.  ``z`` may be an array.
    """
    if basis.k != sample.k:
        raise ValueError("basis and sample have different k")
    zz = np.atleast_1d(np.asarray(z, dtype=complex))
    key = (bool(at_infinity), zz.tobytes())
    if key not in sample._cache:
        s = _chart_vectors(basis, zz, at_infinity)
        vals = _log_quadratic_form(sample.polar.lam[None], sample.polar.U[None], s)[0] / sample.k
        sample._cache[key] = vals
    vals = sample._cache[key]
    return float(vals[0]) if np.ndim(z) == 0 or at_infinity else vals.reshape(np.shape(z))


def potential_values(batch, basis, points):
    """Potentials ``phi_P(z_m)`` for every sample in a :class:`PolarBatch`: (n, m)."""
    s = basis.values(np.asarray(points, dtype=complex).ravel())
    return _log_quadratic_form(batch.lam, batch.U, s) / basis.k


def metric_density(sample, basis, z):
    """Coefficient ``g`` of the Bergman metric ``omega_P = i g dz ^ dzbar``.

    ``g = (1/k) d dbar log Q`` with ``Q = sum_i e^{lam_i} |(U s)_i|^2``, computed
    exactly through the Lagrange identity
    ``Q d dbar Q - |dQ|^2 = sum_{i<j} w_i w_j |v_i v_j' - v_j v_i'|^2``.
    The area form in Lebesgue measure is ``2 g dx dy``.
    """
    z = np.asarray(z, dtype=complex)
    lam, U = sample.polar.lam, sample.polar.U
    v = basis.values(z) @ U.T
    dv = basis.derivatives(z) @ U.T
    w = np.exp(lam - lam.max())
    Q = np.sum(w * np.abs(v) ** 2, axis=-1)
    cross = v[..., :, None] * dv[..., None, :] - v[..., None, :] * dv[..., :, None]
    num = 0.5 * np.sum(w[:, None] * w[None, :] * np.abs(cross) ** 2, axis=(-2, -1))
    return num / (sample.k * Q**2)


def density_ratio(sample, basis, z):
    """``omega_P / omega_0`` as a function on the sphere (chart independent)."""
    z = np.asarray(z, dtype=complex)
    return metric_density(sample, basis, z) * (1.0 + np.abs(z) ** 2) ** 2


def density_ratio_batch(batch, basis, points, chunk=256):
    """``omega_P / omega_0`` at ``points`` for every sample: shape (n, m)."""
    z = np.asarray(points, dtype=complex).ravel()
    s = basis.values(z)
    ds = basis.derivatives(z)
    conformal = (1.0 + np.abs(z) ** 2) ** 2
    out = np.empty((len(batch), z.size))
    for lo in range(0, len(batch), chunk):
        U = batch.U[lo:lo + chunk]
        lam = batch.lam[lo:lo + chunk]
        v = np.einsum("nij,mj->nmi", U, s)
        dv = np.einsum("nij,mj->nmi", U, ds)
        w = np.exp(lam - lam.max(axis=1, keepdims=True))
        Q = np.einsum("ni,nmi->nm", w, np.abs(v) ** 2)
        cross = v[..., :, None] * dv[..., None, :] - v[..., None, :] * dv[..., :, None]
        num = 0.5 * np.einsum("ni,nj,nmij->nm", w, w, np.abs(cross) ** 2)
        out[lo:lo + chunk] = num / (basis.k * Q**2) * conformal
    return out
