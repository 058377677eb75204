"""Geodesic-ray degeneration of Bergman potentials and Gaussian random zeros.

Conventions
-----------
* The limit of the normalized metrics along a ray pairs with test functions
  as ``(2 pi / k) sum_roots psi``: with ``omega`` of total area ``2 pi`` the
  constant function gives ``2 pi`` on both sides.
* Zero-count statistics use the raw root sum ``X = sum_roots f``.
* Boundary lengths are measured in the round metric of area ``pi``.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import matrix_balance
from scipy.special import gammaln, logsumexp, spence, zeta
from sklearn.base import BaseEstimator

from ._validation import check_positive_int, check_rng, check_traceless, seed_sequence
from .geometry import _monomial_norms, build_basis
from .sphere import AREA, chart_point, integrate_sphere_singular, sphere_coords

NU1 = zeta(1.5) / (8 * math.pi**1.5)


# --- geodesic rays -------------------------------------------------------

@dataclass(frozen=True, eq=False)
class RayDirection:
    """Initial vector ``(U, Lambda)`` of the ray ``t -> U^H e^{t Lambda} U``."""

    lam: np.ndarray
    U: np.ndarray
    multiplicity_tol: float = 1e-9

    def __post_init__(self):
        lam = check_traceless(self.lam)
        U = np.asarray(self.U, dtype=complex)
        if U.shape != (lam.size, lam.size):
            raise ValueError("U must be N x N")
        if not np.allclose(U @ U.conj().T, np.eye(lam.size), atol=1e-10):
            raise ValueError("U must be unitary")
        order = np.argsort(-lam, kind="stable")
        object.__setattr__(self, "lam", lam[order])
        object.__setattr__(self, "U", U[order])

    @classmethod
    def from_polar(cls, polar):
        return cls(polar.lam, polar.U)

    @property
    def N(self):
        return self.lam.size

    @property
    def multiplicity(self):
        return int(np.sum(self.lam >= self.lam[0] - self.multiplicity_tol))

    @property
    def spectral_gap(self):
        r = self.multiplicity
        return float(self.lam[0] - self.lam[r]) if r < self.N else math.inf

    def top_section_coeffs(self, basis):
        """Monomial coefficients of the rotated sections ``(U s)_j``: rows of ``U @ coeffs``."""
        return self.U @ basis.coeffs


def _unit_frame(basis, z):
    """Rotation-covariant section values scaled by ``(1+|z|^2)^{-k/2}``."""
    z = np.asarray(z, dtype=complex)
    return basis.values(z) * np.exp(-0.5 * basis.k * np.log1p(np.abs(z) ** 2))[..., None]


def ray_potential(ray, s, basis, z):
    """``beta_s(z) = (1/k) log sum_j e^{s lam_j} |(U s)_j(z)|^2`` in the log domain."""
    if s < 0:
        raise ValueError("ray time must be nonnegative")
    z = np.asarray(z, dtype=complex)
    v = basis.values(z) @ ray.U.T
    with np.errstate(divide="ignore"):
        logs = np.log(np.abs(v) ** 2) + s * ray.lam
    return logsumexp(logs, axis=-1) / basis.k


def limit_potential(ray, basis, z):
    """``(1/k) log sum_{j <= r} |(U s)_j(z)|^2`` with ``r`` the top multiplicity."""
    z = np.asarray(z, dtype=complex)
    v = (basis.values(z) @ ray.U.T)[..., : ray.multiplicity]
    with np.errstate(divide="ignore"):
        return np.log(np.sum(np.abs(v) ** 2, axis=-1)) / basis.k


def _log_ratio(ray, s, basis, z):
    """``(1/k) log(F_s / F_inf)`` where ``F_s = sum_j e^{s (lam_j - lam_max)} |s_j|^2``."""
    v = _unit_frame(basis, z) @ ray.U.T
    r = ray.multiplicity
    top = np.sum(np.abs(v[..., :r]) ** 2, axis=-1)
    rest = np.sum(np.exp(s * (ray.lam[r:] - ray.lam[0])) * np.abs(v[..., r:]) ** 2, axis=-1)
    with np.errstate(divide="ignore"):
        return np.log1p(rest / top) / basis.k


def top_zeros(ray, basis):
    """Zero set of the top section ``(U s)_0``."""
    return zeros_of(GaussianSection(ray.U[0].copy()), basis)


def l1_convergence(ray, basis, times, epsabs=1e-13, epsrel=1e-8):
    """L1 distances between ``(1/k) log F_s`` and its limit for each ray time.

    The integrand is ``(1/k) log(1 + R_s)`` with ``R_s`` the ratio of the lower
    weights to the top ones; it has integrable log singularities at the zeros
    of the top section, which become quadrature breakpoints.
    """
    times = [float(s) for s in times]
    if any(s < 0 for s in times):
        raise ValueError("ray times must be nonnegative")
    sing = top_zeros(ray, basis).finite_roots if ray.multiplicity == 1 else ()
    out = []
    for s in times:
        f = lambda z, s=s: _log_ratio(ray, s, basis, z)
        val, err = integrate_sphere_singular(f, sing, epsabs=epsabs, epsrel=epsrel, limit=400)
        out.append(val)
    return np.array(out)


def weak_limit_check(ray, basis, psi, s, epsabs=1e-11, epsrel=1e-9):
    """``|int psi omega_{beta_s} - (2 pi / k) sum_{roots} psi|``.

    ``psi`` is a :class:`~bergheat.statistics.LinearStatistic` of smooth kind.
    The metric side uses ``omega_beta = omega_0 + (1/2) Delta(beta - phi_I) dx dy``
    and integrates by parts onto ``Delta psi``.
    """
    from .statistics import LinearStatistic

    if not isinstance(psi, LinearStatistic) or psi.kind != "smooth":
        raise TypeError("psi must be a smooth LinearStatistic")
    zs = top_zeros(ray, basis)
    # beta_s - phi_I up to an additive constant that integrates to zero against Delta psi
    def g(z):
        z = np.asarray(z)
        v = _unit_frame(basis, z) @ ray.U.T
        with np.errstate(divide="ignore"):
            logs = np.log(np.abs(v) ** 2) + s * (ray.lam - ray.lam[0])
        diff = logsumexp(logs, axis=-1) / basis.k
        return 0.25 * diff * psi.laplacian(z) * (1 + np.abs(z) ** 2) ** 2

    correction, _ = integrate_sphere_singular(g, zs.finite_roots, epsabs=epsabs, epsrel=epsrel,
                                              limit=400)
    metric_side = psi.background_mass() + correction
    roots = np.concatenate([zs.finite_roots, np.full(zs.n_infinite, np.inf)])
    psi_inf = float(psi.f(np.array([1e150 + 0j]))[0])
    vals = np.array([psi.f(np.array([r]))[0] if np.isfinite(r) else psi_inf for r in roots])
    zero_side = AREA / basis.k * float(vals.sum())
    return abs(metric_side - zero_side)


# --- Gaussian sections and zeros ----------------------------------------

@dataclass(frozen=True, eq=False)
class GaussianSection:
    """Coefficients of ``s = sum_j c_j s_j`` in the orthonormal basis."""

    c: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.c, dtype=complex).ravel()
        if not np.all(np.isfinite(c)):
            raise ValueError("section coefficients must be finite")
        object.__setattr__(self, "c", c)

    @property
    def k(self):
        return self.c.size - 1


def sample_section(k, seed=None):
    """Standard complex Gaussian coefficients: ``E c_j = 0``, ``E c_j conj(c_l) = delta_jl``."""
    k = check_positive_int(k, "k")
    rng = check_rng(seed)
    return GaussianSection(_complex_normal(rng, (k + 1,)))


def _complex_normal(rng, shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / math.sqrt(2.0)


@dataclass(frozen=True, eq=False)
class ZeroSet:
    """``k`` roots on the sphere: finite chart roots plus a count at infinity."""

    finite_roots: np.ndarray
    n_infinite: int
    k: int

    def __post_init__(self):
        roots = np.asarray(self.finite_roots, dtype=complex).ravel()
        object.__setattr__(self, "finite_roots", roots)
        if roots.size + self.n_infinite != self.k:
            raise ValueError("root count (with infinity) must equal k")

    def __len__(self):
        return self.k

    def count_in(self, stat):
        return int(stat.values(self.finite_roots).sum()
                   + (self.n_infinite if stat.kind == "set" and stat.outer == math.inf else 0))

    def rows(self):
        rows = [(float(r.real), float(r.imag), 0) for r in self.finite_roots]
        rows += [(math.nan, math.nan, 1)] * self.n_infinite
        return rows


def _monomial_coefficients(section, basis):
    if section.c.size != basis.N:
        raise ValueError("section and basis have different sizes")
    return section.c @ basis.coeffs


def _horner_scaled(a, z):
    """``(p, p', sum |a_j| |z|^j)`` at the points ``z``.

    Where ``|z| > 1`` all three are divided by ``z^k``: the reversed
    polynomial is evaluated at ``w = 1/z`` so nothing overflows.
    """
    z = np.asarray(z, dtype=complex)
    k = a.size - 1
    outside = np.abs(z) > 1.0
    x = np.where(outside, 1.0 / np.where(outside, z, 1.0), z)
    ax = np.abs(x)
    p = np.zeros_like(x)
    dp = np.zeros_like(x)
    scale = np.zeros(x.shape)
    p_r = np.zeros_like(x)
    dp_r = np.zeros_like(x)
    scale_r = np.zeros(x.shape)
    for fwd, rev in zip(a[::-1], a):
        dp = dp * x + p
        p = p * x + fwd
        scale = scale * ax + abs(fwd)
        dp_r = dp_r * x + p_r
        p_r = p_r * x + rev
        scale_r = scale_r * ax + abs(rev)
    # p(z) = z^k q(w), p'(z) / z^k = w (k q - w q')
    p = np.where(outside, p_r, p)
    dp = np.where(outside, x * (k * p_r - x * dp_r), dp)
    scale = np.where(outside, scale_r, scale)
    return p, dp, scale


def zeros_of(section, basis, residual_tol=1e-8, deficit_tol=1e-14):
    """Roots of ``sum c_j s_j`` on the sphere.

    Leading coefficients below ``deficit_tol`` (relative, measured on
    unit-norm monomials) are a degree deficit and become roots at infinity.  The remaining roots are eigenvalues of the
    balanced companion matrix, each polished by one Newton step and checked
    against ``residual_tol`` relative to ``sum |a_j| |z|^j``.
    """
    a = _monomial_coefficients(section, basis)
    k = basis.k
    amax = np.max(np.abs(a))
    if amax == 0:
        raise ValueError("the zero section has no zero set")
    # vanishing orders at 0 and infinity are judged on unit-norm monomials
    b = np.abs(a) * np.sqrt(_monomial_norms(k))
    nz = np.nonzero(b > deficit_tol * b.max())[0]
    deg = int(nz[-1])
    low = int(nz[0])
    core = a[low: deg + 1] / a[deg]
    m = core.size - 1
    roots = np.zeros(0, dtype=complex)
    if m > 0:
        C = np.zeros((m, m), dtype=complex)
        C[0, :] = -core[m - 1::-1]
        C[np.arange(1, m), np.arange(m - 1)] = 1.0
        B, _ = matrix_balance(C, permute=False)
        roots = np.linalg.eigvals(B)
        coeffs = a[low: deg + 1] / amax
        p, dp, scale = _horner_scaled(coeffs, roots)
        with np.errstate(divide="ignore", invalid="ignore"):
            cand = np.where(dp != 0, roots - p / dp, roots)
        pc, _, sc = _horner_scaled(coeffs, cand)
        # keep the Newton update only where it does not increase the residual
        better = np.abs(pc) / sc <= np.abs(p) / scale
        roots = np.where(better, cand, roots)
        resid = np.where(better, np.abs(pc) / sc, np.abs(p) / scale)
        if np.any(resid > residual_tol):
            worst = int(np.argmax(resid))
            raise ArithmeticError(
                f"root {roots[worst]} has relative residual {resid[worst]:.2e}")
    roots = np.concatenate([np.zeros(low, dtype=complex), roots])
    return ZeroSet(roots, k - deg, k)


def disk_counts(C, radius, n_theta=None, max_bytes=2**26):
    """Number of roots in ``|z| < radius`` for rows of monomial coefficients ``C``.

    Argument principle on the circle via FFT.  A single root subtends at most
    pi between neighbouring nodes, so rows with any phase step above pi/2 are
    returned as ``-1`` and the caller falls back to explicit roots.  Rows are
    processed in chunks of at most ``max_bytes`` of FFT output.
    """
    C = np.atleast_2d(np.asarray(C, dtype=complex))
    k = C.shape[1] - 1
    n_theta = n_theta or 1 << max(10, int(math.ceil(math.log2(64 * (k + 1)))))
    rows = max(1, max_bytes // (16 * n_theta))
    if C.shape[0] > rows:
        return np.concatenate([disk_counts(C[i:i + rows], radius, n_theta, max_bytes)
                               for i in range(0, C.shape[0], rows)])
    j = np.arange(k + 1)
    with np.errstate(divide="ignore"):
        logmag = np.log(np.abs(C)) + j * math.log(radius)
    shift = np.max(logmag, axis=1, keepdims=True)
    scaled = np.exp(logmag - shift + 1j * np.angle(C))
    vals = np.fft.ifft(scaled, n=n_theta, axis=1)
    steps = np.angle(np.roll(vals, -1, axis=1) / vals)
    winding = np.rint(steps.sum(axis=1) / (2 * math.pi)).astype(int)
    bad = np.any(np.abs(steps) > math.pi / 2, axis=1) | ~np.all(np.isfinite(steps), axis=1)
    winding[bad] = -1
    return winding


class GaussianZeros(BaseEstimator):
    """Sampler for zero sets of Gaussian random sections of degree ``k``.

    Parameters
    ----------
    k : int
    random_state : int, SeedSequence, Generator or None
    """

    def __init__(self, k=4, random_state=None):
        self.k = k
        self.random_state = random_state

    def fit(self, X=None, y=None):
        check_positive_int(self.k, "k")
        self.basis_ = build_basis(self.k)
        self.seed_seq_ = seed_sequence(self.random_state)
        self.rng_ = np.random.default_rng(self.seed_seq_)
        return self

    def sections(self, n):
        if not hasattr(self, "rng_"):
            self.fit()
        return _complex_normal(self.rng_, (n, self.k + 1))

    def sample(self, n):
        return [zeros_of(GaussianSection(c), self.basis_) for c in self.sections(n)]

    def linear_statistic(self, stat, n):
        """``X = sum_roots f`` for ``n`` fresh sections (roots at infinity use ``f(inf)``)."""
        f_inf = float(np.real(stat.values(np.array([1e150 + 0j]))[0]))
        out = np.empty(n)
        for i, zs in enumerate(self.sample(n)):
            out[i] = float(np.sum(stat.values(zs.finite_roots))) + zs.n_infinite * f_inf
        return out

    def counts(self, stat, n):
        """Root counts in a disk or annulus for ``n`` fresh sections."""
        if stat.kind != "set":
            raise ValueError("counts need a set statistic")
        S = self.sections(n)
        if stat.outer == math.inf and stat.inner == 0:
            return np.full(n, self.k)
        C = S @ self.basis_.coeffs
        out = np.zeros(n, dtype=int)
        if stat.outer < math.inf:
            out += disk_counts(C, stat.outer)
        else:
            out += self.k
        bad = out < 0
        if stat.inner > 0:
            inner = disk_counts(C, stat.inner)
            bad |= inner < 0
            out -= inner
        for i in np.nonzero(bad)[0]:
            out[i] = zeros_of(GaussianSection(S[i]), self.basis_).count_in(stat)
        return out


@dataclass
class NumberVarianceResult:
    result: object
    predicted: float
    counts: np.ndarray = field(repr=False)

    @property
    def ratio(self):
        return self.result.estimate / self.predicted if self.predicted else math.nan

    def to_dict(self):
        return {"variance": self.result.to_dict(), "predicted": self.predicted, "ratio": self.ratio}


def predicted_number_variance(k, stat):
    """``sqrt(k) nu_1 Vol_1(boundary)`` with lengths in the area-pi round metric."""
    return math.sqrt(k) * NU1 * stat.boundary_length()


def number_variance(k, stat, n, seed=None):
    """Monte Carlo variance of the root count in a disk or annulus."""
    from .statistics import estimate_variance

    counts = GaussianZeros(k, random_state=seed).fit().counts(stat, n)
    result = estimate_variance(counts, {"k": k, "set": stat.label, "seed": seed, "n": n})
    return NumberVarianceResult(result, predicted_number_variance(k, stat), counts)


def cell_partition_counts(zero_sets, n_bands=4, n_sectors=2):
    """Root counts in equal-area cells (bands in ``u``, sectors in angle)."""
    counts = np.zeros((len(zero_sets), n_bands * n_sectors))
    for i, zs in enumerate(zero_sets):
        u, phi = sphere_coords(zs.finite_roots)
        band = np.minimum((u * n_bands).astype(int), n_bands - 1)
        sector = np.minimum((phi / (2 * math.pi) * n_sectors).astype(int), n_sectors - 1)
        np.add.at(counts[i], band * n_sectors + sector, 1)
        counts[i, (n_bands - 1) * n_sectors] += zs.n_infinite
    return counts


def exact_smooth_variance(k, stat, n_r=400, n_theta=400, r_max=None):
    """Finite-k variance of ``sum_roots f`` for a radial ``f``.

    ``(1 / 16 pi^2) int int Li2(rho(z, w)) Delta f(z) Delta f(w)``, reduced to
    three dimensions by rotational symmetry.  Independent of the asymptotic law.
    """
    if stat.kind != "smooth":
        raise ValueError("exact variance needs a smooth statistic")
    r_max = r_max or 6.0
    x, w = np.polynomial.legendre.leggauss(n_r)
    r = 0.5 * r_max * (x + 1)
    wr = 0.5 * r_max * w
    y, v = np.polynomial.legendre.leggauss(n_theta)
    th = 0.5 * math.pi * (y + 1)
    wt = 0.5 * math.pi * v
    lap = np.real(stat.laplacian(r.astype(complex)))
    total = 0.0
    for i in range(n_r):
        rs = r[i] * r
        num = 1 + rs[:, None] ** 2 + 2 * rs[:, None] * np.cos(th)[None]
        rho = np.clip(np.exp(k * (np.log(num) - np.log1p(r[i] ** 2) - np.log1p(r**2)[:, None])), 0, 1)
        G = 2.0 * (spence(1.0 - rho) @ wt)
        total += wr[i] * r[i] * lap[i] * np.sum(wr * r * lap * G)
    return 2 * math.pi * total / (16 * math.pi**2)
