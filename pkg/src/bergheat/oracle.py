"""Closed-form and quadrature evaluators for the correlation formulas.

The central object is the rho-derivative of the two-point bi-potential of
the heat ensemble,

    dI/drho = 2t/rho - sqrt(1-rho)/rho * J(t, rho),

    J(t, rho) = e^{-t/2} / sqrt(2 pi t) * int e^{-lam^2/2t} cosh(lam) A(lam, rho) dlam.

The amplitude ``A`` is evaluated through the identity

    (sqrt(c - rho) + sqrt(1 - rho)) / (sqrt(c - rho) - sqrt(1 - rho))
        = ((sqrt(c - rho) + sqrt(1 - rho)) sinh(lam))^2,   c = coth(lam)^2,

which removes the cancellation in the denominator at large ``|lam|``, and
the Gaussian prefactor is folded into ``exp(-(lam - t)^2 / 2t)``.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate
from scipy.special import gammaln, roots_hermite

from ._validation import check_positive_float, check_traceless

RHO_SWITCH = 1e-3


@dataclass(frozen=True)
class QuadratureReport:
    value: float
    abs_error_estimate: float
    evaluations: int

    def to_dict(self):
        return {"value": self.value, "abs_error_estimate": self.abs_error_estimate,
                "evaluations": self.evaluations}


@dataclass(frozen=True)
class BiPotentialQuery:
    t: float
    rho: float
    tolerance: float = 1e-10

    def __post_init__(self):
        check_positive_float(self.t, "t")
        check_positive_float(self.tolerance, "tolerance")
        if not 0.0 < self.rho < 1.0:
            raise ValueError("rho must lie strictly between 0 and 1")


class QuadratureError(RuntimeError):
    def __init__(self, message, estimate):
        super().__init__(message)
        self.estimate = estimate


def amplitude(lam, rho):
    """The amplitude ``A(lam, rho)`` (even in ``lam``, ``A(0) = 0``)."""
    lam = np.abs(np.asarray(lam, dtype=float))
    sh, ch = np.sinh(lam), np.cosh(lam)
    root = np.sqrt(ch**2 - rho * sh**2)
    with np.errstate(invalid="ignore", divide="ignore"):
        out = 2.0 * sh / root * np.log(root + math.sqrt(1.0 - rho) * sh)
    return np.where(lam == 0.0, 0.0, out)


def _tanh_pieces(lam):
    w = np.exp(-2.0 * lam)
    q = -np.expm1(-2.0 * lam) / (1.0 + w)
    logcosh = lam + np.log1p(w) - math.log(2.0)
    return w, q, logcosh


def _folded_integrand(lam, rho):
    """``g`` with ``e^{-t/2} e^{-lam^2/2t} cosh(lam) A / sqrt(2 pi t) = phi_t(lam) g(lam)``."""
    w, q, logcosh = _tanh_pieces(lam)
    s = np.sqrt(1.0 - rho * q * q)
    return (1.0 - w) / s * (logcosh + np.log(s + math.sqrt(1.0 - rho) * q))


def _cancelled_integrand(lam, rho):
    """``(g_0 - sqrt(1-rho) g_rho) / rho`` with the 1/rho removed analytically."""
    w, q, logcosh = _tanh_pieces(lam)
    a = math.sqrt(1.0 - rho)
    s = np.sqrt(1.0 - rho * q * q)
    X = q * q / (1.0 + s) + q / (1.0 + a)
    y = rho * X / (1.0 + q)
    with np.errstate(invalid="ignore", divide="ignore"):
        f = np.where(y > 1e-8, -np.log1p(-y) / np.where(y > 0, y, 1.0), 1.0 + 0.5 * y)
    L = logcosh + np.log(s + a * q)
    ab = a / s
    return (1.0 - w) * (X / (1.0 + q) * f + L * (1.0 - q * q) / ((1.0 - rho * q * q) * (1.0 + ab)))


def _gaussian_average(func, t, tol):
    """``2 int_0^inf phi_t(lam) func(lam) dlam`` with ``phi_t`` the N(t, t) density."""
    sd = math.sqrt(t)
    upper = t + 40.0 * sd + 40.0
    norm = 1.0 / math.sqrt(2 * math.pi * t)
    f = lambda lam: 2.0 * norm * math.exp(-((lam - t) ** 2) / (2 * t)) * float(func(lam))
    val, err, info = integrate.quad(
        f, 0.0, upper, points=[t] if t < upper else None, epsabs=tol, epsrel=tol,
        limit=500, full_output=1,
    )[:3]
    return val, err, info["neval"]


def j_integral(t, rho, tol=1e-12):
    """``J(t, rho)``: the normalized Gaussian integral of ``cosh * A``."""
    t = check_positive_float(t, "t")
    val, err, neval = _gaussian_average(lambda lam: _folded_integrand(lam, rho), t, tol)
    return QuadratureReport(val, err, neval)


def small_rho_integral(t, tolerance=1e-12):
    """``J(t, 0)``; equals ``2 t`` exactly, which makes ``dI/drho`` finite at 0."""
    rep = j_integral(t, 0.0, tolerance)
    if rep.abs_error_estimate > max(tolerance, 1e-14) * max(1.0, abs(rep.value)):
        raise QuadratureError("small-rho integral did not reach tolerance", rep.value)
    return rep.value


def d_rho_bipotential(query, rho=None, tolerance=None, rho_switch=RHO_SWITCH):
    """``dI/drho`` of the heat ensemble bi-potential.

    Accepts a :class:`BiPotentialQuery` or ``(t, rho[, tolerance])``.  Below
    ``rho_switch`` the ``2t/rho`` term is cancelled analytically against the
    exact value ``J(t, 0) = 2t`` before integrating.
    """
    if not isinstance(query, BiPotentialQuery):
        query = BiPotentialQuery(query, rho, 1e-10 if tolerance is None else tolerance)
    t, r, tol = query.t, query.rho, query.tolerance
    if r < rho_switch:
        val, err, neval = _gaussian_average(lambda lam: _cancelled_integrand(lam, r), t, 1e-13)
    else:
        J, errJ, neval = _gaussian_average(lambda lam: _folded_integrand(lam, r), t, 1e-14)
        val = 2.0 * t / r - math.sqrt(1.0 - r) / r * J
        err = math.sqrt(1.0 - r) / r * errJ + 4.0 * np.finfo(float).eps * 2.0 * t / r
    if err > tol * max(1.0, abs(val)):
        raise QuadratureError(f"tolerance {tol:g} unreachable (error {err:.2e})", val)
    return QuadratureReport(float(val), float(err), int(neval))


def d_rho_limit(rho):
    """``t -> infinity`` limit ``-log(1 - rho) / rho``."""
    rho = np.asarray(rho, dtype=float)
    return np.where(rho == 0.0, 1.0, -np.log1p(-rho) / np.where(rho == 0.0, 1.0, rho))[()]


def bipotential_difference(t, rho_lo, rho_hi, order=24):
    """``I(t, rho_hi) - I(t, rho_lo)`` by integrating ``dI/drho``.

    ``dI/drho`` is smooth on compact subintervals of ``(0, 1)``, so Gauss-Legendre
    rules of order ``order`` and ``order / 2`` are compared for the error estimate.
    """
    if not 0.0 < rho_lo < rho_hi < 1.0:
        raise ValueError("need 0 < rho_lo < rho_hi < 1")

    def rule(n):
        x, w = np.polynomial.legendre.leggauss(n)
        half = 0.5 * (rho_hi - rho_lo)
        r = rho_lo + half * (x + 1.0)
        return half * sum(wi * d_rho_bipotential(t, ri, 1e-9).value for ri, wi in zip(r, w))

    fine, coarse = rule(order), rule(order // 2)
    return QuadratureReport(float(fine), float(abs(fine - coarse)), order + order // 2)


def dilog(rho):
    """Real dilogarithm ``Li2(rho) = -int_0^rho log(1-s)/s ds`` on ``[0, 1]``.

    Power series for ``rho <= 1/2``; the reflection
    ``Li2(x) + Li2(1-x) = pi^2/6 - log(x) log(1-x)`` otherwise.
    """
    rho = float(rho)
    if not 0.0 <= rho <= 1.0:
        raise ValueError("dilog is implemented on [0, 1]")
    if rho <= 0.5:
        return _dilog_series(rho)
    if rho == 1.0:
        return math.pi**2 / 6.0
    x = 1.0 - rho
    return math.pi**2 / 6.0 - math.log(rho) * math.log1p(-rho) - _dilog_series(x)


def _dilog_series(x):
    total, term_pow, n = 0.0, x, 1
    while True:
        term = term_pow / (n * n)
        total += term
        if term < 1e-17 * max(total, 1e-300):
            return total
        n += 1
        term_pow *= x


def _confluent_matrix(a, b, mu, scale_tol):
    """Rows/columns of ``exp(mu a_j b_l)`` with confluent groups differentiated."""

    def groups(x):
        order = np.argsort(x, kind="stable")
        xs = np.asarray(x, dtype=float)[order]
        scale = max(1.0, float(np.max(np.abs(xs))))
        out, cur = [], [xs[0]]
        for v in xs[1:]:
            if abs(v - cur[-1]) < scale_tol * scale:
                cur.append(v)
            else:
                out.append(cur)
                cur = [v]
        out.append(cur)
        return [(float(np.mean(g)), len(g)) for g in out]

    ga, gb = groups(a), groups(b)
    rows = [(x, m) for x, n in ga for m in range(n)]
    cols = [(y, m) for y, n in gb for m in range(n)]
    N = len(rows)
    M = np.empty((N, N))
    for i, (x, p) in enumerate(rows):
        for j, (y, q) in enumerate(cols):
            # d^p/dx^p d^q/dy^q exp(mu x y) / (p! q!)
            M[i, j] = _mixed_derivative(mu, x, y, p, q)
    return M, ga, gb


def _mixed_derivative(mu, x, y, p, q):
    # exp(mu x y) = sum_n mu^n x^n y^n / n!, differentiate term by term
    total = 0.0
    e = math.exp(mu * x * y)
    # Leibniz form: d^p/dx^p [e^{mu x y}] = (mu y)^p e^{mu x y}; then d^q/dy^q of (mu y)^p e^{mu x y}
    for r in range(0, min(p, q) + 1):
        coeff = math.comb(q, r) * math.perm(p, r) * mu**p * (mu * x) ** (q - r)
        total += coeff * (y ** (p - r) if p - r >= 0 else 0.0)
    return total * e / (math.factorial(p) * math.factorial(q))


def _confluent_vandermonde(groups):
    # Delta(x) = prod_{i<j} (x_j - x_i) with x ascending; coincident factors removed
    total = 1.0
    for i, (xi, ni) in enumerate(groups):
        for xj, nj in groups[i + 1:]:
            total *= (xj - xi) ** (ni * nj)
    return total


def hciz(a, b, mu=1.0, confluent_tol=1e-6):
    """Harish-Chandra-Itzykson-Zuber integral over normalized Haar measure.

    ``(prod_{p<N} p!) mu^{-N(N-1)/2} det(e^{mu a_j b_l}) / (Delta(a) Delta(b))``,
    with eigenvalues closer than ``confluent_tol`` (relative) merged and the
    determinant replaced by its confluent (divided-difference) limit.
    """
    a = np.atleast_1d(np.asarray(a, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    N = a.size
    if b.size != N:
        raise ValueError("a and b must have the same length")
    if mu == 0:
        return 1.0
    M, ga, gb = _confluent_matrix(a, b, mu, confluent_tol)
    det = np.linalg.det(M)
    logfact = float(np.sum(gammaln(np.arange(1, N) + 1)))
    return float(math.exp(logfact) * mu ** (-N * (N - 1) / 2) * det
                 / (_confluent_vandermonde(ga) * _confluent_vandermonde(gb)))


def hciz_monte_carlo(a, b, mu=1.0, n=10**6, random_state=None, chunk=100_000):
    """Haar Monte Carlo estimate of ``E exp(mu Tr(A U B U^H))``: (mean, standard error)."""
    from .heat import haar_unitary

    rng = np.random.default_rng(random_state)
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    N = a.size
    s1 = s2 = 0.0
    done = 0
    while done < n:
        m = min(chunk, n - done)
        U = haar_unitary(N, rng, size=m)
        x = np.exp(mu * np.einsum("j,njl,l->n", a, np.abs(U) ** 2, b))
        s1 += x.sum()
        s2 += (x**2).sum()
        done += m
    mean = s1 / n
    var = (s2 - n * mean**2) / (n - 1)
    return mean, math.sqrt(var / n)


def vandermonde(x):
    x = np.asarray(x, dtype=float)
    i, j = np.triu_indices(x.shape[-1], 1)
    return np.prod(x[..., j] - x[..., i], axis=-1)


def gaussian_vandermonde_identity(mu, t, n_nodes=None):
    """Both sides of the Gaussian-Vandermonde integral identity.

    ``lhs = int Delta(lam) exp(sum(-lam_j^2/4t + mu_j lam_j)) dlam`` by tensor
    Gauss-Hermite quadrature (exact for the polynomial amplitude);
    ``rhs = (2 pi)^{N/2} (2t)^{N^2/2} Delta(mu) exp(t |mu|^2)``.
    """
    mu = np.asarray(mu, dtype=float)
    t = check_positive_float(t, "t")
    N = mu.size
    n_nodes = n_nodes or (N * (N - 1) // 4 + 3)
    x, w = roots_hermite(n_nodes)
    grids = np.meshgrid(*([x] * N), indexing="ij")
    Y = np.stack([g.ravel() for g in grids], axis=-1)
    Wt = np.prod(np.stack(np.meshgrid(*([w] * N), indexing="ij"), axis=-1).reshape(-1, N), axis=1)
    # lam = 2 t mu + 2 sqrt(t) y turns the weight into exp(-|y|^2)
    lam = 2.0 * t * mu + 2.0 * math.sqrt(t) * Y
    lhs = math.exp(t * float(mu @ mu)) * (2.0 * math.sqrt(t)) ** N * float(np.sum(Wt * vandermonde(lam)))
    rhs = (2 * math.pi) ** (N / 2) * (2 * t) ** (N * N / 2) * float(vandermonde(mu)) * math.exp(t * float(mu @ mu))
    return lhs, rhs


def energy_entropy_exponent(lam, t, k):
    """Exponent of the radial density written through the empirical eigenvalue measure.

    ``(N^2/2) [<<log|x-y|>> + <<log|e^x-e^y|>>] - (N^2/4t) <x^2>`` with
    off-diagonal double averages; this is the log radial density at the
    rescaled time ``t / N`` (all three terms of order ``N^2``).
    """
    lam = check_traceless(lam)
    N = lam.size
    if N != k + 1:
        raise ValueError("lambda must have k + 1 entries")
    x = lam[:, None]
    y = lam[None, :]
    off = ~np.eye(N, dtype=bool)
    diff = np.abs(x - y)[off]
    top = np.maximum(x, y)[off]
    with np.errstate(divide="ignore"):
        log_pair = np.log(diff)
        log_exp_pair = top + np.log(-np.expm1(-diff))
    energy = (N * N / 2.0) * (log_pair.sum() / N**2 + log_exp_pair.sum() / N**2)
    second_moment = float(np.mean(lam**2))
    return float(energy - N * N / (4.0 * t) * second_moment)
