"""Monte Carlo estimators over heat kernel samples.

Every estimator returns an :class:`EstimatorResult` whose standard error
comes from batch means, so autocorrelated Metropolis output is handled
without a separate code path.  Samplers emit draws chain-major, which makes
contiguous batches a conservative grouping.
"""

import itertools
import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import stats
from scipy.special import logsumexp, zeta
from sklearn.base import BaseEstimator, TransformerMixin

from ._validation import check_positive_int, check_rng
from .geometry import berezin_rho_round, build_basis, mobius_from_origin, point_at_rho
from .heat import HeatKernelSampler, HeatParams
from .matrix_metric import KahlerPotentialSample, PolarBatch, potential_values
from .sphere import AREA, chart_point, integrate_sphere, tensor_rule

logger = logging.getLogger(__name__)

SMOOTH_VARIANCE_CONSTANT = zeta(3) / (16 * math.pi)


@dataclass(frozen=True)
class EstimatorResult:
    """Point estimate with standard error, sample count and provenance."""

    estimate: float
    std_error: float
    n: int
    manifest: dict = field(default_factory=dict, repr=False, compare=False)

    def z_score(self, reference):
        if self.std_error == 0:
            return 0.0 if self.estimate == reference else math.inf
        return (self.estimate - reference) / self.std_error

    def to_dict(self):
        return {"estimate": self.estimate, "std_error": self.std_error, "n": self.n,
                "manifest": self.manifest}


def batch_means_se(x, batch_length=None):
    """Standard error of the mean of ``x`` from non-overlapping batch means.

    The default batch length is ``floor(sqrt(n))``.  For independent data
    this agrees with ``std / sqrt(n)`` up to sampling noise.
    """
    x = np.asarray(x, dtype=float).ravel()
    n = x.size
    if n < 4:
        raise ValueError("need at least 4 values for a batch-means standard error")
    b = batch_length or max(1, int(math.isqrt(n)))
    n_batches = n // b
    if n_batches < 2:
        raise ValueError("batch length leaves fewer than two batches")
    means = x[: n_batches * b].reshape(n_batches, b).mean(axis=1)
    return float(means.std(ddof=1) / math.sqrt(n_batches))


def estimate_mean(x, manifest=None, batch_length=None):
    x = np.asarray(x, dtype=float).ravel()
    return EstimatorResult(float(x.mean()), batch_means_se(x, batch_length), x.size,
                           dict(manifest or {}))


def estimate_variance(x, manifest=None):
    """Sample variance with the delta-method standard error ``sqrt((m4 - s^4) / n)``."""
    x = np.asarray(x, dtype=float).ravel()
    n = x.size
    c = x - x.mean()
    var = float(c @ c / (n - 1))
    m4 = float(np.mean(c**4))
    se = math.sqrt(max(m4 - var**2, 0.0) / n)
    return EstimatorResult(var, se, n, dict(manifest or {}))


def draw_heat_samples(params, n, random_state=None, method="mcmc", **sampler_kwargs):
    """``n`` polar samples of the heat ensemble (Metropolis radial part by default)."""
    sampler = HeatKernelSampler(params.N, params.t, method, params.scaling, params.k,
                                random_state=random_state, **sampler_kwargs)
    return sampler.fit().sample(n)


def background_potential(k, z):
    """``phi_I(z) = (1/k) log((k+1)(1+|z|^2)^k)`` for the round basis."""
    z = np.asarray(z, dtype=complex)
    return math.log(k + 1) / k + np.log1p(np.abs(z) ** 2)


class PotentialFluctuation(TransformerMixin, BaseEstimator):
    """Map polar samples to ``phi_P(z) - phi_I(z)`` on a fixed set of points.

    Parameters
    ----------
    k : int
        Tensor power.
    points : array-like of complex
        Chart points where the potential is evaluated.
    """

    def __init__(self, k=4, points=(0j,)):
        self.k = k
        self.points = points

    def fit(self, X=None, y=None):
        check_positive_int(self.k, "k")
        self.basis_ = build_basis(self.k)
        self.points_ = np.asarray(self.points, dtype=complex).ravel()
        self.background_ = potential_values(PolarBatch.from_coords(
            [KahlerPotentialSample.identity(self.k).polar]), self.basis_, self.points_)[0]
        return self

    def transform(self, X):
        if not hasattr(self, "basis_"):
            self.fit()
        if not isinstance(X, PolarBatch):
            X = PolarBatch.from_coords(X)
        return potential_values(X, self.basis_, self.points_) - self.background_


def default_flatness_grid(n_points=12):
    """Chart points spread over the sphere; pairs share ``|z|`` for the symmetry check."""
    n_points = check_positive_int(n_points, "n_points", 2)
    n_rings = -(-n_points // 2)
    u = (np.arange(n_rings) + 0.5) / n_rings
    pts = []
    for i, ui in enumerate(u):
        pts.append(chart_point(ui, 0.3 + 0.7 * i))
        pts.append(chart_point(ui, 0.3 + 0.7 * i + 2.0))
    return np.array(pts[:n_points])


@dataclass
class FlatnessReport:
    points: np.ndarray
    results: list
    offset: EstimatorResult
    max_pairwise_z: float
    worst_pair: tuple

    def passed(self, threshold=3.0):
        return self.max_pairwise_z < threshold


def one_point_flatness(params, basis, grid, n, seed=None, batch=None, **sampler_kwargs):
    """Estimate ``E[phi_P(z) - phi_I(z)]`` on a grid and test z-independence.

    The flatness statistic is the largest ``|mean(x_i - x_j)| / SE(x_i - x_j)``
    over grid pairs, with the joint standard error from batch means of the
    paired differences.  The common offset is the grid average.
    """
    grid = np.asarray(grid, dtype=complex).ravel()
    if grid.size == 0:
        raise ValueError("grid must be nonempty")
    n = check_positive_int(n, "n")
    if n < 1000:
        warnings.warn("fewer than 1000 samples: flatness confidence intervals are wide",
                      RuntimeWarning, stacklevel=2)
    if batch is None:
        batch = draw_heat_samples(params, n, seed, **sampler_kwargs)
    X = PotentialFluctuation(basis.k, grid).fit().transform(batch)
    manifest = dict(batch.manifest, estimator="one_point_flatness")
    results = [estimate_mean(X[:, j], manifest) for j in range(grid.size)]
    offset = estimate_mean(X.mean(axis=1), manifest)
    worst, worst_pair = 0.0, (0, 0)
    for i, j in itertools.combinations(range(grid.size), 2):
        d = X[:, i] - X[:, j]
        se = batch_means_se(d)
        zval = abs(d.mean()) / se if se > 0 else 0.0
        if zval > worst:
            worst, worst_pair = zval, (i, j)
    return FlatnessReport(grid, results, offset, float(worst), worst_pair)


@dataclass
class TwoPointGrid:
    """Pairs ``(anchor_m, partner_{i,m})`` with ``rho(anchor_m, partner_{i,m}) = rhos[i]``.

    Each of the ``M`` configurations is an independent random rotation of the
    sphere, so per-pair estimates average over positions.
    """

    k: int
    rhos: np.ndarray
    anchors: np.ndarray
    partners: np.ndarray

    def __post_init__(self):
        self.rhos = np.asarray(self.rhos, dtype=float)
        self.anchors = np.asarray(self.anchors, dtype=complex)
        self.partners = np.asarray(self.partners, dtype=complex)
        if np.any(self.rhos <= 0) or np.any(self.rhos >= 1):
            raise ValueError("pair rho values must lie in (0, 1)")
        if np.any(np.diff(self.rhos) >= 0):
            raise ValueError("rho values must be strictly decreasing along the grid")
        if self.partners.shape != (self.rhos.size, self.anchors.size):
            raise ValueError("partners must have shape (len(rhos), len(anchors))")

    @classmethod
    def from_rhos(cls, k, rhos, n_rotations=32, random_state=None):
        rng = check_rng(random_state)
        rhos = np.asarray(rhos, dtype=float)
        u = rng.random(n_rotations)
        anchors = chart_point(u, 2 * np.pi * rng.random(n_rotations))
        partners = np.empty((rhos.size, n_rotations), dtype=complex)
        for i, rho in enumerate(rhos):
            dirs = np.exp(2j * np.pi * rng.random(n_rotations))
            partners[i] = [point_at_rho(k, rho, a, d) for a, d in zip(anchors, dirs)]
        return cls(k, rhos, anchors, partners)

    @property
    def points(self):
        return np.concatenate([self.anchors, self.partners.ravel()])

    def realized_rhos(self):
        return np.array([[berezin_rho_round(self.k, a, p) for a, p in zip(self.anchors, row)]
                         for row in self.partners])


@dataclass
class TwoPointReport:
    grid: TwoPointGrid
    covariances: list
    differences: dict
    manifest: dict = field(default_factory=dict, repr=False)

    def difference(self, i, j):
        return self.differences[(i, j)]


def two_point_covariance(params, basis, grid, n, seed=None, batch=None, **sampler_kwargs):
    """Covariances ``Cov(phi_P(z1), phi_P(z2))`` per grid row and their differences.

    Differences between rows ``i`` and ``j`` are estimated as
    ``Cov(phi(z0) - c, phi(z_i) - phi(z_j))`` with the control variate
    ``c = (1/k) logsumexp(lam)``: conditional on the eigenvalues the two
    partner potentials have the same law, so ``c`` is uncorrelated with the
    difference while removing most of the anchor's variance.
    """
    if basis.k != grid.k:
        raise ValueError("basis and grid have different k")
    if batch is None:
        batch = draw_heat_samples(params, n, seed, **sampler_kwargs)
    M = grid.anchors.size
    X = PotentialFluctuation(basis.k, grid.points).fit().transform(batch)
    f0 = X[:, :M]
    fp = X[:, M:].reshape(len(batch), grid.rhos.size, M)
    manifest = dict(batch.manifest, estimator="two_point_covariance", rotations=M)
    covs = []
    for i in range(grid.rhos.size):
        prod = ((f0 - f0.mean(0)) * (fp[:, i] - fp[:, i].mean(0))).mean(axis=1)
        covs.append(estimate_mean(prod * len(batch) / (len(batch) - 1), manifest))
    c = logsumexp(batch.lam, axis=1) / basis.k
    a = f0 - c[:, None]
    diffs = {}
    for i, j in itertools.combinations(range(grid.rhos.size), 2):
        d = fp[:, i] - fp[:, j]
        per_sample = (a * d).mean(axis=1)
        est = estimate_mean(per_sample, manifest)
        correction = float((a.mean(0) * d.mean(0)).mean())
        diffs[(i, j)] = EstimatorResult(est.estimate - correction, est.std_error, est.n, manifest)
    return TwoPointReport(grid, covs, diffs, manifest)


def predicted_covariance_difference(t, k, rho_hi, rho_lo):
    """``(I(t, rho_hi) - I(t, rho_lo)) / k^2`` from the oracle."""
    from .oracle import bipotential_difference

    return bipotential_difference(t, rho_lo, rho_hi).value / k**2


def predicted_covariance_difference_limit(k, rho_hi, rho_lo):
    """``t = infinity`` value ``(Li2(rho_hi) - Li2(rho_lo)) / k^2``."""
    from .oracle import dilog

    return (dilog(rho_hi) - dilog(rho_lo)) / k**2


# --- linear statistics ---------------------------------------------------

@dataclass(frozen=True)
class LinearStatistic:
    """A smooth test function or the indicator of a disk or annulus in the chart.

    Smooth statistics carry the flat Laplacian ``laplacian(z)`` of ``f`` in
    closed form.  Sets are ``inner < |z| < outer`` (``inner = 0`` for a disk).
    """

    kind: str
    f: object = None
    laplacian: object = None
    inner: float = 0.0
    outer: float = math.inf
    label: str = ""

    def __post_init__(self):
        if self.kind not in ("smooth", "set"):
            raise ValueError("kind must be 'smooth' or 'set'")
        if self.kind == "smooth" and (self.f is None or self.laplacian is None):
            raise ValueError("smooth statistics need f and its Laplacian")
        if self.kind == "set" and not 0.0 <= self.inner < self.outer:
            raise ValueError("set statistics need 0 <= inner < outer")

    @classmethod
    def smooth(cls, f, laplacian, label="smooth"):
        return cls("smooth", f, laplacian, label=label)

    @classmethod
    def bump(cls, sigma=1.0, center=0j):
        """``exp(-|z - c|^2 / sigma^2)`` with its exact flat Laplacian."""
        s2 = float(sigma) ** 2
        c = complex(center)
        f = lambda z: np.exp(-np.abs(np.asarray(z) - c) ** 2 / s2)
        lap = lambda z: (4 * np.abs(np.asarray(z) - c) ** 2 / s2**2 - 4 / s2) * f(z)
        return cls("smooth", f, lap, label=f"bump(sigma={sigma}, center={c})")

    @classmethod
    def constant(cls, value=1.0):
        f = lambda z: np.full(np.shape(z), float(value))
        return cls("smooth", f, lambda z: np.zeros(np.shape(z)), label=f"constant({value})")

    @classmethod
    def disk(cls, radius=1.0):
        return cls("set", inner=0.0, outer=float(radius), label=f"disk(R={radius})")

    @classmethod
    def annulus(cls, inner, outer):
        return cls("set", inner=float(inner), outer=float(outer),
                   label=f"annulus({inner}, {outer})")

    @classmethod
    def hemisphere(cls):
        return cls.disk(1.0)

    @classmethod
    def sphere(cls):
        return cls("set", inner=0.0, outer=math.inf, label="sphere")

    def values(self, z):
        z = np.asarray(z, dtype=complex)
        if self.kind == "smooth":
            return self.f(z)
        r = np.abs(z)
        return ((r >= self.inner) & (r < self.outer)).astype(float)

    def circles(self):
        return [r for r in (self.inner, self.outer) if 0.0 < r < math.inf]

    def boundary_length(self):
        """Length of the boundary in the round metric ``|dz|^2 / (1+|z|^2)^2`` (area pi)."""
        if self.kind != "set":
            raise ValueError("boundary length is defined for set statistics")
        return float(sum(2 * math.pi * r / (1 + r * r) for r in self.circles()))

    def background_mass(self):
        """``int f omega_0`` (area 2 pi normalization)."""
        if self.kind == "set":
            u = lambda r: 1.0 if r == math.inf else r * r / (1 + r * r)
            return AREA * (u(self.outer) - u(self.inner))
        return integrate_sphere(self.f)[0]

    def laplacian_norm_sq(self):
        """``||Delta f||^2`` for the round metric of area pi.

        Equals ``int (Delta_flat f)^2 (1+|z|^2)^2 dx dy``; in terms of the
        background form ``dx dy = (1+|z|^2)^2 / 2 omega_0``.
        """
        if self.kind != "smooth":
            raise ValueError("Laplacian norm is defined for smooth statistics")
        g = lambda z: 0.5 * self.laplacian(z) ** 2 * (1 + np.abs(z) ** 2) ** 4
        return integrate_sphere(g, rtol=1e-9, max_n=4096)[0]


def _disk_mass(sample, basis, radius, n_theta=512):
    """``int_{|z|<R} omega_P = (R/2) int d/dr phi_P dtheta`` (Stokes, exact trapezoid)."""
    theta = 2 * np.pi * np.arange(n_theta) / n_theta
    z = radius * np.exp(1j * theta)
    lam, U = sample.polar.lam, sample.polar.U
    v = basis.values(z) @ U.T
    dv = basis.derivatives(z) @ U.T
    w = np.exp(lam - lam.max())
    Q = np.sum(w * np.abs(v) ** 2, axis=-1)
    dQ = np.sum(w * np.conj(v) * dv, axis=-1)
    dphi_dr = 2.0 * np.real(np.exp(1j * theta) * dQ / Q) / basis.k
    return 0.5 * radius * float(np.mean(dphi_dr)) * 2 * np.pi


def linear_statistic_value(stat, sample, basis, rtol=1e-9):
    """``int f omega_P`` (smooth) or ``int_U omega_P`` (set) for one sample."""
    if stat.kind == "set":
        outer = AREA if stat.outer == math.inf else _disk_mass(sample, basis, stat.outer)
        inner = _disk_mass(sample, basis, stat.inner) if stat.inner > 0 else 0.0
        return outer - inner
    from .matrix_metric import density_ratio

    val, _ = integrate_sphere(lambda z: stat.f(z) * density_ratio(sample, basis, z),
                              rtol=rtol, max_n=1024)
    return float(val)


@dataclass
class VarianceCheck:
    result: EstimatorResult
    predicted: float
    values: np.ndarray = field(repr=False)

    @property
    def ratio(self):
        return self.result.estimate / self.predicted if self.predicted else math.nan

    def to_dict(self):
        return {"variance": self.result.to_dict(), "predicted": self.predicted,
                "ratio": self.ratio}


def predicted_smooth_variance(k, stat):
    """``k^{-1} (zeta(3) / 16 pi) ||Delta f||^2`` for the root-count normalization."""
    return SMOOTH_VARIANCE_CONSTANT * stat.laplacian_norm_sq() / k


def smooth_variance_check(k, stat, n, seed=None, ensemble="zeros", t=None, values=None,
                          **sampler_kwargs):
    """Monte Carlo variance of a smooth linear statistic against the asymptotic law.

    For the zeros ensemble ``X = sum_roots f``.  For the heat ensemble the
    metric statistic is rescaled to the same total mass,
    ``X = (k / 2 pi) int f omega_P``, which the constant function pins down.
    """
    if stat.kind != "smooth":
        raise ValueError("smooth_variance_check needs a smooth statistic")
    if values is None:
        if ensemble == "zeros":
            from .zeros import GaussianZeros

            values = GaussianZeros(k, random_state=seed).fit().linear_statistic(stat, n)
        elif ensemble == "heat":
            if t is None:
                raise ValueError("the heat ensemble needs a diffusion time t")
            params = HeatParams.for_degree(k, t)
            batch = draw_heat_samples(params, n, seed, **sampler_kwargs)
            basis = build_basis(k)
            values = np.array([linear_statistic_value(stat, KahlerPotentialSample(p, k), basis)
                               for p in batch]) * k / AREA
        else:
            raise ValueError("ensemble must be 'zeros' or 'heat'")
    values = np.asarray(values, dtype=float)
    result = estimate_variance(values, {"ensemble": ensemble, "k": k, "statistic": stat.label,
                                        "seed": seed, "t": t})
    return VarianceCheck(result, predicted_smooth_variance(k, stat), values)


@dataclass(frozen=True)
class NormalityReport:
    n: int
    skewness: float
    excess_kurtosis: float
    ks_distance: float
    max_skew: float = 0.1
    max_kurtosis: float = 0.2

    @property
    def ks_threshold(self):
        return 1.63 / math.sqrt(self.n)

    @property
    def passed(self):
        return (abs(self.skewness) < self.max_skew
                and abs(self.excess_kurtosis) < self.max_kurtosis
                and self.ks_distance < self.ks_threshold)

    def to_dict(self):
        return {"n": self.n, "skewness": self.skewness, "excess_kurtosis": self.excess_kurtosis,
                "ks_distance": self.ks_distance, "ks_threshold": self.ks_threshold,
                "passed": self.passed}


def normality_test(x, mean=None, variance=None):
    """Standardize and compare with the standard normal.

    Passes when ``|skew| < 0.1``, ``|excess kurtosis| < 0.2`` and the
    Kolmogorov distance is below the 1% critical value ``1.63 / sqrt(n)``.
    """
    x = np.asarray(x, dtype=float).ravel()
    if x.size < 1000:
        raise ValueError("normality_test needs at least 1000 values")
    mean = x.mean() if mean is None else mean
    variance = x.var(ddof=1) if variance is None else variance
    zs = (x - mean) / math.sqrt(variance)
    return NormalityReport(
        n=x.size,
        skewness=float(stats.skew(zs)),
        excess_kurtosis=float(stats.kurtosis(zs)),
        ks_distance=float(stats.kstest(zs, "norm").statistic),
    )
