"""Samplers for the heat kernel measure on positive Hermitian matrices.

The measure started at the identity, in polar coordinates ``P = U^H e^Lambda U``,
factorizes into a Haar unitary times the radial density

    Delta(lam) Delta(e^lam) exp(-|lam|^2 / 4t)    on  sum(lam) = 0.

Two independent samplers are provided: a Metropolis chain on the radial
density paired with Haar unitaries, and a geodesic random walk for the
Brownian motion itself.  Their agreement is checked, not assumed.
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln
from sklearn.base import BaseEstimator

from ._validation import check_positive_float, check_positive_int, check_rng, seed_sequence
from .matrix_metric import PolarBatch, PolarCoords, delta_vector

logger = logging.getLogger(__name__)

SCALINGS = ("raw", "mabuchi")


@dataclass(frozen=True)
class HeatParams:
    """Ensemble parameters.

    In ``mabuchi`` mode the diffusion time is ``t / eps_k^2`` with
    ``eps_k = 1 / (k sqrt(k + 1))``; ``k`` is then required and ``N = k + 1``.
    """

    N: int
    t: float
    scaling: str = "raw"
    k: int = None

    def __post_init__(self):
        check_positive_int(self.N, "N")
        check_positive_float(self.t, "t")
        if self.scaling not in SCALINGS:
            raise ValueError(f"scaling must be one of {SCALINGS}")
        if self.scaling == "mabuchi":
            if self.k is None:
                raise ValueError("mabuchi scaling needs k")
            if self.N != self.k + 1:
                raise ValueError("mabuchi scaling needs N = k + 1")

    @classmethod
    def for_degree(cls, k, t, scaling="raw"):
        return cls(k + 1, t, scaling, k)

    @property
    def epsilon(self):
        if self.k is None:
            return None
        return 1.0 / (self.k * math.sqrt(self.k + 1))

    @property
    def time(self):
        """Diffusion time actually used by the samplers."""
        if self.scaling == "mabuchi":
            return self.t / self.epsilon**2
        return self.t


def log_heat_normalization(params):
    """``log C(t, N)`` for the normalization constant of the heat measure."""
    N, t = params.N, params.time
    if N < 2:
        raise ValueError("heat normalization needs N >= 2")
    return (
        0.5 * math.log(N)
        - math.log(2 * math.pi)
        - 0.5 * (N * N - 1) * math.log(4 * math.pi * t)
        - t * N * (N * N - 1) / 12.0
    )


def heat_normalization(params):
    """``C(t, N)`` in the linear domain (may underflow to 0; see the log form)."""
    return math.exp(log_heat_normalization(params))


def log_radial_integral(N, t):
    """Closed form of ``log int delta(sum lam) Delta(lam) Delta(e^lam) e^{-|lam|^2/4t} dlam``.

    The Dirac delta is in the variable ``sum(lam)``.  Combined with the unitary
    factor ``Vol U(N) / (2 pi)^N`` the constant satisfies
    ``C * radial * unitary = 1 / (2 pi)``.
    """
    logfact = gammaln(np.arange(1, N) + 1).sum()
    m = np.arange(N)
    spread = np.sum(m**2) - m.sum() ** 2 / N
    return (
        gammaln(N + 1) + logfact + 0.5 * N * math.log(2 * math.pi)
        + 0.5 * N * N * math.log(2 * t) + 0.5 * math.log(math.pi / (N * t))
        - math.log(2 * math.pi) + t * spread
    )


def log_unitary_volume(N):
    """``log(Vol U(N) / (2 pi)^N)`` with ``Vol U(N) = (2 pi)^{N(N+1)/2} / prod j!``."""
    return 0.5 * N * (N - 1) * math.log(2 * math.pi) - gammaln(np.arange(1, N + 1) + 1).sum()


def _pairwise_log_terms(lam):
    N = lam.shape[-1]
    i, j = np.triu_indices(N, 1)
    diff = np.abs(lam[..., i] - lam[..., j])
    top = np.maximum(lam[..., i], lam[..., j])
    with np.errstate(divide="ignore"):
        return np.sum(np.log(diff) + top + np.log(-np.expm1(-diff)), axis=-1)


def eigen_log_density(lam, params):
    """Unnormalized log radial density ``log[Delta(lam) Delta(e^lam)] - |lam|^2/4t``.

    Symmetric in the entries of ``lam``; ``-inf`` at coincident eigenvalues.
    Broadcasts over leading axes.
    """
    lam = np.asarray(lam, dtype=float)
    return _pairwise_log_terms(lam) - np.sum(lam**2, axis=-1) / (4.0 * params.time)


def hyperplane_frame(N):
    """Orthonormal basis (N, N-1) of ``{sum(lam) = 0}``."""
    A = np.eye(N)[:, : N - 1] - np.eye(N)[:, 1:]
    Q, _ = np.linalg.qr(A)
    return Q


def haar_unitary(N, random_state=None, size=None):
    """Haar-distributed unitary matrices via phase-corrected QR.

    Returns shape (N, N), or (size, N, N) when ``size`` is given.
    """
    N = check_positive_int(N, "N")
    rng = check_rng(random_state)
    shape = (N, N) if size is None else (size, N, N)
    Z = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / math.sqrt(2.0)
    Q, R = np.linalg.qr(Z)
    d = np.diagonal(R, axis1=-2, axis2=-1)
    return Q * (d / np.abs(d))[..., None, :]


@dataclass
class ChainState:
    """State of a batch of vectorized Metropolis chains."""

    x: np.ndarray
    logp: np.ndarray
    steps: int = 0
    accepted: int = 0
    proposed: int = 0
    seed_lineage: tuple = ()

    @property
    def acceptance(self):
        return self.accepted / self.proposed if self.proposed else float("nan")


def metropolis_step(state, logpdf, frame, step, rng):
    """One vectorized random-walk Metropolis step on the hyperplane."""
    prop = state.x + step * rng.standard_normal(state.x.shape)
    logp_new = logpdf(prop @ frame.T)
    log_u = np.log(rng.random(state.x.shape[0]))
    accept = log_u < logp_new - state.logp
    state.x = np.where(accept[:, None], prop, state.x)
    state.logp = np.where(accept, logp_new, state.logp)
    state.steps += 1
    state.accepted += int(accept.sum())
    state.proposed += accept.size
    return accept


class HeatKernelSampler(BaseEstimator):
    """Draw polar coordinates ``(lam, U)`` from the heat kernel measure.

    Parameters
    ----------
    N : int
        Matrix size.
    t : float
        Diffusion time (before any Mabuchi rescaling).
    method : {"mcmc", "brownian"}
        Metropolis chain on the radial density with Haar unitaries, or the
        geodesic random walk.
    scaling : {"raw", "mabuchi"}
    k : int, optional
        Tensor power; required for Mabuchi scaling.
    n_chains : int
        Number of parallel Metropolis chains (vectorized).
    burn_in, thin : int
        Metropolis burn-in steps per chain (also used for step tuning) and
        thinning interval between retained states.
    target_acceptance : float
        Acceptance rate aimed at while tuning.
    steps : int, optional
        Walk steps; default ``max(100, ceil(50 t))``.
    random_state : int, SeedSequence, Generator or None
    """

    def __init__(self, N=2, t=1.0, method="mcmc", scaling="raw", k=None, n_chains=256,
                 burn_in=2000, thin=10, target_acceptance=0.3, steps=None, random_state=None):
        self.N = N
        self.t = t
        self.method = method
        self.scaling = scaling
        self.k = k
        self.n_chains = n_chains
        self.burn_in = burn_in
        self.thin = thin
        self.target_acceptance = target_acceptance
        self.steps = steps
        self.random_state = random_state

    @property
    def params_(self):
        return HeatParams(self.N, self.t, self.scaling, self.k)

    def fit(self, X=None, y=None):
        """Tune the Metropolis step size (no-op for the random walk)."""
        params = self.params_
        if self.method not in ("mcmc", "brownian"):
            raise ValueError("method must be 'mcmc' or 'brownian'")
        self.seed_seq_ = seed_sequence(self.random_state)
        self.n_draws_ = 0
        if self.method == "brownian":
            self.n_steps_ = self.steps or max(100, math.ceil(50 * params.time))
            return self
        self._fit_mcmc(params)
        return self

    def _fit_mcmc(self, params):
        N, t = params.N, params.time
        self.frame_ = hyperplane_frame(N)
        rng = np.random.default_rng(self.seed_seq_.spawn(1)[0])
        start = 2.0 * t * delta_vector(N) + math.sqrt(t) * delta_vector(N) / max(1.0, N)
        x0 = np.tile(start @ self.frame_, (self.n_chains, 1))
        x0 += 0.1 * math.sqrt(2 * t) * rng.standard_normal(x0.shape)
        logpdf = lambda lam: eigen_log_density(lam, params)
        state = ChainState(x0, logpdf(x0 @ self.frame_.T))
        step = 2.38 * math.sqrt(2 * t) / math.sqrt(max(1, N - 1))
        window = 50
        for it in range(self.burn_in):
            metropolis_step(state, logpdf, self.frame_, step, rng)
            if (it + 1) % window == 0 and it < 0.8 * self.burn_in:
                step *= math.exp(state.acceptance - self.target_acceptance)
                state.accepted = state.proposed = 0
        state.accepted = state.proposed = 0
        for _ in range(200):
            metropolis_step(state, logpdf, self.frame_, step, rng)
        self.acceptance_rate_ = state.acceptance
        if self.acceptance_rate_ < 0.05:
            raise RuntimeError(
                f"Metropolis acceptance {self.acceptance_rate_:.3f} below 5% after tuning"
            )
        self.step_size_ = step
        self.state_ = state
        self.rng_ = rng
        logger.debug("tuned step %.4g, acceptance %.3f", step, self.acceptance_rate_)

    def sample(self, n):
        """Draw ``n`` samples as a :class:`PolarBatch`."""
        n = check_positive_int(n, "n")
        if not hasattr(self, "seed_seq_"):
            self.fit()
        child = self.seed_seq_.spawn(1)[0]
        if self.method == "mcmc":
            lam = self._sample_lambda(n)
            U = haar_unitary(self.N, np.random.default_rng(child), size=n)
        else:
            lam, U = brownian_walk(self.params_, n, self.n_steps_, np.random.default_rng(child))
        self.n_draws_ += n
        manifest = {
            "method": self.method, "N": self.N, "t": self.t, "time": self.params_.time,
            "scaling": self.scaling, "entropy": self.seed_seq_.entropy,
            "spawn_key": list(child.spawn_key),
        }
        if self.method == "mcmc":
            manifest.update(step_size=self.step_size_, acceptance=self.acceptance_rate_,
                            burn_in=self.burn_in, thin=self.thin, n_chains=self.n_chains)
        else:
            manifest.update(steps=self.n_steps_)
        return PolarBatch(lam, U, manifest)

    def _sample_lambda(self, n):
        params = self.params_
        logpdf = lambda lam: eigen_log_density(lam, params)
        per_chain = -(-n // self.n_chains)
        out = np.empty((per_chain, self.n_chains, self.N))
        state = self.state_
        state.accepted = state.proposed = 0
        for i in range(per_chain):
            for _ in range(self.thin):
                metropolis_step(state, logpdf, self.frame_, self.step_size_, self.rng_)
            out[i] = state.x @ self.frame_.T
        self.acceptance_rate_ = state.acceptance
        # chain-major order keeps each chain's draws contiguous for batch means
        lam = out.transpose(1, 0, 2).reshape(-1, self.N)[:n]
        lam -= lam.mean(axis=1, keepdims=True)
        return -np.sort(-lam, axis=1)


def _traceless_hermitian(rng, n, N, variance):
    """Random traceless Hermitian matrices, variance ``variance`` per CK coordinate."""
    W = np.zeros((n, N, N), dtype=complex)
    iu = np.triu_indices(N, 1)
    sd = math.sqrt(variance / 2.0)
    off = sd * (rng.standard_normal((n, len(iu[0]))) + 1j * rng.standard_normal((n, len(iu[0]))))
    W[:, iu[0], iu[1]] = off
    W = W + W.conj().transpose(0, 2, 1)
    g = math.sqrt(variance) * rng.standard_normal((n, N))
    g -= g.mean(axis=1, keepdims=True)
    W[:, np.arange(N), np.arange(N)] = g
    return W


def brownian_walk(params, n, steps, random_state=None):
    """Geodesic random walk ``X <- X^{1/2} exp(W) X^{1/2}`` started at I.

    ``W`` is traceless Hermitian with variance ``2h`` per orthonormal
    coordinate of ``Tr(X^{-1} dX)^2``, ``h = t / steps``, so the generator is
    the full Laplacian.  The state is carried as ``X = V e^D V^H`` and
    renormalized to ``det X = 1`` after every step.  Returns ``(lam, U)``.
    """
    rng = check_rng(random_state)
    N = params.N
    h = params.time / steps
    V = np.broadcast_to(np.eye(N, dtype=complex), (n, N, N)).copy()
    D = np.zeros((n, N))
    for _ in range(steps):
        W = _traceless_hermitian(rng, n, N, 2.0 * h)
        theta, Q = np.linalg.eigh(W)
        if not np.all(np.isfinite(theta)):
            raise FloatingPointError("non-finite matrix exponential; reduce the step size")
        B = V.conj().transpose(0, 2, 1) @ Q
        half = np.exp(D / 2.0)
        M = (half[:, :, None] * B * np.exp(theta)[:, None, :]) @ (B.conj().transpose(0, 2, 1) * half[:, None, :])
        M = 0.5 * (M + M.conj().transpose(0, 2, 1))
        w, R = np.linalg.eigh(M)
        if np.any(w <= 0) or not np.all(np.isfinite(w)):
            raise FloatingPointError("walk left the positive cone; reduce the step size")
        D = np.log(w)
        D -= D.mean(axis=1, keepdims=True)
        V = V @ R
    order = np.argsort(-D, axis=1)
    lam = np.take_along_axis(D, order, axis=1)
    V = np.take_along_axis(V, order[:, None, :], axis=2)
    return lam, V.conj().transpose(0, 2, 1)


def mcmc_sample(params, n, seed=None, **kwargs):
    """Convenience wrapper: ``n`` Metropolis x Haar samples."""
    sampler = HeatKernelSampler(params.N, params.t, "mcmc", params.scaling, params.k,
                                random_state=seed, **kwargs)
    return sampler.fit().sample(n)


def brownian_sample(params, steps=None, seed=None, n=1):
    """Endpoint(s) of the geodesic random walk; one :class:`PolarCoords` when n == 1."""
    sampler = HeatKernelSampler(params.N, params.t, "brownian", params.scaling, params.k,
                                steps=steps, random_state=seed)
    batch = sampler.fit().sample(n)
    return batch[0] if n == 1 else batch


@dataclass(frozen=True)
class ConcentrationReport:
    radius: float
    angle: float
    expected_radius: float

    @property
    def radius_ratio(self):
        return self.radius / self.expected_radius


def concentration_report(sample, params):
    """Radius ``|lam|``, angle to the ``delta_N`` axis, and ``2 |delta_N| t``."""
    lam = np.sort(np.asarray(sample.lam, dtype=float))
    delta = delta_vector(lam.size)
    radius = float(np.linalg.norm(lam))
    if radius == 0.0:
        angle = 0.0
    else:
        c = float(lam @ delta) / (radius * np.linalg.norm(delta))
        angle = float(np.arccos(np.clip(c, -1.0, 1.0)))
    expected = 2.0 * float(np.linalg.norm(delta)) * params.time
    return ConcentrationReport(radius, angle, expected)
