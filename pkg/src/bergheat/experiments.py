"""Named experiments, one per acceptance criterion.

Each experiment takes a parameter dictionary (defaults below, overridable
from a config file or the command line) and a base seed, and returns an
:class:`ExperimentResult` with pass/fail checks and plot-ready tables.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from . import oracle
from .geometry import build_basis
from .heat import HeatKernelSampler, HeatParams, concentration_report, haar_unitary
from .manifest import derive_seed, parallel_map
from .matrix_metric import delta_vector
from .statistics import (
    LinearStatistic,
    TwoPointGrid,
    default_flatness_grid,
    estimate_mean,
    estimate_variance,
    normality_test,
    one_point_flatness,
    predicted_covariance_difference,
    predicted_covariance_difference_limit,
    predicted_smooth_variance,
    two_point_covariance,
)
from .zeros import (
    GaussianZeros,
    RayDirection,
    cell_partition_counts,
    exact_smooth_variance,
    l1_convergence,
    number_variance,
    weak_limit_check,
)


@dataclass
class Check:
    name: str
    passed: bool
    detail: str

    def __post_init__(self):
        self.passed = bool(self.passed)

    def line(self):
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.name}: {self.detail}"


@dataclass
class ExperimentResult:
    name: str
    criterion: int
    checks: list
    tables: dict = field(default_factory=dict)
    parameters: dict = field(default_factory=dict)

    @property
    def passed(self):
        return all(c.passed for c in self.checks)

    def summary(self):
        return {"experiment": self.name, "criterion": self.criterion, "passed": self.passed,
                "checks": [c.__dict__ for c in self.checks], "parameters": self.parameters}


REGISTRY = {}


def experiment(name, criterion, **defaults):
    def wrap(func):
        REGISTRY[name] = (func, criterion, defaults)
        return func
    return wrap


def run(name, overrides=None, seed=0):
    """Run a registered experiment with parameter overrides."""
    if name not in REGISTRY:
        raise KeyError(f"unknown experiment {name!r}; choose from {sorted(REGISTRY)}")
    func, criterion, defaults = REGISTRY[name]
    params = dict(defaults)
    unknown = set(overrides or {}) - set(defaults)
    if unknown:
        raise KeyError(f"unknown parameters for {name}: {sorted(unknown)}")
    params.update(overrides or {})
    checks, tables = func(params, seed)
    return ExperimentResult(name, criterion, checks, tables, params)


def _rel(a, b):
    return abs(a - b) / abs(b)


# --- 1-5: oracle ------------------------------------------------------------

@experiment("oracle-identities", 1, times=[0.1, 1.0, 5.0, 20.0], grid=100)
def _oracle_identities(p, seed):
    rows, checks = [], []
    for t in p["times"]:
        v = oracle.small_rho_integral(t)
        rows.append({"t": t, "value": v, "rel_err": _rel(v, 2 * t)})
    worst = max(r["rel_err"] for r in rows)
    checks.append(Check("small_rho_integral = 2t", worst < 1e-6, f"max rel err {worst:.2e} < 1e-6"))
    xs = np.linspace(0.0, 1.0, p["grid"])
    resid = [abs(oracle.dilog(x) + oracle.dilog(1 - x) - math.pi**2 / 6
                 + (math.log(x) * math.log1p(-x) if 0 < x < 1 else 0.0)) for x in xs]
    checks.append(Check("dilog reflection", max(resid) < 1e-12, f"max residual {max(resid):.2e} < 1e-12"))
    d1 = abs(oracle.dilog(1.0) - math.pi**2 / 6)
    checks.append(Check("Li2(1) = pi^2/6", d1 < 1e-12, f"|diff| {d1:.2e} < 1e-12"))
    return checks, {"small_rho": rows}


@experiment("oracle-limits", 2, t=200.0, rhos=[0.1, 0.5, 0.9], t_pair=[100.0, 200.0],
            scan_times=[1.0, 2.0, 5.0, 10.0, 20.0, 40.0, 100.0, 200.0])
def _oracle_limits(p, seed):
    rows = []
    for t in p["scan_times"]:
        for rho in p["rhos"]:
            v = oracle.d_rho_bipotential(t, rho).value
            lim = float(oracle.d_rho_limit(rho))
            rows.append({"t": t, "rho": rho, "d_rho_I": v, "limit": lim, "error": v - lim,
                         "rel_diff": _rel(v, lim)})
    worst = max(_rel(oracle.d_rho_bipotential(p["t"], rho).value, float(oracle.d_rho_limit(rho)))
                for rho in p["rhos"])
    checks = [Check(f"t={p['t']:g} limit", worst < 2e-2, f"max rel diff {worst:.2e} < 2e-2")]
    t1, t2 = p["t_pair"]
    ratios = []
    for rho in p["rhos"]:
        e1 = abs(oracle.d_rho_bipotential(t1, rho).value - float(oracle.d_rho_limit(rho)))
        e2 = abs(oracle.d_rho_bipotential(t2, rho).value - float(oracle.d_rho_limit(rho)))
        ratios.append(e1 / e2 if e2 > 0 else math.inf)
    ok = all(1.6 <= r <= 2.4 for r in ratios)
    checks.append(Check("O(1/t) convergence order", ok,
                        f"error ratios t={t1:g}/t={t2:g}: "
                        + ", ".join(f"{r:.3g}" for r in ratios) + " in [1.6, 2.4]"))
    return checks, {"limits": rows}


@experiment("small-rho", 3, t=1.0, rho=1e-6)
def _small_rho(p, seed):
    rep = oracle.d_rho_bipotential(p["t"], p["rho"])
    ok = abs(rep.value) < 10
    return ([Check("small-rho cancellation", ok, f"|d_rho I(t={p['t']:g}, rho={p['rho']:g})| = "
                   f"{abs(rep.value):.6g} < 10")],
            {"small_rho": [dict(t=p["t"], rho=p["rho"], **rep.to_dict())]})


@experiment("hciz", 4, sizes=[2, 3], n=1_000_000, mu=1.0)
def _hciz(p, seed):
    rows, checks = [], []
    for N in p["sizes"]:
        rng = np.random.default_rng(derive_seed(seed, "hciz", N, 0))
        a = rng.uniform(-1, 1, N)
        b = rng.uniform(-1, 1, N)
        exact = oracle.hciz(a, b, p["mu"])
        mc, se = oracle.hciz_monte_carlo(a, b, p["mu"], p["n"], derive_seed(seed, "hciz", N, 1))
        zval = abs(mc - exact) / se
        rel = _rel(mc, exact)
        rows.append({"N": N, "a": a.tolist(), "b": b.tolist(), "formula": exact, "mc": mc,
                     "se": se, "z": zval, "rel": rel})
        checks.append(Check(f"HCIZ N={N}", zval < 3 and rel < 0.01,
                            f"formula {exact:.6f}, MC {mc:.6f} +- {se:.1e}: {zval:.2f} SE, rel {rel:.1e}"))
    return checks, {"hciz": rows}


@experiment("gaussian-vandermonde", 5,
            cases=[[[1.0, -1.0], 1.0], [[1.0, 0.0, -1.0], 0.5], [[0.3, -0.7], 2.0],
                   [[0.4, 0.1, -0.9], 1.5]])
def _gaussian_vandermonde(p, seed):
    rows, checks = [], []
    for mu, t in p["cases"]:
        lhs, rhs = oracle.gaussian_vandermonde_identity(mu, t)
        dev = abs(lhs / rhs - 1)
        rows.append({"mu": mu, "t": t, "lhs": lhs, "rhs": rhs, "deviation": dev})
        checks.append(Check(f"identity N={len(mu)} t={t:g}", dev < 1e-6, f"|lhs/rhs - 1| = {dev:.2e}"))
    return checks, {"identity": rows}


# --- 6, 12: samplers ----------------------------------------------------------

@experiment("sampler-crosscheck", 6, sizes=[2, 3], times=[0.5, 1.0, 2.0], n=10_000,
            threshold=0.05)
def _sampler_crosscheck(p, seed):
    rows, checks = [], []
    for N in p["sizes"]:
        for t in p["times"]:
            draws = {}
            for i, method in enumerate(("mcmc", "brownian")):
                s = HeatKernelSampler(N, t, method, random_state=derive_seed(seed, "sampler", N, int(1000 * t), i))
                draws[method] = s.fit().sample(p["n"]).lam
            for stat, f in (("lam_max", lambda l: l.max(axis=1)),
                            ("sum_sq", lambda l: np.sum(l**2, axis=1))):
                d = stats.ks_2samp(f(draws["mcmc"]), f(draws["brownian"])).statistic
                rows.append({"N": N, "t": t, "statistic": stat, "ks": d})
    worst = max(rows, key=lambda r: r["ks"])
    checks.append(Check("KS(Brownian, MCMC)", worst["ks"] < p["threshold"],
                        f"max KS {worst['ks']:.4f} (N={worst['N']}, t={worst['t']:g}, "
                        f"{worst['statistic']}) < {p['threshold']}"))
    return checks, {"ks": rows}


@experiment("concentration", 12, N=4, times=[1.0, 10.0], n=2000, radius_time=10.0)
def _concentration(p, seed):
    rows = []
    for i, t in enumerate(p["times"]):
        params = HeatParams(p["N"], t)
        s = HeatKernelSampler(p["N"], t, random_state=derive_seed(seed, "concentration", i))
        batch = s.fit().sample(p["n"])
        reps = [concentration_report(c, params) for c in batch]
        rows.append({"t": t, "median_radius_ratio": float(np.median([r.radius_ratio for r in reps])),
                     "median_angle": float(np.median([r.angle for r in reps]))})
    by_t = {r["t"]: r for r in rows}
    ratio = by_t[p["radius_time"]]["median_radius_ratio"]
    angles = [r["median_angle"] for r in sorted(rows, key=lambda r: r["t"])]
    return ([Check(f"median radius ratio at t={p['radius_time']:g}", 0.8 <= ratio <= 1.2,
                   f"{ratio:.3f} in [0.8, 1.2]"),
             Check("median angle decreasing in t", all(np.diff(angles) < 0),
                   " -> ".join(f"{a:.4f}" for a in angles))],
            {"concentration": rows})


# --- 7-9: heat ensemble estimators ------------------------------------------

@experiment("one-point-flatness", 7, k=4, t=1.0, n=10_000, grid_points=12, threshold=3.0)
def _flatness(p, seed):
    params = HeatParams.for_degree(p["k"], p["t"])
    rep = one_point_flatness(params, build_basis(p["k"]), default_flatness_grid(p["grid_points"]),
                             p["n"], derive_seed(seed, "flatness"))
    rows = [{"re": z.real, "im": z.imag, "estimate": r.estimate, "se": r.std_error}
            for z, r in zip(rep.points, rep.results)]
    return ([Check("one-point flatness", rep.passed(p["threshold"]),
                   f"max pairwise deviation {rep.max_pairwise_z:.2f} joint SE < {p['threshold']}; "
                   f"offset {rep.offset.estimate:.5f} +- {rep.offset.std_error:.1e}")],
            {"flatness": rows})


def _two_point_rows(rep, predicted):
    est = rep.difference(0, 1)
    zval = abs(est.estimate - predicted) / est.std_error
    rel = _rel(est.estimate, predicted)
    row = {"rho_hi": rep.grid.rhos[0], "rho_lo": rep.grid.rhos[1], "estimate": est.estimate,
           "se": est.std_error, "predicted": predicted, "z": zval, "rel": rel,
           "cov_hi": rep.covariances[0].estimate, "cov_lo": rep.covariances[1].estimate}
    return row, zval, rel


@experiment("two-point", 8, k=8, t=1.0, rhos=[0.6, 0.3], n=40_000, rotations=32)
def _two_point(p, seed):
    params = HeatParams.for_degree(p["k"], p["t"])
    grid = TwoPointGrid.from_rhos(p["k"], p["rhos"], p["rotations"], derive_seed(seed, "two-point", 0))
    rep = two_point_covariance(params, build_basis(p["k"]), grid, p["n"], derive_seed(seed, "two-point", 1))
    pred = predicted_covariance_difference(params.time, p["k"], *p["rhos"])
    row, zval, rel = _two_point_rows(rep, pred)
    return ([Check("two-point vs oracle", zval < 3 and rel < 0.10,
                   f"MC {row['estimate']:.6f} +- {row['se']:.1e}, oracle {pred:.6f}: "
                   f"{zval:.2f} SE, rel {rel:.3f}")],
            {"two_point": [row]})


@experiment("large-t-dilog", 9, k=4, t=1000.0, rhos=[0.6, 0.3], n=40_000, rotations=32)
def _large_t(p, seed):
    params = HeatParams.for_degree(p["k"], p["t"])
    grid = TwoPointGrid.from_rhos(p["k"], p["rhos"], p["rotations"], derive_seed(seed, "large-t", 0))
    rep = two_point_covariance(params, build_basis(p["k"]), grid, p["n"], derive_seed(seed, "large-t", 1))
    pred = predicted_covariance_difference_limit(p["k"], *p["rhos"])
    row, zval, rel = _two_point_rows(rep, pred)
    return ([Check("large-t covariance vs Li2", zval < 3,
                   f"MC {row['estimate']:.6f} +- {row['se']:.1e}, Li2 {pred:.6f}: {zval:.2f} SE")],
            {"two_point": [row]})


# --- 10: zeros ------------------------------------------------------------------

def _zeros_chunk(args):
    k, stat_spec, n, seed_seq = args
    stat = _stat_from_spec(stat_spec)
    return GaussianZeros(k, random_state=seed_seq).fit().linear_statistic(stat, n)


def _stat_from_spec(spec):
    kind, value = spec
    if kind == "bump":
        return LinearStatistic.bump(value)
    raise ValueError(f"unknown statistic {kind}")


def zeros_statistic_values(k, sigma, n, seed, chunk=1000):
    """``sum_roots f`` for ``n`` sections, in seed-derived chunks (worker-count independent)."""
    jobs = [(k, ("bump", sigma), min(chunk, n - lo), derive_seed(seed, "zeros-smooth", k, i))
            for i, lo in enumerate(range(0, n, chunk))]
    return np.concatenate(parallel_map(_zeros_chunk, jobs))


@experiment("zeros-statistics", 10, density_k=64, density_n=1000, nv_ks=[64, 128, 256],
            nv_n=20_000, smooth_k=128, smooth_n=10_000, smooth_ks=[64, 128, 256],
            smooth_slope_n=4000, sigma=1.0, tolerance=0.15)
def _zeros_statistics(p, seed):
    checks, tables = [], {}
    # expected density: equal-area cells
    zsets = GaussianZeros(p["density_k"], random_state=derive_seed(seed, "zeros-density")).fit() \
        .sample(p["density_n"])
    counts = cell_partition_counts(zsets)
    expected = p["density_k"] / counts.shape[1]
    cells = [estimate_mean(counts[:, j]) for j in range(counts.shape[1])]
    worst = max(abs(c.estimate - expected) / c.std_error for c in cells)
    tables["density"] = [{"cell": j, "mean": c.estimate, "se": c.std_error, "expected": expected}
                         for j, c in enumerate(cells)]
    checks.append(Check(f"root density uniform (k={p['density_k']})", worst < 3,
                        f"max cell deviation {worst:.2f} SE < 3"))

    # number variance of the hemisphere
    hemi = LinearStatistic.hemisphere()
    nv = {}
    for k in p["nv_ks"]:
        res = number_variance(k, hemi, p["nv_n"], derive_seed(seed, "zeros-nv", k))
        nv[k] = res
    tables["number_variance"] = [{"k": k, "variance": r.result.estimate, "se": r.result.std_error,
                                  "predicted": r.predicted, "ratio": r.ratio} for k, r in nv.items()]
    kmax = max(p["nv_ks"])
    r = nv[kmax].ratio
    checks.append(Check(f"hemisphere number variance (k={kmax})", abs(r - 1) <= p["tolerance"],
                        f"MC/predicted {r:.3f} within {p['tolerance']:.0%}"))
    slope = np.polyfit(np.log(p["nv_ks"]), np.log([nv[k].result.estimate for k in p["nv_ks"]]), 1)[0]
    checks.append(Check("number variance log-log slope", abs(slope - 0.5) <= 0.1,
                        f"{slope:.3f} in 0.5 +- 0.1"))

    # smooth statistic variance and normality
    stat = LinearStatistic.bump(p["sigma"])
    values = {}
    for k in sorted(set(p["smooth_ks"]) | {p["smooth_k"]}):
        n = p["smooth_n"] if k == p["smooth_k"] else p["smooth_slope_n"]
        values[k] = zeros_statistic_values(k, p["sigma"], n, seed)
    rows = []
    for k, x in values.items():
        var = estimate_variance(x)
        pred = predicted_smooth_variance(k, stat)
        rows.append({"k": k, "n": x.size, "variance": var.estimate, "se": var.std_error,
                     "predicted": pred, "ratio": var.estimate / pred,
                     "exact_finite_k": exact_smooth_variance(k, stat)})
    tables["smooth_variance"] = rows
    main = next(r for r in rows if r["k"] == p["smooth_k"])
    checks.append(Check(f"smooth variance (k={p['smooth_k']})", abs(main["ratio"] - 1) <= p["tolerance"],
                        f"MC/predicted {main['ratio']:.3f} within {p['tolerance']:.0%} "
                        f"(exact finite-k/predicted {main['exact_finite_k'] / main['predicted']:.3f})"))
    ks = p["smooth_ks"]
    slope = np.polyfit(np.log(ks), np.log([next(r["variance"] for r in rows if r["k"] == k) for k in ks]), 1)[0]
    checks.append(Check("smooth variance log-log slope", abs(slope + 1) <= 0.1, f"{slope:.3f} in -1 +- 0.1"))
    norm = normality_test(values[p["smooth_k"]])
    tables["normality"] = [norm.to_dict()]
    checks.append(Check(f"CLT normality (k={p['smooth_k']}, n={norm.n})", norm.passed,
                        f"skew {norm.skewness:.3f}, excess kurtosis {norm.excess_kurtosis:.3f}, "
                        f"KS {norm.ks_distance:.4f} < {norm.ks_threshold:.4f}"))
    return checks, tables


# --- 11: boundary -----------------------------------------------------------------

@experiment("boundary", 11, k=4, times=[1.0, 2.0, 4.0, 8.0, 16.0, 32.0], s=50.0, psi_sigma=1.0,
            psi_center=[0.3, 0.2])
def _boundary(p, seed):
    k = p["k"]
    basis = build_basis(k)
    U = haar_unitary(k + 1, np.random.default_rng(derive_seed(seed, "boundary")))
    ray = RayDirection(-delta_vector(k + 1), U)
    dist = l1_convergence(ray, basis, [t / ray.spectral_gap for t in p["times"]])
    mono = bool(np.all(np.diff(dist) <= 0))
    psi = LinearStatistic.bump(p["psi_sigma"], complex(*p["psi_center"]))
    weak = weak_limit_check(ray, basis, psi, p["s"])
    rows = [{"s": t / ray.spectral_gap, "l1": d} for t, d in zip(p["times"], dist)]
    return ([Check("L1 convergence monotone", mono, ", ".join(f"{d:.3g}" for d in dist)),
             Check("L1 distance at largest ray time", dist[-1] < 1e-6, f"{dist[-1]:.2e} < 1e-6"),
             Check(f"weak limit (k={k}, s={p['s']:g})", weak < 1e-3, f"{weak:.2e} < 1e-3")],
            {"l1": rows, "weak_limit": [{"s": p["s"], "difference": weak}]})
