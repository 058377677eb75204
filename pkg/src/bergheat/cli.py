"""Command line interface.

Exit codes: 0 success, 1 a checked criterion failed, 2 configuration error.
Set ``BERGHEAT_WORKERS`` to run chunked Monte Carlo work on a process pool.
"""

import argparse
import json
import logging
import os
import sys

import numpy as np

from . import experiments, oracle
from .geometry import build_basis
from .heat import HeatKernelSampler, HeatParams, haar_unitary
from .manifest import RunManifest, derive_seed
from .matrix_metric import delta_vector
from .records import to_jsonable, write_csv, write_jsonl, write_records
from .statistics import LinearStatistic, TwoPointGrid, smooth_variance_check, two_point_covariance
from .zeros import GaussianZeros, RayDirection, l1_convergence, number_variance, top_zeros

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


class ConfigError(ValueError):
    pass


def _floats(text):
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def _emit(obj, out=None):
    text = json.dumps(to_jsonable(obj), indent=2)
    if out:
        with open(out, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)


def _parse_set(spec):
    """``hemisphere``, ``sphere``, ``disk:R`` or ``annulus:r1,r2``."""
    name, _, arg = spec.partition(":")
    try:
        if name == "hemisphere":
            return LinearStatistic.hemisphere()
        if name == "sphere":
            return LinearStatistic.sphere()
        if name == "disk":
            return LinearStatistic.disk(float(arg))
        if name == "annulus":
            r1, r2 = _floats(arg)
            return LinearStatistic.annulus(r1, r2)
    except (ValueError, argparse.ArgumentTypeError) as exc:
        raise ConfigError(f"bad set specification {spec!r}: {exc}") from exc
    raise ConfigError(f"unknown set {spec!r}")


def _parse_function(spec):
    """``bump`` or ``bump:sigma``."""
    name, _, arg = spec.partition(":")
    if name == "bump":
        return LinearStatistic.bump(float(arg) if arg else 1.0)
    raise ConfigError(f"unknown test function {spec!r}")


def _arguments(args):
    return {k: v for k, v in vars(args).items() if not callable(v)}


# --- subcommands -------------------------------------------------------------

def cmd_sample(args):
    params = HeatParams(args.N, args.t, "mabuchi" if args.mabuchi else "raw", args.k)
    sampler = HeatKernelSampler(args.N, args.t, args.mode, params.scaling, args.k,
                                random_state=args.seed, burn_in=args.burn_in, thin=args.thin)
    manifest = RunManifest(sys.argv, _arguments(args), args.seed)
    batch = sampler.fit().sample(args.n)
    manifest.seed_tree = {"sampler": batch.manifest}
    if args.format == "binary":
        with open(args.out, "wb") as fh:
            write_records(fh, batch)
    else:
        with open(args.out, "w") as fh:
            write_jsonl(fh, batch)
    _emit(manifest.finish().to_dict(), args.manifest or args.out + ".manifest.json")
    return EXIT_OK


def cmd_oracle(args):
    if args.what == "d-rho":
        rep = oracle.d_rho_bipotential(args.t, args.rho, args.tol)
        _emit(dict(t=args.t, rho=args.rho, **rep.to_dict()))
    elif args.what == "small-rho":
        _emit({"t": args.t, "value": oracle.small_rho_integral(args.t, args.tol)})
    elif args.what == "dilog":
        _emit({"rho": args.rho, "value": oracle.dilog(args.rho)})
    elif args.what == "hciz":
        if len(args.a) != len(args.b):
            raise ConfigError("--a and --b must have the same length")
        _emit({"a": args.a, "b": args.b, "mu": args.mu, "value": oracle.hciz(args.a, args.b, args.mu)})
    elif args.what == "bipotential-difference":
        rep = oracle.bipotential_difference(args.t, args.rho_lo, args.rho_hi)
        _emit(dict(t=args.t, rho_lo=args.rho_lo, rho_hi=args.rho_hi, **rep.to_dict()))
    return EXIT_OK


def _read_rhos(path):
    with open(path) as fh:
        data = json.load(fh)
    rhos = data["rhos"] if isinstance(data, dict) else data
    return sorted((float(r) for r in rhos), reverse=True)


def cmd_estimate(args):
    manifest = RunManifest(sys.argv, _arguments(args), args.seed)
    if args.what == "two-point":
        rhos = _read_rhos(args.pairs) if args.pairs else [0.6, 0.3]
        params = HeatParams.for_degree(args.k, args.t)
        grid = TwoPointGrid.from_rhos(args.k, rhos, args.rotations, derive_seed(args.seed, "two-point", 0))
        rep = two_point_covariance(params, build_basis(args.k), grid, args.n,
                                   derive_seed(args.seed, "two-point", 1))
        rows = [{"pair": i, "rho": rho, "cov": c.estimate, "se": c.std_error}
                for i, (rho, c) in enumerate(zip(grid.rhos, rep.covariances))]
        write_csv(args.csv or sys.stdout, rows, ["pair", "rho", "cov", "se"])
        diffs = []
        for (i, j), d in rep.differences.items():
            pred = oracle.bipotential_difference(params.time, grid.rhos[j], grid.rhos[i]).value / args.k**2
            diffs.append({"pairs": [i, j], "rho": [grid.rhos[i], grid.rhos[j]],
                          "difference": d.estimate, "se": d.std_error, "predicted": pred})
        summary = {"differences": diffs, "manifest": manifest.finish().to_dict()}
    else:
        stat = _parse_function(args.f)
        chk = smooth_variance_check(args.k, stat, args.n, args.seed, args.ensemble, args.t)
        summary = {**chk.to_dict(), "manifest": manifest.finish().to_dict()}
    _emit(summary, args.json)
    return EXIT_OK


def cmd_zeros(args):
    if args.what == "sample":
        gz = GaussianZeros(args.k, random_state=args.seed).fit()
        rows = []
        for i, zs in enumerate(gz.sample(args.n)):
            rows += [(i, *r) for r in zs.rows()]
        write_csv(args.out or sys.stdout, rows, ["sample", "re", "im", "at_infinity"])
        return EXIT_OK
    stat = _parse_set(args.set)
    res = number_variance(args.k, stat, args.n, args.seed)
    _emit({**res.to_dict(), "set": stat.label, "k": args.k,
           "manifest": RunManifest(sys.argv, _arguments(args), args.seed).finish().to_dict()})
    return EXIT_OK


def cmd_boundary(args):
    basis = build_basis(args.k)
    U = haar_unitary(args.k + 1, np.random.default_rng(args.seed))
    lam = np.asarray(args.lam, dtype=float) if args.lam else -delta_vector(args.k + 1)
    ray = RayDirection(lam, U)
    dist = l1_convergence(ray, basis, args.times)
    if args.roots:
        write_csv(args.roots, top_zeros(ray, basis).rows(), ["re", "im", "at_infinity"])
    _emit({"k": args.k, "lambda": ray.lam, "multiplicity": ray.multiplicity,
           "times": args.times, "l1": dist, "nonincreasing": bool(np.all(np.diff(dist) <= 0))})
    return EXIT_OK


def _load_config(path):
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    if not text.strip():
        raise ConfigError("empty config: expected a JSON object with an 'experiment' field")
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(cfg, dict) or "experiment" not in cfg:
        raise ConfigError("config must be a JSON object with an 'experiment' field")
    allowed = {"experiment", "seed", "params", "out"}
    extra = set(cfg) - allowed
    if extra:
        raise ConfigError(f"unknown config fields {sorted(extra)}; allowed {sorted(allowed)}")
    if not isinstance(cfg.get("params", {}), dict):
        raise ConfigError("'params' must be an object")
    return cfg


def cmd_run(args):
    cfg = _load_config(args.config)
    if args.seed is not None:
        cfg["seed"] = args.seed
    if args.out:
        cfg["out"] = args.out
    params = dict(cfg.get("params", {}))
    for item in args.set or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        try:
            params[key] = json.loads(value)
        except json.JSONDecodeError:
            params[key] = value
    seed = int(cfg.get("seed", 0))
    manifest = RunManifest(sys.argv, {"experiment": cfg["experiment"], "params": params}, seed)
    try:
        result = experiments.run(cfg["experiment"], params, seed)
    except KeyError as exc:
        raise ConfigError(str(exc.args[0])) from exc
    manifest.seed_tree = {"root": seed, "derivation": "SeedSequence(seed, spawn_key=(crc32(experiment), ...))"}
    manifest.parameters["resolved"] = result.parameters
    manifest.finish()
    for check in result.checks:
        print(check.line())
    out = cfg.get("out")
    if out:
        os.makedirs(out, exist_ok=True)
        for name, rows in result.tables.items():
            if rows:
                write_csv(os.path.join(out, f"{result.name}-{name}.csv"),
                          [to_jsonable(r) for r in rows], list(rows[0]))
        _emit(result.summary(), os.path.join(out, f"{result.name}-summary.json"))
        _emit(manifest.to_dict(), os.path.join(out, f"{result.name}-manifest.json"))
    return EXIT_OK if result.passed else EXIT_FAIL


def cmd_list(args):
    for name, (_, criterion, defaults) in sorted(experiments.REGISTRY.items(), key=lambda kv: kv[1][1]):
        print(f"{criterion:>2}  {name:22s} {json.dumps(defaults)}")
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="bergheat", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("sample", help="draw heat kernel samples")
    s.add_argument("--N", type=int, required=True)
    s.add_argument("--t", type=float, required=True)
    s.add_argument("--k", type=int)
    s.add_argument("--mabuchi", action="store_true", help="rescale time by epsilon_k^-2")
    s.add_argument("--mode", choices=["mcmc", "brownian"], default="mcmc")
    s.add_argument("--n", type=int, default=1000)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--burn-in", type=int, default=2000)
    s.add_argument("--thin", type=int, default=10)
    s.add_argument("--format", choices=["jsonl", "binary"], default="jsonl")
    s.add_argument("--out", required=True)
    s.add_argument("--manifest")
    s.set_defaults(func=cmd_sample)

    o = sub.add_parser("oracle", help="analytic evaluators (JSON output)")
    osub = o.add_subparsers(dest="what", required=True)
    d = osub.add_parser("d-rho")
    d.add_argument("--t", type=float, required=True)
    d.add_argument("--rho", type=float, required=True)
    d.add_argument("--tol", type=float, default=1e-10)
    d = osub.add_parser("small-rho")
    d.add_argument("--t", type=float, required=True)
    d.add_argument("--tol", type=float, default=1e-12)
    d = osub.add_parser("dilog")
    d.add_argument("--rho", type=float, required=True)
    d = osub.add_parser("hciz")
    d.add_argument("--a", type=_floats, required=True)
    d.add_argument("--b", type=_floats, required=True)
    d.add_argument("--mu", type=float, default=1.0)
    d = osub.add_parser("bipotential-difference")
    d.add_argument("--t", type=float, required=True)
    d.add_argument("--rho-lo", type=float, required=True)
    d.add_argument("--rho-hi", type=float, required=True)
    o.set_defaults(func=cmd_oracle)

    e = sub.add_parser("estimate", help="Monte Carlo estimators")
    esub = e.add_subparsers(dest="what", required=True)
    tp = esub.add_parser("two-point")
    tp.add_argument("--k", type=int, required=True)
    tp.add_argument("--t", type=float, required=True)
    tp.add_argument("--pairs", help="JSON file with a list of rho values")
    tp.add_argument("--n", type=int, default=10_000)
    tp.add_argument("--rotations", type=int, default=32)
    tp.add_argument("--seed", type=int, default=0)
    tp.add_argument("--csv")
    tp.add_argument("--json")
    va = esub.add_parser("variance")
    va.add_argument("--k", type=int, required=True)
    va.add_argument("--ensemble", choices=["zeros", "heat"], default="zeros")
    va.add_argument("--t", type=float)
    va.add_argument("--f", default="bump")
    va.add_argument("--n", type=int, default=2000)
    va.add_argument("--seed", type=int, default=0)
    va.add_argument("--json")
    e.set_defaults(func=cmd_estimate)

    z = sub.add_parser("zeros", help="Gaussian random zeros")
    zsub = z.add_subparsers(dest="what", required=True)
    zs = zsub.add_parser("sample")
    zs.add_argument("--k", type=int, required=True)
    zs.add_argument("--n", type=int, default=1)
    zs.add_argument("--seed", type=int, default=0)
    zs.add_argument("--out")
    nv = zsub.add_parser("number-variance")
    nv.add_argument("--k", type=int, required=True)
    nv.add_argument("--set", default="hemisphere")
    nv.add_argument("--n", type=int, default=2000)
    nv.add_argument("--seed", type=int, default=0)
    z.set_defaults(func=cmd_zeros)

    b = sub.add_parser("boundary", help="geodesic ray degeneration")
    bsub = b.add_subparsers(dest="what", required=True)
    ray = bsub.add_parser("ray")
    ray.add_argument("--k", type=int, required=True)
    ray.add_argument("--times", type=_floats, default=[1.0, 2.0, 4.0, 8.0])
    ray.add_argument("--lam", type=_floats, help="ray direction (default: delta_N)")
    ray.add_argument("--seed", type=int, default=0)
    ray.add_argument("--roots", help="CSV file for the zeros of the top section")
    b.set_defaults(func=cmd_boundary)

    r = sub.add_parser("run", help="run a named experiment from a JSON config")
    r.add_argument("config")
    r.add_argument("--seed", type=int)
    r.add_argument("--out")
    r.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a parameter")
    r.set_defaults(func=cmd_run)

    ls = sub.add_parser("list", help="list named experiments")
    ls.set_defaults(func=cmd_list)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ValueError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
