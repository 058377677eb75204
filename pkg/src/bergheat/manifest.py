"""Run manifests, the seed tree and the worker pool."""

import getpass
import os
import platform
import sys
import time
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from importlib import metadata

import numpy as np

WORKERS_ENV = "BERGHEAT_WORKERS"


def derive_seed(seed, experiment, *path):
    """Deterministic ``SeedSequence`` for ``(seed, experiment, *path)``."""
    key = (zlib.crc32(experiment.encode()),) + tuple(int(p) for p in path)
    return np.random.SeedSequence(entropy=seed, spawn_key=key)


def worker_count():
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError as exc:
        raise ValueError(f"{WORKERS_ENV} must be an integer") from exc


def parallel_map(func, items):
    """``list(map(func, items))``, on a process pool when more than one worker is configured.

    Results come back in input order, so reductions do not depend on scheduling.
    """
    items = list(items)
    n = worker_count()
    if n == 1 or len(items) < 2:
        return [func(x) for x in items]
    with ProcessPoolExecutor(max_workers=min(n, len(items))) as pool:
        return list(pool.map(func, items))


def _versions():
    out = {"python": sys.version.split()[0]}
    for pkg in ("numpy", "scipy", "scikit-learn", "artifact"):
        try:
            out[pkg] = metadata.version(pkg)
        except metadata.PackageNotFoundError:
            out[pkg] = None
    return out


def _host():
    try:
        user = getpass.getuser()
    except Exception:
        user = None
    return {"node": platform.node(), "platform": platform.platform(), "cpus": os.cpu_count(),
            "user": user, "workers": worker_count()}


@dataclass
class RunManifest:
    """Everything needed to reproduce one run."""

    command: list
    parameters: dict
    seed: object = None
    seed_tree: dict = field(default_factory=dict)
    versions: dict = field(default_factory=_versions)
    host: dict = field(default_factory=_host)
    started: float = field(default_factory=time.time)
    wall_time: float = None

    def finish(self):
        self.wall_time = time.time() - self.started
        return self

    def to_dict(self):
        from .records import to_jsonable

        return to_jsonable(asdict(self))
