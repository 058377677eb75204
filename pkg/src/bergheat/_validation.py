"""Input validation helpers shared by the public API."""

import numbers

import numpy as np


def check_positive_int(value, name, minimum=1):
    if isinstance(value, bool) or not isinstance(value, numbers.Integral):
        raise TypeError(f"{name} must be an integer, got {type(value).__name__}")
    if value < minimum:
        raise ValueError(f"{name} must be >= {minimum}, got {value}")
    return int(value)


def check_positive_float(value, name):
    value = float(value)
    if not np.isfinite(value) or value <= 0:
        raise ValueError(f"{name} must be a positive finite number, got {value}")
    return value


def check_hermitian(A, atol=1e-12, name="matrix"):
    """Return ``A`` as a complex square array, raising if it is not Hermitian."""
    A = np.asarray(A, dtype=complex)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"{name} must be square, got shape {A.shape}")
    scale = max(1.0, float(np.max(np.abs(A))))
    if np.max(np.abs(A - A.conj().T)) > atol * scale:
        raise ValueError(f"{name} is not Hermitian")
    return A


def check_traceless(lam, atol=1e-10, name="lambda"):
    lam = np.asarray(lam, dtype=float)
    if lam.ndim != 1:
        raise ValueError(f"{name} must be a 1-d vector")
    scale = max(1.0, float(np.max(np.abs(lam)))) if lam.size else 1.0
    if abs(lam.sum()) > atol * scale:
        raise ValueError(f"{name} must sum to zero (det P = 1), got sum {lam.sum():.3e}")
    return lam


def check_rng(random_state):
    """Turn ``None``, an int, a SeedSequence or a Generator into a Generator."""
    if isinstance(random_state, np.random.Generator):
        return random_state
    return np.random.default_rng(random_state)


def seed_sequence(random_state):
    if isinstance(random_state, np.random.SeedSequence):
        return random_state
    if isinstance(random_state, np.random.Generator):
        return np.random.SeedSequence(int(random_state.integers(2**63)))
    return np.random.SeedSequence(random_state)
