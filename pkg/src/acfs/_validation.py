"""Input validation helpers shared across the package."""

import hashlib
import numbers

import numpy as np


class DomainError(ValueError):
    """Raised when an argument lies outside the domain of an operation."""


def as_generator(seed):
    """Return a ``numpy.random.Generator`` for ``seed``.

    Accepts ``None``, an integer, a ``SeedSequence`` or an existing
    ``Generator`` (returned unchanged, so the caller keeps ownership of
    the stream).
    """
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def child_seed(rng):
    """Draw a 63-bit integer seed from ``rng`` for a derived stream."""
    return int(as_generator(rng).integers(0, 2**63 - 1))


def check_costs(costs):
    costs = np.asarray(costs, dtype=float).ravel()
    if costs.size == 0:
        raise DomainError("costs must be non-empty")
    if not np.all(np.isfinite(costs)):
        raise DomainError("costs must be finite")
    return costs


def check_alpha(alpha, allow_zero=True):
    if not isinstance(alpha, numbers.Real) or not np.isfinite(alpha):
        raise DomainError(f"alpha must be a finite real, got {alpha!r}")
    lo_ok = alpha >= 0 if allow_zero else alpha > 0
    if not (lo_ok and alpha < 1):
        raise DomainError(f"alpha must lie in {'[0, 1)' if allow_zero else '(0, 1)'}, got {alpha}")
    return float(alpha)


def check_positive_int(value, name, minimum=1):
    if isinstance(value, (bool, np.bool_)) or not isinstance(value, numbers.Integral):
        raise DomainError(f"{name} must be an integer, got {value!r}")
    if value < minimum:
        raise DomainError(f"{name} must be >= {minimum}, got {value}")
    return int(value)


def check_matrix(a, shape=None, name="array"):
    a = np.asarray(a, dtype=float)
    if shape is not None and a.shape != shape:
        raise DomainError(f"{name} must have shape {shape}, got {a.shape}")
    if not np.all(np.isfinite(a)):
        raise DomainError(f"{name} must be finite")
    return a


class OptimizationError(RuntimeError):
    """Raised when an optimiser cannot produce a usable result."""


def derive_seed(master_seed, *labels):
    """64-bit seed from a master seed and a sequence of labels.

    Uses a keyed BLAKE2b digest of the labels' text form, so adding a new
    label family never shifts the streams of existing ones and the result
    does not depend on execution order.
    """
    h = hashlib.blake2b(digest_size=8)
    h.update(repr(int(master_seed)).encode())
    for label in labels:
        h.update(b"\x1f")
        h.update(str(label).encode())
    return int.from_bytes(h.digest(), "little") >> 1
