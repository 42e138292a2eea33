"""Scalar backends: exact rationals (``fractions.Fraction``) or IEEE doubles.

Every container in kvnlab is homogeneous in one backend. Exact data lives in
numpy ``object`` arrays of ``Fraction``; double data in ``float64`` arrays.
"""

from __future__ import annotations

import math
from fractions import Fraction
from typing import Any, Iterable

import numpy as np

from .errors import BackendMismatchError

EXACT = "exact"
FLOAT = "float"
BACKENDS = (EXACT, FLOAT)


def check_backend(backend: str) -> str:
    if backend not in BACKENDS:
        raise ValueError(f"unknown backend {backend!r}; expected one of {BACKENDS}")
    return backend


def same_backend(*backends: str) -> str:
    first = backends[0]
    for b in backends[1:]:
        if b != first:
            raise BackendMismatchError(f"cannot mix backends {first!r} and {b!r}")
    return first


def to_scalar(value: Any, backend: str):
    """Convert ``value`` (int, float, Fraction, or a ``"p/q"``/decimal string)."""
    if backend == EXACT:
        if isinstance(value, float):
            if not math.isfinite(value):
                raise ValueError(f"non-finite value {value!r} in exact backend")
            return Fraction(value)
        if isinstance(value, (np.integer,)):
            return Fraction(int(value))
        if isinstance(value, np.floating):
            return Fraction(float(value))
        return Fraction(value)
    if backend == FLOAT:
        if isinstance(value, str):
            try:
                return float(value)
            except ValueError:
                return float(Fraction(value))
        return float(value)
    raise ValueError(f"unknown backend {backend!r}")


def to_array(values: Iterable[Any], backend: str) -> np.ndarray:
    """Build a backend array from any nested iterable of scalars."""
    check_backend(backend)
    if backend == FLOAT:
        if isinstance(values, np.ndarray) and values.dtype != object:
            return values.astype(np.float64)
        arr = np.asarray(values, dtype=object)
        return np.vectorize(lambda v: to_scalar(v, FLOAT), otypes=[np.float64])(arr) if arr.size else arr.astype(np.float64)
    arr = np.asarray(values, dtype=object)
    if arr.size == 0:
        return arr
    return np.vectorize(lambda v: to_scalar(v, EXACT), otypes=[object])(arr)


def backend_of(arr: np.ndarray) -> str:
    return EXACT if arr.dtype == object else FLOAT


def int_range(start: int, stop: int, backend: str) -> np.ndarray:
    """``arange`` whose entries divide exactly in the given backend."""
    if backend == EXACT:
        return np.array(list(range(start, stop)), dtype=object)
    return np.arange(start, stop, dtype=np.float64)


def format_scalar(value) -> str:
    """Serialize a scalar: ``"p/q"`` for rationals, ``repr`` for doubles."""
    if isinstance(value, Fraction):
        if value.denominator == 1:
            return str(value.numerator)
        return f"{value.numerator}/{value.denominator}"
    return repr(float(value))


def parse_scalar(text: str, backend: str):
    return to_scalar(text.strip(), backend)


def as_float(value) -> float:
    return float(value)
