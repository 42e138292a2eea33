"""The concrete Riesz space R^d with componentwise order.

Vectors are immutable; band projections are coordinate masks. The weak order
unit ``e`` is any strictly positive vector (all-ones by default) and the
f-algebra multiplication on E_e is normalized so that ``e`` is its unit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from .errors import DimensionMismatchError, PreconditionError
from .scalars import EXACT, FLOAT, check_backend, format_scalar, same_backend, to_array, to_scalar


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class LatticeVector:
    coords: np.ndarray
    backend: str = FLOAT

    def __post_init__(self):
        check_backend(self.backend)
        arr = np.asarray(self.coords)
        if arr.ndim != 1 or arr.shape[0] < 1:
            raise DimensionMismatchError(f"expected a nonempty 1-D coordinate array, got shape {arr.shape}")
        if self.backend == EXACT:
            if arr.dtype != object or not all(isinstance(v, Fraction) for v in arr):
                arr = to_array(arr, EXACT)
        else:
            arr = to_array(arr, FLOAT)
        object.__setattr__(self, "coords", _frozen(arr))

    @classmethod
    def of(cls, values: Iterable, backend: str = FLOAT) -> "LatticeVector":
        return cls(to_array(list(values), backend), backend)

    @classmethod
    def ones(cls, dim: int, backend: str = FLOAT) -> "LatticeVector":
        return cls.of([1] * dim, backend)

    @classmethod
    def zeros(cls, dim: int, backend: str = FLOAT) -> "LatticeVector":
        return cls.of([0] * dim, backend)

    @property
    def dim(self) -> int:
        return self.coords.shape[0]

    def __len__(self):
        return self.dim

    def __getitem__(self, c):
        return self.coords[c]

    def __iter__(self):
        return iter(self.coords)

    def _check(self, other: "LatticeVector"):
        same_backend(self.backend, other.backend)
        if self.dim != other.dim:
            raise DimensionMismatchError(f"dimension {self.dim} != {other.dim}")

    def _new(self, arr) -> "LatticeVector":
        return LatticeVector(arr, self.backend)

    def __add__(self, other: "LatticeVector") -> "LatticeVector":
        self._check(other)
        return self._new(self.coords + other.coords)

    def __sub__(self, other: "LatticeVector") -> "LatticeVector":
        self._check(other)
        return self._new(self.coords - other.coords)

    def __neg__(self) -> "LatticeVector":
        return self._new(-self.coords)

    def scale(self, alpha) -> "LatticeVector":
        return self._new(self.coords * to_scalar(alpha, self.backend))

    def __mul__(self, alpha) -> "LatticeVector":
        if isinstance(alpha, LatticeVector):
            raise TypeError("use ealg_mul for the f-algebra product")
        return self.scale(alpha)

    __rmul__ = __mul__

    def __eq__(self, other) -> bool:
        if not isinstance(other, LatticeVector):
            return NotImplemented
        return self.backend == other.backend and self.dim == other.dim and bool(np.all(self.coords == other.coords))

    def __hash__(self):
        return hash((self.backend, tuple(self.coords)))

    def __le__(self, other: "LatticeVector") -> bool:
        self._check(other)
        return bool(np.all(self.coords <= other.coords))

    def __ge__(self, other: "LatticeVector") -> bool:
        return other <= self

    def sup(self, other: "LatticeVector") -> "LatticeVector":
        self._check(other)
        return self._new(np.where(self.coords >= other.coords, self.coords, other.coords))

    def inf(self, other: "LatticeVector") -> "LatticeVector":
        self._check(other)
        return self._new(np.where(self.coords <= other.coords, self.coords, other.coords))

    def abs(self) -> "LatticeVector":
        return self._new(np.abs(self.coords))

    def pos_part(self) -> "LatticeVector":
        return self.sup(LatticeVector.zeros(self.dim, self.backend))

    def neg_part(self) -> "LatticeVector":
        return (-self).pos_part()

    def is_nonnegative(self) -> bool:
        return bool(np.all(self.coords >= 0))

    def is_strictly_positive(self) -> bool:
        return bool(np.all(self.coords > 0))

    def max_norm(self):
        """``max_c |f[c]|`` in the vector's backend."""
        return max(abs(v) for v in self.coords)

    def e_bound(self, e: "LatticeVector"):
        """Smallest k with ``|f| <= k e``."""
        self._check(e)
        return max(abs(v) / w for v, w in zip(self.coords, e.coords))

    def to_json(self) -> list[str]:
        return [format_scalar(v) for v in self.coords]

    @classmethod
    def from_json(cls, data: Sequence, backend: str) -> "LatticeVector":
        return cls.of(data, backend)

    def __repr__(self):
        return f"LatticeVector([{', '.join(format_scalar(v) for v in self.coords)}], backend={self.backend!r})"


def lattice_sup(f: LatticeVector, g: LatticeVector) -> LatticeVector:
    return f.sup(g)


def lattice_inf(f: LatticeVector, g: LatticeVector) -> LatticeVector:
    return f.inf(g)


def lattice_abs(f: LatticeVector) -> LatticeVector:
    return f.abs()


def pos_part(f: LatticeVector) -> LatticeVector:
    return f.pos_part()


@dataclass(frozen=True, eq=False)
class BandProjection:
    mask: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.mask)
        if arr.ndim != 1 or arr.shape[0] < 1:
            raise DimensionMismatchError(f"expected a nonempty 1-D mask, got shape {arr.shape}")
        object.__setattr__(self, "mask", _frozen(arr.astype(bool)))

    @classmethod
    def of(cls, bits: Iterable) -> "BandProjection":
        return cls(np.array([bool(int(b)) if isinstance(b, str) else bool(b) for b in bits]))

    @classmethod
    def identity(cls, dim: int) -> "BandProjection":
        return cls(np.ones(dim, dtype=bool))

    @classmethod
    def zero(cls, dim: int) -> "BandProjection":
        return cls(np.zeros(dim, dtype=bool))

    @classmethod
    def coordinate(cls, dim: int, c: int) -> "BandProjection":
        mask = np.zeros(dim, dtype=bool)
        mask[c] = True
        return cls(mask)

    @property
    def dim(self) -> int:
        return self.mask.shape[0]

    def _check(self, other):
        if self.dim != other.dim:
            raise DimensionMismatchError(f"dimension {self.dim} != {other.dim}")

    def apply(self, f: LatticeVector) -> LatticeVector:
        self._check(f)
        zero = to_scalar(0, f.backend)
        return LatticeVector(np.where(self.mask, f.coords, zero), f.backend)

    __call__ = apply

    def complement(self) -> "BandProjection":
        """The band projection ``I - P``."""
        return BandProjection(~self.mask)

    def meet(self, other: "BandProjection") -> "BandProjection":
        """``P ∧ Q``, which equals the composition ``PQ``."""
        self._check(other)
        return BandProjection(self.mask & other.mask)

    def join(self, other: "BandProjection") -> "BandProjection":
        self._check(other)
        return BandProjection(self.mask | other.mask)

    compose = meet

    def __le__(self, other: "BandProjection") -> bool:
        self._check(other)
        return bool(np.all(~self.mask | other.mask))

    def __eq__(self, other) -> bool:
        if not isinstance(other, BandProjection):
            return NotImplemented
        return self.dim == other.dim and bool(np.all(self.mask == other.mask))

    def __hash__(self):
        return hash(self.mask.tobytes())

    def is_zero(self) -> bool:
        return not self.mask.any()

    def is_identity(self) -> bool:
        return bool(self.mask.all())

    def disjoint(self, other: "BandProjection") -> bool:
        return self.meet(other).is_zero()

    def to_json(self) -> list[int]:
        return [int(b) for b in self.mask]

    @classmethod
    def from_json(cls, data: Sequence) -> "BandProjection":
        return cls.of(data)

    def __repr__(self):
        return f"BandProjection({''.join('1' if b else '0' for b in self.mask)})"


def _check_unit(e: LatticeVector):
    if not e.is_strictly_positive():
        raise PreconditionError("the weak order unit must have strictly positive coordinates")


def band_of_pospart(f: LatticeVector, threshold, e: LatticeVector) -> BandProjection:
    """Band projection onto the band generated by ``(f - threshold*e)^+``.

    Coordinate ``c`` is in the band iff ``f[c] > threshold * e[c]`` (strict).
    """
    f._check(e)
    _check_unit(e)
    t = to_scalar(threshold, f.backend)
    if not t > 0:
        raise PreconditionError(f"threshold must be positive, got {threshold!r}")
    return BandProjection(f.coords > t * e.coords)


def ealg_mul(f: LatticeVector, g: LatticeVector, e: LatticeVector) -> LatticeVector:
    """f-algebra product on E_e with unit ``e``: ``(f*g)[c] = f[c] g[c] / e[c]``."""
    f._check(g)
    f._check(e)
    _check_unit(e)
    out = f.coords * g.coords / e.coords
    if f.backend == FLOAT and not np.all(np.isfinite(out)):
        raise PreconditionError("operands are not e-bounded (non-finite product)")
    return LatticeVector(out, f.backend)


@dataclass(frozen=True)
class EStepFunction:
    """``sum_k alpha_k P_k e`` with pairwise-disjoint band projections."""

    levels: tuple[tuple[object, BandProjection], ...]

    def __post_init__(self):
        levels = tuple((a, p) for a, p in self.levels)
        for i, (_, p) in enumerate(levels):
            for _, q in levels[i + 1:]:
                if not p.disjoint(q):
                    raise PreconditionError("e-step function levels must be pairwise disjoint")
        object.__setattr__(self, "levels", levels)

    def evaluate(self, e: LatticeVector) -> LatticeVector:
        out = np.array([to_scalar(0, e.backend)] * e.dim, dtype=object if e.backend == EXACT else np.float64)
        for alpha, p in self.levels:
            if p.dim != e.dim:
                raise DimensionMismatchError(f"dimension {p.dim} != {e.dim}")
            out = np.where(p.mask, to_scalar(alpha, e.backend) * e.coords, out)
        return LatticeVector(out, e.backend)

    def __len__(self):
        return len(self.levels)


def freudenthal_approx(f: LatticeVector, e: LatticeVector, eps) -> EStepFunction:
    """e-step function ``s`` with ``|f - s| <= eps*e``.

    The ratios ``f/e`` are bucketed by the floor-grid of spacing ``eps``; each
    bucket takes the smallest ratio it contains as its coefficient, so vectors
    already constant on buckets are reproduced exactly.
    """
    f._check(e)
    _check_unit(e)
    eps_s = to_scalar(eps, f.backend)
    if not eps_s > 0:
        raise PreconditionError(f"eps must be positive, got {eps!r}")
    ratios = [v / w for v, w in zip(f.coords, e.coords)]
    if f.backend == FLOAT and not all(math.isfinite(r) for r in ratios):
        raise PreconditionError("f is not e-bounded")
    cells: dict[int, list[int]] = {}
    for c, r in enumerate(ratios):
        cells.setdefault(math.floor(r / eps_s), []).append(c)
    levels = []
    for cell in sorted(cells):
        coords = cells[cell]
        mask = np.zeros(f.dim, dtype=bool)
        mask[coords] = True
        levels.append((min(ratios[c] for c in coords), BandProjection(mask)))
    return EStepFunction(tuple(levels))
