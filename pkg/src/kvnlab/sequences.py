"""Finite-horizon sequences, Cesàro means and convergence judgments.

A finite horizon cannot certify a limit, so order convergence to zero is
judged by a tail-sup bound: the sequence "converges" when some index N0
exists after which every stored term has max-coordinate norm within the
tolerance. The least such N0 is reported as the witness.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import DimensionMismatchError, NotOrderBoundedError, PreconditionError
from .riesz import BandProjection, LatticeVector
from .scalars import EXACT, FLOAT, check_backend, same_backend, to_array, to_scalar

CONVERGES = "converges_to_zero"
INCONCLUSIVE = "inconclusive"
VIOLATED = "violated"

# the witnessed tail must cover at least this fraction of the horizon
MIN_TAIL_FRACTION = 0.1

Rule = Callable[[np.ndarray], np.ndarray]


def _readonly(arr: np.ndarray) -> np.ndarray:
    arr = np.asarray(arr)
    if arr.flags.writeable:
        arr = arr.copy()
        arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class VectorSequence:
    """Terms ``f_0 .. f_{N-1}`` stored as an ``(N, d)`` array or made by a rule.

    A rule maps an integer index array ``n`` to the ``(len(n), d)`` block of
    terms; it must be stateless so the sequence can be re-extended.
    """

    horizon: int
    dim: int
    backend: str = FLOAT
    data: Optional[np.ndarray] = None
    rule: Optional[Rule] = None
    order_bound: Optional[LatticeVector] = None
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        check_backend(self.backend)
        if self.horizon < 0 or self.dim < 1:
            raise ValueError(f"invalid horizon {self.horizon} / dim {self.dim}")
        if (self.data is None) == (self.rule is None):
            raise ValueError("exactly one of data and rule must be given")
        if self.data is not None:
            arr = np.asarray(self.data)
            if arr.shape != (self.horizon, self.dim):
                raise DimensionMismatchError(f"data shape {arr.shape} != {(self.horizon, self.dim)}")
            object.__setattr__(self, "data", _readonly(arr))
        if self.order_bound is not None:
            same_backend(self.backend, self.order_bound.backend)
            if self.order_bound.dim != self.dim:
                raise DimensionMismatchError("order bound dimension mismatch")

    @classmethod
    def from_array(cls, data, backend: str = FLOAT, order_bound: LatticeVector | None = None) -> "VectorSequence":
        arr = np.asarray(data, dtype=object if backend == EXACT else None)
        if arr.ndim == 1:
            arr = arr.reshape(-1, 1)
        arr = to_array(arr, backend) if arr.size else arr.reshape(0, arr.shape[1] if arr.ndim == 2 else 1)
        return cls(arr.shape[0], arr.shape[1], backend, data=arr, order_bound=order_bound)

    @classmethod
    def from_vectors(cls, vectors: list[LatticeVector]) -> "VectorSequence":
        if not vectors:
            raise PreconditionError("empty vector list")
        backend = same_backend(*(v.backend for v in vectors))
        return cls.from_array(np.stack([v.coords for v in vectors]), backend)

    @classmethod
    def from_rule(cls, rule: Rule, horizon: int, dim: int, backend: str = FLOAT,
                  order_bound: LatticeVector | None = None) -> "VectorSequence":
        return cls(horizon, dim, backend, rule=rule, order_bound=order_bound)

    @property
    def array(self) -> np.ndarray:
        """The materialized ``(N, d)`` array of terms."""
        if self.data is not None:
            return self.data
        if "array" not in self._cache:
            idx = np.arange(self.horizon, dtype=np.int64)
            block = np.asarray(self.rule(idx))
            if block.ndim == 1:
                block = block.reshape(-1, 1)
            if block.shape != (self.horizon, self.dim):
                raise DimensionMismatchError(f"rule produced shape {block.shape}")
            if self.backend == EXACT and (block.dtype != object):
                block = to_array(block, EXACT)
            elif self.backend == FLOAT:
                block = block.astype(np.float64)
            self._cache["array"] = _readonly(block)
        return self._cache["array"]

    def __len__(self):
        return self.horizon

    def term(self, n: int) -> LatticeVector:
        if not 0 <= n < self.horizon:
            raise IndexError(n)
        return LatticeVector(self.array[n], self.backend)

    def with_horizon(self, horizon: int) -> "VectorSequence":
        """Truncate, or extend a rule-generated sequence."""
        if horizon == self.horizon:
            return self
        if horizon < self.horizon:
            return VectorSequence(horizon, self.dim, self.backend, data=self.array[:horizon], order_bound=self.order_bound)
        if self.rule is None:
            raise PreconditionError(f"cannot extend a materialized sequence from {self.horizon} to {horizon}")
        return VectorSequence(horizon, self.dim, self.backend, rule=self.rule, order_bound=self.order_bound)

    def map_array(self, fn: Callable[[np.ndarray], np.ndarray]) -> "VectorSequence":
        return VectorSequence.from_array(fn(self.array), self.backend)

    def norms(self) -> np.ndarray:
        """Max-coordinate norm of each term, as a 1-D backend array."""
        return max_norms(self.array)

    def check_order_bound(self) -> None:
        """Raise unless ``0 <= f_n <= g`` for every stored term."""
        arr = self.array
        if self.order_bound is None:
            raise NotOrderBoundedError("sequence carries no order bound")
        if not np.all(arr >= 0):
            n = int(np.argmax(np.any(arr < 0, axis=1)))
            raise NotOrderBoundedError(f"term {n} is not nonnegative")
        over = np.any(arr > self.order_bound.coords[None, :], axis=1)
        if over.any():
            raise NotOrderBoundedError(f"term {int(np.argmax(over))} exceeds the order bound")


@dataclass(frozen=True, eq=False)
class ProjectionSequence:
    horizon: int
    dim: int
    masks: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.masks, dtype=bool)
        if arr.shape != (self.horizon, self.dim):
            raise DimensionMismatchError(f"mask shape {arr.shape} != {(self.horizon, self.dim)}")
        object.__setattr__(self, "masks", _readonly(arr))

    @classmethod
    def from_masks(cls, masks) -> "ProjectionSequence":
        arr = np.asarray(masks, dtype=bool)
        if arr.ndim == 1:
            arr = arr.reshape(-1, 1)
        return cls(arr.shape[0], arr.shape[1], arr)

    @classmethod
    def from_projections(cls, projections: list[BandProjection]) -> "ProjectionSequence":
        return cls.from_masks(np.stack([p.mask for p in projections]))

    def __len__(self):
        return self.horizon

    def __getitem__(self, n: int) -> BandProjection:
        return BandProjection(self.masks[n])

    def times(self, e: LatticeVector) -> VectorSequence:
        """The vector sequence ``P_n e``."""
        if e.dim != self.dim:
            raise DimensionMismatchError(f"projection dimension {self.dim} != unit dimension {e.dim}")
        zero = to_scalar(0, e.backend)
        return VectorSequence.from_array(np.where(self.masks, e.coords[None, :], zero), e.backend)

    def counting_density(self) -> float:
        """Fraction of indices ``j`` with ``P_j = I``."""
        if self.horizon == 0:
            return 0.0
        return float(np.mean(self.masks.all(axis=1)))


@dataclass(frozen=True)
class ConvergenceJudgment:
    verdict: str
    witness_index: Optional[int]
    tail_sup: object
    tolerance: float
    horizon: int

    @property
    def converges(self) -> bool:
        return self.verdict == CONVERGES

    def to_json(self) -> dict:
        from .scalars import format_scalar

        return {
            "verdict": self.verdict,
            "witness_index": self.witness_index,
            "tail_sup": None if self.tail_sup is None else format_scalar(self.tail_sup),
            "tolerance": self.tolerance,
            "horizon": self.horizon,
        }


def max_norms(arr: np.ndarray) -> np.ndarray:
    arr = np.asarray(arr)
    if arr.ndim == 1:
        return np.abs(arr)
    if arr.shape[1] == 1:
        return np.abs(arr[:, 0])
    return np.max(np.abs(arr), axis=1)


def suffix_max(values: np.ndarray) -> np.ndarray:
    """``out[n] = max(values[n:])`` along axis 0."""
    return np.maximum.accumulate(values[::-1], axis=0)[::-1]


def min_tail(horizon: int) -> int:
    return max(1, math.ceil(horizon * MIN_TAIL_FRACTION))


def judge_norms(norms: np.ndarray, tolerance: float) -> ConvergenceJudgment:
    """Tail-sup judgment on a precomputed 1-D array of term norms.

    The witness ``N0`` is the least index whose tail ``[N0, N)`` stays within
    the tolerance; it must leave at least :func:`min_tail` terms, so a lone
    small final term never certifies convergence. ``violated`` means every
    term of the trailing half exceeds the tolerance; otherwise a missing
    witness is ``inconclusive``.
    """
    if not tolerance > 0:
        raise PreconditionError(f"tolerance must be positive, got {tolerance!r}")
    horizon = len(norms)
    if horizon == 0:
        return ConvergenceJudgment(INCONCLUSIVE, None, None, tolerance, 0)
    tails = suffix_max(norms)
    ok = tails <= tolerance
    ok[horizon - min_tail(horizon) + 1:] = False
    if ok.any():
        witness = int(np.argmax(ok))
        return ConvergenceJudgment(CONVERGES, witness, tails[witness], tolerance, horizon)
    half = horizon // 2
    trailing = norms[half:]
    verdict = VIOLATED if bool(np.all(trailing > tolerance)) else INCONCLUSIVE
    return ConvergenceJudgment(verdict, None, tails[half], tolerance, horizon)


def judge_many(norms: np.ndarray, tolerance: float) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized convergence test over rows of a ``(K, N)`` norm array.

    Returns ``(converges, witness)``; witness is -1 where there is none.
    """
    norms = np.asarray(norms)
    if norms.shape[1] == 0:
        return np.zeros(norms.shape[0], dtype=bool), np.full(norms.shape[0], -1)
    tails = np.maximum.accumulate(norms[:, ::-1], axis=1)[:, ::-1]
    ok = tails <= tolerance
    horizon = norms.shape[1]
    ok[:, horizon - min_tail(horizon) + 1:] = False
    conv = ok.any(axis=1)
    witness = np.where(conv, np.argmax(ok, axis=1), -1)
    return conv, witness


def cesaro_array(arr: np.ndarray) -> np.ndarray:
    """Row ``n-1`` is ``(1/n) * sum_{k<n} arr[k]``; one cumulative pass."""
    arr = np.asarray(arr)
    if arr.shape[0] == 0:
        raise PreconditionError("Cesàro means of an empty sequence")
    sums = np.cumsum(arr, axis=0)
    if arr.dtype == object:
        counts = np.array(list(range(1, arr.shape[0] + 1)), dtype=object)
    else:
        counts = np.arange(1, arr.shape[0] + 1, dtype=np.float64)
    shape = (-1,) + (1,) * (arr.ndim - 1)
    return sums / counts.reshape(shape)


def cesaro_means(seq: VectorSequence) -> VectorSequence:
    if seq.horizon < 1:
        raise PreconditionError("Cesàro means of an empty sequence")
    return VectorSequence.from_array(cesaro_array(seq.array), seq.backend)


def judge_order_convergence_to_zero(seq: VectorSequence, tolerance: float) -> ConvergenceJudgment:
    return judge_norms(seq.norms(), tolerance)


def judge_density_zero(ps: ProjectionSequence, e: LatticeVector, tolerance: float) -> ConvergenceJudgment:
    """Judge the Cesàro means of ``P_k e`` against the tolerance."""
    seq = ps.times(e)
    if seq.horizon == 0:
        return judge_norms(np.zeros(0), tolerance)
    return judge_order_convergence_to_zero(cesaro_means(seq), tolerance)


def series_convergence_check(seq: VectorSequence) -> tuple[VectorSequence, VectorSequence]:
    """Partial sums of ``|f_k|`` and of ``f_k``."""
    if seq.horizon < 1:
        raise PreconditionError("empty sequence")
    arr = seq.array
    return (VectorSequence.from_array(np.cumsum(np.abs(arr), axis=0), seq.backend),
            VectorSequence.from_array(np.cumsum(arr, axis=0), seq.backend))


def cauchy_oscillation(partial_sums: VectorSequence, start: int) -> object:
    """``max_{start <= m, n < N} max_c |S_n - S_m|`` over the stored tail."""
    tail = partial_sums.array[start:]
    if tail.shape[0] == 0:
        return to_scalar(0, partial_sums.backend)
    return max(np.max(tail[:, c]) - np.min(tail[:, c]) for c in range(tail.shape[1]))


def counterexample_gp(p: float, horizon: int, backend: str = FLOAT) -> VectorSequence:
    """Scalar sequence with value ``n`` at index ``floor(n**p)``, zero elsewhere.

    On collisions the larger ``n`` wins.
    """
    if not p > 1:
        raise PreconditionError(f"p must exceed 1, got {p!r}")
    values = np.zeros(horizon, dtype=np.int64)
    n = 1
    while True:
        j = _floor_pow(n, p)
        if j >= horizon:
            break
        values[j] = n
        n += 1
    if backend == EXACT:
        data = np.array([[int(v)] for v in values], dtype=object)
        data = to_array(data, EXACT)
    else:
        data = values.astype(np.float64).reshape(-1, 1)
    return VectorSequence(horizon, 1, backend, data=data)


def _floor_pow(n: int, p: float) -> int:
    if float(p).is_integer():
        return n ** int(p)
    return math.floor(n ** float(p))


def spike_indices(exponent: float, horizon: int, offset: int = 0) -> np.ndarray:
    """Sorted distinct indices ``floor(m**exponent) + offset < horizon``, m >= 1."""
    out = []
    m = 1
    while True:
        j = _floor_pow(m, exponent) + offset
        if j >= horizon:
            break
        out.append(j)
        m += 1
    return np.unique(np.array(out, dtype=np.int64))
