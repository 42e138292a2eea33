"""Exact correlation sequences for circle rotations and the doubling map.

Sets are finite unions of half-open intervals in [0, 1). Correlations
``|λ(τ^{-k}A ∩ B) - λ(A)λ(B)|`` are computed from interval overlaps, with
rational endpoints in the exact backend.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Optional

import numpy as np

from .errors import CapExceededError, PreconditionError
from .extract import DEFAULT_LEVEL_CAP, KvnExtraction, KvnParams, extract_density_zero
from .riesz import LatticeVector
from .scalars import EXACT, FLOAT, check_backend, format_scalar, to_scalar
from .sequences import ConvergenceJudgment, VectorSequence, cesaro_means, judge_order_convergence_to_zero

ROTATION = "rotation"
DOUBLING = "doubling"
DEFAULT_PREIMAGE_CAP = 24


@dataclass(frozen=True)
class IntervalSet:
    """Disjoint, sorted, merged half-open intervals ``[a, b)`` inside [0, 1)."""

    intervals: tuple[tuple[object, object], ...]

    def __post_init__(self):
        cleaned = []
        for a, b in self.intervals:
            if not (0 <= a < b <= 1):
                raise PreconditionError(f"interval [{a}, {b}) is not inside [0, 1)")
            cleaned.append((a, b))
        cleaned.sort()
        merged: list[tuple] = []
        for a, b in cleaned:
            if merged and a <= merged[-1][1]:
                merged[-1] = (merged[-1][0], max(merged[-1][1], b))
            else:
                merged.append((a, b))
        object.__setattr__(self, "intervals", tuple(merged))

    @classmethod
    def of(cls, pairs: Iterable, backend: str = EXACT) -> "IntervalSet":
        return cls(tuple((to_scalar(a, backend), to_scalar(b, backend)) for a, b in pairs))

    @classmethod
    def empty(cls) -> "IntervalSet":
        return cls(())

    def measure(self):
        return sum((b - a for a, b in self.intervals), 0)

    def __len__(self):
        return len(self.intervals)

    def __iter__(self):
        return iter(self.intervals)

    def overlap(self, other: "IntervalSet"):
        """Lebesgue measure of the intersection."""
        total = 0
        i = j = 0
        xs, ys = self.intervals, other.intervals
        while i < len(xs) and j < len(ys):
            lo = max(xs[i][0], ys[j][0])
            hi = min(xs[i][1], ys[j][1])
            if hi > lo:
                total += hi - lo
            if xs[i][1] <= ys[j][1]:
                i += 1
            else:
                j += 1
        return total

    def shift(self, t) -> "IntervalSet":
        """Translate by ``t`` modulo 1, splitting intervals that wrap."""
        out = []
        for a, b in self.intervals:
            lo = (a + t) % 1
            hi = lo + (b - a)
            if hi <= 1:
                out.append((lo, hi))
            else:
                out.append((lo, type(lo)(1)))
                out.append((type(lo)(0), hi - 1))
        return IntervalSet(tuple((a, b) for a, b in out if b > a))

    def to_json(self) -> list[list[str]]:
        return [[format_scalar(a), format_scalar(b)] for a, b in self.intervals]


@dataclass(frozen=True)
class IntervalMapSystem:
    kind: str
    alpha: Optional[object] = None
    backend: str = EXACT

    def __post_init__(self):
        check_backend(self.backend)
        if self.kind == ROTATION:
            if self.alpha is None:
                raise PreconditionError("rotation needs alpha")
            alpha = to_scalar(self.alpha, self.backend)
            if not 0 < alpha < 1:
                raise PreconditionError(f"rotation alpha must lie in (0, 1), got {self.alpha!r}")
            object.__setattr__(self, "alpha", alpha)
        elif self.kind == DOUBLING:
            if self.alpha is not None:
                raise PreconditionError("doubling map takes no alpha")
        else:
            raise PreconditionError(f"unknown map kind {self.kind!r}")

    @classmethod
    def rotation(cls, alpha, backend: str = FLOAT) -> "IntervalMapSystem":
        return cls(ROTATION, alpha, backend)

    @classmethod
    def doubling(cls, backend: str = EXACT) -> "IntervalMapSystem":
        return cls(DOUBLING, None, backend)

    def to_json(self) -> dict:
        out = {"kind": self.kind, "backend": self.backend}
        if self.kind == ROTATION:
            out["alpha"] = format_scalar(self.alpha)
        return out


def _rotation_shift(alpha, k: int):
    # τ^{-k} A = A - kα (mod 1)
    if isinstance(alpha, Fraction):
        return (-k * alpha) % 1
    return (-math.fmod(k * alpha, 1.0)) % 1.0


def preimage(system: IntervalMapSystem, A: IntervalSet, k: int, cap: int = DEFAULT_PREIMAGE_CAP) -> IntervalSet:
    """``τ^{-k} A``; the doubling map enumerates all ``2^k`` branches."""
    if k < 0:
        raise PreconditionError("k must be nonnegative")
    if system.kind == ROTATION:
        if k == 0:
            return A
        return A.shift(_rotation_shift(system.alpha, k))
    if k > cap:
        raise CapExceededError(f"doubling preimage at k={k} exceeds the cap {cap}")
    scale = 2 ** k
    pieces = []
    for a, b in A.intervals:
        a, b = Fraction(a), Fraction(b)
        for i in range(scale):
            pieces.append(((a + i) / scale, (b + i) / scale))
    return IntervalSet(tuple(pieces))


def _doubling_cumulative(a: Fraction, b: Fraction, scale: int, t: Fraction) -> Fraction:
    # λ{x in [0, t) : frac(scale*x) in [a, b)}
    y = scale * t
    whole = y.numerator // y.denominator
    part = y - whole
    return (whole * (b - a) + min(max(part - a, 0), b - a)) / scale


def doubling_overlap(A: IntervalSet, B: IntervalSet, k: int) -> Fraction:
    """``λ(τ^{-k}A ∩ B)`` for the doubling map in closed form."""
    scale = 2 ** k
    total = Fraction(0)
    for a, b in A.intervals:
        a, b = Fraction(a), Fraction(b)
        for c, d in B.intervals:
            total += _doubling_cumulative(a, b, scale, Fraction(d)) - _doubling_cumulative(a, b, scale, Fraction(c))
    return total


def correlation_sequence(system: IntervalMapSystem, A: IntervalSet, B: IntervalSet, horizon: int,
                         method: str = "closed_form", cap: int = DEFAULT_PREIMAGE_CAP) -> VectorSequence:
    """Term ``k`` is ``|λ(τ^{-k}A ∩ B) - λ(A)λ(B)|`` (a d=1 sequence).

    For the doubling map ``method="closed_form"`` counts preimage branches
    arithmetically (no cap); ``method="enumerate"`` intersects the explicit
    ``2^k`` preimage intervals and is subject to ``cap``.
    """
    backend = system.backend
    if system.kind == DOUBLING:
        A_x = IntervalSet(tuple((Fraction(a), Fraction(b)) for a, b in A.intervals))
        B_x = IntervalSet(tuple((Fraction(a), Fraction(b)) for a, b in B.intervals))
        product = Fraction(A_x.measure()) * Fraction(B_x.measure())
        terms = []
        for k in range(horizon):
            if method == "enumerate":
                overlap = preimage(system, A_x, k, cap).overlap(B_x)
            elif method == "closed_form":
                overlap = doubling_overlap(A_x, B_x, k)
            else:
                raise ValueError(f"unknown method {method!r}")
            terms.append(abs(overlap - product))
    else:
        product = A.measure() * B.measure()
        terms = [abs(preimage(system, A, k).overlap(B) - product) for k in range(horizon)]
    data = np.array([[to_scalar(t, backend)] for t in terms], dtype=object if backend == EXACT else np.float64)
    if horizon == 0:
        data = data.reshape(0, 1)
    return VectorSequence(horizon, 1, backend, data=data)


@dataclass(frozen=True, eq=False)
class ClassicalReport:
    system: IntervalMapSystem
    A: IntervalSet
    B: IntervalSet
    sequence: VectorSequence
    cesaro: ConvergenceJudgment
    cesaro_final: object
    density: ConvergenceJudgment
    residual: ConvergenceJudgment
    extraction: KvnExtraction
    notes: tuple[str, ...]

    @property
    def weak_mixing_property(self) -> bool:
        return self.cesaro.converges

    @property
    def characterization_holds(self) -> bool:
        return self.density.converges and self.residual.converges

    def to_json(self) -> dict:
        exceptions = self.extraction.exception_set()
        return {
            "system": self.system.to_json(),
            "A": self.A.to_json(),
            "B": self.B.to_json(),
            "horizon": self.sequence.horizon,
            "cesaro": self.cesaro.to_json(),
            "cesaro_final": format_scalar(self.cesaro_final),
            "weak_mixing_property": "holds" if self.weak_mixing_property else "fails",
            "exception_density": self.density.to_json(),
            "residual": self.residual.to_json(),
            "characterization": "holds" if self.characterization_holds else "fails",
            "exception_count": int(len(exceptions)),
            "exception_indices_head": [int(j) for j in exceptions[:50]],
            "extraction_diagnostics": self.extraction.diagnostics,
            "notes": list(self.notes),
        }


def classify_classical(system: IntervalMapSystem, A: IntervalSet, B: IntervalSet, horizon: int, tol: float,
                       level_cap: int = DEFAULT_LEVEL_CAP) -> ClassicalReport:
    """Run the Cesàro/KvN pipeline on one correlation sequence.

    The weak-mixing Cesàro property holds for ``(A, B)`` when the Cesàro means
    of the correlations are judged to vanish. The set characterization holds
    when the exception sets ``A_j = {j : Q_j = I}`` from the extraction are
    judged density zero and the correlations off them are judged to vanish.
    """
    seq = correlation_sequence(system, A, B, horizon)
    e = LatticeVector.ones(1, system.backend)
    means = cesaro_means(seq)
    ext = extract_density_zero(seq, e, KvnParams(horizon, level_cap, tol), keep_tables=False, check_hypothesis=False)
    notes = []
    if system.kind == ROTATION and system.backend == FLOAT:
        notes.append("alpha is a double: irrational rotation is approximated and horizon-bounded")
    return ClassicalReport(
        system=system, A=A, B=B, sequence=seq,
        cesaro=judge_order_convergence_to_zero(means, tol),
        cesaro_final=means.array[-1, 0],
        density=ext.density_judgment(tol),
        residual=ext.residual_judgment(tol),
        extraction=ext,
        notes=tuple(notes),
    )
