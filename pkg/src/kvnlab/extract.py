"""Koopman-von Neumann extraction of density-zero band projections.

Given a nonnegative order-bounded sequence ``f_n`` in R^d whose Cesàro means
vanish, :func:`extract_density_zero` builds projections ``Q_j`` of density
zero with ``(I - Q_j) f_j -> 0``:

* ``P[m, i]``  band of ``(f_i - e/m)^+``
* ``u[m, j]``  ``max_{max(j,1) <= k <= N} (1/k) sum_{i<k} P[m, i] e``
* ``R[m, j]``  band of ``(u[m, j] - e/m)^+``;  ``J_j = sup_{m <= M} R[m, j]``
* ``Q_j``      ``sum_{m < M} P[m, j] R[m+1, j] (I - R[m, j])``

Every projection is a coordinate mask, so all of the above is computed with
integer counts. ``P[m, i]`` is stored as the first level ``m`` at which the
coordinate fires; ``u`` is stored as a double, which represents each ratio
``C/k`` (``k <= N``) injectively and order-exactly for ``N`` below ~6e7, so
the rational value is recovered with ``limit_denominator(N)``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

import numpy as np

from .errors import (
    NegativeInputError,
    NotDensityZeroError,
    NotOrderBoundedError,
    PreconditionError,
    ResidualNotVanishingError,
)
from .riesz import BandProjection, LatticeVector
from .scalars import EXACT, same_backend, to_scalar
from .sequences import (
    ConvergenceJudgment,
    ProjectionSequence,
    VectorSequence,
    cesaro_array,
    cesaro_means,
    judge_density_zero,
    judge_norms,
    judge_order_convergence_to_zero,
    max_norms,
    suffix_max,
)

DEFAULT_LEVEL_CAP = 64


class HypothesisWarning(UserWarning):
    """The Cesàro means of the extraction input were not judged to vanish."""


@dataclass(frozen=True)
class KvnParams:
    horizon: int
    level_cap: int = DEFAULT_LEVEL_CAP
    tolerance: float = 0.05

    def __post_init__(self):
        if self.horizon < 2:
            raise PreconditionError(f"horizon must be at least 2, got {self.horizon}")
        if self.level_cap < 2:
            raise PreconditionError(f"level_cap must be at least 2, got {self.level_cap}")
        if not self.tolerance > 0:
            raise PreconditionError(f"tolerance must be positive, got {self.tolerance}")


@dataclass(frozen=True, eq=False)
class KvnExtraction:
    Q: ProjectionSequence
    J: ProjectionSequence
    params: KvnParams
    unit: LatticeVector
    entry_level: np.ndarray
    first_fire: np.ndarray
    residuals: VectorSequence
    density: VectorSequence
    diagnostics: dict
    u_table: Optional[np.ndarray] = field(default=None, repr=False)
    R_table: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def horizon(self) -> int:
        return self.Q.horizon

    def P(self, m: int, i: int) -> BandProjection:
        """``P[m, i]``: band projection onto the band of ``(f_i - e/m)^+``."""
        return BandProjection(self.entry_level[i] <= m)

    def R(self, m: int, j: int) -> BandProjection:
        self._need_tables()
        return BandProjection(self.R_table[m - 1, j])

    def u(self, m: int, j: int) -> LatticeVector:
        """``u[m, j]`` as a lattice vector (exact rationals in the exact backend)."""
        self._need_tables()
        ratios = self.u_table[m - 1, j]
        if self.unit.backend == EXACT:
            n = self.horizon
            vals = [Fraction(float(r)).limit_denominator(n) * w for r, w in zip(ratios, self.unit.coords)]
            return LatticeVector.of(vals, EXACT)
        return LatticeVector(ratios * self.unit.coords, self.unit.backend)

    def _need_tables(self):
        if self.R_table is None:
            raise RuntimeError("extraction was run with keep_tables=False")

    def exception_set(self) -> np.ndarray:
        """Indices ``j`` with ``Q_j = I``."""
        return np.flatnonzero(self.Q.masks.all(axis=1))

    def density_judgment(self, tolerance: float) -> ConvergenceJudgment:
        return judge_order_convergence_to_zero(self.density, tolerance)

    def residual_judgment(self, tolerance: float) -> ConvergenceJudgment:
        return judge_order_convergence_to_zero(self.residuals, tolerance)


def entry_levels(arr: np.ndarray, e: np.ndarray, level_cap: int) -> np.ndarray:
    """Smallest ``m <= level_cap`` with ``f[c] > e[c]/m``; ``level_cap + 1`` if none."""
    n, d = arr.shape
    if arr.dtype == object:
        def level(v, w):
            if v <= 0:
                return level_cap + 1
            # f > e/m  <=>  m > e/f  <=>  m >= floor(e/f) + 1
            q = (w.numerator * v.denominator) // (w.denominator * v.numerator)
            return min(q + 1, level_cap + 1)

        out = np.frompyfunc(level, 2, 1)(arr, np.broadcast_to(e, arr.shape))
        return np.asarray(out, dtype=np.int64).reshape(n, d)
    out = np.full((n, d), level_cap + 1, dtype=np.int64)
    for m in range(level_cap, 0, -1):
        out[arr > (1.0 / m) * e[None, :]] = m
    return out


def _sup_index(n: int) -> np.ndarray:
    # row j of u reads the suffix starting at k = max(j, 1)
    idx = np.arange(n)
    idx[0] = 1
    return idx


def extract_density_zero(
    seq: VectorSequence,
    e: LatticeVector,
    params: KvnParams,
    *,
    keep_tables: bool = True,
    check_hypothesis: bool = True,
) -> KvnExtraction:
    """Build the density-zero projection sequence ``Q_j`` for ``seq``."""
    seq = seq.with_horizon(params.horizon)
    backend = same_backend(seq.backend, e.backend)
    if e.dim != seq.dim:
        raise PreconditionError(f"unit dimension {e.dim} != sequence dimension {seq.dim}")
    if not e.is_strictly_positive():
        raise PreconditionError("the weak order unit must be strictly positive")
    arr = seq.array
    n, d = arr.shape
    if n < 2:
        raise PreconditionError("horizon must be at least 2")
    if not np.all(arr >= 0):
        bad = int(np.argmax(np.any(arr < 0, axis=1)))
        raise NegativeInputError(f"term {bad} has a negative coordinate")
    if check_hypothesis:
        judgment = judge_norms(max_norms(cesaro_array(arr)), params.tolerance)
        if not judgment.converges:
            warnings.warn(
                f"Cesàro means judged {judgment.verdict} at tolerance {params.tolerance}",
                HypothesisWarning,
                stacklevel=2,
            )

    cap = params.level_cap
    levels = entry_levels(arr, e.coords, cap)
    ks = np.arange(1, n + 1, dtype=np.int64)
    sup_from = _sup_index(n)
    counts = np.zeros((n + 1, d), dtype=np.int64)
    u_table = np.empty((cap, n, d), dtype=np.float64) if keep_tables else None
    R_table = np.empty((cap, n, d), dtype=bool) if keep_tables else None
    Q = np.zeros((n, d), dtype=bool)
    first_fire = np.full((n, d), cap + 1, dtype=np.int64)
    boundary = 0
    positive_u = 0
    prev_R = None
    for m in range(1, cap + 1):
        P_m = levels <= m
        np.cumsum(P_m, axis=0, out=counts[1:])
        C = counts[1:]
        # R[m, j] <=> max_{k >= max(j,1)} (m C_k - k) > 0, in integers
        excess = suffix_max(m * C - ks[:, None])
        R_m = excess[sup_from - 1] > 0
        if keep_tables or m == cap:
            ratio = C / ks[:, None]
            sup_ratio = suffix_max(ratio)
            u_m = sup_ratio[sup_from - 1]
            attained_at_horizon = (ratio[-1][None, :] == u_m) & (u_m > 0)
            boundary += int(attained_at_horizon.sum())
            positive_u += int((u_m > 0).sum())
            if keep_tables:
                u_table[m - 1] = u_m
                R_table[m - 1] = R_m
        first_fire[(first_fire == cap + 1) & R_m] = m
        if prev_R is not None:
            # level m-1 contributes P[m-1, j] R[m, j] (I - R[m-1, j])
            Q |= (levels <= m - 1) & R_m & ~prev_R
        prev_R = R_m
    J = prev_R

    zero = to_scalar(0, backend)
    residuals = np.where(Q, zero, arr)
    q_e = np.where(Q, e.coords[None, :], zero)
    density = cesaro_array(q_e)
    fired = first_fire <= cap
    diagnostics = {
        "level_cap": cap,
        "max_level_fired": int(first_fire[fired].max()) if fired.any() else None,
        "positive_outside_J": int(np.sum((arr > 0) & ~J)),
        "exception_count": int(Q.all(axis=1).sum()),
        "exception_density": float(Q.all(axis=1).mean()),
        "sup_at_horizon_fraction": (boundary / positive_u) if positive_u else 0.0,
    }
    return KvnExtraction(
        Q=ProjectionSequence(n, d, Q),
        J=ProjectionSequence(n, d, J),
        params=params,
        unit=e,
        entry_level=levels,
        first_fire=first_fire,
        residuals=VectorSequence.from_array(residuals, backend),
        density=VectorSequence.from_array(density, backend),
        diagnostics=diagnostics,
        u_table=u_table,
        R_table=R_table,
    )


@dataclass(frozen=True)
class AuditCheck:
    name: str
    passed: bool
    detail: str = ""


def _first_violation(bad: np.ndarray, names: tuple[str, ...]) -> str:
    if not bad.any():
        return ""
    idx = np.unravel_index(int(np.argmax(bad)), bad.shape)
    return ", ".join(f"{k}={int(v)}" for k, v in zip(names, idx))


# Relative gap beyond which a float comparison of correctly rounded values is
# trusted; closer pairs are re-decided in exact arithmetic.
_FLOAT_MARGIN = 1e-12


def _greater(a: np.ndarray, b: np.ndarray, fa: Optional[np.ndarray] = None) -> np.ndarray:
    """Elementwise ``a > b``; exact for object arrays, with a float pre-pass.

    ``fa`` may carry ``a`` already converted to float.
    """
    if a.dtype != object and b.dtype != object:
        return a > b
    # convert before broadcasting so a small threshold array is converted once
    fa = np.asarray(a).astype(np.float64) if fa is None else fa
    fb = np.asarray(b).astype(np.float64)
    a, b, fa, fb = np.broadcast_arrays(a, b, fa, fb)
    scale = np.maximum(np.abs(fa), np.abs(fb))
    out = fa > fb
    unsure = ~(np.abs(fa - fb) > _FLOAT_MARGIN * scale)
    for idx in zip(*np.nonzero(unsure)):
        out[idx] = a[idx] > b[idx]
    return out


def _key_bound_holds(arr: np.ndarray, e: np.ndarray, first: np.ndarray, backend: str) -> np.ndarray:
    """``e/m^2 <= max_{k >= max(j,1)} mean_k`` where ``m = first[j]`` (0 = unfired, vacuous).

    Exact inputs are screened with float means: summing n nonnegative terms
    in float loses at most about n ulps, so only pairs inside that band need
    exact Cesàro sums, computed for the affected coordinates only.
    """
    n, d = arr.shape
    fired = first > 0
    ok = np.ones_like(fired)
    if not fired.any():
        return ok
    sup_idx = _sup_index(n) - 1
    if arr.dtype != object:
        sup_means = suffix_max(cesaro_array(arr))[sup_idx]
        lhs = e[None, :] / np.maximum(first, 1) ** 2
        ok[fired] = (lhs <= sup_means)[fired]
        return ok
    sup_f = suffix_max(cesaro_array(arr.astype(np.float64)))[sup_idx]
    margin = 4.0 * n * np.finfo(np.float64).eps + _FLOAT_MARGIN
    exact_sup = {}
    for j, c in zip(*np.nonzero(fired)):
        lhs = e[c] * to_scalar(Fraction(1, int(first[j, c]) ** 2), backend)
        lf = float(lhs)
        if sup_f[j, c] >= lf * (1 + margin):
            continue
        if sup_f[j, c] < lf * (1 - margin):
            ok[j, c] = False
            continue
        if c not in exact_sup:
            exact_sup[c] = suffix_max(cesaro_array(arr[:, c]))[sup_idx]
        ok[j, c] = lhs <= exact_sup[c][j]
    return ok


def audit_extraction(ext: KvnExtraction, seq: VectorSequence) -> list[AuditCheck]:
    """Monotonicity, domination and key-bound checks on a kept-table extraction.

    ``P`` is recomputed from its definition rather than read back from the
    stored entry levels. Level indices in details are 1-based ``m``.
    """
    ext._need_tables()
    arr = seq.with_horizon(ext.horizon).array
    e = ext.unit.coords
    cap = ext.params.level_cap
    n = ext.horizon
    ms = range(1, cap + 1)
    arr_f = arr.astype(np.float64) if arr.dtype == object else None
    P = np.stack([_greater(arr, e[None, :] * to_scalar(Fraction(1, m), ext.unit.backend), arr_f) for m in ms])
    u = ext.u_table
    R = ext.R_table
    checks = []

    stored = np.stack([ext.entry_level <= m for m in ms])
    checks.append(AuditCheck("P matches definition", bool(np.array_equal(P, stored)),
                             _first_violation(P != stored, ("m-1", "i", "c"))))
    bad = P[:-1] & ~P[1:]
    checks.append(AuditCheck("P increasing in m", not bad.any(), _first_violation(bad, ("m-1", "i", "c"))))
    bad = u[:-1] > u[1:]
    checks.append(AuditCheck("u increasing in m", not bad.any(), _first_violation(bad, ("m-1", "j", "c"))))
    bad = u[:, 1:] > u[:, :-1]
    checks.append(AuditCheck("u decreasing in j", not bad.any(), _first_violation(bad, ("m-1", "j", "c"))))
    bad = R[:-1] & ~R[1:]
    checks.append(AuditCheck("R increasing in m", not bad.any(), _first_violation(bad, ("m-1", "j", "c"))))
    bad = R[:, 1:] & ~R[:, :-1]
    checks.append(AuditCheck("R decreasing in j", not bad.any(), _first_violation(bad, ("m-1", "j", "c"))))
    checks.append(AuditCheck("R[1, j] = 0", not R[0].any(), _first_violation(R[0], ("j", "c"))))
    thresholds = np.array([1.0 / m for m in ms])[:, None, None]
    consistent = R == (u > thresholds)
    checks.append(AuditCheck("R is the band of (u - e/m)^+", bool(consistent.all()),
                             _first_violation(~consistent, ("m-1", "j", "c"))))
    J = R.any(axis=0)
    checks.append(AuditCheck("J = sup_m R", bool(np.array_equal(J, ext.J.masks)), ""))
    bad = ext.Q.masks & ~J
    checks.append(AuditCheck("Q <= J", not bad.any(), _first_violation(bad, ("j", "c"))))

    # R[m, j] >= P[m, j] whenever m > j + 1
    m_idx = np.arange(1, cap + 1)[:, None, None]
    j_idx = np.arange(n)[None, :, None]
    bad = (m_idx > j_idx + 1) & P & ~R
    checks.append(AuditCheck("R >= P for m > j+1", not bad.any(), _first_violation(bad, ("m-1", "j", "c"))))

    # (1/m^2) R[m, j] e <= max_{k >= max(j,1)} (1/k) sum_{i<k} f_i; the largest
    # left side over m is attained at the first level where R fires
    first = np.where(R.any(axis=0), np.argmax(R, axis=0) + 1, 0)
    fired = first > 0
    ok = _key_bound_holds(arr, e, first, ext.unit.backend)
    checks.append(AuditCheck("(1/m^2) R e <= sup of Cesàro means", bool(ok.all()),
                             _first_violation(~ok, ("j", "c"))))
    return checks


@dataclass(frozen=True, eq=False)
class ForwardReport:
    judgment: ConvergenceJudgment
    projected_means: VectorSequence
    complement_means: VectorSequence
    bound: VectorSequence
    density: ConvergenceJudgment
    residual: ConvergenceJudgment


def verify_forward(seq: VectorSequence, ps: ProjectionSequence, e: LatticeVector, g: LatticeVector,
                   tol: float) -> ForwardReport:
    """Check the forward implication on a finite horizon.

    Hypotheses (``0 <= f_n <= g``, ``P_n`` of density zero, ``(I - P_n) f_n -> 0``)
    are judged first and raise distinct errors when they fail. The conclusion
    is the judgment on the Cesàro means of ``f``, returned with the split
    ``(1/n) sum P_k f_k`` / ``(1/n) sum (I - P_k) f_k`` and its upper bound
    ``((1/n) sum P_k) g + (1/n) sum (I - P_k) f_k``.
    """
    backend = same_backend(seq.backend, e.backend, g.backend)
    if ps.horizon != seq.horizon or ps.dim != seq.dim:
        raise PreconditionError("projection sequence does not match the vector sequence")
    arr = seq.array
    if not np.all(arr >= 0):
        raise NegativeInputError("sequence has negative coordinates")
    if np.any(arr > g.coords[None, :]):
        bad = int(np.argmax(np.any(arr > g.coords[None, :], axis=1)))
        raise NotOrderBoundedError(f"term {bad} exceeds the order bound g")
    density = judge_density_zero(ps, e, tol)
    if not density.converges:
        raise NotDensityZeroError(f"projection sequence judged {density.verdict} at tolerance {tol}")
    zero = to_scalar(0, backend)
    masks = ps.masks
    on = np.where(masks, arr, zero)
    off = np.where(masks, zero, arr)
    residual = judge_norms(max_norms(off), tol)
    if not residual.converges:
        raise ResidualNotVanishingError(f"(I - P_n) f_n judged {residual.verdict} at tolerance {tol}")
    projected = cesaro_array(on)
    complement = cesaro_array(off)
    p_density = cesaro_array(np.where(masks, to_scalar(1, backend), zero))
    bound = p_density * g.coords[None, :] + complement
    judgment = judge_order_convergence_to_zero(cesaro_means(seq), tol)
    return ForwardReport(
        judgment=judgment,
        projected_means=VectorSequence.from_array(projected, backend),
        complement_means=VectorSequence.from_array(complement, backend),
        bound=VectorSequence.from_array(bound, backend),
        density=density,
        residual=residual,
    )
