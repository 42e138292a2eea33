"""Conditional expectation preserving systems on R^d and conditional weak mixing.

``T`` averages over the blocks of a weighted partition, ``S`` composes with an
atom map ``sigma``. A system ``(T, S, e)`` is conditional-expectation
preserving when ``T S 1_c = T 1_c`` for every atom ``c``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import DimensionMismatchError, InvalidSystemError, NotWeaklyMixingError, PreconditionError
from .extract import DEFAULT_LEVEL_CAP, KvnParams, extract_density_zero
from .riesz import BandProjection, LatticeVector, freudenthal_approx
from .scalars import EXACT, FLOAT, format_scalar, same_backend, to_array, to_scalar
from .sequences import VectorSequence, cesaro_array, judge_many, max_norms

MAX_EXHAUSTIVE_DIM = 10


@dataclass(frozen=True, eq=False)
class FiniteMeasure:
    weights: np.ndarray
    backend: str = FLOAT

    def __post_init__(self):
        w = to_array(list(self.weights), self.backend)
        if w.ndim != 1 or len(w) == 0:
            raise DimensionMismatchError("weights must be a nonempty 1-D array")
        if not all(v > 0 for v in w):
            raise PreconditionError("measure weights must be strictly positive")
        total = sum(w)
        if self.backend == EXACT:
            if total != 1:
                raise PreconditionError(f"total mass is {total}, expected exactly 1")
        elif abs(total - 1.0) > 1e-12:
            raise PreconditionError(f"total mass is {total!r}, expected 1 within 1e-12")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @property
    def dim(self) -> int:
        return len(self.weights)

    def of(self, atoms) -> object:
        return sum((self.weights[c] for c in atoms), to_scalar(0, self.backend))


@dataclass(frozen=True, eq=False)
class CondExpOperator:
    """Block averaging: ``(Tf)[c] = sum_{b(c)} mu f / sum_{b(c)} mu``."""

    blocks: tuple[tuple[int, ...], ...]
    measure: FiniteMeasure
    matrix: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        blocks = tuple(tuple(int(c) for c in b) for b in self.blocks)
        d = self.measure.dim
        seen = sorted(c for b in blocks for c in b)
        if seen != list(range(d)) or any(len(b) == 0 for b in blocks):
            raise PreconditionError(f"blocks must partition 0..{d - 1}")
        object.__setattr__(self, "blocks", blocks)
        w = self.measure.weights
        zero = to_scalar(0, self.measure.backend)
        mat = np.array([[zero] * d for _ in range(d)], dtype=object if self.backend == EXACT else np.float64)
        for b in blocks:
            mass = self.measure.of(b)
            for c in b:
                for c2 in b:
                    mat[c, c2] = w[c2] / mass
        mat.setflags(write=False)
        object.__setattr__(self, "matrix", mat)

    @classmethod
    def full(cls, measure: FiniteMeasure) -> "CondExpOperator":
        return cls((tuple(range(measure.dim)),), measure)

    @classmethod
    def identity(cls, measure: FiniteMeasure) -> "CondExpOperator":
        return cls(tuple((c,) for c in range(measure.dim)), measure)

    @property
    def dim(self) -> int:
        return self.measure.dim

    @property
    def backend(self) -> str:
        return self.measure.backend

    def apply_array(self, arr: np.ndarray) -> np.ndarray:
        """Apply along the last axis."""
        return arr @ self.matrix.T

    def apply(self, f: LatticeVector) -> LatticeVector:
        same_backend(self.backend, f.backend)
        if f.dim != self.dim:
            raise DimensionMismatchError(f"dimension {f.dim} != {self.dim}")
        return LatticeVector(self.apply_array(f.coords), f.backend)

    __call__ = apply


@dataclass(frozen=True)
class CompositionOperator:
    """``(Sf)[c] = f[sigma(c)]``."""

    sigma: tuple[int, ...]

    def __post_init__(self):
        sigma = tuple(int(s) for s in self.sigma)
        if not sigma or any(not 0 <= s < len(sigma) for s in sigma):
            raise PreconditionError("sigma must map {0..d-1} into itself")
        object.__setattr__(self, "sigma", sigma)

    @property
    def dim(self) -> int:
        return len(self.sigma)

    def apply(self, f: LatticeVector) -> LatticeVector:
        if f.dim != self.dim:
            raise DimensionMismatchError(f"dimension {f.dim} != {self.dim}")
        return LatticeVector(f.coords[list(self.sigma)], f.backend)

    __call__ = apply

    def power(self, f: LatticeVector, k: int) -> LatticeVector:
        return LatticeVector(f.coords[self.positions(k)], f.backend)

    def positions(self, k: int) -> np.ndarray:
        """``sigma^k`` as an index array."""
        pos = np.arange(self.dim)
        sig = np.array(self.sigma)
        for _ in range(k):
            pos = sig[pos]
        return pos

    def orbit_positions(self, horizon: int) -> np.ndarray:
        """Row ``k`` is ``sigma^k``; shape ``(horizon, d)``."""
        sig = np.array(self.sigma)
        out = np.empty((horizon, self.dim), dtype=np.int64)
        pos = np.arange(self.dim)
        for k in range(horizon):
            out[k] = pos
            pos = sig[pos]
        return out


@dataclass(frozen=True, eq=False)
class CepsSystem:
    T: CondExpOperator
    S: CompositionOperator
    e: LatticeVector

    def __post_init__(self):
        if not (self.T.dim == self.S.dim == self.e.dim):
            raise DimensionMismatchError("T, S and e must share a dimension")
        same_backend(self.T.backend, self.e.backend)
        if not self.e.is_strictly_positive():
            raise PreconditionError("the weak order unit must be strictly positive")

    @property
    def dim(self) -> int:
        return self.e.dim

    @property
    def backend(self) -> str:
        return self.e.backend

    @classmethod
    def build(cls, weights, blocks, sigma, unit=None, backend: str = FLOAT) -> "CepsSystem":
        measure = FiniteMeasure(weights, backend)
        e = LatticeVector.of(unit if unit is not None else [1] * measure.dim, backend)
        return cls(CondExpOperator(blocks, measure), CompositionOperator(sigma), e)

    def to_json(self) -> dict:
        return {
            "weights": [format_scalar(w) for w in self.T.measure.weights],
            "blocks": [list(b) for b in self.T.blocks],
            "sigma": list(self.S.sigma),
            "unit": self.e.to_json(),
        }


@dataclass(frozen=True)
class CepsValidation:
    valid: bool
    violated_coordinate: Optional[int]
    unit_fixed_by_T: bool
    unit_fixed_by_S: bool
    message: str

    def to_json(self) -> dict:
        return {
            "valid": self.valid,
            "violated_coordinate": self.violated_coordinate,
            "unit_fixed_by_T": self.unit_fixed_by_T,
            "unit_fixed_by_S": self.unit_fixed_by_S,
            "message": self.message,
        }


def _close(a: np.ndarray, b: np.ndarray, backend: str) -> bool:
    if backend == EXACT:
        return bool(np.all(a == b))
    return bool(np.allclose(a, b, rtol=0, atol=1e-12))


def validate_ceps(sys: CepsSystem) -> CepsValidation:
    """Check ``T S 1_c = T 1_c`` for each atom, plus ``Te = e`` and ``Se = e``."""
    d = sys.dim
    backend = sys.backend
    te_ok = _close(sys.T.apply(sys.e).coords, sys.e.coords, backend)
    se_ok = _close(sys.S.apply(sys.e).coords, sys.e.coords, backend)
    for c in range(d):
        ind = LatticeVector.of([1 if i == c else 0 for i in range(d)], backend)
        lhs = sys.T.apply(sys.S.apply(ind)).coords
        rhs = sys.T.apply(ind).coords
        if not _close(lhs, rhs, backend):
            return CepsValidation(False, c, te_ok, se_ok, f"T S 1_{c} != T 1_{c}")
    if not te_ok:
        return CepsValidation(False, None, te_ok, se_ok, "T e != e")
    if not se_ok:
        return CepsValidation(False, None, te_ok, se_ok, "S e != e")
    return CepsValidation(True, None, te_ok, se_ok, "ok")


def _require_valid(sys: CepsSystem) -> None:
    report = validate_ceps(sys)
    if not report.valid:
        raise InvalidSystemError(f"not a conditional expectation preserving system: {report.message}")


def _mixing_terms(sys: CepsSystem, left: np.ndarray, right: np.ndarray, horizon: int) -> np.ndarray:
    """``|T((S^k x) . y) - Tx . Ty|`` for all rows x of ``left`` and y of ``right``.

    ``left`` is ``(p, d)``, ``right`` is ``(q, d)``; the result is ``(horizon, p, q, d)``.
    """
    e = sys.e.coords
    pos = sys.S.orbit_positions(horizon)
    y_over_e = right / e[None, :]
    base = sys.T.apply_array(left)[:, None, :] * sys.T.apply_array(right)[None, :, :] / e[None, None, :]
    out = []
    for p in range(left.shape[0]):
        shifted = left[p][pos]
        prod = shifted[:, None, :] * y_over_e[None, :, :]
        out.append(np.abs(sys.T.apply_array(prod) - base[p][None, :, :]))
    return np.stack(out, axis=1)


def weak_mixing_sequence(sys: CepsSystem, P: BandProjection, Q: BandProjection, horizon: int) -> VectorSequence:
    """Term ``k`` is ``|T((S^k P e) . Q e) - T P e . T Q e|``."""
    _require_valid(sys)
    pe = P.apply(sys.e).coords[None, :]
    qe = Q.apply(sys.e).coords[None, :]
    terms = _mixing_terms(sys, pe, qe, horizon)[:, 0, 0, :]
    return VectorSequence.from_array(terms, sys.backend)


def all_masks(dim: int) -> list[BandProjection]:
    return [BandProjection(np.array(bits, dtype=bool)) for bits in itertools.product((False, True), repeat=dim)]


def default_pairs(dim: int) -> list[tuple[BandProjection, BandProjection]]:
    if dim > MAX_EXHAUSTIVE_DIM:
        raise PreconditionError(f"dimension {dim} > {MAX_EXHAUSTIVE_DIM}: supply the pairs explicitly")
    masks = all_masks(dim)
    return [(p, q) for p in masks for q in masks]


@dataclass(frozen=True)
class PairResult:
    P: BandProjection
    Q: BandProjection
    cesaro_final: object
    cesaro_tail_sup: object
    criterion1: bool
    criterion1_witness: Optional[int]
    density_ok: bool
    density_witness: Optional[int]
    residual_ok: bool
    residual_witness: Optional[int]
    exception_density: float

    @property
    def criterion3(self) -> bool:
        return self.density_ok and self.residual_ok

    @property
    def agree(self) -> bool:
        return self.criterion1 == self.criterion3

    def to_json(self) -> dict:
        return {
            "P": self.P.to_json(),
            "Q": self.Q.to_json(),
            "cesaro_final": format_scalar(self.cesaro_final),
            "cesaro_tail_sup": format_scalar(self.cesaro_tail_sup),
            "criterion1": self.criterion1,
            "criterion1_witness": self.criterion1_witness,
            "criterion3": self.criterion3,
            "density_ok": self.density_ok,
            "density_witness": self.density_witness,
            "residual_ok": self.residual_ok,
            "residual_witness": self.residual_witness,
            "exception_density": self.exception_density,
            "agree": self.agree,
        }


@dataclass(frozen=True)
class MixingClassification:
    pairs: tuple[PairResult, ...]
    horizon: int
    tolerance: float
    level_cap: int
    extraction_diagnostics: dict = field(default_factory=dict)

    @property
    def weakly_mixing(self) -> bool:
        """Criterion (1) holds on every pair at this horizon and tolerance."""
        return all(p.criterion1 for p in self.pairs)

    @property
    def criterion3_all(self) -> bool:
        return all(p.criterion3 for p in self.pairs)

    @property
    def all_agree(self) -> bool:
        return all(p.agree for p in self.pairs)

    def disagreements(self) -> list[PairResult]:
        return [p for p in self.pairs if not p.agree]

    def to_json(self, include_pairs: bool = True) -> dict:
        out = {
            "weakly_mixing": self.weakly_mixing,
            "criterion3_all": self.criterion3_all,
            "all_agree": self.all_agree,
            "pair_count": len(self.pairs),
            "disagreement_count": len(self.disagreements()),
            "horizon": self.horizon,
            "tolerance": self.tolerance,
            "level_cap": self.level_cap,
            "extraction_diagnostics": self.extraction_diagnostics,
        }
        if include_pairs:
            out["pairs"] = [p.to_json() for p in self.pairs]
        return out


def _column_key(col: np.ndarray, unit) -> bytes | tuple:
    if col.dtype == object:
        return tuple(col) + (unit,)
    return col.tobytes() + np.float64(unit).tobytes()


def classify_weak_mixing(
    sys: CepsSystem,
    pairs: Optional[Sequence[tuple[BandProjection, BandProjection]]] = None,
    horizon: int = 1000,
    tol: float = 0.02,
    level_cap: int = DEFAULT_LEVEL_CAP,
) -> MixingClassification:
    """Judge criteria (1) and (3) on each pair of band projections.

    Criterion (1): the Cesàro means of the weak-mixing sequence are judged to
    vanish at ``tol``. Criterion (3): the KvN extraction on that sequence
    yields projections judged density zero and residuals judged to vanish,
    both at the same ``tol``. Pair sequences are deduplicated coordinatewise
    and extracted in one batch; the construction acts coordinatewise, so this
    equals running one extraction per pair.
    """
    _require_valid(sys)
    if pairs is None:
        pairs = default_pairs(sys.dim)
    pairs = list(pairs)
    if not pairs:
        raise PreconditionError("no pairs to classify")
    for P, Q in pairs:
        if P.dim != sys.dim or Q.dim != sys.dim:
            raise DimensionMismatchError("pair dimension does not match the system")
    d = sys.dim
    e = sys.e.coords
    left_masks = {}
    for P, _ in pairs:
        left_masks.setdefault(P, len(left_masks))
    right_masks = {}
    for _, Q in pairs:
        right_masks.setdefault(Q, len(right_masks))
    zero = to_scalar(0, sys.backend)
    left = np.stack([np.where(P.mask, e, zero) for P in left_masks])
    right = np.stack([np.where(Q.mask, e, zero) for Q in right_masks])
    terms = _mixing_terms(sys, left, right, horizon)

    columns: dict = {}
    col_data = []
    col_unit = []
    pair_cols = []
    for P, Q in pairs:
        block = terms[:, left_masks[P], right_masks[Q], :]
        idx = []
        for c in range(d):
            key = _column_key(block[:, c], e[c])
            if key not in columns:
                columns[key] = len(col_data)
                col_data.append(block[:, c])
                col_unit.append(e[c])
            idx.append(columns[key])
        pair_cols.append(idx)
    A = np.stack(col_data, axis=1)
    unit = LatticeVector(np.array(col_unit, dtype=object if sys.backend == EXACT else np.float64), sys.backend)

    means = np.abs(cesaro_array(A))
    ext = extract_density_zero(
        VectorSequence.from_array(A, sys.backend), unit,
        KvnParams(horizon, level_cap, tol), keep_tables=False, check_hypothesis=False,
    )
    density = np.abs(ext.density.array)
    residual = np.abs(ext.residuals.array)
    Qm = ext.Q.masks

    def pair_norms(table):
        return np.stack([_max_cols(table, cols) for cols in pair_cols])

    mean_norms = pair_norms(means)
    dens_norms = pair_norms(density)
    res_norms = pair_norms(residual)
    c1, w1 = judge_many(mean_norms, tol)
    c3d, w3d = judge_many(dens_norms, tol)
    c3r, w3r = judge_many(res_norms, tol)
    results = []
    for i, (P, Q) in enumerate(pairs):
        cols = pair_cols[i]
        tails = mean_norms[i][horizon // 2:]
        results.append(PairResult(
            P=P, Q=Q,
            cesaro_final=mean_norms[i][-1],
            cesaro_tail_sup=max(tails) if len(tails) else mean_norms[i][-1],
            criterion1=bool(c1[i]), criterion1_witness=_witness(w1[i]),
            density_ok=bool(c3d[i]), density_witness=_witness(w3d[i]),
            residual_ok=bool(c3r[i]), residual_witness=_witness(w3r[i]),
            exception_density=float(Qm[:, cols].all(axis=1).mean()),
        ))
    return MixingClassification(tuple(results), horizon, tol, level_cap,
                                {"unique_columns": len(col_data), **ext.diagnostics})


def _max_cols(table: np.ndarray, cols: list[int]) -> np.ndarray:
    sub = table[:, cols]
    if sub.shape[1] == 1:
        return sub[:, 0]
    return np.max(sub, axis=1)


def _witness(w) -> Optional[int]:
    w = int(w)
    return None if w < 0 else w


@dataclass(frozen=True)
class EECheckReport:
    passed: bool
    termwise_bound_ok: bool
    step_bound_ok: bool
    mean_bound_ok: bool
    mean_b: object
    mean_b_step: object
    bound: object
    K: object
    eps: object
    tolerance: float
    levels_f: int
    levels_g: int

    def to_json(self) -> dict:
        return {
            "passed": self.passed,
            "termwise_bound_ok": self.termwise_bound_ok,
            "step_bound_ok": self.step_bound_ok,
            "mean_bound_ok": self.mean_bound_ok,
            "mean_b": format_scalar(self.mean_b),
            "mean_b_step": format_scalar(self.mean_b_step),
            "bound": format_scalar(self.bound),
            "K": format_scalar(self.K),
            "eps": format_scalar(self.eps),
            "tolerance": self.tolerance,
            "levels_f": self.levels_f,
            "levels_g": self.levels_g,
        }


def _leq(a, b, backend: str) -> bool:
    if backend == EXACT:
        return bool(np.all(a <= b))
    return bool(np.all(a <= b + 1e-12))


def weak_mixing_ee_check(
    sys: CepsSystem,
    f: LatticeVector,
    g: LatticeVector,
    horizon: int,
    tol: float,
    eps,
    classification: Optional[MixingClassification] = None,
) -> EECheckReport:
    """Weak mixing on E_e through e-step approximation.

    With ``b_k = |T((S^k f) . g) - Tf . Tg|`` and ``b'_k`` the same quantity for
    the e-step approximants ``s, t`` of ``f, g`` (``|f - s|, |g - t| <= eps e``),
    checks ``b_k <= b'_k + 4 K eps e`` termwise, ``b'_k`` against the sum over
    step levels ``|alpha_i beta_j| a_k(P_i, Q_j)``, and finally that the Cesàro
    mean of ``b_k`` at the horizon is at most ``tol + 4 K eps``.
    """
    _require_valid(sys)
    backend = same_backend(sys.backend, f.backend, g.backend)
    if f.dim != sys.dim or g.dim != sys.dim:
        raise DimensionMismatchError("f, g must match the system dimension")
    if backend == FLOAT and not (np.all(np.isfinite(f.coords)) and np.all(np.isfinite(g.coords))):
        raise PreconditionError("f and g must be e-bounded")
    if classification is None:
        classification = classify_weak_mixing(sys, None, horizon, tol)
    if not classification.weakly_mixing:
        raise NotWeaklyMixingError("system is not classified weakly mixing at this horizon and tolerance")

    e = sys.e
    eps_s = to_scalar(eps, backend)
    s = freudenthal_approx(f, e, eps_s)
    t = freudenthal_approx(g, e, eps_s)
    s_vec = s.evaluate(e)
    t_vec = t.evaluate(e)
    K = max(f.e_bound(e), g.e_bound(e), s_vec.e_bound(e), t_vec.e_bound(e))

    b = _mixing_terms(sys, f.coords[None, :], g.coords[None, :], horizon)[:, 0, 0, :]
    b_step = _mixing_terms(sys, s_vec.coords[None, :], t_vec.coords[None, :], horizon)[:, 0, 0, :]
    zero = to_scalar(0, backend)
    left = np.stack([np.where(P.mask, e.coords, zero) for _, P in s.levels])
    right = np.stack([np.where(Q.mask, e.coords, zero) for _, Q in t.levels])
    a = _mixing_terms(sys, left, right, horizon)
    weights = np.array([[abs(to_scalar(al, backend) * to_scalar(be, backend)) for be, _ in t.levels]
                        for al, _ in s.levels], dtype=object if backend == EXACT else np.float64)
    step_sum = np.sum(a * weights[None, :, :, None], axis=(1, 2))

    slack = 4 * K * eps_s * e.coords[None, :]
    termwise = _leq(b, b_step + slack, backend)
    step_ok = _leq(b_step, step_sum, backend)
    mean_b = max(max_norms(cesaro_array(b))[-1:])
    mean_step = max(max_norms(cesaro_array(b_step))[-1:])
    bound = to_scalar(tol, backend) + 4 * K * eps_s
    mean_ok = mean_b <= bound
    return EECheckReport(
        passed=bool(termwise and step_ok and mean_ok),
        termwise_bound_ok=termwise, step_bound_ok=step_ok, mean_bound_ok=bool(mean_ok),
        mean_b=mean_b, mean_b_step=mean_step, bound=bound, K=K, eps=eps_s, tolerance=tol,
        levels_f=len(s), levels_g=len(t),
    )
