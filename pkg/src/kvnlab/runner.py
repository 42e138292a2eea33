"""Pipeline orchestration for experiment configs.

Each pipeline returns ``(results, trajectories, dumps)``: JSON-ready verdicts,
sampled norm trajectories for plotting, and full sequences to dump as CSV
when ``output.csv_dump`` is set. Reports carry no timestamps or host data, so
identical inputs give identical bytes.
"""

from __future__ import annotations

import math
import warnings
from pathlib import Path

import numpy as np

from .classical import IntervalMapSystem, IntervalSet, classify_classical
from .config import ExperimentConfig
from .dynamics import (
    CepsSystem,
    classify_weak_mixing,
    validate_ceps,
    weak_mixing_ee_check,
    weak_mixing_sequence,
)
from .errors import ConfigError, DimensionMismatchError, InvalidSystemError
from .extract import HypothesisWarning, KvnParams, audit_extraction, extract_density_zero, verify_forward
from .generators import projections_from_spec, sequence_from_spec
from .io import read_projection_csv, read_sequence_csv, trajectory, write_json, write_projection_csv, write_sequence_csv
from .riesz import BandProjection, LatticeVector
from .scalars import EXACT, FLOAT, format_scalar
from .sequences import (
    VectorSequence,
    cesaro_means,
    counterexample_gp,
    judge_order_convergence_to_zero,
    series_convergence_check,
)

DEFAULT_HORIZON = 1000


def _horizon(config: ExperimentConfig, fallback: int = DEFAULT_HORIZON) -> int:
    h = config.params.get("horizon")
    return int(h) if h is not None else fallback


def _load_sequence(config: ExperimentConfig, dim_hint: int | None = None) -> VectorSequence:
    src = config.data["input"]
    if "csv" in src:
        seq = read_sequence_csv(config.resolve(src["csv"]), expected_backend=config.backend)
        h = config.params.get("horizon")
        if h is None:
            return seq
        if h > seq.horizon:
            raise ConfigError(f"horizon {h} exceeds the {seq.horizon} rows of {src['csv']}")
        return seq.with_horizon(h)
    return sequence_from_spec(src["generator"], _horizon(config), config.backend, dim_hint)


def _load_projections(config: ExperimentConfig, horizon: int):
    src = config.data["projections"]
    if "csv" in src:
        ps = read_projection_csv(config.resolve(src["csv"]))
        if ps.horizon < horizon:
            raise ConfigError(f"projection file {src['csv']} has {ps.horizon} rows, need {horizon}")
        return type(ps).from_masks(ps.masks[:horizon])
    return projections_from_spec(src["generator"], horizon)


def _vector(config: ExperimentConfig, key: str, dim: int) -> LatticeVector:
    values = config.data.get(key)
    if values is None:
        return LatticeVector.ones(dim, config.backend)
    if len(values) != dim:
        raise DimensionMismatchError(f"{key} has {len(values)} coordinates, the sequence has {dim}")
    return LatticeVector.of(values, config.backend)


def _bitstring(mask: np.ndarray) -> str:
    return "".join("1" if b else "0" for b in mask)


def run_cesaro(config: ExperimentConfig):
    seq = _load_sequence(config)
    tol = config.params["tolerance"]
    means = cesaro_means(seq)
    abs_sums, sums = series_convergence_check(seq)
    results = {
        "horizon": seq.horizon,
        "dim": seq.dim,
        "cesaro": judge_order_convergence_to_zero(means, tol).to_json(),
        "terms": judge_order_convergence_to_zero(seq, tol).to_json(),
        "cesaro_final": [format_scalar(v) for v in means.array[-1]],
        "abs_partial_sum_final": [format_scalar(v) for v in abs_sums.array[-1]],
        "partial_sum_final": [format_scalar(v) for v in sums.array[-1]],
    }
    trajectories = {"terms": trajectory(seq), "cesaro": trajectory(means)}
    return results, trajectories, {"cesaro": means}


def run_counterexample(config: ExperimentConfig):
    p = float(config.params["p"])
    horizon = _horizon(config)
    seq = counterexample_gp(p, horizon, config.backend)
    means = cesaro_means(seq)
    tol = config.params["tolerance"]
    final = means.array[-1, 0]
    results = {
        "p": p,
        "horizon": horizon,
        "cesaro_tail": format_scalar(final),
        "cesaro": judge_order_convergence_to_zero(means, tol).to_json(),
        "nonzero_terms": int(np.count_nonzero(seq.array[:, 0] != 0)),
        "max_term": format_scalar(max(seq.array[:, 0])),
    }
    return results, {"cesaro": trajectory(means), "terms": trajectory(seq)}, {"cesaro": means}


def run_kvn(config: ExperimentConfig):
    seq = _load_sequence(config)
    e = _vector(config, "unit", seq.dim)
    tol = config.params["tolerance"]
    params = KvnParams(seq.horizon, config.params["level_cap"], tol)
    audit = config.params["audit"]
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", HypothesisWarning)
        ext = extract_density_zero(seq, e, params, keep_tables=audit)
    notes = [str(w.message) for w in caught if issubclass(w.category, HypothesisWarning)]
    residual_tol = 1.0 / params.level_cap + 0.01
    results = {
        "horizon": seq.horizon,
        "dim": seq.dim,
        "unit": e.to_json(),
        "hypothesis": judge_order_convergence_to_zero(cesaro_means(seq), tol).to_json(),
        "density": ext.density_judgment(tol).to_json(),
        "residual": ext.residual_judgment(tol).to_json(),
        "residual_at_cap_tolerance": ext.residual_judgment(residual_tol).to_json(),
        "exception_indices_head": [int(j) for j in ext.exception_set()[:50]],
        "diagnostics": ext.diagnostics,
        "Q_masks": [_bitstring(row) for row in ext.Q.masks],
        "notes": notes,
    }
    if audit:
        checks = audit_extraction(ext, seq)
        results["audit"] = {
            "passed": all(c.passed for c in checks),
            "checks": [{"name": c.name, "passed": c.passed, "detail": c.detail} for c in checks],
        }
    trajectories = {
        "density": trajectory(ext.density),
        "residual": trajectory(ext.residuals),
        "cesaro": trajectory(cesaro_means(seq)),
    }
    return results, trajectories, {"density": ext.density, "residual": ext.residuals, "Q": ext.Q}


def run_verify_forward(config: ExperimentConfig):
    seq = _load_sequence(config)
    ps = _load_projections(config, seq.horizon)
    if ps.dim != seq.dim:
        raise DimensionMismatchError(f"projections have dim {ps.dim}, the sequence has {seq.dim}")
    e = _vector(config, "unit", seq.dim)
    g = _vector(config, "bound", seq.dim)
    rep = verify_forward(seq, ps, e, g, config.params["tolerance"])
    results = {
        "horizon": seq.horizon,
        "dim": seq.dim,
        "cesaro": rep.judgment.to_json(),
        "projection_density": rep.density.to_json(),
        "residual": rep.residual.to_json(),
        "cesaro_final": [format_scalar(v) for v in cesaro_means(seq).array[-1]],
        "bound_final": [format_scalar(v) for v in rep.bound.array[-1]],
    }
    trajectories = {
        "cesaro": trajectory(cesaro_means(seq)),
        "projected_means": trajectory(rep.projected_means),
        "complement_means": trajectory(rep.complement_means),
        "bound": trajectory(rep.bound),
    }
    return results, trajectories, {"cesaro": cesaro_means(seq), "bound": rep.bound}


def _random_e_bounded(rng: np.random.Generator, e: LatticeVector) -> LatticeVector:
    from fractions import Fraction

    vals = [Fraction(int(rng.integers(0, 201)), 100) * w for w in e.coords]
    return LatticeVector.of(vals, e.backend)


def run_ceps(config: ExperimentConfig):
    spec = config.data["system"]
    system = CepsSystem.build(spec["weights"], spec["blocks"], spec["sigma"], spec.get("unit"), config.backend)
    validation = validate_ceps(system)
    if not validation.valid:
        raise InvalidSystemError(validation.message)
    horizon = _horizon(config)
    tol = config.params["tolerance"]
    pairs = None
    if "pairs" in config.data:
        pairs = []
        for p, q in config.data["pairs"]:
            if len(p) != system.dim or len(q) != system.dim:
                raise DimensionMismatchError(f"pair masks must have {system.dim} entries")
            pairs.append((BandProjection.of(p), BandProjection.of(q)))
    cls = classify_weak_mixing(system, pairs, horizon, tol, config.params["level_cap"])
    results = {
        "system": system.to_json(),
        "validation": validation.to_json(),
        "classification": cls.to_json(),
        "verdict": "weakly mixing" if cls.weakly_mixing else "not weakly mixing",
    }
    worst = max(cls.pairs, key=lambda r: float(r.cesaro_final))
    seq = weak_mixing_sequence(system, worst.P, worst.Q, horizon)
    means = cesaro_means(seq)
    trajectories = {"worst_pair_terms": trajectory(seq), "worst_pair_cesaro": trajectory(means)}

    ee = config.data.get("ee_check")
    if ee is not None:
        if not cls.weakly_mixing:
            results["ee_check"] = {"skipped": "system is not classified weakly mixing"}
        else:
            eps = config.params["eps"]
            checks = []
            if "f" in ee or "g" in ee:
                f = LatticeVector.of(ee.get("f", [1] * system.dim), config.backend)
                g = LatticeVector.of(ee.get("g", [1] * system.dim), config.backend)
                checks.append(weak_mixing_ee_check(system, f, g, horizon, tol, eps, cls).to_json())
            rng = np.random.default_rng(config.params["seed"])
            for _ in range(ee.get("random_pairs", 0)):
                f = _random_e_bounded(rng, system.e)
                g = _random_e_bounded(rng, system.e)
                checks.append(weak_mixing_ee_check(system, f, g, horizon, tol, eps, cls).to_json())
            results["ee_check"] = {"passed": all(c["passed"] for c in checks), "checks": checks}
    return results, trajectories, {"worst_pair_cesaro": means}


def _alpha(value):
    if value == "golden":
        return (math.sqrt(5.0) - 1.0) / 2.0
    return value


def run_classical(config: ExperimentConfig):
    spec = config.data["map"]
    backend = config.backend
    if spec["kind"] == "rotation":
        if "alpha" not in spec:
            raise ConfigError("config error at $.map.alpha: rotation needs alpha")
        alpha = _alpha(spec["alpha"])
        if backend == EXACT and isinstance(alpha, float) and spec["alpha"] == "golden":
            raise ConfigError("config error at $.map.alpha: 'golden' is irrational; use the float backend")
        system = IntervalMapSystem.rotation(alpha, backend)
    else:
        system = IntervalMapSystem.doubling(backend)
    A = IntervalSet.of(config.data["A"], backend)
    B = IntervalSet.of(config.data["B"], backend)
    report = classify_classical(system, A, B, _horizon(config), config.params["tolerance"], config.params["level_cap"])
    results = report.to_json()
    results["verdict"] = f"weak-mixing property: {results['weak_mixing_property']}"
    means = cesaro_means(report.sequence)
    trajectories = {"correlation": trajectory(report.sequence), "cesaro": trajectory(means)}
    return results, trajectories, {"correlation": report.sequence, "cesaro": means}


PIPELINES = {
    "cesaro": run_cesaro,
    "counterexample": run_counterexample,
    "kvn": run_kvn,
    "verify-forward": run_verify_forward,
    "ceps": run_ceps,
    "classical": run_classical,
}


def run_experiment(config: ExperimentConfig) -> tuple[dict, list[Path]]:
    """Run the configured pipeline, write its report and return ``(report, files)``."""
    results, trajectories, dumps = PIPELINES[config.kind](config)
    resolved = dict(config.data)
    params = dict(resolved["params"])
    if params.get("horizon") is None:
        params["horizon"] = results.get("horizon", DEFAULT_HORIZON)
    resolved["params"] = params
    report = {
        "kind": config.kind,
        "backend": config.backend,
        "config": resolved,
        "results": results,
        "trajectories": trajectories,
    }
    path = config.report_path
    files = []
    if config.data["output"]["csv_dump"]:
        stem = path.stem
        for name in sorted(dumps):
            target = path.with_name(f"{stem}-{name}.csv")
            obj = dumps[name]
            if isinstance(obj, VectorSequence):
                write_sequence_csv(obj, target)
            else:
                write_projection_csv(obj, target)
            files.append(target)
        report["csv_dumps"] = [p.name for p in files]
    write_json(report, path)
    return report, [path] + files
