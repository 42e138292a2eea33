"""Rule-based sequence generators and random instance builders.

The named generators back the ``"generator"`` input form of experiment
configs; the ``random_*`` helpers build the randomized instances used by the
property suites.
"""

from __future__ import annotations

from fractions import Fraction
from typing import Optional, Sequence

import numpy as np

from .dynamics import CepsSystem
from .errors import ConfigError
from .riesz import LatticeVector
from .scalars import EXACT, FLOAT, to_array, to_scalar
from .sequences import ProjectionSequence, VectorSequence, counterexample_gp, spike_indices


def _per_coord(value, dim: int) -> list:
    if isinstance(value, (list, tuple)):
        if len(value) != dim:
            raise ConfigError(f"expected {dim} per-coordinate values, got {len(value)}")
        return list(value)
    return [value] * dim


def _fill(horizon: int, dim: int, backend: str) -> np.ndarray:
    if backend == EXACT:
        return np.full((horizon, dim), Fraction(0), dtype=object)
    return np.zeros((horizon, dim), dtype=np.float64)


def zero_sequence(horizon: int, dim: int = 1, backend: str = FLOAT) -> VectorSequence:
    return VectorSequence.from_array(_fill(horizon, dim, backend), backend)


def constant_sequence(value: Sequence, horizon: int, backend: str = FLOAT) -> VectorSequence:
    vec = to_array(list(value), backend)
    arr = _fill(horizon, len(vec), backend)
    arr[:] = vec[None, :]
    return VectorSequence.from_array(arr, backend)


def harmonic_sequence(horizon: int, unit: Sequence, scale=1, backend: str = FLOAT) -> VectorSequence:
    """``f_n = scale * e / (n + 1)``."""
    e = to_array(list(unit), backend)
    s = to_scalar(scale, backend)
    if backend == EXACT:
        rows = [[s * w / (n + 1) for w in e] for n in range(horizon)]
        return VectorSequence.from_array(np.array(rows, dtype=object).reshape(horizon, len(e)), backend)
    n = np.arange(horizon, dtype=np.float64)[:, None]
    return VectorSequence.from_array(s * e[None, :] / (n + 1), backend)


def spike_sets(exponents: Sequence[float], horizon: int, offsets: Optional[Sequence[int]] = None) -> list[np.ndarray]:
    offsets = offsets if offsets is not None else [0] * len(exponents)
    return [spike_indices(p, horizon, o) for p, o in zip(exponents, offsets)]


def spike_sequence(horizon: int, exponents: Sequence[float], values, noise=0, offsets=None,
                   backend: str = FLOAT) -> VectorSequence:
    """Coordinate ``c`` equals ``values[c]`` on ``{floor(m**p_c) + offset_c}`` and
    ``noise[c] / (n + 1)`` elsewhere."""
    dim = len(exponents)
    values = [to_scalar(v, backend) for v in _per_coord(values, dim)]
    noise = [to_scalar(v, backend) for v in _per_coord(noise, dim)]
    arr = _fill(horizon, dim, backend)
    for c in range(dim):
        if noise[c] != 0:
            if backend == EXACT:
                arr[:, c] = [noise[c] / (n + 1) for n in range(horizon)]
            else:
                arr[:, c] = noise[c] / np.arange(1, horizon + 1)
    for c, idx in enumerate(spike_sets(exponents, horizon, offsets)):
        arr[idx, c] = values[c]
    return VectorSequence.from_array(arr, backend)


def spike_projections(horizon: int, exponents: Sequence[float], offsets=None) -> ProjectionSequence:
    masks = np.zeros((horizon, len(exponents)), dtype=bool)
    for c, idx in enumerate(spike_sets(exponents, horizon, offsets)):
        masks[idx, c] = True
    return ProjectionSequence.from_masks(masks)


def sequence_from_spec(spec: dict, horizon: int, backend: str, dim_hint: Optional[int] = None) -> VectorSequence:
    """Build a sequence from a config ``generator`` object."""
    name = spec["name"]
    if name == "zero":
        return zero_sequence(horizon, spec.get("dim", dim_hint or 1), backend)
    if name == "constant":
        return constant_sequence(spec["value"], horizon, backend)
    if name == "harmonic":
        dim = spec.get("dim", dim_hint or 1)
        return harmonic_sequence(horizon, spec.get("unit", [1] * dim), spec.get("scale", 1), backend)
    if name == "counterexample":
        return counterexample_gp(float(spec["p"]), horizon, backend)
    if name == "spikes":
        return spike_sequence(horizon, spec["exponents"], spec.get("values", 1), spec.get("noise", 0),
                              spec.get("offsets"), backend)
    raise ConfigError(f"unknown generator {name!r}")


def projections_from_spec(spec: dict, horizon: int) -> ProjectionSequence:
    name = spec["name"]
    if name == "spikes":
        return spike_projections(horizon, spec["exponents"], spec.get("offsets"))
    if name == "zero":
        return ProjectionSequence.from_masks(np.zeros((horizon, spec.get("dim", 1)), dtype=bool))
    if name == "identity":
        return ProjectionSequence.from_masks(np.ones((horizon, spec.get("dim", 1)), dtype=bool))
    raise ConfigError(f"unknown projection generator {name!r}")


def random_ceps_system(rng: np.random.Generator, max_dim: int = 6, backend: str = FLOAT) -> CepsSystem:
    """A random conditional expectation preserving system.

    Atoms are split into partition blocks, each block into groups of equal
    weight, and ``sigma`` permutes each group. This covers every system with
    strictly positive weights: ``T S 1_c = T 1_c`` forces ``sigma`` to be a
    weight-preserving permutation inside each block.
    """
    d = int(rng.integers(1, max_dim + 1))
    perm = rng.permutation(d)
    n_blocks = int(rng.integers(1, d + 1))
    cuts = sorted(rng.choice(np.arange(1, d), n_blocks - 1, replace=False)) if n_blocks > 1 else []
    blocks = [[int(c) for c in b] for b in np.split(perm, cuts)]
    raw = [0] * d
    sigma = list(range(d))
    for block in blocks:
        block = list(block)
        rng.shuffle(block)
        n_groups = int(rng.integers(1, len(block) + 1))
        gcuts = sorted(rng.choice(np.arange(1, len(block)), n_groups - 1, replace=False)) if n_groups > 1 else []
        for group in np.split(np.array(block), gcuts):
            w = int(rng.integers(2, 11))
            image = rng.permutation(group)
            for src, dst in zip(group, image):
                raw[int(src)] = w
                sigma[int(src)] = int(dst)
    total = sum(raw)
    weights = [Fraction(w, total) for w in raw]
    if backend == FLOAT:
        weights = [float(w) for w in weights]
    return CepsSystem.build(weights, blocks, sigma, backend=backend)


def random_unit(rng: np.random.Generator, dim: int, backend: str = FLOAT) -> LatticeVector:
    return LatticeVector.of([Fraction(int(rng.integers(1, 9)), 4) for _ in range(dim)], backend)
