"""
變換運算子 (Transforms)

T f = Σ_k ν_k (M_k - E_k) f, the differential transform D, the square
function and martingale transforms, plus a power-iteration estimate of the
L2 operator norm on the finite grid.
"""

from __future__ import annotations

import math
from collections.abc import Iterable, Mapping

import numpy as np

from dyadic_field import (
    DyadicGrid,
    MatrixField,
    ball_average,
    cond_expectation,
    martingale_difference,
)
from errors import InvalidConfig, InvalidSignSequence
from spectral_core import adjoint, psd_sqrt
from utils.log import add_log

SQUARE_FORMS = ("column", "row")


class SignSequence(Mapping):
    """
    Level → coefficient ν_k with ‖ν‖_∞ ≤ 1. Levels that are not listed
    contribute nothing.
    """

    def __init__(self, coefficients: Mapping[int, float] | None = None):
        clean = {}
        for level, value in dict(coefficients or {}).items():
            value = float(value)
            if not math.isfinite(value) or abs(value) > 1.0:
                raise InvalidSignSequence(f"|ν_{level}| = {abs(value)} exceeds 1")
            clean[int(level)] = value
        self._coefficients = dict(sorted(clean.items()))

    def __getitem__(self, level):
        return self._coefficients[level]

    def __iter__(self):
        return iter(self._coefficients)

    def __len__(self):
        return len(self._coefficients)

    def __repr__(self):
        return f"SignSequence({self._coefficients})"

    def coefficient(self, level: int) -> float:
        return self._coefficients.get(level, 0.0)

    def sup_norm(self) -> float:
        return max((abs(v) for v in self._coefficients.values()), default=0.0)

    def shifted(self, offset: int) -> "SignSequence":
        """ν'_{k + offset} = ν_k"""
        return SignSequence({k + offset: v for k, v in self._coefficients.items()})

    def to_dict(self) -> dict:
        return {str(k): v for k, v in self._coefficients.items()}

    @classmethod
    def ones(cls, levels: Iterable[int]) -> "SignSequence":
        return cls({k: 1.0 for k in levels})

    @classmethod
    def zeros(cls, levels: Iterable[int]) -> "SignSequence":
        return cls({k: 0.0 for k in levels})

    @classmethod
    def random_signs(cls, levels: Iterable[int], rng: np.random.Generator) -> "SignSequence":
        levels = list(levels)
        return cls(dict(zip(levels, rng.choice([-1.0, 1.0], size=len(levels)))))

    @classmethod
    def random_uniform(cls, levels: Iterable[int], rng: np.random.Generator) -> "SignSequence":
        levels = list(levels)
        return cls(dict(zip(levels, rng.uniform(-1.0, 1.0, size=len(levels)))))


def default_levels(grid: DyadicGrid, lowest: int = 0) -> range:
    return range(lowest, grid.K + 1)


def _levels(grid: DyadicGrid, levels, lowest: int) -> list[int]:
    chosen = default_levels(grid, lowest) if levels is None else levels
    return [grid.check_level(k, lowest=lowest) for k in chosen]


def level_piece(f: MatrixField, k: int) -> MatrixField:
    """(M_k - E_k) f"""
    return ball_average(f, k) - cond_expectation(f, k)


def transform_T(f: MatrixField, nu: SignSequence, levels=None) -> MatrixField:
    """T f = Σ_{k ∈ levels} ν_k (M_k - E_k) f (levels default to 0..K)."""
    out = np.zeros_like(f.values)
    for k in _levels(f.grid, levels, 0):
        coefficient = nu.coefficient(k)
        if coefficient:
            out += coefficient * level_piece(f, k).values
    return MatrixField._wrap(f.grid, out)


def differential_transform_D(f: MatrixField, nu: SignSequence, levels=None) -> MatrixField:
    """D f = Σ_{k ∈ levels} ν_k (M_k - M_{k-1}) f (levels default to 1..K)."""
    chosen = _levels(f.grid, levels, 1)
    averages: dict[int, np.ndarray] = {}

    def average(k):
        if k not in averages:
            averages[k] = ball_average(f, k).values
        return averages[k]

    out = np.zeros_like(f.values)
    for k in chosen:
        coefficient = nu.coefficient(k)
        if coefficient:
            out += coefficient * (average(k) - average(k - 1))
    return MatrixField._wrap(f.grid, out)


def martingale_transform(f: MatrixField, nu: SignSequence, levels=None) -> MatrixField:
    """Σ_k ν_k df_k over 1..K."""
    out = np.zeros_like(f.values)
    for k in _levels(f.grid, levels, 1):
        coefficient = nu.coefficient(k)
        if coefficient:
            out += coefficient * martingale_difference(f, k).values
    return MatrixField._wrap(f.grid, out)


def three_way_split(f: MatrixField, nu: SignSequence, levels=None):
    """
    The pieces of D f = T_ν f + Σ ν_k df_k - T_{ν'} f where ν'_{k-1} = ν_k.

    Returns (T_ν f, martingale part, T_{ν'} f) over the given D levels.
    """
    chosen = _levels(f.grid, levels, 1)
    direct = transform_T(f, nu, chosen)
    martingale = martingale_transform(f, nu, chosen)
    lagged = transform_T(f, nu.shifted(-1), [k - 1 for k in chosen])
    return direct, martingale, lagged


def square_function(f: MatrixField, levels=None, form: str = "column") -> MatrixField:
    """
    (Σ_k |(M_k - E_k) f|²)^{1/2} cellwise, with |x|² = x*x (column) or
    x x* (row).
    """
    if form not in SQUARE_FORMS:
        raise InvalidConfig(f"square function form must be one of {SQUARE_FORMS}, got {form!r}")
    total = np.zeros_like(f.values)
    for k in _levels(f.grid, levels, 0):
        x = level_piece(f, k).values
        total += adjoint(x) @ x if form == "column" else x @ adjoint(x)
    return MatrixField._wrap(f.grid, psd_sqrt(total))


# ===== 算子範數估計 (Operator norm estimation) =====

def _l2(values: np.ndarray, grid: DyadicGrid) -> float:
    return float(np.linalg.norm(values) * math.sqrt(grid.cell_volume))


def estimate_operator_norm(
    operator,
    grid: DyadicGrid,
    adjoint_operator=None,
    iterations: int = 200,
    restarts: int = 5,
    rtol: float = 1e-8,
    seed: int = 0,
) -> float:
    """
    Largest singular value of a linear field operator on L2, by power
    iteration on A*A from seeded random starts; the max over restarts.

    ``adjoint_operator`` defaults to ``operator`` (self-adjoint case).
    """
    back = adjoint_operator or operator
    best = 0.0
    for child in np.random.SeedSequence(seed).spawn(restarts):
        rng = np.random.default_rng(child)
        x = rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape)
        x /= _l2(x, grid)
        estimate = 0.0
        for _ in range(iterations):
            y = back(operator(MatrixField._wrap(grid, x))).values
            size = _l2(y, grid)
            if size == 0.0:
                estimate = 0.0
                break
            x = y / size
            converged = abs(size - estimate) <= rtol * size
            estimate = size
            if converged:
                break
        best = max(best, math.sqrt(estimate))
    add_log("debug", f"operator norm estimate {best:.6g} on {grid}", "transforms")
    return best
