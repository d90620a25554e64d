"""
測試集合 (Ensembles)

Deterministic instance generation: an EnsembleSpec names seed, count, grid
shape, field generator, λ policy and sign policy; the same spec always
yields bit-identical instances.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from dyadic_field import BOUNDARIES, SUPPORTED_DIMS, DyadicGrid, MatrixField, field_lp_norm
from errors import InvalidConfig
from spectral_core import adjoint
from transforms import SignSequence

GENERATORS = ("random-psd", "sparse-spike", "smooth-plus-spike", "scalar")
SIGN_POLICIES = ("all-ones", "random-signs", "random-uniform")
LAMBDA_POLICIES = ("sweep", "fixed")


@dataclass(frozen=True)
class EnsembleSpec:
    seed: int = 0
    count: int = 4
    d: int = 1
    K_values: tuple = (3, 4)
    n: int = 2
    boundary: str = "torus"
    lambda_policy: str = "sweep"
    lam: float | None = None
    generator: str = "random-psd"
    signs: str = "all-ones"

    def __post_init__(self):
        object.__setattr__(self, "K_values", tuple(int(k) for k in self.K_values))
        if self.count < 0:
            raise InvalidConfig(f"count must be non-negative, got {self.count}")
        if self.d not in SUPPORTED_DIMS:
            raise InvalidConfig(f"dimension d={self.d} unsupported (allowed: 1, 2)")
        if not self.K_values or any(k < 1 for k in self.K_values):
            raise InvalidConfig(f"levels must be positive integers, got {self.K_values}")
        if self.n < 1:
            raise InvalidConfig(f"matrix dimension must be positive, got {self.n}")
        if self.boundary not in BOUNDARIES:
            raise InvalidConfig(f"boundary must be one of {BOUNDARIES}, got {self.boundary!r}")
        if self.generator not in GENERATORS:
            raise InvalidConfig(f"generator must be one of {GENERATORS}, got {self.generator!r}")
        if self.signs not in SIGN_POLICIES:
            raise InvalidConfig(f"sign policy must be one of {SIGN_POLICIES}, got {self.signs!r}")
        if self.lambda_policy not in LAMBDA_POLICIES:
            raise InvalidConfig(f"λ policy must be one of {LAMBDA_POLICIES}, got {self.lambda_policy!r}")
        if self.lambda_policy == "fixed" and not (self.lam is not None and math.isfinite(self.lam) and self.lam > 0):
            raise InvalidConfig(f"fixed λ policy needs a positive λ, got {self.lam}")

    def grid(self, K: int) -> DyadicGrid:
        return DyadicGrid(self.d, K, self.n, self.boundary)

    def tasks(self):
        """(K, i, index) in deterministic order."""
        index = 0
        for K in self.K_values:
            for i in range(self.count):
                yield K, i, index
                index += 1

    def to_dict(self) -> dict:
        out = asdict(self)
        out["K_values"] = list(self.K_values)
        return out


@dataclass(frozen=True)
class Instance:
    index: int
    K: int
    field: MatrixField
    nu: SignSequence
    lambdas: tuple = ()

    @property
    def grid(self) -> DyadicGrid:
        return self.field.grid


def instance_rng(spec: EnsembleSpec, K: int, i: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([spec.seed, spec.d, K, spec.n, i]))


# ===== 場產生器 (Field generators) =====

def _hermitian(values: np.ndarray) -> np.ndarray:
    return 0.5 * (values + adjoint(values))


def _random_psd(rng, shape, n) -> np.ndarray:
    a = rng.standard_normal(shape + (n, n)) + 1j * rng.standard_normal(shape + (n, n))
    return _hermitian(a @ adjoint(a) / n)


def _rank_one(rng, n) -> np.ndarray:
    v = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    v /= np.linalg.norm(v)
    return np.outer(v, np.conj(v))


def support_mask(grid: DyadicGrid) -> np.ndarray:
    """All cells on the torus; the middle half of each axis with zero extension."""
    if grid.torus:
        return np.ones(grid.spatial_shape, dtype=bool)
    axis = np.arange(grid.side)
    inside = (axis >= grid.side // 4) & (axis < (3 * grid.side) // 4)
    mask = inside
    for _ in range(grid.d - 1):
        mask = np.multiply.outer(mask, inside)
    return mask


def check_support(field: MatrixField) -> None:
    """Raise InvalidConfig if a zero-extension field has mass outside the middle half."""
    outside = field.values[~support_mask(field.grid)]
    if outside.size and np.any(outside != 0):
        raise InvalidConfig(
            "zero-extension field must be supported in the middle half of the cube",
            cells=int(np.count_nonzero(np.any(outside != 0, axis=(-2, -1)))),
        )


def _spikes(rng, grid: DyadicGrid, mask: np.ndarray, count: int, weight: float) -> np.ndarray:
    values = np.zeros(grid.shape, dtype=np.complex128)
    allowed = np.flatnonzero(mask.ravel())
    chosen = rng.choice(allowed, size=min(count, len(allowed)), replace=False)
    for flat in sorted(chosen):
        cell = np.unravel_index(flat, grid.spatial_shape)
        values[cell] = weight * rng.uniform(0.5, 1.5) * _rank_one(rng, grid.n)
    return values


def generate_field(grid: DyadicGrid, generator: str, rng: np.random.Generator) -> MatrixField:
    mask = support_mask(grid)
    shape = grid.spatial_shape
    if generator == "random-psd":
        values = _random_psd(rng, shape, grid.n)
    elif generator == "sparse-spike":
        values = _spikes(rng, grid, mask, 1 + int(rng.integers(3)), grid.num_cells / 4)
    elif generator == "smooth-plus-spike":
        coords = np.meshgrid(*[(np.arange(grid.side) + 0.5) / grid.side] * grid.d, indexing="ij")
        profile = np.ones(shape)
        for x in coords:
            profile = profile * (1 + 0.5 * np.cos(2 * np.pi * x + rng.uniform(0, 2 * np.pi)))
        base = _random_psd(rng, (), grid.n)
        base /= max(np.trace(base).real, 1e-12)
        values = profile[..., None, None] * base + _spikes(rng, grid, mask, 1, grid.num_cells / 8)
    elif generator == "scalar":
        values = rng.exponential(size=shape)[..., None, None] * np.eye(grid.n)
    else:
        raise InvalidConfig(f"unknown generator {generator!r}")
    values = np.where(mask[..., None, None], values, 0.0)
    return MatrixField(grid, _hermitian(values))


def make_signs(policy: str, K: int, rng: np.random.Generator) -> SignSequence:
    levels = range(K + 1)
    if policy == "all-ones":
        return SignSequence.ones(levels)
    if policy == "random-signs":
        return SignSequence.random_signs(levels, rng)
    if policy == "random-uniform":
        return SignSequence.random_uniform(levels, rng)
    raise InvalidConfig(f"unknown sign policy {policy!r}")


def lambda_grid(f: MatrixField, K: int) -> tuple:
    """{2^{-j}‖f‖_∞ : j = 0..K+2} ∪ {‖f‖₁}, descending."""
    top = field_lp_norm(f, math.inf)
    mass = field_lp_norm(f, 1)
    values = {top * 2.0**-j for j in range(K + 3)} | {mass}
    chosen = sorted((v for v in values if v > 0), reverse=True)
    return tuple(chosen) if chosen else (1.0,)


def build_instance(spec: EnsembleSpec, K: int, i: int, index: int) -> Instance:
    rng = instance_rng(spec, K, i)
    f = generate_field(spec.grid(K), spec.generator, rng)
    nu = make_signs(spec.signs, K, rng)
    lambdas = (float(spec.lam),) if spec.lambda_policy == "fixed" else lambda_grid(f, K)
    return Instance(index=index, K=K, field=f, nu=nu, lambdas=lambdas)


def make_instances(spec: EnsembleSpec) -> list[Instance]:
    return [build_instance(spec, K, i, index) for K, i, index in spec.tasks()]
