"""
二進網格與矩陣場 (Dyadic Grid and Matrix Fields)

The discretized ambient space: matrix-valued fields on the unit torus (or the
unit cube with zero extension) sampled on the finest dyadic cells, together
with the averaging operators that act on them.

Cell coordinates are integers in {0, ..., 2^K - 1}^d. A field stores its
values as a read-only complex128 array of shape (2^K,)*d + (n, n).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.fft

from errors import (
    DimensionMismatch,
    InvalidConfig,
    InvalidExponent,
    LevelOrderViolation,
    LevelOutOfRange,
)
from spectral_core import adjoint, as_matrix, singular_values

BOUNDARIES = ("torus", "zero")
SUPPORTED_DIMS = (1, 2)


# ===== 網格 (Grid) =====

@dataclass(frozen=True)
class DyadicGrid:
    d: int
    K: int
    n: int = 1
    boundary: str = "torus"

    def __post_init__(self):
        if self.d not in SUPPORTED_DIMS:
            raise InvalidConfig(f"dimension d={self.d} unsupported (allowed: 1, 2)")
        if not isinstance(self.K, int) or self.K < 0:
            raise InvalidConfig(f"finest level K must be a non-negative integer, got {self.K!r}")
        if not isinstance(self.n, int) or self.n < 1:
            raise InvalidConfig(f"matrix dimension n must be a positive integer, got {self.n!r}")
        if self.boundary not in BOUNDARIES:
            raise InvalidConfig(f"boundary must be one of {BOUNDARIES}, got {self.boundary!r}")

    @property
    def side(self) -> int:
        return 2**self.K

    @property
    def num_cells(self) -> int:
        return self.side**self.d

    @property
    def cell_volume(self) -> float:
        return 2.0 ** (-self.K * self.d)

    @property
    def spatial_shape(self) -> tuple[int, ...]:
        return (self.side,) * self.d

    @property
    def shape(self) -> tuple[int, ...]:
        return self.spatial_shape + (self.n, self.n)

    @property
    def torus(self) -> bool:
        return self.boundary == "torus"

    def check_level(self, k: int, lowest: int = 0) -> int:
        if not isinstance(k, (int, np.integer)) or not lowest <= k <= self.K:
            raise LevelOutOfRange(f"level {k!r} outside [{lowest}, {self.K}]")
        return int(k)

    def cubes(self, k: int):
        self.check_level(k)
        for coords in itertools.product(range(2**k), repeat=self.d):
            yield DyadicCube(k, coords)

    def with_matdim(self, n: int) -> "DyadicGrid":
        return DyadicGrid(self.d, self.K, n, self.boundary)

    def to_dict(self) -> dict:
        return {"d": self.d, "K": self.K, "n": self.n, "boundary": self.boundary}


@dataclass(frozen=True)
class DyadicCube:
    """Q = ∏ [m_i 2^{-k}, (m_i + 1) 2^{-k})"""

    level: int
    coords: tuple[int, ...]

    def __post_init__(self):
        if self.level < 0:
            raise LevelOutOfRange(f"cube level {self.level} is negative")
        object.__setattr__(self, "coords", tuple(int(c) for c in self.coords))
        if any(not 0 <= c < 2**self.level for c in self.coords):
            raise LevelOutOfRange(f"coordinates {self.coords} outside level {self.level}")

    @property
    def side_length(self) -> float:
        return 2.0 ** (-self.level)

    def father(self) -> "DyadicCube":
        if self.level == 0:
            raise LevelOutOfRange("the level-0 cube has no dyadic father")
        return DyadicCube(self.level - 1, tuple(c // 2 for c in self.coords))

    def children(self) -> list["DyadicCube"]:
        spans = [(2 * c, 2 * c + 1) for c in self.coords]
        return [DyadicCube(self.level + 1, combo) for combo in itertools.product(*spans)]

    def cell_slices(self, grid: DyadicGrid) -> tuple[slice, ...]:
        grid.check_level(self.level)
        width = 2 ** (grid.K - self.level)
        return tuple(slice(c * width, (c + 1) * width) for c in self.coords)

    def dilate(self, factor: int, grid: DyadicGrid) -> list["DyadicCube"]:
        """
        Same-level cubes covering factor·Q (odd factor). Wraps around on the
        torus, clipped to the domain with zero extension.
        """
        if factor < 1 or factor % 2 == 0:
            raise InvalidConfig(f"dilation factor must be odd and positive, got {factor}")
        reach = (factor - 1) // 2
        count = 2**self.level
        found = set()
        for shift in itertools.product(range(-reach, reach + 1), repeat=len(self.coords)):
            target = [c + s for c, s in zip(self.coords, shift)]
            if grid.torus:
                target = [t % count for t in target]
            elif any(not 0 <= t < count for t in target):
                continue
            found.add(tuple(target))
        return [DyadicCube(self.level, c) for c in sorted(found)]


# ===== 矩陣場 (Matrix Field) =====

class MatrixField:
    """
    A piecewise-constant matrix-valued function on the finest cells.

    Values are immutable; arithmetic returns new fields. Non-Hermitian
    intermediates live in the same container.
    """

    __slots__ = ("grid", "values")

    def __init__(self, grid: DyadicGrid, values):
        arr = np.array(values, dtype=np.complex128)
        if arr.shape != grid.shape:
            raise DimensionMismatch(f"field values have shape {arr.shape}, grid expects {grid.shape}")
        arr.setflags(write=False)
        self.grid = grid
        self.values = arr

    @classmethod
    def _wrap(cls, grid: DyadicGrid, arr: np.ndarray) -> "MatrixField":
        field = cls.__new__(cls)
        arr = np.ascontiguousarray(arr, dtype=np.complex128)
        arr.setflags(write=False)
        field.grid = grid
        field.values = arr
        return field

    @classmethod
    def zeros(cls, grid: DyadicGrid) -> "MatrixField":
        return cls._wrap(grid, np.zeros(grid.shape, dtype=np.complex128))

    @classmethod
    def constant(cls, grid: DyadicGrid, matrix) -> "MatrixField":
        m = as_matrix(np.atleast_2d(matrix))
        if m.shape != (grid.n, grid.n):
            raise DimensionMismatch(f"constant value has shape {m.shape}, grid has n={grid.n}")
        return cls._wrap(grid, np.broadcast_to(m, grid.shape).copy())

    @classmethod
    def identity(cls, grid: DyadicGrid) -> "MatrixField":
        return cls.constant(grid, np.eye(grid.n))

    @classmethod
    def from_scalars(cls, grid: DyadicGrid, scalars) -> "MatrixField":
        """n = 1 field from an array of shape (2^K,)*d."""
        if grid.n != 1:
            raise DimensionMismatch("from_scalars needs a grid with n = 1")
        arr = np.asarray(scalars, dtype=np.complex128)
        if arr.shape != grid.spatial_shape:
            raise DimensionMismatch(f"scalar values have shape {arr.shape}, grid expects {grid.spatial_shape}")
        return cls._wrap(grid, arr[..., None, None].copy())

    @property
    def n(self) -> int:
        return self.grid.n

    def scalars(self) -> np.ndarray:
        """Real parts of the 1×1 cell values (n = 1 only)."""
        if self.n != 1:
            raise DimensionMismatch("scalars() needs n = 1")
        return self.values[..., 0, 0].real.copy()

    def _other(self, other) -> np.ndarray:
        if isinstance(other, MatrixField):
            if other.grid != self.grid:
                raise DimensionMismatch(f"grids differ: {self.grid} vs {other.grid}")
            return other.values
        raise TypeError(f"expected MatrixField, got {type(other).__name__}")

    def __add__(self, other):
        if not isinstance(other, MatrixField):
            return NotImplemented
        return MatrixField._wrap(self.grid, self.values + self._other(other))

    def __sub__(self, other):
        if not isinstance(other, MatrixField):
            return NotImplemented
        return MatrixField._wrap(self.grid, self.values - self._other(other))

    def __neg__(self):
        return MatrixField._wrap(self.grid, -self.values)

    def __mul__(self, scalar):
        if isinstance(scalar, MatrixField) or np.ndim(scalar) != 0:
            return NotImplemented
        return MatrixField._wrap(self.grid, self.values * scalar)

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        if isinstance(scalar, MatrixField) or np.ndim(scalar) != 0:
            return NotImplemented
        return MatrixField._wrap(self.grid, self.values / scalar)

    def __matmul__(self, other):
        """Cellwise matrix product."""
        if not isinstance(other, MatrixField):
            return NotImplemented
        return MatrixField._wrap(self.grid, self.values @ self._other(other))

    def adjoint(self) -> "MatrixField":
        return MatrixField._wrap(self.grid, adjoint(self.values))

    def compress(self, p: "MatrixField") -> "MatrixField":
        """p · self · p"""
        pv = self._other(p)
        return MatrixField._wrap(self.grid, pv @ self.values @ pv)

    def hermitian_part(self) -> "MatrixField":
        return MatrixField._wrap(self.grid, 0.5 * (self.values + adjoint(self.values)))

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.values))) if self.values.size else 0.0

    def allclose(self, other: "MatrixField", atol: float = 1e-10) -> bool:
        return bool(np.max(np.abs(self.values - self._other(other)), initial=0.0) <= atol)

    def __repr__(self):
        g = self.grid
        return f"MatrixField(d={g.d}, K={g.K}, n={g.n}, boundary={g.boundary!r})"


# ===== 區塊平均 (Block averages) =====

def _block_means(values: np.ndarray, grid: DyadicGrid, k: int) -> np.ndarray:
    """Means over level-k cubes, shape (2^k,)*d + trailing."""
    width = 2 ** (grid.K - k)
    count = 2**k
    trailing = values.shape[grid.d:]
    split = []
    for _ in range(grid.d):
        split.extend((count, width))
    blocks = values.reshape(tuple(split) + trailing)
    return blocks.mean(axis=tuple(range(1, 2 * grid.d, 2)))


def _upsample(coarse: np.ndarray, grid: DyadicGrid, k: int) -> np.ndarray:
    """Repeat level-k values back onto the finest cells."""
    width = 2 ** (grid.K - k)
    out = coarse
    for axis in range(grid.d):
        out = np.repeat(out, width, axis=axis)
    return out


def level_values(f: MatrixField, k: int) -> np.ndarray:
    """Cube averages f_Q for Q ∈ 𝒬_k, shape (2^k,)*d + (n, n)."""
    f.grid.check_level(k)
    return _block_means(f.values, f.grid, k)


def from_level(grid: DyadicGrid, coarse: np.ndarray, k: int) -> MatrixField:
    return MatrixField._wrap(grid, _upsample(np.asarray(coarse), grid, k))


def cond_expectation(f: MatrixField, k: int) -> MatrixField:
    """E_k f: constant cube average on each Q ∈ 𝒬_k."""
    f.grid.check_level(k)
    if k == f.grid.K:
        return f
    return from_level(f.grid, _block_means(f.values, f.grid, k), k)


def martingale_difference(f: MatrixField, k: int) -> MatrixField:
    """df_k = E_k f - E_{k-1} f"""
    f.grid.check_level(k, lowest=1)
    return cond_expectation(f, k) - cond_expectation(f, k - 1)


# ===== 離散幾何 (Discrete geometry) =====

def _offset_box(grid_key: tuple) -> np.ndarray:
    d, K, boundary = grid_key
    side = 2**K
    if boundary == "torus":
        axis = ((np.arange(side) + side // 2) % side) - side // 2
    else:
        axis = np.arange(-(side - 1), side)
    mesh = np.meshgrid(*([axis] * d), indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=-1)


def _minimal_image(offsets: np.ndarray, side: int) -> np.ndarray:
    return ((offsets + side // 2) % side) - side // 2


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr)
    arr.setflags(write=False)
    return arr


@lru_cache(maxsize=None)
def _ball(d: int, K: int, k: int, boundary: str) -> np.ndarray:
    box = _offset_box((d, K, boundary))
    radius = 2 ** (K - k)
    return _frozen(box[np.sum(box * box, axis=1) < radius * radius])


@lru_cache(maxsize=None)
def _sphere(d: int, K: int, k: int, boundary: str) -> np.ndarray:
    ball = _ball(d, K, k, boundary)
    radius = 2 ** (K - k)
    side = 2**K
    on_edge = np.zeros(len(ball), dtype=bool)
    for axis in range(d):
        for step in (-1, 1):
            neighbour = ball.copy()
            neighbour[:, axis] += step
            if boundary == "torus":
                neighbour = _minimal_image(neighbour, side)
            on_edge |= np.sum(neighbour * neighbour, axis=1) >= radius * radius
    return _frozen(ball[on_edge])


@lru_cache(maxsize=None)
def _annulus(d: int, K: int, j: int, m: int, boundary: str) -> np.ndarray:
    box = _offset_box((d, K, boundary))
    radius = 2 ** (K - j)
    width = math.sqrt(d) * 2 ** (K - m)
    norms = np.sqrt(np.sum(box * box, axis=1).astype(float))
    return _frozen(box[np.abs(norms - radius) <= width])


def ball_offsets(grid: DyadicGrid, k: int) -> np.ndarray:
    """Cell offsets o with |o|·2^{-K} < 2^{-k} (minimal images on the torus)."""
    grid.check_level(k)
    return _ball(grid.d, grid.K, k, grid.boundary)


def sphere_offsets(grid: DyadicGrid, k: int) -> np.ndarray:
    """Ball offsets with an axis neighbour outside the ball."""
    grid.check_level(k)
    return _sphere(grid.d, grid.K, k, grid.boundary)


def annulus_offsets(grid: DyadicGrid, j: int, m: int) -> np.ndarray:
    """I_{j,m}: offsets within √d·2^{-m} of the sphere of radius 2^{-j} (closed)."""
    _check_order(grid, j, m)
    return _annulus(grid.d, grid.K, j, m, grid.boundary)


def ball_volume(grid: DyadicGrid, k: int) -> int:
    """|B_k| counted in cells."""
    return len(ball_offsets(grid, k))


def _check_order(grid: DyadicGrid, k: int, n: int) -> None:
    grid.check_level(k)
    grid.check_level(n)
    if k >= n:
        raise LevelOrderViolation(f"need k < n, got k={k}, n={n}")


# ===== 相關運算 (Correlation) =====

def _correlate(values: np.ndarray, grid: DyadicGrid, offsets: np.ndarray, weight: float) -> np.ndarray:
    """out[x] = weight · Σ_{o ∈ offsets} values[x + o] (zero outside the domain in zero mode)."""
    axes = tuple(range(grid.d))
    side = grid.side
    if len(offsets) == 0:
        return np.zeros_like(values)
    if len(offsets) == 1 and not np.any(offsets):
        return values * weight
    if grid.torus and len(offsets) == grid.num_cells:
        total = values.sum(axis=axes, keepdims=True)
        return np.broadcast_to(total * weight, values.shape).copy()

    period = side if grid.torus else 2 * side
    kernel = np.zeros((period,) * grid.d)
    np.add.at(kernel, tuple((offsets % period).T), weight)
    spectrum = np.conj(scipy.fft.fftn(kernel))
    spectrum = spectrum.reshape(spectrum.shape + (1,) * (values.ndim - grid.d))
    if grid.torus:
        padded = values
    else:
        padded = np.zeros((period,) * grid.d + values.shape[grid.d:], dtype=np.complex128)
        padded[(slice(0, side),) * grid.d] = values
    out = scipy.fft.ifftn(scipy.fft.fftn(padded, axes=axes) * spectrum, axes=axes)
    return out[(slice(0, side),) * grid.d]


def ball_average(f: MatrixField, k: int) -> MatrixField:
    """M_k f(x) = (1/|B_k|) Σ_{y ∈ x + B_k} f(y)"""
    offsets = ball_offsets(f.grid, k)
    return MatrixField._wrap(f.grid, _correlate(f.values, f.grid, offsets, 1.0 / len(offsets)))


def _phase_masks(grid: DyadicGrid, k: int, n: int):
    """
    For each phase a ∈ [0, L)^d (L = 2^{K-n}) the ball offsets lying in a
    level-n cube that also holds a sphere cell, relative to the cube of x.
    """
    ball = ball_offsets(grid, k)
    sphere = sphere_offsets(grid, k)
    width = 2 ** (grid.K - n)
    count = 2**n
    for phase in itertools.product(range(width), repeat=grid.d):
        a = np.asarray(phase)
        ball_cube = np.floor_divide(a + ball, width)
        sphere_cube = np.floor_divide(a + sphere, width)
        if grid.torus:
            ball_cube %= count
            sphere_cube %= count
        keep = np.isin(_cube_codes(ball_cube, count), _cube_codes(sphere_cube, count))
        yield phase, ball[keep]


def _cube_codes(cubes: np.ndarray, count: int) -> np.ndarray:
    """Integer key per relative cube index; indices lie in [-count, 2·count)."""
    base = 4 * count
    codes = np.zeros(len(cubes), dtype=np.int64)
    for axis in range(cubes.shape[1]):
        codes = codes * base + (cubes[:, axis] + 2 * count)
    return codes


def truncated_average(u: MatrixField, k: int, n: int) -> MatrixField:
    """
    M_{k,n} u(x): (1/|B_k|) times the sum of u over the part of x + B_k lying
    in level-n cubes that meet the discrete sphere of x + B_k.
    """
    grid = u.grid
    _check_order(grid, k, n)
    weight = 1.0 / ball_volume(grid, k)
    width = 2 ** (grid.K - n)
    out = np.zeros_like(u.values)
    for phase, offsets in _phase_masks(grid, k, n):
        picked = tuple(slice(p, None, width) for p in phase)
        out[picked] = _correlate(u.values, grid, offsets, weight)[picked]
    return MatrixField._wrap(grid, out)


def tilde_average(v: MatrixField, j: int, m: int) -> MatrixField:
    """M̃_{j,m} v = (1/|B_j|) χ_{I_{j,m}} ∗ v"""
    grid = v.grid
    offsets = annulus_offsets(grid, j, m)
    weight = 1.0 / ball_volume(grid, j)
    return MatrixField._wrap(grid, _correlate(v.values, grid, offsets, weight))


# ===== 跡與範數 (Trace and norms) =====

def tensor_trace(f: MatrixField):
    """φ(f) = Σ_cells vol · Tr f(cell); real when the imaginary part vanishes."""
    total = complex(np.trace(f.values, axis1=-2, axis2=-1).sum()) * f.grid.cell_volume
    if abs(total.imag) <= 1e-12 * max(1.0, abs(total.real)):
        return total.real
    return total


def inner_product(f: MatrixField, g: MatrixField):
    """φ(f* g)"""
    return tensor_trace(f.adjoint() @ g)


def field_lp_norm(f: MatrixField, p) -> float:
    p = float(p)
    if math.isnan(p) or p < 1:
        raise InvalidExponent(f"exponent must satisfy p >= 1 or p = inf, got {p}")
    s = singular_values(f.values)
    if math.isinf(p):
        return float(np.max(s, initial=0.0))
    return float((f.grid.cell_volume * np.sum(s**p)) ** (1.0 / p))


def field_distribution(f: MatrixField, lam: float) -> float:
    """φ(χ_{(λ,∞)}(|f|))"""
    s = singular_values(f.values)
    return float(f.grid.cell_volume * np.count_nonzero(s > lam))


def field_weak_l1(f: MatrixField) -> float:
    """sup_λ λ·φ(χ_{(λ,∞)}(|f|)), attained in the limit at singular-value breakpoints."""
    s = np.sort(singular_values(f.values).ravel())[::-1]
    if s.size == 0:
        return 0.0
    ranks = np.arange(1, s.size + 1)
    return float(f.grid.cell_volume * np.max(ranks * s))
