"""
譜計算核心 (Spectral Core)

Hermitian functional calculus and trace-norm primitives on M_n(C).

Every function accepts a single matrix ``(n, n)`` or a stack ``(..., n, n)``
and acts matrix-by-matrix over the leading axes, so a whole field of cell
values goes through one call. The trace is the unnormalized ``Tr``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from errors import DimensionMismatch, InvalidExponent, NonHermitianInput

HERMITICITY_RTOL = 1e-9
PROJECTION_TOL = 1e-8
SNAP_RTOL = 1e-12
RANK_CUTOFF = 1e-10
LOEWNER_RTOL = 1e-9


def as_matrix(x) -> np.ndarray:
    """Coerce to a complex128 array whose last two axes are square."""
    a = np.asarray(x, dtype=np.complex128)
    if a.ndim < 2 or a.shape[-1] != a.shape[-2]:
        raise DimensionMismatch(f"expected square matrices, got shape {a.shape}")
    return a


def adjoint(x) -> np.ndarray:
    return np.conj(np.swapaxes(np.asarray(x), -1, -2))


def identity_like(x) -> np.ndarray:
    a = np.asarray(x)
    return np.broadcast_to(np.eye(a.shape[-1], dtype=np.complex128), a.shape).copy()


def hermiticity_residual(x) -> float:
    """‖x - x*‖ relative to ‖x‖ in operator norm, max over a stack (0 for the zero matrix)."""
    a = as_matrix(x)
    if a.size == 0:
        return 0.0
    scale = float(np.max(operator_norm(a)))
    if scale == 0.0:
        return 0.0
    return float(np.max(operator_norm(a - adjoint(a)))) / scale


def check_hermitian(x) -> np.ndarray:
    """Validate Hermiticity and return the exactly symmetrized matrix."""
    a = as_matrix(x)
    residual = hermiticity_residual(a)
    if residual > HERMITICITY_RTOL:
        raise NonHermitianInput(
            f"hermiticity residual {residual:.3e} exceeds {HERMITICITY_RTOL:.0e}",
            residual=residual,
        )
    return 0.5 * (a + adjoint(a))


@dataclass(frozen=True)
class SpectralDecomposition:
    """Ascending eigenvalues and a unitary frame of eigenvectors (columns)."""

    eigenvalues: np.ndarray
    frame: np.ndarray

    def apply(self, fn) -> np.ndarray:
        """Functional calculus: frame · diag(fn(eigenvalues)) · frame*."""
        values = np.asarray(fn(self.eigenvalues))
        return (self.frame * values[..., None, :]) @ adjoint(self.frame)

    def reconstruct(self) -> np.ndarray:
        return self.apply(lambda w: w)

    def scale(self) -> np.ndarray:
        """Per-matrix spectral radius, shape (...)."""
        return np.max(np.abs(self.eigenvalues), axis=-1)


def eig_hermitian(x) -> SpectralDecomposition:
    h = check_hermitian(x)
    w, v = np.linalg.eigh(h)
    return SpectralDecomposition(eigenvalues=w, frame=v)


@dataclass(frozen=True)
class Interval:
    """A real interval with independently open/closed endpoints."""

    lower: float = -math.inf
    upper: float = math.inf
    lower_closed: bool = False
    upper_closed: bool = False

    @classmethod
    def everything(cls) -> "Interval":
        return cls()

    @classmethod
    def above(cls, threshold: float) -> "Interval":
        """(threshold, ∞)"""
        return cls(lower=float(threshold))

    @classmethod
    def left_open(cls, lower: float, upper: float) -> "Interval":
        """(lower, upper]"""
        return cls(lower=float(lower), upper=float(upper), upper_closed=True)

    @classmethod
    def closed(cls, lower: float, upper: float) -> "Interval":
        return cls(lower=float(lower), upper=float(upper), lower_closed=True, upper_closed=True)

    def contains(self, value: float) -> bool:
        if value < self.lower or value > self.upper:
            return False
        if value == self.lower and not self.lower_closed:
            return False
        if value == self.upper and not self.upper_closed:
            return False
        return True

    def complement(self) -> tuple["Interval", ...]:
        pieces = []
        if self.lower > -math.inf:
            pieces.append(Interval(upper=self.lower, upper_closed=not self.lower_closed))
        if self.upper < math.inf:
            pieces.append(Interval(lower=self.upper, lower_closed=not self.upper_closed))
        return tuple(pieces)

    def endpoint_scale(self) -> float:
        finite = [abs(e) for e in (self.lower, self.upper) if math.isfinite(e)]
        return max(finite, default=0.0)

    def mask(self, eigenvalues: np.ndarray, scale) -> np.ndarray:
        """
        Membership of each eigenvalue, snapping values within
        ``SNAP_RTOL * scale`` of an endpoint onto that endpoint.
        """
        w = np.asarray(eigenvalues, dtype=float)
        tol = SNAP_RTOL * np.asarray(scale, dtype=float)
        if tol.ndim:
            tol = tol[..., None]
        inside = np.ones(w.shape, dtype=bool)
        if math.isfinite(self.lower):
            at = np.abs(w - self.lower) <= tol
            inside &= np.where(at, self.lower_closed, w > self.lower)
        if math.isfinite(self.upper):
            at = np.abs(w - self.upper) <= tol
            inside &= np.where(at, self.upper_closed, w < self.upper)
        return inside


def spectral_projection(x, interval: Interval, decomposition: SpectralDecomposition | None = None) -> np.ndarray:
    """χ_I(x): sum of the eigenprojections of x with eigenvalue in I."""
    dec = decomposition if decomposition is not None else eig_hermitian(x)
    scale = np.maximum(dec.scale(), interval.endpoint_scale())
    inside = interval.mask(dec.eigenvalues, scale)
    p = dec.apply(lambda w: inside.astype(float))
    return 0.5 * (p + adjoint(p))


def is_projection(p, tol: float = PROJECTION_TOL) -> bool:
    a = as_matrix(p)
    if a.size == 0:
        return True
    if np.max(np.abs(a - adjoint(a))) > tol:
        return False
    return bool(np.max(np.abs(a @ a - a)) <= tol)


def psd_sqrt(x) -> np.ndarray:
    """Hermitian square root of a PSD matrix; tiny negative eigenvalues are clipped."""
    a = as_matrix(x)
    h = 0.5 * (a + adjoint(a))
    w, v = np.linalg.eigh(h)
    root = np.sqrt(np.clip(w, 0.0, None))
    return (v * root[..., None, :]) @ adjoint(v)


def modulus(x) -> np.ndarray:
    """|x| = (x* x)^{1/2}"""
    a = as_matrix(x)
    return psd_sqrt(adjoint(a) @ a)


def singular_values(x) -> np.ndarray:
    """Descending singular values, shape (..., n)."""
    return np.linalg.svd(as_matrix(x), compute_uv=False)


def operator_norm(x):
    s = singular_values(x)
    out = s[..., 0] if s.shape[-1] else np.zeros(s.shape[:-1])
    return float(out) if np.ndim(out) == 0 else out


def _check_exponent(p) -> float:
    p = float(p)
    if math.isnan(p) or p < 1:
        raise InvalidExponent(f"exponent must satisfy p >= 1 or p = inf, got {p}")
    return p


def schatten_norm(x, p):
    """‖x‖_p = (Tr |x|^p)^{1/p}; p = ∞ gives the largest singular value."""
    p = _check_exponent(p)
    s = singular_values(x)
    if math.isinf(p):
        out = np.max(s, axis=-1, initial=0.0)
    else:
        out = np.sum(s**p, axis=-1) ** (1.0 / p)
    return float(out) if np.ndim(out) == 0 else out


def distribution_at(x, lam: float):
    """Tr χ_{(λ,∞)}(|x|): number of singular values strictly above λ."""
    s = singular_values(x)
    out = np.count_nonzero(s > lam, axis=-1)
    return float(out) if np.ndim(out) == 0 else out.astype(float)


def loewner_residual(a, b) -> np.ndarray | float:
    """max(0, -λ_min(b - a)); zero exactly when a ≤ b."""
    a = as_matrix(a)
    b = as_matrix(b)
    if a.shape[-1] != b.shape[-1]:
        raise DimensionMismatch(f"matrix dimensions differ: {a.shape[-1]} vs {b.shape[-1]}")
    diff = b - a
    lowest = np.linalg.eigvalsh(0.5 * (diff + adjoint(diff)))[..., 0]
    out = np.maximum(0.0, -lowest)
    return float(out) if np.ndim(out) == 0 else out


def loewner_leq(a, b, tol: float | None = None) -> bool:
    """
    a ≤ b in Loewner order, for every matrix of a stack.

    Default slack is LOEWNER_RTOL · (1 + ‖b - a‖_∞).
    """
    a = as_matrix(a)
    b = as_matrix(b)
    residual = loewner_residual(a, b)
    if tol is None:
        tol = LOEWNER_RTOL * (1.0 + np.max(operator_norm(b - a), initial=0.0))
    return bool(np.all(np.asarray(residual) <= tol))


def _stack_projections(ps: Sequence) -> list[np.ndarray]:
    mats = [as_matrix(p) for p in ps]
    if not mats:
        raise DimensionMismatch("projection lattice operations need at least one projection")
    shape = mats[0].shape
    for m in mats[1:]:
        if m.shape != shape:
            raise DimensionMismatch(f"projection shapes differ: {shape} vs {m.shape}")
    return mats


def projection_join(ps: Sequence) -> np.ndarray:
    """Projection onto the span of the union of ranges (rank-revealing SVD)."""
    mats = _stack_projections(ps)
    if len(mats) == 1:
        return mats[0].copy()
    stacked = np.concatenate(mats, axis=-1)
    u, s, _ = np.linalg.svd(stacked, full_matrices=False)
    keep = (s > RANK_CUTOFF).astype(float)
    p = (u * keep[..., None, :]) @ adjoint(u)
    return 0.5 * (p + adjoint(p))


def projection_meet(ps: Sequence) -> np.ndarray:
    """Projection onto the intersection of ranges: 1 - ⋁(1 - p)."""
    mats = _stack_projections(ps)
    one = identity_like(mats[0])
    return one - projection_join([one - m for m in mats])
