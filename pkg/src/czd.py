"""
Cuculescu 投影與 CZ 分解 (Cuculescu Projections and CZ Decomposition)

Noncommutative stopping times for a positive matrix field, the ζ projection
built from 5Q dilations, the decomposition f = g + Σ_n b_n and the
diagonal/off-diagonal regrouping of the bad part.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from dyadic_field import (
    DyadicGrid,
    MatrixField,
    ball_average,
    cond_expectation,
    field_lp_norm,
    from_level,
    level_values,
    tensor_trace,
)
from errors import InvalidThreshold, NonPositiveField
from spectral_core import (
    HERMITICITY_RTOL,
    Interval,
    hermiticity_residual,
    loewner_leq,
    loewner_residual,
    operator_norm,
    projection_join,
    spectral_projection,
)
from utils.log import add_log

ROOT_EXCEEDS = -1
POSITIVITY_RTOL = 1e-9
DILATION = 5


def _check_lambda(lam: float) -> float:
    lam = float(lam)
    if not math.isfinite(lam) or lam <= 0:
        raise InvalidThreshold(f"λ must be a positive finite number, got {lam}")
    return lam


def check_positive(f: MatrixField) -> None:
    """Raise NonPositiveField unless every cell value is PSD (within tolerance)."""
    if hermiticity_residual(f.values) > HERMITICITY_RTOL:
        raise NonPositiveField("field is not self-adjoint")
    scale = f.max_abs()
    if scale == 0.0:
        return
    lowest = float(np.min(np.linalg.eigvalsh(f.hermitian_part().values)))
    if lowest < -POSITIVITY_RTOL * scale:
        raise NonPositiveField(f"field has eigenvalue {lowest:.3e} < 0", lowest=lowest)


def has_finite_support(x) -> bool:
    """Every matrix has finite trace support in finite dimensions."""
    return True


def m_lambda(f: MatrixField, lam: float) -> int:
    """
    Largest m ≤ K with E_k f ≤ λ for all k ≤ m, or ROOT_EXCEEDS when
    E_0 f ≰ λ already.
    """
    lam = _check_lambda(lam)
    check_positive(f)
    eye = np.eye(f.n)
    for k in range(f.grid.K + 1):
        if not loewner_leq(level_values(f, k), lam * eye):
            return k - 1 if k > 0 else ROOT_EXCEEDS
    return f.grid.K


# ===== Cuculescu 投影 (Cuculescu projections) =====

@dataclass(frozen=True)
class CuculescuFamily:
    """q_k decreasing, p_k = q_{k-1} - q_k, terminal q = q_K; all level-k measurable."""

    lam: float
    start_level: int
    q: dict
    p: dict
    terminal: MatrixField

    @property
    def grid(self) -> DyadicGrid:
        return self.terminal.grid

    @property
    def root_exceeded(self) -> bool:
        return self.start_level == ROOT_EXCEEDS

    def previous(self, k: int) -> MatrixField:
        """q_{k-1}, with q_{-1} the identity."""
        return MatrixField.identity(self.grid) if k == 0 else self.q[k - 1]

    def bad_measure(self) -> float:
        """φ(1 - q)"""
        return float(np.real(tensor_trace(MatrixField.identity(self.grid) - self.terminal)))


def cuculescu(f: MatrixField, lam: float) -> CuculescuFamily:
    """
    q_k = q_{k-1} - χ_{(λ,∞)}(q_{k-1} f_k q_{k-1}), starting from q_{-1} = 1.

    Kernel vectors of q_{k-1} f_k q_{k-1} inside range(q_{k-1}) stay in q_k.
    """
    lam = _check_lambda(lam)
    start = m_lambda(f, lam)
    grid = f.grid
    eye = np.eye(grid.n, dtype=np.complex128)
    prev = np.broadcast_to(eye, (1,) * grid.d + eye.shape)
    q, p = {}, {}
    for k in range(grid.K + 1):
        if k > 0:
            for axis in range(grid.d):
                prev = np.repeat(prev, 2, axis=axis)
        fk = level_values(f, k)
        compressed = prev @ fk @ prev
        stopped = spectral_projection(compressed, Interval.above(lam))
        if np.any(stopped):
            current = spectral_projection(prev - stopped, Interval.above(0.5))
        else:
            current = np.array(prev)
        q[k] = from_level(grid, current, k)
        p[k] = from_level(grid, prev - current, k)
        prev = current
    add_log("debug", f"cuculescu λ={lam:.6g} start={start} on {grid}", "czd")
    return CuculescuFamily(lam=lam, start_level=start, q=q, p=p, terminal=q[grid.K])


def cuculescu_residuals(family: CuculescuFamily, f: MatrixField) -> dict[str, float]:
    """Residuals of the six family invariants (0 means exact)."""
    grid = family.grid
    lam = family.lam
    ident = MatrixField.identity(grid)
    out = dict.fromkeys(("monotone", "measurable", "commutator", "bounded", "partition", "p_bound"), 0.0)
    total = MatrixField.zeros(grid)
    bound = 2**grid.d * lam
    for k in range(grid.K + 1):
        qk, qprev, pk = family.q[k], family.previous(k), family.p[k]
        fk = cond_expectation(f, k)
        out["monotone"] = max(out["monotone"], float(np.max(loewner_residual(qk.values, qprev.values))))
        out["measurable"] = max(out["measurable"], (cond_expectation(qk, k) - qk).max_abs())
        compressed = fk.compress(qprev).values
        size = max(lam, float(np.max(operator_norm(compressed))))
        commutator = qk.values @ compressed - compressed @ qk.values
        out["commutator"] = max(out["commutator"], float(np.max(np.abs(commutator))) / size)
        lhs = fk.compress(qk).values
        out["bounded"] = max(out["bounded"], float(np.max(loewner_residual(lhs, lam * qk.values))) / lam)
        if k >= 1 or not family.root_exceeded:
            peak = field_lp_norm(fk.compress(pk), math.inf)
            out["p_bound"] = max(out["p_bound"], max(0.0, peak - bound) / lam)
        total = total + pk
    out["partition"] = (total + family.terminal - ident).max_abs()
    return out


# ===== ζ 投影 (ζ projection) =====

def _shift(arr: np.ndarray, shift: tuple[int, ...], torus: bool) -> np.ndarray:
    """out[i] = arr[i + shift], zero-filled outside the domain unless torus."""
    if torus:
        return np.roll(arr, tuple(-s for s in shift), axis=tuple(range(len(shift))))
    out = np.zeros_like(arr)
    src, dst = [], []
    for s, size in zip(shift, arr.shape):
        if abs(s) >= size:
            return out
        src.append(slice(max(s, 0), size + min(s, 0)))
        dst.append(slice(max(-s, 0), size - max(s, 0)))
    out[tuple(dst)] = arr[tuple(src)]
    return out


def _dilation_shifts(d: int):
    reach = (DILATION - 1) // 2
    return list(itertools.product(range(-reach, reach + 1), repeat=d))


def zeta(family: CuculescuFamily) -> MatrixField:
    """ζ = 1 - ⋁_{n, Q ∈ 𝒬_n} p_Q χ_{5Q}, evaluated cellwise."""
    grid = family.grid
    joined = np.zeros((1,) * grid.d + (grid.n, grid.n), dtype=np.complex128)
    for k in range(grid.K + 1):
        if k > 0:
            for axis in range(grid.d):
                joined = np.repeat(joined, 2, axis=axis)
        pk = level_values(family.p[k], k)
        if not np.any(np.abs(pk) > 1e-12):
            continue
        shifted = [_shift(pk, s, grid.torus) for s in _dilation_shifts(grid.d)]
        joined = projection_join([joined] + shifted)
    eye = np.eye(grid.n, dtype=np.complex128)
    return from_level(grid, eye - joined, grid.K)


# ===== CZ 分解 (CZ decomposition) =====

@dataclass(frozen=True)
class CZDecomposition:
    """
    g = q f q + Σ_n p_n f_n p_n and b_n = p_n(f - f_n)q_n + q_{n-1}(f - f_n)p_n,
    with the two summands of each b_n kept separately.
    """

    f: MatrixField
    lam: float
    family: CuculescuFamily
    zeta: MatrixField
    g: MatrixField
    b_left: dict
    b_right: dict

    @property
    def grid(self) -> DyadicGrid:
        return self.f.grid

    @property
    def levels(self) -> list[int]:
        return sorted(self.b_left)

    @property
    def b_parts(self) -> dict:
        return {n: self.b_left[n] + self.b_right[n] for n in self.levels}

    def b_total(self) -> MatrixField:
        total = MatrixField.zeros(self.grid)
        for part in self.b_parts.values():
            total = total + part
        return total

    @property
    def diagonal(self) -> dict:
        return diag_offdiag_split(self)[0]

    @property
    def offdiag(self) -> dict:
        return diag_offdiag_split(self)[1]

    def active_levels(self, tol: float = 1e-12) -> list[int]:
        """Levels whose p_n is not identically zero."""
        return [n for n in self.levels if self.family.p[n].max_abs() > tol]

    def scale(self) -> float:
        return max(self.lam, field_lp_norm(self.f, math.inf))


def cz_decompose(f: MatrixField, lam: float) -> CZDecomposition:
    family = cuculescu(f, lam)
    grid = f.grid
    q = family.terminal
    g = f.compress(q)
    b_left, b_right = {}, {}
    for n in range(grid.K + 1):
        pn, qn, qprev = family.p[n], family.q[n], family.previous(n)
        fn = cond_expectation(f, n)
        g = g + fn.compress(pn)
        residual = f - fn
        b_left[n] = pn @ residual @ qn
        b_right[n] = qprev @ residual @ pn
    dec = CZDecomposition(f=f, lam=family.lam, family=family, zeta=zeta(family), g=g, b_left=b_left, b_right=b_right)
    add_log("info", f"decomposed field at λ={family.lam:.6g}, {len(dec.active_levels())} active levels", "czd")
    return dec


def diag_offdiag_split(dec: CZDecomposition) -> tuple[dict, dict]:
    """b_{d,n} = p_n(f - f_n)p_n and b_{off,n} = p_n(f - f_n)q_n + q_n(f - f_n)p_n."""
    diagonal, offdiag = {}, {}
    for n in dec.levels:
        pn, qn = dec.family.p[n], dec.family.q[n]
        residual = dec.f - cond_expectation(dec.f, n)
        diagonal[n] = residual.compress(pn)
        offdiag[n] = pn @ residual @ qn + qn @ residual @ pn
    return diagonal, offdiag


def termwise_residual(dec: CZDecomposition) -> float:
    """max_n ‖b_n - (p_n f q_n + q_{n-1} f p_n - q_{n-1} f_n p_n)‖, relative to scale."""
    worst = 0.0
    for n, part in dec.b_parts.items():
        pn, qn, qprev = dec.family.p[n], dec.family.q[n], dec.family.previous(n)
        fn = cond_expectation(dec.f, n)
        expanded = pn @ dec.f @ qn + qprev @ dec.f @ pn - qprev @ fn @ pn
        worst = max(worst, (part - expanded).max_abs())
    return worst / dec.scale()


def reconstruction_residual(dec: CZDecomposition) -> float:
    """‖f - g - Σ b_n‖₁ / ‖f‖₁ (absolute when f = 0)."""
    gap = field_lp_norm(dec.f - dec.g - dec.b_total(), 1)
    norm = field_lp_norm(dec.f, 1)
    return gap / norm if norm > 0 else gap


# ===== 消去條件 (Cancellation) =====

@dataclass(frozen=True)
class CancellationReport:
    mean_residual: float
    pairwise_residual: float
    average_residual: float
    scale: float

    def worst(self) -> float:
        return max(self.mean_residual, self.pairwise_residual, self.average_residual)

    def to_dict(self) -> dict:
        return {
            "mean_residual": self.mean_residual,
            "pairwise_residual": self.pairwise_residual,
            "average_residual": self.average_residual,
            "scale": self.scale,
        }


PAIR_CHUNK = 1 << 21


def cube_view(values: np.ndarray, grid: DyadicGrid, n: int) -> np.ndarray:
    """Regroup cell values as (cube index..., cell within cube, n, n) for level-n cubes."""
    side = 2 ** (grid.K - n)
    split = []
    for _ in range(grid.d):
        split += [2**n, side]
    blocks = values.reshape(tuple(split) + values.shape[-2:])
    order = [2 * a for a in range(grid.d)] + [2 * a + 1 for a in range(grid.d)]
    blocks = blocks.transpose(order + [2 * grid.d, 2 * grid.d + 1])
    return blocks.reshape((2**n,) * grid.d + (side**grid.d,) + values.shape[-2:])


def _pairwise_residual(dec: CZDecomposition) -> float:
    """max over n, x and y ∈ 5Q_{x,n} of ‖ζ(x) b_n(y) ζ(x)‖_F, pair by pair."""
    grid = dec.grid
    worst = 0.0
    for n, part in dec.b_parts.items():
        if part.max_abs() == 0.0:
            continue
        z = cube_view(dec.zeta.values, grid, n)
        cells = z.shape[grid.d]
        z = z.reshape((-1, cells, grid.n, grid.n))[:, :, None]
        b = cube_view(part.values, grid, n)
        chunk = max(1, PAIR_CHUNK // (z.shape[0] * cells * grid.n * grid.n))
        for s in _dilation_shifts(grid.d):
            near = _shift(b, s, grid.torus).reshape((-1, cells, grid.n, grid.n))
            live = np.flatnonzero(np.any(near != 0, axis=(0, 2, 3)))
            for start in range(0, live.size, chunk):
                ys = near[:, live[start:start + chunk]][:, None]
                pairs = z @ ys @ z
                worst = max(worst, float(np.max(np.linalg.norm(pairs, axis=(-2, -1)))))
    return worst


def cancellation_check(dec: CZDecomposition) -> CancellationReport:
    """
    Residuals of ∫_Q b_n = 0 (Q ∈ 𝒬_n), of ζ(x) b_n(y) ζ(x) = 0 for
    y ∈ 5Q_{x,n}, and of ζ M_k b_n ζ = ζ E_k b_n ζ = 0 for k ≥ n; all
    divided by max(λ, ‖f‖_∞).
    """
    grid = dec.grid
    scale = dec.scale()
    mean = 0.0
    averaged = 0.0
    for n, part in dec.b_parts.items():
        if part.max_abs() == 0.0:
            continue
        mean = max(mean, float(np.max(operator_norm(level_values(part, n)))))
        for k in range(n, grid.K + 1):
            for image in (ball_average(part, k), cond_expectation(part, k)):
                averaged = max(averaged, image.compress(dec.zeta).max_abs())
    return CancellationReport(
        mean_residual=mean / scale,
        pairwise_residual=_pairwise_residual(dec) / scale,
        average_residual=averaged / scale,
        scale=scale,
    )


def coarse_average_sides(dec: CZDecomposition, n: int) -> tuple[float, float]:
    """
    (Σ_{k<n} ‖M_k b_n‖₁, (λ φ(p_n))^{1/2} (φ(f p_n))^{1/2}) with
    φ(f p_n) taken as the real trace of f·p_n.
    """
    part = dec.b_parts[n]
    lhs = sum(field_lp_norm(ball_average(part, k), 1) for k in range(n))
    pn = dec.family.p[n]
    mass = max(0.0, float(np.real(tensor_trace(pn))))
    weight = max(0.0, float(np.real(tensor_trace(dec.f @ pn))))
    return lhs, math.sqrt(dec.lam * mass) * math.sqrt(weight)


# ===== 摘要與匯出 (Summary and dump) =====

def residual_summary(dec: CZDecomposition) -> dict:
    """Invariant residuals and the headline bounds with pass flags."""
    grid = dec.grid
    f_l1 = field_lp_norm(dec.f, 1)
    family = dec.family
    bad = family.bad_measure()
    zeta_measure = float(np.real(tensor_trace(MatrixField.identity(grid) - dec.zeta)))
    g_l1 = field_lp_norm(dec.g, 1)
    g_linf = field_lp_norm(dec.g, math.inf)
    cuculescu_bound = f_l1 / dec.lam
    zeta_bound = DILATION**grid.d * f_l1 / dec.lam
    g_linf_bound = 2**grid.d * dec.lam
    margin = 1 + 1e-9
    b_is_zero = all(part.max_abs() <= 1e-12 * dec.scale() for part in dec.b_parts.values())
    return {
        "lambda": dec.lam,
        "start_level": family.start_level,
        "root_exceeded": family.root_exceeded,
        "cuculescu": cuculescu_residuals(family, dec.f),
        "reconstruction": reconstruction_residual(dec),
        "termwise": termwise_residual(dec),
        "cancellation": cancellation_check(dec).to_dict(),
        "bounds": {
            "bad_measure": {"value": bad, "bound": cuculescu_bound, "pass": bad <= cuculescu_bound * margin + 1e-12},
            "zeta_measure": {"value": zeta_measure, "bound": zeta_bound, "pass": zeta_measure <= zeta_bound * margin + 1e-12},
            "g_linf": {"value": g_linf, "bound": g_linf_bound, "pass": g_linf <= g_linf_bound * margin},
            "g_l1": {"value": g_l1, "bound": f_l1, "pass": g_l1 <= f_l1 * margin + 1e-12},
        },
        "b_is_zero": b_is_zero,
        "active_levels": dec.active_levels(),
    }


def to_components(dec: CZDecomposition) -> tuple[dict, dict]:
    fields = {"f": dec.f, "g": dec.g, "zeta": dec.zeta, "terminal": dec.family.terminal}
    for k in dec.levels:
        fields[f"q_{k}"] = dec.family.q[k]
        fields[f"p_{k}"] = dec.family.p[k]
        fields[f"b_left_{k}"] = dec.b_left[k]
        fields[f"b_right_{k}"] = dec.b_right[k]
    manifest = {
        "lambda": dec.lam,
        "start_level": dec.family.start_level,
        "grid": dec.grid.to_dict(),
        "levels": dec.levels,
    }
    return manifest, fields


def from_components(manifest: dict, fields: dict) -> CZDecomposition:
    levels = [int(k) for k in manifest["levels"]]
    family = CuculescuFamily(
        lam=float(manifest["lambda"]),
        start_level=int(manifest["start_level"]),
        q={k: fields[f"q_{k}"] for k in levels},
        p={k: fields[f"p_{k}"] for k in levels},
        terminal=fields["terminal"],
    )
    return CZDecomposition(
        f=fields["f"],
        lam=family.lam,
        family=family,
        zeta=fields["zeta"],
        g=fields["g"],
        b_left={k: fields[f"b_left_{k}"] for k in levels},
        b_right={k: fields[f"b_right_{k}"] for k in levels},
    )
