"""
宣告驗證框架 (Claim Harness)

Every quantitative claim is a registered measurement: a function from one
ensemble instance to a list of ratios (measured left side over theoretical
right side, or a residual). A claim passes when every ratio is finite and
strictly below its ceiling and, for claims marked uniform, when the worst
ratio per K grows by less than the uniformity factor over its value at the
smallest K.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

import czd
import oracle
from dyadic_field import (
    DyadicCube,
    MatrixField,
    annulus_offsets,
    ball_average,
    cond_expectation,
    field_distribution,
    field_lp_norm,
    field_weak_l1,
    level_values,
    martingale_difference,
    tensor_trace,
    tilde_average,
    truncated_average,
)
from ensemble import EnsembleSpec, Instance, build_instance
from errors import InvalidConfig, InvalidExponent, LabError
from spectral_core import adjoint, loewner_residual, operator_norm
from transforms import (
    SignSequence,
    differential_transform_D,
    estimate_operator_norm,
    level_piece,
    three_way_split,
    transform_T,
)
from utils.log import add_log

LP_EXPONENTS = (1.5, 2.0, 3.0, 4.0)
TRUNCATION_EXPONENTS = (1.0, 2.0, math.inf)
UNIFORMITY_FACTOR = 2.0
EXACT = 1 + 1e-9
SCALE_FACTOR = 4.0
ORACLE_MAX_CELLS = 256
BMO_SAMPLES_PER_LEVEL = 2


@dataclass(frozen=True)
class Measurement:
    label: str
    ratio: float


def _ratio(num: float, den: float) -> float:
    if den > 0:
        return float(num) / float(den)
    return 0.0 if num == 0 else math.inf


def _lam_label(lam: float) -> str:
    return f"λ={lam:.6g}"


# ===== 實例上下文 (Instance context) =====

class InstanceContext:
    """Lazily computed quantities shared by the claims of one instance."""

    def __init__(self, instance: Instance):
        self.instance = instance
        self._cache: dict = {}

    def cached(self, key, build: Callable):
        if key not in self._cache:
            self._cache[key] = build()
        return self._cache[key]

    @property
    def f(self) -> MatrixField:
        return self.instance.field

    @property
    def grid(self):
        return self.f.grid

    @property
    def nu(self) -> SignSequence:
        return self.instance.nu

    @property
    def lambdas(self) -> tuple:
        return self.instance.lambdas

    def norm(self, p) -> float:
        return self.cached(("norm", p), lambda: field_lp_norm(self.f, p))

    def scale(self) -> float:
        return max(self.norm(math.inf), 1e-300)

    def decomposition(self, lam: float) -> czd.CZDecomposition:
        return self.cached(("dec", lam), lambda: czd.cz_decompose(self.f, lam))

    def cancellation(self, lam: float) -> czd.CancellationReport:
        return self.cached(("cancel", lam), lambda: czd.cancellation_check(self.decomposition(lam)))

    def split(self, lam: float):
        return self.cached(("split", lam), lambda: czd.diag_offdiag_split(self.decomposition(lam)))

    def Tf(self) -> MatrixField:
        return self.cached("Tf", lambda: transform_T(self.f, self.nu))

    def Df(self) -> MatrixField:
        return self.cached("Df", lambda: differential_transform_D(self.f, self.nu))

    def t_norm(self) -> float:
        """Power-iteration ‖T‖ on L2 over a scalar grid with the same geometry."""
        scalar = self.grid.with_matdim(1)
        return self.cached("t_norm", lambda: estimate_operator_norm(lambda x: transform_T(x, self.nu), scalar))

    def usable_lambdas(self) -> list[float]:
        """λ values with m_λ(f) ≥ 0."""
        return [lam for lam in self.lambdas if not self.decomposition(lam).family.root_exceeded]


# ===== 宣告註冊 (Claim registry) =====

@dataclass(frozen=True)
class Claim:
    name: str
    measure: Callable
    ceiling: float
    uniform: bool = False
    description: str = ""


CLAIMS: dict[str, Claim] = {}


def claim(name: str, ceiling: float, uniform: bool = False):
    """Register a measurement under a claim name."""

    def decorator(fn):
        doc = (fn.__doc__ or "").strip().splitlines()
        CLAIMS[name] = Claim(name, fn, ceiling, uniform, doc[0] if doc else "")
        return fn

    return decorator


# ----- Cuculescu 與 CZ 分解 -----

@claim("cuculescu_invariants", 1e-8)
def _cuculescu_invariants(ctx):
    """Largest residual of the six stopping-time invariants."""
    out = []
    for lam in ctx.lambdas:
        residuals = czd.cuculescu_residuals(ctx.decomposition(lam).family, ctx.f)
        out.append(Measurement(_lam_label(lam), max(residuals.values())))
    return out


@claim("cuculescu_maximal", EXACT)
def _cuculescu_maximal(ctx):
    """φ(1 - q) / (‖f‖₁/λ)."""
    return [
        Measurement(_lam_label(lam), _ratio(ctx.decomposition(lam).family.bad_measure(), ctx.norm(1) / lam))
        for lam in ctx.lambdas
    ]


@claim("reconstruction", 1e-9)
def _reconstruction(ctx):
    """f = g + Σ b_n, the termwise form of b_n, and b = b_d + b_off."""
    out = []
    for lam in ctx.lambdas:
        dec = ctx.decomposition(lam)
        diagonal, offdiag = ctx.split(lam)
        regrouped = MatrixField.zeros(ctx.grid)
        for n in dec.levels:
            regrouped = regrouped + diagonal[n] + offdiag[n]
        split_gap = (regrouped - dec.b_total()).max_abs() / dec.scale()
        worst = max(czd.reconstruction_residual(dec), czd.termwise_residual(dec), split_gap)
        out.append(Measurement(_lam_label(lam), worst))
    return out


@claim("good_l1", EXACT)
def _good_l1(ctx):
    """‖g‖₁ / ‖f‖₁."""
    return [
        Measurement(_lam_label(lam), _ratio(field_lp_norm(ctx.decomposition(lam).g, 1), ctx.norm(1)))
        for lam in ctx.lambdas
    ]


@claim("good_linf", EXACT)
def _good_linf(ctx):
    """‖g‖_∞ / (2^d λ), for λ with m_λ(f) ≥ 0."""
    bound = 2**ctx.grid.d
    return [
        Measurement(_lam_label(lam), _ratio(field_lp_norm(ctx.decomposition(lam).g, math.inf), bound * lam))
        for lam in ctx.usable_lambdas()
    ]


@claim("good_positive", 1e-9)
def _good_positive(ctx):
    """Most negative eigenvalue of g, relative to max(λ, ‖f‖_∞)."""
    out = []
    for lam in ctx.lambdas:
        dec = ctx.decomposition(lam)
        lowest = float(np.min(np.linalg.eigvalsh(dec.g.hermitian_part().values)))
        out.append(Measurement(_lam_label(lam), max(0.0, -lowest) / dec.scale()))
    return out


@claim("good_interpolation", EXACT)
def _good_interpolation(ctx):
    """‖g‖₂² / (‖g‖₁ ‖g‖_∞)."""
    out = []
    for lam in ctx.lambdas:
        g = ctx.decomposition(lam).g
        out.append(Measurement(_lam_label(lam), _ratio(field_lp_norm(g, 2) ** 2, field_lp_norm(g, 1) * field_lp_norm(g, math.inf))))
    return out


@claim("zeta_measure", EXACT)
def _zeta_measure(ctx):
    """φ(1 - ζ) / (5^d ‖f‖₁/λ)."""
    out = []
    for lam in ctx.lambdas:
        dec = ctx.decomposition(lam)
        measure = float(np.real(tensor_trace(MatrixField.identity(ctx.grid) - dec.zeta)))
        out.append(Measurement(_lam_label(lam), _ratio(measure, czd.DILATION**ctx.grid.d * ctx.norm(1) / lam)))
    return out


@claim("cancellation", 1e-8)
def _cancellation(ctx):
    """∫_Q b_n = 0 and ζ(x) b_n(y) ζ(x) = 0 for y ∈ 5Q_{x,n}."""
    out = []
    for lam in ctx.lambdas:
        report = ctx.cancellation(lam)
        out.append(Measurement(_lam_label(lam), max(report.mean_residual, report.pairwise_residual)))
    return out


@claim("zeta_averages", 1e-8)
def _zeta_averages(ctx):
    """ζ M_k b_n ζ = ζ E_k b_n ζ = 0 for k ≥ n."""
    return [Measurement(_lam_label(lam), ctx.cancellation(lam).average_residual) for lam in ctx.lambdas]


# ----- 壞部分估計 (Bad part) -----

def bad_part_l1(dec: czd.CZDecomposition) -> float:
    """Σ_n Σ_{k<n} ‖M_k b_n‖₁ / ‖f‖₁."""
    total = 0.0
    for n in dec.active_levels():
        part = dec.b_parts[n]
        total += sum(field_lp_norm(ball_average(part, k), 1) for k in range(n))
    return _ratio(total, field_lp_norm(dec.f, 1))


@claim("bad_part_l1", 100.0, uniform=True)
def _bad_part_l1(ctx):
    """Σ_n Σ_{k<n} ‖M_k b_n‖₁ / ‖f‖₁."""
    return [Measurement(_lam_label(lam), bad_part_l1(ctx.decomposition(lam))) for lam in ctx.usable_lambdas()]


@claim("coarse_averages", 100.0, uniform=True)
def _coarse_averages(ctx):
    """Σ_{k<n} ‖M_k b_n‖₁ / ((λ φ(p_n))^{1/2} (φ(f p_n))^{1/2})."""
    out = []
    for lam in ctx.usable_lambdas():
        dec = ctx.decomposition(lam)
        for n in dec.active_levels():
            if n == 0:
                continue
            lhs, rhs = czd.coarse_average_sides(dec, n)
            out.append(Measurement(f"{_lam_label(lam)},n={n}", _ratio(lhs, rhs)))
    return out


def diag_bad_l2(dec: czd.CZDecomposition, diagonal: dict, shift: int) -> float:
    """‖Σ_j M_j b_{d,shift+j}‖₂² · 2^shift / (λ ‖f‖₁)."""
    grid = dec.grid
    total = MatrixField.zeros(grid)
    for j in range(grid.K - shift + 1):
        total = total + ball_average(diagonal[shift + j], j)
    return _ratio(field_lp_norm(total, 2) ** 2 * 2.0**shift, dec.lam * field_lp_norm(dec.f, 1))


@claim("diag_bad_l2", 100.0, uniform=True)
def _diag_bad_l2(ctx):
    """‖Σ_j M_j b_{d,n+j}‖₂² · 2^n / (λ ‖f‖₁) per shift n ≥ 1."""
    out = []
    for lam in ctx.usable_lambdas():
        dec = ctx.decomposition(lam)
        diagonal, _ = ctx.split(lam)
        for shift in range(1, ctx.grid.K + 1):
            out.append(Measurement(f"{_lam_label(lam)},n={shift}", diag_bad_l2(dec, diagonal, shift)))
    return out


def kernel_sum(dec: czd.CZDecomposition, shift: int) -> float:
    """max_j ‖Σ_{i≥j} M̃_{j,shift+j} M̃_{i,shift+i}(p_{shift+i})‖_∞ · 2^shift."""
    grid = dec.grid
    top = grid.K - shift
    inner = {i: tilde_average(dec.family.p[shift + i], i, shift + i) for i in range(top + 1)}
    worst = 0.0
    for j in range(top + 1):
        total = MatrixField.zeros(grid)
        for i in range(j, top + 1):
            total = total + inner[i]
        worst = max(worst, field_lp_norm(tilde_average(total, j, shift + j), math.inf))
    return worst * 2.0**shift


@claim("kernel_sum", 100.0, uniform=True)
def _kernel_sum(ctx):
    """Pointwise kernel sum of smoothed averages of p, scaled by 2^n."""
    out = []
    for lam in ctx.usable_lambdas():
        dec = ctx.decomposition(lam)
        if not dec.active_levels():
            continue
        for shift in range(1, ctx.grid.K + 1):
            out.append(Measurement(f"{_lam_label(lam)},n={shift}", kernel_sum(dec, shift)))
    return out


@claim("diag_truncation", 1e-9)
def _diag_truncation(ctx):
    """‖M_j b_{d,m} - M_{j,m} b_{d,m}‖ for j < m, relative to scale."""
    out = []
    for lam in ctx.usable_lambdas():
        dec = ctx.decomposition(lam)
        diagonal, _ = ctx.split(lam)
        worst, where = 0.0, "none"
        for m in dec.active_levels():
            for j in range(m):
                gap = (ball_average(diagonal[m], j) - truncated_average(diagonal[m], j, m)).max_abs()
                if gap >= worst:
                    worst, where = gap, f"j={j},m={m}"
        out.append(Measurement(f"{_lam_label(lam)},{where}", worst / dec.scale()))
    return out


@claim("diag_domination", 0.5)
def _diag_domination(ctx):
    """Cells where M_{j,m}(p f_m p) ≰ M̃_{j,m}(p f_m p) (a count)."""
    out = []
    for lam in ctx.usable_lambdas():
        dec = ctx.decomposition(lam)
        violations = 0
        for m in dec.active_levels():
            positive = cond_expectation(dec.f, m).compress(dec.family.p[m])
            for j in range(m):
                low = truncated_average(positive, j, m).values
                high = tilde_average(positive, j, m).values
                slack = 1e-9 * (1.0 + np.max(operator_norm(high), initial=0.0))
                violations += int(np.count_nonzero(np.asarray(loewner_residual(low, high)) > slack))
        out.append(Measurement(_lam_label(lam), float(violations)))
    return out


def good_part_weak11(dec: czd.CZDecomposition, nu: SignSequence) -> dict:
    """The Chebyshev-Hölder chain for the good part, link by link."""
    g = dec.g
    tg = transform_T(g, nu)
    f_l1 = field_lp_norm(dec.f, 1)
    lam = dec.lam
    tg_l2 = field_lp_norm(tg, 2) ** 2
    g_l2 = field_lp_norm(g, 2) ** 2
    g_l1_linf = field_lp_norm(g, 1) * field_lp_norm(g, math.inf)
    chain = {
        "weak": _ratio(lam * field_distribution(tg, lam / 2), f_l1),
        "t_l2": _ratio(tg_l2 / lam**2, f_l1 / lam),
        "tg_l2": tg_l2,
        "g_l2": g_l2,
        "g_l1_linf": g_l1_linf,
    }
    chain["links"] = {
        "chebyshev": _ratio(chain["weak"], 4 * chain["t_l2"]),
        "l2": _ratio(tg_l2, g_l2),
        "holder": _ratio(g_l2, g_l1_linf),
        "bounds": _ratio(g_l1_linf, f_l1 * 2**dec.grid.d * lam),
    }
    return chain


@claim("good_part_weak11", 200.0, uniform=True)
def _good_part_weak11(ctx):
    """
    λ φ(χ_{(λ/2,∞)}(|Tg|)) / ‖f‖₁ and each link of the chain behind it:
    weak/(4 t_l2), ‖Tg‖₂²/‖g‖₂², ‖g‖₂²/(‖g‖₁‖g‖_∞), ‖g‖₁‖g‖_∞/(2^d λ ‖f‖₁).
    """
    out = []
    for lam in ctx.usable_lambdas():
        chain = good_part_weak11(ctx.decomposition(lam), ctx.nu)
        out.append(Measurement(_lam_label(lam), chain["weak"]))
        out.extend(Measurement(f"{_lam_label(lam)}:{link}", value) for link, value in chain["links"].items())
    return out


@claim("scale_covariance", 1e-9)
def _scale_covariance(ctx):
    """(f, λ) → (c f, c λ) keeps q_k and scales g and T f by c."""
    lam = ctx.lambdas[len(ctx.lambdas) // 2]
    base = ctx.decomposition(lam)
    scaled = czd.cz_decompose(SCALE_FACTOR * ctx.f, SCALE_FACTOR * lam)
    gap = max((scaled.family.q[k] - base.family.q[k]).max_abs() for k in base.levels)
    gap = max(gap, (scaled.g - SCALE_FACTOR * base.g).max_abs() / (SCALE_FACTOR * base.scale()))
    t_gap = (transform_T(SCALE_FACTOR * ctx.f, ctx.nu) - SCALE_FACTOR * ctx.Tf()).max_abs()
    gap = max(gap, t_gap / (SCALE_FACTOR * ctx.scale()))
    return [Measurement(_lam_label(lam), gap)]


# ----- 主定理 (Main estimates) -----

def weak11_ratio(f: MatrixField, nu: SignSequence, tf: MatrixField | None = None) -> float:
    """sup_λ λ φ(χ_{(λ,∞)}(|T f|)) / ‖f‖₁; ``tf`` reuses an already computed T f."""
    tf = transform_T(f, nu) if tf is None else tf
    return _ratio(field_weak_l1(tf), field_lp_norm(f, 1))


def lp_ratio(f: MatrixField, nu: SignSequence, p: float, tf: MatrixField | None = None) -> float:
    if math.isinf(float(p)):
        raise InvalidExponent("the L_p ratio is measured for finite p only")
    tf = transform_T(f, nu) if tf is None else tf
    return _ratio(field_lp_norm(tf, p), field_lp_norm(f, p))


def bmo_norm(f: MatrixField) -> tuple[float, float]:
    """
    (row, column) dyadic BMO norms: sup_Q ‖(E_Q|f - f_Q|²)^{1/2}‖ with
    |z|² = z z* (row) or z* z (column).
    """
    grid = f.grid
    row = col = 0.0
    for k in range(grid.K + 1):
        mean = level_values(f, k)
        col_var = level_values(f.adjoint() @ f, k) - adjoint(mean) @ mean
        row_var = level_values(f @ f.adjoint(), k) - mean @ adjoint(mean)
        col = max(col, float(np.max(operator_norm(col_var))))
        row = max(row, float(np.max(operator_norm(row_var))))
    return math.sqrt(max(row, 0.0)), math.sqrt(max(col, 0.0))


def linfty_bmo_ratio(f: MatrixField, nu: SignSequence, tf: MatrixField | None = None) -> float:
    """‖T f‖_BMO / ‖f‖_∞ with the larger of the row and column norms."""
    tf = transform_T(f, nu) if tf is None else tf
    return _ratio(max(bmo_norm(tf)), field_lp_norm(f, math.inf))


def _cube_center_cell(cube: DyadicCube, grid) -> tuple:
    width = 2 ** (grid.K - cube.level)
    return tuple(c * width + width // 2 for c in cube.coords)


def kernel_regularity(f: MatrixField, nu: SignSequence, cube: DyadicCube, k: int) -> float:
    """
    max_{x ∈ Q} ‖F_{k,Q}(x)‖ · 2^{-k} / (ℓ(Q) ‖f‖_∞), where
    F_{k,Q}(x) = ν_k[(M_k - E_k) f₂(x) - (M_k - E_k) f₂(c_Q)] and f₂ = f χ_{(3Q)^c}.
    """
    grid = f.grid
    outside = np.ones(grid.spatial_shape)
    for near in cube.dilate(3, grid):
        outside[near.cell_slices(grid)] = 0.0
    f2 = MatrixField(grid, f.values * outside[..., None, None])
    piece = nu.coefficient(k) * level_piece(f2, k).values
    center = piece[_cube_center_cell(cube, grid)]
    worst = float(np.max(operator_norm(piece[cube.cell_slices(grid)] - center)))
    return _ratio(worst * 2.0**-k, cube.side_length * field_lp_norm(f, math.inf))


def _sampled_cubes(grid, level: int, rng: np.random.Generator) -> list[DyadicCube]:
    count = 2**level
    picks = {(0,) * grid.d, (count // 2,) * grid.d}
    while len(picks) < min(BMO_SAMPLES_PER_LEVEL + 1, count**grid.d):
        picks.add(tuple(int(c) for c in rng.integers(count, size=grid.d)))
    return [DyadicCube(level, c) for c in sorted(picks)]


@claim("weak11", 50.0, uniform=True)
def _weak11(ctx):
    """‖T f‖_{1,∞} / ‖f‖₁."""
    return [Measurement("sup", weak11_ratio(ctx.f, ctx.nu, tf=ctx.Tf()))]


@claim("lp", 20.0, uniform=True)
def _lp(ctx):
    """‖T f‖_p / ‖f‖_p for p ∈ {1.5, 2, 3, 4}."""
    return [Measurement(f"p={p:g}", lp_ratio(ctx.f, ctx.nu, p, tf=ctx.Tf())) for p in LP_EXPONENTS]


@claim("lp_crosscheck", 1e-6)
def _lp_crosscheck(ctx):
    """Excess of ‖T f‖₂/‖f‖₂ over the power-iteration norm of T."""
    ratio = _ratio(field_lp_norm(ctx.Tf(), 2), ctx.norm(2))
    return [Measurement("p=2", max(0.0, ratio - ctx.t_norm()))]


@claim("bmo", 20.0, uniform=True)
def _bmo(ctx):
    """‖T f‖_BMO / ‖f‖_∞ (max of row and column)."""
    return [Measurement("row/col", linfty_bmo_ratio(ctx.f, ctx.nu, tf=ctx.Tf()))]


@claim("bmo_kernel", 20.0, uniform=True)
def _bmo_kernel(ctx):
    """‖F_{k,Q}‖ 2^{-k} / (ℓ(Q) ‖f‖_∞) on sampled cubes with 2^{-k} ≥ ℓ(Q)."""
    rng = np.random.default_rng(ctx.instance.index)
    worst, where = 0.0, "none"
    for level in range(1, ctx.grid.K + 1):
        for cube in _sampled_cubes(ctx.grid, level, rng):
            for k in range(level + 1):
                value = kernel_regularity(ctx.f, ctx.nu, cube, k)
                if value >= worst:
                    worst, where = value, f"Q={cube.level}:{cube.coords},k={k}"
    return [Measurement(where, worst)]


# ----- 微分變換 (Differential transform) -----

@claim("differential_split", 1e-10)
def _differential_split(ctx):
    """D f - (T_ν f + Σ ν_k df_k - T_{ν'} f), relative to ‖f‖_∞."""
    direct, martingale, lagged = three_way_split(ctx.f, ctx.nu)
    gap = (ctx.Df() - (direct + martingale - lagged)).max_abs()
    return [Measurement("split", gap / ctx.scale())]


@claim("differential_weak11", 100.0, uniform=True)
def _differential_weak11(ctx):
    """‖D f‖_{1,∞} / ‖f‖₁."""
    return [Measurement("sup", _ratio(field_weak_l1(ctx.Df()), ctx.norm(1)))]


@claim("differential_lp", 30.0, uniform=True)
def _differential_lp(ctx):
    """‖D f‖_p / ‖f‖_p for p ∈ {1.5, 2, 3, 4}."""
    return [Measurement(f"p={p:g}", _ratio(field_lp_norm(ctx.Df(), p), ctx.norm(p))) for p in LP_EXPONENTS]


# ----- 正交性 (Almost orthogonality) -----

def orthogonality_decay(h: MatrixField) -> list[Measurement]:
    """‖(M_k - E_k) dh_n‖₂² 2^{|n-k|} / ‖dh_n‖₂², worst pair per regime."""
    grid = h.grid
    worst = {"k<n": (0.0, "none"), "k>=n": (0.0, "none")}
    for n in range(1, grid.K + 1):
        dh = martingale_difference(h, n)
        energy = field_lp_norm(dh, 2) ** 2
        if energy <= 1e-24 * max(1.0, field_lp_norm(h, 2) ** 2):
            continue
        for k in range(grid.K + 1):
            value = field_lp_norm(level_piece(dh, k), 2) ** 2 * 2.0 ** abs(n - k) / energy
            regime = "k<n" if k < n else "k>=n"
            if value >= worst[regime][0]:
                worst[regime] = (value, f"k={k},n={n}")
    return [Measurement(f"{regime}:{where}", value) for regime, (value, where) in worst.items()]


@claim("orthogonality", 50.0, uniform=True)
def _orthogonality(ctx):
    """‖(M_k - E_k) dh_n‖₂² 2^{|n-k|} / ‖dh_n‖₂²."""
    return orthogonality_decay(ctx.f)


@claim("cancellation_identity", 1e-9)
def _cancellation_identity(ctx):
    """‖M_k dh_n - M_{k,n-1} dh_n‖₂ / ‖dh_n‖₂ for k < n - 1."""
    worst, where = 0.0, "none"
    for n in range(2, ctx.grid.K + 1):
        dh = martingale_difference(ctx.f, n)
        size = field_lp_norm(dh, 2)
        if size == 0.0:
            continue
        for k in range(n - 1):
            gap = field_lp_norm(ball_average(dh, k) - truncated_average(dh, k, n - 1), 2) / size
            if gap >= worst:
                worst, where = gap, f"k={k},n={n}"
    return [Measurement(where, worst)]


@claim("truncated_decay", 20.0, uniform=True)
def _truncated_decay(ctx):
    """‖M_{k,n} u‖_p 2^{n-k} / ‖u‖_p for k < n, p ∈ {1, 2, ∞}."""
    u = ctx.f
    out = []
    for p in TRUNCATION_EXPONENTS:
        base = ctx.norm(p)
        worst, where = 0.0, "none"
        for n in range(1, ctx.grid.K + 1):
            for k in range(n):
                value = _ratio(field_lp_norm(truncated_average(u, k, n), p) * 2.0 ** (n - k), base)
                if value >= worst:
                    worst, where = value, f"k={k},n={n}"
        out.append(Measurement(f"p={p:g}:{where}", worst))
    return out


@claim("operator_norm", 10.0, uniform=True)
def _operator_norm(ctx):
    """Power-iteration estimate of ‖T‖ on L2."""
    return [Measurement("T", ctx.t_norm())]


def carbery_grid(grid, nu: SignSequence, iterations: int = 60, restarts: int = 2) -> dict:
    """‖R_j Δ_k‖ for R_j = ν_j(M_j - E_j) and Δ_k = E_k - E_{k-1}, on a scalar grid."""
    scalar = grid.with_matdim(1)
    norms = {}
    for j in range(grid.K + 1):
        coefficient = nu.coefficient(j)
        for k in range(1, grid.K + 1):
            if coefficient == 0:
                norms[(j, k)] = 0.0
                continue

            def forward(x, j=j, k=k, c=coefficient):
                return c * level_piece(martingale_difference(x, k), j)

            def backward(x, j=j, k=k, c=coefficient):
                return martingale_difference(c * level_piece(x, j), k)

            norms[(j, k)] = estimate_operator_norm(forward, scalar, backward, iterations=iterations, restarts=restarts)
    return norms


@claim("carbery", 50.0, uniform=True)
def _carbery(ctx):
    """‖R_j Δ_k‖ 2^{|j-k|/2}, the almost-orthogonality hypothesis."""
    norms = ctx.cached("carbery", lambda: carbery_grid(ctx.grid, ctx.nu))
    worst, where = 0.0, "none"
    for (j, k), value in sorted(norms.items()):
        scaled = value * 2.0 ** (abs(j - k) / 2)
        if scaled >= worst:
            worst, where = scaled, f"j={j},k={k}"
    return [Measurement(where, worst)]


@claim("annulus_measure", 100.0, uniform=True)
def _annulus_measure(ctx):
    """|I_{j,m}| 2^{j(d-1)+m}."""
    grid = ctx.grid
    worst, where = 0.0, "none"
    for m in range(1, grid.K + 1):
        for j in range(m):
            value = len(annulus_offsets(grid, j, m)) * grid.cell_volume * 2.0 ** (j * (grid.d - 1) + m)
            if value >= worst:
                worst, where = value, f"j={j},m={m}"
    return [Measurement(where, worst)]


@claim("scalar_oracle", 1e-10)
def _scalar_oracle(ctx):
    """Scalar pipeline against the brute-force reference (n = 1 only)."""
    grid = ctx.grid
    if grid.n != 1 or grid.num_cells > ORACLE_MAX_CELLS:
        return []
    values = ctx.f.scalars()
    scale = max(1.0, ctx.norm(math.inf))
    gaps = {}
    for k in range(grid.K + 1):
        gaps[f"E_{k}"] = oracle.max_gap(cond_expectation(ctx.f, k).scalars(), oracle.expectation(values, grid, k))
        gaps[f"M_{k}"] = oracle.max_gap(ball_average(ctx.f, k).scalars(), oracle.ball_average(values, grid, k))
    levels = range(grid.K + 1)
    gaps["T"] = oracle.max_gap(ctx.Tf().scalars(), oracle.transform_T(values, grid, ctx.nu, levels))
    gaps["D"] = oracle.max_gap(ctx.Df().scalars(), oracle.differential_transform_D(values, grid, ctx.nu, range(1, grid.K + 1)))
    lam = ctx.lambdas[len(ctx.lambdas) // 2]
    dec = ctx.decomposition(lam)
    reference = oracle.stopping_decomposition(values, grid, lam)
    for k in levels:
        gaps[f"q_{k}"] = oracle.max_gap(dec.family.q[k].scalars(), reference["q"][k])
        gaps[f"b_{k}"] = oracle.max_gap(dec.b_parts[k].scalars(), reference["b"][k])
    gaps["g"] = oracle.max_gap(dec.g.scalars(), reference["g"])
    return [Measurement(name, gap / scale) for name, gap in gaps.items()]


# ===== 報告 (Reports) =====

@dataclass(frozen=True)
class InstanceRecord:
    instance: int
    K: int
    label: str
    ratio: float
    passed: bool

    def to_dict(self) -> dict:
        return {"instance": self.instance, "K": self.K, "label": self.label, "ratio": self.ratio, "pass": self.passed}


@dataclass
class BoundReport:
    claim: str
    ceiling: float
    uniform: bool
    records: list = field(default_factory=list)
    uniformity_factor: float = UNIFORMITY_FACTOR
    runtime: float = 0.0

    @property
    def ratios(self) -> list[float]:
        return [r.ratio for r in self.records]

    @property
    def max(self) -> float:
        return max(self.ratios, default=0.0)

    @property
    def mean(self) -> float:
        return float(np.mean(self.ratios)) if self.records else 0.0

    @property
    def by_K(self) -> dict[int, float]:
        out: dict[int, float] = {}
        for r in self.records:
            out[r.K] = max(out.get(r.K, 0.0), r.ratio)
        return dict(sorted(out.items()))

    @property
    def growth(self) -> float:
        """
        Worst ratio over K divided by the worst ratio at the smallest K with a
        positive value. Decay with K never counts as growth.
        """
        positive = [v for v in self.by_K.values() if v > 0]
        if len(positive) < 2:
            return 1.0
        return max(positive) / positive[0]

    @property
    def finite(self) -> bool:
        return all(math.isfinite(x) and x >= 0 for x in self.ratios)

    @property
    def passed(self) -> bool:
        if not self.finite or any(not r.passed for r in self.records):
            return False
        if self.uniform and len(self.by_K) > 1:
            return self.growth < self.uniformity_factor
        return True

    def to_dict(self) -> dict:
        return {
            "claim": self.claim,
            "ceiling": self.ceiling,
            "uniform": self.uniform,
            "max": self.max,
            "mean": self.mean,
            "by_K": {str(k): v for k, v in self.by_K.items()},
            "growth": self.growth,
            "pass": self.passed,
            "records": [r.to_dict() for r in self.records],
        }


def _evaluate_task(task) -> tuple:
    spec, K, i, index, names = task
    instance = build_instance(spec, K, i, index)
    ctx = InstanceContext(instance)
    results, timings = {}, {}
    for name in names:
        started = time.perf_counter()
        try:
            results[name] = list(CLAIMS[name].measure(ctx))
        except LabError as exc:
            results[name] = [Measurement(f"error:{exc.error_code}", math.inf)]
        timings[name] = time.perf_counter() - started
    return index, K, results, timings


def evaluate(
    spec: EnsembleSpec,
    claim_names,
    ceilings: dict | None = None,
    uniformity_factor: float = UNIFORMITY_FACTOR,
    workers: int = 1,
) -> list[BoundReport]:
    """
    Run the named claims over every instance of the ensemble. Instances are
    independent; results are merged in instance order.
    """
    names = list(claim_names)
    unknown = [n for n in names if n not in CLAIMS]
    if unknown:
        raise InvalidConfig(f"unknown claims: {', '.join(unknown)}")
    ceilings = dict(ceilings or {})
    tasks = [(spec, K, i, index, tuple(names)) for K, i, index in spec.tasks()]
    add_log("info", f"verifying {len(names)} claims over {len(tasks)} instances with {workers} worker(s)", "verify")
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_evaluate_task, tasks))
    else:
        outcomes = [_evaluate_task(t) for t in tasks]
    outcomes.sort(key=lambda item: item[0])

    reports = []
    for name in names:
        spec_claim = CLAIMS[name]
        ceiling = float(ceilings.get(name, spec_claim.ceiling))
        report = BoundReport(name, ceiling, spec_claim.uniform, uniformity_factor=uniformity_factor)
        for index, K, results, timings in outcomes:
            report.runtime += timings[name]
            for m in results[name]:
                ok = math.isfinite(m.ratio) and m.ratio < ceiling
                report.records.append(InstanceRecord(index, K, m.label, float(m.ratio), ok))
        level = "success" if report.passed else "warning"
        add_log(level, f"{name}: max={report.max:.4g} ceiling={ceiling:.4g} pass={report.passed}", "verify")
        reports.append(report)
    return reports


def freeze_ceilings(reports: list[BoundReport], factor: float = 10.0) -> dict[str, float]:
    """New ceilings at ``factor`` × the measured maxima; exact-constant claims keep theirs."""
    frozen = {}
    for report in reports:
        if report.uniform and report.max > 0 and math.isfinite(report.max):
            frozen[report.claim] = factor * report.max
        else:
            frozen[report.claim] = report.ceiling
    return frozen


def report_body(spec: EnsembleSpec, reports: list[BoundReport]) -> dict:
    """Deterministic report section for one ensemble (runtimes excluded)."""
    return {
        "ensemble": spec.to_dict(),
        "claims": [r.to_dict() for r in reports],
        "pass": all(r.passed for r in reports),
    }
