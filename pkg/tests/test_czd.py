"""
Noncommutative CZ Lab - CZ Decomposition Tests
Calderón–Zygmund 分解測試

測試範圍：
1. m_λ 與正性檢查
2. Cuculescu 投影族與其六項不變量
3. ζ 投影
4. CZ 分解：重建、好部分界、消去條件、對角/非對角拆分
5. 分解匯出與重新載入
"""

import dataclasses
import math
import os
import sys

import hypothesis.strategies as st
import numpy as np
import pytest
from hypothesis import given, settings

# 將 src 目錄加入路徑
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..', 'src'))

import czd
from container import load_components, save_components
from dyadic_field import (
    DyadicGrid,
    MatrixField,
    cond_expectation,
    field_lp_norm,
    level_values,
    tensor_trace,
)
from errors import InvalidThreshold, NonPositiveField
from spectral_core import is_projection


def spike_example():
    """d=1, K=2 的純量場 (4,0,0,0)"""
    return MatrixField.from_scalars(DyadicGrid(1, 2, 1), [4.0, 0.0, 0.0, 0.0])


def random_psd_field(grid, seed, rank=None):
    rng = np.random.default_rng(seed)
    cols = rank or grid.n
    a = rng.standard_normal(grid.spatial_shape + (grid.n, cols)) + 1j * rng.standard_normal(grid.spatial_shape + (grid.n, cols))
    return MatrixField(grid, a @ np.conj(np.swapaxes(a, -1, -2)))


def median_lambda(f):
    return 0.5 * field_lp_norm(f, math.inf)


psd_cases = st.tuples(
    st.sampled_from([1, 2]),
    st.integers(min_value=1, max_value=3),
    st.integers(min_value=1, max_value=3),
    st.sampled_from(["torus", "zero"]),
    st.integers(min_value=0, max_value=2**31),
    st.floats(min_value=0.05, max_value=1.5),
)


class TestStartLevel:
    """測試 m_lambda 與 check_positive"""

    def test_bounded_field(self):
        """TC-ML-01: ‖f‖_∞ ≤ λ → K"""
        f = random_psd_field(DyadicGrid(1, 3, 2), 1)
        assert czd.m_lambda(f, 2 * field_lp_norm(f, math.inf)) == 3

    def test_spike(self):
        """TC-ML-02: (4,0,0,0), λ=1 → 0"""
        assert czd.m_lambda(spike_example(), 1.0) == 0

    def test_root_exceeds(self):
        """TC-ML-03: E_0 f = 2 > λ=1 → ROOT_EXCEEDS"""
        f = MatrixField.from_scalars(DyadicGrid(1, 2, 1), [2.0, 2.0, 2.0, 2.0])
        assert czd.m_lambda(f, 1.0) == czd.ROOT_EXCEEDS

    def test_non_positive_rejected(self):
        """TC-ML-04: 非半正定場拋出 NonPositiveField"""
        f = MatrixField.from_scalars(DyadicGrid(1, 2, 1), [1.0, -1.0, 0.0, 0.0])
        with pytest.raises(NonPositiveField) as info:
            czd.cz_decompose(f, 1.0)
        assert info.value.error_code == "NON_POSITIVE_FIELD"

    @pytest.mark.parametrize("lam", [0.0, -1.0, float("inf")])
    def test_invalid_lambda(self, lam):
        """TC-ML-05: λ ≤ 0 拋出 InvalidThreshold"""
        with pytest.raises(InvalidThreshold):
            czd.cuculescu(spike_example(), lam)

    def test_finite_support(self):
        """TC-ML-06: 有限維中每個矩陣皆有有限支撐"""
        assert czd.has_finite_support(np.eye(3))


class TestCuculescu:
    """測試 cuculescu"""

    def test_nothing_stopped(self):
        """TC-CU-01: λ > ‖f‖_∞ → q_k = 1，p_k = 0"""
        f = random_psd_field(DyadicGrid(2, 2, 2), 2)
        family = czd.cuculescu(f, 2 * field_lp_norm(f, math.inf))
        ident = MatrixField.identity(f.grid)
        assert all(family.q[k].allclose(ident, atol=0.0) for k in family.q)
        assert all(family.p[k].max_abs() == 0.0 for k in family.p)
        assert family.bad_measure() == 0.0

    def test_spike_example(self):
        """TC-CU-02: (4,0,0,0), λ=1 的停時投影"""
        family = czd.cuculescu(spike_example(), 1.0)
        assert np.allclose(family.q[0].scalars(), [1, 1, 1, 1])
        assert np.allclose(family.q[1].scalars(), [0, 0, 1, 1])
        assert np.allclose(family.q[2].scalars(), [0, 0, 1, 1])
        assert np.allclose(family.p[1].scalars(), [1, 1, 0, 0])
        assert family.bad_measure() == pytest.approx(0.5)
        assert family.start_level == 0 and not family.root_exceeded

    def test_noncommuting_invariants(self):
        """TC-CU-03: 非交換 2x2 場滿足六項不變量"""
        f = random_psd_field(DyadicGrid(2, 3, 2), 3, rank=1)
        for lam in (0.25, 0.5, 1.0):
            lam = lam * field_lp_norm(f, math.inf)
            family = czd.cuculescu(f, lam)
            residuals = czd.cuculescu_residuals(family, f)
            assert set(residuals) == {"monotone", "measurable", "commutator", "bounded", "partition", "p_bound"}
            assert max(residuals.values()) < 1e-8
            for k, qk in family.q.items():
                assert is_projection(qk.values)

    @settings(deadline=None, max_examples=30)
    @given(psd_cases)
    def test_invariants_property(self, case):
        """TC-CU-04: 隨機實例的不變量與 φ(1-q) ≤ ‖f‖₁/λ"""
        d, K, n, boundary, seed, c = case
        f = random_psd_field(DyadicGrid(d, K, n, boundary), seed)
        lam = c * field_lp_norm(f, 1)
        family = czd.cuculescu(f, lam)
        assert max(czd.cuculescu_residuals(family, f).values()) < 1e-8
        assert family.bad_measure() <= field_lp_norm(f, 1) / lam * (1 + 1e-9)


class TestZeta:
    """測試 zeta"""

    def test_no_bad_projections(self):
        """TC-ZE-01: p_k 全為零 → ζ = 1"""
        f = random_psd_field(DyadicGrid(1, 3, 2), 4)
        family = czd.cuculescu(f, 2 * field_lp_norm(f, math.inf))
        assert czd.zeta(family).allclose(MatrixField.identity(f.grid), atol=1e-12)

    @pytest.mark.parametrize("boundary", ["torus", "zero"])
    def test_spike_zeta_vanishes(self, boundary):
        """TC-ZE-02: (4,0,0,0), λ=1：5Q 覆蓋全域，ζ ≡ 0"""
        f = MatrixField.from_scalars(DyadicGrid(1, 2, 1, boundary), [4.0, 0.0, 0.0, 0.0])
        dec = czd.cz_decompose(f, 1.0)
        assert dec.zeta.max_abs() < 1e-12
        assert tensor_trace(MatrixField.identity(f.grid) - dec.zeta) == pytest.approx(1.0)

    def test_zeta_kills_nearby_bad_projections(self):
        """TC-ZE-03: x ∈ 5Q 時 ζ(x) p_Q = 0"""
        f = random_psd_field(DyadicGrid(1, 5, 2, "zero"), 5, rank=1)
        lam = 0.5 * field_lp_norm(f, math.inf)
        dec = czd.cz_decompose(f, lam)
        grid = f.grid
        for k in range(grid.K + 1):
            pk = level_values(dec.family.p[k], k)
            for cube in grid.cubes(k):
                p_cube = pk[cube.coords]
                if np.max(np.abs(p_cube)) < 1e-12:
                    continue
                for near in cube.dilate(czd.DILATION, grid):
                    z = dec.zeta.values[near.cell_slices(grid)]
                    assert np.max(np.abs(z @ p_cube)) < 1e-8


class TestDecomposition:
    """測試 cz_decompose"""

    def test_trivial(self):
        """TC-CZ-01: λ > ‖f‖_∞ → g = f，b_n = 0"""
        f = random_psd_field(DyadicGrid(2, 2, 2), 6)
        dec = czd.cz_decompose(f, 2 * field_lp_norm(f, math.inf))
        assert dec.g.allclose(f, atol=1e-12)
        assert all(part.max_abs() == 0.0 for part in dec.b_parts.values())
        assert dec.active_levels() == []

    def test_spike_example(self):
        """TC-CZ-02: (4,0,0,0), λ=1：g=(2,2,0,0)，b₁=(2,-2,0,0)"""
        dec = czd.cz_decompose(spike_example(), 1.0)
        assert np.allclose(dec.g.scalars(), [2, 2, 0, 0], atol=1e-12)
        assert np.allclose(dec.b_parts[1].scalars(), [2, -2, 0, 0], atol=1e-12)
        assert dec.b_parts[0].max_abs() == 0.0 and dec.b_parts[2].max_abs() == 0.0
        assert np.allclose(level_values(dec.b_parts[1], 1)[..., 0, 0], 0.0)
        assert dec.active_levels() == [1]

    def test_spike_split(self):
        """TC-CZ-03: 純量情形 b_d,1 = p₁(f - f₁)，b_off,1 = 0"""
        dec = czd.cz_decompose(spike_example(), 1.0)
        diagonal, offdiag = czd.diag_offdiag_split(dec)
        assert np.allclose(diagonal[1].scalars(), [2, -2, 0, 0], atol=1e-12)
        assert offdiag[1].max_abs() < 1e-12

    @settings(deadline=None, max_examples=25)
    @given(psd_cases)
    def test_bounds_property(self, case):
        """TC-CZ-04: 重建、‖g‖₁ ≤ ‖f‖₁、‖g‖_∞ ≤ 2^d λ、φ(1-ζ) ≤ 5^d ‖f‖₁/λ、g ≥ 0"""
        d, K, n, boundary, seed, c = case
        f = random_psd_field(DyadicGrid(d, K, n, boundary), seed)
        lam = c * field_lp_norm(f, 1)
        dec = czd.cz_decompose(f, lam)
        f_l1 = field_lp_norm(f, 1)
        assert czd.reconstruction_residual(dec) < 1e-9
        assert czd.termwise_residual(dec) < 1e-9
        assert field_lp_norm(dec.g, 1) <= f_l1 * (1 + 1e-9)
        if not dec.family.root_exceeded:
            assert field_lp_norm(dec.g, math.inf) <= 2**d * lam * (1 + 1e-9)
        zeta_measure = tensor_trace(MatrixField.identity(f.grid) - dec.zeta)
        assert zeta_measure <= czd.DILATION**d * f_l1 / lam * (1 + 1e-9) + 1e-12
        assert np.min(np.linalg.eigvalsh(dec.g.hermitian_part().values)) > -1e-9 * dec.scale()

    def test_split_regroups(self):
        """TC-CZ-05: Σ(b_d,n + b_off,n) = Σ b_n，且 E_n(b_d,n) = 0"""
        f = random_psd_field(DyadicGrid(2, 3, 2), 7, rank=1)
        dec = czd.cz_decompose(f, median_lambda(f))
        diagonal, offdiag = czd.diag_offdiag_split(dec)
        total = MatrixField.zeros(f.grid)
        for n in dec.levels:
            total = total + diagonal[n] + offdiag[n]
            assert cond_expectation(diagonal[n], n).max_abs() < 1e-10
        assert total.allclose(dec.b_total(), atol=1e-10)

    @pytest.mark.parametrize("boundary", ["torus", "zero"])
    def test_cancellation(self, boundary):
        """TC-CZ-06: ∫_Q b_n = 0、ζ b_n ζ = 0 與 ζ M_k b_n ζ = 0 (k ≥ n)"""
        f = random_psd_field(DyadicGrid(1, 5, 2, boundary), 8, rank=1)
        for c in (0.25, 0.5):
            dec = czd.cz_decompose(f, c * field_lp_norm(f, math.inf))
            report = czd.cancellation_check(dec)
            assert report.worst() < 1e-8
            assert set(report.to_dict()) == {"mean_residual", "pairwise_residual", "average_residual", "scale"}

    @pytest.mark.parametrize("boundary", ["torus", "zero"])
    def test_cancellation_full_rank(self, boundary):
        """TC-CZ-08: 滿秩 n=2、K=5 隨機正定場，消去殘差遠低於 1e-8"""
        f = random_psd_field(DyadicGrid(1, 5, 2, boundary), 1)
        for c in (0.2, 0.35, 0.5):
            dec = czd.cz_decompose(f, c * field_lp_norm(f, math.inf))
            assert dec.active_levels()
            report = czd.cancellation_check(dec)
            assert report.pairwise_residual < 1e-12
            assert report.worst() < 1e-10

    @pytest.mark.parametrize("boundary", ["torus", "zero"])
    def test_pairwise_matches_direct_loop(self, boundary):
        """TC-CZ-09: 逐對殘差與直接迴圈 max ‖ζ(x) b_n(y) ζ(x)‖_F 一致"""
        grid = DyadicGrid(1, 4, 2, boundary)
        f = random_psd_field(grid, 12)
        dec = czd.cz_decompose(f, 0.3 * field_lp_norm(f, math.inf))
        rng = np.random.default_rng(3)
        v = rng.standard_normal((grid.side, 2, 1)) + 1j * rng.standard_normal((grid.side, 2, 1))
        v /= np.linalg.norm(v, axis=(-2, -1), keepdims=True)
        fake = dataclasses.replace(dec, zeta=MatrixField(grid, v @ np.conj(np.swapaxes(v, -1, -2))))
        expected = 0.0
        for n, part in fake.b_parts.items():
            cubes = 2**n
            for x in range(grid.side):
                for y in range(grid.side):
                    gap = (y >> (grid.K - n)) - (x >> (grid.K - n))
                    if grid.torus:
                        gap = min(gap % cubes, -gap % cubes)
                    if abs(gap) > 2:
                        continue
                    z = fake.zeta.values[x]
                    expected = max(expected, np.linalg.norm(z @ part.values[y] @ z))
        assert expected > 1e-3
        report = czd.cancellation_check(fake)
        assert report.pairwise_residual * report.scale == pytest.approx(expected, rel=1e-9)

    def test_cube_view_layout(self):
        """TC-CZ-10: cube_view 依層級 n 方塊分組，方塊內索引為列主序"""
        grid = DyadicGrid(2, 2, 1)
        values = np.arange(16, dtype=float).reshape(4, 4, 1, 1)
        view = czd.cube_view(values, grid, 1)
        assert view.shape == (2, 2, 4, 1, 1)
        assert list(view[1, 0, :, 0, 0]) == [8, 9, 12, 13]

    def test_coarse_average_sides(self):
        """TC-CZ-07: 低層級平均估計的兩側皆有限且非負"""
        f = random_psd_field(DyadicGrid(1, 4, 2), 9)
        dec = czd.cz_decompose(f, median_lambda(f))
        for n in dec.active_levels():
            lhs, rhs = czd.coarse_average_sides(dec, n)
            assert math.isfinite(lhs) and math.isfinite(rhs)
            assert lhs >= 0 and rhs >= 0


class TestSummaryAndDump:
    """測試 residual_summary 與匯出"""

    def test_summary_bounds(self):
        """TC-DS-01: λ > ‖f‖_∞ 時摘要顯示 b ≡ 0"""
        f = random_psd_field(DyadicGrid(1, 3, 2), 10)
        summary = czd.residual_summary(czd.cz_decompose(f, 2 * field_lp_norm(f, math.inf)))
        assert summary["b_is_zero"] is True
        assert all(entry["pass"] for entry in summary["bounds"].values())

    def test_spike_summary(self):
        """TC-DS-02: (4,0,0,0), λ=1 摘要與手算一致"""
        summary = czd.residual_summary(czd.cz_decompose(spike_example(), 1.0))
        assert summary["bounds"]["bad_measure"]["value"] == pytest.approx(0.5)
        assert summary["bounds"]["zeta_measure"]["value"] == pytest.approx(1.0)
        assert summary["start_level"] == 0
        assert summary["active_levels"] == [1]

    def test_reload_reproduces_residuals(self, tmp_path):
        """TC-DS-03: 匯出後重新載入，殘差完全一致"""
        f = random_psd_field(DyadicGrid(2, 2, 2), 11, rank=1)
        dec = czd.cz_decompose(f, median_lambda(f))
        manifest, fields = czd.to_components(dec)
        save_components(tmp_path / "dec", fields, manifest)
        loaded_manifest, loaded_fields = load_components(tmp_path / "dec")
        again = czd.from_components(loaded_manifest, loaded_fields)
        assert czd.residual_summary(again) == czd.residual_summary(dec)
        assert np.array_equal(again.g.values, dec.g.values)


if __name__ == '__main__':
    pytest.main([__file__, '-v'])
