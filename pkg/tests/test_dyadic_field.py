"""
Noncommutative CZ Lab - Dyadic Field Tests
二進網格與矩陣場測試

測試範圍：
1. 網格與二進方塊 (grid, cubes)
2. 條件期望與鞅差 (E_k, df_k)
3. 球平均、截斷平均與 M̃ (M_k, M_{k,n}, M̃_{j,m})
4. 張量跡、L_p 範數與分佈函數
"""

import math
import os
import sys

import hypothesis.strategies as st
import numpy as np
import pytest
from hypothesis import given, settings

# 將 src 目錄加入路徑
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..', 'src'))

from dyadic_field import (
    DyadicCube,
    DyadicGrid,
    MatrixField,
    annulus_offsets,
    ball_average,
    ball_offsets,
    ball_volume,
    cond_expectation,
    field_distribution,
    field_lp_norm,
    field_weak_l1,
    inner_product,
    martingale_difference,
    sphere_offsets,
    tensor_trace,
    tilde_average,
    truncated_average,
)
from errors import DimensionMismatch, InvalidConfig, InvalidExponent, LevelOrderViolation, LevelOutOfRange
from spectral_core import loewner_leq


def scalar_field(values, boundary="torus"):
    values = np.asarray(values, dtype=float)
    K = int(round(math.log2(values.shape[0])))
    grid = DyadicGrid(values.ndim, K, 1, boundary)
    return MatrixField.from_scalars(grid, values)


def random_field(grid, seed, positive=False):
    rng = np.random.default_rng(seed)
    a = rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape)
    if positive:
        values = a @ np.conj(np.swapaxes(a, -1, -2))
    else:
        values = a + np.conj(np.swapaxes(a, -1, -2))
    return MatrixField(grid, values)


grids = st.builds(
    DyadicGrid,
    d=st.sampled_from([1, 2]),
    K=st.integers(min_value=1, max_value=3),
    n=st.integers(min_value=1, max_value=3),
    boundary=st.sampled_from(["torus", "zero"]),
)


class TestGrid:
    """測試 DyadicGrid 與 DyadicCube"""

    def test_cell_counts(self):
        """TC-GR-01: 2^{Kd} 個格子"""
        grid = DyadicGrid(2, 3, 2)
        assert grid.num_cells == 64
        assert grid.shape == (8, 8, 2, 2)
        assert grid.cell_volume == pytest.approx(1 / 64)
        assert len(list(grid.cubes(2))) == 16

    @pytest.mark.parametrize("kwargs", [dict(d=3, K=2), dict(d=1, K=-1), dict(d=1, K=2, n=0), dict(d=1, K=2, boundary="open")])
    def test_invalid_grid(self, kwargs):
        """TC-GR-02: 不支援的網格拋出 InvalidConfig"""
        with pytest.raises(InvalidConfig):
            DyadicGrid(**kwargs)

    def test_level_range(self):
        """TC-GR-03: 層級超出範圍拋出 LevelOutOfRange"""
        grid = DyadicGrid(1, 2)
        with pytest.raises(LevelOutOfRange):
            grid.check_level(3)
        with pytest.raises(LevelOutOfRange):
            cond_expectation(MatrixField.zeros(grid), -1)

    def test_father_and_children(self):
        """TC-GR-04: 父方塊唯一，子方塊為 2^d 個"""
        cube = DyadicCube(2, (3, 1))
        assert cube.father() == DyadicCube(1, (1, 0))
        children = cube.children()
        assert len(children) == 4
        assert all(child.father() == cube for child in children)
        with pytest.raises(LevelOutOfRange):
            DyadicCube(0, (0,)).father()
        with pytest.raises(LevelOutOfRange):
            DyadicCube(1, (2,))

    def test_cell_slices(self):
        """TC-GR-05: 方塊對應的格子區間"""
        grid = DyadicGrid(1, 3)
        assert DyadicCube(1, (1,)).cell_slices(grid) == (slice(4, 8),)

    def test_dilate(self):
        """TC-GR-06: 環面上繞回，零延拓時截斷"""
        cube = DyadicCube(2, (0,))
        torus = DyadicGrid(1, 3, boundary="torus")
        zero = DyadicGrid(1, 3, boundary="zero")
        assert [c.coords for c in cube.dilate(3, torus)] == [(0,), (1,), (3,)]
        assert [c.coords for c in cube.dilate(3, zero)] == [(0,), (1,)]
        assert len(DyadicCube(3, (4, 4)).dilate(5, DyadicGrid(2, 3))) == 25
        with pytest.raises(InvalidConfig):
            cube.dilate(2, torus)


class TestMatrixField:
    """測試 MatrixField 容器"""

    def test_immutable(self):
        """TC-MF-01: 值唯讀"""
        f = MatrixField.identity(DyadicGrid(1, 2, 2))
        with pytest.raises(ValueError):
            f.values[0, 0, 0] = 5.0

    def test_shape_checked(self):
        """TC-MF-02: 形狀不符拋出 DimensionMismatch"""
        with pytest.raises(DimensionMismatch):
            MatrixField(DyadicGrid(1, 2, 2), np.zeros((4, 3, 3)))
        with pytest.raises(DimensionMismatch):
            MatrixField.zeros(DyadicGrid(1, 2)) + MatrixField.zeros(DyadicGrid(1, 3))

    def test_arithmetic(self):
        """TC-MF-03: 加減、純量乘法、逐格矩陣乘法"""
        grid = DyadicGrid(1, 1, 2)
        a = MatrixField.constant(grid, [[1, 2], [3, 4]])
        b = MatrixField.identity(grid)
        assert np.allclose((a + b).values[0], [[2, 2], [3, 5]])
        assert np.allclose((2 * a - a).values, a.values)
        assert np.allclose((a @ a).values[1], [[7, 10], [15, 22]])
        assert np.allclose(a.adjoint().values[0], [[1, 3], [2, 4]])
        assert np.allclose(a.compress(b).values, a.values)


class TestConditionalExpectation:
    """測試 cond_expectation 與 martingale_difference"""

    def test_pair_averages(self):
        """TC-CE-01: (1,3,5,7), k=1 → (2,2,6,6)"""
        assert np.allclose(cond_expectation(scalar_field([1, 3, 5, 7]), 1).scalars(), [2, 2, 6, 6])

    def test_global_average(self):
        """TC-CE-02: k=0 → 全域平均 4"""
        assert np.allclose(cond_expectation(scalar_field([1, 3, 5, 7]), 0).scalars(), [4, 4, 4, 4])

    @settings(deadline=None, max_examples=25)
    @given(grids, st.integers(min_value=0, max_value=2**31))
    def test_tower_property(self, grid, seed):
        """TC-CE-03: E_j E_k = E_{min(j,k)}"""
        f = random_field(grid, seed)
        for j in range(grid.K + 1):
            for k in range(grid.K + 1):
                lhs = cond_expectation(cond_expectation(f, k), j)
                assert lhs.allclose(cond_expectation(f, min(j, k)), atol=1e-12)

    def test_positivity_and_module_property(self):
        """TC-CE-04: 保正性與模性質 E_k(a b) = a E_k(b) (a 為 k 層可測)"""
        grid = DyadicGrid(2, 2, 2)
        f = random_field(grid, 11, positive=True)
        e = cond_expectation(f, 1)
        assert np.min(np.linalg.eigvalsh(e.values)) > -1e-12
        a = cond_expectation(random_field(grid, 12), 1)
        b = random_field(grid, 13)
        assert cond_expectation(a @ b, 1).allclose(a @ cond_expectation(b, 1), atol=1e-10)

    def test_trace_preserving(self):
        """TC-CE-05: φ(f - E_k f) = 0"""
        f = random_field(DyadicGrid(2, 3, 2), 14)
        for k in range(4):
            assert abs(tensor_trace(f - cond_expectation(f, k))) < 1e-12

    def test_martingale_difference_example(self):
        """TC-CE-06: (1,3,5,7), k=1 → (-2,-2,2,2)"""
        assert np.allclose(martingale_difference(scalar_field([1, 3, 5, 7]), 1).scalars(), [-2, -2, 2, 2])

    def test_martingale_difference_level_zero(self):
        """TC-CE-07: k=0 拋出 LevelOutOfRange"""
        with pytest.raises(LevelOutOfRange):
            martingale_difference(scalar_field([1, 3, 5, 7]), 0)

    def test_constant_has_no_differences(self):
        """TC-CE-08: 常數場的鞅差為零"""
        f = MatrixField.constant(DyadicGrid(1, 3, 2), np.diag([1.0, 2.0]))
        for k in range(1, 4):
            assert martingale_difference(f, k).max_abs() < 1e-14

    def test_telescoping_and_orthogonality(self):
        """TC-CE-09: Σ df_k + E_0 f = f，且 φ(df_j* df_k) = 0 (j ≠ k)"""
        grid = DyadicGrid(2, 3, 2)
        f = random_field(grid, 15)
        diffs = {k: martingale_difference(f, k) for k in range(1, 4)}
        total = cond_expectation(f, 0)
        for df in diffs.values():
            total = total + df
        assert total.allclose(f, atol=1e-12)
        for j in diffs:
            for k in diffs:
                if j != k:
                    assert abs(inner_product(diffs[j], diffs[k])) < 1e-10
        assert cond_expectation(diffs[2], 1).max_abs() < 1e-12


class TestBallAverage:
    """測試 ball_average"""

    def test_example_window(self):
        """TC-BA-01: 環面 (1,3,5,7), k=1 → (11/3, 3, 5, 13/3)"""
        out = ball_average(scalar_field([1, 3, 5, 7]), 1).scalars()
        assert np.allclose(out, [11 / 3, 3, 5, 13 / 3], atol=1e-12)

    def test_unital_on_torus(self):
        """TC-BA-02: 常數場不變"""
        grid = DyadicGrid(2, 3, 2)
        c = MatrixField.constant(grid, [[2.0, 1.0j], [-1.0j, 3.0]])
        for k in range(4):
            assert ball_average(c, k).allclose(c, atol=1e-12)

    @pytest.mark.parametrize("d", [1, 2])
    def test_finest_ball_is_identity(self, d):
        """TC-BA-03: k=K 時球只含自身"""
        f = random_field(DyadicGrid(d, 3, 2), 16)
        assert ball_average(f, 3).allclose(f, atol=1e-12)
        assert ball_volume(f.grid, 3) == 1

    def test_ball_geometry(self):
        """TC-BA-04: 離散球與球面"""
        grid = DyadicGrid(1, 3)
        assert sorted(ball_offsets(grid, 1)[:, 0].tolist()) == [-3, -2, -1, 0, 1, 2, 3]
        assert sorted(sphere_offsets(grid, 1)[:, 0].tolist()) == [-3, 3]
        zero = DyadicGrid(1, 2, boundary="zero")
        assert ball_volume(zero, 0) == 7

    def test_zero_extension_matches_direct_sum(self):
        """TC-BA-05: 零延拓模式與直接加總一致"""
        values = np.array([0.0, 2.0, 5.0, 0.0])
        out = ball_average(scalar_field(values, "zero"), 1).scalars()
        direct = [(values[max(0, i - 1):i + 2]).sum() / 3 for i in range(4)]
        assert np.allclose(out, direct, atol=1e-12)

    @settings(deadline=None, max_examples=25)
    @given(grids, st.integers(min_value=0, max_value=2**31))
    def test_contraction_on_torus(self, grid, seed):
        """TC-BA-06: 環面上 M_k 為 L1 與 L∞ 收縮"""
        grid = DyadicGrid(grid.d, grid.K, grid.n, "torus")
        f = random_field(grid, seed)
        for k in range(grid.K + 1):
            m = ball_average(f, k)
            for p in (1, math.inf):
                assert field_lp_norm(m, p) <= field_lp_norm(f, p) * (1 + 1e-10)

    def test_positivity(self):
        """TC-BA-07: 保正性"""
        f = random_field(DyadicGrid(2, 3, 2), 17, positive=True)
        for k in range(4):
            assert np.min(np.linalg.eigvalsh(ball_average(f, k).hermitian_part().values)) > -1e-10


class TestTruncatedAverage:
    """測試 truncated_average 與 tilde_average"""

    def test_zero_input(self):
        """TC-TA-01: u = 0 → 0"""
        grid = DyadicGrid(2, 3, 2)
        assert truncated_average(MatrixField.zeros(grid), 0, 2).max_abs() == 0.0
        assert tilde_average(MatrixField.zeros(grid), 0, 2).max_abs() == 0.0

    def test_order_violation(self):
        """TC-TA-02: k ≥ n 拋出 LevelOrderViolation"""
        f = MatrixField.zeros(DyadicGrid(1, 3))
        with pytest.raises(LevelOrderViolation) as info:
            truncated_average(f, 2, 2)
        assert info.value.error_code == "LEVEL_ORDER_VIOLATION"
        with pytest.raises(LevelOrderViolation):
            tilde_average(f, 3, 1)

    @pytest.mark.parametrize("boundary", ["torus", "zero"])
    def test_dominated_by_ball_average(self, boundary):
        """TC-TA-03: u ≥ 0 時 M_{k,n} u ≤ M_k u ≤ ... 且 M_{k,n} u ≤ M̃_{k,n} u"""
        grid = DyadicGrid(2, 3, 2, boundary)
        u = random_field(grid, 18, positive=True)
        for n in range(1, 4):
            for k in range(n):
                low = truncated_average(u, k, n).values
                assert loewner_leq(low, ball_average(u, k).values)
                assert loewner_leq(low, tilde_average(u, k, n).values)
                assert loewner_leq(np.zeros_like(low), low)

    @pytest.mark.parametrize("d", [1, 2])
    def test_decay(self, d):
        """TC-TA-04: ‖M_{k,n}u‖_p 2^{n-k}/‖u‖_p 有一致上界"""
        worst = 0.0
        for K in (3, 4):
            grid = DyadicGrid(d, K, 1)
            u = random_field(grid, 19 + K, positive=True)
            for n in range(1, K + 1):
                for k in range(n):
                    for p in (1, 2, math.inf):
                        ratio = field_lp_norm(truncated_average(u, k, n), p) * 2 ** (n - k) / field_lp_norm(u, p)
                        worst = max(worst, ratio)
        assert 0 < worst < 16

    def test_cancellation_identity(self):
        """TC-TA-05: k < n-1 時 M_k dh_n = M_{k,n-1} dh_n"""
        grid = DyadicGrid(2, 3, 2)
        h = random_field(grid, 20)
        for n in range(2, 4):
            dh = martingale_difference(h, n)
            for k in range(n - 1):
                assert ball_average(dh, k).allclose(truncated_average(dh, k, n - 1), atol=1e-10)

    def test_tilde_positive(self):
        """TC-TA-06: M̃ 保正"""
        v = random_field(DyadicGrid(1, 4, 2), 21, positive=True)
        out = tilde_average(v, 1, 3)
        assert np.min(np.linalg.eigvalsh(out.hermitian_part().values)) > -1e-10

    @pytest.mark.parametrize("d", [1, 2])
    def test_annulus_measure(self, d):
        """TC-TA-07: |I_{j,m}| ≈ C 2^{-j(d-1)} 2^{-m}"""
        grid = DyadicGrid(d, 5, boundary="zero")
        scaled = [
            len(annulus_offsets(grid, j, m)) * grid.cell_volume * 2 ** (j * (d - 1) + m)
            for m in range(1, 6)
            for j in range(m)
        ]
        assert min(scaled) > 0
        assert max(scaled) < 40


class TestTraceAndNorms:
    """測試 tensor_trace / field_lp_norm / field_distribution"""

    def test_identity_trace(self):
        """TC-TN-01: 單位場 n=2 的跡為 2"""
        assert tensor_trace(MatrixField.identity(DyadicGrid(2, 2, 2))) == pytest.approx(2.0)

    def test_one_cell_indicator(self):
        """TC-TN-02: 單格指示函數 ‖·‖₁ = 1/4"""
        assert field_lp_norm(scalar_field([1, 0, 0, 0]), 1) == pytest.approx(0.25)

    def test_identity_sup_norm(self):
        """TC-TN-03: ‖I‖_∞ = 1"""
        assert field_lp_norm(MatrixField.identity(DyadicGrid(1, 2, 2)), math.inf) == pytest.approx(1.0)

    def test_l2_is_gram(self):
        """TC-TN-04: ‖f‖₂ = sqrt(φ(f* f))"""
        f = random_field(DyadicGrid(2, 2, 3), 22)
        assert field_lp_norm(f, 2) == pytest.approx(math.sqrt(tensor_trace(f.adjoint() @ f).real))

    def test_exponent_checked(self):
        """TC-TN-05: p < 1 拋出 InvalidExponent"""
        with pytest.raises(InvalidExponent):
            field_lp_norm(MatrixField.zeros(DyadicGrid(1, 1)), 0.5)

    def test_distribution_constant(self):
        """TC-TN-06: 常數 2：λ=1 → 1，λ=3 → 0"""
        f = scalar_field([2.0, 2.0])
        assert field_distribution(f, 1.0) == pytest.approx(1.0)
        assert field_distribution(f, 3.0) == 0.0
        assert field_distribution(f, field_lp_norm(f, math.inf)) == 0.0

    def test_weak_l1_matches_dense_sweep(self):
        """TC-TN-07: 斷點求值與密集掃描一致"""
        f = random_field(DyadicGrid(1, 3, 2), 23)
        top = field_lp_norm(f, math.inf)
        sweep = np.linspace(top * 1e-4, top, 10_000)
        dense = max(lam * field_distribution(f, lam) for lam in sweep)
        exact = field_weak_l1(f)
        assert dense <= exact + 1e-10
        assert exact - dense < 2e-3 * exact


if __name__ == '__main__':
    pytest.main([__file__, '-v'])
