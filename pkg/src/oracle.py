"""
純量對照實作 (Scalar Reference Implementation)

Brute-force commutative (n = 1) versions of E_k, M_k, T, D and the
stopping-time decomposition, written with explicit loops over cells and real
coordinates. Used to cross-check the matrix pipeline; never for speed.
"""

from __future__ import annotations

import itertools

import numpy as np

from dyadic_field import DyadicGrid


def _cells(grid: DyadicGrid):
    return list(itertools.product(range(grid.side), repeat=grid.d))


def _displacement(x, y, grid: DyadicGrid) -> float:
    """Squared distance between cell centers in real coordinates."""
    h = 1.0 / grid.side
    total = 0.0
    for a, b in zip(x, y):
        delta = abs(b - a)
        if grid.torus:
            delta = min(delta, grid.side - delta)
        total += (delta * h) ** 2
    return total


def _ball_count(grid: DyadicGrid, k: int) -> int:
    """Lattice points o with |o|·2^{-K} < 2^{-k} (all of Z^d, or the torus residues)."""
    if grid.torus:
        origin = (0,) * grid.d
        return sum(1 for y in _cells(grid) if _displacement(origin, y, grid) < 4.0 ** (-k))
    reach = 2 ** (grid.K - k)
    h = 1.0 / grid.side
    count = 0
    for o in itertools.product(range(-reach, reach + 1), repeat=grid.d):
        if sum((c * h) ** 2 for c in o) < 4.0 ** (-k):
            count += 1
    return count


def expectation(values: np.ndarray, grid: DyadicGrid, k: int) -> np.ndarray:
    width = 2 ** (grid.K - k)
    out = np.zeros(grid.spatial_shape)
    for x in _cells(grid):
        cube = [c // width for c in x]
        members = [y for y in _cells(grid) if [c // width for c in y] == cube]
        out[x] = sum(values[y] for y in members) / len(members)
    return out


def ball_average(values: np.ndarray, grid: DyadicGrid, k: int) -> np.ndarray:
    radius_sq = 4.0 ** (-k)
    volume = _ball_count(grid, k)
    out = np.zeros(grid.spatial_shape)
    for x in _cells(grid):
        out[x] = sum(values[y] for y in _cells(grid) if _displacement(x, y, grid) < radius_sq) / volume
    return out


def transform_T(values, grid, nu, levels) -> np.ndarray:
    out = np.zeros(grid.spatial_shape)
    for k in levels:
        out += nu.coefficient(k) * (ball_average(values, grid, k) - expectation(values, grid, k))
    return out


def differential_transform_D(values, grid, nu, levels) -> np.ndarray:
    out = np.zeros(grid.spatial_shape)
    for k in levels:
        out += nu.coefficient(k) * (ball_average(values, grid, k) - ball_average(values, grid, k - 1))
    return out


def stopping_decomposition(values: np.ndarray, grid: DyadicGrid, lam: float) -> dict:
    """
    Scalar stopping times: q_k = q_{k-1}·[q_{k-1} f_k ≤ λ] with values within
    1e-12·max(a, λ) of λ counted as equal to λ; g and b_n follow.
    """
    q_prev = np.ones(grid.spatial_shape)
    q, p, b = {}, {}, {}
    averages = {k: expectation(values, grid, k) for k in range(grid.K + 1)}
    for k in range(grid.K + 1):
        current = np.zeros(grid.spatial_shape)
        for x in _cells(grid):
            a = q_prev[x] * averages[k][x]
            stopped = a > lam and abs(a - lam) > 1e-12 * max(abs(a), lam)
            current[x] = 0.0 if stopped else q_prev[x]
        q[k] = current
        p[k] = q_prev - current
        q_prev = current
    terminal = q[grid.K]
    g = terminal * values * terminal
    for n in range(grid.K + 1):
        g = g + p[n] * averages[n] * p[n]
        before = np.ones(grid.spatial_shape) if n == 0 else q[n - 1]
        residual = values - averages[n]
        b[n] = p[n] * residual * q[n] + before * residual * p[n]
    return {"q": q, "p": p, "terminal": terminal, "g": g, "b": b}


def max_gap(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.max(np.abs(np.asarray(a) - np.asarray(b)), initial=0.0))