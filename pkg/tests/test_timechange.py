import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.optimize import minimize

from ricci_timechange.timechange import (
    HessianSample,
    coefficient,
    matrix_inequality_defect,
    modified_hessian,
    quartic_form_matrix,
    quartic_sweep_grid,
    sample_hessian_batch,
    sweep_matrix_inequality,
    sweep_quartic_form,
)


@pytest.mark.parametrize("N,Np,expected", [(2, 7, 0.0), (3, math.inf, 1.0), (3, 4, 2.0)])
def test_coefficient_values(N, Np, expected):
    assert coefficient(N, Np) == expected


@pytest.mark.parametrize("N,Np", [(3, 3), (3, 2.5), (1.5, 4)])
def test_coefficient_rejects_out_of_range(N, Np):
    with pytest.raises(ValueError):
        coefficient(N, Np)


@given(st.floats(2.01, 50), st.floats(1e-3, 1e3), st.floats(1e-3, 1e3))
def test_coefficient_strictly_decreasing_in_nprime(N, g1, g2):
    a, b = sorted((g1, g2))
    if b - a < 1e-6 * b:
        return
    assert coefficient(N, N + a) > coefficient(N, N + b) > coefficient(N, math.inf)


@given(st.floats(2, 50))
def test_coefficient_limit(N):
    assert coefficient(N, math.inf) == N - 2
    assert coefficient(N, N * 1e9) == pytest.approx(N - 2, rel=1e-6, abs=1e-9)
    if N == 2:
        assert coefficient(2, 3) == 0.0


def test_zero_sample_has_zero_defect():
    for n in (1, 2, 3):
        s = HessianSample(np.zeros((n, n)), np.zeros(n), np.zeros(n), 0.0)
        assert matrix_inequality_defect(s, n + 1.0) == 0.0


@given(st.floats(-10, 10), st.floats(-10, 10), st.floats(-10, 10))
def test_one_dimensional_closed_form(h, p, q):
    # H = h - pq; defect = (h - pq)^2 + (pq)^2 / 2 - h^2 / 3 for N' = 3
    s = HessianSample(np.array([[h]]), np.array([p]), np.array([q]), h)
    expected = (h - p * q) ** 2 + (p * q) ** 2 / 2 - h**2 / 3
    got = matrix_inequality_defect(s, 3.0)
    scale = 1 + (h - p * q) ** 2 + h**2
    assert got == pytest.approx(expected, abs=1e-12 * scale)
    assert got >= -1e-12 * scale


@pytest.mark.parametrize("n,Np", [(2, 2.5), (2, 4.0), (3, 7.0)])
def test_equality_probe(n, Np):
    # grad w = 0 and Hf = (lap f / N') I attains the minimum 0
    lap = 1.0
    iu = np.triu_indices(n)

    def defect(x):
        hf = np.zeros((n, n))
        hf[iu] = x
        hf = hf + np.triu(hf, 1).T
        return matrix_inequality_defect((hf, np.zeros(n), np.zeros(n), lap), Np)

    best = min((minimize(defect, x0, method="BFGS", options={"gtol": 1e-12})
                for x0 in np.random.default_rng(n).standard_normal((5, len(iu[0])))), key=lambda r: r.fun)
    assert best.fun == pytest.approx(0.0, abs=1e-10)
    hf = np.zeros((n, n))
    hf[iu] = best.x
    assert np.allclose(np.diag(hf), lap / Np, atol=1e-5)
    assert defect(np.eye(n)[iu] * lap / Np) == pytest.approx(0.0, abs=1e-15)


def test_rejects_nprime_not_above_n():
    s = HessianSample(np.eye(2), np.ones(2), np.ones(2), 1.0)
    with pytest.raises(ValueError):
        matrix_inequality_defect(s, 2.0)


@given(st.integers(1, 5), st.integers(0, 2**31))
def test_trace_identity(n, seed):
    hess, gf, gw, _ = sample_hessian_batch(np.random.default_rng(seed), 50, n)
    h = modified_hessian(hess, gf, gw)
    lhs = np.trace(h, axis1=1, axis2=2)
    rhs = np.trace(hess, axis1=1, axis2=2) + (n - 2) * np.einsum("ki,ki->k", gf, gw)
    assert np.allclose(lhs, rhs, rtol=1e-12, atol=1e-12)


@pytest.mark.parametrize("n", [1, 2, 3, 5])
@pytest.mark.parametrize("gap", [0.5, 2.0, math.inf])
def test_matrix_inequality_sweep(n, gap):
    res = sweep_matrix_inequality(n, n + gap, samples=20_000, seed=3)
    assert res["min_scaled_defect"] >= -1e-12


def _quartic_oracle(N, Np, n):
    N, n = Fraction(N), Fraction(n)
    if Np == math.inf:
        return [[1 / (N - n), Fraction(1)], [Fraction(1), (N - 2) - (n - 2)]]
    Np = Fraction(Np)
    c = (N - 2) * (Np - 2) / (Np - N)
    return [[1 / (N - n) - 1 / (Np - n), 1 - (2 - n) / (Np - n)],
            [1 - (2 - n) / (Np - n), c - (n - 2) - (n - 2) ** 2 / (Np - n)]]


def test_quartic_two_infinity_one():
    m = quartic_form_matrix(2, math.inf, 1)
    assert np.array_equal(m, [[1, 1], [1, 1]])
    assert np.allclose(m @ [1, -1], 0)
    assert np.linalg.eigvalsh(m)[0] == pytest.approx(0.0, abs=1e-15)


def test_quartic_three_five_two():
    # a22 = (1)(3)/2 - 0 - 0 = 3/2; the form is PSD and singular
    m = quartic_form_matrix(3, 5, 2)
    expected = np.array(_quartic_oracle(3, 5, 2), dtype=float)
    assert np.allclose(m, expected, rtol=1e-15)
    assert np.allclose(m, [[2 / 3, 1], [1, 1.5]], rtol=1e-15)
    assert np.linalg.eigvalsh(m)[0] >= -1e-15


@pytest.mark.parametrize("N,Np,n", [(2.5, 3, 1), (4, 9, 2), (6, math.inf, 2), (3, 3.5, 1), (5.5, 100, 2)])
def test_quartic_matches_rational_oracle(N, Np, n):
    assert np.allclose(quartic_form_matrix(N, Np, n), np.array(_quartic_oracle(N, Np, n), dtype=float),
                       rtol=1e-14)


def test_quartic_dimension_equal_convention():
    m = quartic_form_matrix(2, 5, 2)
    assert m[0, 0] == 0 and m[0, 1] == 0


def test_quartic_rejects_bad_order():
    with pytest.raises(ValueError):
        quartic_form_matrix(2, 2, 1)
    with pytest.raises(ValueError):
        quartic_form_matrix(1.5, 3, 2)


def test_quartic_grid_sweep():
    res = sweep_quartic_form(quartic_sweep_grid(per_n=2000))
    assert res["tuples"] >= 3900
    assert res["min_scaled_eigenvalue"] >= -1e-12
