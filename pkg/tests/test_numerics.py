import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bct import numerics as num


def test_matmul_identity():
    rng = num.make_rng(0)
    a = rng.standard_normal((2, 2))
    assert np.array_equal(num.matmul(np.eye(2), a), a)


def test_matmul_hand_checked():
    a = num.matrix([[1, 2], [3, 4]])
    b = num.matrix([[5], [6]])
    assert np.array_equal(num.matmul(a, b), [[17], [39]])


def test_matmul_against_triple_loop():
    rng = num.make_rng(1)
    a = rng.standard_normal((7, 5))
    b = rng.standard_normal((5, 3))
    # brute-force oracle
    expected = np.zeros((7, 3))
    for i in range(7):
        for j in range(3):
            acc = 0.0
            for k in range(5):
                acc += a[i, k] * b[k, j]
            expected[i, j] = acc
    assert np.abs(num.matmul(a, b) - expected).max() < 1e-12


def test_matmul_shape_error_names_both_shapes():
    with pytest.raises(num.DimensionError) as e:
        num.matmul(np.zeros((2, 3)), np.zeros((4, 2)))
    assert "(2, 3)" in str(e.value) and "(4, 2)" in str(e.value)


def test_matmul_rejects_non_matrix():
    with pytest.raises(num.DimensionError):
        num.matmul(np.zeros(3), np.zeros((3, 2)))


def test_matmul_associativity():
    rng = num.make_rng(2)
    for _ in range(10):
        a = rng.standard_normal((4, 6))
        b = rng.standard_normal((6, 3))
        c = rng.standard_normal((3, 5))
        left = num.matmul(num.matmul(a, b), c)
        right = num.matmul(a, num.matmul(b, c))
        rel = np.abs(left - right).max() / max(np.abs(left).max(), 1e-30)
        assert rel < 1e-9


def test_outer_basis_vector():
    u = num.matrix([[1.0, 0.0]])
    v = num.matrix([[3.0, 4.0]])
    assert np.array_equal(num.outer(u, v), [[3.0, 4.0], [0.0, 0.0]])


def test_outer_zero_annihilates():
    assert not num.outer(num.zeros(1, 3), num.matrix([[1.0, 2.0]])).any()


def test_outer_against_double_loop():
    rng = num.make_rng(3)
    u = rng.standard_normal((1, 4))
    v = rng.standard_normal((1, 6))
    got = num.outer(u, v)
    for i in range(4):
        for j in range(6):
            assert got[i, j] == u[0, i] * v[0, j]


def test_outer_is_matmul_of_transpose():
    rng = num.make_rng(4)
    u = rng.standard_normal((1, 5))
    v = rng.standard_normal((1, 3))
    assert np.array_equal(num.outer(u, v), num.matmul(u.T, v))


def test_outer_rejects_non_vectors():
    with pytest.raises(num.DimensionError):
        num.outer(np.zeros((2, 2)), np.zeros((1, 2)))


def test_softmax_equal_scores_uniform():
    out = num.softmax_row(num.zeros(1, 4))
    assert np.allclose(out, 0.25, atol=1e-15)


@pytest.mark.parametrize("c", [-3.0, 0.0, 17.5])
def test_softmax_ln2_gap_gives_one_third_two_thirds(c):
    out = num.softmax_row(num.matrix([[c, c + math.log(2.0)]]))
    assert np.abs(out - [1 / 3, 2 / 3]).max() < 1e-12


def test_softmax_against_naive_oracle():
    rng = num.make_rng(5)
    scores = rng.standard_normal((1, 8)) * 5
    exps = [math.exp(s) for s in scores[0]]
    expected = np.array([[e / sum(exps) for e in exps]])
    assert np.abs(num.softmax_row(scores) - expected).max() < 1e-12


def test_softmax_nan_raises():
    with pytest.raises(num.NumericError):
        num.softmax_row(num.matrix([[0.0, float("nan")]]))


def test_softmax_large_magnitudes_stay_finite():
    out = num.softmax_row(num.matrix([[700.0, -700.0, 680.0]]))
    assert np.isfinite(out).all() and abs(out.sum() - 1.0) < 1e-6


@settings(max_examples=50)
@given(
    scores=st.lists(st.floats(-50, 50), min_size=1, max_size=12),
    shift=st.floats(-100, 100),
)
def test_softmax_shift_invariance(scores, shift):
    row = np.array([scores], dtype=np.float64)
    a = num.softmax_row(row)
    b = num.softmax_row(row + shift)
    assert np.abs(a - b).max() < 1e-12


def test_softmax_rows_normalized_batched():
    rng = num.make_rng(6)
    out = num.softmax_row(rng.standard_normal((5, 9)))
    assert np.abs(out.sum(axis=1) - 1.0).max() < 1e-6
    assert (out > 0).all()


def test_rng_same_seed_same_stream():
    a = num.make_rng(42).standard_normal(100)
    b = num.make_rng(42).standard_normal(100)
    assert np.array_equal(a, b)


def test_gaussian_width_follows_active_dtype():
    with num.precision(32):
        g32 = num.gaussian(num.make_rng(7), 3, 4, 1.0)
    g64 = num.gaussian(num.make_rng(7), 3, 4, 1.0)
    assert g32.dtype == np.float32 and g64.dtype == np.float64
    # 32-bit values are the rounded 64-bit draws
    assert np.array_equal(g32, g64.astype(np.float32))


def test_precision_context_restores():
    assert num.element_width() == 64
    with num.precision(32):
        assert num.active_dtype() == np.float32
    assert num.element_width() == 64


def test_set_element_width_rejects_other_widths():
    with pytest.raises(ValueError):
        num.set_element_width(16)


def test_matrix_requires_2d():
    with pytest.raises(num.DimensionError):
        num.matrix([1.0, 2.0])
