"""Distances, compositions, and their gradients.

Core claims:
    - the three distances match their definitions on hand-checked values
    - identity, symmetry, l1 triangle inequality, exact l1 translation
      invariance (on dyadic inputs where float addition is exact)
    - cosine with a zero operand raises instead of returning NaN
    - analytic gradients of every distance and composition match central
      finite differences (the oracle lives in this file, not the library)
"""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from pytest import approx

from treerec import (
    AdditiveComposition,
    CodeShape,
    CompositionLookupError,
    DistanceSpec,
    LinearComposition,
    ShapeMismatchError,
    TableComposition,
    VectorShape,
    ZeroNormError,
    compose,
    composition_gradients,
    distance,
    distance_subgradient,
    is_hard_code,
)

COSINE = DistanceSpec("cosine")
L1 = DistanceSpec("l1")
SQL2 = DistanceSpec("squared_l2")


def central_difference(f, x, h=1e-5):
    """Independent numeric gradient of scalar f at array x."""
    x = x.astype(np.float64).copy()
    grad = np.zeros_like(x)
    flat = x.ravel()
    gflat = grad.ravel()
    for k in range(flat.size):
        orig = flat[k]
        flat[k] = orig + h
        hi = f(x)
        flat[k] = orig - h
        lo = f(x)
        flat[k] = orig
        gflat[k] = (hi - lo) / (2 * h)
    return grad


def rel_err(a, b):
    denom = max(np.abs(a).max(), np.abs(b).max(), 1.0)
    return np.abs(a - b).max() / denom


finite_vecs = st.lists(
    st.floats(min_value=-10, max_value=10, allow_nan=False), min_size=3, max_size=3
).map(lambda v: np.array(v))


class TestDistanceValues:
    def test_cosine_same_direction(self):
        assert distance(COSINE, np.array([1.0, 2.0]), np.array([1.0, 2.0])) == 0.0

    def test_cosine_orthogonal(self):
        assert distance(COSINE, np.array([1.0, 0.0]), np.array([0.0, 1.0])) == approx(1.0)

    def test_cosine_opposite_is_two(self):
        assert distance(COSINE, np.array([1.0, 0.0]), np.array([-2.0, 0.0])) == approx(2.0)

    def test_l1(self):
        assert distance(L1, np.array([1.0, 0.0, 2.0]), np.zeros(3)) == approx(3.0)

    def test_squared_l2(self):
        assert distance(SQL2, np.array([1.0, 1.0]), np.zeros(2)) == approx(2.0)

    def test_code_matrices_flatten_row_major(self):
        r = np.array([[1.0, 0.0], [0.0, 1.0]])
        s = np.zeros((2, 2))
        assert distance(L1, r, s) == approx(2.0)
        assert distance(COSINE, r, np.array([[1.0, 0.0], [0.0, 0.0]])) == approx(
            1.0 - 1.0 / np.sqrt(2.0))

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatchError):
            distance(L1, np.zeros(3), np.zeros(4))

    def test_cosine_zero_operand_is_an_error(self):
        with pytest.raises(ZeroNormError):
            distance(COSINE, np.zeros(2), np.array([1.0, 0.0]))
        with pytest.raises(ZeroNormError):
            distance_subgradient(COSINE, np.array([1.0, 0.0]), np.zeros(2))


class TestDistanceProperties:
    @given(finite_vecs)
    @settings(max_examples=100, deadline=None)
    def test_self_distance_zero(self, v):
        assert distance(L1, v, v) == 0.0
        assert distance(SQL2, v, v) == 0.0
        if np.linalg.norm(v) > 0:
            assert distance(COSINE, v, v) == 0.0

    @given(finite_vecs, finite_vecs)
    @settings(max_examples=100, deadline=None)
    def test_symmetry(self, r, s):
        assert distance(L1, r, s) == approx(distance(L1, s, r))
        assert distance(SQL2, r, s) == approx(distance(SQL2, s, r))
        if np.linalg.norm(r) > 0 and np.linalg.norm(s) > 0:
            assert distance(COSINE, r, s) == approx(distance(COSINE, s, r))

    @given(finite_vecs, finite_vecs, finite_vecs)
    @settings(max_examples=100, deadline=None)
    def test_l1_triangle(self, x, y, z):
        assert distance(L1, x, z) <= distance(L1, x, y) + distance(L1, y, z) + 1e-9

    def test_l1_translation_invariance_exact(self):
        # dyadic values: additions below are exact in binary floating point
        rng = np.random.default_rng(5)
        for _ in range(200):
            r = rng.integers(-1024, 1024, 6) / 1024.0
            s = rng.integers(-1024, 1024, 6) / 1024.0
            t = rng.integers(-1024, 1024, 6) / 1024.0
            assert distance(L1, r + t, s + t) == distance(L1, r, s)


class TestCompose:
    def test_additive(self):
        got = compose(AdditiveComposition(), np.array([1.0, 0.0]), np.array([0.0, 1.0]))
        assert got == approx(np.array([1.0, 1.0]))

    def test_linear_identity_weights_reduce_to_addition(self):
        eye = np.eye(3)
        comp = LinearComposition(eye, eye)
        r, s = np.array([1.0, 2.0, 3.0]), np.array([4.0, 5.0, 6.0])
        assert compose(comp, r, s) == approx(r + s)

    def test_linear_permutes_code_positions(self):
        swap = np.array([[0.0, 1.0], [1.0, 0.0]])
        comp = LinearComposition(swap, np.zeros((2, 2)))
        theta = np.array([[1.0, 0.0], [0.0, 1.0]])
        got = compose(comp, theta, theta)
        assert got == approx(np.array([[0.0, 1.0], [1.0, 0.0]]))

    def test_linear_without_weights_raises(self):
        with pytest.raises(ValueError, match="weights"):
            compose(LinearComposition(), np.zeros(2), np.zeros(2))

    def test_table_round_trip_and_miss(self):
        table = TableComposition()
        r, s, out = np.array([1.0]), np.array([2.0]), np.array([7.0])
        table.register(r, s, out)
        assert compose(table, r, s) == approx(out)
        with pytest.raises(CompositionLookupError):
            compose(table, s, r)

    def test_table_has_no_gradient(self):
        with pytest.raises(TypeError):
            composition_gradients(TableComposition(), np.zeros(1), np.zeros(1),
                                  np.zeros(1))

    def test_is_hard_code(self):
        assert is_hard_code(np.array([[0.0, 1.0], [1.0, 0.0]]))
        assert not is_hard_code(np.array([[0.5, 0.5], [1.0, 0.0]]))
        assert not is_hard_code(np.ones(3))


class TestSubgradientValues:
    def test_squared_l2(self):
        got = distance_subgradient(SQL2, np.array([1.0, 1.0]), np.zeros(2))
        assert got == approx(np.array([2.0, 2.0]))

    def test_l1_signs_with_tie_zero(self):
        got = distance_subgradient(L1, np.array([2.0, -1.0, 0.5]),
                                   np.array([0.0, 0.0, 0.5]))
        assert got == approx(np.array([1.0, -1.0, 0.0]))


class TestGradientsAgainstFiniteDifferences:
    def test_distance_subgradients(self):
        rng = np.random.default_rng(7)
        for kind, tol in (("squared_l2", 1e-7), ("cosine", 1e-5), ("l1", 1e-4)):
            spec = DistanceSpec(kind)
            checked = 0
            while checked < 100:
                r = rng.normal(0, 1, 5)
                s = rng.normal(0, 1, 5)
                if kind == "l1" and np.abs(r - s).min() < 1e-3:
                    continue  # keep clear of subgradient kinks
                analytic = distance_subgradient(spec, r, s)
                numeric = central_difference(lambda x: distance(spec, x, s), r)
                assert rel_err(analytic, numeric) < tol, kind
                checked += 1

    def test_additive_composition_gradients(self):
        g = np.array([1.0, -2.0, 3.0])
        gr, gs = composition_gradients(AdditiveComposition(), np.zeros(3),
                                       np.zeros(3), g)
        assert gr == approx(g) and gs == approx(g)

    def test_linear_identity_gradients(self):
        eye = np.eye(2)
        r, s = np.array([1.0, 2.0]), np.array([3.0, 4.0])
        g = np.array([0.5, -0.5])
        gr, gs, gl, grt = composition_gradients(LinearComposition(eye, eye), r, s, g)
        assert gr == approx(g) and gs == approx(g)
        assert gl == approx(np.outer(g, r))
        assert grt == approx(np.outer(g, s))

    @pytest.mark.parametrize("shape", [(4,), (3, 5)])
    def test_linear_gradients_match_finite_differences(self, shape):
        rng = np.random.default_rng(21)
        side = shape[0]
        for _ in range(20):
            lw = rng.normal(0, 1, (side, side))
            rw = rng.normal(0, 1, (side, side))
            r = rng.normal(0, 1, shape)
            s = rng.normal(0, 1, shape)
            g = rng.normal(0, 1, shape)
            comp = LinearComposition(lw, rw)
            gr, gs, glw, grw = composition_gradients(comp, r, s, g)

            def scalar(out):
                return float((out * g).sum())

            num_r = central_difference(lambda x: scalar(compose(comp, x, s)), r)
            num_s = central_difference(lambda x: scalar(compose(comp, r, x)), s)
            num_lw = central_difference(
                lambda w: scalar(compose(LinearComposition(w, rw), r, s)), lw)
            num_rw = central_difference(
                lambda w: scalar(compose(LinearComposition(lw, w), r, s)), rw)
            for analytic, numeric in ((gr, num_r), (gs, num_s),
                                      (glw, num_lw), (grw, num_rw)):
                assert rel_err(analytic, numeric) < 1e-6

    def test_cosine_code_matrix_gradient(self):
        rng = np.random.default_rng(3)
        r = rng.normal(0, 1, (3, 4))
        s = rng.normal(0, 1, (3, 4))
        analytic = distance_subgradient(COSINE, r, s)
        numeric = central_difference(lambda x: distance(COSINE, x, s), r)
        assert rel_err(analytic, numeric) < 1e-5


class TestShapes:
    def test_vector_shape(self):
        assert VectorShape(4).array_shape() == (4,)
        with pytest.raises(ValueError):
            VectorShape(0)

    def test_code_shape(self):
        assert CodeShape(4, 16).array_shape() == (4, 16)
        with pytest.raises(ValueError):
            CodeShape(4, 0)
