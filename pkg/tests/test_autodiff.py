import zlib

import numpy as np
import pytest
import scipy.sparse as sp

from graphfuzzy import autodiff as ad
from graphfuzzy.autodiff import Parameter, Value

from gradcheck import TOL, away_from_zero, check

_S = sp.random(4, 3, density=0.6, random_state=0, format="csr")
_MASK = np.array([[1, 0, 1], [0, 1, 0], [1, 1, 1], [0, 0, 1]], dtype=bool)
_SEG = np.array([0, 2, 0, 1, 2])
_GATHER = np.array([2, 0, 2, 1])


def _positive(rng, shape):
    return rng.uniform(0.5, 2.0, shape)


# name -> (function of the parameter list, input generator)
OPS = {
    "matmul": (lambda p: ad.matmul(p[0], p[1]), lambda r: [r.standard_normal((3, 4)), r.standard_normal((4, 2))]),
    "sparse_dense_matmul": (lambda p: ad.sparse_dense_matmul(_S, p[0]), lambda r: [r.standard_normal((3, 2))]),
    "add": (lambda p: ad.add(p[0], p[1]), lambda r: [r.standard_normal((3, 2)), r.standard_normal((3, 2))]),
    "sub": (lambda p: ad.sub(p[0], p[1]), lambda r: [r.standard_normal((3, 2)), r.standard_normal((3, 2))]),
    "add_row_broadcast": (lambda p: ad.add_row_broadcast(p[0], p[1]),
                          lambda r: [r.standard_normal((4, 3)), r.standard_normal((1, 3))]),
    "mul": (lambda p: ad.mul(p[0], p[1]), lambda r: [r.standard_normal((3, 2)), r.standard_normal((3, 2))]),
    "scale_rows": (lambda p: ad.scale_rows(p[0], p[1]), lambda r: [r.standard_normal((4, 3)), r.standard_normal((4, 1))]),
    "scale": (lambda p: ad.scale(p[0], -2.5), lambda r: [r.standard_normal((2, 3))]),
    "relu": (lambda p: ad.relu(p[0]), lambda r: [away_from_zero(r, (4, 3))]),
    "leaky_relu": (lambda p: ad.leaky_relu(p[0], 0.2), lambda r: [away_from_zero(r, (4, 3))]),
    "exp": (lambda p: ad.exp(p[0]), lambda r: [r.standard_normal((3, 3))]),
    "log": (lambda p: ad.log(p[0]), lambda r: [_positive(r, (3, 3))]),
    "sqrt": (lambda p: ad.sqrt(p[0]), lambda r: [_positive(r, (3, 2))]),
    "row_softmax": (lambda p: ad.row_softmax(p[0]), lambda r: [r.standard_normal((4, 3))]),
    "masked_row_softmax": (lambda p: ad.masked_row_softmax(p[0], _MASK), lambda r: [r.standard_normal((4, 3))]),
    "segment_sum": (lambda p: ad.segment_sum(p[0], _SEG, 3), lambda r: [r.standard_normal((5, 2))]),
    "segment_softmax": (lambda p: ad.segment_softmax(p[0], _SEG, 3), lambda r: [r.standard_normal((5, 1))]),
    "gather_rows": (lambda p: ad.gather_rows(p[0], _GATHER), lambda r: [r.standard_normal((3, 2))]),
    "slice_rows": (lambda p: ad.slice_rows(p[0], 1, 3), lambda r: [r.standard_normal((4, 2))]),
    "sum": (lambda p: ad.sum(p[0]), lambda r: [r.standard_normal((3, 2))]),
    "frobenius_norm_sq": (lambda p: ad.frobenius_norm_sq(p[0]), lambda r: [r.standard_normal((3, 2))]),
}


def projected(op):
    """Scalar loss <op(params), R> with a fixed random projection R."""
    cache = {}

    def loss(params):
        out = op(params)
        if "R" not in cache:
            cache["R"] = np.random.default_rng(99).standard_normal(out.shape)
        return ad.sum(ad.mul(out, Value(cache["R"])))

    return loss


@pytest.mark.parametrize("name", sorted(OPS))
def test_finite_differences(name):
    op, gen = OPS[name]
    rng = np.random.default_rng(zlib.crc32(name.encode()))
    for _ in range(10):
        assert check(projected(op), gen(rng)) < TOL


class TestForward:
    def test_matmul_identity(self, rng):
        X = rng.standard_normal((3, 4))
        np.testing.assert_array_equal(ad.matmul(X, np.eye(4)).data, X)

    def test_constant_row_softmax(self):
        np.testing.assert_allclose(ad.row_softmax(np.full((2, 5), 3.3)).data, 0.2)

    def test_segment_sum_two_segments(self):
        x = np.array([[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]])
        np.testing.assert_array_equal(ad.segment_sum(x, [0, 0, 1]).data, [[4, 6], [5, 6]])

    def test_masked_softmax_zero_outside(self, rng):
        s = ad.masked_row_softmax(rng.standard_normal((4, 3)), _MASK).data
        assert np.all(s[~_MASK] == 0)
        np.testing.assert_allclose(s.sum(1), 1.0)

    def test_masked_softmax_empty_row(self):
        with pytest.raises(ValueError, match="empty mask"):
            ad.masked_row_softmax(np.zeros((2, 2)), [[True, False], [False, False]])

    def test_segment_softmax_groups(self, rng):
        s = ad.segment_softmax(rng.standard_normal((5, 1)), _SEG).data[:, 0]
        np.testing.assert_allclose(np.bincount(_SEG, weights=s), 1.0)

    def test_log_clamp(self):
        out = ad.log(np.array([[0.0, 1.0]]), floor=1e-12)
        assert out.info["clamped"] == 1
        assert out.data[0, 0] == np.log(1e-12)

    @pytest.mark.parametrize("op,args", [
        (ad.add, ((2, 2), (2, 3))), (ad.mul, ((1, 2), (2, 1))), (ad.matmul, ((2, 3), (2, 3))),
        (ad.add_row_broadcast, ((2, 3), (2, 3))), (ad.scale_rows, ((2, 3), (3, 1))),
    ])
    def test_shape_mismatch(self, op, args):
        with pytest.raises(ValueError):
            op(np.zeros(args[0]), np.zeros(args[1]))

    def test_segment_index_out_of_range(self):
        with pytest.raises(ValueError):
            ad.segment_sum(np.zeros((2, 1)), [0, 3], 2)


class TestBackward:
    def test_sum_gradient_is_ones(self, rng):
        W = Parameter(rng.standard_normal((3, 2)), "W")
        ad.sum(W).backward()
        np.testing.assert_array_equal(W.grad, 1.0)

    def test_frobenius_gradient(self, rng):
        W = Parameter(rng.standard_normal((3, 2)), "W")
        ad.frobenius_norm_sq(W).backward()
        np.testing.assert_allclose(W.grad, 2 * W.data)

    def test_accumulates_until_zeroed(self, rng):
        W = Parameter(rng.standard_normal((2, 2)), "W")
        ad.sum(W).backward()
        ad.sum(W).backward()
        np.testing.assert_array_equal(W.grad, 2.0)
        W.zero_grad()
        np.testing.assert_array_equal(W.grad, 0.0)

    def test_linearity(self, rng):
        W = Parameter(rng.standard_normal((3, 3)), "W")

        def f():
            return ad.sum(ad.exp(W))

        def g():
            return ad.frobenius_norm_sq(ad.matmul(W, W))

        f().backward()
        gf = W.grad.copy()
        W.zero_grad()
        g().backward()
        gg = W.grad.copy()
        W.zero_grad()
        (ad.scale(f(), 1.5) + ad.scale(g(), -0.25)).backward()
        np.testing.assert_allclose(W.grad, 1.5 * gf - 0.25 * gg, rtol=1e-12)

    def test_shared_subexpression(self, rng):
        # y = x used twice; gradient must add both paths
        x = Parameter(rng.standard_normal((2, 2)), "x")
        y = ad.exp(x)
        ad.sum(ad.mul(y, y)).backward()
        np.testing.assert_allclose(x.grad, 2 * np.exp(2 * x.data), rtol=1e-12)

    def test_needs_scalar(self, rng):
        with pytest.raises(ValueError):
            Parameter(rng.standard_normal((2, 2)), "x").backward()

    def test_forward_is_pure(self, rng):
        W = Parameter(rng.standard_normal((3, 3)), "W")
        before = W.data.copy()
        ad.sum(ad.row_softmax(ad.matmul(W, W))).backward()
        np.testing.assert_array_equal(W.data, before)

    def test_constants_do_not_receive_gradients(self, rng):
        c = Value(rng.standard_normal((2, 2)))
        W = Parameter(rng.standard_normal((2, 2)), "W")
        ad.sum(ad.mul(c, W)).backward()
        np.testing.assert_array_equal(c.grad, 0.0)
        np.testing.assert_array_equal(W.grad, c.data)

    def test_deep_chain(self):
        # iterative toposort copes with graphs deeper than the recursion limit
        x = Parameter(np.ones((1, 1)), "x")
        y = x
        for _ in range(5000):
            y = ad.scale(y, 1.0)
        y.backward()
        assert x.grad[0, 0] == 1.0
