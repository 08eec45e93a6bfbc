import numpy as np
import pytest

from sadq import autodiff as ad
from sadq.autodiff import Node, ShapeMismatch, UnsupportedPrimitive

from helpers import finite_difference_grads, max_rel_err


class TestLeastSquaresOracle:
    def test_grad_at_zero_weights_is_minus_outer(self):
        # loss = 0.5 * ||x @ W + b - y||^2 at W=0, b=0
        # dL/dW = outer(x, x@W + b - y) = -outer(x, y); dL/db = -y
        x = np.array([1.0, 2.0])
        y = np.array([3.0, -1.0, 2.0])
        w = Node(np.zeros((2, 3)))
        b = Node(np.zeros(3))
        resid = ad.sub(ad.affine(Node(x), w, b), y)
        loss = ad.mul(ad.total(ad.square(resid)), 0.5)
        gw, gb = ad.grad(loss, [w, b])
        np.testing.assert_allclose(gw, -np.outer(x, y), rtol=0, atol=1e-12)
        np.testing.assert_allclose(gb, -y, rtol=0, atol=1e-12)

    def test_unused_param_gets_exact_zero(self):
        x = Node(np.array([1.0, 2.0]))
        unused = Node(np.ones((4, 4)))
        loss = ad.total(ad.square(x))
        gx, gu = ad.grad(loss, [x, unused])
        np.testing.assert_array_equal(gu, np.zeros((4, 4)))
        np.testing.assert_allclose(gx, 2.0 * x.value)


class TestPrimitives:
    def test_affine_shape_mismatch(self):
        with pytest.raises(ShapeMismatch):
            ad.affine(Node(np.ones(3)), Node(np.ones((2, 3))), Node(np.ones(3)))

    def test_relu_gradient_mask(self):
        x = Node(np.array([-1.0, 0.0, 2.0]))
        loss = ad.total(ad.relu(x))
        (g,) = ad.grad(loss, [x])
        np.testing.assert_array_equal(g, [0.0, 0.0, 1.0])

    def test_tanh_grad(self):
        x = Node(np.array([0.3, -0.7]))
        loss = ad.total(ad.tanh(x))
        (g,) = ad.grad(loss, [x])
        np.testing.assert_allclose(g, 1.0 - np.tanh(x.value) ** 2, rtol=1e-12)

    def test_exp_grad(self):
        x = Node(np.array([0.0, 1.0, -2.0]))
        loss = ad.total(ad.exp(x))
        (g,) = ad.grad(loss, [x])
        np.testing.assert_allclose(g, np.exp(x.value), rtol=1e-12)

    def test_clip_zeroes_gradient_outside(self):
        x = Node(np.array([-5.0, 0.5, 5.0]))
        loss = ad.total(ad.clip(x, -1.0, 1.0))
        (g,) = ad.grad(loss, [x])
        np.testing.assert_array_equal(g, [0.0, 1.0, 0.0])

    def test_where_routes_gradient(self):
        a = Node(np.array([1.0, 2.0, 3.0]))
        b = Node(np.array([10.0, 20.0, 30.0]))
        mask = np.array([True, False, True])
        loss = ad.total(ad.where(mask, a, b))
        ga, gb = ad.grad(loss, [a, b])
        np.testing.assert_array_equal(ga, [1.0, 0.0, 1.0])
        np.testing.assert_array_equal(gb, [0.0, 1.0, 0.0])

    def test_gather_rows_scatter_gradient(self):
        x = Node(np.arange(6.0).reshape(3, 2))
        idx = np.array([1, 0, 1])
        picked = ad.gather_rows(x, idx)
        np.testing.assert_array_equal(picked.value, [1.0, 2.0, 5.0])
        loss = ad.total(ad.mul(picked, np.array([1.0, 2.0, 3.0])))
        (g,) = ad.grad(loss, [x])
        expect = np.array([[0.0, 1.0], [2.0, 0.0], [0.0, 3.0]])
        np.testing.assert_array_equal(g, expect)

    def test_mean_axis_grad(self):
        x = Node(np.arange(6.0).reshape(2, 3))
        loss = ad.total(ad.mean(x, axis=1))
        (g,) = ad.grad(loss, [x])
        np.testing.assert_allclose(g, np.full((2, 3), 1.0 / 3.0), rtol=1e-12)

    def test_reshape_roundtrips_gradient(self):
        x = Node(np.arange(6.0))
        loss = ad.total(ad.square(ad.reshape(x, (2, 3))))
        (g,) = ad.grad(loss, [x])
        np.testing.assert_allclose(g, 2.0 * x.value, rtol=1e-12)

    def test_broadcast_add_unbroadcasts(self):
        a = Node(np.ones((4, 3)))
        b = Node(np.ones(3))
        loss = ad.total(ad.add(a, b))
        ga, gb = ad.grad(loss, [a, b])
        np.testing.assert_array_equal(ga, np.ones((4, 3)))
        np.testing.assert_array_equal(gb, np.full(3, 4.0))

    def test_reused_node_accumulates(self):
        x = Node(np.array([3.0]))
        loss = ad.total(ad.mul(x, x))
        (g,) = ad.grad(loss, [x])
        np.testing.assert_allclose(g, [6.0])

    def test_nonscalar_loss_rejected(self):
        x = Node(np.ones(3))
        with pytest.raises(ShapeMismatch):
            ad.grad(ad.square(x), [x])

    def test_foreign_ufunc_raises(self):
        with pytest.raises(UnsupportedPrimitive):
            np.sin(Node(np.ones(2)))


class TestFiniteDifferenceOracle:
    def test_random_two_layer_net(self):
        rng = np.random.default_rng(7)
        x = rng.normal(size=(5, 4))
        y = rng.normal(size=(5, 2))
        arrays = {
            "w0": rng.normal(size=(4, 8)) * 0.4,
            "b0": rng.normal(size=8) * 0.1,
            "w1": rng.normal(size=(8, 2)) * 0.4,
            "b1": rng.normal(size=2) * 0.1,
        }

        def loss_value():
            h = np.maximum(x @ arrays["w0"] + arrays["b0"], 0.0)
            out = h @ arrays["w1"] + arrays["b1"]
            return float(np.mean((out - y) ** 2))

        nodes = {k: Node(v) for k, v in arrays.items()}
        h = ad.relu(ad.affine(Node(x), nodes["w0"], nodes["b0"]))
        out = ad.affine(h, nodes["w1"], nodes["b1"])
        loss = ad.mean(ad.square(ad.sub(out, y)))
        analytic = ad.grad(loss, [nodes[k] for k in arrays])
        numeric = finite_difference_grads(loss_value, arrays, h=1e-5)
        for got, (name, want) in zip(analytic, numeric.items()):
            assert max_rel_err(got, want) < 1e-4, name

    def test_huber_style_composition(self):
        rng = np.random.default_rng(11)
        arrays = {"u": rng.normal(size=(6,)) * 2.0}

        def loss_value():
            u = arrays["u"]
            quad = 0.5 * u * u
            lin = np.abs(u) - 0.5
            return float(np.mean(np.where(np.abs(u) <= 1.0, quad, lin)))

        node = Node(arrays["u"])
        small = np.abs(arrays["u"]) <= 1.0
        quad = ad.mul(ad.square(node), 0.5)
        lin = ad.sub(ad.absolute(node), 0.5)
        loss = ad.mean(ad.where(small, quad, lin))
        (analytic,) = ad.grad(loss, [node])
        numeric = finite_difference_grads(loss_value, arrays, h=1e-5)
        assert max_rel_err(analytic, numeric["u"]) < 1e-4
