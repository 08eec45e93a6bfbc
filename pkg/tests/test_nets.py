import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sadq import autodiff as ad
from sadq import nets
from sadq.autodiff import Node, ShapeMismatch
from sadq.nets import (
    AdamState,
    DuelingQNet,
    MlpSpec,
    ParamSet,
    PlainQNet,
    QuantileQNet,
    adam_step,
    dueling_combine,
    init_mlp,
    mlp_forward,
    mlp_graph,
    quantile_fractions,
    sync_target,
)

from helpers import finite_difference_grads, max_rel_err


class TestMlpForward:
    def test_zero_params_zero_output(self):
        spec = MlpSpec(3, (4,), 2)
        params = {k: np.zeros_like(v) for k, v in
                  init_mlp(spec, np.random.default_rng(0)).items()}
        out = mlp_forward(spec, params, np.array([1.0, -2.0, 0.5]))
        np.testing.assert_array_equal(out, np.zeros(2))

    def test_identity_single_layer(self):
        spec = MlpSpec(3, (), 3)
        params = {"w0": np.eye(3), "b0": np.zeros(3)}
        x = np.array([0.3, -1.2, 4.0])
        np.testing.assert_array_equal(mlp_forward(spec, params, x), x)

    def test_hand_evaluated_two_layer_relu(self):
        # x=(1,2): h = relu([1*1+2*0+0.5, 1*(-1)+2*2+(-0.5)]) = (1.5, 2.5)
        # out = [1.5*2 + 2.5*(-1) + 1, 1.5*0 + 2.5*1 + 0] = (1.5, 2.5)
        spec = MlpSpec(2, (2,), 2)
        params = {
            "w0": np.array([[1.0, -1.0], [0.0, 2.0]]),
            "b0": np.array([0.5, -0.5]),
            "w1": np.array([[2.0, 0.0], [-1.0, 1.0]]),
            "b1": np.array([1.0, 0.0]),
        }
        out = mlp_forward(spec, params, np.array([1.0, 2.0]))
        np.testing.assert_allclose(out, [1.5, 2.5], rtol=0, atol=1e-15)

    def test_batch_matches_rows(self):
        rng = np.random.default_rng(3)
        spec = MlpSpec(4, (8, 8), 3)
        params = init_mlp(spec, rng, dtype=np.float64)
        xb = rng.normal(size=(5, 4))
        batch = mlp_forward(spec, params, xb)
        rows = np.stack([mlp_forward(spec, params, x) for x in xb])
        np.testing.assert_allclose(batch, rows, rtol=1e-12)

    def test_wrong_input_dim_raises(self):
        spec = MlpSpec(4, (8,), 3)
        params = init_mlp(spec, np.random.default_rng(0))
        with pytest.raises(ShapeMismatch):
            mlp_forward(spec, params, np.ones(5))

    def test_graph_matches_inference(self):
        rng = np.random.default_rng(9)
        spec = MlpSpec(4, (6,), 2, activation="tanh")
        params = init_mlp(spec, rng, dtype=np.float64)
        x = rng.normal(size=(3, 4))
        nodes = {k: Node(v) for k, v in params.items()}
        np.testing.assert_allclose(
            mlp_graph(spec, nodes, x).value, mlp_forward(spec, params, x),
            rtol=1e-12,
        )

    def test_invalid_spec_rejected(self):
        with pytest.raises(ValueError):
            MlpSpec(0, (4,), 2)
        with pytest.raises(ValueError):
            MlpSpec(3, (4,), 2, activation="gelu")


class TestParamSet:
    def test_total_count(self):
        ps = ParamSet({"w": np.zeros((3, 4)), "b": np.zeros(4)})
        assert ps.total_count == 16

    def test_rejects_nonfinite(self):
        with pytest.raises(ValueError):
            ParamSet({"w": np.array([1.0, np.inf])})

    def test_load_from_shape_check(self):
        a = ParamSet({"w": np.zeros(3)})
        b = ParamSet({"w": np.zeros(4)})
        with pytest.raises(ShapeMismatch):
            a.load_from(b)

    def test_sync_target_copies_values_not_aliases(self):
        rng = np.random.default_rng(1)
        spec = MlpSpec(2, (3,), 1)
        online = ParamSet(init_mlp(spec, rng))
        target = ParamSet({k: np.zeros_like(v) for k, v in online.items()})
        sync_target(online, target)
        np.testing.assert_array_equal(target["w0"], online["w0"])
        online["w0"][0, 0] += 1.0
        assert target["w0"][0, 0] != online["w0"][0, 0]


class TestDueling:
    def test_hand_arithmetic(self):
        v = np.array([[2.0]])
        a = np.array([[1.0, -1.0]])
        q = dueling_combine(v, a)
        np.testing.assert_allclose(q, [[3.0, 1.0]], rtol=0, atol=1e-15)

    def test_constant_advantage_collapses_to_value(self):
        v = np.array([[0.7]])
        a = np.full((1, 4), 5.0)
        np.testing.assert_allclose(dueling_combine(v, a), np.full((1, 4), 0.7),
                                   rtol=1e-15)

    def test_mean_subtract_off_is_plain_sum(self):
        v = np.array([[2.0]])
        a = np.array([[1.0, -1.0]])
        np.testing.assert_array_equal(dueling_combine(v, a, False), [[3.0, 1.0]])
        a2 = np.array([[1.0, 0.0]])
        np.testing.assert_array_equal(dueling_combine(v, a2, False), [[3.0, 2.0]])

    @settings(max_examples=50, deadline=None)
    @given(
        st.lists(st.floats(-50, 50), min_size=2, max_size=6),
        st.floats(-50, 50),
        st.floats(-10, 10),
    )
    def test_argmax_invariant_to_advantage_shift(self, adv, v, shift):
        a = np.array([adv])
        q1 = dueling_combine(np.array([[v]]), a)
        q2 = dueling_combine(np.array([[v]]), a + shift)
        np.testing.assert_allclose(q1, q2, rtol=1e-9, atol=1e-9)

    def test_net_heads_consistent(self):
        rng = np.random.default_rng(5)
        net = DuelingQNet(4, 3, (16, 8), rng, dtype=np.float64)
        obs = rng.normal(size=(6, 4))
        v, a, q = net.heads(obs)
        assert v.shape == (6, 1) and a.shape == (6, 3) and q.shape == (6, 3)
        np.testing.assert_allclose(q, v + a - a.mean(axis=1, keepdims=True),
                                   rtol=1e-12)
        np.testing.assert_allclose(net.state_value(obs), v[:, 0], rtol=1e-12)
        np.testing.assert_allclose(net.q_values(obs), q, rtol=1e-12)

    def test_graph_matches_inference(self):
        rng = np.random.default_rng(6)
        net = DuelingQNet(3, 2, (8,), rng, dtype=np.float64)
        obs = rng.normal(size=(4, 3))
        got = net.q_graph(net.params.nodes(), obs).value
        np.testing.assert_allclose(got, net.q_values(obs), rtol=1e-12)


class TestQuantileNet:
    def test_fractions_are_midpoints(self):
        f = quantile_fractions(4)
        np.testing.assert_allclose(f, [1 / 8, 3 / 8, 5 / 8, 7 / 8], rtol=1e-15)
        f32 = quantile_fractions(32)
        assert f32.shape == (32,)
        assert np.all(np.diff(f32) > 0) and f32[0] > 0 and f32[-1] < 1

    def test_q_is_atom_mean(self):
        rng = np.random.default_rng(8)
        net = QuantileQNet(3, 2, (16,), rng, n_quantiles=8, dtype=np.float64)
        obs = rng.normal(size=(5, 3))
        atoms = net.atoms(obs)
        assert atoms.shape == (5, 2, 8)
        np.testing.assert_allclose(net.q_values(obs), atoms.mean(axis=-1),
                                   rtol=1e-12)

    def test_atom_layout_matches_flat_head(self):
        rng = np.random.default_rng(2)
        net = QuantileQNet(3, 2, (8,), rng, n_quantiles=4, dtype=np.float64)
        obs = rng.normal(size=(1, 3))
        flat = mlp_forward(net.spec, net.params, obs)
        np.testing.assert_array_equal(net.atoms(obs)[0, 1], flat[0, 4:8])

    def test_graph_matches_inference(self):
        rng = np.random.default_rng(4)
        net = QuantileQNet(2, 3, (8,), rng, n_quantiles=5, dtype=np.float64)
        obs = rng.normal(size=(3, 2))
        got = net.atoms_graph(net.params.nodes(), obs).value
        np.testing.assert_allclose(got, net.atoms(obs), rtol=1e-12)


class TestAdam:
    def test_first_step_moves_by_lr(self):
        params = ParamSet({"w": np.full((2, 2), 0.5)})
        state = AdamState(params, lr=1e-3)
        adam_step(params, {"w": np.ones((2, 2))}, state)
        # m_hat = 1, v_hat = 1 -> delta = lr / (1 + eps)
        np.testing.assert_allclose(params["w"], 0.5 - 1e-3, rtol=0, atol=1e-9)
        assert state.t == 1

    def test_zero_gradient_keeps_params(self):
        params = ParamSet({"w": np.array([1.0, 2.0])})
        state = AdamState(params, lr=0.1)
        adam_step(params, {"w": np.ones(2)}, state)
        after_one = params["w"].copy()
        adam_step(params, {"w": np.zeros(2)}, state)
        # moments decay but parameters still move along the remembered m;
        # a zero-gradient *first* step leaves params exactly unchanged
        fresh = ParamSet({"w": np.array([1.0, 2.0])})
        s2 = AdamState(fresh, lr=0.1)
        adam_step(fresh, {"w": np.zeros(2)}, s2)
        np.testing.assert_array_equal(fresh["w"], [1.0, 2.0])
        assert not np.array_equal(params["w"], after_one)

    def test_identical_histories_identical_updates(self):
        rng = np.random.default_rng(0)
        params = ParamSet({"a": np.ones(3), "b": np.ones(3)})
        state = AdamState(params, lr=0.01)
        for _ in range(5):
            g = rng.normal(size=3)
            adam_step(params, {"a": g, "b": g.copy()}, state)
        np.testing.assert_array_equal(params["a"], params["b"])

    def test_shape_mismatch(self):
        params = ParamSet({"w": np.ones(3)})
        state = AdamState(params, lr=0.01)
        with pytest.raises(ShapeMismatch):
            adam_step(params, {"w": np.ones(4)}, state)

    def test_matches_reference_sequence(self):
        # five steps against an independently coded scalar Adam recurrence
        lr, b1, b2, eps = 0.05, 0.9, 0.999, 1e-8
        params = ParamSet({"w": np.array([1.0])})
        state = AdamState(params, lr=lr, beta1=b1, beta2=b2, eps=eps)
        w, m, v = 1.0, 0.0, 0.0
        for t in range(1, 6):
            g = float(np.sin(t))
            m = b1 * m + (1 - b1) * g
            v = b2 * v + (1 - b2) * g * g
            w -= lr * (m / (1 - b1 ** t)) / (np.sqrt(v / (1 - b2 ** t)) + eps)
            adam_step(params, {"w": np.array([g])}, state)
            np.testing.assert_allclose(params["w"], [w], rtol=1e-12)


class TestGradientChecksOnNets:
    def test_plain_qnet_td_loss(self):
        rng = np.random.default_rng(12)
        net = PlainQNet(4, 3, (8, 6), rng, dtype=np.float64)
        obs = rng.normal(size=(7, 4))
        actions = rng.integers(0, 3, size=7)
        targets = rng.normal(size=7)
        arrays = dict(net.params.items())

        def loss_value():
            q = net.q_values(obs)
            picked = q[np.arange(7), actions]
            return float(np.mean((picked - targets) ** 2))

        nodes = net.params.nodes()
        q = net.q_graph(nodes, obs)
        picked = ad.gather_rows(q, actions)
        loss = ad.mean(ad.square(ad.sub(picked, targets)))
        analytic = ad.grad(loss, [nodes[k] for k in arrays])
        numeric = finite_difference_grads(loss_value, arrays, h=1e-5)
        for got, name in zip(analytic, arrays):
            assert max_rel_err(got, numeric[name]) < 1e-4, name

    def test_dueling_qnet_td_loss(self):
        rng = np.random.default_rng(13)
        net = DuelingQNet(3, 2, (8,), rng, dtype=np.float64)
        obs = rng.normal(size=(5, 3))
        actions = rng.integers(0, 2, size=5)
        targets = rng.normal(size=5)
        arrays = dict(net.params.items())

        def loss_value():
            q = net.q_values(obs)
            picked = q[np.arange(5), actions]
            return float(np.mean((picked - targets) ** 2))

        nodes = net.params.nodes()
        q = net.q_graph(nodes, obs)
        picked = ad.gather_rows(q, actions)
        loss = ad.mean(ad.square(ad.sub(picked, targets)))
        analytic = ad.grad(loss, [nodes[k] for k in arrays])
        numeric = finite_difference_grads(loss_value, arrays, h=1e-5)
        for got, name in zip(analytic, arrays):
            assert max_rel_err(got, numeric[name]) < 1e-4, name
