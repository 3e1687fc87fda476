"""Network engine tests: the core guarantee is the finite-difference check."""

import numpy as np
import pytest

from theremin_rl import neuralnet as nn
from theremin_rl.neuralnet import Gradients, Mlp, OutputActivation


def finite_difference_grads(net, x, cotangent, h=1e-5):
    """Central differences of L = cotangent . f(x) over parameters and input."""
    def loss():
        y, _ = nn.forward(net, x)
        return float(np.dot(cotangent, y))

    param_grads = []
    for p in net.weights + net.biases:
        g = np.zeros_like(p)
        it = np.nditer(p, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            original = p[idx]
            p[idx] = original + h
            up = loss()
            p[idx] = original - h
            down = loss()
            p[idx] = original
            g[idx] = (up - down) / (2.0 * h)
        param_grads.append(g)
    input_grad = np.zeros_like(x)
    for i in range(x.size):
        original = x[i]
        x[i] = original + h
        up = loss()
        x[i] = original - h
        down = loss()
        x[i] = original
        input_grad[i] = (up - down) / (2.0 * h)
    return param_grads, input_grad


def vector_rel_error(a, b):
    a = np.concatenate([v.ravel() for v in a]) if isinstance(a, list) else a.ravel()
    b = np.concatenate([v.ravel() for v in b]) if isinstance(b, list) else b.ravel()
    return np.linalg.norm(a - b) / max(np.linalg.norm(a), np.linalg.norm(b), 1e-8)


class TestForward:
    def test_zero_net_identity_output_is_zero(self):
        net = nn.init_mlp(4, 2, seed=0, hidden=8)
        for w in net.weights:
            w[:] = 0.0
        y, _ = nn.forward(net, np.ones(4))
        assert np.array_equal(y, np.zeros(2))

    def test_tanh_output_in_open_unit_interval(self):
        net = nn.init_mlp(6, 3, OutputActivation.TANH, seed=1)
        rng = np.random.default_rng(2)
        for _ in range(20):
            y, _ = nn.forward(net, rng.standard_normal(6) * 10)
            assert np.all(y > -1.0) and np.all(y < 1.0)

    def test_hand_traced_single_unit_chain(self):
        # every layer: z = 2 * x - 1 with ReLU between, identity at the end
        net = Mlp([np.array([[2.0]])] * 4, [np.array([-1.0])] * 4,
                  OutputActivation.IDENTITY)
        # x=1 -> z=1 -> relu 1 -> z=1 -> relu 1 -> z=1 -> relu 1 -> y=1
        y, _ = nn.forward(net, np.array([1.0]))
        assert y[0] == pytest.approx(1.0)
        # x=0.25 -> z=-0.5 -> relu 0 -> z=-1 -> 0 -> z=-1 -> 0 -> y=-1
        y, _ = nn.forward(net, np.array([0.25]))
        assert y[0] == pytest.approx(-1.0)

    def test_batch_equals_per_row(self):
        net = nn.init_mlp(5, 2, OutputActivation.TANH, seed=3)
        rng = np.random.default_rng(4)
        xs = rng.standard_normal((7, 5))
        batch_y, _ = nn.forward(net, xs)
        for i in range(7):
            row_y, _ = nn.forward(net, xs[i])
            assert np.allclose(batch_y[i], row_y, atol=1e-15)

    def test_forward_never_mutates_parameters(self):
        net = nn.init_mlp(5, 2, seed=5)
        snapshot = [p.copy() for p in net.weights + net.biases]
        nn.forward(net, np.ones(5))
        for before, after in zip(snapshot, net.weights + net.biases):
            assert np.array_equal(before, after)

    def test_dimension_mismatch(self):
        net = nn.init_mlp(5, 2, seed=6)
        with pytest.raises(ValueError):
            nn.forward(net, np.ones(4))


class TestBackward:
    def test_zero_cotangent_gives_zero_gradients(self):
        net = nn.init_mlp(4, 3, seed=7)
        y, cache = nn.forward(net, np.ones(4))
        grads, dx = nn.backward(net, cache, np.zeros(3))
        assert all(np.all(g == 0) for g in grads.weights + grads.biases)
        assert np.all(dx == 0)

    @pytest.mark.parametrize("trial", range(10))
    def test_matches_finite_differences(self, trial):
        act = OutputActivation.TANH if trial % 2 else OutputActivation.IDENTITY
        net = nn.init_mlp(5, 3, act, seed=trial, hidden=8)
        rng = np.random.default_rng(100 + trial)
        x = rng.standard_normal(5)
        cot = rng.standard_normal(3)
        _, cache = nn.forward(net, x)
        grads, dx = nn.backward(net, cache, cot)
        fd_params, fd_x = finite_difference_grads(net, x, cot)
        assert vector_rel_error(grads.weights + grads.biases, fd_params) < 1e-6
        assert vector_rel_error(dx, fd_x) < 1e-6

    def test_batch_gradients_sum_rows(self):
        net = nn.init_mlp(4, 2, seed=8)
        rng = np.random.default_rng(9)
        xs = rng.standard_normal((3, 4))
        cots = rng.standard_normal((3, 2))
        _, cache = nn.forward(net, xs)
        batch_grads, _ = nn.backward(net, cache, cots)
        summed = None
        for i in range(3):
            _, cache_i = nn.forward(net, xs[i])
            g, _ = nn.backward(net, cache_i, cots[i])
            if summed is None:
                summed = g
            else:
                summed = Gradients(
                    [a + b for a, b in zip(summed.weights, g.weights)],
                    [a + b for a, b in zip(summed.biases, g.biases)])
        assert vector_rel_error(batch_grads.weights + batch_grads.biases,
                                summed.weights + summed.biases) < 1e-12


class TestAdam:
    def test_zero_gradient_no_change(self):
        net = nn.init_mlp(3, 2, seed=10)
        before = [p.copy() for p in net.weights + net.biases]
        zero = Gradients([np.zeros_like(w) for w in net.weights],
                         [np.zeros_like(b) for b in net.biases])
        nn.adam_step(net, zero, lr=0.001)
        for a, b in zip(before, net.weights + net.biases):
            assert np.array_equal(a, b)

    def test_first_step_is_signed_learning_rate(self):
        net = nn.init_mlp(3, 2, seed=11)
        before = [p.copy() for p in net.weights + net.biases]
        g = Gradients([np.full_like(w, 0.37) for w in net.weights],
                      [np.full_like(b, -0.8) for b in net.biases])
        nn.adam_step(net, g, lr=0.001)
        for b_w, w in zip(before[:4], net.weights):
            assert np.allclose(w - b_w, -0.001, atol=1e-6)
        for b_b, b in zip(before[4:], net.biases):
            assert np.allclose(b - b_b, 0.001, atol=1e-6)

    def test_deterministic(self):
        def run():
            net = nn.init_mlp(3, 2, seed=12)
            g = Gradients([np.full_like(w, 0.5) for w in net.weights],
                          [np.full_like(b, 0.5) for b in net.biases])
            for _ in range(5):
                nn.adam_step(net, g, lr=0.01)
            return np.concatenate([p.ravel() for p in net.weights + net.biases])
        assert np.array_equal(run(), run())

    def test_counter_increments(self):
        net = nn.init_mlp(3, 2, seed=13)
        zero = Gradients([np.zeros_like(w) for w in net.weights],
                         [np.zeros_like(b) for b in net.biases])
        assert net.adam_t == 0
        nn.adam_step(net, zero, lr=0.001)
        assert net.adam_t == 1


class TestInit:
    def test_same_seed_bit_identical(self):
        a = nn.init_mlp(7, 3, seed=42)
        b = nn.init_mlp(7, 3, seed=42)
        for pa, pb in zip(a.weights + a.biases, b.weights + b.biases):
            assert np.array_equal(pa, pb)

    def test_zero_biases_and_glorot_bounds(self):
        net = nn.init_mlp(10, 4, seed=14)
        for b in net.biases:
            assert np.all(b == 0.0)
        sizes = [10, 64, 64, 64, 4]
        for w, fan_in, fan_out in zip(net.weights, sizes[:-1], sizes[1:]):
            bound = np.sqrt(6.0 / (fan_in + fan_out))
            assert np.max(np.abs(w)) <= bound
            assert w.shape == (fan_in, fan_out)


class TestPolyak:
    def test_tau_zero_keeps_target(self):
        target = nn.init_mlp(3, 2, seed=15)
        online = nn.init_mlp(3, 2, seed=16)
        snapshot = [p.copy() for p in target.weights + target.biases]
        nn.polyak_blend(target, online, 0.0)
        for a, b in zip(snapshot, target.weights + target.biases):
            assert np.array_equal(a, b)

    def test_tau_one_copies_online(self):
        target = nn.init_mlp(3, 2, seed=17)
        online = nn.init_mlp(3, 2, seed=18)
        nn.polyak_blend(target, online, 1.0)
        for a, b in zip(target.weights + target.biases,
                        online.weights + online.biases):
            assert np.allclose(a, b, atol=1e-15)

    def test_scalar_blend_value(self):
        target = Mlp([np.array([[0.0]])], [np.array([0.0])],
                     OutputActivation.IDENTITY)
        online = Mlp([np.array([[1.0]])], [np.array([1.0])],
                     OutputActivation.IDENTITY)
        nn.polyak_blend(target, online, 0.05)
        assert target.weights[0][0, 0] == pytest.approx(0.05)

    def test_blend_history_is_exponential_average(self):
        # scalar net: after k blends, target = 1 - (1 - tau)^k for online == 1
        target = Mlp([np.array([[0.0]])], [np.array([0.0])],
                     OutputActivation.IDENTITY)
        online = Mlp([np.array([[1.0]])], [np.array([1.0])],
                     OutputActivation.IDENTITY)
        tau = 0.05
        for k in range(1, 50):
            nn.polyak_blend(target, online, tau)
            expected = 1.0 - (1.0 - tau) ** k
            assert abs(target.weights[0][0, 0] - expected) < 1e-9


class TestSerialization:
    def test_roundtrip_exact(self, tmp_path):
        net = nn.init_mlp(9, 4, OutputActivation.TANH, seed=19)
        path = tmp_path / "net.policy"
        nn.save_mlp(net, path)
        loaded = nn.load_mlp(path)
        assert loaded.out_act is OutputActivation.TANH
        for a, b in zip(net.weights + net.biases,
                        loaded.weights + loaded.biases):
            assert np.array_equal(a, b)

    def test_payload_is_little_endian_float64(self, tmp_path):
        net = Mlp([np.array([[1.5, -2.0]])], [np.array([0.25, 0.0])],
                  OutputActivation.IDENTITY)
        path = tmp_path / "tiny.policy"
        nn.save_mlp(net, path)
        raw = path.read_bytes()
        assert raw[:4] == b"MLPB"
        payload = np.frombuffer(raw[-32:], dtype="<f8")
        assert np.array_equal(payload, [1.5, -2.0, 0.25, 0.0])

    def test_rejects_foreign_files(self, tmp_path):
        path = tmp_path / "junk.policy"
        path.write_bytes(b"not a network at all")
        with pytest.raises(ValueError):
            nn.load_mlp(path)
