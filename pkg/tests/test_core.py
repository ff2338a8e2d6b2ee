import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from afua.core import (
    ConfigurationError,
    DimensionError,
    GruParams,
    IntegratorConfig,
    ModelParams,
    activation,
    activation_grad,
    gates,
    gru_reference,
    integrate_continuous,
    run_discrete,
    sigmoid,
    step_discrete,
)


def scalar_f(y):
    # standalone evaluation of the rectified saturating function
    r = y if y > 0 else 0.0
    return r * r / (1 + r * r)


def random_params(rng, m=2, n=2, scale=1.0):
    return ModelParams(W=rng.normal(0, scale, (m, n)), Wz=rng.normal(0, scale, (m, n)),
                       U=rng.normal(0, scale, (m, m)), Uz=rng.normal(0, scale, (m, m)),
                       b=rng.normal(0, scale, m), bz=rng.normal(0, scale, m))


class TestActivation:
    @pytest.mark.parametrize("y, expected", [(-2.0, 0.0), (1.0, 0.5), (3.0, 0.9), (0.0, 0.0)])
    def test_examples(self, y, expected):
        assert activation(y) == pytest.approx(expected, abs=1e-15)

    def test_large_inputs_do_not_overflow(self):
        with np.errstate(all="raise"):
            assert activation(1e200) == 1.0
            assert activation_grad(1e200) == pytest.approx(0.0, abs=1e-100)

    @given(st.floats(-1e6, 1e6, allow_nan=False))
    def test_range(self, y):
        assert 0.0 <= activation(y) <= 1.0

    @given(st.floats(-100, 100), st.floats(-100, 100))
    def test_monotone(self, a, b):
        lo, hi = sorted((a, b))
        assert activation(lo) <= activation(hi)

    def test_matches_scalar_formula(self):
        ys = np.linspace(-5, 5, 101)
        np.testing.assert_allclose(activation(ys), [scalar_f(y) for y in ys], rtol=1e-14)

    def test_derivative_by_finite_differences(self):
        ys = np.linspace(-3, 6, 200)
        d = 1e-6
        numeric = (activation(ys + d) - activation(ys - d)) / (2 * d)
        np.testing.assert_allclose(activation_grad(ys), numeric, atol=1e-8)
        assert activation_grad(0.0) == 0.0


class TestGates:
    def test_zero_params(self):
        z, hc = gates(ModelParams.zeros(), np.array([0.3, -4.0]), np.ones(2))
        np.testing.assert_array_equal(z, 0.0)
        np.testing.assert_array_equal(hc, 0.0)

    def test_unit_bias(self):
        p = ModelParams.zeros()
        p.b[:] = 1.0
        p.bz[:] = 1.0
        z, hc = gates(p, np.array([5.0, 7.0]), np.ones(2))
        np.testing.assert_allclose(z, [0.5, 0.5])
        np.testing.assert_allclose(hc, [0.5, 0.5])

    def test_identity_weights(self):
        p = ModelParams.zeros()
        p.W[:] = np.eye(2)
        p.Wz[:] = np.eye(2)
        z, hc = gates(p, np.array([3.0, -2.0]), np.ones(2))
        expected = [scalar_f(3.0), scalar_f(-2.0)]
        np.testing.assert_allclose(z, expected, rtol=1e-15)
        np.testing.assert_allclose(hc, expected, rtol=1e-15)
        np.testing.assert_allclose(z, [0.9, 0.0], rtol=1e-15)

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            gates(ModelParams.zeros(), np.zeros(3), np.ones(2))
        with pytest.raises(DimensionError):
            ModelParams(W=np.zeros((2, 2)), Wz=np.zeros((2, 3)), U=np.zeros((2, 2)),
                        Uz=np.zeros((2, 2)), b=np.zeros(2), bz=np.zeros(2))


class TestStepDiscrete:
    def test_closed_gate_holds_state(self):
        p = ModelParams.zeros()
        p.bz[:] = -50.0
        p.b[:] = 2.0
        h = np.array([0.3, 1.7])
        np.testing.assert_array_equal(step_discrete(p, np.array([0.5, 0.5]), h), h)

    def test_open_gate_tends_to_twice_candidate(self):
        p = ModelParams.zeros()
        p.bz[:] = 1e6
        p.b[:] = 1.0
        h_next = step_discrete(p, np.zeros(2), np.array([0.2, 1.9]))
        np.testing.assert_allclose(h_next, [1.0, 1.0], atol=1e-9)

    def test_hand_evaluation(self):
        p = ModelParams.zeros()
        p.W[:] = np.eye(2)
        p.Wz[:] = np.eye(2)
        h_next = step_discrete(p, np.array([3.0, -2.0]), np.ones(2))
        z0 = h0 = scalar_f(3.0)
        np.testing.assert_allclose(h_next, [(1 - z0) * 1 + 2 * z0 * h0, 1.0], rtol=1e-14)
        np.testing.assert_allclose(h_next, [1.72, 1.0], rtol=1e-14)

    @settings(max_examples=60, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_state_stays_in_open_interval(self, seed):
        rng = np.random.default_rng(seed)
        p = random_params(rng, scale=3.0)
        frames = rng.uniform(-2, 2, (300, 2))
        traj = run_discrete(p, frames, h0=rng.uniform(0.01, 1.99, 2), return_trajectory=True)
        # (1 - z)^T can underflow to zero when z sits near 1 for hundreds of steps
        assert np.all(traj >= 0) and np.all(traj <= 2)

    @settings(max_examples=60, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_state_strictly_inside_for_moderate_weights(self, seed):
        rng = np.random.default_rng(seed)
        p = random_params(rng, scale=1.0)
        frames = rng.uniform(0, 1, (60, 2))
        traj = run_discrete(p, frames, h0=rng.uniform(0.01, 1.99, 2), return_trajectory=True)
        assert np.all(traj > 0) and np.all(traj < 2)

    def test_larger_gate_moves_state_further(self):
        rng = np.random.default_rng(3)
        from afua.core import update
        for _ in range(200):
            h = rng.uniform(0.01, 1.99, 2)
            hc = rng.uniform(0, 0.999, 2)
            if np.any(np.isclose(h, 2 * hc)):
                continue
            z1 = rng.uniform(0, 0.5, 2)
            z2 = z1 + rng.uniform(0.01, 0.49, 2)
            assert np.all(np.abs(update(h, z2, hc) - h) > np.abs(update(h, z1, hc) - h))

    def test_batched_matches_single(self):
        rng = np.random.default_rng(5)
        p = random_params(rng)
        frames = rng.uniform(0, 1, (4, 30, 2))
        batched = run_discrete(p, frames)
        for i in range(4):
            np.testing.assert_allclose(batched[i], run_discrete(p, frames[i]), rtol=1e-14)


class TestIntegrateContinuous:
    def test_refuses_coarse_step(self):
        with pytest.raises(ConfigurationError):
            IntegratorConfig(tau=1.0, dt=0.1)
        IntegratorConfig(tau=1.0, dt=0.05)

    def test_exponential_relaxation(self):
        # U = Uz = 0 makes z and h_cand independent of h
        p = ModelParams.zeros(2, 1)
        p.W[:] = [[0.6], [2.0]]
        p.Wz[:] = [[0.7], [1.5]]
        x = np.ones((1, 1))
        z_hat, hc = gates(p, x[0], np.ones(2))
        tau = 1.0
        cfg = IntegratorConfig(tau=tau, dt=tau / 200)
        for j in range(2):
            period = tau / z_hat[j]
            h = integrate_continuous(p, x, period, cfg)[0]
            gap0 = abs(1.0 - 2 * hc[j])
            gap = abs(h[j] - 2 * hc[j])
            assert gap / gap0 == pytest.approx(math.exp(-1), rel=0.01)

    def test_frozen_when_gate_closed(self):
        p = ModelParams.zeros()
        p.b[:] = 3.0
        h0 = np.array([0.4, 1.6])
        traj = integrate_continuous(p, np.ones((10, 2)), 1.0, IntegratorConfig(tau=1.0), h0=h0)
        np.testing.assert_array_equal(traj, np.broadcast_to(h0, traj.shape))

    def test_step_input_matches_discrete(self):
        p = ModelParams.zeros()
        p.W[:] = [[1.5, 0.0], [0.0, 0.8]]
        p.Wz[:] = [[0.5, 0.5], [0.5, 0.5]]
        p.b[:] = [0.5, 0.8]
        p.bz[:] = [0.6, 0.6]
        frames = np.zeros((60, 2))
        frames[20:] = [1.0, 0.5]
        cont = integrate_continuous(p, frames, 1.0, IntegratorConfig(tau=1.0))[-1]
        disc = run_discrete(p, frames)
        np.testing.assert_allclose(cont, disc, rtol=0.05)

    def test_forward_euler_converges_to_rk4(self):
        rng = np.random.default_rng(0)
        p = random_params(rng)
        frames = rng.uniform(0, 1, (5, 2))
        ref = integrate_continuous(p, frames, 1.0, IntegratorConfig(tau=1.0, dt=1e-3))
        errs = [np.abs(integrate_continuous(p, frames, 1.0,
                                            IntegratorConfig(1.0, dt, "forward-euler")) - ref).max()
                for dt in (0.05, 0.02, 0.01, 0.005)]
        assert all(a > b for a, b in zip(errs, errs[1:]))

    def test_deterministic(self):
        rng = np.random.default_rng(1)
        p = random_params(rng)
        frames = rng.uniform(0, 1, (20, 2))
        a = integrate_continuous(p, frames, 1.0, IntegratorConfig(tau=1.0))
        b = integrate_continuous(p, frames, 1.0, IntegratorConfig(tau=1.0))
        assert np.array_equal(a, b)

    def test_continuous_path_stays_in_range(self):
        rng = np.random.default_rng(2)
        for _ in range(10):
            p = random_params(rng, scale=3.0)
            traj = integrate_continuous(p, rng.uniform(-1, 1, (30, 2)), 1.0,
                                        IntegratorConfig(tau=1.0, dt=0.02))
            assert np.all(traj > 0) and np.all(traj < 2)


class TestGruReference:
    def _params(self, rng, m=3, n=2):
        return GruParams(*(rng.normal(0, 1, s) for s in [(m, n)] * 3 + [(m, m)] * 3))

    def test_sigmoid_symmetry_is_exact(self):
        y = np.random.default_rng(0).normal(0, 10, 10000)
        assert np.array_equal(sigmoid(-y), 1.0 - sigmoid(y))

    def test_saturated_update_gate_holds_state(self):
        rng = np.random.default_rng(1)
        p = self._params(rng, n=3)
        p.Wz[:] = 0.0
        p.Uz[:] = 0.0
        p.Wz[:, 2] = 1e3  # constant third input carries the huge bias
        h0 = rng.uniform(-1, 1, 3)
        xs = np.column_stack([rng.normal(size=(5, 2)), np.ones(5)])
        np.testing.assert_allclose(gru_reference(p, xs, h0), h0, rtol=0, atol=1e-12)

    def test_closed_update_gate_takes_candidate(self):
        rng = np.random.default_rng(2)
        p = self._params(rng, n=3)
        p.Wz[:] = 0.0
        p.Uz[:] = 0.0
        p.Wz[:, 2] = -1e3
        h0 = rng.uniform(-1, 1, 3)
        x = np.array([[0.3, -0.4, 1.0]])
        r = sigmoid(p.Wr @ x[0] + p.Ur @ h0)
        expected = np.tanh(p.W @ x[0] + p.U @ (r * h0))
        np.testing.assert_allclose(gru_reference(p, x, h0), expected, atol=1e-12)

    def test_update_gate_inversion_is_exact(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            p = self._params(rng)
            xs = rng.normal(size=(25, 2))
            h0 = rng.uniform(-1, 1, 3)
            a = gru_reference(p, xs, h0)
            b = gru_reference(p.with_inverted_update(), xs, h0, inverted_update=True)
            assert np.array_equal(a, b)

    def test_shape_mismatch(self):
        rng = np.random.default_rng(4)
        with pytest.raises(DimensionError):
            gru_reference(self._params(rng), np.zeros((3, 5)), np.zeros(3))
