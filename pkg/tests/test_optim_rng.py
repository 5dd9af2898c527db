import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from flowvae.errors import ConsistencyError
from flowvae.optim import AdamState, OptimHyper, adam_step, l2_penalty
from flowvae.rng import RngStream


def scalar_adam(theta, grads, lr, b1=0.9, b2=0.999, eps=1e-8):
    """Textbook scalar Adam, one update per gradient in ``grads``."""
    m = v = 0.0
    for t, g in enumerate(grads, start=1):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        theta -= lr * (m / (1 - b1 ** t)) / (math.sqrt(v / (1 - b2 ** t)) + eps)
    return theta


class TestAdam:
    def test_first_step_moves_by_lr(self):
        # bias correction makes the first update lr * sign(g), up to eps
        params = {"w": np.array([1.0, -2.0])}
        adam_step(params, {"w": np.array([0.5, -3.0])}, AdamState(), OptimHyper(0.1))
        np.testing.assert_allclose(params["w"], [0.9, -1.9], atol=1e-7)

    def test_matches_scalar_oracle(self):
        seq = [0.3, -1.2, 0.7, 2.0, -0.1]
        params = {"w": np.array([0.25])}
        state, hyper = AdamState(), OptimHyper(0.01)
        for g in seq:
            adam_step(params, {"w": np.array([g])}, state, hyper)
        assert state.t == 5
        assert params["w"][0] == pytest.approx(scalar_adam(0.25, seq, 0.01), abs=1e-15)

    def test_in_place_update(self):
        w = np.zeros(3)
        params = {"w": w}
        adam_step(params, {"w": np.ones(3)}, AdamState(), OptimHyper(1e-3))
        assert params["w"] is w
        assert np.all(w < 0)

    def test_missing_gradient(self):
        with pytest.raises(ConsistencyError):
            adam_step({"a": np.zeros(1), "b": np.zeros(1)}, {"a": np.zeros(1)}, AdamState(), OptimHyper(0.1))

    def test_shape_mismatch(self):
        with pytest.raises(ConsistencyError):
            adam_step({"a": np.zeros(2)}, {"a": np.zeros(3)}, AdamState(), OptimHyper(0.1))

    def test_zero_gradient_keeps_params(self):
        params = {"w": np.array([3.0])}
        adam_step(params, {"w": np.zeros(1)}, AdamState(), OptimHyper(0.1))
        assert params["w"][0] == 3.0

    @pytest.mark.parametrize("kwargs", [{"beta1": 1.0}, {"beta2": 0.0}, {"epsilon": 0.0}, {"weight_decay": -1}])
    def test_bad_hyper(self, kwargs):
        with pytest.raises(ValueError):
            OptimHyper(0.1, **kwargs)

    def test_minimizes_quadratic(self):
        params = {"w": np.array([5.0, -3.0])}
        state, hyper = AdamState(), OptimHyper(0.1)
        for _ in range(500):
            adam_step(params, {"w": 2 * params["w"]}, state, hyper)
        np.testing.assert_allclose(params["w"], 0.0, atol=1e-2)


class TestL2:
    def test_penalty_and_grad(self):
        k = {"k": np.array([[1.0, -2.0], [0.5, 0.0]])}
        penalty, grads = l2_penalty(k, 1e-5)
        assert penalty == pytest.approx(1e-5 * 5.25)
        np.testing.assert_allclose(grads["k"], 2e-5 * k["k"])

    def test_grad_matches_finite_difference(self):
        w = RngStream(0).normal((3, 2))
        _, grads = l2_penalty({"k": w}, 0.3)
        h = 1e-6
        num = np.zeros_like(w)
        for idx in np.ndindex(w.shape):
            old = w[idx]
            w[idx] = old + h
            up = l2_penalty({"k": w}, 0.3)[0]
            w[idx] = old - h
            down = l2_penalty({"k": w}, 0.3)[0]
            w[idx] = old
            num[idx] = (up - down) / (2 * h)
        np.testing.assert_allclose(grads["k"], num, atol=1e-8)

    def test_negative_decay(self):
        with pytest.raises(ValueError):
            l2_penalty({}, -1.0)


class TestRng:
    def test_reproducible(self):
        np.testing.assert_array_equal(RngStream(5).normal(10), RngStream(5).normal(10))

    def test_forks_differ_and_repeat(self):
        a, b = RngStream(5).fork(1).uniform(4), RngStream(5).fork(2).uniform(4)
        assert not np.array_equal(a, b)
        np.testing.assert_array_equal(a, RngStream(5).fork(1).uniform(4))

    def test_normal_shape(self):
        assert RngStream(0).normal((3, 5)).shape == (3, 5)
        assert RngStream(0).normal(7).shape == (7,)

    def test_normal_moments(self):
        z = RngStream(1).normal(200_000)
        assert abs(z.mean()) < 0.01
        assert abs(z.std() - 1.0) < 0.01

    def test_negative_seed(self):
        with pytest.raises(ValueError):
            RngStream(-1)

    @settings(max_examples=50)
    @given(st.integers(0, 2**31), st.integers(1, 50))
    def test_permutation_is_permutation(self, seed, n):
        p = RngStream(seed).permutation(n)
        np.testing.assert_array_equal(np.sort(p), np.arange(n))
