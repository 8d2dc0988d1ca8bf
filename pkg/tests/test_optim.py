import numpy as np
import pytest

from sqlisynth.optim import Adam, AdamState, adam_step
from sqlisynth.tensor import ShapeError, Tensor


def hand_adam(lr, b1, b2, eps, grads):
    """Independent two-moment Adam oracle on a single scalar parameter."""
    p, m, v = 0.0, 0.0, 0.0
    for t, g in enumerate(grads, start=1):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        mhat = m / (1 - b1**t)
        vhat = v / (1 - b2**t)
        p -= lr * mhat / (np.sqrt(vhat) + eps)
    return p


class TestAdamStep:
    def test_zero_grad_leaves_params_unchanged(self):
        p = np.array([1.0, -2.0, 3.0])
        state = AdamState(lr=0.1).init([p])
        adam_step([p], [np.zeros(3)], state)
        assert np.array_equal(p, [1.0, -2.0, 3.0])
        assert state.t == 1

    @pytest.mark.parametrize("g", [1e-6, 0.5, 3.0, -7.0])
    def test_first_step_magnitude_is_lr(self, g):
        # bias correction makes mhat/(sqrt(vhat)+eps) ~ sign(g) at t=1;
        # epsilon shaves up to eps/|g| off the ratio, hence the 2% band
        p = np.array([0.0])
        state = AdamState(lr=0.01).init([p])
        adam_step([p], [np.array([g])], state)
        assert abs(abs(p[0]) - 0.01) < 0.01 * 0.02
        assert np.sign(p[0]) == -np.sign(g)

    def test_two_steps_match_hand_oracle(self):
        lr, b1, b2, eps = 0.1, 0.9, 0.999, 1e-8
        p = np.array([0.0])
        state = AdamState(lr=lr, beta1=b1, beta2=b2, epsilon=eps).init([p])
        adam_step([p], [np.array([1.0])], state)
        adam_step([p], [np.array([-1.0])], state)
        want = hand_adam(lr, b1, b2, eps, [1.0, -1.0])
        assert abs(p[0] - want) < 1e-12
        assert state.t == 2

    def test_t_strictly_increases(self):
        p = np.array([0.0])
        state = AdamState().init([p])
        for expect in (1, 2, 3):
            adam_step([p], [np.array([0.5])], state)
            assert state.t == expect

    def test_shape_mismatch_rejected(self):
        p = np.array([0.0, 0.0])
        state = AdamState().init([p])
        with pytest.raises(ShapeError):
            adam_step([p], [np.array([1.0])], state)


class TestAdamOverTensors:
    def test_step_reads_grads_and_updates(self):
        x = Tensor([2.0], requires_grad=True)
        opt = Adam([x], lr=0.05)
        from sqlisynth.tensor import mul, tsum

        loss = tsum(mul(x, x))
        loss.backward()
        opt.step()
        assert x.data[0] < 2.0
        assert opt.t == 1
        opt.zero_grad()
        assert x.grad is None

    def test_missing_grad_treated_as_zero(self):
        x = Tensor([1.5], requires_grad=True)
        opt = Adam([x])
        opt.step()
        assert x.data[0] == 1.5
