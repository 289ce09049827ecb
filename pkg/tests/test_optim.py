"""Adam updates against step-by-step scalar recomputation."""

import numpy as np
import pytest

from earbcg.autodiff import Tensor
from earbcg.optim import Adam, halved_lr


def scalar_adam_steps(p0, grads, lr, b1=0.9, b2=0.999, eps=1e-8):
    """Reference trajectory computed with plain Python floats."""
    p, m, v = p0, 0.0, 0.0
    for t, g in enumerate(grads, start=1):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        mhat = m / (1 - b1 ** t)
        vhat = v / (1 - b2 ** t)
        p -= lr * mhat / (vhat ** 0.5 + eps)
    return p


class TestAdam:
    def test_single_step_matches_reference(self):
        p = Tensor(np.array([1.0]), requires_grad=True)
        opt = Adam({"p": p}, lr=0.1)
        p.grad = np.array([0.5])
        opt.step()
        assert p.data[0] == pytest.approx(scalar_adam_steps(1.0, [0.5], 0.1), abs=1e-15)

    def test_three_steps_match_reference(self):
        p = Tensor(np.array([2.0]), requires_grad=True)
        opt = Adam({"p": p}, lr=0.05)
        grads = [0.3, -0.7, 1.1]
        for g in grads:
            p.grad = np.array([g])
            opt.step()
        assert p.data[0] == pytest.approx(scalar_adam_steps(2.0, grads, 0.05), abs=1e-14)

    def test_first_step_size_is_about_lr(self):
        # bias correction makes the first update lr-sized for any grad
        # scale; eps shaves a little off the smallest one
        for g in (1e-6, 1.0, 1e6):
            p = Tensor(np.array([0.0]), requires_grad=True)
            opt = Adam({"p": p}, lr=0.01)
            p.grad = np.array([g])
            opt.step()
            assert abs(p.data[0]) == pytest.approx(0.01, rel=0.02)

    def test_updates_each_tensor_independently(self):
        a = Tensor(np.zeros(2), requires_grad=True)
        b = Tensor(np.zeros(3), requires_grad=True)
        opt = Adam({"a": a, "b": b}, lr=0.1)
        a.grad = np.array([1.0, -1.0])
        b.grad = np.zeros(3)
        opt.step()
        assert a.data[0] < 0 < a.data[1]
        assert np.array_equal(b.data, np.zeros(3))

    def test_skips_params_without_grad(self):
        a = Tensor(np.ones(2), requires_grad=True)
        opt = Adam({"a": a}, lr=0.1)
        opt.step()  # no grad accumulated yet
        assert np.array_equal(a.data, np.ones(2))

    def test_zero_grad_clears(self):
        a = Tensor(np.ones(2), requires_grad=True)
        opt = Adam({"a": a}, lr=0.1)
        a.grad = np.ones(2)
        opt.zero_grad()
        assert a.grad is None

    def test_lr_mutable_between_steps(self):
        p = Tensor(np.array([0.0]), requires_grad=True)
        opt = Adam({"p": p}, lr=0.1)
        p.grad = np.array([1.0])
        opt.step()
        first = abs(p.data[0])
        opt.lr = 0.0
        p.grad = np.array([1.0])
        opt.step()
        assert abs(p.data[0]) == pytest.approx(first, abs=1e-15)


class TestSchedule:
    def test_halves_every_20_epochs(self):
        assert halved_lr(1e-4, 0) == 1e-4
        assert halved_lr(1e-4, 19) == 1e-4
        assert halved_lr(1e-4, 20) == 5e-5
        assert halved_lr(1e-4, 39) == 5e-5
        assert halved_lr(1e-4, 40) == 2.5e-5
        assert halved_lr(1e-4, 99) == 1e-4 * 0.5 ** 4

    def test_custom_interval(self):
        assert halved_lr(1.0, 5, every=5) == 0.5
