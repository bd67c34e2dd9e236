import numpy as np
import pytest

from modalrec import autodiff as ad
from modalrec.autodiff import Parameter
from modalrec.optim import AdamState, adam_step, clip_global_norm, finite_difference_check, zero_grads


def test_adam_first_step_moves_by_lr():
    # bias correction makes the first step lr * sign(g) up to eps
    p = Parameter(np.asarray(0.0, dtype=np.float64), name="p")
    p.grad = np.asarray(1.0)
    adam_step({"p": p}, AdamState(), lr=0.1)
    assert p.data == pytest.approx(-0.1, rel=1e-6)


def test_adam_zero_gradient_leaves_param_but_decays_moments():
    p = Parameter(np.asarray(1.0, dtype=np.float64), name="p")
    state = AdamState()
    p.grad = np.asarray(2.0)
    adam_step({"p": p}, state, lr=0.01)
    m_before = state.m["p"].copy()
    value_before = p.data.copy()
    p.grad = np.asarray(0.0)
    adam_step({"p": p}, state, lr=0.01)
    assert state.m["p"] == pytest.approx(0.9 * m_before)
    # v decayed, m decayed, param still moves slightly on residual momentum
    assert state.t["p"] == 2
    assert p.data != value_before


def test_adam_frozen_param_bit_identical():
    p = Parameter(np.asarray([1.0, 2.0], dtype=np.float64), trainable=False, name="p")
    p.grad = np.asarray([5.0, 5.0])
    before = p.data.tobytes()
    state = AdamState()
    adam_step({"p": p}, state, lr=0.5)
    assert p.data.tobytes() == before
    assert "p" not in state.t


def test_adam_rejects_non_finite_gradient():
    p = Parameter(np.asarray(0.0, dtype=np.float64), name="p")
    p.grad = np.asarray(np.nan)
    with pytest.raises(FloatingPointError):
        adam_step({"p": p}, AdamState(), lr=0.1)


def test_clip_global_norm():
    a = Parameter(np.zeros(3, dtype=np.float64), name="a")
    a.grad = np.asarray([3.0, 0.0, 4.0])
    norm = clip_global_norm({"a": a}, max_norm=1.0)
    assert norm == pytest.approx(5.0)
    np.testing.assert_allclose(a.grad, [0.6, 0.0, 0.8])


def test_fd_check_quadratic():
    p = Parameter(np.asarray([1.0, -2.0, 3.0], dtype=np.float64), name="p")
    err = finite_difference_check(lambda: ad.sum_all(ad.mul(p, p)), {"p": p})
    assert err < 1e-8


def test_fd_check_unused_parameter_has_zero_gradient():
    used = Parameter(np.asarray([2.0], dtype=np.float64), name="u")
    unused = Parameter(np.asarray([5.0], dtype=np.float64), name="x")
    zero_grads({"u": used, "x": unused})
    out = ad.sum_all(ad.mul(used, used))
    out.backward()
    assert np.all(unused.grad == 0.0)
    err = finite_difference_check(lambda: ad.sum_all(ad.mul(used, used)),
                                  {"u": used, "x": unused})
    assert err < 1e-8


def test_fd_check_requires_float64():
    p = Parameter(np.asarray([1.0], dtype=np.float32), name="p")
    with pytest.raises(ValueError):
        finite_difference_check(lambda: ad.sum_all(p), {"p": p})
