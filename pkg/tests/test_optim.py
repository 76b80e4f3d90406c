"""Adam behaviour: per-group rates, clipping, skip on bad gradients."""

import numpy as np
import pytest

from thrnn.autodiff import Tensor
from thrnn.optim import Adam, ParamGroup


def _fresh(lr_a=0.1, lr_b=0.01, clip=None):
    a = Tensor(np.zeros(3))
    b = Tensor(np.zeros(3))
    opt = Adam([ParamGroup("a", [a], lr=lr_a),
                ParamGroup("b", [b], lr=lr_b, clip_norm=clip)])
    return a, b, opt


def test_first_step_moves_by_lr():
    # with constant gradient, |Adam step 1| = lr * g/(|g| + eps) ~ lr
    a, b, opt = _fresh()
    a.grad = np.array([1.0, -1.0, 2.0])
    b.grad = np.array([0.5, 0.5, 0.5])
    rep = opt.step()
    assert rep.applied
    np.testing.assert_allclose(a.value, [-0.1, 0.1, -0.1], atol=1e-6)
    np.testing.assert_allclose(b.value, [-0.01, -0.01, -0.01], atol=1e-7)


def test_converges_on_quadratic():
    x = Tensor(np.array([5.0, -3.0]))
    opt = Adam([ParamGroup("x", [x], lr=0.1)])
    for _ in range(500):
        opt.zero_grad()
        x.grad = 2.0 * x.value
        opt.step()
    np.testing.assert_allclose(x.value, [0.0, 0.0], atol=1e-3)


def test_nonfinite_gradient_skips_whole_step():
    a, b, opt = _fresh()
    a.grad = np.array([1.0, 1.0, 1.0])
    b.grad = np.array([np.nan, 0.0, 0.0])
    rep = opt.step()
    assert not rep.applied
    assert "b" in rep.skipped_reason
    np.testing.assert_array_equal(a.value, np.zeros(3))
    assert opt.t == 0


def test_missing_grad_treated_as_zero():
    a, b, opt = _fresh()
    a.grad = np.array([1.0, 0.0, 0.0])
    rep = opt.step()
    assert rep.applied
    np.testing.assert_array_equal(b.value, np.zeros(3))


def test_clip_norm_rescales():
    a, b, opt = _fresh(clip=1.0)
    a.grad = np.zeros(3)
    b.grad = np.array([30.0, 0.0, 40.0])  # norm 50, clipped to [0.6, 0, 0.8]
    rep = opt.step()
    assert rep.grad_norms["b"] == pytest.approx(50.0)
    assert b.value[1] == 0.0
    # the moments see the clipped gradient, not the raw one
    state = opt.state_arrays()
    np.testing.assert_allclose(state["adam_m_b_0"], [0.1 * 0.6, 0.0, 0.1 * 0.8], rtol=1e-9)
    np.testing.assert_allclose(state["adam_v_b_0"], [1e-3 * 0.36, 0.0, 1e-3 * 0.64], rtol=1e-9)


def test_state_roundtrip():
    a, b, opt = _fresh()
    for _ in range(3):
        a.grad = np.array([1.0, 2.0, 3.0])
        b.grad = np.array([0.1, 0.1, 0.1])
        opt.step()
    saved = {k: v.copy() for k, v in opt.state_arrays().items()}

    a2 = Tensor(a.value.copy())
    b2 = Tensor(b.value.copy())
    opt2 = Adam([ParamGroup("a", [a2], lr=0.1), ParamGroup("b", [b2], lr=0.01)])
    opt2.load_state_arrays(saved)
    assert opt2.t == opt.t

    for o, pa, pb in ((opt, a, b), (opt2, a2, b2)):
        pa.grad = np.array([1.0, 2.0, 3.0])
        pb.grad = np.array([0.1, 0.1, 0.1])
        o.step()
    np.testing.assert_array_equal(a.value, a2.value)
    np.testing.assert_array_equal(b.value, b2.value)


def test_duplicate_group_names_rejected():
    with pytest.raises(ValueError):
        Adam([ParamGroup("x", [Tensor(np.zeros(1))], lr=0.1),
              ParamGroup("x", [Tensor(np.zeros(1))], lr=0.1)])
