import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ssmri.autograd import (
    Adam,
    AdamState,
    DimensionError,
    Tape,
    Tensor,
    TrainingError,
    absolute,
    adam_step,
    complex_abs,
    conv2d,
    conv_transpose2d,
    instance_norm,
    leaky_relu,
    pad2d,
    relu,
    tanh,
)
from ssmri.autograd.gradcheck import gradcheck

RNG = np.random.default_rng(1234)


def _rand(*shape):
    return RNG.standard_normal(shape)


# -- conv2d ---------------------------------------------------------------
def test_conv2d_identity_kernel():
    x = Tensor(_rand(1, 1, 3, 3))
    w = Tensor(np.ones((1, 1, 1, 1)))
    b = Tensor(np.zeros(1))
    np.testing.assert_array_equal(conv2d(x, w, b).data, x.data)


def test_conv2d_average_constant_interior():
    x = Tensor(np.full((1, 1, 6, 6), 7.0))
    w = Tensor(np.full((1, 1, 3, 3), 1 / 9))
    out = conv2d(x, w, Tensor(np.zeros(1)), stride=1, padding=1).data
    np.testing.assert_allclose(out[0, 0, 1:-1, 1:-1], 7.0, rtol=1e-12)
    assert out[0, 0, 0, 0] < 7.0  # zero padding at the border


@pytest.mark.parametrize("shape,wshape,stride,padding", [
    ((2, 3, 8, 8), (4, 3, 3, 3), 1, 1),
    ((1, 2, 7, 6), (3, 2, 3, 3), 2, 1),
    ((1, 2, 9, 9), (2, 2, 4, 4), 2, 1),
])
def test_conv2d_gradcheck(shape, wshape, stride, padding):
    x, w, b = _rand(*shape), _rand(*wshape), _rand(wshape[0])
    fn = lambda x, w, b: conv2d(x, w, b, stride, padding).sum()
    assert gradcheck(fn, [x, w, b]) < 1e-4


def test_conv2d_shape_error_names_axis():
    with pytest.raises(DimensionError, match="channel"):
        conv2d(Tensor(_rand(1, 2, 5, 5)), Tensor(_rand(1, 3, 3, 3)))


def test_mixed_dtype_rejected():
    with pytest.raises(TypeError):
        conv2d(Tensor(_rand(1, 1, 4, 4)), Tensor(_rand(1, 1, 3, 3), dtype=np.float32))
    with pytest.raises(TypeError):
        Tensor(np.ones(3)) + Tensor(np.ones(3, dtype=np.float32))


# -- conv_transpose2d -------------------------------------------------------
@pytest.mark.parametrize("xshape,wshape,stride,padding,outpad", [
    ((1, 2, 6, 6), (3, 2, 3, 3), 1, 1, 0),
    ((2, 3, 8, 8), (4, 3, 3, 3), 2, 1, 1),
    ((1, 2, 8, 8), (2, 2, 4, 4), 2, 1, 0),
])
def test_conv_transpose_is_adjoint(xshape, wshape, stride, padding, outpad):
    x = Tensor(_rand(*xshape))
    w = Tensor(_rand(*wshape))
    y_shape = conv2d(x, w, stride=stride, padding=padding).shape
    y = Tensor(_rand(*y_shape))
    lhs = np.vdot(conv2d(x, w, stride=stride, padding=padding).data, y.data)
    back = conv_transpose2d(y, w, stride=stride, padding=padding, output_padding=outpad)
    assert back.shape == xshape
    rhs = np.vdot(x.data, back.data)
    assert abs(lhs - rhs) < 1e-10 * max(1.0, abs(lhs))


def test_conv_transpose_unit_kernel_identity():
    y = Tensor(_rand(1, 1, 5, 5))
    np.testing.assert_array_equal(conv_transpose2d(y, Tensor(np.ones((1, 1, 1, 1)))).data, y.data)


@pytest.mark.parametrize("yshape,wshape,stride,padding,outpad", [
    ((1, 3, 4, 4), (3, 2, 3, 3), 2, 1, 1),
    ((2, 2, 5, 5), (2, 3, 3, 3), 1, 1, 0),
    ((1, 2, 3, 4), (2, 2, 4, 4), 2, 1, 0),
])
def test_conv_transpose_gradcheck(yshape, wshape, stride, padding, outpad):
    y, w, b = _rand(*yshape), _rand(*wshape), _rand(wshape[1])
    out_shape = conv_transpose2d(Tensor(y), Tensor(w), Tensor(b), stride, padding, outpad).shape
    weights = Tensor(_rand(*out_shape))
    fn = lambda y, w, b: (conv_transpose2d(y, w, b, stride, padding, outpad) * weights).sum()
    assert gradcheck(fn, [y, w, b]) < 1e-4


# -- padding / instance norm -------------------------------------------------
@pytest.mark.parametrize("shape", [(1, 2, 5, 5), (2, 1, 4, 6), (1, 3, 3, 3)])
def test_reflect_pad_gradcheck(shape):
    weights = _rand(shape[0], shape[1], shape[2] + 2, shape[3] + 2)
    fn = lambda x: (pad2d(x, 1, "reflect") * Tensor(weights)).sum()
    assert gradcheck(fn, [_rand(*shape)]) < 1e-4


def test_reflect_pad_matches_numpy():
    x = _rand(1, 1, 4, 5)
    np.testing.assert_array_equal(pad2d(Tensor(x), 2, "reflect").data,
                                  np.pad(x, ((0, 0), (0, 0), (2, 2), (2, 2)), mode="reflect"))


def test_instance_norm_constant_slice_is_zero():
    out = instance_norm(Tensor(np.full((1, 1, 4, 4), 3.0)), eps=1e-5).data
    np.testing.assert_array_equal(out, 0.0)


def test_instance_norm_two_point_slice():
    x = Tensor(np.array([-1.0, 1.0]).reshape(1, 1, 1, 2))
    np.testing.assert_array_equal(instance_norm(x, eps=0.0).data.ravel(), [-1.0, 1.0])
    shrunk = instance_norm(x, eps=1e-2).data.ravel()
    delta = 1 - 1 / np.sqrt(1 + 1e-2)
    np.testing.assert_allclose(shrunk, [-1 + delta, 1 - delta], rtol=1e-12)


def test_instance_norm_statistics():
    out = instance_norm(Tensor(_rand(2, 3, 8, 8) * 5 + 2), eps=1e-12).data
    assert np.abs(out.mean(axis=(2, 3))).max() < 1e-6
    assert np.abs(out.var(axis=(2, 3)) - 1).max() < 1e-4


@pytest.mark.parametrize("shape", [(1, 2, 4, 4), (2, 1, 3, 5), (1, 3, 6, 2)])
def test_instance_norm_gradcheck(shape):
    weights = _rand(*shape)
    fn = lambda x: (instance_norm(x, 1e-5) * Tensor(weights)).sum()
    assert gradcheck(fn, [_rand(*shape)]) < 1e-4


# -- elementwise / reductions ------------------------------------------------
def test_elementwise_values():
    assert tanh(Tensor(0.0)).item() == 0.0
    assert abs(tanh(Tensor(10.0)).item() - 1) < 1e-6
    np.testing.assert_array_equal(relu(Tensor([-3.0, 3.0])).data, [0.0, 3.0])
    np.testing.assert_allclose(leaky_relu(Tensor([-1.0, 2.0]), 0.2).data, [-0.2, 2.0])


def test_abs_subgradient():
    x = Tensor([-0.5, 0.0, 0.5], requires_grad=True)
    with Tape() as tape:
        y = absolute(x).sum()
    tape.backward(y)
    np.testing.assert_array_equal(x.grad, [-1.0, 0.0, 1.0])


@pytest.mark.parametrize("op", [
    lambda a, b: (a * b + a - b).sum(),
    lambda a, b: (tanh(a) * relu(b)).mean(),
    lambda a, b: (leaky_relu(a, 0.2) * absolute(b)).sum(),
    lambda a, b: complex_abs(a.reshape(1, 2, 3, 2) * 1.5 - b.reshape(1, 2, 3, 2), axis=1).sum(),
])
def test_elementwise_gradcheck(op):
    for shape in [(12,), (3, 4), (2, 6)]:
        a, b = _rand(*shape), _rand(*shape)
        assert gradcheck(lambda a, b: op(a.reshape(12), b.reshape(12)), [a.reshape(12), b.reshape(12)]) < 1e-4


def test_complex_abs_zero_subgradient():
    x = Tensor(np.zeros((1, 2, 1, 1)), requires_grad=True)
    with Tape() as tape:
        loss = complex_abs(x, axis=1).sum()
    tape.backward(loss)
    np.testing.assert_array_equal(x.grad, 0.0)


def test_no_implicit_broadcasting():
    with pytest.raises(DimensionError):
        Tensor(np.ones((2, 3))) + Tensor(np.ones(3))


def test_reductions():
    assert Tensor(np.ones((2, 3))).sum().item() == 6
    x = Tensor([1.0, 2.0, 3.0, 4.0], requires_grad=True)
    with Tape() as tape:
        m = x.mean()
    assert m.item() == 2.5
    tape.backward(m)
    np.testing.assert_array_equal(x.grad, 0.25)
    with pytest.raises(DimensionError):
        Tensor(np.zeros((0,))).sum()


# -- backward ------------------------------------------------------------------
def test_backward_square():
    x = Tensor(3.0, requires_grad=True)
    with Tape() as tape:
        y = x * x
    tape.backward(y)
    assert x.grad == 6.0


def test_backward_chain_rule_at_origin():
    x = Tensor(0.0, requires_grad=True)
    with Tape() as tape:
        y = tanh(x * 2.0)
    tape.backward(y)
    assert x.grad == 2.0


def test_backward_accumulates_across_calls():
    x = Tensor(2.0, requires_grad=True)
    with Tape() as tape:
        y = x * x
    tape.backward(y)
    tape.backward(y)
    assert x.grad == 8.0


def test_backward_fan_out_sums_contributions():
    fn = lambda x: (tanh(x) * x + relu(x) * tanh(x)).sum()
    for shape in [(5,), (2, 3), (4, 2)]:
        n = int(np.prod(shape))
        assert gradcheck(lambda x: fn(x.reshape(n)), [_rand(*shape).reshape(n)]) < 1e-4


def test_backward_errors():
    x = Tensor(np.ones(3), requires_grad=True)
    with Tape() as tape:
        y = x * 2.0
    with pytest.raises(DimensionError):
        tape.backward(y)
    other = Tape()
    with Tape():
        z = (x * 2.0).sum()
    with pytest.raises(RuntimeError):
        other.backward(z)


def test_no_recording_outside_tape():
    x = Tensor(np.ones(3), requires_grad=True)
    y = (x * 2.0).sum()
    assert not y.requires_grad


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 3), st.integers(1, 3), st.integers(3, 6), st.integers(0, 10_000))
def test_tape_replay_is_deterministic(cin, cout, size, seed):
    rng = np.random.default_rng(seed)
    xs = rng.standard_normal((1, cin, size, size)).astype(np.float32)
    ws = rng.standard_normal((cout, cin, 3, 3)).astype(np.float32)

    def run():
        w = Tensor(ws, requires_grad=True)
        with Tape() as tape:
            loss = tanh(instance_norm(conv2d(Tensor(xs), w, padding=1))).sum()
        tape.backward(loss)
        return loss.data.tobytes(), w.grad.tobytes()

    assert run() == run()


# -- adam ---------------------------------------------------------------------------
def test_adam_first_step_magnitude():
    p = {"w": Tensor(np.array([1.0, -2.0, 0.3]))}
    g = np.array([0.5, -3.0, 1e-3])
    adam_step(p, {"w": g}, AdamState(), lr=0.01)
    np.testing.assert_allclose(p["w"].data - [1.0, -2.0, 0.3], -0.01 * g / (np.abs(g) + 1e-8),
                               rtol=1e-12)


def test_adam_zero_grad_keeps_params():
    p = {"w": Tensor(np.array([1.0, 2.0]))}
    st_ = AdamState()
    adam_step(p, {"w": np.zeros(2)}, st_, lr=0.1)
    np.testing.assert_array_equal(p["w"].data, [1.0, 2.0])
    assert st_.t == 1


def test_adam_two_steps_hand_computed():
    # theta0=1, g=0.5, lr=0.1, betas (0.5, 0.999): m_hat=0.5 and v_hat=0.25 on both steps
    p = {"w": Tensor(np.array(1.0))}
    st_ = AdamState(beta1=0.5, beta2=0.999, eps=1e-8)
    adam_step(p, {"w": np.array(0.5)}, st_, lr=0.1)
    assert abs(p["w"].item() - 0.900000002) < 1e-12
    adam_step(p, {"w": np.array(0.5)}, st_, lr=0.1)
    assert abs(p["w"].item() - 0.800000004) < 1e-12
    assert st_.t == 2


def test_adam_rejects_non_finite():
    opt = Adam({"layer.w": Tensor(np.ones(2))})
    opt.params["layer.w"].grad = np.array([np.nan, 1.0])
    with pytest.raises(TrainingError) as err:
        opt.step(0.1)
    assert err.value.param == "layer.w"
