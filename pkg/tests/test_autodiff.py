import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ganstego.autodiff import (
    Adam, AdamState, BatchNorm2d, Conv2d, ConvTranspose2d, Dense, LayerSpec, Sequential, ShapeError,
    Tape, TapeError, Tensor, adam_step, batch_norm, concat, conv2d, conv_transpose2d, grad_check,
    leaky_relu, linear, log, sigmoid, square, tanh, validate_stack,
)
from ganstego.autodiff.functional import avg_pool2d, conv_out_extent


def t64(rng, *shape):
    return Tensor(rng.normal(size=shape), requires_grad=True)


def test_conv_of_ones_sums_window():
    x = Tensor(np.array([[[[1.0, 2.0], [3.0, 4.0]]]]))
    w = Tensor(np.ones((1, 1, 2, 2)))
    assert conv2d(x, w).data.reshape(-1).tolist() == [10.0]


def test_conv_matches_direct_loops(rng):
    x = rng.normal(size=(2, 3, 7, 5))
    w = rng.normal(size=(4, 3, 3, 3))
    b = rng.normal(size=4)
    out = conv2d(Tensor(x), Tensor(w), Tensor(b), stride=2, padding=1).data
    xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    ref = np.zeros((2, 4, 4, 3))
    for n in range(2):
        for f in range(4):
            for i in range(4):
                for j in range(3):
                    ref[n, f, i, j] = np.sum(xp[n, :, 2 * i : 2 * i + 3, 2 * j : 2 * j + 3] * w[f]) + b[f]
    np.testing.assert_allclose(out, ref, rtol=1e-12, atol=1e-12)


def test_tconv_is_adjoint_of_conv(rng):
    # <conv(x), y> == <x, tconv(y)> with the same kernel and geometry
    x = rng.normal(size=(2, 3, 8, 8))
    w = rng.normal(size=(5, 3, 4, 4))
    y = rng.normal(size=(2, 5, 4, 4))
    lhs = np.sum(conv2d(Tensor(x), Tensor(w), None, 2, 1).data * y)
    rhs = np.sum(x * conv_transpose2d(Tensor(y), Tensor(w), None, 2, 1).data)
    assert lhs == pytest.approx(rhs, rel=1e-12)


def test_non_integer_extent_is_rejected():
    with pytest.raises(ShapeError, match="non-integer output extent"):
        conv_out_extent(6, 3, 2, 1)


def test_channel_mismatch_names_shapes():
    with pytest.raises(ShapeError, match=r"\(1, 2, 4, 4\).*\(3, 3, 3, 3\)"):
        conv2d(Tensor(np.zeros((1, 2, 4, 4))), Tensor(np.zeros((3, 3, 3, 3))))


def test_validate_stack_reports_layer():
    specs = [LayerSpec("conv", 3, 8, 3, 1, 1), LayerSpec("conv", 8, 8, 4, 2, 1)]
    assert validate_stack(specs, 8, 8) == (4, 4)
    with pytest.raises(ShapeError, match="layer 1"):
        validate_stack(specs, 8, 7)


@pytest.mark.parametrize("name", ["conv", "conv_s2", "tconv", "dense", "bn_train", "bn_eval",
                                  "lrelu", "sigmoid", "tanh", "log", "pool", "concat"])
def test_grad_check_layer_kinds(name, rng):
    x = t64(rng, 2, 3, 5, 5)
    if name == "conv":
        w, b = t64(rng, 4, 3, 3, 3), t64(rng, 4)
        fn, ins = (lambda: square(conv2d(x, w, b, 1, 1)).sum()), [x, w, b]
    elif name == "conv_s2":
        w = t64(rng, 2, 3, 3, 3)
        fn, ins = (lambda: square(conv2d(x, w, None, 2, 1)).sum()), [x, w]
    elif name == "tconv":
        w, b = t64(rng, 3, 2, 4, 4), t64(rng, 2)
        fn, ins = (lambda: square(conv_transpose2d(x, w, b, 2, 1)).sum()), [x, w, b]
    elif name == "dense":
        xd, w, b = t64(rng, 4, 6), t64(rng, 3, 6), t64(rng, 3)
        fn, ins = (lambda: square(linear(xd, w, b)).sum()), [xd, w, b]
    elif name in ("bn_train", "bn_eval"):
        g, bt = t64(rng, 3), t64(rng, 3)
        rm, rv = rng.normal(size=3), rng.uniform(0.5, 2, 3)
        c = Tensor(rng.normal(size=x.shape))
        train = name == "bn_train"
        fn = lambda: (batch_norm(x, g, bt, rm, rv, train, update_stats=False) * c).sum()  # noqa: E731
        ins = [x, g, bt]
    elif name == "lrelu":
        fn, ins = (lambda: square(leaky_relu(x, 0.2)).sum()), [x]
    elif name == "sigmoid":
        fn, ins = (lambda: square(sigmoid(x)).sum()), [x]
    elif name == "tanh":
        fn, ins = (lambda: square(tanh(x)).sum()), [x]
    elif name == "log":
        xp = Tensor(rng.uniform(0.5, 2.0, size=(3, 4)), requires_grad=True)
        fn, ins = (lambda: log(xp).sum()), [xp]
    elif name == "pool":
        x4 = t64(rng, 2, 2, 4, 4)
        c = Tensor(rng.normal(size=(2, 2, 2, 2)))
        fn, ins = (lambda: (avg_pool2d(x4, 2) * c).sum()), [x4]
    else:
        y = t64(rng, 2, 1, 5, 5)
        fn, ins = (lambda: square(concat([x, y], axis=1)).sum()), [x, y]
    assert grad_check(fn, ins) < 1e-6


def test_batchnorm_running_stats_update():
    bn = BatchNorm2d(2, dtype=np.float64)
    x = Tensor(np.arange(16, dtype=np.float64).reshape(2, 2, 2, 2))
    bn(x)
    vals = x.data.transpose(1, 0, 2, 3).reshape(2, -1)
    np.testing.assert_allclose(bn.running_mean, 0.1 * vals.mean(axis=1))
    np.testing.assert_allclose(bn.running_var, 0.9 + 0.1 * vals.var(axis=1, ddof=1))
    bn.update_stats = False
    before = bn.running_mean.copy()
    bn(x)
    np.testing.assert_array_equal(bn.running_mean, before)


def test_batchnorm_eval_uses_running_stats():
    bn = BatchNorm2d(1, dtype=np.float64).eval()
    bn.running_mean[:] = 2.0
    bn.running_var[:] = 4.0 - 1e-5
    out = bn(Tensor(np.full((1, 1, 2, 2), 6.0)))
    np.testing.assert_allclose(out.data, 2.0)


def test_second_backward_raises():
    a = Tensor(np.ones(3), requires_grad=True)
    with Tape() as tape:
        loss = (a * a).sum()
    tape.backward(loss, [a])
    with pytest.raises(TapeError):
        tape.backward(loss, [a])


def test_non_scalar_loss_raises():
    a = Tensor(np.ones(3), requires_grad=True)
    with Tape() as tape:
        y = a * a
    with pytest.raises(ShapeError):
        tape.backward(y, [a])


def test_disconnected_param_gets_zero_grad():
    a = Tensor(np.ones(3), requires_grad=True)
    b = Tensor(np.ones(2), requires_grad=True)
    with Tape() as tape:
        loss = (a * 2.0).sum()
    ga, gb = tape.backward(loss, [a, b])
    np.testing.assert_array_equal(ga, 2.0)
    np.testing.assert_array_equal(gb, 0.0)


def test_reused_tensor_accumulates_gradient():
    a = Tensor(np.array([3.0]), requires_grad=True)
    with Tape() as tape:
        loss = (a * a + a).sum()
    (g,) = tape.backward(loss, [a])
    assert g[0] == 7.0


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 3), st.integers(1, 4), st.integers(0, 2**31 - 1))
def test_broadcast_add_grad_shapes(n, m, seed):
    rng = np.random.default_rng(seed)
    a = Tensor(rng.normal(size=(n, m)), requires_grad=True)
    b = Tensor(rng.normal(size=(1, m)), requires_grad=True)
    with Tape() as tape:
        loss = (a + b).sum()
    ga, gb = tape.backward(loss, [a, b])
    assert ga.shape == (n, m) and gb.shape == (1, m)
    np.testing.assert_array_equal(gb, np.full((1, m), float(n)))


def test_adam_first_step_moves_by_lr():
    p = Tensor(np.array([1.0, -1.0]), requires_grad=True)
    state = AdamState.zeros_like([p])
    adam_step([p], [np.array([0.3, -5.0])], state, lr=0.01)
    # bias-corrected first step is lr * g / |g| (up to eps)
    np.testing.assert_allclose(p.data, [0.99, -0.99], rtol=1e-6)
    assert state.step == 1


def test_adam_minimizes_quadratic():
    p = Tensor(np.array([5.0, -3.0]), requires_grad=True)
    opt = Adam([p], lr=0.1, betas=(0.9, 0.999))
    for _ in range(500):
        with Tape() as tape:
            loss = square(p).sum()
        opt.step(tape.backward(loss, [p]))
    assert np.abs(p.data).max() < 1e-2


def test_seeded_init_is_reproducible():
    from ganstego.autodiff import layer_rng

    a = Conv2d(3, 4, rng=layer_rng(7, 1, 2))
    b = Conv2d(3, 4, rng=layer_rng(7, 1, 2))
    c = Conv2d(3, 4, rng=layer_rng(7, 1, 3))
    np.testing.assert_array_equal(a.weight.data, b.weight.data)
    assert not np.array_equal(a.weight.data, c.weight.data)
    np.testing.assert_array_equal(a.bias.data, 0.0)


def test_sequential_registers_named_parameters():
    net = Sequential(Conv2d(1, 2), BatchNorm2d(2), Dense(2, 1))
    names = [n for n, _ in net.named_parameters()]
    assert names == ["0.weight", "0.bias", "1.gamma", "1.beta", "2.weight", "2.bias"]
    assert [n for n, _ in net.named_buffers()] == ["1.running_mean", "1.running_var"]
    assert net.num_parameters() == 2 * 9 + 2 + 2 + 2 + 2 + 1


def test_tconv_doubles_extent():
    layer = ConvTranspose2d(3, 2, 4, 2, 1)
    assert layer(Tensor(np.zeros((1, 3, 5, 7), np.float32))).shape == (1, 2, 10, 14)
