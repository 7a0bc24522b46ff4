import numpy as np
import pytest

from danas import diffcore as dc
from danas.diffcore import ContractError, Tensor

from conftest import rng_of


def f64(rng, *shape, lo=-1.0, hi=1.0):
    return Tensor(rng.uniform(lo, hi, size=shape), requires_grad=True)


# -- primitive forward values --------------------------------------------

def test_primitive_set_is_complete():
    names = dc.primitive_set()
    for required in ("conv2d", "depthwise_conv2d", "dilated_conv2d",
                     "max_pool2d", "avg_pool2d", "affine_norm", "relu",
                     "linear", "softmax", "cross_entropy", "add", "scale",
                     "concat", "zero"):
        assert required in names


def test_softmax_symmetric_input():
    out = dc.softmax(Tensor([0.0, 0.0, 0.0]))
    np.testing.assert_allclose(out.data, [1 / 3] * 3, atol=1e-7)


def test_cross_entropy_uniform_prediction_eight_classes():
    logits = Tensor(np.zeros((4, 8)))
    loss = dc.cross_entropy(logits, np.array([0, 3, 5, 7]))
    assert loss.item() == pytest.approx(np.log(8.0), rel=1e-6)


def test_zero_op_post_stride_shape():
    x = Tensor(np.ones((2, 3, 7, 5)))
    out = dc.zero_op(x, stride=2)
    assert out.shape == (2, 3, 4, 3)
    assert not out.data.any()


def test_softmax_simplex_property():
    rng = rng_of(11)
    for _ in range(200):
        x = Tensor(rng.uniform(-50, 50, size=rng.integers(2, 9)))
        y = dc.softmax(x).data
        assert (y >= 0).all()
        assert abs(y.sum() - 1.0) < 1e-6


# -- backward ------------------------------------------------------------

def test_backward_of_sum_is_ones():
    x = Tensor(rng_of(0).normal(size=(3, 4, 5)), requires_grad=True)
    dc.backward(dc.sum_all(x))
    np.testing.assert_array_equal(x.grad, np.ones_like(x.data))


def test_backward_of_half_squared_norm_is_x():
    x = Tensor(rng_of(1).normal(size=(6, 2)), requires_grad=True)
    loss = dc.scale(dc.sum_all(dc.mul(x, x)), 0.5)
    dc.backward(loss)
    np.testing.assert_allclose(x.grad, x.data, rtol=1e-6)


def test_backward_requires_scalar_loss():
    x = Tensor(np.ones((2, 2)), requires_grad=True)
    with pytest.raises(ContractError):
        dc.backward(dc.mul(x, x))


def test_three_layer_net_matches_finite_differences():
    rng = rng_of(2)
    x = Tensor(rng.normal(size=(5, 6)))
    w1, b1 = f64(rng, 8, 6), f64(rng, 8)
    w2, b2 = f64(rng, 7, 8), f64(rng, 7)
    w3, b3 = f64(rng, 4, 7), f64(rng, 4)
    labels = rng.integers(0, 4, size=5)

    def forward():
        h1 = dc.relu(dc.linear(x, w1, b1))
        h2 = dc.relu(dc.linear(h1, w2, b2))
        return dc.cross_entropy(dc.linear(h2, w3, b3), labels)

    record = dc.trace(forward())
    for param in (w1, b1, w2, b2, w3, b3):
        assert dc.finite_diff_check(record, param, 1e-5) < 1e-4


def test_backward_deterministic_bit_identical():
    def run():
        rng = rng_of(3)
        x = Tensor(rng.normal(size=(4, 5)), requires_grad=True)
        w = Tensor(rng.normal(size=(3, 5)), requires_grad=True)
        loss = dc.cross_entropy(dc.linear(x, w), np.array([0, 1, 2, 0]))
        dc.backward(loss)
        return x.grad.tobytes(), w.grad.tobytes()

    assert run() == run()


# -- finite_diff_check contract -------------------------------------------

def test_finite_diff_exact_for_linear_map():
    rng = rng_of(4)
    for eps in (1e-7, 1e-5, 1e-3):
        w = f64(rng, 3, 4)
        x = Tensor(rng.normal(size=(2, 4)))
        record = dc.trace(dc.sum_all(dc.linear(x, w)))
        assert dc.finite_diff_check(record, w, eps) <= 1e-9


def test_finite_diff_softmax_cross_entropy_head():
    rng = rng_of(5)
    logits = f64(rng, 6, 5, lo=-2, hi=2)
    record = dc.trace(dc.cross_entropy(logits, rng.integers(0, 5, size=6)))
    assert dc.finite_diff_check(record, logits, 1e-5) < 1e-6


def test_finite_diff_convolution():
    rng = rng_of(6)
    x = f64(rng, 1, 4, 8, 8)
    w = f64(rng, 2, 4, 3, 3)
    record = dc.trace(dc.sum_all(dc.mul(dc.conv2d(x, w, padding=1),
                                        dc.conv2d(x, w, padding=1))))
    assert dc.finite_diff_check(record, x, 1e-5) < 1e-4


def test_finite_diff_rejects_32bit_and_bad_eps():
    x = Tensor(np.ones((2, 2), dtype=np.float32), requires_grad=True)
    record = dc.trace(dc.sum_all(x))
    with pytest.raises(ContractError):
        dc.finite_diff_check(record, x, 1e-5)
    x64 = Tensor(np.ones((2, 2)), requires_grad=True)
    record = dc.trace(dc.sum_all(x64))
    with pytest.raises(ContractError):
        dc.finite_diff_check(record, x64, 1e-2)


def test_battery_all_primitives_pass():
    results = dc.run_battery(seed=0, instances=3)
    assert all(r.passed for r in results), \
        [(r.name, r.max_rel_err) for r in results if not r.passed]


def test_injected_gradient_fault_is_detected():
    rng = rng_of(7)
    x = f64(rng, 4, 4)
    record = dc.trace(dc.sum_all(dc.mul(dc.relu(x), dc.relu(x))))
    assert dc.finite_diff_check(record, x, 1e-5) < 1e-4
    with dc.gradient_fault("relu"):
        assert dc.finite_diff_check(record, x, 1e-5) > 1e-4


# -- optimizer -------------------------------------------------------------

def test_sgd_plain_step():
    p = Tensor(np.array([1.0]), requires_grad=True)
    dc.sgd_step([p], [np.array([0.5])], dc.OptimizerState(lr=0.1))
    assert p.data[0] == pytest.approx(0.95)


def test_sgd_zero_gradient_keeps_params():
    p = Tensor(np.array([1.0, -2.0]), requires_grad=True)
    before = p.data.copy()
    dc.sgd_step([p], [np.zeros(2)], dc.OptimizerState(lr=0.1, momentum=0.9))
    np.testing.assert_array_equal(p.data, before)


def test_sgd_momentum_two_steps_hand_iterated():
    # v <- 0.9 v + g with g=1: v1=1, v2=1.9; theta: 0 -> -0.1 -> -0.29
    p = Tensor(np.array([0.0]), requires_grad=True)
    state = dc.OptimizerState(lr=0.1, momentum=0.9)
    dc.sgd_step([p], [np.ones(1)], state)
    assert p.data[0] == pytest.approx(-0.1)
    dc.sgd_step([p], [np.ones(1)], state)
    assert p.data[0] == pytest.approx(-0.29)


def test_sgd_zero_lr_is_identity():
    rng = rng_of(8)
    p = Tensor(rng.normal(size=(3, 3)), requires_grad=True)
    before = p.data.copy()
    dc.sgd_step([p], [rng.normal(size=(3, 3))],
                dc.OptimizerState(lr=0.0, momentum=0.5, weight_decay=0.1))
    np.testing.assert_array_equal(p.data, before)


def test_sgd_shape_mismatch_rejected():
    p = Tensor(np.ones(3), requires_grad=True)
    with pytest.raises(ContractError):
        dc.sgd_step([p], [np.ones(4)], dc.OptimizerState(lr=0.1))


# -- replay / record --------------------------------------------------------

def test_replay_recomputes_after_leaf_change():
    x = Tensor(np.array([1.0, 2.0]), requires_grad=True)
    record = dc.trace(dc.sum_all(dc.mul(x, x)))
    assert record.output.item() == pytest.approx(5.0)
    x.data[0] = 3.0
    dc.replay(record)
    assert record.output.item() == pytest.approx(13.0)


def test_trace_orders_parents_before_children():
    x = Tensor(np.ones(3), requires_grad=True)
    y = dc.mul(x, x)
    record = dc.trace(dc.sum_all(y))
    seen = set()
    for node in record.nodes:
        for parent in node.parents:
            assert id(parent) in seen
        seen.add(id(node))
